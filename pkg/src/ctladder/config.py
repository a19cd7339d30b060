"""Experiment configuration: flat ``section.key = value`` text or JSON.

Every key has a declared type and default; unknown keys are rejected with
the offending key named in the message.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


def _int_list(text):
    return [int(x) for x in _split(text)]


def _float_list(text):
    return [float(x) for x in _split(text)]


def _split(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    text = str(text).strip()
    return [x.strip() for x in text.split(",") if x.strip()] if text else []


def _str_list(text):
    return [str(x) for x in _split(text)]


def _bool(text):
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (parser, default) per key
SCHEMA = {
    "model": {
        "name": (str, "tree"),
        "radius": (float, 4.0),
        "valence": (int, 3),
        "rank": (int, 2),
        "mesh": (float, 0.3),
        "cusp_density": (int, 8),
        "shrink": (float, 0.4),
        "invariant": (_bool, True),
    },
    "map": {
        "name": (str, "identity"),
        "substitution": (str, "a:ab,b:a"),
        "matrix": (_int_list, [0, -1, 1, 0]),
        "policy": (str, "exhaustive"),
        "samples": (int, 20000),
    },
    "experiment": {
        "pipeline": (str, "lemma-suite"),
        "window": (_int_list, [0, 4]),
        "grid": (_float_list, [1, 2, 3, 4, 5, 6]),
        "seeds_per_row": (int, 8),
        "seeds": (int, 5),
        "basepoint": (int, 0),
        "tolerance": (float, 1.0),
        "qc_samples": (int, 4),
        "retraction": (str, "exhaustive"),
        "retraction_samples": (int, 2000),
        "pair_budget": (int, 20000),
        "ledger_factor": (float, 2.0),
    },
    "output": {
        "dir": (str, "out"),
        "formats": (_str_list, ["csv", "json"]),
    },
}
TOP_LEVEL = {"rng_seed": (int, 0)}

MODELS = ("tree", "cayley", "h2", "truncated_h2")
MAPS = ("identity", "automorphism", "substitution", "mobius")
PIPELINES = ("gen", "certify", "lemma-suite", "ladder", "ct-closed", "ct-punctured")


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=dict)
    map: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    rng_seed: int = 0

    def to_dict(self) -> dict:
        return {"model": dict(self.model), "map": dict(self.map), "experiment": dict(self.experiment),
                "output": dict(self.output), "rng_seed": self.rng_seed}

    def to_text(self) -> str:
        lines = [f"rng_seed = {self.rng_seed}"]
        for sec in SCHEMA:
            for k, v in getattr(self, sec).items():
                v = ",".join(str(x) for x in v) if isinstance(v, list) else v
                lines.append(f"{sec}.{k} = {v}")
        return "\n".join(lines) + "\n"

    def substitution(self) -> dict:
        out = {}
        for item in _split(self.map["substitution"]):
            key, _, word = item.partition(":")
            if not key or not word:
                raise ConfigError(f"map.substitution: malformed entry {item!r}")
            out[key.strip()] = word.strip()
        return out


def _flat_items(raw: dict):
    for k, v in raw.items():
        if isinstance(v, dict):
            for k2, v2 in v.items():
                yield f"{k}.{k2}", v2
        else:
            yield k, v


def parse_text(text: str) -> dict:
    out = {}
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {num}: expected 'section.key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{key}: given twice")
        out[key] = value.strip()
    return out


def build(raw: dict) -> ExperimentConfig:
    """Typed and validated config from a flat or nested mapping."""
    cfg = ExperimentConfig(**{sec: {k: copy.deepcopy(v) for k, (_, v) in keys.items()}
                              for sec, keys in SCHEMA.items()})
    for key, value in _flat_items(raw):
        if key in TOP_LEVEL:
            parser = TOP_LEVEL[key][0]
            target, name = None, key
        else:
            sec, _, name = key.partition(".")
            if sec not in SCHEMA or name not in SCHEMA[sec]:
                raise ConfigError(f"{key}: unknown key")
            parser = SCHEMA[sec][name][0]
            target = getattr(cfg, sec)
        try:
            parsed = parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
        if target is None:
            cfg.rng_seed = parsed
        else:
            target[name] = parsed
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.model["name"] not in MODELS:
        raise ConfigError(f"model.name: expected one of {MODELS}")
    if cfg.map["name"] not in MAPS:
        raise ConfigError(f"map.name: expected one of {MAPS}")
    if cfg.experiment["pipeline"] not in PIPELINES:
        raise ConfigError(f"experiment.pipeline: expected one of {PIPELINES}")
    if cfg.map["policy"] not in ("exhaustive", "sampled"):
        raise ConfigError("map.policy: expected 'exhaustive' or 'sampled'")
    if cfg.experiment["retraction"] not in ("exhaustive", "sampled"):
        raise ConfigError("experiment.retraction: expected 'exhaustive' or 'sampled'")
    grid = cfg.experiment["grid"]
    if not grid:
        raise ConfigError("experiment.grid: must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("experiment.grid: must be strictly increasing")
    if any(x < 0 for x in grid):
        raise ConfigError("experiment.grid: entries must be non-negative")
    window = cfg.experiment["window"]
    if len(window) != 2 or not window[0] <= 0 <= window[1]:
        raise ConfigError("experiment.window: expected 'lo, hi' with lo <= 0 <= hi")
    for sec, key in (("experiment", "tolerance"), ("experiment", "ledger_factor"), ("model", "radius"),
                     ("model", "mesh"), ("model", "shrink")):
        if getattr(cfg, sec)[key] <= 0:
            raise ConfigError(f"{sec}.{key}: must be positive")
    for key in ("seeds_per_row", "seeds", "qc_samples", "retraction_samples", "pair_budget"):
        if cfg.experiment[key] < 1:
            raise ConfigError(f"experiment.{key}: must be at least 1")
    if cfg.map["samples"] < 1:
        raise ConfigError("map.samples: must be at least 1")
    if len(cfg.map["matrix"]) != 4:
        raise ConfigError("map.matrix: expected four integers")
    bad = set(cfg.output["formats"]) - {"csv", "json"}
    if bad:
        raise ConfigError(f"output.formats: unknown format {sorted(bad)[0]!r}")
    if cfg.map["name"] == "substitution":
        cfg.substitution()


def load(path) -> ExperimentConfig:
    """Read a config file; JSON when it parses as a JSON object, flat text otherwise."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
    else:
        raw = parse_text(text)
    return build(raw)
