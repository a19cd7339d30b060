"""Constants ledger: measured constants keyed by ``model|params|lemma``.

A ledger is a JSON file with a schema tag and one entry per key holding the
value and a witness.  Diffing two ledgers flags any constant that grew by
more than its class's regression factor.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

SCHEMA = "ctladder-ledger/1"
ENV_VAR = "CTLADDER_LEDGER"
DEFAULT_FACTOR = 2.0
ABS_SLACK = 1e-9


class LedgerError(ValueError):
    pass


def ledger_key(model: str, params: str, lemma: str) -> str:
    for part in (model, params, lemma):
        if "|" in part:
            raise LedgerError(f"key part {part!r} contains '|'")
    return f"{model}|{params}|{lemma}"


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if hasattr(x, "item"):
        return _jsonable(x.item())
    return x


@dataclass
class Ledger:
    entries: dict = field(default_factory=dict)

    def record(self, key: str, value: float, witness=(), cls: str = "default") -> None:
        if key.count("|") != 2:
            raise LedgerError(f"ledger key {key!r} must look like model|params|lemma")
        self.entries[key] = {"value": float(value), "witness": _jsonable(witness), "class": cls}

    def value(self, key: str) -> float:
        return float(self.entries[key]["value"])

    def __contains__(self, key) -> bool:
        return key in self.entries

    def to_json(self) -> str:
        body = {"schema": SCHEMA, "entries": {k: self.entries[k] for k in sorted(self.entries)}}
        return json.dumps(body, indent=1, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "Ledger":
        try:
            body = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LedgerError(f"ledger is not valid JSON: {exc}") from None
        if not isinstance(body, dict) or body.get("schema") != SCHEMA:
            raise LedgerError(f"ledger schema mismatch: expected {SCHEMA!r}")
        entries = body.get("entries")
        if not isinstance(entries, dict):
            raise LedgerError("ledger has no entries table")
        for k, e in entries.items():
            if k.count("|") != 2 or not isinstance(e, dict) or "value" not in e:
                raise LedgerError(f"malformed ledger entry {k!r}")
        return cls(dict(entries))

    @classmethod
    def load(cls, path) -> "Ledger":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def default_ledger_path():
    """Ledger named by the environment variable, else the baseline shipped with the package."""
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return resources.files("ctladder") / "data" / "baseline_ledger.json"


def load_default() -> Ledger:
    return Ledger.from_json(default_ledger_path().read_text(encoding="utf-8"))


def within_class(ledger: Ledger, key: str, value: float, factor: float = DEFAULT_FACTOR) -> bool | None:
    """True when ``value`` is at most ``factor`` times the ledger value; None if the key is absent."""
    if key not in ledger:
        return None
    return value <= factor * ledger.value(key) + ABS_SLACK


def ledger_diff(old: Ledger, new: Ledger, factors: dict | None = None) -> tuple[list[str], str]:
    """Line diff of two ledgers and a PASS/FAIL regression verdict.

    ``factors`` maps an entry class to its regression factor (default 2).
    """
    factors = factors or {}
    lines, verdict = [], "PASS"
    for key in sorted(set(old.entries) | set(new.entries)):
        if key not in new.entries:
            lines.append(f"- {key} {old.entries[key]['value']!r}")
            continue
        if key not in old.entries:
            lines.append(f"+ {key} {new.entries[key]['value']!r}")
            continue
        a, b = old.value(key), new.value(key)
        if a == b:
            continue
        factor = factors.get(new.entries[key].get("class", "default"), DEFAULT_FACTOR)
        grew = b > factor * a + ABS_SLACK
        if grew:
            verdict = "FAIL"
        tag = "REGRESSION" if grew else "changed"
        lines.append(f"~ {key} {a!r} -> {b!r} {tag}")
    return lines, verdict
