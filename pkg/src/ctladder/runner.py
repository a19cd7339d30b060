"""Pipelines behind the command line subcommands.

Every pipeline takes a validated :class:`ExperimentConfig`, draws all
randomness from one generator seeded by ``rng_seed``, writes its CSV files
into the output directory and returns a report dictionary.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from ctladder import __version__
from ctladder.config import ConfigError, ExperimentConfig
from ctladder.ct_experiments import PuncturedModel, ct_modulus_closed, ct_modulus_punctured
from ctladder.ledger import Ledger, ledger_key, load_default, within_class
from ctladder.maps import (free_group_map_on_ball, identity_map, invariant_subsystem, mobius_map,
                           tree_automorphism)
from ctladder.metric_graph import edge_list_text
from ctladder.models import (TruncatedSpace, build_cayley_ball, build_h2_net, build_tree,
                             build_truncated_h2)
from ctladder.quasi import certify_qi, qi_inverse
from ctladder.reporting import emit_plotdata, write_report
from ctladder.suites import (DELTA_EXHAUSTIVE_MAX, descent_suite, horoball_suite, ladder_seeds, ladder_suite,
                             lemma_suite, model_params, npp_suite)
from ctladder.tree_of_spaces import assemble, dump

LEMMA_CLASSES = ("tripod_K", "tripod_eps", "order_gromov", "npp_commute")
HOROBALL_CLASSES = ("ambient_K", "R", "farb_entry_exit")


def build_model(cfg: ExperimentConfig):
    """The fiber named by the config: a MetricGraph, or a TruncatedSpace for truncated_h2."""
    m = cfg.model
    name = m["name"]
    if name == "tree":
        return build_tree(m["valence"], int(m["radius"]))
    if name == "cayley":
        return build_cayley_ball(m["rank"], int(m["radius"]))
    if name == "h2":
        return build_h2_net(m["radius"], m["mesh"])
    ts = build_truncated_h2(m["radius"], m["mesh"], m["cusp_density"], m["shrink"])
    if m["invariant"] and cfg.map["name"] == "mobius":
        ts = invariant_subsystem(ts, tuple(cfg.map["matrix"]))
    return ts


def build_map(cfg: ExperimentConfig, model, rng: np.random.Generator):
    """Level map as an index array (a MobiusMap for the truncated model)."""
    name, kind = cfg.map["name"], cfg.model["name"]
    g = model.full if isinstance(model, TruncatedSpace) else model
    if name == "identity":
        return identity_map(g)
    if name == "automorphism":
        if kind != "tree":
            raise ConfigError("map.name: automorphism needs model.name = tree")
        return tree_automorphism(g, rng)
    if name == "substitution":
        if kind != "cayley":
            raise ConfigError("map.name: substitution needs model.name = cayley")
        return free_group_map_on_ball(g, cfg.substitution())[0]
    if kind != "truncated_h2":
        raise ConfigError("map.name: mobius needs model.name = truncated_h2")
    return mobius_map(model, tuple(cfg.map["matrix"]))


def _policy(cfg: ExperimentConfig):
    return "exhaustive" if cfg.map["policy"] == "exhaustive" else ("sampled", cfg.map["samples"])


def _fiber(model):
    return model.full if isinstance(model, TruncatedSpace) else model


def _certified(cfg, model, f, rng):
    g = _fiber(model)
    arr = f.full if hasattr(f, "full") else f
    return certify_qi(arr, g, g, _policy(cfg), rng)


class Run:
    """Collects data files, constants (with provenance) and verdicts for one report."""

    def __init__(self, cfg: ExperimentConfig, out: Path, jobs: int = 1):
        self.cfg, self.out, self.jobs = cfg, Path(out), jobs
        self.out.mkdir(parents=True, exist_ok=True)
        self.files, self.constants, self.verdicts, self.sizes = [], {}, {}, {}
        self.t0 = time.perf_counter()

    def csv(self, name, data):
        if "csv" in self.cfg.output["formats"]:
            self.files.append(emit_plotdata(data, self.out / name).name)
        return name

    def text(self, name, text):
        (self.out / name).write_text(text, encoding="utf-8")
        self.files.append(name)
        return name

    def const(self, name, value, source="measured"):
        self.constants[name] = {"value": value, "source": source}

    def verdict(self, name, ok, invariant, data):
        v = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        self.verdicts[name] = {"verdict": v, "invariant": invariant, "data": data}

    def overall(self) -> str:
        vs = [v["verdict"] for v in self.verdicts.values()]
        return "PASS" if vs and all(v == "PASS" for v in vs) else "FAIL"

    def report(self, partial: bool = False, error: str = "") -> dict:
        rep = {"version": __version__, "config": self.cfg.to_dict(), "constants": self.constants,
               "verdicts": self.verdicts, "verdict": "FAIL" if partial else self.overall(),
               "files": self.files, "sizes": self.sizes, "jobs": self.jobs, "partial": partial,
               "wall_clock_s": round(time.perf_counter() - self.t0, 3)}
        if error:
            rep["error"] = error
        if "json" in self.cfg.output["formats"]:
            write_report(rep, self.out / "report.json")
        return rep


# ---------------------------------------------------------------------------
# pipelines

def run_gen(run: Run, rng):
    cfg = run.cfg
    model = build_model(cfg)
    g = _fiber(model)
    run.sizes["fiber_vertices"] = g.n
    run.sizes["fiber_edges"] = g.num_edges
    run.text("fiber.txt", edge_list_text(g, f"ctladder {__version__} {g.meta}"))
    if isinstance(model, TruncatedSpace):
        run.sizes["truncated_vertices"] = model.truncated.n
        run.sizes["horoballs"] = len(model.system)
        run.text("truncated.txt", edge_list_text(model.truncated, "truncated fiber"))
    delta = g.estimate_delta(budget=None if g.n <= DELTA_EXHAUSTIVE_MAX else 10**6, rng=rng)
    run.const("delta", delta.value)
    run.const("delta_exhaustive", delta.exhaustive)
    f = build_map(cfg, model, rng)
    phi = _certified(cfg, model, f, rng)
    lo, hi = cfg.experiment["window"]
    st = assemble(g, phi, (lo, hi))
    run.sizes["total_vertices"] = st.total.n
    run.text("space.txt", dump(st))
    run.verdict("generated", True, "space assembled with certified level maps", "space.txt")


def run_certify(run: Run, rng):
    cfg = run.cfg
    model = build_model(cfg)
    f = build_map(cfg, model, rng)
    phi = _certified(cfg, model, f, rng)
    rows = [{"map": cfg.map["name"], "K": phi.K, "eps": phi.eps, "cobound": phi.cobound,
             "certified": phi.certified, "pairs": phi.pairs_checked}]
    for k in ("K", "eps", "cobound"):
        run.const(f"phi_{k}", getattr(phi, k))
    if phi.certified:
        inv = qi_inverse(phi, _policy(cfg))
        rows.append({"map": "inverse", "K": inv.K, "eps": inv.eps, "cobound": inv.cobound,
                     "certified": inv.certified, "pairs": inv.pairs_checked})
        run.const("inverse_roundtrip", inv.meta["roundtrip"])
    run.verdict("qi_certified", phi.certified and np.isfinite(phi.cobound),
                "level map is a certified quasi-isometry with finite cobound",
                run.csv("certify.csv", rows))
    if isinstance(model, TruncatedSpace):
        hs = horoball_suite(model, rng, cfg.experiment["seeds"])
        data = run.csv("horoballs.csv", hs["rows"])
        name, params = model_params(model.full)
        ledger, measured, ok_all = load_default(), Ledger(), True
        for lemma in HOROBALL_CLASSES:
            key = ledger_key(name, params, lemma)
            measured.record(key, hs[lemma], cls=lemma)
            run.const(lemma, hs[lemma])
            ok_all &= within_class(ledger, key, hs[lemma], cfg.experiment["ledger_factor"]) is not False
        run.text("ledger.json", measured.to_json())
        run.verdict("ambient_certified", bool(hs["rows"]) and np.isfinite(hs["ambient_K"]),
                    "horo-ambient paths have a finite grid K", data)
        run.verdict("backtracking_idempotent", hs["idempotent"], "removing backtracks twice changes nothing", data)
        run.verdict("horoball_ledger", ok_all, "neighbourhood radius and entry/exit maxima within ledger class",
                    data)


def run_lemma_suite(run: Run, rng, ledger: Ledger | None = None):
    cfg = run.cfg
    model = build_model(cfg)
    g = _fiber(model)
    ledger = load_default() if ledger is None else ledger
    res = lemma_suite(g, rng, pair_budget=cfg.experiment["pair_budget"])
    consts = dict(res["constants"])
    f = build_map(cfg, model, rng)
    phi = _certified(cfg, model, f, rng)
    npp = npp_suite(phi, rng)
    consts["npp_commute"] = npp["max"]
    name, params = model_params(g)
    measured = Ledger()
    rows, ok_all = [], True
    for lemma, value in consts.items():
        key = ledger_key(name, params + (f";map={cfg.map['name']}" if lemma == "npp_commute" else ""), lemma)
        measured.record(key, value, cls=lemma)
        status = "measured"
        if lemma in LEMMA_CLASSES:
            ok = within_class(ledger, key, value, cfg.experiment["ledger_factor"])
            status = "unledgered" if ok is None else ("within" if ok else "exceeds")
            ok_all &= ok is not False
        run.const(lemma, value)
        rows.append({"lemma": lemma, "value": value, "ledger": status})
    data = run.csv("lemma_suite.csv", rows)
    run.text("ledger.json", measured.to_json())
    run.verdict("projection_lipschitz", res["projection_pass"],
                "projection displacement <= 4 delta + 1 on close pairs", data)
    run.verdict("ledger_classes", ok_all, "tripod, Gromov-product and commutation constants within ledger class",
                data)
    run.sizes["geodesics"] = res["geodesics"]


def run_ladder(run: Run, rng):
    cfg = run.cfg
    model = build_model(cfg)
    if isinstance(model, TruncatedSpace):
        raise ConfigError("experiment.pipeline: ladder runs on closed fibers; use ct-punctured")
    f = build_map(cfg, model, rng)
    phi = _certified(cfg, model, f, rng)
    st = assemble(model, phi, tuple(cfg.experiment["window"]))
    seeds = ladder_seeds(st, cfg.experiment["seeds"], rng)
    pol = "exhaustive" if cfg.experiment["retraction"] == "exhaustive" else \
        ("sampled", cfg.experiment["retraction_samples"])
    lad = ladder_suite(st, seeds, rng, pol, cfg.experiment["qc_samples"])
    desc = descent_suite(st, seeds)
    rows = [dict(r, A=d["A"], descent_ok=d["bound_holds"]) for r, d in zip(lad["rows"], desc["rows"])]
    data = run.csv("ladder.csv", rows)
    for k in ("C0", "C"):
        run.const(k, lad[k])
    run.const("A", desc["A"])
    run.const("A_spread", desc["spread"])
    run.verdict("retraction_idempotent", lad["idempotent"] and lad["fixes_ladder"],
                "retraction is idempotent and fixes the ladder", data)
    run.verdict("vertical_descent", desc["bound_holds"], "d_X(a, level-0 rung) <= A |level|", data)


def run_ct_closed(run: Run, rng):
    cfg = run.cfg
    model = build_model(cfg)
    if isinstance(model, TruncatedSpace):
        raise ConfigError("experiment.pipeline: ct-closed needs a closed fiber")
    f = build_map(cfg, model, rng)
    phi = _certified(cfg, model, f, rng)
    st = assemble(model, phi, tuple(cfg.experiment["window"]))
    ex = cfg.experiment
    curve, per_seed = ct_modulus_closed(st, ex["basepoint"], ex["grid"], ex["seeds_per_row"], rng,
                                        ex["qc_samples"], ex["tolerance"])
    data = run.csv("modulus.csv", curve)
    run.csv("seeds.csv", per_seed)
    for k in ("A", "C"):
        run.const(k, curve.constants[k])
    run.const("skipped_rows", curve.constants["skipped"])
    run.verdict("modulus_bound", curve.constants["bound_holds"], "M_observed >= f/(A+1) - C - tol", data)
    run.verdict("properness", curve.constants["trend"], "M_observed nondecreasing and growing", data)


def run_ct_punctured(run: Run, rng):
    cfg = run.cfg
    model = build_model(cfg)
    if not isinstance(model, TruncatedSpace):
        raise ConfigError("experiment.pipeline: ct-punctured needs model.name = truncated_h2")
    f = build_map(cfg, model, rng)
    if cfg.map["name"] == "identity":
        full, trunc = f, identity_map(model.truncated)
    else:
        full, trunc = f.full, f.trunc
    lo, hi = cfg.experiment["window"]
    if lo != 0:
        raise ConfigError("experiment.window: the punctured pipeline runs on ray windows 0, hi")
    pm = PuncturedModel.build(model, full, trunc, hi, _policy(cfg))
    ex = cfg.experiment
    curve, records = ct_modulus_punctured(pm, ex["basepoint"], ex["grid"], ex["seeds_per_row"], rng)
    data = run.csv("modulus.csv", curve)
    rec = run.csv("records.csv", records)
    run.sizes["total_vertices"] = pm.Xh.total.n
    run.sizes["chain_horoballs"] = len(pm.tsX.system)
    run.const("ray_C", curve.constants["ray_C"])
    run.const("farb_entry_max", max((r.farb["entry_max"] for r in records), default=0.0))
    run.const("farb_exit_max", max((r.farb["exit_max"] for r in records), default=0.0))
    run.const("ambient_K", max((r.ambient_K for r in records), default=1.0))
    run.verdict("far1", curve.constants["far1"], "ladder b-vertices outside the (n-C)/(C+1) ball", rec)
    run.verdict("far2", curve.constants["far2"], "beta^h vertices inside a horoball or m(n) away", rec)
    run.verdict("beta_b", curve.constants["beta_b_bound"], "beta^b minimum >= m(n)", rec)
    run.verdict("stages", curve.constants["stages_ok"], "every stage keeps the endpoints", rec)
    run.verdict("trend", curve.constants["trend"], "f(n) nondecreasing and growing", data)


PIPELINES = {"gen": run_gen, "certify": run_certify, "lemma-suite": run_lemma_suite,
             "ladder": run_ladder, "ct-closed": run_ct_closed, "ct-punctured": run_ct_punctured}


def execute(cfg: ExperimentConfig, pipeline: str, out, jobs: int = 1) -> dict:
    """Run one pipeline and return its report; contract errors propagate after a partial report."""
    run = Run(cfg, out, jobs)
    rng = np.random.default_rng(cfg.rng_seed)
    try:
        PIPELINES[pipeline](run, rng)
    except ConfigError:
        raise
    except Exception as exc:
        run.report(partial=True, error=f"{type(exc).__name__}: {exc}")
        raise
    return run.report()
