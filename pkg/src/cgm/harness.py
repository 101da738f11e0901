"""Experiment configuration, deterministic replicate execution and result files.

Replicate ``r`` of a run draws every random number from streams keyed by
``(seed, r)``, so records do not depend on how replicates are scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import cocycle, lpp, percolation, queue, rng, shape
from .env import WeightFamily, sample_environment
from .errors import guard_area
from .stats import Verdict, lag1_autocorr, mean_se

EXPERIMENTS = ("shape", "legendre", "duality", "stationary-lpp", "busemann", "queue-fixpoint",
               "queue-geometric", "percolation-cone", "ergodic")

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_family_schema = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["exponential", "geometric", "bernoulli_capped", "empirical"]},
        "mean": {"type": "number", "exclusiveMinimum": 0},
        "p1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "lo": {"type": "number", "exclusiveMaximum": 1},
        "values": {"type": "array", "items": _num, "minItems": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_direction = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
              "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "cgm experiment configuration",
    "type": "object",
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "replicates": {"type": "integer", "minimum": 0},
        "workers": _pos_int,
        "max_area": {"type": "number", "exclusiveMinimum": 0},
        "family": _family_schema,
        "n": _pos_int,
        "n_list": {"type": "array", "items": _pos_int, "minItems": 1},
        "N": _pos_int,
        "stabilization_N": _pos_int,
        "s_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "alpha_grid": {"type": "array", "items": _num, "minItems": 1},
        "xi": _direction,
        "xi_list": {"type": "array", "items": _direction, "minItems": 1},
        "t": _num,
        "points": _pos_int,
        "ray_length": _pos_int,
        "customers": {"type": "integer", "minimum": 2},
        "stations": {"type": "integer", "minimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "arrival_kind": {"enum": ["constant", "exponential", "geometric"]},
        "cesaro": {"type": "boolean"},
        "early_station": {"type": "integer", "minimum": 0},
        "late_station": {"type": "integer", "minimum": 0},
        "p1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "lo": {"type": "number", "exclusiveMaximum": 1},
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "k_se": {"type": "number", "exclusiveMinimum": 0},
        "min_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "out": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}

# fields that control execution or output but never results
_NON_RESULT_FIELDS = ("workers", "out", "format")

DEFAULTS: dict[str, dict[str, Any]] = {
    "shape": {"replicates": 20, "family": {"kind": "exponential", "mean": 1.0}, "n": 200,
              "s_grid": [1.0], "tolerance": 0.05},
    "legendre": {"replicates": 1, "family": {"kind": "exponential", "mean": 1.0},
                 "alpha_grid": [], "s_grid": [0.01, 0.1, 0.5, 1.0, 2.0, 10.0]},
    "duality": {"replicates": 1, "family": {"kind": "exponential", "mean": 1.0}, "points": 50},
    "stationary-lpp": {"replicates": 10, "family": {"kind": "exponential", "mean": 1.0},
                       "xi": [0.5, 0.5], "ray_length": 200, "k_se": 3.0, "min_fraction": 0.9},
    "busemann": {"replicates": 50, "family": {"kind": "exponential", "mean": 1.0},
                 "xi_list": [[0.5, 0.5]], "n_list": [50, 100, 200], "t": 0.0, "k_se": 2.0},
    "queue-fixpoint": {"replicates": 10, "family": {"kind": "exponential", "mean": 1.0},
                       "arrival_kind": "constant", "alpha": 2.0, "customers": 10000,
                       "stations": 30, "cesaro": False, "early_station": 2, "late_station": 25,
                       "min_fraction": 0.9},
    "queue-geometric": {"replicates": 1, "family": {"kind": "geometric", "mean": 2.0},
                        "alpha": 4.0, "customers": 100000, "stations": 3, "level": 0.01,
                        "min_fraction": 1.0},
    "percolation-cone": {"replicates": 20, "p1": 0.9, "lo": 0.0, "n": 500, "N": 500,
                         "stabilization_N": 400, "min_fraction": 0.9},
    "ergodic": {"replicates": 50, "family": {"kind": "exponential", "mean": 1.0},
                "xi": [0.5, 0.5], "n_list": [50, 400], "min_fraction": 0.95},
}
COMMON_DEFAULTS = {"seed": 0, "workers": 1, "max_area": 5e7, "format": "json"}

# CSV column order per experiment (config_hash is always appended)
COLUMNS: dict[str, list[str]] = {
    "shape": ["replicate", "s", "n", "value"],
    "legendre": ["replicate", "alpha", "f_numeric", "f_closed", "involution_error"],
    "duality": ["replicate", "xi1", "t", "h1", "h2", "xi1_back", "t_back", "round_trip_error",
                "duality_error"],
    "stationary-lpp": ["replicate", "recovery_residual", "anchor_residual", "I_mean", "J_mean",
                       "Y_mean", "Y_lag1_e1", "Y_lag1_e2", "Y_count", "burke_passed"],
    "busemann": ["replicate", "estimator", "xi1", "n", "direction", "diff"],
    "queue-fixpoint": ["replicate", "station", "mean", "variance", "lag1", "ks_next"],
    "queue-geometric": ["replicate", "test", "value", "predicted", "spread", "passed"],
    "percolation-cone": ["replicate", "edge", "flat_estimate", "psi", "psi_stabilized",
                         "cone_lhs", "cone_rhs", "cone_agree", "disorder_half", "disorder_full"],
    "ergodic": ["replicate", "n", "value"],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    data: dict[str, Any]

    @property
    def experiment(self) -> str:
        return self.data["experiment"]

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    @property
    def family(self) -> WeightFamily:
        return WeightFamily.from_dict(self.data["family"])

    def result_fields(self) -> dict[str, Any]:
        return {k: v for k, v in self.data.items() if k not in _NON_RESULT_FIELDS}

    def hash(self) -> str:
        text = json.dumps(self.result_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class ResultBundle:
    config: dict[str, Any]
    config_hash: str
    records: list[dict[str, Any]]
    summary: dict[str, Any]
    verdicts: list[Verdict]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config, "config_hash": self.config_hash, "passed": self.passed,
                "summary": _jsonable(self.summary),
                "verdicts": [_jsonable(asdict(v)) for v in self.verdicts],
                "records": _jsonable(self.records), "timings": self.timings}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# --- configuration -----------------------------------------------------------------

def parse_config(raw: dict[str, Any], **overrides) -> ExperimentConfig:
    """Validate a raw mapping (plus CLI overrides) and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    data = dict(raw)
    for k, v in overrides.items():
        if v is not None:
            data[k] = v
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "(top level)"
            msgs.append(f"{where}: {e.message}")
        raise ConfigError("; ".join(msgs))
    exp = data["experiment"]
    merged = {**COMMON_DEFAULTS, **DEFAULTS[exp], **data}
    _semantic_checks(merged)
    return ExperimentConfig(merged)


def load_config(path, default_experiment: str | None = None, **overrides) -> ExperimentConfig:
    """Read a JSON config file; ``default_experiment`` fills a missing experiment field."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if isinstance(raw, dict) and default_experiment and "experiment" not in raw:
        raw["experiment"] = default_experiment
    return parse_config(raw, **overrides)


def _semantic_checks(c: dict[str, Any]) -> None:
    exp = c["experiment"]
    try:
        fam = WeightFamily.from_dict(c["family"]) if "family" in c else None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"family: {e}") from e
    needs_solvable = ("legendre", "duality", "stationary-lpp", "busemann", "queue-geometric",
                      "ergodic")
    if exp in needs_solvable and not fam.solvable:
        raise ConfigError(f"family: experiment {exp} needs an exponential or geometric family")
    if exp in ("queue-fixpoint", "queue-geometric") and not c["alpha"] > fam.expectation():
        raise ConfigError(f"alpha: must exceed the service mean {fam.expectation()}")
    if exp == "queue-fixpoint":
        if c["late_station"] >= c["stations"] or c["early_station"] >= c["stations"]:
            raise ConfigError("late_station: station indices must be below stations")
        if c["arrival_kind"] == "geometric" and not c["alpha"] > 1:
            raise ConfigError("alpha: geometric arrivals need alpha > 1")
    if exp == "ergodic" and len(c["n_list"]) < 2:
        raise ConfigError("n_list: need at least two levels to compare")
    if exp == "percolation-cone" and c["stabilization_N"] < 4:
        raise ConfigError("stabilization_N: need at least 4")
    if exp == "legendre":
        m = fam.expectation()
        if any(a <= m for a in c["alpha_grid"]):
            raise ConfigError(f"alpha_grid: every alpha must exceed the mean {m}")


# --- experiments ----------------------------------------------------------------------

def _model(c: ExperimentConfig) -> shape.SolvableModel:
    return shape.SolvableModel.from_family(c.family)


def _alpha_grid(c: ExperimentConfig) -> list[float]:
    grid = list(c["alpha_grid"])
    if grid:
        return grid
    m = c.family.expectation()
    return list(m + np.geomspace(0.05, 20.0, 50) * max(1.0, m))


def _uniforms(c: ExperimentConfig, r: int, count: int, lane: int) -> np.ndarray:
    return rng.sequence_uniforms(c["seed"], rng.BULK, 0, count, r, lane)


def _rep_shape(c: ExperimentConfig, r: int) -> list[dict]:
    vals = shape.gamma_samples(c.family, c["s_grid"], c["n"], 1, c["seed"], first_replicate=r,
                               max_area=c["max_area"])[0]
    return [{"replicate": r, "s": s, "n": c["n"], "value": float(v)}
            for s, v in zip(c["s_grid"], vals)]


def _sum_shape(c: ExperimentConfig, recs: list[dict]):
    summary, verdicts = {}, []
    for s in c["s_grid"]:
        vals = [x["value"] for x in recs if x["s"] == s]
        mu, se = mean_se(vals)
        entry = {"mean": mu, "se": se, "count": len(vals)}
        if c.family.solvable and vals:
            g = shape.gamma(_model(c), s)
            entry["closed_form"] = g
            rel = abs(mu - g) / g
            verdicts.append(Verdict(f"gamma_s={s:g}", mu, g, se, rel <= c["tolerance"],
                                    f"relative error {rel:.4f} <= {c['tolerance']}"))
        summary[f"s={s:g}"] = entry
    return summary, verdicts


def _rep_legendre(c: ExperimentConfig, r: int) -> list[dict]:
    if r > 0:
        return []  # deterministic: one pass suffices
    model = _model(c)
    out = []
    for a in _alpha_grid(c):
        fa = shape.f_legendre(model, a)
        out.append({"replicate": r, "alpha": a, "f_numeric": fa, "f_closed": model.f(a),
                    "involution_error": abs(shape.f_legendre(model, fa) - a)})
    return out


def _sum_legendre(c: ExperimentConfig, recs: list[dict]):
    model = _model(c)
    inv = max((x["involution_error"] for x in recs), default=0.0)
    err = max((abs(x["f_numeric"] - x["f_closed"]) for x in recs), default=0.0)
    rt = max(abs(shape.gamma_from_f(model, s) - shape.gamma(model, s)) for s in c["s_grid"])
    fv = np.array([x["f_numeric"] for x in sorted(recs, key=lambda x: x["alpha"])])
    av = np.array(sorted(x["alpha"] for x in recs))
    dec = bool(np.all(np.diff(fv) < 0)) if fv.size > 1 else True
    slopes = np.diff(fv) / np.diff(av) if fv.size > 1 else np.array([])
    convex = bool(np.all(np.diff(slopes) >= -1e-9)) if slopes.size > 1 else True
    verdicts = [
        Verdict("involution", inv, 0.0, 1e-8, inv < 1e-8, "max |f(f(a)) - a| < 1e-8"),
        Verdict("closed_form", err, 0.0, 1e-6, err < 1e-6, "max |numeric - closed| < 1e-6"),
        Verdict("gamma_round_trip", rt, 0.0, 1e-6, rt < 1e-6, "max |inf(f + s a) - gamma| < 1e-6"),
        Verdict("decreasing_convex", float(dec and convex), 1.0, None, dec and convex,
                "finite differences on the alpha grid"),
    ]
    return {"involution_max": inv, "closed_form_max": err, "gamma_round_trip_max": rt}, verdicts


def _rep_duality(c: ExperimentConfig, r: int) -> list[dict]:
    model = _model(c)
    k = c["points"]
    u1 = _uniforms(c, r, k, 0)
    u2 = _uniforms(c, r, k, 1)
    out = []
    for a, b in zip(u1, u2):
        xi1 = 0.02 + 0.96 * a
        t = -5.0 + 10.0 * b
        xi = (xi1, 1 - xi1)
        h = shape.velocity_to_tilt(model, xi, t)
        d = shape.tilt_to_velocity(model, h)
        dual = abs(model.g_pp(xi) - (-(h[0] * xi[0] + h[1] * xi[1]) + t))
        out.append({"replicate": r, "xi1": xi1, "t": t, "h1": h[0], "h2": h[1],
                    "xi1_back": d.xi[0], "t_back": d.t,
                    "round_trip_error": max(abs(d.xi[0] - xi1), abs(d.t - t)),
                    "duality_error": dual})
    return out


def _sum_duality(c: ExperimentConfig, recs: list[dict]):
    rt = max((x["round_trip_error"] for x in recs), default=0.0)
    du = max((x["duality_error"] for x in recs), default=0.0)
    verdicts = [Verdict("round_trip", rt, 0.0, 1e-9, rt < 1e-9, "tilt/velocity round trip < 1e-9"),
                Verdict("duality", du, 0.0, 1e-9, du < 1e-9, "g_pp(xi) = -h.xi + t")]
    return {"round_trip_max": rt, "duality_max": du, "points": len(recs)}, verdicts


def _rep_stationary(c: ExperimentConfig, r: int) -> list[dict]:
    model = _model(c)
    L = c["ray_length"]
    guard_area(L + 1, L + 1, c["max_area"])
    v = (L, L)
    b = cocycle.solvable_cocycle(model, c["xi"], v, L, c["seed"], r)
    env = sample_environment(c.family, L, L, (0, 0), c["seed"], replicate=r)
    ext = cocycle.extend_cocycle(b, env)
    scale = float(np.abs(ext.table.values).max())
    w = (L // 2, L // 2)
    inner = cocycle.extend_cocycle(ext.induced_boundary(w), env)
    anchor = max(float(np.abs(inner.horizontal - ext.horizontal[:w[0], :w[1] + 1]).max()),
                 float(np.abs(inner.vertical - ext.vertical[:w[0] + 1, :w[1]]).max()))
    burke = cocycle.burke_check(ext)
    Y = ext.Y()
    return [{"replicate": r, "recovery_residual": ext.recovery_residual() / scale,
             "anchor_residual": anchor / scale, "I_mean": float(ext.horizontal.mean()),
             "J_mean": float(ext.vertical.mean()), "Y_mean": float(Y.mean()),
             "Y_lag1_e1": cocycle._axis_lag1(Y, 0), "Y_lag1_e2": cocycle._axis_lag1(Y, 1),
             "Y_count": int(Y.size), "burke_passed": burke.passed}]


def _sum_stationary(c: ExperimentConfig, recs: list[dict]):
    model = _model(c)
    means = model.boundary_means(c["xi"])
    k = c["k_se"]
    verdicts = []
    if not recs:
        return {}, verdicts
    rec = max(x["recovery_residual"] for x in recs)
    anc = max(x["anchor_residual"] for x in recs)
    verdicts.append(Verdict("recovery", rec, 0.0, 1e-10, rec < 1e-10, "relative residual"))
    verdicts.append(Verdict("anchor_independence", anc, 0.0, 1e-10, anc < 1e-10,
                            "relative residual"))
    summary = {"recovery_max": rec, "anchor_max": anc}
    for name, pred in (("I_mean", means[0]), ("J_mean", means[1]), ("Y_mean", model.m)):
        mu, se = mean_se([x[name] for x in recs])
        summary[name] = {"mean": mu, "se": se, "predicted": pred}
        if len(recs) > 1:
            verdicts.append(Verdict(name, mu, pred, se, abs(mu - pred) <= k * se,
                                    f"within {k:g} SE across replicates"))
    frac = float(np.mean([x["burke_passed"] for x in recs]))
    summary["burke_pass_fraction"] = frac
    verdicts.append(Verdict("burke", frac, 1.0, None, frac >= c["min_fraction"],
                            f"pass fraction >= {c['min_fraction']}"))
    return summary, verdicts


def _busemann_env(c: ExperimentConfig, r: int):
    nmax = max(c["n_list"])
    pts = [p for xi in c["xi_list"] for p in cocycle.direction_points(xi, c["n_list"])]
    side = max(nmax + 2, max(p[0] for p in pts) + 1, max(p[1] for p in pts) + 1)
    guard_area(side, side, c["max_area"])
    return sample_environment(c.family, side, side, (0, 0), c["seed"], replicate=r)


def _rep_busemann(c: ExperimentConfig, r: int) -> list[dict]:
    model = _model(c)
    env = _busemann_env(c, r)
    out = []
    for xi in c["xi_list"]:
        pts = cocycle.direction_points(xi, c["n_list"])
        for z, label in ((lpp.E1, "e1"), (lpp.E2, "e2")):
            diff = cocycle.passage_differences(env, (0, 0), z, pts)
            out += [{"replicate": r, "estimator": "point", "xi1": xi[0], "n": n,
                     "direction": label, "diff": float(d)} for n, d in zip(c["n_list"], diff)]
            h = shape.velocity_to_tilt(model, xi, c["t"])
            seq = cocycle.busemann_point_to_line(env, z, h, c["n_list"])
            out += [{"replicate": r, "estimator": "line", "xi1": xi[0], "n": n,
                     "direction": label, "diff": float(d)} for n, d in zip(seq.n, seq.diff)]
    return out


def _sum_busemann(c: ExperimentConfig, recs: list[dict]):
    model = _model(c)
    last = max(c["n_list"])
    k = c["k_se"]
    summary, verdicts = {}, []
    if not recs:
        return summary, verdicts
    horiz_means = []
    for xi in c["xi_list"]:
        means = model.boundary_means(xi)
        h = shape.velocity_to_tilt(model, xi, c["t"])
        for z, label, pred, hz in ((0, "e1", means[0], h[0]), (1, "e2", means[1], h[1])):
            pt = [x["diff"] for x in recs if x["xi1"] == xi[0] and x["n"] == last
                  and x["direction"] == label and x["estimator"] == "point"]
            ln = [x["diff"] for x in recs if x["xi1"] == xi[0] and x["n"] == last
                  and x["direction"] == label and x["estimator"] == "line"]
            mp, sp = mean_se(pt)
            ml, sl = mean_se(ln)
            key = f"xi1={xi[0]:g},{label}"
            summary[key] = {"point_mean": mp, "point_se": sp, "predicted": pred,
                            "line_mean": ml, "line_se": sl, "line_predicted": pred + hz}
            if label == "e1":
                horiz_means.append((xi[0], mp))
            if len(pt) > 1:
                verdicts.append(Verdict(f"busemann_{key}", mp, pred, sp, abs(mp - pred) <= k * sp,
                                        f"within {k:g} SE"))
                gap = abs(ml - (mp + hz))
                verdicts.append(Verdict(f"point_to_line_{key}", ml, mp + hz, sp + sl,
                                        gap <= 1.96 * (sp + sl), "95% intervals overlap"))
    horiz_means.sort()
    ordered = all(a[1] >= b[1] for a, b in zip(horiz_means, horiz_means[1:]))
    if len(horiz_means) > 1:
        verdicts.append(Verdict("monotone_in_xi", float(ordered), 1.0, None, ordered,
                                "horizontal means decrease as xi1 grows"))
    return summary, verdicts


def _arrival_law(c: ExperimentConfig) -> queue.ArrivalLaw:
    return queue.ArrivalLaw(c["arrival_kind"], float(c["alpha"]))


def _rep_queue_fixpoint(c: ExperimentConfig, r: int) -> list[dict]:
    guard_area(c["customers"], c["stations"] + 1, c["max_area"])
    rep = queue.fixed_point_iterate(_arrival_law(c), c.family, c["customers"], c["stations"],
                                    c["cesaro"], c["seed"], r)
    return [{"replicate": r, "station": k, "mean": rep.mean[k], "variance": rep.variance[k],
             "lag1": rep.lag1[k], "ks_next": rep.ks[k] if k < rep.stations else math.nan}
            for k in range(rep.stations + 1)]


def _sum_queue_fixpoint(c: ExperimentConfig, recs: list[dict]):
    by_rep: dict[int, dict[int, dict]] = {}
    for x in recs:
        by_rep.setdefault(x["replicate"], {})[x["station"]] = x
    e, l = c["early_station"], c["late_station"]
    wins = [reps[l]["ks_next"] < reps[e]["ks_next"] for reps in by_rep.values()]
    frac = float(np.mean(wins)) if wins else math.nan
    summary = {"ks_decrease_fraction": frac,
               "mean_ks": {k: float(np.mean([reps[k]["ks_next"] for reps in by_rep.values()]))
                           for k in range(c["stations"])} if by_rep else {}}
    verdicts = []
    if wins:
        verdicts.append(Verdict("ks_decreases", frac, c["min_fraction"], None,
                                frac >= c["min_fraction"],
                                f"KS(A^{l}, A^{l + 1}) < KS(A^{e}, A^{e + 1}) fraction"))
        drift = max(abs(x["mean"] - c["alpha"]) for x in recs)
        summary["max_mean_drift"] = drift
    return summary, verdicts


def _rep_queue_geometric(c: ExperimentConfig, r: int) -> list[dict]:
    guard_area(c["customers"], c["stations"] + 1, c["max_area"])
    chk = queue.fixed_point_check(_model(c), c["alpha"], c["customers"], c["seed"], r,
                                  stations=c["stations"], level=c["level"])
    return [{"replicate": r, "test": v.name, "value": v.value, "predicted": v.predicted,
             "spread": v.spread, "passed": v.passed} for v in chk.verdicts]


def _sum_queue_geometric(c: ExperimentConfig, recs: list[dict]):
    names = list(dict.fromkeys(x["test"] for x in recs))
    summary, verdicts = {}, []
    for name in names:
        passed = [x["passed"] for x in recs if x["test"] == name]
        frac = float(np.mean(passed))
        summary[name] = {"pass_fraction": frac,
                         "mean_value": float(np.mean([x["value"] for x in recs
                                                      if x["test"] == name]))}
        verdicts.append(Verdict(name, frac, c["min_fraction"], None, frac >= c["min_fraction"],
                                "pass fraction over replicates"))
    return summary, verdicts


def percolation_replicate(p1: float, lo: float, n: int, N: int, stabilization_N: int, seed: int,
                          r: int, max_area: float | None = None) -> dict:
    """One seed of the percolation-cone study."""
    side = max(n, N, stabilization_N) + 2
    guard_area(side, side, max_area)
    env = sample_environment(WeightFamily.bernoulli_capped(p1, lo), side, side, (0, 0), seed,
                             replicate=r)
    field_ = percolation.OrientedField.from_environment(env)
    edge = percolation.level_edge(field_.reachable(), n)
    G = lpp.passage_table(env, (0, 0), (n, n))
    half = (n // 2, n // 2)
    psi = percolation.psi_estimate(env, range(stabilization_N + 1))
    cone = percolation.cone_busemann_check(env, (0, 0), (1, 0), [(n, n)], N)
    wd = percolation.weak_disorder_diagnostic(env, [n // 2, n])
    return {"replicate": r, "edge": None if edge is None else edge / n,
            "flat_estimate": G.at(half) / n, "psi": psi.psi, "psi_stabilized": psi.stabilized,
            "cone_lhs": float(cone.lhs[-1]), "cone_rhs": cone.rhs, "cone_agree": cone.agree,
            "disorder_half": float(wd[0]), "disorder_full": float(wd[1])}


def _rep_percolation(c: ExperimentConfig, r: int) -> list[dict]:
    return [percolation_replicate(c["p1"], c["lo"], c["n"], c["N"], c["stabilization_N"],
                                  c["seed"], r, c["max_area"])]


def summarize_percolation(recs: list[dict], min_fraction: float = 0.9):
    verdicts = []
    if not recs:
        return {}, verdicts
    alive = [x["edge"] for x in recs if x["edge"] is not None]
    survival = len(alive) / len(recs)
    beta = float(np.mean(alive)) if alive else math.nan
    flat = float(np.mean([x["flat_estimate"] for x in recs]))
    stab = float(np.mean([x["psi_stabilized"] for x in recs]))
    agree = float(np.mean([x["cone_agree"] for x in recs]))
    vh = float(np.var([x["disorder_half"] for x in recs], ddof=1)) if len(recs) > 1 else 0.0
    vf = float(np.var([x["disorder_full"] for x in recs], ddof=1)) if len(recs) > 1 else 0.0
    summary = {"beta": beta, "survival": survival, "flat_estimate": flat,
               "psi_stabilized_fraction": stab, "cone_agree_fraction": agree,
               "disorder_variance_half": vh, "disorder_variance_full": vf}
    verdicts += [
        Verdict("right_edge_in_cone", beta, None, None, 0.5 < beta < 1, "0.5 < beta < 1"),
        Verdict("survival", survival, 0.9, None, survival > 0.9, "survival > 0.9"),
        Verdict("flat_diagonal", flat, 1.0, 0.01, abs(flat - 1) <= 0.01, "within 0.01 of 1"),
        Verdict("psi_stabilizes", stab, min_fraction, None, stab >= min_fraction,
                f"fraction >= {min_fraction}"),
        Verdict("cone_busemann", agree, min_fraction, None, agree >= min_fraction,
                f"fraction >= {min_fraction}"),
        Verdict("weak_disorder", vf, vh, 2.0, vf <= 2 * vh if vh > 0 else vf == 0,
                "variance at n within x2 of variance at n/2"),
    ]
    return summary, verdicts


def _sum_percolation(c: ExperimentConfig, recs: list[dict]):
    return summarize_percolation(recs, c["min_fraction"])


def ergodic_curve(model: shape.SolvableModel, xi, n_list, seed: int, r: int,
                  max_area: float | None = None) -> np.ndarray:
    """Decay curve of max |F(0, x)| / n over level n for one seed."""
    L = max(n_list) + 1
    guard_area(L + 1, L + 1, max_area)
    b = cocycle.solvable_cocycle(model, xi, (L, L), L, seed, r)
    env = sample_environment(model.weight_family(), L, L, (0, 0), seed, replicate=r)
    ext = cocycle.extend_cocycle(b, env)
    return cocycle.ergodic_diagnostic(ext.centered(), n_list)


def _rep_ergodic(c: ExperimentConfig, r: int) -> list[dict]:
    curve = ergodic_curve(_model(c), c["xi"], c["n_list"], c["seed"], r, c["max_area"])
    return [{"replicate": r, "n": n, "value": float(v)} for n, v in zip(c["n_list"], curve)]


def _sum_ergodic(c: ExperimentConfig, recs: list[dict]):
    first, last = c["n_list"][0], c["n_list"][-1]
    by_rep: dict[int, dict[int, float]] = {}
    for x in recs:
        by_rep.setdefault(x["replicate"], {})[x["n"]] = x["value"]
    wins = [d[last] < d[first] for d in by_rep.values()]
    frac = float(np.mean(wins)) if wins else math.nan
    verdicts = [Verdict("decay", frac, c["min_fraction"], None, frac >= c["min_fraction"],
                        f"value at n={last} below n={first}")] if wins else []
    means = {n: float(np.mean([d[n] for d in by_rep.values()])) for n in c["n_list"]} if wins else {}
    return {"decay_fraction": frac, "mean_curve": means}, verdicts


RUNNERS: dict[str, tuple[Callable, Callable]] = {
    "shape": (_rep_shape, _sum_shape),
    "legendre": (_rep_legendre, _sum_legendre),
    "duality": (_rep_duality, _sum_duality),
    "stationary-lpp": (_rep_stationary, _sum_stationary),
    "busemann": (_rep_busemann, _sum_busemann),
    "queue-fixpoint": (_rep_queue_fixpoint, _sum_queue_fixpoint),
    "queue-geometric": (_rep_queue_geometric, _sum_queue_geometric),
    "percolation-cone": (_rep_percolation, _sum_percolation),
    "ergodic": (_rep_ergodic, _sum_ergodic),
}


def _run_replicate(args) -> list[dict]:
    data, r = args
    cfg = ExperimentConfig(data)
    return RUNNERS[cfg.experiment][0](cfg, r)


def run(config: ExperimentConfig, workers: int | None = None) -> ResultBundle:
    """Execute every replicate (in order of r) and summarize."""
    workers = workers or config.get("workers", 1)
    rep_fn, sum_fn = RUNNERS[config.experiment]
    start = time.perf_counter()
    jobs = [(config.data, r) for r in range(config["replicates"])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_replicate, jobs))
    else:
        chunks = [_run_replicate(j) for j in jobs]
    records = [rec for chunk in chunks for rec in chunk]
    mid = time.perf_counter()
    summary, verdicts = sum_fn(config, records)
    end = time.perf_counter()
    return ResultBundle(config.data, config.hash(), records, summary, verdicts,
                        {"replicates_seconds": mid - start, "summary_seconds": end - mid})


def emit(bundle: ResultBundle, fmt: str = "json", out_dir=".") -> list[Path]:
    """Write the bundle; CSV holds the per-replicate records, JSON everything."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out_dir}: {e}") from e
    exp = bundle.config["experiment"]
    stem = f"{exp}-{bundle.config_hash[:12]}"
    paths = []
    if fmt == "csv":
        path = out_dir / f"{stem}.csv"
        cols = COLUMNS[exp] + ["config_hash"]
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(cols)
                for rec in bundle.records:
                    w.writerow([_csv_cell(rec.get(col, bundle.config_hash)) for col in cols])
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        paths.append(path)
        fmt = "json"  # the summary and verdicts always accompany the CSV
        stem += "-summary"
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        try:
            path.write_text(json.dumps(bundle.to_dict(), indent=2))
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        paths.append(path)
    return paths


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v
