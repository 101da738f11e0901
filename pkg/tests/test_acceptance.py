"""Acceptance suite: one test and one printed pass/fail line per criterion."""

import math
import time

import numpy as np
import pytest
from scipy import stats as sps

from cgm import cocycle, harness, lpp, percolation, queue, shape
from cgm.env import Environment, WeightFamily, sample_environment
from cgm.shape import SolvableModel
from oracles import brute_lpp

INSTANCES = 1000
REL = 1e-10


def _families(r):
    pick = r.integers(4)
    return [WeightFamily.exponential(float(r.uniform(0.5, 3))),
            WeightFamily.geometric(float(r.uniform(1.2, 4))),
            WeightFamily.bernoulli_capped(float(r.uniform(0.2, 1.0)), float(r.uniform(-2, 0.9))),
            WeightFamily.empirical([0.0, 1.0, 2.5])][pick]


def _solvable(r):
    return SolvableModel.exponential(float(r.uniform(0.5, 3))) if r.integers(2) else \
        SolvableModel.geometric(float(r.uniform(1.2, 4)))


def _cocycle(r, seed, L):
    model = _solvable(r)
    xi1 = float(r.uniform(0.05, 0.95))
    o = tuple(int(c) for c in r.integers(-20, 20, 2))
    v = (o[0] + L, o[1] + L)
    b = cocycle.solvable_cocycle(model, (xi1, 1 - xi1), v, L, seed)
    env = sample_environment(model.weight_family(), L, L, o, seed)
    return cocycle.extend_cocycle(b, env)


def _close(a, b, scale):
    return abs(a - b) <= REL * max(1.0, scale)


def identity_suite() -> dict[str, tuple[int, int]]:
    """Each identity on INSTANCES random instances; returns name -> (instances, failures)."""
    r = np.random.default_rng(20240601)
    out: dict[str, list[int]] = {}

    def tally(name, ok):
        c = out.setdefault(name, [0, 0])
        c[0] += 1
        c[1] += 0 if ok else 1

    for k in range(INSTANCES):
        # DP against path enumeration
        a, b = (int(x) for x in r.integers(1, 5, 2))
        env = sample_environment(_families(r), a, b, (0, 0), k)
        G = lpp.passage_table(env).values
        scale = float(np.abs(env.weights).sum())
        tally("dp_vs_brute_force", all(_close(G[i, j], brute_lpp(env.weights, (0, 0), (i, j)), scale)
                                       for i in range(a) for j in range(b)))

        # superadditivity
        env = sample_environment(_families(r), 10, 10, (0, 0), k, replicate=1)
        x = tuple(int(c) for c in r.integers(0, 10, 2))
        z = (int(r.integers(x[0], 10)), int(r.integers(x[1], 10)))
        G0, Gx = lpp.passage_table(env), lpp.passage_table(env, x, z)
        scale = float(np.abs(env.weights).sum())
        tally("superadditivity", G0.at(z) >= G0.at(x) + Gx.at(z) - REL * scale)

        # comparison lemma on 20x20, every other instance on a boundary-driven field
        if k % 2:
            ext = _cocycle(r, k, 20)
            Y, _ = lpp.boundary_weight_field(ext.env, ext.anchor, ext.boundary.horiz,
                                             ext.boundary.vert)
            field = np.pad(Y, ((0, 1), (0, 1)))
            field[-1, :] = r.exponential(1.0, 22)
            field[:, -1] = r.exponential(1.0, 22)
            env = Environment.from_array(field)
        else:
            env = sample_environment(_families(r), 22, 22, (0, 0), k, replicate=2)
        v = (20, 20)
        inc = {d: lpp.backward_table(env, (v[0] + d[0], v[1] + d[1]), (0, 0)).increments()
               for d in ((0, 0), (1, 0), (0, 1))}
        I = {d: f.horizontal[:20, :21] for d, f in inc.items()}
        J = {d: f.vertical[:21, :20] for d, f in inc.items()}
        tol = REL * max(1.0, float(np.abs(env.weights).sum()))
        tally("comparison_lemma", bool(np.all(I[(0, 1)] >= I[(0, 0)] - tol)
                                       and np.all(I[(0, 0)] >= I[(1, 0)] - tol)
                                       and np.all(J[(0, 1)] <= J[(0, 0)] + tol)
                                       and np.all(J[(0, 0)] <= J[(1, 0)] + tol)))

        # cocycle algebra, recovery and the variational identities
        ext = _cocycle(r, k, 12)
        scale = float(np.abs(ext.table.values).max())
        lo, hi = np.array(ext.corner), np.array(ext.anchor)
        p, q, s = (tuple(int(c) for c in r.integers(lo, hi + 1)) for _ in range(3))
        tally("cocycle_additivity", _close(ext.B(p, q) + ext.B(q, s), ext.B(p, s), scale))
        tally("cocycle_antisymmetry", _close(ext.B(p, q), -ext.B(q, p), scale))
        w = tuple(int(c) for c in r.integers(lo + 1, hi + 1))
        inner = cocycle.extend_cocycle(ext.induced_boundary(w), ext.env)
        i, j = w[0] - lo[0], w[1] - lo[1]
        tally("anchor_independence",
              float(np.abs(inner.horizontal - ext.horizontal[:i, :j + 1]).max(initial=0)) <= REL * scale
              and float(np.abs(inner.vertical - ext.vertical[:i + 1, :j]).max(initial=0)) <= REL * scale)
        tally("recovery", ext.recovery_residual() <= REL * scale)
        res = cocycle.variational_identity_check(ext, float(r.uniform(-10, 10)))
        tally("variational_tilted", res.tilted <= REL)
        tally("variational_point_to_point", res.point_to_point <= REL)

        # queueing identities and the transposed system
        n, K = int(r.integers(3, 80)), int(r.integers(2, 7))
        law = queue.ArrivalLaw(["constant", "exponential", "geometric"][k % 3], float(r.uniform(3, 5)))
        fam = WeightFamily.geometric(2.0) if k % 2 else WeightFamily.exponential(float(r.uniform(0.5, 2.5)))
        win = queue.tandem_pass(law, fam, n, K, k)
        scale = queue.identity_scale(win)
        ids = queue.check_identities(win)
        tally("queue_conservation", ids["conservation"] <= REL * scale)
        tally("queue_recovery", ids["recovery"] <= REL * scale)
        tid = queue.check_identities(queue.transpose_system(win))
        tally("transpose_identities", max(tid.values()) <= REL * scale)

        # psi monotone in N
        env = sample_environment(WeightFamily.bernoulli_capped(float(r.uniform(0.3, 0.95)),
                                                               float(r.uniform(-1, 0.5))),
                                 30, 30, (0, 0), k, replicate=3)
        psi = percolation.psi_estimate(env, range(29)).values
        tally("psi_monotone", bool(np.all(np.diff(psi) >= -REL * 30)))

        # queue-LPP correspondence on 10x10
        S = _families(r).from_uniforms(r.random((10, 10)))
        S = S - min(0.0, S.min())
        entry = queue.service_entry_times(S)
        tally("queue_lpp_correspondence",
              bool(np.all(np.abs(entry - lpp.forward_values(S)) <= REL * max(1.0, S.sum()))))
    return {k: (v[0], v[1]) for k, v in out.items()}


def test_criterion_1_identity_suite(report):
    start = time.perf_counter()
    results = identity_suite()
    elapsed = time.perf_counter() - start
    bad = {k: v for k, v in results.items() if v[1] or v[0] < INSTANCES}
    ok = not bad and elapsed < 120
    detail = ", ".join(f"{k}={v[0] - v[1]}/{v[0]}" for k, v in results.items())
    report(1, ok, f"{len(results)} identities x {INSTANCES} instances in {elapsed:.1f}s ({detail})")
    assert ok, bad


def test_criterion_2_solvable_shape(report):
    exp = shape.gamma_samples(WeightFamily.exponential(1.0), [1.0], 800, 200, 11)[:, 0]
    geo = shape.gamma_samples(WeightFamily.geometric(2.0), [1.0], 800, 200, 12)[:, 0]
    target = 4 + 2 * math.sqrt(2)
    ok_e = 3.80 <= exp.mean() <= 4.00
    ok_g = abs(geo.mean() - target) <= 0.05 * target
    report(2, ok_e and ok_g, f"exponential mean {exp.mean():.4f} in [3.80, 4.00]; geometric mean "
                             f"{geo.mean():.4f} vs {target:.4f} (rel {abs(geo.mean() / target - 1):.4f} <= 0.05)")
    assert ok_e and ok_g


def test_criterion_3_legendre_suite(report):
    leg = harness.run(harness.parse_config({"experiment": "legendre"}))
    dual = harness.run(harness.parse_config({"experiment": "duality", "points": 200}))
    leg_g = harness.run(harness.parse_config({"experiment": "legendre",
                                              "family": {"kind": "geometric", "mean": 2.0}}))
    ok = leg.passed and dual.passed and leg_g.passed and len(leg.records) == 50
    s = leg.summary
    report(3, ok, f"involution {s['involution_max']:.2e} < 1e-8, closed form {s['closed_form_max']:.2e} "
                  f"< 1e-6, gamma round trip {s['gamma_round_trip_max']:.2e} < 1e-6, tilt/velocity "
                  f"{dual.summary['round_trip_max']:.2e} < 1e-9 (50-point grid, geometric too)")
    assert ok


def _fixed_point(family, alpha, seed):
    c = harness.parse_config({"experiment": "queue-geometric", "family": family, "alpha": alpha,
                              "customers": 100_000, "seed": seed})
    return {v.name: v for v in queue.fixed_point_check(
        SolvableModel.from_family(c.family), alpha, 100_000, seed).verdicts}


def test_criterion_4_queue_fixed_point(report):
    need = ("departures_law", "p_wait_zero", "sojourn_mean", "transpose_arrival_mean")
    geo = _fixed_point({"kind": "geometric", "mean": 2.0}, 4.0, 0)
    ex = _fixed_point({"kind": "exponential", "mean": 1.0}, 2.0, 0)
    ok = all(geo[n].passed for n in need) and all(ex[n].passed for n in need)
    ok &= (geo["p_wait_zero"].predicted == pytest.approx(2 / 3)
           and geo["sojourn_mean"].predicted == pytest.approx(3.0)
           and ex["sojourn_mean"].predicted == pytest.approx(2.0)
           and ex["transpose_arrival_mean"].predicted == pytest.approx(2.0))
    report(4, ok, f"geometric: chi-square p={geo['departures_law'].spread:.3f}, P(W=0)="
                  f"{geo['p_wait_zero'].value:.4f}~2/3, E[W+S]={geo['sojourn_mean'].value:.4f}~3, "
                  f"transpose {geo['transpose_arrival_mean'].value:.4f}~3; exponential: KS p="
                  f"{ex['departures_law'].spread:.3f}, E[W+S]={ex['sojourn_mean'].value:.4f}~2, "
                  f"transpose {ex['transpose_arrival_mean'].value:.4f}~2")
    assert ok


def test_criterion_5_fixed_point_attraction(report):
    b = harness.run(harness.parse_config({"experiment": "queue-fixpoint", "replicates": 50,
                                          "stations": 30, "customers": 10000, "alpha": 2.0,
                                          "early_station": 2, "late_station": 25}))
    frac = b.summary["ks_decrease_fraction"]
    ok = frac >= 0.9
    report(5, ok, f"KS(A^25,A^26) < KS(A^2,A^3) in {frac:.0%} of 50 seeds (need >= 90%)")
    assert ok


def test_criterion_6_burke(report):
    b = harness.run(harness.parse_config({"experiment": "stationary-lpp", "replicates": 20,
                                          "ray_length": 200}))
    recs = b.records
    s = b.summary
    total = sum(r["Y_count"] for r in recs)
    bound = 3 / math.sqrt(total)
    lag_e1 = float(np.mean([r["Y_lag1_e1"] for r in recs]))
    lag_e2 = float(np.mean([r["Y_lag1_e2"] for r in recs]))
    ok_mean = abs(s["Y_mean"]["mean"] - 1.0) <= 3 * s["Y_mean"]["se"]
    ok_lag = abs(lag_e1) < bound and abs(lag_e2) < bound
    ok_inc = all(abs(s[k]["mean"] - 2.0) <= 3 * s[k]["se"] for k in ("I_mean", "J_mean"))
    ok = ok_mean and ok_lag and ok_inc
    report(6, ok, f"Y mean {s['Y_mean']['mean']:.4f} (SE {s['Y_mean']['se']:.4f}); lag-1 "
                  f"{lag_e1:+.5f}/{lag_e2:+.5f} within {bound:.5f}; increment means "
                  f"{s['I_mean']['mean']:.3f}/{s['J_mean']['mean']:.3f} (SE {s['I_mean']['se']:.3f}/"
                  f"{s['J_mean']['se']:.3f}) vs (2, 2)")
    assert ok


def test_criterion_7_busemann(report):
    b = harness.run(harness.parse_config({
        "experiment": "busemann", "replicates": 200, "n_list": [100, 500],
        "xi_list": [[0.3, 0.7], [0.5, 0.5], [0.7, 0.3]]}))
    s = b.summary["xi1=0.5,e1"]
    ok_pt = abs(s["point_mean"] - 2.0) <= 2 * s["point_se"]
    ok_line = abs(s["line_mean"] - (s["point_mean"] - 2.0)) <= 1.96 * (s["point_se"] + s["line_se"])
    horiz = [b.summary[f"xi1={x:g},e1"]["point_mean"] for x in (0.3, 0.5, 0.7)]
    ok_mono = horiz[0] >= horiz[1] >= horiz[2]
    ok = ok_pt and ok_line and ok_mono
    report(7, ok, f"mean G(0,v)-G(e1,v) at n=500: {s['point_mean']:.4f} (SE {s['point_se']:.4f}) vs 2; "
                  f"point-to-line {s['line_mean']:+.4f} vs {s['point_mean'] - 2.0:+.4f}; "
                  f"horizontal means over xi1=0.3,0.5,0.7: {horiz[0]:.3f} >= {horiz[1]:.3f} >= {horiz[2]:.3f}")
    assert ok


def test_criterion_8_percolation_cone(report):
    recs = [harness.percolation_replicate(0.9, 0.0, 500, 500, 400, 21, r) for r in range(50)]
    summary, verdicts = harness.summarize_percolation(recs, 0.9)
    ok = all(v.passed for v in verdicts)
    report(8, ok, f"beta {summary['beta']:.4f} in (1/2, 1), survival {summary['survival']:.0%}; "
                  f"G/n at (n/2,n/2) {summary['flat_estimate']:.5f}; psi stabilized "
                  f"{summary['psi_stabilized_fraction']:.0%}; cone formula "
                  f"{summary['cone_agree_fraction']:.0%}; variance n=250 "
                  f"{summary['disorder_variance_half']:.4f}, n=500 {summary['disorder_variance_full']:.4f}")
    assert ok, [v for v in verdicts if not v.passed]


def test_criterion_9_ergodic(report):
    b = harness.run(harness.parse_config({"experiment": "ergodic", "replicates": 50,
                                          "n_list": [50, 400]}))
    frac = b.summary["decay_fraction"]
    ok = frac >= 0.95
    curve = b.summary["mean_curve"]
    report(9, ok, f"max|F(0,x)|/n at n=400 below n=50 in {frac:.0%} of 50 seeds (mean "
                  f"{curve[50]:.4f} -> {curve[400]:.4f})")
    assert ok
