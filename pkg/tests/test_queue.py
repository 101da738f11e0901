import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgm import lpp, queue
from cgm.env import WeightFamily
from cgm.errors import InstabilityError
from cgm.shape import SolvableModel
from oracles import departure_times_by_lpp, lindley_loop

EXP1 = WeightFamily.exponential(1.0)


def test_lindley_hand_example():
    W = queue.lindley_waits([3, 3, 3], [5, 1, 2])
    assert W.tolist() == [0.0, 2.0, 0.0]
    assert queue.departures([3, 3, 3], [5, 1, 2], W).tolist() == [1.0, 2.0]


def test_lindley_degenerate_cases():
    assert np.all(queue.lindley_waits([1, 2, 3], [0, 0, 0]) == 0)
    # W + S = A: no idle time, so departures reproduce the next service times
    A, S = np.array([2.0, 3.0, 1.0, 5.0]), np.array([2.0, 3.0, 1.0, 4.0])
    W = np.zeros(4)
    assert queue.departures(A, S, W).tolist() == S[1:].tolist()
    with pytest.raises(ValueError):
        queue.lindley_waits([-1.0, 1.0], [1.0, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=40), st.integers(0, 2**32 - 1))
def test_lindley_matches_loop(S, seed):
    A = np.random.default_rng(seed).exponential(2.0, len(S))
    assert queue.lindley_waits(A, S) == pytest.approx(lindley_loop(A, S), abs=1e-12)


def test_burn_in_policy():
    S, A = np.arange(1.0, 11.0), np.full(10, 20.0)
    assert len(queue.lindley_waits(A, S, ("burn_in", 3))) == 7


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.integers(0, 8), st.integers(0, 2**32 - 1),
       st.sampled_from(["constant", "exponential", "geometric"]))
def test_tandem_identities_exact(n, k, seed, kind):
    fam = WeightFamily.geometric(2.0) if kind == "geometric" else EXP1
    win = queue.tandem_pass(queue.ArrivalLaw(kind, 3.0), fam, n, k, seed)
    assert win.A.shape == (n - 1, k + 1) and win.S.shape == (n, k) and win.W.shape == (n, k)
    res = queue.check_identities(win)
    scale = queue.identity_scale(win)
    assert all(v <= 1e-12 * scale for v in res.values())


def test_zero_stations_and_deterministic_inputs():
    win = queue.tandem_pass(queue.ArrivalLaw.constant(2.0), EXP1, 50, 0, 0)
    assert win.A.shape == (49, 1) and np.all(win.A == 2.0)
    A, S, W = queue._run(np.full((30, 1), 2.0), np.full((31, 4), 1.0))
    assert np.all(W == 0) and np.all(A == 2.0)


def test_instability_rejected():
    with pytest.raises(InstabilityError):
        queue.tandem_pass(queue.ArrivalLaw.constant(1.0), EXP1, 10, 2, 0)
    with pytest.raises(InstabilityError):
        queue.sojourn_mean_check(0.5, EXP1, 100, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_transpose_identities_exact(n, k, seed):
    win = queue.tandem_pass(queue.ArrivalLaw.exponential(2.0), EXP1, n, k, seed)
    tw = queue.transpose_system(win)
    assert tw.A.shape == (k - 1, n + 1) and tw.S.shape == (k, n) and tw.W.shape == (k, n)
    res = queue.check_identities(tw)
    assert all(v <= 1e-12 * queue.identity_scale(win) for v in res.values())


def test_transpose_needs_room():
    win = queue.tandem_pass(queue.ArrivalLaw.exponential(2.0), EXP1, 10, 1, 0)
    with pytest.raises(ValueError):
        queue.transpose_system(win)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_event_simulation_is_last_passage(n, k, seed):
    S = np.random.default_rng(seed).exponential(1.0, (n, k))
    entry = queue.service_entry_times(S)
    assert entry == pytest.approx(lpp.forward_values(S), abs=1e-12)
    assert entry + S == pytest.approx(departure_times_by_lpp(S), abs=1e-12)


def test_mean_preservation_and_attraction():
    rep = queue.fixed_point_iterate(queue.ArrivalLaw.constant(2.0), EXP1, 20000, 10, seed=1)
    assert all(abs(m - 2.0) < 4 * se for m, se in zip(rep.mean, rep.se) if se > 0)
    assert rep.ks[8] < rep.ks[1]


def test_exponential_fixed_point_immediate():
    rep = queue.fixed_point_iterate(queue.ArrivalLaw.exponential(2.0), EXP1, 20000, 4, seed=2)
    assert max(rep.ks[1:]) < 2 * rep.ks_threshold


def test_report_outputs(tmp_path):
    rep = queue.fixed_point_iterate(queue.ArrivalLaw.constant(2.0), EXP1, 500, 3, cesaro=True)
    assert rep.cesaro_mean is not None
    lines = rep.to_csv(tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("station,mean") and len(lines) == 5
    assert '"stations": 3' in rep.to_json()


def test_sojourn_predictions():
    geo = queue.sojourn_mean_check(4.0, WeightFamily.geometric(2.0), 100_000, 0)
    assert geo.predicted == pytest.approx(3.0) and abs(geo.z) <= 3
    ex = queue.sojourn_mean_check(2.0, EXP1, 100_000, 0)
    assert ex.predicted == pytest.approx(2.0) and abs(ex.z) <= 3


def test_geometric_wait_law_predictions():
    chk = queue.geometric_fixed_point_check(2.0, 4.0, 100_000, 0)
    names = {v.name: v for v in chk.verdicts}
    assert names["p_wait_zero"].predicted == pytest.approx(2 / 3)
    assert names["sojourn_mean"].predicted == pytest.approx(3.0)
    assert {"departures_law", "departures_lag1", "wait_law", "product_form",
            "transpose_arrival_mean"} <= set(names)


def test_waits_sublinear():
    win = queue.tandem_pass(queue.ArrivalLaw.exponential(2.0), EXP1, 40000, 1, 5)
    W = win.W[:, 0]
    assert W[-1000:].max() / len(W) < 0.01


def test_stationary_arrival_law():
    assert queue.stationary_arrivals(SolvableModel.geometric(2.0), 4.0).kind == "geometric"
