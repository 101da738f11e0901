import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from cgm import rng
from cgm.env import Environment, WeightFamily, sample_environment, translate


def test_bernoulli_p1_one_gives_all_ones():
    env = sample_environment(WeightFamily.bernoulli_capped(1.0, 0.0), 3, 3, (0, 0), 12345)
    assert np.array_equal(env.weights, np.ones((3, 3)))


def test_exponential_mean_clt():
    env = sample_environment(WeightFamily.exponential(1.0), 1000, 1000, (0, 0), 7)
    assert abs(env.weights.mean() - 1.0) < 5 / 1000


def test_overlapping_windows_agree():
    fam = WeightFamily.exponential(1.0)
    a = sample_environment(fam, 5, 5, (0, 0), 3)
    b = sample_environment(fam, 8, 8, (0, 0), 3)
    assert np.array_equal(a.weights, b.weights[:5, :5])


@settings(max_examples=40, deadline=None)
@given(st.integers(-50, 50), st.integers(-50, 50), st.integers(1, 9), st.integers(1, 9),
       st.integers(0, 2**64 - 1), st.integers(0, 5))
def test_shifted_windows_agree_cellwise(x0, y0, w, h, seed, r):
    big = rng.cell_bits(seed, rng.BULK, (x0 - 3, y0 - 2), w + 6, h + 4, r)
    small = rng.cell_bits(seed, rng.BULK, (x0, y0), w, h, r)
    assert np.array_equal(big[3:3 + w, 2:2 + h], small)


def test_streams_and_replicates_differ():
    a = rng.cell_bits(1, rng.BULK, (0, 0), 4, 4, 0)
    assert not np.array_equal(a, rng.cell_bits(1, rng.HORIZONTAL, (0, 0), 4, 4, 0))
    assert not np.array_equal(a, rng.cell_bits(1, rng.BULK, (0, 0), 4, 4, 1))
    assert not np.array_equal(a, rng.cell_bits(2, rng.BULK, (0, 0), 4, 4, 0))


def test_seed_range_checked():
    with pytest.raises(ValueError):
        rng.cell_bits(-1, rng.BULK, (0, 0), 2, 2)
    with pytest.raises(ValueError):
        rng.cell_bits(2**64, rng.BULK, (0, 0), 2, 2)


def test_translate_reads_same_field():
    fam = WeightFamily.exponential(1.0)
    env = sample_environment(fam, 6, 6, (0, 0), 9)
    assert translate(env, (0, 0)).weights is env.weights
    moved = translate(env, (2, 1))
    for x in range(-2, 4):
        for y in range(-1, 5):
            assert moved.weight((x, y)) == env.weight((x + 2, y + 1))
    fresh = moved.resample((-2, -1), 10, 10)
    assert np.array_equal(fresh.weights[:6, :6], env.weights)


def test_weights_read_only():
    env = Environment.from_array(np.ones((2, 2)))
    with pytest.raises(ValueError):
        env.weights[0, 0] = 5.0


@pytest.mark.parametrize("bad", [
    dict(kind="geometric", mean=1.0),
    dict(kind="exponential", mean=0.0),
    dict(kind="bernoulli_capped", p1=0.0),
    dict(kind="bernoulli_capped", p1=0.5, lo=1.0),
    dict(kind="empirical", values=(1.0, 1.0)),
    dict(kind="pareto", mean=2.0),
])
def test_invalid_families_rejected(bad):
    with pytest.raises(ValueError):
        WeightFamily.from_dict(bad)


def test_geometric_law_on_positive_integers():
    m = 2.0
    env = sample_environment(WeightFamily.geometric(m), 400, 500, (0, 0), 4)
    w = env.weights.ravel()
    assert w.min() >= 1 and np.all(w == np.floor(w))
    q = 1 - 1 / m
    for k in range(0, 6):
        # tail P(w > k) = q^k for the law on {1, 2, ...}
        p = (w > k).mean()
        assert abs(p - q**k) < 5 * math.sqrt(q**k * (1 - q**k) / w.size) + 1e-12
    assert abs(w.mean() - m) < 5 * math.sqrt(m * (m - 1) / w.size)


def test_exponential_law_ks():
    env = sample_environment(WeightFamily.exponential(3.0), 300, 300, (5, -5), 11)
    assert sps.kstest(env.weights.ravel(), "expon", args=(0, 3.0)).pvalue > 1e-3


def test_family_moments_and_dicts():
    for fam in (WeightFamily.exponential(2.0), WeightFamily.geometric(3.0),
                WeightFamily.bernoulli_capped(0.7, -1.0), WeightFamily.empirical([0, 1, 5])):
        assert WeightFamily.from_dict(fam.to_dict()) == fam
        env = sample_environment(fam, 500, 400, (0, 0), 2)
        w = env.weights.ravel()
        assert abs(w.mean() - fam.expectation()) < 5 * math.sqrt(fam.variance() / w.size)
        assert w.min() >= fam.lower_bound()


def test_coupled_inversion_monotone():
    u = rng.cell_uniforms(5, rng.BULK, (0, 0), 50, 50)
    lo = WeightFamily.bernoulli_capped(0.85).from_uniforms(u)
    hi = WeightFamily.bernoulli_capped(0.95).from_uniforms(u)
    assert np.all(hi >= lo)
    assert np.all(WeightFamily.exponential(2).from_uniforms(u)
                  >= WeightFamily.exponential(1).from_uniforms(u))


def test_environment_window_errors():
    env = Environment.from_array(np.arange(6.0).reshape(2, 3), origin=(1, 1))
    assert env.upper == (2, 3)
    with pytest.raises(IndexError):
        env.weight((0, 0))
    with pytest.raises(IndexError):
        env.block((1, 1), (3, 3))
    assert env.block((2, 2), (2, 3)).tolist() == [[4.0, 5.0]]
    with pytest.raises(ValueError):
        Environment.from_array(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        sample_environment(WeightFamily.exponential(), 0, 3)
