import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mrkit.errors import (
    InsufficientInstruments,
    NoStrengthSpread,
    NullInstrument,
    ZeroDenominator,
)
from mrkit.summary import (
    MODE_GRID_SIZE,
    egger_estimate,
    ivw_estimate,
    kde_mode,
    mode_bandwidth,
    mode_based_estimate,
    ratio_estimate,
    weighted_median,
    weighted_median_estimate,
)
from mrkit.types import SnpRecord, SummaryDataset


def ds(g, G, sG=1.0, sg=None):
    return SummaryDataset.from_arrays(g, sg, G, sG)


def from_ratios(ratios, weights=None):
    """Unit exposure effects, so the IVW weight of record j is 1/se_G_j^2."""
    ratios = np.asarray(ratios, float)
    w = np.ones_like(ratios) if weights is None else np.asarray(weights, float)
    return ds(np.ones_like(ratios), ratios, 1.0 / np.sqrt(w))


# -- ratio --------------------------------------------------------------------


def test_ratio_examples():
    r = SnpRecord("a", "A", "G", 1.0, None, 2.0, 0.1)
    assert ratio_estimate(r).beta_j == 2.0
    r = SnpRecord("a", "A", "G", 0.5, 0.01, 0.1, 0.02)
    est = ratio_estimate(r)
    assert est.beta_j == pytest.approx(0.2)
    assert est.se_j == pytest.approx(0.04)
    second = ratio_estimate(r, second_order=True)
    assert second.se_j == pytest.approx(math.sqrt(0.04**2 + 0.1**2 * 0.01**2 / 0.5**4))


def test_ratio_se_matches_simulated_spread():
    # exposure-side noise negligible, so the spread is driven by Gamma_hat
    rng = np.random.default_rng(20240501)
    draws = rng.normal(0.1, 0.02, 10**6) / rng.normal(0.5, 0.0005, 10**6)
    se = ratio_estimate(SnpRecord("a", "A", "G", 0.5, None, 0.1, 0.02)).se_j
    assert draws.std() == pytest.approx(se, rel=0.01)


def test_ratio_null_instrument():
    with pytest.raises(NullInstrument):
        ratio_estimate(SnpRecord("a", "A", "G", 0.0, None, 0.1, 0.02))


# -- IVW ----------------------------------------------------------------------


def test_ivw_examples():
    assert ivw_estimate(ds([0.5], [0.3], 0.1)).beta_hat == pytest.approx(0.6)
    assert ivw_estimate(ds([1.0, 1.0], [1.0, 3.0])).beta_hat == pytest.approx(2.0)
    res = ivw_estimate(ds([1.0, 1.0, 2.0], [1.0, 3.0, 4.0]))
    assert res.beta_hat == pytest.approx(12 / 6)
    assert res.se == pytest.approx(1 / math.sqrt(6))


def test_ivw_zero_denominator():
    with pytest.raises(ZeroDenominator):
        ivw_estimate(ds([0.0, 0.0], [1.0, 2.0]))


def test_ivw_random_effects_never_narrower():
    data = ds([1.0, 1.0, 1.0], [1.0, 2.0, 9.0], 0.1)
    fixed, random_ = ivw_estimate(data), ivw_estimate(data, random_effects=True)
    assert random_.beta_hat == fixed.beta_hat
    assert random_.se >= fixed.se
    q = random_.diagnostics["cochran_q"]
    assert random_.se == pytest.approx(fixed.se * math.sqrt(q / 2))


# -- weighted median ----------------------------------------------------------


def test_weighted_median_examples():
    assert weighted_median([1, 2, 100], [1, 1, 1]) == 2.0
    # positions s = (0.05, 0.15, 0.60); 0.5 lies 0.35/0.45 of the way from 2 to 100
    assert weighted_median([1, 2, 100], [0.1, 0.1, 0.8]) == pytest.approx(704 / 9, rel=1e-14)
    res = weighted_median_estimate(from_ratios([1, 2, 100], [0.1, 0.1, 0.8]), n_boot=50, seed=1)
    assert res.beta_hat == pytest.approx(704 / 9, rel=1e-14)
    assert weighted_median_estimate(from_ratios([3.0] * 4), n_boot=20, seed=0).beta_hat == 3.0


def test_weighted_median_requires_three():
    with pytest.raises(InsufficientInstruments):
        weighted_median_estimate(from_ratios([1.0, 2.0]), n_boot=10, seed=0)


def test_weighted_median_bootstrap_is_seeded():
    data = from_ratios([1.0, 1.5, 2.0, 2.2, 5.0], [1, 2, 3, 2, 1])
    a = weighted_median_estimate(data, n_boot=200, seed=7)
    b = weighted_median_estimate(data, n_boot=200, seed=7)
    c = weighted_median_estimate(data, n_boot=200, seed=8)
    assert a.se == b.se and a.se != c.se
    assert a.se > 0


# -- mode ---------------------------------------------------------------------


def test_mode_examples():
    assert mode_based_estimate(from_ratios([4.0] * 5)).beta_hat == 4.0
    vals = np.array([2.0, 2.01, 1.99, 10.0])
    res = mode_based_estimate(from_ratios(vals), n_boot=20, seed=0)
    h = res.diagnostics["bandwidth"]
    assert abs(res.beta_hat - 2.0) <= h


def test_mode_tie_takes_smaller_mode():
    vals = np.array([1.0, 1.0, 3.0, 3.0])
    w = np.ones(4)
    h = mode_bandwidth(vals, w)
    step = (2 + 6 * h) / (MODE_GRID_SIZE - 1)
    got = kde_mode(vals, w, h)
    # the density is symmetric about 2 with one peak near each cluster
    assert got < 2.0
    assert abs(got - 1.0) < 0.05
    assert abs(kde_mode(-vals, w, h) + 3.0) < 0.05
    # the right-hand peak is the mirror image and exactly as high
    fine = np.linspace(vals.min() - 3 * h, vals.max() + 3 * h, 400_001)
    dens = np.exp(-0.5 * ((fine[:, None] - vals[None, :]) / h) ** 2).sum(axis=1)
    left = fine[:200_000][np.argmax(dens[:200_000])]
    assert abs(got - left) <= step


def test_mode_oracle_against_dense_density():
    rng = np.random.default_rng(3)
    vals = np.concatenate([rng.normal(0.3, 0.05, 8), rng.normal(1.5, 0.3, 4)])
    w = rng.uniform(0.5, 2.0, vals.size)
    h = mode_bandwidth(vals, w)
    fine = np.linspace(vals.min() - 3 * h, vals.max() + 3 * h, 200_001)
    dens = np.exp(-0.5 * ((fine[:, None] - vals[None, :]) / h) ** 2) @ w
    step = (vals.max() - vals.min() + 6 * h) / (MODE_GRID_SIZE - 1)
    assert abs(kde_mode(vals, w, h) - fine[np.argmax(dens)]) <= step


def test_mode_plurality_robustness():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(200):
        beta = rng.uniform(-1, 1)
        invalid = beta + rng.choice([-1, 1], 4) * rng.uniform(0.3, 20.0, 4)
        ratios = np.concatenate([np.full(5, beta), invalid])
        w = rng.uniform(0.5, 2.0, ratios.size)
        h = mode_bandwidth(ratios, w)
        # invalid values inside a few bandwidths bend the smoothed peak
        if h > 0 and np.min(np.abs(invalid - beta)) < 4 * h:
            continue
        res = mode_based_estimate(from_ratios(ratios, w), n_boot=2, seed=0)
        step = (ratios.max() - ratios.min() + 6 * h) / (MODE_GRID_SIZE - 1)
        assert abs(res.beta_hat - beta) <= step
        checked += 1
    assert checked >= 20


def test_mode_weighted_majority_is_exact():
    rng = np.random.default_rng(6)
    for _ in range(50):
        beta = rng.uniform(-1, 1)
        ratios = np.concatenate([np.full(5, beta), beta + rng.uniform(-2, 2, 4)])
        assert mode_based_estimate(from_ratios(ratios), n_boot=2, seed=0).beta_hat == beta


# -- Egger --------------------------------------------------------------------


def test_egger_exact_fits():
    g = np.array([0.1, 0.2, -0.3, 0.4, 0.25])
    res = egger_estimate(ds(g, 1.5 * g, 0.05))
    assert res.beta_hat == pytest.approx(1.5, abs=1e-12)
    assert res.diagnostics["intercept"] == pytest.approx(0.0, abs=1e-12)
    # pleiotropy is constant after orienting every gamma positive
    G = 1.5 * g + 0.2 * np.sign(g)
    res = egger_estimate(ds(g, G, 0.05))
    assert res.beta_hat == pytest.approx(1.5, abs=1e-12)
    assert res.diagnostics["intercept"] == pytest.approx(0.2, abs=1e-12)


def test_egger_no_spread():
    with pytest.raises(NoStrengthSpread):
        egger_estimate(ds([0.2, -0.2, 0.2], [0.1, 0.3, 0.2]))


def test_egger_consistent_under_independent_pleiotropy():
    rng = np.random.default_rng(11)
    beta, p, reps = 0.7, 200, 300
    est = []
    for _ in range(reps):
        g = rng.uniform(0.05, 0.3, p)
        pi = rng.normal(0.05, 0.02, p)
        se = 0.01
        G = beta * g + pi + rng.normal(0, se, p)
        est.append(egger_estimate(ds(g, G, se)).beta_hat)
    est = np.array(est)
    assert abs(est.mean() - beta) <= 3 * est.std(ddof=1) / math.sqrt(reps)


# -- invariants ---------------------------------------------------------------

finite = dict(allow_nan=False, allow_infinity=False)
record_lists = st.lists(
    st.tuples(
        st.floats(0.05, 1.0, **finite).flatmap(lambda a: st.sampled_from([a, -a])),
        st.floats(-2.0, 2.0, **finite),
        st.floats(0.01, 1.0, **finite),
    ),
    min_size=3,
    max_size=10,
)


def _arrays(rows):
    g, G, sG = map(np.array, zip(*rows))
    return g, G, sG


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 2.0, **finite), st.floats(-3, 3, **finite), st.floats(0.001, 1.0, **finite))
def test_single_instrument_collapse(g, G, sG):
    data = ds([g], [G], sG)
    r = ratio_estimate(data.records[0]).beta_j
    assert ivw_estimate(data).beta_hat == pytest.approx(r, abs=1e-12)
    wm = weighted_median_estimate(data, n_boot=5, seed=0, min_instruments=1).beta_hat
    assert wm == pytest.approx(r, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(record_lists, st.floats(0.1, 10.0, **finite))
def test_scale_equivariance(rows, c):
    g, G, sG = _arrays(rows)
    a, b = ds(g, G, sG), ds(g, c * G, c * sG)
    assert ivw_estimate(b).beta_hat == pytest.approx(c * ivw_estimate(a).beta_hat, rel=1e-9, abs=1e-12)
    wa = weighted_median_estimate(a, n_boot=2, seed=0).beta_hat
    wb = weighted_median_estimate(b, n_boot=2, seed=0).beta_hat
    assert wb == pytest.approx(c * wa, rel=1e-9, abs=1e-12)
    ma = mode_based_estimate(a, n_boot=2, seed=0).beta_hat
    mb = mode_based_estimate(b, n_boot=2, seed=0).beta_hat
    assert mb == pytest.approx(c * ma, rel=1e-6, abs=1e-9)
    assume(np.ptp(np.abs(g)) > 1e-3)
    ea, eb = egger_estimate(a).beta_hat, egger_estimate(b).beta_hat
    assert eb == pytest.approx(c * ea, rel=1e-7, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(record_lists, st.randoms(use_true_random=False))
def test_order_invariance(rows, rnd):
    g, G, sG = _arrays(rows)
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    a, b = ds(g, G, sG), ds(g[perm], G[perm], sG[perm])
    for fn in (ivw_estimate, lambda d: weighted_median_estimate(d, n_boot=2, seed=0),
               lambda d: mode_based_estimate(d, n_boot=2, seed=0)):
        assert fn(b).beta_hat == pytest.approx(fn(a).beta_hat, rel=1e-9, abs=1e-12)
    assume(np.ptp(np.abs(g)) > 1e-3)
    assert egger_estimate(b).beta_hat == pytest.approx(egger_estimate(a).beta_hat, rel=1e-7,
                                                      abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(record_lists, st.floats(-2, 2, **finite))
def test_exact_data_consistency(rows, beta):
    g, _, sG = _arrays(rows)
    data = ds(g, beta * g, sG)
    assert ivw_estimate(data).beta_hat == pytest.approx(beta, abs=1e-12)
    assert weighted_median_estimate(data, n_boot=2, seed=0).beta_hat == pytest.approx(beta, abs=1e-12)
    assert mode_based_estimate(data, n_boot=2, seed=0).beta_hat == pytest.approx(beta, abs=1e-12)
    assume(np.ptp(np.abs(g)) > 1e-3)
    assert egger_estimate(data).beta_hat == pytest.approx(beta, abs=1e-9)
