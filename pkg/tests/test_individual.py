import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrkit.bias import generate_alice
from mrkit.errors import CollinearInstruments, DegenerateExposure
from mrkit.individual import (
    first_stage_f,
    marginal_associations,
    ols_estimate,
    ssiv_estimate,
    tsls_estimate,
)
from mrkit.summary import ivw_estimate, ratio_estimate
from mrkit.types import AliceConfig, Design, IndividualDataset


def sample(rng, n=500, p=3, gamma=0.3, beta=1.0, cov=0.3):
    Z = rng.standard_normal((n, p))
    e = rng.multivariate_normal([0, 0], [[1, cov], [cov, 1]], n)
    D = Z @ np.full(p, gamma) + e[:, 0]
    Y = beta * D + e[:, 1]
    return IndividualDataset(Y, D, Z)


def test_ols_exact_fit():
    d = np.arange(10.0)
    res = ols_estimate(IndividualDataset(2 * d, d, d[:, None]))
    assert res.beta_hat == pytest.approx(2.0)
    assert res.se == pytest.approx(0.0, abs=1e-12)


def test_ols_independent_noise_centers_on_zero():
    rng = np.random.default_rng(0)
    est = [ols_estimate(IndividualDataset(rng.normal(size=400), rng.normal(size=400),
                                          np.ones((400, 1)))).beta_hat for _ in range(400)]
    assert abs(np.mean(est)) <= 3 * np.std(est, ddof=1) / math.sqrt(len(est))


def test_ols_constant_exposure():
    with pytest.raises(DegenerateExposure):
        ols_estimate(IndividualDataset(np.arange(5.0), np.ones(5), np.ones((5, 1))))


def test_tsls_binary_instrument_is_wald_ratio():
    rng = np.random.default_rng(1)
    z = rng.integers(0, 2, 300).astype(float)
    d = 0.8 * z + rng.normal(size=300)
    y = 1.7 * d + rng.normal(size=300)
    wald = (y[z == 1].mean() - y[z == 0].mean()) / (d[z == 1].mean() - d[z == 0].mean())
    assert tsls_estimate(IndividualDataset(y, d, z[:, None])).beta_hat == pytest.approx(wald, rel=1e-10)


def test_tsls_perfect_instrument_is_ols():
    rng = np.random.default_rng(2)
    z = rng.normal(size=100)
    y = 0.5 * z + rng.normal(size=100)
    data = IndividualDataset(y, z, z[:, None])
    assert tsls_estimate(data).beta_hat == pytest.approx(ols_estimate(data).beta_hat, rel=1e-12)


def test_tsls_collinear_instruments():
    rng = np.random.default_rng(3)
    z = rng.normal(size=50)
    with pytest.raises(CollinearInstruments):
        tsls_estimate(IndividualDataset(rng.normal(size=50), z, np.column_stack([z, z])))


def test_tsls_robust_se_is_reported():
    data = sample(np.random.default_rng(4))
    classic, robust = tsls_estimate(data), tsls_estimate(data, robust=True)
    assert classic.beta_hat == robust.beta_hat
    assert robust.se == pytest.approx(classic.se, rel=0.3)


def test_first_stage_noiseless_is_infinite():
    rng = np.random.default_rng(5)
    Z = rng.standard_normal((50, 3))
    fs = first_stage_f(IndividualDataset(rng.normal(size=50), Z @ [0.1, 0.2, 0.3], Z))
    assert math.isinf(fs.f_statistic)
    assert fs.to_dict()["f_statistic"] == "inf"
    assert not fs.weak


def test_first_stage_matches_displayed_formula():
    data = sample(np.random.default_rng(6), n=300, p=4, gamma=0.1)
    Zc = data.instruments - data.instruments.mean(0)
    dc = data.exposure - data.exposure.mean()
    g = np.linalg.lstsq(Zc, dc, rcond=None)[0]
    resid = dc - Zc @ g
    s2 = resid @ resid / (300 - 4 - 1)
    f = g @ Zc.T @ Zc @ g / (4 * s2)
    fs = first_stage_f(data)
    assert fs.f_statistic == pytest.approx(f, rel=1e-10)
    assert fs.concentration_estimate == pytest.approx(max(0.0, 4 * f - 4), rel=1e-10)


def test_first_stage_null_mean_is_p():
    rng = np.random.default_rng(7)
    pf = [10 * first_stage_f(sample(rng, n=400, p=10, gamma=0.0)).f_statistic for _ in range(1500)]
    assert abs(np.mean(pf) - 10) <= 3 * np.std(pf, ddof=1) / math.sqrt(len(pf))


def test_first_stage_grows_with_n():
    rng = np.random.default_rng(8)
    f1 = np.mean([first_stage_f(sample(rng, n=1000, p=5, gamma=0.1)).f_statistic for _ in range(300)])
    f2 = np.mean([first_stage_f(sample(rng, n=2000, p=5, gamma=0.1)).f_statistic for _ in range(300)])
    # E[F] is about 1 + n ||gamma||^2 / p, so the signal part doubles
    assert (f2 - 1) / (f1 - 1) == pytest.approx(2.0, rel=0.1)


def test_marginals_exact_on_orthonormal_design():
    n = 64
    Z = np.linalg.qr(np.random.default_rng(9).standard_normal((n, 3)))[0]
    Z = Z - Z.mean(0)
    Z, _ = np.linalg.qr(Z)  # columns stay centered and orthonormal
    gamma = np.array([0.5, -1.0, 2.0])
    ds = marginal_associations(IndividualDataset(np.zeros(n), Z @ gamma, Z))
    np.testing.assert_allclose(ds.gamma_hat, gamma, atol=1e-12)
    assert ds.design is Design.ONE_SAMPLE


def test_marginal_single_instrument_equals_joint():
    data = sample(np.random.default_rng(10), p=1)
    Zc = data.instruments[:, 0] - data.instruments[:, 0].mean()
    dc = data.exposure - data.exposure.mean()
    assert marginal_associations(data).gamma_hat[0] == pytest.approx(Zc @ dc / (Zc @ Zc), rel=1e-12)


def test_marginals_drop_constant_columns():
    rng = np.random.default_rng(11)
    Z = np.column_stack([rng.normal(size=40), np.full(40, 2.0)])
    ds = marginal_associations(IndividualDataset(rng.normal(size=40), rng.normal(size=40), Z))
    assert ds.ids == ["Z1"]
    assert ds.metadata["dropped_zero_variance"] == ["Z2"]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_single_instrument_tsls_equals_ratio(seed):
    data = sample(np.random.default_rng(seed), n=60, p=1, gamma=0.5)
    ratio = ratio_estimate(marginal_associations(data).records[0]).beta_j
    assert tsls_estimate(data).beta_hat == pytest.approx(ratio, rel=1e-10, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tsls_projection_invariance(seed):
    rng = np.random.default_rng(seed)
    data = sample(rng, n=80, p=3)
    A = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    mixed = IndividualDataset(data.outcome, data.exposure, data.instruments @ A)
    assert tsls_estimate(mixed).beta_hat == pytest.approx(tsls_estimate(data).beta_hat, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-100, 100, allow_nan=False))
def test_outcome_shift_changes_no_slope(seed, c):
    data = sample(np.random.default_rng(seed), n=50, p=2)
    shifted = IndividualDataset(data.outcome + c, data.exposure, data.instruments)
    for fn in (ols_estimate, tsls_estimate):
        assert fn(shifted).beta_hat == pytest.approx(fn(data).beta_hat, abs=1e-9)
    np.testing.assert_allclose(marginal_associations(shifted).big_gamma_hat,
                               marginal_associations(data).big_gamma_hat, atol=1e-9)


def test_marginal_ivw_tracks_tsls_with_strong_instruments():
    cfg = AliceConfig(beta=0.8, gamma=np.full(5, 0.2), sigma_delta_eps=0.3, n1=3000, n2=3000)
    diffs = []
    for r in range(100):
        s = generate_alice(cfg, 1, [1, r])
        diffs.append(ivw_estimate(marginal_associations(s)).beta_hat - tsls_estimate(s).beta_hat)
    diffs = np.array(diffs)
    assert abs(diffs.mean()) <= 3 * diffs.std(ddof=1) / math.sqrt(diffs.size) + 1e-3


def test_ssiv_on_strong_instruments():
    cfg = AliceConfig(beta=0.8, gamma=np.full(5, 0.3), sigma_delta_eps=0.3, n1=3000, n2=3000)
    res = ssiv_estimate(generate_alice(cfg, 1, 3), generate_alice(cfg, 2, 3))
    assert res.beta_hat == pytest.approx(0.8, abs=4 * res.se)
