"""Estimators and diagnostics on individual-level data.

All regressions center the variables instead of carrying an intercept column,
and every least-squares problem is solved through a QR factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CollinearInstruments, DegenerateExposure, NoFirstStageSignal
from .types import Design, EstimateResult, IndividualDataset, SnpRecord, SummaryDataset

WEAK_F_THRESHOLD = 10.0
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class FirstStageDiagnostics:
    f_statistic: float
    concentration_estimate: float
    p: int
    n: int

    @property
    def weak(self) -> bool:
        return self.f_statistic < WEAK_F_THRESHOLD

    def to_dict(self) -> dict:
        f = self.f_statistic
        return {
            "f_statistic": "inf" if math.isinf(f) else f,
            "concentration_estimate": (
                "inf" if math.isinf(self.concentration_estimate) else self.concentration_estimate
            ),
            "p": self.p,
            "n": self.n,
            "weak": self.weak,
        }


def _center(a: np.ndarray) -> np.ndarray:
    return a - a.mean(axis=0)


def _qr_checked(Z: np.ndarray):
    """Reduced QR of centered instruments with a relative rank check."""
    if Z.shape[1] == 0:
        raise CollinearInstruments("collinear instruments: no instrument columns")
    if Z.shape[0] <= Z.shape[1]:
        raise CollinearInstruments(
            f"collinear instruments: n={Z.shape[0]} does not exceed p={Z.shape[1]}"
        )
    q, r = np.linalg.qr(Z)
    diag = np.abs(np.diag(r))
    scale = np.linalg.norm(Z, axis=0)
    if np.any(diag <= _RANK_TOL * np.maximum(scale, np.finfo(float).tiny)):
        raise CollinearInstruments("collinear instruments: Z is rank deficient")
    return q, r


def ols_estimate(data: IndividualDataset, alpha: float = 0.05) -> EstimateResult:
    """Least-squares slope of Y on D with homoskedastic standard error."""
    if data.n < 2:
        raise DegenerateExposure("degenerate exposure: need at least two observations")
    d = _center(data.exposure)
    y = _center(data.outcome)
    sdd = float(d @ d)
    if sdd <= 0:
        raise DegenerateExposure("degenerate exposure: exposure has zero variance")
    beta = float(d @ y) / sdd
    resid = y - beta * d
    df = data.n - 2
    se = math.sqrt(float(resid @ resid) / df / sdd) if df > 0 else math.nan
    return EstimateResult.wald("OLS", beta, se, alpha, n=data.n)


def tsls_estimate(
    data: IndividualDataset, robust: bool = False, alpha: float = 0.05
) -> EstimateResult:
    """Two-stage least squares with all instruments.

    The classical variance is ``sigma_hat^2 / (D_hat' D_hat)`` with
    ``sigma_hat^2`` from second-stage residuals ``Y - beta_hat D`` (df n - 2).
    ``robust=True`` switches to the HC0 sandwich ``sum(D_hat_i^2 e_i^2) /
    (D_hat' D_hat)^2``.
    """
    Z = _center(data.instruments)
    d = _center(data.exposure)
    y = _center(data.outcome)
    q, _ = _qr_checked(Z)
    d_hat = q @ (q.T @ d)
    s = float(d_hat @ d_hat)
    if s <= _RANK_TOL**2 * max(float(d @ d), np.finfo(float).tiny):
        raise NoFirstStageSignal("no first-stage signal: projected exposure is zero")
    beta = float(d_hat @ y) / s
    resid = y - beta * d
    if robust:
        se = math.sqrt(float(np.sum(d_hat**2 * resid**2))) / s
    else:
        se = math.sqrt(float(resid @ resid) / max(data.n - 2, 1) / s)
    fs = first_stage_f(data)
    return EstimateResult.wald(
        "2SLS-HC0" if robust else "2SLS",
        beta,
        se,
        alpha,
        n=data.n,
        p=data.p,
        first_stage_f=fs.f_statistic,
        weak_instruments=fs.weak,
    )


def first_stage_f(data: IndividualDataset) -> FirstStageDiagnostics:
    """First-stage F statistic ``gamma' Z'Z gamma / (p sigma_delta^2)``.

    ``sigma_delta^2`` is the residual variance of the joint first-stage fit on
    ``n - p - 1`` degrees of freedom. A numerically exact fit yields ``inf``.
    ``concentration_estimate`` is ``max(0, p F - p)``.
    """
    Z = _center(data.instruments)
    d = _center(data.exposure)
    q, _ = _qr_checked(Z)
    n, p = data.n, data.p
    proj = q.T @ d
    explained = float(proj @ proj)  # equals gamma' Z'Z gamma
    resid = d - q @ proj
    rss = float(resid @ resid)
    df = n - p - 1
    total = float(d @ d)
    if df <= 0 or rss <= 1e-24 * max(total, np.finfo(float).tiny):
        f = math.inf if explained > 0 else 0.0
    else:
        f = explained / (p * rss / df)
    conc = math.inf if math.isinf(f) else max(0.0, p * f - p)
    return FirstStageDiagnostics(float(f), float(conc), p, n)


def _simple_regression(x: np.ndarray, y: np.ndarray, sxx: float):
    b = float(x @ y) / sxx
    r = y - b * x
    df = x.size - 2
    se = math.sqrt(float(r @ r) / df / sxx) if df > 0 else math.nan
    return b, se


def marginal_associations(
    data: IndividualDataset, design: Design | str = Design.ONE_SAMPLE
) -> SummaryDataset:
    """Per-instrument simple regressions of D and of Y on each column of Z.

    Zero-variance columns are dropped and listed under
    ``metadata["dropped_zero_variance"]``. Exposure p-values are two-sided t
    tests on ``n - 2`` degrees of freedom.
    """
    Z = _center(data.instruments)
    d = _center(data.exposure)
    y = _center(data.outcome)
    n = data.n
    records, dropped = [], []
    for j, sid in enumerate(data.ids):
        z = Z[:, j]
        szz = float(z @ z)
        if szz <= 1e-24 * max(1.0, float(np.abs(data.instruments[:, j]).max()) ** 2 * n):
            dropped.append(sid)
            continue
        g, sg = _simple_regression(z, d, szz)
        G, sG = _simple_regression(z, y, szz)
        if sg > 0 and n > 2:
            pv = float(2 * stats.t.sf(abs(g / sg), n - 2))
        else:
            pv = 0.0 if g != 0 else 1.0
        records.append(SnpRecord(sid, "A", "C", g, sg, G, sG, pv))
    return SummaryDataset(
        tuple(records),
        Design(design),
        n_exposure=n,
        n_outcome=n,
        metadata={"dropped_zero_variance": dropped},
    )


def two_sample_marginals(
    exposure_sample: IndividualDataset, outcome_sample: IndividualDataset
) -> SummaryDataset:
    """Exposure associations from one sample, outcome associations from another."""
    if exposure_sample.ids != outcome_sample.ids:
        raise ValueError("both samples must carry the same instruments in the same order")
    ex = marginal_associations(exposure_sample)
    out = {r.snp_id: r for r in marginal_associations(outcome_sample)}
    records = []
    for r in ex:
        if r.snp_id not in out:
            continue
        o = out[r.snp_id]
        records.append(
            SnpRecord(r.snp_id, "A", "C", r.gamma_hat, r.se_gamma, o.big_gamma_hat,
                      o.se_big_gamma, r.pval_exposure)
        )
    dropped = sorted(set(exposure_sample.ids) - {r.snp_id for r in records})
    return SummaryDataset(
        tuple(records),
        Design.TWO_SAMPLE,
        n_exposure=exposure_sample.n,
        n_outcome=outcome_sample.n,
        metadata={"dropped_zero_variance": dropped},
    )


def ssiv_estimate(
    exposure_sample: IndividualDataset, outcome_sample: IndividualDataset, alpha: float = 0.05
) -> EstimateResult:
    """Split-sample IV: first stage fitted on one sample, applied to the other.

    ``gamma_hat`` is the joint first-stage fit on ``exposure_sample``; the
    estimate is the OLS slope of the outcome sample's Y on ``Z2 gamma_hat``.
    """
    Z1 = _center(exposure_sample.instruments)
    d1 = _center(exposure_sample.exposure)
    q, r = _qr_checked(Z1)
    gamma_hat = np.linalg.solve(r, q.T @ d1)
    Z2 = _center(outcome_sample.instruments)
    y2 = _center(outcome_sample.outcome)
    d_hat = Z2 @ gamma_hat
    s = float(d_hat @ d_hat)
    if s <= 0:
        raise NoFirstStageSignal("no first-stage signal: predicted exposure is constant")
    beta = float(d_hat @ y2) / s
    resid = y2 - beta * d_hat
    se = math.sqrt(float(resid @ resid) / max(outcome_sample.n - 2, 1) / s)
    return EstimateResult.wald(
        "SSIV", beta, se, alpha, n_exposure=exposure_sample.n, n_outcome=outcome_sample.n
    )
