"""Causal-effect estimators on GWAS summary statistics.

Every estimator takes a :class:`~mrkit.types.SummaryDataset` of harmonized,
approximately independent variants and returns an
:class:`~mrkit.types.EstimateResult`. Ratio estimates are weighted by their
first-order inverse variance ``gamma_hat**2 / se_big_gamma**2`` throughout.

Bootstrap replicate ``b`` draws from ``numpy.random.default_rng([seed, b])``,
so replicates are independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import (
    InsufficientInstruments,
    NoStrengthSpread,
    NullInstrument,
    ZeroDenominator,
)
from .types import EstimateResult, SnpRecord, SummaryDataset

DEFAULT_BOOTSTRAP = 1000
MODE_GRID_SIZE = 512


@dataclass(frozen=True)
class RatioEstimate:
    snp_id: str
    beta_j: float
    se_j: float


def ratio_estimate(record: SnpRecord, second_order: bool = False) -> RatioEstimate:
    """Single-variant Wald ratio ``big_gamma_hat / gamma_hat``.

    The standard error is the first-order delta-method value
    ``se_big_gamma / |gamma_hat|``. With ``second_order=True`` (and a known
    ``se_gamma``) the exposure-side term ``Gamma^2 se_gamma^2 / gamma^4`` is
    added under the square root.
    """
    g = record.gamma_hat
    if g == 0:
        raise NullInstrument(f"null instrument: {record.snp_id} has gamma_hat = 0")
    beta = record.big_gamma_hat / g
    var = (record.se_big_gamma / g) ** 2
    if second_order and record.se_gamma is not None:
        var += record.big_gamma_hat**2 * record.se_gamma**2 / g**4
    return RatioEstimate(record.snp_id, beta, math.sqrt(var))


def _usable(data: SummaryDataset):
    g = data.gamma_hat
    keep = g != 0
    return (
        g[keep],
        data.big_gamma_hat[keep],
        data.se_big_gamma[keep],
        [i for i, k in zip(data.ids, keep) if k],
    )


def _ivw_core(g, G, sG):
    w = g**2 / sG**2
    denom = w.sum()
    if denom == 0:
        raise ZeroDenominator("zero denominator: every gamma_hat is zero")
    beta = float(np.sum(G * g / sG**2) / denom)
    return beta, 1.0 / math.sqrt(denom), w


def ivw_estimate(
    data: SummaryDataset, random_effects: bool = False, alpha: float = 0.05
) -> EstimateResult:
    """Fixed-effect inverse-variance weighted estimate.

    ``random_effects=True`` multiplies the standard error by
    ``max(1, sqrt(Q / (p - 1)))`` with Cochran's Q over the ratio estimates.
    The same formula serves one- and two-sample inputs; the design label is
    carried into the diagnostics.
    """
    if len(data) == 0:
        raise InsufficientInstruments("insufficient instruments: empty dataset")
    g, G, sG = data.gamma_hat, data.big_gamma_hat, data.se_big_gamma
    beta, se, w = _ivw_core(g, G, sG)
    nz = g != 0
    q = float(np.sum(w[nz] * (G[nz] / g[nz] - beta) ** 2))
    p = int(nz.sum())
    scale = 1.0
    if random_effects and p > 1:
        scale = max(1.0, math.sqrt(q / (p - 1)))
    return EstimateResult.wald(
        "IVW-RE" if random_effects else "IVW",
        beta,
        se * scale,
        alpha,
        n_instruments_used=p,
        cochran_q=q,
        design=data.design.value,
    )


def weighted_median(values, weights) -> float:
    """Weighted median with linear interpolation of the cumulative weight.

    Values are sorted (ties by weight); each gets the midpoint position
    ``s_j = cumsum(w)_j - w_j / 2`` of its normalized weight, and the result
    interpolates linearly between the two values whose positions straddle 0.5.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    # ties in value are ordered by weight, so input order never matters
    order = np.lexsort((weights, values))
    v = values[order]
    w = weights[order] / weights.sum()
    s = np.cumsum(w) - w / 2
    if s[0] >= 0.5:
        return float(v[0])
    if s[-1] < 0.5:
        return float(v[-1])
    k = int(np.searchsorted(s, 0.5, side="left"))  # s[k-1] < 0.5 <= s[k]
    return float(v[k - 1] + (v[k] - v[k - 1]) * (0.5 - s[k - 1]) / (s[k] - s[k - 1]))


def _bootstrap_se(stat, arrays, n_boot: int, seed: int) -> float:
    p = arrays[0].size
    draws = np.empty(n_boot)
    for b in range(n_boot):
        idx = np.random.default_rng([seed, b]).integers(0, p, size=p)
        draws[b] = stat(*(a[idx] for a in arrays))
    return float(draws.std(ddof=1)) if n_boot > 1 else 0.0


def _resolve_seed(seed: int | None) -> int:
    if seed is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    return int(seed)


def weighted_median_estimate(
    data: SummaryDataset,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int | None = None,
    alpha: float = 0.05,
    min_instruments: int = 3,
) -> EstimateResult:
    """Weighted median of the ratio estimates; bootstrap SE over variants."""
    g, G, sG, _ = _usable(data)
    if g.size < max(1, min_instruments):
        raise InsufficientInstruments(
            f"insufficient instruments: {g.size} usable variants, need {min_instruments}"
        )
    seed = _resolve_seed(seed)

    def stat(g, G, sG):
        return weighted_median(G / g, g**2 / sG**2)

    beta = stat(g, G, sG)
    se = _bootstrap_se(stat, (g, G, sG), n_boot, seed) if g.size > 1 else float(sG[0] / abs(g[0]))
    return EstimateResult.wald(
        "WeightedMedian", beta, se, alpha, n_instruments_used=int(g.size), seed=seed, n_boot=n_boot
    )


def _weighted_sd(x, w) -> float:
    w = w / w.sum()
    m = np.sum(w * x)
    return float(math.sqrt(max(0.0, np.sum(w * (x - m) ** 2))))


def mode_bandwidth(values, weights, factor: float = 1.0) -> float:
    """Silverman-type bandwidth ``0.9 * min(sd, 1.4826 * MAD) * p**(-1/5)``
    on the weighted sample, times ``factor``."""
    x = np.asarray(values, float)
    w = np.asarray(weights, float)
    sd = _weighted_sd(x, w)
    med = weighted_median(x, w)
    mad = 1.4826 * weighted_median(np.abs(x - med), w)
    return factor * 0.9 * min(sd, mad) * x.size ** (-0.2)


def kde_mode(values, weights, bandwidth: float, grid_size: int = MODE_GRID_SIZE) -> float:
    """Argmax of a weighted Gaussian kernel density on an evenly spaced grid
    over ``[min - 3h, max + 3h]``. Ties (within 1e-12 relative) resolve to the
    smallest grid point.

    A zero bandwidth is the point-mass limit: the value carrying the largest
    total weight wins, smallest value on ties.
    """
    x = np.asarray(values, float)
    w = np.asarray(weights, float)
    w = w / w.sum()
    if bandwidth <= 0:
        atoms, inverse = np.unique(x, return_inverse=True)
        mass = np.bincount(inverse, weights=w)
        best = mass.max()
        return float(atoms[np.flatnonzero(mass >= best * (1 - 1e-12))[0]])
    grid = np.linspace(x.min() - 3 * bandwidth, x.max() + 3 * bandwidth, grid_size)
    # log scale: a bandwidth far below the grid spacing would underflow to 0
    u = (grid[:, None] - x[None, :]) / bandwidth
    with np.errstate(over="ignore"):
        log_dens = special.logsumexp(-0.5 * u * u, b=w[None, :], axis=1)
    top = log_dens.max()
    return float(grid[np.flatnonzero(log_dens >= top + math.log1p(-1e-12))[0]])


def mode_based_estimate(
    data: SummaryDataset,
    bandwidth_factor: float = 1.0,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int | None = None,
    alpha: float = 0.05,
    min_instruments: int = 3,
) -> EstimateResult:
    """Mode of the weighted kernel density of the ratio estimates."""
    if not bandwidth_factor > 0:
        raise ValueError("bandwidth_factor must be positive")
    g, G, sG, _ = _usable(data)
    if g.size < max(1, min_instruments):
        raise InsufficientInstruments(
            f"insufficient instruments: {g.size} usable variants, need {min_instruments}"
        )
    ratios = G / g
    if np.all(ratios == ratios[0]):
        return EstimateResult.wald(
            "Mode", float(ratios[0]), 0.0, alpha, n_instruments_used=int(g.size), bandwidth=0.0
        )
    seed = _resolve_seed(seed)

    def stat(g, G, sG):
        b, w = G / g, g**2 / sG**2
        return kde_mode(b, w, mode_bandwidth(b, w, bandwidth_factor))

    weights = g**2 / sG**2
    h = mode_bandwidth(ratios, weights, bandwidth_factor)
    beta = kde_mode(ratios, weights, h)
    se = _bootstrap_se(stat, (g, G, sG), n_boot, seed)
    return EstimateResult.wald(
        "Mode",
        beta,
        se,
        alpha,
        n_instruments_used=int(g.size),
        bandwidth=h,
        seed=seed,
        n_boot=n_boot,
    )


def egger_estimate(data: SummaryDataset, alpha: float = 0.05) -> EstimateResult:
    """Weighted regression of outcome on exposure associations with intercept.

    Variants are first oriented so every ``gamma_hat >= 0``. Weights are
    ``1 / se_big_gamma**2``. The slope is the causal estimate; the intercept
    (in ``diagnostics``) estimates the average directional pleiotropy.
    Standard errors are scaled by ``max(1, residual standard error)``.
    """
    if len(data) < 3:
        raise InsufficientInstruments(f"insufficient instruments: {len(data)} variants, need 3")
    g, G, sG = data.gamma_hat, data.big_gamma_hat, data.se_big_gamma
    sign = np.where(g < 0, -1.0, 1.0)
    g, G = g * sign, G * sign
    if np.ptp(g) <= 1e-12 * max(1.0, float(np.abs(g).max())):
        raise NoStrengthSpread("no strength spread: all |gamma_hat| are equal")
    sw = 1.0 / sG
    X = np.column_stack([np.ones_like(g), g]) * sw[:, None]
    yw = G * sw
    coef, *_ = np.linalg.lstsq(X, yw, rcond=None)
    resid = yw - X @ coef
    df = g.size - 2
    sigma = math.sqrt(float(resid @ resid) / df) if df > 0 else 1.0
    _, r = np.linalg.qr(X)
    rinv = np.linalg.solve(r, np.eye(2))
    cov = rinv @ rinv.T * max(1.0, sigma) ** 2
    se_int, se_slope = np.sqrt(np.diag(cov))
    z = stats.norm.ppf(1 - alpha / 2)
    intercept = float(coef[0])
    return EstimateResult.wald(
        "Egger",
        float(coef[1]),
        float(se_slope),
        alpha,
        n_instruments_used=int(g.size),
        intercept=intercept,
        intercept_se=float(se_int),
        intercept_ci=(intercept - z * se_int, intercept + z * se_int),
        residual_se=sigma,
    )
