"""Data generation under the linear constant-effects model and a Monte Carlo
engine comparing one- and two-sample estimators against their large-sample
bias approximations.

Estimator tags
--------------
``OLS``
    Confounded regression of Y on D in sample 1.
``TSLS_1S``
    Two-stage least squares in sample 1.
``IVW_1S``
    IVW on marginal associations, both sides from sample 1.
``SSIV_2S``
    Split-sample IV: first stage in sample 1, second stage in sample 2.
``IVW_2S``
    IVW with exposure associations from sample 1 and outcome associations
    from sample 2.

Replicate ``r`` of an experiment with master seed ``s`` draws sample ``k``
from ``numpy.random.default_rng([s, r, k])``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._parallel import pmap
from .errors import ConfigError, FormulaPreconditionError, MRError
from .individual import (
    marginal_associations,
    ols_estimate,
    ssiv_estimate,
    tsls_estimate,
    two_sample_marginals,
)
from .summary import ivw_estimate
from .types import AliceConfig, IndividualDataset, SummaryDataset

ESTIMATOR_TAGS = ("OLS", "TSLS_1S", "IVW_1S", "SSIV_2S", "IVW_2S")
TWO_SAMPLE_TAGS = frozenset({"SSIV_2S", "IVW_2S"})
# tags whose formula is a bias (compared with a relative tolerance) rather than
# an expectation (compared in MC standard errors only)
_BIAS_TAGS = frozenset({"OLS", "TSLS_1S", "IVW_1S"})
WEAK_SIGNAL_THRESHOLD = 10.0
UNSTABLE_FAILURE_RATE = 0.10


def _seed_list(seed) -> list[int]:
    return [int(s) for s in np.atleast_1d(np.asarray(seed, dtype=np.int64))]


def _error_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        # singular but valid covariance (perfectly correlated errors)
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


def generate_alice(
    config: AliceConfig, sample_index: int = 1, seed=0, n: int | None = None
) -> IndividualDataset:
    """One individual-level sample from the model.

    Instruments are standard normal, or Binomial(2, maf) genotypes centered
    and scaled by their population mean ``2 maf`` and sd
    ``sqrt(2 maf (1 - maf))``. The draw is a pure function of
    ``(seed, sample_index)``; ``seed`` may be an int or a sequence of ints.
    """
    if sample_index not in (1, 2):
        raise ConfigError("sample_index must be 1 or 2")
    if n is None:
        n = config.n1 if sample_index == 1 else config.n2
    if n < 2:
        raise ConfigError(f"sample {sample_index} needs at least 2 observations")
    rng = np.random.default_rng(_seed_list(seed) + [sample_index])
    p = config.p
    if config.instrument_maf is None:
        Z = rng.standard_normal((n, p))
    else:
        maf = config.instrument_maf
        Z = (rng.binomial(2, maf, size=(n, p)) - 2 * maf) / np.sqrt(2 * maf * (1 - maf))
    err = rng.standard_normal((n, 2)) @ _error_factor(config.error_cov).T
    D = Z @ config.gamma + err[:, 0]
    Y = config.beta * D + Z @ config.pi + err[:, 1]
    return IndividualDataset(Y, D, Z)


def simulate_two_sample_summary(config: AliceConfig, seed=0) -> SummaryDataset:
    """Exposure associations from sample 1, outcome associations from sample 2."""
    return two_sample_marginals(generate_alice(config, 1, seed), generate_alice(config, 2, seed))


def _require_valid(config: AliceConfig) -> None:
    if np.any(config.pi != 0):
        raise FormulaPreconditionError(
            "formula precondition violated: approximations assume pi = 0"
        )


def _residual_variance(config: AliceConfig) -> float:
    b = config.beta
    return b * b * config.sigma_delta**2 + 2 * b * config.sigma_delta_eps + config.sigma_eps**2


def approx_association_variances(config: AliceConfig, n: int):
    """Large-sample variances of the marginal association estimates.

    With standardized instruments the marginal regression of D on ``Z_j``
    leaves ``||gamma||^2 - gamma_j^2 + sigma_delta^2`` as residual variance,
    and the regression of Y leaves ``||Gamma||^2 - Gamma_j^2 + Var(e)`` with
    ``e = beta delta + eps``. Each is divided by ``n``.
    """
    g, G = config.gamma, config.big_gamma
    var_g = (g @ g - g**2 + config.sigma_delta**2) / n
    var_G = (G @ G - G**2 + _residual_variance(config)) / n
    return var_g, var_G


def theoretical_mean(config: AliceConfig, tag: str) -> float:
    """Large-sample approximation of ``E[beta_hat]`` for an estimator tag."""
    _require_valid(config)
    b, p = config.beta, config.p
    g2, sd2, sde = config.gamma_norm2, config.sigma_delta**2, config.sigma_delta_eps
    n1 = config.n1
    if tag == "OLS":
        return b + sde / (g2 + sd2)
    if tag == "TSLS_1S":
        return b + sde / (n1 * g2 / p + sd2)
    if tag == "IVW_1S":
        var_g, var_G = approx_association_variances(config, n1)
        num = np.sum(1.0 / var_G)
        den = np.sum((config.gamma**2 + var_g) / var_G)
        return b + float(sde / n1 * num / den)
    if tag == "SSIV_2S":
        return b * g2 / (g2 + p * sd2 / n1)
    if tag == "IVW_2S":
        if config.n2 < 1:
            raise ConfigError("two-sample formulas need n2 > 0")
        var_g1, _ = approx_association_variances(config, n1)
        _, var_G2 = approx_association_variances(config, config.n2)
        g = config.gamma
        return float(b * np.sum(g**2 / var_G2) / np.sum((g**2 + var_g1) / var_G2))
    raise ConfigError(f"unknown estimator tag: {tag}")


def theoretical_bias(config: AliceConfig, tag: str) -> float:
    """``theoretical_mean(config, tag) - beta``."""
    return theoretical_mean(config, tag) - config.beta


def concentration_per_instrument(config: AliceConfig) -> float:
    """``n ||gamma||^2 / (p sigma_delta^2)`` for sample 1."""
    return config.n1 * config.gamma_norm2 / (config.p * config.sigma_delta**2)


def is_weak(config: AliceConfig, threshold: float = WEAK_SIGNAL_THRESHOLD) -> bool:
    """Strictly below ``threshold``; a value equal to it up to rounding is not weak."""
    c = concentration_per_instrument(config)
    return c < threshold and not math.isclose(c, threshold, rel_tol=1e-9)


@dataclass(frozen=True)
class BiasExperimentConfig:
    alice: AliceConfig
    estimators: tuple[str, ...] = ESTIMATOR_TAGS
    replicates: int = 1000
    seed: int = 0
    relative_tolerance: float = 0.20

    def __post_init__(self):
        tags = tuple(self.estimators)
        object.__setattr__(self, "estimators", tags)
        bad = [t for t in tags if t not in ESTIMATOR_TAGS]
        if bad:
            raise ConfigError(f"unknown estimator tag(s): {bad}")
        if not tags:
            raise ConfigError("at least one estimator is required")
        if int(self.replicates) < 2:
            raise ConfigError("replicates must be at least 2")
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "seed", int(self.seed))
        if TWO_SAMPLE_TAGS & set(tags) and self.alice.n2 < 2:
            raise ConfigError("two-sample estimators need n2 >= 2")

    def to_dict(self) -> dict:
        return {
            "alice": self.alice.to_dict(),
            "estimators": list(self.estimators),
            "replicates": self.replicates,
            "seed": self.seed,
            "relative_tolerance": self.relative_tolerance,
        }

    @classmethod
    def from_dict(cls, d) -> "BiasExperimentConfig":
        d = dict(d)
        if "alice" not in d:
            raise ConfigError("experiment config needs an 'alice' table")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        d["alice"] = AliceConfig.from_dict(d["alice"])
        if "estimators" in d:
            d["estimators"] = tuple(d["estimators"])
        return cls(**d)


@dataclass(frozen=True)
class BiasRow:
    estimator: str
    beta: float
    mean: float
    mc_se: float
    predicted_mean: float | None
    predicted_bias: float | None
    n_ok: int
    n_failed: int
    passed: bool | None

    @property
    def bias(self) -> float:
        return self.mean - self.beta

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "beta": self.beta,
            "mean": self.mean,
            "bias": self.bias,
            "mc_se": self.mc_se,
            "predicted_mean": self.predicted_mean,
            "predicted_bias": self.predicted_bias,
            "n_ok": self.n_ok,
            "n_failed": self.n_failed,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class BiasReport:
    config: BiasExperimentConfig
    rows: tuple[BiasRow, ...]
    unstable: bool
    weak: bool
    estimates: dict = field(default_factory=dict, compare=False, repr=False)

    def row(self, tag: str) -> BiasRow:
        for r in self.rows:
            if r.estimator == tag:
                return r
        raise KeyError(tag)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "weak": self.weak,
            "unstable": self.unstable,
            "rows": [r.to_dict() for r in self.rows],
        }


def _one_replicate(cfg: BiasExperimentConfig, r: int) -> dict[str, float]:
    seed = [cfg.seed, r]
    s1 = generate_alice(cfg.alice, 1, seed)
    s2 = generate_alice(cfg.alice, 2, seed) if TWO_SAMPLE_TAGS & set(cfg.estimators) else None
    out: dict[str, float] = {}
    marg1 = None
    for tag in cfg.estimators:
        try:
            if tag == "OLS":
                v = ols_estimate(s1).beta_hat
            elif tag == "TSLS_1S":
                v = tsls_estimate(s1).beta_hat
            elif tag == "IVW_1S":
                marg1 = marg1 or marginal_associations(s1)
                v = ivw_estimate(marg1).beta_hat
            elif tag == "SSIV_2S":
                v = ssiv_estimate(s1, s2).beta_hat
            else:
                v = ivw_estimate(two_sample_marginals(s1, s2)).beta_hat
        except MRError:
            v = math.nan
        out[tag] = v if math.isfinite(v) else math.nan
    return out


def _mean_and_se(x: np.ndarray) -> tuple[float, float]:
    # numpy's sum is pairwise, so the aggregate does not depend on thread timing
    m = float(np.sum(x) / x.size)
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return m, se


def run_bias_experiment(cfg: BiasExperimentConfig, threads: int | None = None) -> BiasReport:
    """Monte Carlo means of each estimator next to their approximations.

    A row passes when ``|mean - predicted_mean|`` is within three MC standard
    errors, or, for the bias-type tags (OLS, TSLS_1S, IVW_1S), within
    ``relative_tolerance`` of the predicted bias if that is larger. Failed
    replicates are dropped per estimator; more than 10% failures for any
    estimator marks the report unstable. Predictions are omitted when the
    instruments are not all valid.
    """
    reps = pmap(lambda r: _one_replicate(cfg, r), range(cfg.replicates), threads)
    estimates = {t: np.array([d[t] for d in reps]) for t in cfg.estimators}
    rows, unstable = [], False
    for tag in cfg.estimators:
        x = estimates[tag]
        ok = x[np.isfinite(x)]
        failed = x.size - ok.size
        unstable |= failed > UNSTABLE_FAILURE_RATE * x.size
        mean, se = _mean_and_se(ok) if ok.size else (math.nan, math.nan)
        try:
            pm = theoretical_mean(cfg.alice, tag)
            pb = pm - cfg.alice.beta
        except FormulaPreconditionError:
            pm = pb = None
        passed = None
        if pm is not None and ok.size > 1:
            tol = 3 * se
            if tag in _BIAS_TAGS:
                tol = max(tol, cfg.relative_tolerance * abs(pb))
            passed = bool(abs(mean - pm) <= tol)
        rows.append(BiasRow(tag, cfg.alice.beta, mean, se, pm, pb, int(ok.size), int(failed), passed))
    return BiasReport(cfg, tuple(rows), bool(unstable), is_weak(cfg.alice), estimates)


def grid_configs(
    ns: Iterable[int],
    gamma_norm2s: Iterable[float],
    p: int = 10,
    **alice_kwargs,
) -> list[AliceConfig]:
    """Equal-strength configs over a grid of sample sizes and total strengths;
    both samples get the same size."""
    return [
        AliceConfig.equal_strength(p, g2, n1=n, n2=n, **alice_kwargs)
        for n in ns
        for g2 in gamma_norm2s
    ]


def summarize_direction(report: BiasReport, tags: Sequence[str] = ("TSLS_1S", "IVW_1S")) -> dict:
    """Sign of each one-sample estimator's mean bias next to the sign of the
    confounding covariance."""
    s = np.sign(report.config.alice.sigma_delta_eps)
    beta = report.config.alice.beta
    return {t: bool(np.sign(report.row(t).mean - beta) == s) for t in tags}
