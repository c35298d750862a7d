"""Shared data model: summary statistics, individual-level data, ALICE-model
parameters, finite causal populations and estimation results.

All containers are frozen dataclasses. Array fields are stored as read-only
float64 copies so a constructed object can be shared freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from numbers import Real
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ConfigError

PALINDROMIC_PAIRS = frozenset({("A", "T"), ("T", "A"), ("C", "G"), ("G", "C")})


class Design(str, Enum):
    ONE_SAMPLE = "OneSample"
    TWO_SAMPLE = "TwoSample"


def _frozen_array(x, ndim: int | None = None) -> np.ndarray:
    arr = np.array(x, dtype=float, copy=True)
    if ndim is not None and arr.ndim != ndim:
        if ndim == 2 and arr.ndim == 1:
            arr = arr[:, None]
        else:
            raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _opt_float(x):
    return None if x is None else float(x)


# ---------------------------------------------------------------------------
# Summary-level data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SnpRecord:
    """Per-variant association estimates.

    ``gamma_hat``/``se_gamma`` describe the variant-exposure association and
    ``big_gamma_hat``/``se_big_gamma`` the variant-outcome association, both
    per copy of ``effect_allele``. ``se_gamma`` may be ``None`` when the
    exposure GWAS did not export it; methods needing it refuse to run.
    """

    snp_id: str
    effect_allele: str
    other_allele: str
    gamma_hat: float
    se_gamma: float | None
    big_gamma_hat: float
    se_big_gamma: float
    pval_exposure: float | None = None
    eaf: float | None = None
    chrom: str | None = None
    pos: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "effect_allele", str(self.effect_allele).upper())
        object.__setattr__(self, "other_allele", str(self.other_allele).upper())
        object.__setattr__(self, "gamma_hat", float(self.gamma_hat))
        object.__setattr__(self, "big_gamma_hat", float(self.big_gamma_hat))
        object.__setattr__(self, "se_big_gamma", float(self.se_big_gamma))
        object.__setattr__(self, "se_gamma", _opt_float(self.se_gamma))
        object.__setattr__(self, "pval_exposure", _opt_float(self.pval_exposure))
        object.__setattr__(self, "eaf", _opt_float(self.eaf))

    @property
    def is_palindromic(self) -> bool:
        return (self.effect_allele, self.other_allele) in PALINDROMIC_PAIRS

    def to_dict(self) -> dict:
        return {
            "snp_id": self.snp_id,
            "effect_allele": self.effect_allele,
            "other_allele": self.other_allele,
            "gamma_hat": self.gamma_hat,
            "se_gamma": self.se_gamma,
            "big_gamma_hat": self.big_gamma_hat,
            "se_big_gamma": self.se_big_gamma,
            "pval_exposure": self.pval_exposure,
            "eaf": self.eaf,
            "chrom": self.chrom,
            "pos": self.pos,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SnpRecord":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class SummaryDataset:
    records: tuple[SnpRecord, ...]
    design: Design = Design.TWO_SAMPLE
    n_exposure: int | None = None
    n_outcome: int | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "design", Design(self.design))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SnpRecord]:
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.snp_id for r in self.records]

    def _column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    @property
    def gamma_hat(self) -> np.ndarray:
        return self._column("gamma_hat")

    @property
    def se_gamma(self) -> np.ndarray:
        return self._column("se_gamma")

    @property
    def big_gamma_hat(self) -> np.ndarray:
        return self._column("big_gamma_hat")

    @property
    def se_big_gamma(self) -> np.ndarray:
        return self._column("se_big_gamma")

    @property
    def pval_exposure(self) -> np.ndarray:
        return self._column("pval_exposure")

    @property
    def has_exposure_se(self) -> bool:
        return all(r.se_gamma is not None for r in self.records)

    def filter(self, keep: Callable[[SnpRecord], bool]) -> "SummaryDataset":
        return replace(self, records=tuple(r for r in self.records if keep(r)))

    def subset(self, ids: Iterable[str]) -> "SummaryDataset":
        wanted = set(ids)
        return self.filter(lambda r: r.snp_id in wanted)

    def with_records(self, records: Iterable[SnpRecord]) -> "SummaryDataset":
        return replace(self, records=tuple(records))

    @classmethod
    def from_arrays(
        cls,
        gamma_hat,
        se_gamma,
        big_gamma_hat,
        se_big_gamma,
        pval_exposure=None,
        ids: Sequence[str] | None = None,
        design: Design | str = Design.TWO_SAMPLE,
        n_exposure: int | None = None,
        n_outcome: int | None = None,
    ) -> "SummaryDataset":
        """Build a dataset from parallel arrays; alleles are set to A/C placeholders."""
        g = np.atleast_1d(np.asarray(gamma_hat, dtype=float))
        p = g.size
        sg = [None] * p if se_gamma is None else np.broadcast_to(np.asarray(se_gamma, float), (p,))
        G = np.broadcast_to(np.asarray(big_gamma_hat, float), (p,))
        sG = np.broadcast_to(np.asarray(se_big_gamma, float), (p,))
        pv = [None] * p if pval_exposure is None else np.broadcast_to(np.asarray(pval_exposure, float), (p,))
        ids = list(ids) if ids is not None else [f"snp{j + 1}" for j in range(p)]
        records = [
            SnpRecord(ids[j], "A", "C", g[j], sg[j], G[j], sG[j], pv[j]) for j in range(p)
        ]
        return cls(tuple(records), Design(design), n_exposure, n_outcome)

    def to_dict(self) -> dict:
        return {
            "design": self.design.value,
            "n_exposure": self.n_exposure,
            "n_outcome": self.n_outcome,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SummaryDataset":
        return cls(
            tuple(SnpRecord.from_dict(r) for r in d["records"]),
            Design(d.get("design", Design.TWO_SAMPLE)),
            d.get("n_exposure"),
            d.get("n_outcome"),
        )


# ---------------------------------------------------------------------------
# Individual-level data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IndividualDataset:
    outcome: np.ndarray
    exposure: np.ndarray
    instruments: np.ndarray
    standardized: bool = False
    instrument_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "outcome", _frozen_array(self.outcome, 1))
        object.__setattr__(self, "exposure", _frozen_array(self.exposure, 1))
        object.__setattr__(self, "instruments", _frozen_array(self.instruments, 2))
        if self.instrument_ids is not None:
            object.__setattr__(self, "instrument_ids", tuple(str(i) for i in self.instrument_ids))

    @property
    def n(self) -> int:
        return self.outcome.shape[0]

    @property
    def p(self) -> int:
        return self.instruments.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        if self.instrument_ids is not None:
            return self.instrument_ids
        return tuple(f"Z{j + 1}" for j in range(self.p))

    def standardize(self) -> "IndividualDataset":
        """Center and scale every instrument column to sample mean 0, variance 1 (ddof=0)."""
        Z = self.instruments - self.instruments.mean(axis=0)
        sd = Z.std(axis=0)
        if np.any(sd == 0):
            raise ValueError("cannot standardize a constant instrument column")
        return replace(self, instruments=Z / sd, standardized=True)

    def __eq__(self, other):
        if not isinstance(other, IndividualDataset):
            return NotImplemented
        return (
            self.standardized == other.standardized
            and self.instrument_ids == other.instrument_ids
            and np.array_equal(self.outcome, other.outcome)
            and np.array_equal(self.exposure, other.exposure)
            and np.array_equal(self.instruments, other.instruments)
        )

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.tolist(),
            "exposure": self.exposure.tolist(),
            "instruments": self.instruments.tolist(),
            "standardized": self.standardized,
            "instrument_ids": None if self.instrument_ids is None else list(self.instrument_ids),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "IndividualDataset":
        ids = d.get("instrument_ids")
        return cls(
            d["outcome"],
            d["exposure"],
            np.array(d["instruments"], dtype=float).reshape(len(d["outcome"]), -1),
            bool(d.get("standardized", False)),
            None if ids is None else tuple(ids),
        )


# ---------------------------------------------------------------------------
# ALICE model configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AliceConfig:
    """Ground-truth parameters of the additive linear constant-effects model.

    Exposure ``D = Z @ gamma + delta`` and outcome ``Y = beta * D + Z @ pi + eps``
    with ``pi = psi + phi``; ``(delta, eps)`` is bivariate normal with standard
    deviations ``sigma_delta``, ``sigma_eps`` and covariance ``sigma_delta_eps``.
    ``instrument_maf=None`` draws standard-normal instruments; otherwise each
    column is a centered and scaled Binomial(2, maf) genotype.
    """

    beta: float
    gamma: np.ndarray
    psi: np.ndarray | None = None
    phi: np.ndarray | None = None
    sigma_delta: float = 1.0
    sigma_eps: float = 1.0
    sigma_delta_eps: float = 0.0
    n1: int = 1000
    n2: int = 1000
    instrument_maf: np.ndarray | None = None

    def __post_init__(self):
        gamma = _frozen_array(np.atleast_1d(self.gamma), 1)
        p = gamma.size
        object.__setattr__(self, "gamma", gamma)
        for name in ("psi", "phi"):
            val = getattr(self, name)
            arr = np.zeros(p) if val is None else np.atleast_1d(np.asarray(val, float))
            if arr.shape != (p,):
                raise ConfigError(f"{name} must have length {p}, got {arr.shape}")
            object.__setattr__(self, name, _frozen_array(arr, 1))
        object.__setattr__(self, "beta", float(self.beta))
        for name in ("sigma_delta", "sigma_eps", "sigma_delta_eps"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if p < 1:
            raise ConfigError("at least one instrument is required")
        if not (self.sigma_delta > 0 and self.sigma_eps > 0):
            raise ConfigError("sigma_delta and sigma_eps must be positive")
        if abs(self.sigma_delta_eps) > self.sigma_delta * self.sigma_eps:
            raise ConfigError(
                "invalid error covariance: |sigma_delta_eps| exceeds sigma_delta*sigma_eps"
            )
        if int(self.n1) < 1 or int(self.n2) < 0:
            raise ConfigError("sample sizes must be positive")
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))
        if self.instrument_maf is not None:
            maf = np.broadcast_to(np.asarray(self.instrument_maf, float), (p,))
            if np.any(maf <= 0) or np.any(maf > 0.5):
                raise ConfigError("instrument_maf must lie in (0, 0.5]")
            object.__setattr__(self, "instrument_maf", _frozen_array(maf, 1))

    @classmethod
    def equal_strength(
        cls, p: int, gamma_norm2: float, beta: float = 1.0, **kwargs
    ) -> "AliceConfig":
        """Config whose ``p`` instruments share ``||gamma||^2 = gamma_norm2`` equally."""
        return cls(beta=beta, gamma=np.full(p, math.sqrt(gamma_norm2 / p)), **kwargs)

    @property
    def p(self) -> int:
        return self.gamma.size

    @property
    def pi(self) -> np.ndarray:
        return self.psi + self.phi

    @property
    def big_gamma(self) -> np.ndarray:
        return self.beta * self.gamma + self.pi

    @property
    def gamma_norm2(self) -> float:
        return float(self.gamma @ self.gamma)

    @property
    def error_cov(self) -> np.ndarray:
        return np.array(
            [
                [self.sigma_delta**2, self.sigma_delta_eps],
                [self.sigma_delta_eps, self.sigma_eps**2],
            ]
        )

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma.tolist(),
            "psi": self.psi.tolist(),
            "phi": self.phi.tolist(),
            "sigma_delta": self.sigma_delta,
            "sigma_eps": self.sigma_eps,
            "sigma_delta_eps": self.sigma_delta_eps,
            "n1": self.n1,
            "n2": self.n2,
            "instrument_maf": None if self.instrument_maf is None else self.instrument_maf.tolist(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AliceConfig":
        d = dict(d)
        if "gamma" not in d:
            if "p" not in d or "gamma_norm2" not in d:
                raise ConfigError("alice config needs 'gamma' or both 'p' and 'gamma_norm2'")
            p = int(d.pop("p"))
            d["gamma"] = np.full(p, math.sqrt(float(d.pop("gamma_norm2")) / p))
        else:
            d.pop("p", None)
            d.pop("gamma_norm2", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown alice config keys: {sorted(unknown)}")
        return cls(**d)

    def __eq__(self, other):
        if not isinstance(other, AliceConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()


# ---------------------------------------------------------------------------
# Finite causal populations (binary instrument, binary treatment)
# ---------------------------------------------------------------------------


def _as_number(x):
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (Fraction, int)):
        return x
    if isinstance(x, Real):
        return float(x)
    raise TypeError(f"not a number: {x!r}")


@dataclass(frozen=True)
class Unit:
    """One latent subject type with probability mass ``weight``.

    ``d_of_z[z]`` is the treatment taken under instrument level ``z``;
    ``y_of_zd[(z, d)]`` the potential outcome. ``z_prob`` is P(Z=1) for this
    unit, so a ``z_prob`` that varies with ``u`` or with the potential
    outcomes encodes a violated independence assumption.
    """

    weight: Any
    d_of_z: Mapping[int, int]
    y_of_zd: Mapping[tuple[int, int], Any]
    u: Any = None
    z_prob: Any = Fraction(1, 2)

    @classmethod
    def make(cls, weight, d, y, u=None, z_prob=Fraction(1, 2)) -> "Unit":
        """Shorthand: ``d=(D(0), D(1))``; ``y=(Y(0), Y(1))`` under exclusion or
        ``y=(Y(0,0), Y(0,1), Y(1,0), Y(1,1))``."""
        d0, d1 = d
        if len(y) == 2:
            y = (y[0], y[1], y[0], y[1])
        y00, y01, y10, y11 = y
        return cls(
            _as_number(weight),
            {0: int(d0), 1: int(d1)},
            {(0, 0): _as_number(y00), (0, 1): _as_number(y01), (1, 0): _as_number(y10), (1, 1): _as_number(y11)},
            u,
            _as_number(z_prob),
        )

    @property
    def compliance(self) -> str:
        return COMPLIANCE_TYPES[(self.d_of_z.get(0), self.d_of_z.get(1))]

    def to_dict(self) -> dict:
        y = self.y_of_zd
        return {
            "weight": _num_to_json(self.weight),
            "d": [self.d_of_z.get(0), self.d_of_z.get(1)],
            "y": {f"{z}{d}": _num_to_json(y.get((z, d))) for z in (0, 1) for d in (0, 1)},
            "u": self.u,
            "z_prob": _num_to_json(self.z_prob),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Unit":
        y = d["y"]
        if isinstance(y, Mapping):
            y = (y["00"], y["01"], y["10"], y["11"])
        return cls.make(d["weight"], d["d"], y, d.get("u"), d.get("z_prob", "1/2"))


COMPLIANCE_TYPES = {
    (0, 1): "complier",
    (1, 1): "always_taker",
    (0, 0): "never_taker",
    (1, 0): "defier",
}


def _num_to_json(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else x.numerator
    return x


@dataclass(frozen=True)
class CausalPopulation:
    units: tuple[Unit, ...]

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))

    def __len__(self) -> int:
        return len(self.units)

    @property
    def has_confounder_labels(self) -> bool:
        return bool(self.units) and all(u.u is not None for u in self.units)

    def to_dict(self) -> dict:
        return {"units": [u.to_dict() for u in self.units]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CausalPopulation":
        return cls(tuple(Unit.from_dict(u) for u in d["units"]))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateResult:
    method: str
    beta_hat: float
    se: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    diagnostics: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def wald(cls, method: str, beta_hat: float, se: float | None, alpha: float = 0.05, **diagnostics):
        """Result with a symmetric normal-theory interval at level ``1 - alpha``."""
        from scipy.stats import norm

        if se is None or not np.isfinite(se):
            return cls(method, float(beta_hat), se, None, None, diagnostics)
        z = float(norm.ppf(1 - alpha / 2))
        return cls(
            method, float(beta_hat), float(se), beta_hat - z * se, beta_hat + z * se, diagnostics
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "beta_hat": self.beta_hat,
            "se": self.se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "diagnostics": jsonable(dict(self.diagnostics)),
        }


def jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return _num_to_json(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _validate_record(r: SnpRecord) -> list[str]:
    out = []
    if r.se_gamma is not None and not r.se_gamma > 0:
        out.append(f"nonpositive SE: {r.snp_id} se_gamma={r.se_gamma}")
    if not r.se_big_gamma > 0:
        out.append(f"nonpositive SE: {r.snp_id} se_big_gamma={r.se_big_gamma}")
    if r.pval_exposure is not None and not 0.0 <= r.pval_exposure <= 1.0:
        out.append(f"pval out of range: {r.snp_id} pval_exposure={r.pval_exposure}")
    if r.effect_allele == r.other_allele:
        out.append(f"identical alleles: {r.snp_id} {r.effect_allele}/{r.other_allele}")
    if r.eaf is not None and not 0.0 < r.eaf < 1.0:
        out.append(f"eaf out of range: {r.snp_id} eaf={r.eaf}")
    for name in ("gamma_hat", "big_gamma_hat"):
        if not math.isfinite(getattr(r, name)):
            out.append(f"non-finite estimate: {r.snp_id} {name}")
    return out


def _validate_summary(ds: SummaryDataset) -> list[str]:
    out = []
    seen = set()
    for r in ds.records:
        if r.snp_id in seen:
            out.append(f"duplicate id: {r.snp_id}")
        seen.add(r.snp_id)
        out.extend(_validate_record(r))
    for name in ("n_exposure", "n_outcome"):
        n = getattr(ds, name)
        if n is not None and n < 1:
            out.append(f"nonpositive sample size: {name}={n}")
    if ds.design is Design.ONE_SAMPLE and None not in (ds.n_exposure, ds.n_outcome):
        if ds.n_exposure != ds.n_outcome:
            out.append("one-sample design with different exposure/outcome sample sizes")
    return out


def _validate_individual(ds: IndividualDataset) -> list[str]:
    out = []
    n = ds.outcome.shape[0]
    if ds.exposure.shape[0] != n or ds.instruments.shape[0] != n:
        out.append(
            f"length mismatch: outcome {n}, exposure {ds.exposure.shape[0]}, "
            f"instruments {ds.instruments.shape[0]}"
        )
    if ds.instruments.ndim != 2 or ds.instruments.shape[1] < 1:
        out.append("instrument matrix needs at least one column")
    if ds.instrument_ids is not None and len(ds.instrument_ids) != ds.instruments.shape[1]:
        out.append("instrument_ids length does not match instrument columns")
    if not out and ds.standardized and n > 0:
        means = ds.instruments.mean(axis=0)
        variances = ds.instruments.var(axis=0)
        if np.any(np.abs(means) > 1e-8):
            out.append("standardized flag set but a column mean differs from 0 by more than 1e-8")
        if np.any(np.abs(variances - 1) > 1e-6):
            out.append("standardized flag set but a column variance differs from 1 by more than 1e-6")
    for name in ("outcome", "exposure", "instruments"):
        if not np.all(np.isfinite(getattr(ds, name))):
            out.append(f"non-finite values in {name}")
    return out


def _validate_population(pop: CausalPopulation) -> list[str]:
    out = []
    if not pop.units:
        return ["empty population"]
    total = 0
    for i, unit in enumerate(pop.units):
        if unit.weight < 0:
            out.append(f"negative weight: unit {i}")
        total = total + unit.weight
        if set(unit.d_of_z) != {0, 1} or any(v not in (0, 1) for v in unit.d_of_z.values()):
            out.append(f"incomplete treatment table: unit {i}")
        if set(unit.y_of_zd) != {(0, 0), (0, 1), (1, 0), (1, 1)} or any(
            v is None for v in unit.y_of_zd.values()
        ):
            out.append(f"incomplete outcome table: unit {i}")
        if not 0 <= unit.z_prob <= 1:
            out.append(f"z_prob out of range: unit {i}")
    exact = all(isinstance(u.weight, (int, Fraction)) for u in pop.units)
    if (total != 1) if exact else abs(float(total) - 1.0) > 1e-12:
        out.append(f"weights sum to {total}, not 1")
    return out


def validate(obj) -> list[str]:
    """Return invariant violations of a dataset; an empty list means valid."""
    if isinstance(obj, SnpRecord):
        return _validate_record(obj)
    if isinstance(obj, SummaryDataset):
        return _validate_summary(obj)
    if isinstance(obj, IndividualDataset):
        return _validate_individual(obj)
    if isinstance(obj, CausalPopulation):
        return _validate_population(obj)
    raise TypeError(f"cannot validate {type(obj).__name__}")
