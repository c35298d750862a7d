"""Valid-instrument selection by mutual voting and maximum cliques.

Pipeline: LD clumping, relevance screening on the exposure p-value, a
pairwise voting matrix built from the implied pleiotropy of one instrument
under another's ratio estimate, and the maximum clique of that matrix as the
selected valid set. :func:`robust_confidence_interval` repeats the
vote-and-clique step over parametric resamples and unions the resulting
intervals, which accounts for selection uncertainty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from ._parallel import pmap
from .errors import (
    DataError,
    ExposureSERequired,
    MissingLDEntry,
    NoRelevantInstruments,
    NullInstrument,
    NumericError,
    UnstableSelection,
)
from .summary import ivw_estimate
from .types import EstimateResult, SnpRecord, SummaryDataset

GENOME_WIDE_P = 5e-8
DEFAULT_R2 = 0.01
DEFAULT_RESAMPLES = 1000
_VOTE_SLACK = 1e-12


@dataclass(frozen=True)
class LDMatrix:
    """Pairwise correlation (r, not r^2) between variants, keyed by id."""

    ids: tuple[str, ...]
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.shape != (len(self.ids), len(self.ids)):
            raise DataError("LD matrix shape does not match its ids")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate id in LD matrix")
        if not np.allclose(r, r.T, atol=1e-12, equal_nan=True):
            raise DataError("LD matrix is not symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12):
            raise DataError("LD matrix diagonal must be 1")
        r.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.ids)})

    @classmethod
    def identity(cls, ids: Sequence[str]) -> "LDMatrix":
        return cls(tuple(ids), np.eye(len(ids)))

    @classmethod
    def from_pairs(cls, ids: Sequence[str], pairs: Mapping[tuple[str, str], float]) -> "LDMatrix":
        """Build from ``{(a, b): r}``; unlisted off-diagonal pairs are 0."""
        ids = tuple(ids)
        idx = {s: i for i, s in enumerate(ids)}
        r = np.eye(len(ids))
        for (a, b), v in pairs.items():
            if a not in idx or b not in idx:
                raise MissingLDEntry(f"missing LD entry: {a if a not in idx else b}")
            r[idx[a], idx[b]] = r[idx[b], idx[a]] = v
        return cls(ids, r)

    def __contains__(self, snp_id: str) -> bool:
        return snp_id in self._index

    def r2(self, a: str, b: str) -> float:
        return float(self.r[self._index[a], self._index[b]] ** 2)


def _within_window(a: SnpRecord, b: SnpRecord, window: int | None) -> bool:
    if window is None:
        return True
    if a.pos is None or b.pos is None:
        return True
    if a.chrom is not None and b.chrom is not None and a.chrom != b.chrom:
        return False
    return abs(a.pos - b.pos) <= window


def ld_clump(
    data: SummaryDataset,
    ld: LDMatrix,
    r2_threshold: float = DEFAULT_R2,
    window: int | None = None,
) -> SummaryDataset:
    """Greedy clumping by exposure p-value.

    Variants are visited by ascending p-value (missing p-values last, ties by
    id) and kept when ``r^2 < r2_threshold`` with every variant already kept.
    With a ``window`` in base pairs, only pairs on the same chromosome within
    that distance are compared. Output keeps the input record order.
    """
    missing = [s for s in data.ids if s not in ld]
    if missing:
        raise MissingLDEntry(f"missing LD entry: {missing[0]}")
    order = sorted(
        data.records,
        key=lambda r: (math.inf if r.pval_exposure is None else r.pval_exposure, r.snp_id),
    )
    kept: list[SnpRecord] = []
    for rec in order:
        if all(
            ld.r2(rec.snp_id, k.snp_id) < r2_threshold
            for k in kept
            if _within_window(rec, k, window)
        ):
            kept.append(rec)
    keep_ids = {k.snp_id for k in kept}
    return data.filter(lambda r: r.snp_id in keep_ids)


def select_relevant(data: SummaryDataset, p_threshold: float = GENOME_WIDE_P) -> SummaryDataset:
    """Records with ``pval_exposure < p_threshold`` (strict), order preserved.

    Raises :class:`NoRelevantInstruments` carrying the empty dataset when
    nothing passes.
    """
    if any(r.pval_exposure is None for r in data):
        raise DataError("relevance screening needs pval_exposure on every record")
    out = data.filter(lambda r: r.pval_exposure < p_threshold)
    if len(out) == 0:
        raise NoRelevantInstruments(
            f"no relevant instruments at p < {p_threshold:g}", dataset=out
        )
    return out


def default_lambda(p: int) -> float:
    """Vote threshold ``sqrt(2 log(p^2))``: a two-sided normal bound that is
    Bonferroni-adjusted over the ``p^2`` directed pairs."""
    return math.sqrt(2.0 * math.log(p * p)) if p > 1 else 0.0


@dataclass(frozen=True)
class VotingMatrix:
    ids: tuple[str, ...]
    votes: np.ndarray
    strengths: np.ndarray = None  # gamma_hat**2 per id, used to break ties
    lam: float = math.nan

    def __post_init__(self):
        v = np.array(self.votes, dtype=bool)
        k = len(self.ids)
        if v.shape != (k, k):
            raise ValueError("votes must be square and match ids")
        if not np.array_equal(v, v.T):
            raise ValueError("votes must be symmetric")
        if not v.diagonal().all():
            raise ValueError("votes must have a unit diagonal")
        s = np.zeros(k) if self.strengths is None else np.asarray(self.strengths, float).copy()
        v.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "votes", v)
        object.__setattr__(self, "strengths", s)

    def to_dict(self) -> dict:
        return {
            "ids": list(self.ids),
            "votes": self.votes.astype(int).tolist(),
            "lambda": self.lam,
        }


def implied_pleiotropy(data: SummaryDataset, plugin_se: bool = False):
    """Matrices ``P[j, k] = Gamma_k - beta_j gamma_k`` and their standard errors.

    By default the SE is the delta-method value treating all four estimates
    as independent, including the uncertainty in ``beta_j``:
    ``se_G_k^2 + beta_j^2 se_g_k^2 + gamma_k^2 (se_G_j^2 + beta_j^2 se_g_j^2) / gamma_j^2``.
    ``plugin_se=True`` holds ``beta_j`` fixed and keeps only the first two
    terms.
    """
    if not data.has_exposure_se:
        raise ExposureSERequired("exposure SEs required for voting")
    g, G = data.gamma_hat, data.big_gamma_hat
    sg, sG = data.se_gamma, data.se_big_gamma
    if np.any(g == 0):
        bad = data.ids[int(np.flatnonzero(g == 0)[0])]
        raise NullInstrument(f"null instrument: {bad} has gamma_hat = 0")
    b = G / g
    P = G[None, :] - b[:, None] * g[None, :]
    var = sG[None, :] ** 2 + (b[:, None] * sg[None, :]) ** 2
    if not plugin_se:
        var = var + (g[None, :] / g[:, None]) ** 2 * (sG[:, None] ** 2 + (b * sg)[:, None] ** 2)
    scale = np.abs(G)[None, :] + np.abs(b[:, None] * g[None, :])
    return P, np.sqrt(var), scale


def voting_matrix(
    data: SummaryDataset, lam: float | None = None, plugin_se: bool = False
) -> VotingMatrix:
    """Mutual-vote matrix: ``k`` votes for ``j`` when ``|P[j, k]| <= lam SE``.

    Directed votes are combined with AND and the diagonal is set to 1. A
    relative slack of 1e-12 absorbs rounding on noiseless inputs.
    """
    p = len(data)
    lam = default_lambda(p) if lam is None else float(lam)
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    P, se, scale = implied_pleiotropy(data, plugin_se)
    if math.isinf(lam):
        directed = np.ones((p, p), dtype=bool)
    else:
        directed = np.abs(P) <= lam * se + _VOTE_SLACK * scale
    votes = directed & directed.T
    np.fill_diagonal(votes, True)
    return VotingMatrix(tuple(data.ids), votes, data.gamma_hat**2, lam)


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def maximum_cliques(adjacency) -> list[tuple[int, ...]]:
    """All maximum cliques of an undirected graph, as sorted index tuples.

    Bron-Kerbosch with Tomita pivoting over integer bitsets. Branches that
    cannot reach the current best size are cut, but equal-size branches are
    kept so that every co-maximal clique is found.
    """
    adj = np.asarray(adjacency, dtype=bool)
    k = adj.shape[0]
    if k == 0:
        return [()]
    nbr = [0] * k
    for i in range(k):
        for j in range(k):
            if i != j and adj[i, j] and adj[j, i]:
                nbr[i] |= 1 << j
    best = [0]
    found: list[int] = []

    def expand(r: int, size: int, p: int, x: int) -> None:
        if size + p.bit_count() < best[0]:
            return
        if p == 0:
            if x == 0:
                if size > best[0]:
                    best[0] = size
                    found.clear()
                found.append(r)
            return
        pivot = max(_bits(p | x), key=lambda u: (p & nbr[u]).bit_count())
        for v in _bits(p & ~nbr[pivot]):
            bit = 1 << v
            expand(r | bit, size + 1, p & nbr[v], x & nbr[v])
            p &= ~bit
            x |= bit

    expand(0, 0, (1 << k) - 1, 0)
    out = {tuple(_bits(c)) for c in found if c.bit_count() == best[0]}
    return sorted(out)


@dataclass(frozen=True)
class SelectionResult:
    relevant_set: tuple[str, ...]
    valid_set: tuple[str, ...]
    ties: tuple[tuple[str, ...], ...] = ()
    threshold_used: float = math.nan
    estimate: EstimateResult | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        out = {
            "relevant_set": list(self.relevant_set),
            "valid_set": list(self.valid_set),
            "ties": [list(t) for t in self.ties],
            "threshold_used": self.threshold_used,
        }
        if self.estimate is not None:
            out["estimate"] = self.estimate.to_dict()
        return out


def max_clique_valid_set(vm: VotingMatrix) -> SelectionResult:
    """Maximum clique of the voting matrix as the valid set.

    Among co-maximal cliques the one with the largest total strength
    ``sum(gamma_hat**2)`` wins, then the lexicographically smallest sorted id
    tuple. When more than one maximum clique exists, all of them are listed in
    ``ties``.
    """
    cliques = maximum_cliques(vm.votes)
    named = [
        (tuple(sorted(vm.ids[i] for i in c)), float(sum(vm.strengths[i] for i in c)))
        for c in cliques
    ]
    named.sort(key=lambda t: (-t[1], t[0]))
    ties = tuple(sorted(n for n, _ in named)) if len(named) > 1 else ()
    valid = set(named[0][0]) if named else set()
    return SelectionResult(
        relevant_set=vm.ids,
        valid_set=tuple(i for i in vm.ids if i in valid),
        ties=ties,
        threshold_used=vm.lam,
    )


def spi_select(
    data: SummaryDataset,
    ld: LDMatrix | None = None,
    r2_threshold: float = DEFAULT_R2,
    p_threshold: float | None = GENOME_WIDE_P,
    lam: float | None = None,
    plugin_se: bool = False,
    window: int | None = None,
    alpha: float = 0.05,
) -> SelectionResult:
    """Full selection pipeline followed by IVW on the selected valid set.

    Clumping is skipped when ``ld`` is None and relevance screening when
    ``p_threshold`` is None.
    """
    if ld is not None:
        data = ld_clump(data, ld, r2_threshold, window)
    if p_threshold is not None:
        data = select_relevant(data, p_threshold)
    elif len(data) == 0:
        raise NoRelevantInstruments("no relevant instruments: empty input", dataset=data)
    vm = voting_matrix(data, lam, plugin_se)
    sel = max_clique_valid_set(vm)
    est = ivw_estimate(data.subset(sel.valid_set), alpha=alpha)
    return SelectionResult(sel.relevant_set, sel.valid_set, sel.ties, sel.threshold_used, est)


@dataclass(frozen=True)
class RobustInterval:
    lower: float
    upper: float
    alpha: float
    n_resamples: int
    n_skipped: int
    seed: int
    selection: SelectionResult
    pseudo_intervals: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "alpha": self.alpha,
            "n_resamples": self.n_resamples,
            "n_skipped": self.n_skipped,
            "seed": self.seed,
            "selection": self.selection.to_dict(),
        }


def _resample(data: SummaryDataset, rng: np.random.Generator) -> SummaryDataset:
    g = rng.normal(data.gamma_hat, data.se_gamma)
    G = rng.normal(data.big_gamma_hat, data.se_big_gamma)
    recs = [
        SnpRecord(r.snp_id, r.effect_allele, r.other_allele, gj, r.se_gamma, Gj, r.se_big_gamma,
                  float(2 * stats.norm.sf(abs(gj / r.se_gamma))) if r.se_gamma > 0 else 0.0,
                  r.eaf, r.chrom, r.pos)
        for r, gj, Gj in zip(data.records, g, G)
    ]
    return data.with_records(recs)


def robust_confidence_interval(
    data: SummaryDataset,
    alpha: float = 0.05,
    n_resamples: int = DEFAULT_RESAMPLES,
    grid: Sequence[float] | None = None,
    seed: int | None = None,
    lam: float | None = None,
    p_threshold: float | None = None,
    plugin_se: bool = False,
    threads: int | None = None,
) -> RobustInterval:
    """Union of Wald pseudo-intervals over parametric resamples.

    Resample 0 is the observed data. Resample ``b >= 1`` redraws every
    ``gamma_hat`` and ``Gamma_hat`` independently from normals centered at
    the observed values with their SEs, using ``default_rng([seed, b])``.
    Each resample is re-voted, its maximum clique selected, and the IVW
    interval on that clique at level ``1 - alpha`` recorded. With
    ``p_threshold`` set, resamples are also re-screened for relevance on
    normal p-values; resamples left with no instrument, or whose selection
    fails numerically, are skipped. More than half skipped raises
    :class:`UnstableSelection`.

    ``grid`` (sorted candidate values) snaps the union outward to the nearest
    enclosing grid points.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n_resamples < 1:
        raise ValueError("n_resamples must be at least 1")
    if len(data) == 0:
        raise NoRelevantInstruments("no relevant instruments: empty input", dataset=data)
    if not data.has_exposure_se:
        raise ExposureSERequired("exposure SEs required for resampling")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])

    def one(b: int):
        d = data if b == 0 else _resample(data, np.random.default_rng([seed, b]))
        try:
            sel = spi_select(d, p_threshold=p_threshold, lam=lam, plugin_se=plugin_se, alpha=alpha)
        except NumericError:
            return None
        return sel

    results = pmap(one, range(n_resamples), threads)
    if results[0] is None:
        raise UnstableSelection("selection fails on the observed data")
    bounds = np.array(
        [(s.estimate.ci_lower, s.estimate.ci_upper) if s is not None else (np.nan, np.nan)
         for s in results]
    )
    skipped = int(np.isnan(bounds[:, 0]).sum())
    if skipped > n_resamples / 2:
        raise UnstableSelection(
            f"unstable selection: {skipped} of {n_resamples} resamples skipped"
        )
    lo, hi = float(np.nanmin(bounds[:, 0])), float(np.nanmax(bounds[:, 1]))
    if grid is not None:
        gr = np.sort(np.asarray(grid, float))
        below, above = gr[gr <= lo], gr[gr >= hi]
        lo = float(below[-1]) if below.size else lo
        hi = float(above[0]) if above.size else hi
    return RobustInterval(lo, hi, alpha, n_resamples, skipped, int(seed), results[0], bounds)
