"""Exact identification checks on finite causal populations.

A :class:`~mrkit.types.CausalPopulation` lists latent unit types with their
full potential-outcome tables. Every quantity here is an exact weighted
expectation over those units: no sampling is involved. Populations with at
most 64 units are evaluated in rational arithmetic (``fractions.Fraction``)
with zero tolerance; larger ones in floating point with tolerance 1e-12.

Conventions
-----------
* The observed instrument of a unit is Bernoulli(``z_prob``); the observed
  treatment is ``D(Z)`` and the observed outcome ``Y(Z, D(Z))``.
* ``Y(d)`` means ``Y(0, d)``. Under the exclusion restriction this equals
  ``Y(1, d)``; otherwise the estimands are still computed but describe the
  ``z = 0`` arm.
* "Treated" (for the ATT) means realized ``D = 1`` under the population's
  own instrument assignment.
* Instrument independence is checked as ``Z`` independent of the unit's whole
  potential-outcome profile and its confounder label. This is what the
  textbook derivations of the four identification results actually use.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, fields
from enum import Enum
from fractions import Fraction
from typing import Callable

from .errors import ConfounderLabelsRequired, IrrelevantInstrument, UndefinedEstimand
from .types import COMPLIANCE_TYPES, CausalPopulation, Unit

EXACT_UNIT_LIMIT = 64
FLOAT_TOL = 1e-12


class EstimandKind(str, Enum):
    CTE = "CTE"
    ATT = "ATT"
    LATE = "LATE"
    ATE = "ATE"
    USUAL_IV = "UsualIV"


@dataclass(frozen=True)
class _Row:
    w: object
    d0: int
    d1: int
    y00: object
    y01: object
    y10: object
    y11: object
    u: object
    q: object

    @property
    def effect(self):
        return self.y01 - self.y00


class _Arith:
    """Normalized view of a population in one number system."""

    def __init__(self, pop: CausalPopulation, exact: bool | None = None):
        if exact is None:
            exact = len(pop.units) <= EXACT_UNIT_LIMIT
        self.exact = exact
        self.tol = 0 if exact else FLOAT_TOL
        conv: Callable = Fraction if exact else float
        self.rows = [
            _Row(
                conv(u.weight),
                u.d_of_z[0],
                u.d_of_z[1],
                conv(u.y_of_zd[(0, 0)]),
                conv(u.y_of_zd[(0, 1)]),
                conv(u.y_of_zd[(1, 0)]),
                conv(u.y_of_zd[(1, 1)]),
                u.u,
                conv(u.z_prob),
            )
            for u in pop.units
        ]
        self.zero = conv(0)
        self.one = conv(1)

    def eq(self, a, b) -> bool:
        if self.exact:
            return a == b
        return abs(a - b) <= self.tol * max(1.0, abs(a), abs(b))

    def pos(self, a) -> bool:
        return a > self.tol

    def total(self, rows=None, mass=lambda r: r.w):
        s = self.zero
        for r in self.rows if rows is None else rows:
            s += mass(r)
        return s

    def mean(self, value, mass, rows=None):
        """Weighted mean of ``value`` under ``mass``; ``None`` if the mass is zero."""
        m = self.zero
        s = self.zero
        for r in self.rows if rows is None else rows:
            mr = mass(r)
            if mr:
                m += mr
                s += mr * value(r)
        if not self.pos(m):
            return None
        return s / m

    # observed-data moments -------------------------------------------------

    def arm_mass(self, z: int):
        return self.total(mass=lambda r: r.w * (r.q if z else 1 - r.q))

    def observed_means(self):
        """(E[Y|Z=1], E[Y|Z=0], E[D|Z=1], E[D|Z=0]); ``None`` entries for empty arms."""
        m1 = lambda r: r.w * r.q
        m0 = lambda r: r.w * (1 - r.q)
        ey1 = self.mean(lambda r: r.y11 if r.d1 else r.y10, m1)
        ey0 = self.mean(lambda r: r.y01 if r.d0 else r.y00, m0)
        ed1 = self.mean(lambda r: r.d1, m1)
        ed0 = self.mean(lambda r: r.d0, m0)
        return ey1, ey0, ed1, ed0


def _positive(a: _Arith):
    return [r for r in a.rows if a.pos(r.w)]


# ---------------------------------------------------------------------------
# Compliance and estimands
# ---------------------------------------------------------------------------


def enumerate_compliance(pop: CausalPopulation, exact: bool | None = None) -> dict[str, object]:
    """Total weight of compliers, always-takers, never-takers and defiers."""
    a = _Arith(pop, exact)
    out = {name: a.zero for name in ("complier", "always_taker", "never_taker", "defier")}
    for r in a.rows:
        out[COMPLIANCE_TYPES[(r.d0, r.d1)]] += r.w
    return out


def usual_iv_estimand(pop: CausalPopulation, exact: bool | None = None):
    """Wald ratio of the outcome contrast to the treatment contrast across Z."""
    return _usual_iv(_Arith(pop, exact))


def _usual_iv(a: _Arith):
    ey1, ey0, ed1, ed0 = a.observed_means()
    if ed1 is None or ed0 is None:
        raise IrrelevantInstrument("one instrument arm has zero probability")
    denom = ed1 - ed0
    if a.eq(denom, a.zero):
        raise IrrelevantInstrument("E[D|Z=1] equals E[D|Z=0]: irrelevant instrument")
    return (ey1 - ey0) / denom


def compute_estimand(pop: CausalPopulation, kind: EstimandKind | str, exact: bool | None = None):
    return _estimand(_Arith(pop, exact), EstimandKind(kind))


def _estimand(a: _Arith, kind: EstimandKind):
    if kind is EstimandKind.USUAL_IV:
        return _usual_iv(a)
    rows = _positive(a)
    if kind is EstimandKind.CTE:
        effects = [r.effect for r in rows]
        if not effects:
            raise UndefinedEstimand("undefined estimand: population has no mass")
        if not all(a.eq(e, effects[0]) for e in effects):
            raise UndefinedEstimand("undefined estimand: treatment effect is not constant")
        return effects[0]
    if kind is EstimandKind.ATE:
        value = a.mean(lambda r: r.effect, lambda r: r.w)
    elif kind is EstimandKind.ATT:
        value = a.mean(lambda r: r.effect, lambda r: r.w * (r.q * r.d1 + (1 - r.q) * r.d0))
    else:  # LATE
        value = a.mean(lambda r: r.effect, lambda r: r.w if (r.d0, r.d1) == (0, 1) else 0)
    if value is None:
        raise UndefinedEstimand(f"undefined estimand: {kind.value} conditions on an empty set")
    return value


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    relevance: bool
    independence: bool
    exclusion: bool
    constant_effect: bool
    additive_homogeneity: bool
    monotonicity: bool
    no_uz_interaction: bool | None = None
    no_ud_interaction: bool | None = None
    confounding_control: bool | None = None

    @property
    def core(self) -> bool:
        return self.relevance and self.independence and self.exclusion

    def identifies(self, kind: EstimandKind | str) -> bool:
        """Whether the checked assumptions license ``usual IV == kind``."""
        kind = EstimandKind(kind)
        if not self.core:
            return False
        if kind is EstimandKind.CTE:
            return self.constant_effect
        if kind is EstimandKind.ATT:
            return self.additive_homogeneity
        if kind is EstimandKind.LATE:
            return self.monotonicity
        if kind is EstimandKind.ATE:
            return bool(self.confounding_control) and bool(
                self.no_uz_interaction or self.no_ud_interaction
            )
        return True

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _check_independence(a: _Arith) -> bool:
    p1 = a.arm_mass(1)
    total = a.total()
    groups = defaultdict(lambda: [a.zero, a.zero])
    for r in a.rows:
        g = groups[(r.d0, r.d1, r.y00, r.y01, r.y10, r.y11, r.u)]
        g[0] += r.w
        g[1] += r.w * r.q
    # Z independent of the profile iff P(Z=1 | profile) = P(Z=1) wherever defined
    return all(a.eq(zq * total, m * p1) for m, zq in groups.values() if a.pos(m))


def _check_additive_homogeneity(a: _Arith) -> bool:
    for d in (0, 1):
        e1 = a.mean(lambda r: r.effect, lambda r: r.w * r.q * (r.d1 == d))
        e0 = a.mean(lambda r: r.effect, lambda r: r.w * (1 - r.q) * (r.d0 == d))
        if e1 is not None and e0 is not None and not a.eq(e1, e0):
            return False
    return True


def _by_u(a: _Arith):
    groups = defaultdict(list)
    for r in a.rows:
        groups[r.u].append(r)
    return groups


def _check_no_uz(a: _Arith) -> bool:
    _, _, ed1, ed0 = a.observed_means()
    if ed1 is None or ed0 is None:
        return True
    marginal = ed1 - ed0
    for rows in _by_u(a).values():
        c1 = a.mean(lambda r: r.d1, lambda r: r.w * r.q, rows)
        c0 = a.mean(lambda r: r.d0, lambda r: r.w * (1 - r.q), rows)
        if c1 is not None and c0 is not None and not a.eq(c1 - c0, marginal):
            return False
    return True


def _check_no_ud(a: _Arith) -> bool:
    ate = a.mean(lambda r: r.effect, lambda r: r.w)
    for rows in _by_u(a).values():
        eu = a.mean(lambda r: r.effect, lambda r: r.w, rows)
        if eu is not None and not a.eq(eu, ate):
            return False
    return True


def _check_confounding_control(a: _Arith) -> bool:
    """Y(d) independent of (D, Z) given U, for d = 0 and d = 1 separately."""
    for rows in _by_u(a).values():
        mu = a.total(rows)
        if not a.pos(mu):
            continue
        # cells of (D, Z): mass w*q for z=1 with D=d1, w*(1-q) for z=0 with D=d0
        for d in (0, 1):
            value = (lambda r: r.y00) if d == 0 else (lambda r: r.y01)
            marg = defaultdict(lambda: a.zero)
            joint = defaultdict(lambda: a.zero)
            cell_mass = defaultdict(lambda: a.zero)
            for r in rows:
                v = value(r)
                marg[v] += r.w
                for z, mz in ((1, r.w * r.q), (0, r.w * (1 - r.q))):
                    cell = (r.d1 if z else r.d0, z)
                    joint[(v, cell)] += mz
                    cell_mass[cell] += mz
            for cell, mc in cell_mass.items():
                if not a.pos(mc):
                    continue
                for v, mv in marg.items():
                    if not a.eq(joint[(v, cell)] * mu, mv * mc):
                        return False
    return True


def check_assumptions(
    pop: CausalPopulation, confounder_flags: bool | None = None, exact: bool | None = None
) -> AssumptionReport:
    """Decide every identification assumption by exhaustive enumeration.

    The flags that involve the unmeasured confounder ``U`` (no U-Z interaction,
    no U-d interaction, confounding control) are computed when every unit
    carries a ``u`` label; with ``confounder_flags=True`` missing labels raise
    :class:`ConfounderLabelsRequired`, with ``False`` they are skipped.
    """
    return _report(_Arith(pop, exact), pop.has_confounder_labels, confounder_flags)


def _report(a: _Arith, has_u: bool, confounder_flags: bool | None) -> AssumptionReport:
    rows = _positive(a)
    if confounder_flags and not has_u:
        raise ConfounderLabelsRequired("confounder labels required for U-dependent assumptions")
    _, _, ed1, ed0 = a.observed_means()
    relevance = ed1 is not None and ed0 is not None and not a.eq(ed1, ed0)
    effects = [r.effect for r in rows]
    want_u = has_u if confounder_flags is None else bool(confounder_flags)
    return AssumptionReport(
        relevance=relevance,
        independence=_check_independence(a),
        exclusion=all(a.eq(r.y00, r.y10) and a.eq(r.y01, r.y11) for r in rows),
        constant_effect=all(a.eq(e, effects[0]) for e in effects) if effects else True,
        additive_homogeneity=_check_additive_homogeneity(a),
        monotonicity=not any((r.d0, r.d1) == (1, 0) for r in rows),
        no_uz_interaction=_check_no_uz(a) if want_u else None,
        no_ud_interaction=_check_no_ud(a) if want_u else None,
        confounding_control=_check_confounding_control(a) if want_u else None,
    )


def identification_holds(pop: CausalPopulation, kind: EstimandKind | str, exact: bool | None = None):
    """``(licensed, equal)``: whether the checked assumptions license the
    identity and whether the usual IV estimand actually equals ``kind``."""
    return verify_identification(pop, exact)[EstimandKind(kind)]


def verify_identification(pop: CausalPopulation, exact: bool | None = None) -> dict:
    """``{kind: (licensed, equal)}`` for CTE, ATT, LATE and ATE.

    ``equal`` is False when either side is undefined. For the CTE with
    non-constant effects the usual IV estimand is compared with the ATE, the
    value a constant effect would have to take.
    """
    a = _Arith(pop, exact)
    report = _report(a, pop.has_confounder_labels, None)
    try:
        iv = _usual_iv(a)
    except IrrelevantInstrument:
        iv = None
    out = {}
    for kind in (EstimandKind.CTE, EstimandKind.ATT, EstimandKind.LATE, EstimandKind.ATE):
        target_kind = kind
        if kind is EstimandKind.CTE and not report.constant_effect:
            target_kind = EstimandKind.ATE
        equal = False
        if iv is not None:
            try:
                equal = a.eq(iv, _estimand(a, target_kind))
            except UndefinedEstimand:
                pass
        out[kind] = (report.identifies(kind), equal)
    return out


# ---------------------------------------------------------------------------
# Random population generators
# ---------------------------------------------------------------------------

_SMALL_PROBS = [Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4)]
_TYPES = [(0, 1), (1, 1), (0, 0), (1, 0)]

SCHEMES = (
    "unstructured",
    "constant_effect",
    "homogeneous_att",
    "monotone",
    "ate_uz",
    "ate_ud",
    "ate_confounded",
)


def _weights(rng: random.Random, k: int) -> list[Fraction]:
    raw = [rng.randint(1, 6) for _ in range(k)]
    s = sum(raw)
    return [Fraction(x, s) for x in raw]


def _y(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-5, 5))


def _shift_to_mean(effects: list[Fraction], weights: list[Fraction], target: Fraction):
    m = sum(w * e for w, e in zip(weights, effects)) / sum(weights)
    return [e + target - m for e in effects]


def _exclusion_units(rng, weights, types, y0s, effects, q, us=None):
    us = us or [None] * len(weights)
    return [
        Unit.make(w, t, (y0, y0 + e), u, q) for w, t, y0, e, u in zip(weights, types, y0s, effects, us)
    ]


def random_population(rng: random.Random, scheme: str = "unstructured", max_units: int = 8) -> CausalPopulation:
    """Draw a small population with rational weights.

    Structured schemes make one identification assumption set hold by
    construction (up to relevance, which callers still filter on);
    ``unstructured`` draws everything independently, so any assumption may
    fail. Outcomes are small integers; weights are rationals summing to 1.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if scheme == "unstructured":
        k = rng.randint(1, max_units)
        weights = _weights(rng, k)
        const_q = rng.random() < 0.6
        q0 = rng.choice(_SMALL_PROBS)
        exclusion = rng.random() < 0.7
        use_u = rng.random() < 0.5
        units = []
        for w in weights:
            y0, y1 = _y(rng), _y(rng)
            y = (y0, y1) if exclusion else (y0, y1, _y(rng), _y(rng))
            units.append(
                Unit.make(
                    w,
                    rng.choice(_TYPES),
                    y,
                    rng.randint(0, 1) if use_u else None,
                    q0 if const_q else rng.choice(_SMALL_PROBS + [Fraction(0), Fraction(1)]),
                )
            )
        return CausalPopulation(tuple(units))

    q = rng.choice(_SMALL_PROBS)
    if scheme in ("constant_effect", "homogeneous_att", "monotone"):
        k = rng.randint(2, max_units)
        weights = _weights(rng, k)
        allowed = _TYPES if scheme != "monotone" else _TYPES[:3]
        types = [rng.choice(allowed) for _ in range(k)]
        if (0, 1) not in types and (1, 0) not in types:
            types[0] = (0, 1)
        y0s = [_y(rng) for _ in range(k)]
        if scheme == "constant_effect":
            tau = _y(rng)
            effects = [tau] * k
        else:
            effects = [_y(rng) for _ in range(k)]
            if scheme == "homogeneous_att":
                tau = _y(rng)
                by_type = defaultdict(list)
                for i, t in enumerate(types):
                    by_type[t].append(i)
                for idx in by_type.values():
                    shifted = _shift_to_mean([effects[i] for i in idx], [weights[i] for i in idx], tau)
                    for i, e in zip(idx, shifted):
                        effects[i] = e
        return CausalPopulation(tuple(_exclusion_units(rng, weights, types, y0s, effects, q)))

    # U-structured schemes: within each confounder level, outcome profiles are
    # drawn independently of compliance types, so Y(d) is independent of (D, Z)
    # given U by construction.
    n_u = 2
    pu = _weights(rng, n_u)
    c = rng.choice(_SMALL_PROBS)
    tau = _y(rng)
    units = []
    for u in range(n_u):
        n_prof = rng.randint(1, 2)
        prof_w = _weights(rng, n_prof)
        y0s = [_y(rng) for _ in range(n_prof)]
        effects = [_y(rng) for _ in range(n_prof)]
        if scheme == "ate_ud":
            effects = _shift_to_mean(effects, prof_w, tau)
        if scheme == "ate_uz":
            other = rng.choice([(1, 1), (0, 0), (1, 0)])
            if other == (1, 0):
                type_w = [(1 + c) / 2, (1 - c) / 2]
            else:
                type_w = [c, 1 - c]
            types = [(0, 1), other]
        else:
            n_types = rng.randint(1, 2)
            types = rng.sample(_TYPES, n_types)
            type_w = _weights(rng, n_types)
        for pw, y0, e in zip(prof_w, y0s, effects):
            for tw, t in zip(type_w, types):
                if tw:
                    units.append(Unit.make(pu[u] * pw * tw, t, (y0, y0 + e), u, q))
    return CausalPopulation(tuple(units))


RELAXED = {
    EstimandKind.CTE: ("monotone", "unstructured"),
    EstimandKind.ATT: ("unstructured", "monotone"),
    EstimandKind.LATE: ("unstructured", "constant_effect"),
    EstimandKind.ATE: ("ate_confounded", "unstructured"),
}


def find_counterexample(
    kind: EstimandKind | str, rng: random.Random, max_tries: int = 20000
) -> CausalPopulation | None:
    """Search for a population satisfying the core IV assumptions (and, for
    the ATE, confounding control) but not the identifying fourth assumption,
    on which the usual IV estimand differs from ``kind``."""
    kind = EstimandKind(kind)
    schemes = RELAXED[kind]
    for i in range(max_tries):
        pop = random_population(rng, schemes[i % len(schemes)])
        rep = check_assumptions(pop)
        if not rep.core or rep.identifies(kind):
            continue
        if kind is EstimandKind.ATE and not rep.confounding_control:
            continue
        try:
            target = compute_estimand(pop, EstimandKind.ATE if kind is EstimandKind.CTE else kind)
        except UndefinedEstimand:
            continue
        if usual_iv_estimand(pop) != target:
            return pop
    return None
