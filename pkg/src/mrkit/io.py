"""File formats: GWAS summary statistics, harmonization, LD matrices,
population JSON and experiment configs.

Summary-statistics files are delimited text with one header row. The
delimiter is a tab when the header contains one, a comma when it contains
one, and runs of whitespace otherwise. Lines starting with ``#`` and blank
lines are ignored. Header names are matched case-insensitively through
:data:`COLUMN_ALIASES`.

Canonical TSV output writes floats with ``repr`` so that a write/read cycle
is lossless, and ``NA`` for missing optional values.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, DataError, HarmonizationError, ParseError
from .types import CausalPopulation, Design, SnpRecord, SummaryDataset

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

PathLike = str | os.PathLike

REQUIRED_COLUMNS = ("snp", "effect_allele", "other_allele", "beta", "se", "pval")
OPTIONAL_COLUMNS = ("eaf", "chr", "pos")
CANONICAL_COLUMNS = REQUIRED_COLUMNS + OPTIONAL_COLUMNS

COLUMN_ALIASES: dict[str, str] = {
    "snp": "snp", "rsid": "snp", "rs_id": "snp", "snpid": "snp", "snp_id": "snp",
    "variant_id": "snp", "markername": "snp", "id": "snp",
    "effect_allele": "effect_allele", "ea": "effect_allele", "a1": "effect_allele",
    "allele1": "effect_allele", "tested_allele": "effect_allele", "alt": "effect_allele",
    "other_allele": "other_allele", "oa": "other_allele", "a2": "other_allele",
    "allele2": "other_allele", "non_effect_allele": "other_allele", "ref": "other_allele",
    "nea": "other_allele",
    "beta": "beta", "b": "beta", "effect": "beta", "estimate": "beta",
    "se": "se", "stderr": "se", "standard_error": "se", "sebeta": "se", "se_beta": "se",
    "pval": "pval", "p": "pval", "p_value": "pval", "pvalue": "pval", "p.value": "pval",
    "p_bolt_lmm": "pval",
    "eaf": "eaf", "freq": "eaf", "af": "eaf", "effect_allele_freq": "eaf", "freq1": "eaf",
    "a1freq": "eaf",
    "chr": "chr", "chrom": "chr", "chromosome": "chr", "#chrom": "chr",
    "pos": "pos", "bp": "pos", "position": "pos", "base_pair_location": "pos",
}

NA_TOKENS = frozenset({"", "na", "nan", "null", "none", "."})
_ALLELE_RE = re.compile(r"^[ACGT]+$|^[DI]$")
_COMPLEMENT = str.maketrans("ACGT", "TGCA")
EAF_AMBIGUITY_MARGIN = 0.08


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HalfRecord:
    """One row of an exposure-side or outcome-side summary-statistics file."""

    snp_id: str
    effect_allele: str
    other_allele: str
    beta: float
    se: float
    pval: float
    eaf: float | None = None
    chrom: str | None = None
    pos: int | None = None

    @property
    def palindromic(self) -> bool:
        """Strand-ambiguous allele pair (A/T or C/G)."""
        return is_palindromic(self.effect_allele, self.other_allele)


@dataclass(frozen=True)
class RowError:
    line: int
    snp_id: str | None
    message: str

    def __str__(self) -> str:
        who = f" ({self.snp_id})" if self.snp_id else ""
        return f"line {self.line}{who}: {self.message}"


@dataclass(frozen=True)
class SummaryHalf:
    records: tuple[HalfRecord, ...]
    errors: tuple[RowError, ...] = ()
    source: str | None = None
    columns: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.snp_id for r in self.records]


def _split(line: str, delim: str | None) -> list[str]:
    return [c.strip() for c in line.split(delim)] if delim else line.split()


def _detect_delimiter(header: str) -> str | None:
    if "\t" in header:
        return "\t"
    if "," in header:
        return ","
    return None


def _map_header(cells: list[str], aliases: Mapping[str, str]) -> dict[str, int]:
    mapping: dict[str, int] = {}
    for i, c in enumerate(cells):
        key = aliases.get(c.strip().lower())
        if key is not None and key not in mapping:
            mapping[key] = i
    missing = [c for c in REQUIRED_COLUMNS if c not in mapping]
    if missing:
        raise ParseError(f"missing required column(s): {', '.join(missing)}")
    return mapping


def _parse_float(text: str, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ValueError(f"unparseable {what}: {text!r}") from None
    return v


def _parse_row(cells: list[str], cols: dict[str, int]) -> HalfRecord:
    def get(name):
        i = cols.get(name)
        return None if i is None else cells[i]

    snp = get("snp")
    if not snp or snp.lower() in NA_TOKENS:
        raise ValueError("missing snp id")
    ea, oa = get("effect_allele").upper(), get("other_allele").upper()
    for a in (ea, oa):
        if not _ALLELE_RE.match(a):
            raise ValueError(f"invalid allele: {a!r}")
    if ea == oa:
        raise ValueError("identical alleles")
    beta = _parse_float(get("beta"), "beta")
    se = _parse_float(get("se"), "se")
    pval = _parse_float(get("pval"), "pval")
    if not math.isfinite(beta):
        raise ValueError("non-finite beta")
    if not (se > 0 and math.isfinite(se)):
        raise ValueError("nonpositive SE")
    if not 0 <= pval <= 1:
        raise ValueError("pval out of range")
    eaf = get("eaf")
    eaf = None if eaf is None or eaf.lower() in NA_TOKENS else _parse_float(eaf, "eaf")
    if eaf is not None and not 0 <= eaf <= 1:
        raise ValueError("eaf out of range")
    chrom = get("chr")
    chrom = None if chrom is None or chrom.lower() in NA_TOKENS else chrom
    pos = get("pos")
    if pos is None or pos.lower() in NA_TOKENS:
        pos = None
    else:
        try:
            pos = int(pos)
        except ValueError:
            raise ValueError(f"unparseable pos: {pos!r}") from None
    return HalfRecord(snp, ea, oa, beta, se, pval, eaf, chrom, pos)


def parse_summary_text(
    text: str,
    strict: bool = False,
    aliases: Mapping[str, str] = COLUMN_ALIASES,
    source: str | None = None,
) -> SummaryHalf:
    """Parse summary statistics from a string; see :func:`parse_summary_stats`."""
    header, delim, cols = None, None, {}
    records: list[HalfRecord] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#") and header is not None:
            continue
        if header is None:
            if line.lstrip().startswith("#") and not line.lstrip().lower().startswith("#chrom"):
                continue
            delim = _detect_delimiter(line)
            header = _split(line, delim)
            cols = _map_header(header, aliases)
            continue
        cells = _split(line, delim)
        snp = cells[cols["snp"]] if len(cells) > cols["snp"] else None
        try:
            if len(cells) != len(header):
                raise ValueError(f"expected {len(header)} fields, found {len(cells)}")
            rec = _parse_row(cells, cols)
            if rec.snp_id in seen:
                raise ValueError("duplicate id")
        except ValueError as exc:
            err = RowError(lineno, snp, str(exc))
            if strict:
                raise ParseError(f"{source or 'input'}: {err}") from None
            errors.append(err)
            continue
        seen.add(rec.snp_id)
        records.append(rec)
    if header is None:
        raise ParseError(f"{source or 'input'}: no data rows")
    if not records and not errors:
        raise ParseError(f"{source or 'input'}: no data rows")
    return SummaryHalf(tuple(records), tuple(errors), source, tuple(header))


def parse_summary_stats(
    path: PathLike, strict: bool = False, aliases: Mapping[str, str] = COLUMN_ALIASES
) -> SummaryHalf:
    """Read one side (exposure or outcome) of a set of summary statistics.

    Required columns are ``snp, effect_allele, other_allele, beta, se, pval``;
    ``eaf, chr, pos`` are optional. Malformed rows are collected in
    ``errors`` with their line numbers; ``strict=True`` raises
    :class:`ParseError` on the first one instead. A missing required column
    or a file without data rows is always fatal.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise ParseError(f"{path}: not UTF-8 text") from None
    return parse_summary_text(text, strict, aliases, source=str(path))


# ---------------------------------------------------------------------------
# Harmonization
# ---------------------------------------------------------------------------


def complement(allele: str) -> str:
    return allele.translate(_COMPLEMENT)


def is_palindromic(a: str, b: str) -> bool:
    return len(a) == 1 and len(b) == 1 and complement(a) == b


@dataclass(frozen=True)
class HarmonizationReport:
    n_matched: int
    n_flipped: int
    n_unchanged: int
    n_dropped_ambiguous: int
    n_dropped_unmatched: int
    actions: tuple[tuple[str, str], ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "n_matched": self.n_matched,
            "n_flipped": self.n_flipped,
            "n_unchanged": self.n_unchanged,
            "n_dropped_ambiguous": self.n_dropped_ambiguous,
            "n_dropped_unmatched": self.n_dropped_unmatched,
            "actions": [list(a) for a in self.actions],
        }

    def to_tsv(self) -> str:
        lines = ["snp\taction"] + [f"{s}\t{a}" for s, a in self.actions]
        return "\n".join(lines) + "\n"


def _resolve_palindrome(e: HalfRecord, o: HalfRecord, margin: float) -> str | None:
    """Orientation of a palindromic pair from allele frequencies, or None."""
    if e.eaf is None or o.eaf is None:
        return None
    if abs(e.eaf - 0.5) <= margin or abs(o.eaf - 0.5) <= margin:
        return None
    # frequency of the exposure effect allele as reported by the outcome file
    out_freq = o.eaf if o.effect_allele == e.effect_allele else 1.0 - o.eaf
    return "unchanged" if (e.eaf - 0.5) * (out_freq - 0.5) > 0 else "flipped"


def _orientation(e: HalfRecord, o: HalfRecord) -> str | None:
    E, O, oe, oo = e.effect_allele, e.other_allele, o.effect_allele, o.other_allele
    if (oe, oo) == (E, O):
        return "unchanged"
    if (oe, oo) == (O, E):
        return "flipped"
    if (complement(oe), complement(oo)) == (E, O):
        return "unchanged_strand"
    if (complement(oe), complement(oo)) == (O, E):
        return "flipped_strand"
    return None


def harmonize(
    exposure: SummaryHalf,
    outcome: SummaryHalf,
    palindromic: str = "drop",
    eaf_margin: float = EAF_AMBIGUITY_MARGIN,
    design: Design | str = Design.TWO_SAMPLE,
    n_exposure: int | None = None,
    n_outcome: int | None = None,
) -> tuple[SummaryDataset, HarmonizationReport]:
    """Join exposure and outcome statistics on SNP id and align alleles.

    The exposure effect allele is the reference. Outcome rows whose alleles
    are swapped (directly or on the opposite strand) get their beta negated.
    Palindromic variants (A/T, C/G) are dropped under ``palindromic="drop"``;
    under ``"eaf"`` they are kept when both files report a frequency farther
    than ``eaf_margin`` from 0.5 and oriented by comparing those frequencies.
    Ids present on only one side and allele mismatches are dropped as
    unmatched. Record order follows the exposure file.
    """
    if palindromic not in ("drop", "eaf"):
        raise ConfigError(f"unknown palindromic policy: {palindromic!r}")
    out_by_id = {r.snp_id: r for r in outcome.records}
    exp_ids = {r.snp_id for r in exposure.records}
    actions: list[tuple[str, str]] = []
    records: list[SnpRecord] = []
    n_flip = n_same = n_amb = n_unm = 0
    for e in exposure.records:
        o = out_by_id.get(e.snp_id)
        if o is None:
            actions.append((e.snp_id, "dropped_unmatched"))
            n_unm += 1
            continue
        if is_palindromic(e.effect_allele, e.other_allele):
            orient = None
            if palindromic == "eaf" and {o.effect_allele, o.other_allele} == {
                e.effect_allele, e.other_allele
            }:
                orient = _resolve_palindrome(e, o, eaf_margin)
            if orient is None:
                actions.append((e.snp_id, "dropped_ambiguous"))
                n_amb += 1
                continue
            action = orient + "_eaf"
        else:
            orient = _orientation(e, o)
            if orient is None:
                actions.append((e.snp_id, "dropped_allele_mismatch"))
                n_unm += 1
                continue
            action = orient
        flip = orient.startswith("flipped")
        n_flip += flip
        n_same += not flip
        actions.append((e.snp_id, action))
        records.append(
            SnpRecord(
                e.snp_id, e.effect_allele, e.other_allele, e.beta, e.se,
                -o.beta if flip else o.beta, o.se, e.pval, e.eaf, e.chrom, e.pos,
            )
        )
    for o in outcome.records:
        if o.snp_id not in exp_ids:
            actions.append((o.snp_id, "dropped_unmatched"))
            n_unm += 1
    if not records:
        raise HarmonizationError("no overlapping SNPs after harmonization")
    report = HarmonizationReport(len(records), n_flip, n_same, n_amb, n_unm, tuple(actions))
    ds = SummaryDataset(tuple(records), Design(design), n_exposure, n_outcome)
    return ds, report


# ---------------------------------------------------------------------------
# Canonical TSV
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_half(half: SummaryHalf) -> str:
    """Canonical TSV text for a parsed half; parsing it gives back ``half.records``."""
    lines = ["\t".join(CANONICAL_COLUMNS)]
    for r in half.records:
        lines.append("\t".join(_fmt(v) for v in (
            r.snp_id, r.effect_allele, r.other_allele, r.beta, r.se, r.pval, r.eaf, r.chrom, r.pos
        )))
    return "\n".join(lines) + "\n"


DATASET_COLUMNS = (
    "snp", "effect_allele", "other_allele", "gamma_hat", "se_gamma", "big_gamma_hat",
    "se_big_gamma", "pval_exposure", "eaf", "chr", "pos",
)


def format_dataset(ds: SummaryDataset) -> str:
    """Canonical TSV for a harmonized dataset, with design metadata in ``#`` lines."""
    lines = [
        f"# design={ds.design.value}",
        f"# n_exposure={_fmt(ds.n_exposure)}",
        f"# n_outcome={_fmt(ds.n_outcome)}",
        "\t".join(DATASET_COLUMNS),
    ]
    for r in ds.records:
        lines.append("\t".join(_fmt(v) for v in (
            r.snp_id, r.effect_allele, r.other_allele, r.gamma_hat, r.se_gamma,
            r.big_gamma_hat, r.se_big_gamma, r.pval_exposure, r.eaf, r.chrom, r.pos,
        )))
    return "\n".join(lines) + "\n"


def _opt(text: str, conv):
    return None if text.lower() in NA_TOKENS else conv(text)


def parse_dataset_text(text: str, source: str | None = None) -> SummaryDataset:
    meta: dict[str, str] = {}
    header = None
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
            continue
        cells = line.split("\t")
        if header is None:
            header = cells
            if tuple(header) != DATASET_COLUMNS:
                raise ParseError(f"{source or 'input'}: not a harmonized dataset header")
            continue
        if len(cells) != len(header):
            raise ParseError(f"{source or 'input'}: line {lineno}: wrong field count")
        try:
            records.append(SnpRecord(
                cells[0], cells[1], cells[2], float(cells[3]), _opt(cells[4], float),
                float(cells[5]), float(cells[6]), _opt(cells[7], float), _opt(cells[8], float),
                _opt(cells[9], str), _opt(cells[10], int),
            ))
        except (ValueError, DataError) as exc:
            raise ParseError(f"{source or 'input'}: line {lineno}: {exc}") from None
    if not records:
        raise ParseError(f"{source or 'input'}: no data rows")
    try:
        design = Design(meta.get("design", Design.TWO_SAMPLE.value))
    except ValueError:
        raise ParseError(f"{source or 'input'}: unknown design {meta.get('design')!r}") from None
    n_exp = _opt(meta.get("n_exposure", "NA"), int)
    n_out = _opt(meta.get("n_outcome", "NA"), int)
    return SummaryDataset(tuple(records), design, n_exp, n_out)


def _write(path: PathLike, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _read(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from None


def write_half(half: SummaryHalf, path: PathLike) -> None:
    _write(path, format_half(half))


def write_dataset(ds: SummaryDataset, path: PathLike) -> None:
    _write(path, format_dataset(ds))


def read_dataset(path: PathLike) -> SummaryDataset:
    return parse_dataset_text(_read(path), str(path))


# ---------------------------------------------------------------------------
# LD matrices
# ---------------------------------------------------------------------------


def parse_ld_text(text: str, source: str | None = None):
    """LD from a dense square table or a triplet list.

    Dense: header row of ids (first cell is a label such as ``snp``), then one
    row per id. Triplet: header ``snp_a snp_b r`` (or ``r2``, taken as the
    square of a nonnegative correlation); pairs not listed are uncorrelated.
    """
    from .selection import LDMatrix

    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ParseError(f"{source or 'LD input'}: no data rows")
    delim = _detect_delimiter(rows[0])
    header = _split(rows[0], delim)
    lower = [h.lower() for h in header]
    try:
        if len(header) == 3 and lower[2] in ("r", "r2"):
            pairs, ids = {}, []
            for ln in rows[1:]:
                a, b, v = _split(ln, delim)
                v = float(v)
                if lower[2] == "r2":
                    v = math.sqrt(v)
                for s in (a, b):
                    if s not in ids:
                        ids.append(s)
                if a != b:
                    pairs[(a, b)] = v
            return LDMatrix.from_pairs(ids, pairs)
        ids = header[1:]
        mat = np.empty((len(ids), len(ids)))
        if len(rows) - 1 != len(ids):
            raise ParseError(f"{source or 'LD input'}: dense LD matrix is not square")
        for i, ln in enumerate(rows[1:]):
            cells = _split(ln, delim)
            if cells[0] != ids[i] or len(cells) != len(ids) + 1:
                raise ParseError(f"{source or 'LD input'}: row {i + 1} does not match header")
            mat[i] = [float(c) for c in cells[1:]]
        return LDMatrix(tuple(ids), mat)
    except ValueError as exc:
        raise ParseError(f"{source or 'LD input'}: {exc}") from None


def read_ld(path: PathLike):
    return parse_ld_text(_read(path), str(path))


# ---------------------------------------------------------------------------
# Populations and experiment configs
# ---------------------------------------------------------------------------


def read_population(path: PathLike) -> CausalPopulation:
    try:
        data = json.loads(_read(path))
        return CausalPopulation.from_dict(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from None
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ParseError(f"{path}: invalid population: {exc}") from None


def write_population(pop: CausalPopulation, path: PathLike) -> None:
    _write(path, json.dumps(pop.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config_mapping(path: PathLike) -> dict:
    """Parse a TOML or JSON file (chosen by extension; TOML otherwise)."""
    text = _read(path)
    try:
        if str(path).lower().endswith(".json"):
            return json.loads(text)
        return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_experiment_config(path: PathLike):
    from .bias import BiasExperimentConfig

    try:
        return BiasExperimentConfig.from_dict(load_config_mapping(path))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise ConfigError(f"{path}: {exc}") from None
