"""CSV, JSON and SVG forest-plot output for estimation results and bias
experiment reports. Every writer is deterministic: identical inputs give
byte-identical text."""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .errors import DataError
from .types import EstimateResult, jsonable

RESULT_COLUMNS = ("method", "beta_hat", "se", "ci_lower", "ci_upper", "n_instruments")
BIAS_COLUMNS = (
    "estimator", "beta", "mean", "bias", "mc_se", "predicted_mean", "predicted_bias",
    "n_ok", "n_failed", "passed",
)


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def results_to_csv(results: Sequence[EstimateResult]) -> str:
    rows = [
        (r.method, r.beta_hat, r.se, r.ci_lower, r.ci_upper, r.diagnostics.get("n_instruments_used"))
        for r in results
    ]
    return _csv(RESULT_COLUMNS, rows)


def results_to_json(results: Sequence[EstimateResult], extra: dict | None = None) -> str:
    payload = {"results": [r.to_dict() for r in results]}
    if extra:
        payload.update(extra)
    return json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n"


def _nice_step(span: float, target: int = 5) -> float:
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag


def _num(x: float) -> str:
    return f"{x:.2f}"


def forest_svg(results: Sequence[EstimateResult], title: str = "") -> str:
    """Forest plot: one row per method with the point estimate and, when
    present, its confidence-interval whiskers; a dashed line marks zero."""
    if not results:
        raise ValueError("at least one result is required")
    label_w, plot_w, right_w = 160.0, 360.0, 170.0
    row_h, top, bottom = 28.0, 40.0 if title else 16.0, 40.0
    width = label_w + plot_w + right_w
    height = top + row_h * len(results) + bottom

    vals = [0.0]
    for r in results:
        for v in (r.beta_hat, r.ci_lower, r.ci_upper):
            if v is not None and math.isfinite(v):
                vals.append(v)
    lo, hi = min(vals), max(vals)
    if hi - lo <= 0:
        lo, hi = lo - 1.0, hi + 1.0
    step = _nice_step(hi - lo)
    lo, hi = math.floor(lo / step) * step, math.ceil(hi / step) * step

    def x(v: float) -> float:
        return label_w + (v - lo) / (hi - lo) * plot_w

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" '
        f'height="{_num(height)}" viewBox="0 0 {_num(width)} {_num(height)}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{_num(width / 2)}" y="24" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    axis_y = top + row_h * len(results)
    out.append(f'<line x1="{_num(x(lo))}" y1="{_num(axis_y)}" x2="{_num(x(hi))}" '
               f'y2="{_num(axis_y)}" stroke="black"/>')
    n_ticks = int(round((hi - lo) / step))
    for i in range(n_ticks + 1):
        t = lo + i * step
        out.append(f'<line x1="{_num(x(t))}" y1="{_num(axis_y)}" x2="{_num(x(t))}" '
                   f'y2="{_num(axis_y + 5)}" stroke="black"/>')
        label = f"{t:.6g}" if abs(t) > 1e-12 * step else "0"
        out.append(f'<text x="{_num(x(t))}" y="{_num(axis_y + 18)}" '
                   f'text-anchor="middle">{label}</text>')
    out.append(f'<line x1="{_num(x(0.0))}" y1="{_num(top)}" x2="{_num(x(0.0))}" '
               f'y2="{_num(axis_y)}" stroke="gray" stroke-dasharray="4,3"/>')
    for i, r in enumerate(results):
        cy = top + row_h * (i + 0.5)
        out.append(f'<text x="{_num(label_w - 8)}" y="{_num(cy + 4)}" '
                   f'text-anchor="end">{escape(r.method)}</text>')
        has_ci = (
            r.ci_lower is not None and r.ci_upper is not None
            and math.isfinite(r.ci_lower) and math.isfinite(r.ci_upper)
        )
        if has_ci:
            x1, x2 = x(r.ci_lower), x(r.ci_upper)
            out.append(f'<line x1="{_num(x1)}" y1="{_num(cy)}" x2="{_num(x2)}" '
                       f'y2="{_num(cy)}" stroke="black" stroke-width="1.5"/>')
            for xe in (x1, x2):
                out.append(f'<line x1="{_num(xe)}" y1="{_num(cy - 5)}" x2="{_num(xe)}" '
                           f'y2="{_num(cy + 5)}" stroke="black" stroke-width="1.5"/>')
            text = f"{r.beta_hat:.3f} [{r.ci_lower:.3f}, {r.ci_upper:.3f}]"
        else:
            text = f"{r.beta_hat:.3f}"
        out.append(f'<rect x="{_num(x(r.beta_hat) - 4)}" y="{_num(cy - 4)}" width="8" '
                   f'height="8" fill="black"/>')
        out.append(f'<text x="{_num(label_w + plot_w + 10)}" y="{_num(cy + 4)}">{text}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bias_report_csv(report) -> str:
    rows = [[r.to_dict()[c] for c in BIAS_COLUMNS] for r in report.rows]
    return _csv(BIAS_COLUMNS, rows)


def bias_report_json(report) -> str:
    return json.dumps(jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n"


def render(results: Sequence[EstimateResult], fmt: str) -> str:
    if not results:
        raise ValueError("at least one result is required")
    if fmt == "csv":
        return results_to_csv(results)
    if fmt == "json":
        return results_to_json(results)
    if fmt in ("svg", "svg-forest"):
        return forest_svg(results)
    raise ValueError(f"unknown report format: {fmt!r}")


def emit_report(results: Sequence[EstimateResult], path, fmt: str = "csv") -> str:
    """Render ``results`` and write them to ``path``; returns the text.

    An unwritable path raises :class:`~mrkit.errors.DataError`.
    """
    text = render(results, fmt)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None
    return text
