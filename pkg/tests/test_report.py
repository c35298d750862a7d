import csv
import io as _io
import json
import xml.etree.ElementTree as ET

import pytest

from mrkit.errors import DataError
from mrkit.report import (
    RESULT_COLUMNS,
    emit_report,
    forest_svg,
    render,
    results_to_csv,
)
from mrkit.types import EstimateResult

SVG = "{http://www.w3.org/2000/svg}"


def res(method="IVW", beta=0.5, se=0.1, **diag):
    return EstimateResult.wald(method, beta, se, **diag)


def test_single_result_csv():
    text = results_to_csv([res(n_instruments_used=4)])
    rows = list(csv.reader(_io.StringIO(text)))
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == 2 and rows[1][0] == "IVW" and rows[1][-1] == "4"
    assert float(rows[1][1]) == 0.5


def test_json_is_parseable_and_ordered():
    text = render([res(), res("Egger", 0.3, 0.2)], "json")
    methods = [r["method"] for r in json.loads(text)["results"]]
    assert methods == ["IVW", "Egger"]


def test_svg_is_deterministic_and_well_formed():
    a = forest_svg([res(), res()], title="demo")
    b = forest_svg([res(), res()], title="demo")
    assert a == b
    root = ET.fromstring(a)
    assert root.tag == SVG + "svg"


def test_missing_ci_omits_whiskers():
    def whiskers(root):
        return [e for e in root.findall(SVG + "line") if e.get("stroke-width") == "1.5"]

    with_ci = ET.fromstring(forest_svg([res()]))
    point_only = ET.fromstring(forest_svg([EstimateResult("Mode", 0.4)]))
    assert len(whiskers(with_ci)) == 3  # bar and two caps
    assert whiskers(point_only) == []
    assert len(point_only.findall(SVG + "rect")) == 2  # background and point


def test_one_row_per_method():
    root = ET.fromstring(forest_svg([res("A"), res("B"), res("C")]))
    labels = [t.text for t in root.findall(SVG + "text")]
    assert {"A", "B", "C"} <= set(labels)


def test_unknown_format_and_empty_input():
    with pytest.raises(ValueError):
        render([res()], "pdf")
    with pytest.raises(ValueError):
        render([], "csv")


def test_emit_report_unwritable(tmp_path):
    with pytest.raises(DataError):
        emit_report([res()], tmp_path / "missing_dir" / "out.csv")
    text = emit_report([res()], tmp_path / "out.svg", "svg-forest")
    assert (tmp_path / "out.svg").read_text() == text
