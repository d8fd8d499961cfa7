import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modeluq.errors import DimensionMismatch, MalformedRow, NonFiniteValue
from modeluq.io import (dumps_report, export_measurements, ingest_measurements,
                        metres_to_um_text, um_text_to_metres)
from modeluq.pipeline import generate_data, load_config
from modeluq.press import default_layout, default_surrogate


@pytest.fixture(scope="module")
def tensor():
    return generate_data(load_config({"generate": {"jitter": 0.01}}))


def test_six_by_29_by_3_file_has_522_entries(tensor, tmp_path):
    path = tmp_path / "m.csv"
    export_measurements(tensor, path)
    back = ingest_measurements(path, default_layout(default_surrogate()))
    assert back.z.shape == (6, 29, 3)
    assert back.z.size == 522
    assert len(path.read_text().splitlines()) == 1 + 6 * 29


def test_round_trip_is_bit_exact(tensor, tmp_path):
    path = tmp_path / "m.csv"
    export_measurements(tensor, path)
    back = ingest_measurements(path, tensor.layout)
    assert np.array_equal(back.z, tensor.z)
    assert np.array_equal(back.realized, tensor.realized)
    assert np.array_equal(back.schedule.setpoints, tensor.schedule.setpoints)
    assert back.schedule.phases == tensor.schedule.phases
    assert export_measurements(back) == path.read_text()


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1.0, max_value=1.0))
def test_micrometre_text_round_trip(x):
    assert um_text_to_metres(metres_to_um_text(x)) == x


def test_row_order_does_not_matter(tensor):
    lines = export_measurements(tensor).splitlines()
    shuffled = "\n".join([lines[0]] + lines[1:][::-1]) + "\n"
    assert np.array_equal(ingest_measurements(None, text=shuffled).z, tensor.z)


def _text(tensor):
    return export_measurements(tensor).splitlines()


def test_empty_cell_reports_line(tensor):
    lines = _text(tensor)
    fields = lines[4].split(",")
    fields[5] = ""
    lines[4] = ",".join(fields)
    with pytest.raises(MalformedRow) as err:
        ingest_measurements(None, text="\n".join(lines))
    assert err.value.line == 5
    assert "line 5" in str(err.value)


@pytest.mark.parametrize("edit, line", [
    (lambda ls: ls.__setitem__(0, "a,b,c"), 1),
    (lambda ls: ls.__setitem__(3, ls[3] + ",7"), 4),
    (lambda ls: ls.__setitem__(7, ls[7].replace(ls[7].split(",")[4], "abc", 1)), 8),
    (lambda ls: ls.__setitem__(2, "0" + ls[2][1:]), 3),
    (lambda ls: ls.__setitem__(9, ls[8]), 10),
])
def test_malformed_rows(tensor, edit, line):
    lines = _text(tensor)
    edit(lines)
    with pytest.raises(MalformedRow) as err:
        ingest_measurements(None, text="\n".join(lines))
    assert err.value.line == line


def test_missing_row_is_dimension_mismatch(tensor):
    lines = _text(tensor)
    del lines[10]
    with pytest.raises(DimensionMismatch, match="missing"):
        ingest_measurements(None, text="\n".join(lines))


def test_inconsistent_setpoint_and_sensor_count(tensor):
    lines = _text(tensor)
    f = lines[40].split(",")
    f[3] = "123.0"
    lines[40] = ",".join(f)
    with pytest.raises(DimensionMismatch, match="setpoint"):
        ingest_measurements(None, text="\n".join(lines))
    lines = [",".join(row.split(",")[:-1]) for row in _text(tensor)]
    with pytest.raises(DimensionMismatch, match="sensors"):
        ingest_measurements(None, default_layout(default_surrogate()), text="\n".join(lines))


@pytest.mark.parametrize("bad", ["nan", "inf", "-inf"])
def test_non_finite_values(tensor, bad):
    lines = _text(tensor)
    f = lines[6].split(",")
    f[4] = bad
    lines[6] = ",".join(f)
    with pytest.raises(NonFiniteValue):
        ingest_measurements(None, text="\n".join(lines))


def test_report_json_is_canonical():
    doc = {"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)], "c": math.inf}
    text = dumps_report(doc)
    assert text == dumps_report(dict(reversed(list(doc.items()))))
    assert text.endswith("\n") and text.index('"a"') < text.index('"b"')
    assert '"inf"' in text
