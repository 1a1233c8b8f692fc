import numpy as np
import pytest
from hypothesis import given, strategies as st

from fwaccel.telemetry import (SCHEMAS, SchemaError, detect_kind, emit_plot_data, moving_average,
                               read_log, write_log)


def test_constant_column():
    np.testing.assert_allclose(moving_average(np.full(30, 2.5)), 2.5)


def test_impulse_spreads_over_window():
    x = np.zeros(40)
    x[15] = 1.0
    y = moving_average(x, 10)
    np.testing.assert_allclose(y[15:25], 0.1)
    assert np.all(y[:15] == 0) and np.all(y[25:] == 0)


def test_warmup_averages_available_samples():
    np.testing.assert_allclose(moving_average([1.0, 3.0, 5.0], 10), [1.0, 2.0, 3.0])


def test_step_reaches_value_after_window():
    x = np.r_[np.zeros(20), np.ones(20)]
    y = moving_average(x, 10)
    # edge at sample 20; the window is fully past it from sample 29 on
    assert y[28] < 1.0
    np.testing.assert_allclose(y[29:], 1.0)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=60),
       st.integers(1, 15))
def test_trailing_mean_definition(xs, w):
    y = moving_average(xs, w)
    for i in range(len(xs)):
        lo = max(0, i - w + 1)
        assert abs(y[i] - np.mean(xs[lo:i + 1])) < 1e-9 * max(1.0, np.max(np.abs(xs)))


def _rows(n=5):
    cols = SCHEMAS["calibration"]
    return [{c: (i + 0.1 * j) for j, c in enumerate(cols)} for i in range(n)]


def test_log_round_trip(tmp_path):
    p = write_log(tmp_path / "c.csv", "calibration", _rows())
    assert detect_kind(p) == "calibration"
    cols = read_log(p, "calibration")
    assert cols["time"].tolist() == [float(i) for i in range(5)]
    # floats are written with repr, so they read back exactly
    assert cols[SCHEMAS["calibration"][3]][2] == 2 + 0.1 * 3


def test_missing_column_rejected(tmp_path):
    rows = _rows()
    del rows[0]["time"]
    with pytest.raises(SchemaError):
        write_log(tmp_path / "c.csv", "calibration", rows)
    with pytest.raises(SchemaError):
        write_log(tmp_path / "c.csv", "nope", [])


def test_plot_data(tmp_path):
    p = write_log(tmp_path / "c.csv", "calibration", _rows(12))
    out = emit_plot_data(p)
    header = out.read_text().splitlines()[0].split(",")
    assert header[:3] == ["time", "airspeed_meas", "airspeed_meas_ma10"]
    with pytest.raises(SchemaError):
        emit_plot_data(p, ["not_a_column"])
    with pytest.raises(SchemaError):
        emit_plot_data(tmp_path / "missing.csv")
