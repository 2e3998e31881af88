import numpy as np
import pandas as pd
import pytest

from k3prf.data import (
    Panel,
    TransformCode,
    apply_standardization,
    apply_transform,
    hamilton_filter,
    invert_standardization,
    load_csv,
    make_direct_horizon,
    read_raw_csv,
    standardize_window,
    write_csv,
)
from k3prf.errors import DataError, InvalidInputError


def write_rows(path, rows):
    path.write_text("\n".join(",".join(str(c) for c in r) for r in rows) + "\n")
    return str(path)


def quarterly_file(tmp_path, start="1959Q1", periods=260, seed=0, gap=None):
    rng = np.random.default_rng(seed)
    idx = pd.period_range(start, periods=periods, freq="Q")
    rows = [["sasdate", "A", "B", "C"]]
    vals = rng.standard_normal((periods, 3)).cumsum(axis=0) + 50
    for i, p in enumerate(idx):
        row = [str(p)] + [repr(float(v)) for v in vals[i]]
        if gap is not None and i == gap:
            row[2] = ""
        rows.append(row)
    return write_rows(tmp_path / "panel.csv", rows), vals


def test_series_with_gap_is_dropped(tmp_path):
    path, _ = quarterly_file(tmp_path, periods=30, gap=5)
    panel = load_csv(path, {"target": "A"})
    assert panel.series_names == ["A", "C"]


def test_gap_outside_sample_keeps_series(tmp_path):
    path, _ = quarterly_file(tmp_path, gap=2)  # 1959Q3
    panel = load_csv(path, {"sample_range": "1965-2007"})
    assert panel.series_names == ["A", "B", "C"]


def test_sample_preset_restricts_rows(tmp_path):
    path, _ = quarterly_file(tmp_path)  # 1959Q1 .. 2023Q4
    panel = load_csv(path, {"sample_range": "1965-2007"})
    assert panel.T == 43 * 4
    assert panel.time_index[0] == pd.Timestamp("1965-01-01")
    assert panel.time_index[-1] == pd.Timestamp("2007-10-01")
    assert load_csv(path, {"sample_range": "1984:1990"}).T == 7 * 4


def test_round_trip_preserves_values(tmp_path):
    path, vals = quarterly_file(tmp_path, periods=40)
    panel = load_csv(path, {"target": "B"})
    out = tmp_path / "again.csv"
    write_csv(panel, out)
    again = load_csv(str(out), {"target": "B"})
    np.testing.assert_allclose(again.data.to_numpy(), vals, atol=1e-12)
    assert list(again.time_index) == list(panel.time_index)


def test_loading_is_deterministic(tmp_path):
    path, _ = quarterly_file(tmp_path, periods=40)
    a = load_csv(path, {"transforms": "diff"})
    b = load_csv(path, {"transforms": "diff"})
    pd.testing.assert_frame_equal(a.data, b.data)


def test_transform_row_and_fred_codes(tmp_path):
    rows = [["date", "A", "B", "C"], ["transform", "1", "2", "5"]]
    for i in range(30):
        rows.append([f"2000-{1 + i % 12:02d}-01".replace("2000", str(2000 + i // 12)), i + 1.0, (i + 1.0) ** 2, np.exp(0.1 * i)])
    path = write_rows(tmp_path / "codes.csv", rows)
    frame, codes = read_raw_csv(path)
    assert codes == {"A": "1", "B": "2", "C": "5"}
    # the row consumed by differencing is trimmed rather than counted as a gap
    panel = load_csv(path)
    assert panel.T == 29 and panel.series_names == ["A", "B", "C"]
    panel = load_csv(path, {"sample_range": "2000-02-01:2010-01-01"})
    np.testing.assert_allclose(panel.data["C"], 0.1, atol=1e-12)
    np.testing.assert_allclose(panel.data["B"], 2 * np.arange(2, 31) - 1.0)


def test_unparseable_cell_reports_location(tmp_path):
    path = write_rows(tmp_path / "bad.csv", [["d", "A", "B"], ["2000-01-01", 1, 2], ["2000-04-01", 3, "oops"]])
    with pytest.raises(DataError, match="row 3, column 3"):
        load_csv(path)


def test_hamilton_lead_rows_trimmed(tmp_path):
    path, _ = quarterly_file(tmp_path, periods=60)
    panel = load_csv(path, {"transforms": {"A": "hamilton(4,2)", "default": "level"}})
    assert panel.T == 60 - 5 and panel.series_names == ["A", "B", "C"]


def test_too_few_series(tmp_path):
    path = write_rows(tmp_path / "one.csv", [["d", "A", "B"], ["2000-01-01", 1, ""], ["2000-04-01", 3, 4]])
    with pytest.raises(DataError):
        load_csv(path)


def test_ragged_row(tmp_path):
    path = write_rows(tmp_path / "rag.csv", [["d", "A", "B"], ["2000-01-01", 1]])
    with pytest.raises(DataError):
        read_raw_csv(path)


def test_missing_target(tmp_path):
    path, _ = quarterly_file(tmp_path, periods=30)
    with pytest.raises(DataError):
        load_csv(path, {"target": "Z"})


def test_transform_code_parsing():
    assert TransformCode.parse("5").kind == "logdiff"
    assert TransformCode.parse("2.0").kind == "diff"
    assert TransformCode.parse("hamilton(4,2)") == TransformCode("hamilton", 4, 2)
    assert TransformCode.parse({"kind": "hamilton", "h_lag": 3}).h_lag == 3
    with pytest.raises(InvalidInputError):
        TransformCode.parse("7")
    with pytest.raises(InvalidInputError):
        TransformCode("hamilton", 0, 4)


def test_hamilton_linear_trend_is_removed():
    r = hamilton_filter(3.0 + 0.5 * np.arange(100))
    assert r.shape == (100 - 8 - 4 + 1,)
    assert np.abs(r).max() < 1e-8


def test_hamilton_constant_series():
    assert np.abs(hamilton_filter(np.full(50, 7.0))).max() < 1e-10


def test_hamilton_residuals_orthogonal_to_regressors():
    x = np.random.default_rng(1).standard_normal(120).cumsum()
    h, p = 8, 4
    r = hamilton_filter(x, h, p)
    t = np.arange(h + p - 1, 120)
    D = np.column_stack([np.ones(t.size)] + [x[t - h - j] for j in range(p)])
    assert np.abs(D.T @ r).max() < 1e-8 * np.abs(D).max() * t.size


def test_hamilton_white_noise_keeps_variance():
    x = np.random.default_rng(2).standard_normal(500)
    r = hamilton_filter(x)
    assert abs(r.var() / x.var() - 1.0) < 0.1


def test_hamilton_too_short():
    with pytest.raises(InvalidInputError):
        hamilton_filter(np.arange(20.0))


def test_hamilton_transform_alignment():
    idx = pd.date_range("1990-01-01", periods=60, freq="QS")
    x = pd.Series(np.random.default_rng(3).standard_normal(60).cumsum(), index=idx)
    out = apply_transform(x, TransformCode("hamilton", 4, 2))
    assert out.isna().sum() == 5
    np.testing.assert_allclose(out.to_numpy()[5:], hamilton_filter(x.to_numpy(), 4, 2))


def test_logdiff_rejects_nonpositive():
    with pytest.raises(DataError):
        apply_transform(pd.Series([1.0, 0.0, 2.0], name="x"), TransformCode("logdiff"))


def test_transform_then_restrict_equals_restrict_with_margin():
    idx = pd.date_range("1960-01-01", periods=120, freq="QS")
    x = pd.Series(np.exp(np.random.default_rng(4).standard_normal(120).cumsum() * 0.1), index=idx)
    for kind in ("diff", "logdiff"):
        full = apply_transform(x, TransformCode(kind)).loc["1970":"1980"]
        margin = apply_transform(x.loc["1969-10-01":"1980-12-31"], TransformCode(kind)).loc["1970":"1980"]
        np.testing.assert_allclose(full.to_numpy(), margin.to_numpy(), atol=1e-12)


def test_standardize_window_roundtrip():
    X = np.random.default_rng(5).standard_normal((30, 4)) * [1, 2, 3, 4] + [5, 6, 7, 8]
    Xs, m, s = standardize_window(X)
    np.testing.assert_allclose(Xs.mean(0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Xs.std(0), 1.0, atol=1e-12)
    np.testing.assert_array_equal(apply_standardization(X, m, s), Xs)
    np.testing.assert_allclose(invert_standardization(Xs, m, s), X, atol=1e-12)


def test_standardize_window_names_constant_series():
    X = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(DataError, match="GDP"):
        standardize_window(X, ["CPI", "GDP"])


def test_make_direct_horizon():
    y = np.arange(10.0)
    X = np.arange(20.0).reshape(10, 2)
    Xa, ya = make_direct_horizon(y, X, 1)
    assert Xa.shape == (9, 2) and ya.shape == (9,)
    Xa, ya = make_direct_horizon(y, X, 3)
    np.testing.assert_array_equal(ya, y[3:])
    np.testing.assert_array_equal(Xa, X[:7])
    with pytest.raises(InvalidInputError):
        make_direct_horizon(y, X, 10)
    with pytest.raises(InvalidInputError):
        make_direct_horizon(y, X, 0)


def test_panel_invariants():
    idx = pd.date_range("2000-01-01", periods=3, freq="QS")
    with pytest.raises(DataError):
        Panel(pd.DataFrame({"a": [1.0, np.nan, 2.0]}, index=idx))
    with pytest.raises(DataError):
        Panel(pd.DataFrame({"a": [1.0, 2.0, 3.0]}, index=idx[::-1]))
    p = Panel(pd.DataFrame({"a": [1.0, 2.0, 3.0], "b": [3.0, 1.0, 2.0]}, index=idx), "b")
    assert p.predictor_names == ["a"] and p.X.shape == (3, 1)
