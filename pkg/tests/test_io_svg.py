import hashlib
import json

import numpy as np
import pytest

from viscobeam.errors import ArgumentError
from viscobeam.io import canonical_json, config_hash, header_text, read_table, write_table
from viscobeam.svg import PlotSpec, line_plot_svg, render_svg


def test_canonical_json_ignores_key_order():
    a = {"b": 1, "a": [1.0, 2.0], "c": {"y": 2, "x": 1}}
    b = {"c": {"x": 1, "y": 2}, "a": [1.0, 2.0], "b": 1}
    assert canonical_json(a) == canonical_json(b)
    assert config_hash(a) == config_hash(b)


def test_config_hash_is_sha256_prefix():
    cfg = {"k": np.float64(2.5), "v": np.arange(3)}
    text = json.dumps({"k": 2.5, "v": [0, 1, 2]}, sort_keys=True, separators=(",", ":"))
    assert config_hash(cfg) == hashlib.sha256(text.encode()).hexdigest()[:16]
    assert config_hash({"k": 2.5}) != config_hash({"k": 2.6})


def test_header_lines():
    lines = header_text({"a": 1}, seed=3, command="lens").splitlines()
    assert lines[0].startswith("# viscobeam ")
    assert "# command: lens" in lines
    assert f"# config_hash: {config_hash({'a': 1})}" in lines
    assert "# seed: 3" in lines
    assert all(ln.startswith("#") for ln in lines)


def test_table_round_trip(tmp_path):
    rows = np.array([[1.0, 2.5], [3.0, -1e-7]])
    write_table(tmp_path / "t.csv", ["a", "b"], rows, header="# hi\n")
    names, data = read_table(tmp_path / "t.csv")
    assert names == ["a", "b"]
    np.testing.assert_allclose(data, rows)


@pytest.mark.parametrize("body", ["", "# only a comment\n", "a,b\n1,x\n", "a,b\n1,2,3\n"])
def test_read_table_rejects_malformed(tmp_path, body):
    (tmp_path / "t.csv").write_text(body)
    with pytest.raises(ArgumentError):
        read_table(tmp_path / "t.csv")


def test_single_series_gives_one_polyline():
    svg = line_plot_svg(np.arange(5.0), {"y": np.arange(5.0) ** 2}, PlotSpec("x", ["y"]))
    assert svg.count("<polyline") == 1
    assert svg.rstrip().endswith("</svg>")


def test_loglog_annotates_slope():
    k = np.array([10.0, 20.0, 40.0, 80.0])
    svg = line_plot_svg(k, {"r": 5 * k ** -2.0}, PlotSpec("k", ["r"], loglog=True))
    assert "slope -2.000" in svg
    with pytest.raises(ArgumentError):
        line_plot_svg(k, {"r": -k}, PlotSpec("k", ["r"], loglog=True))


def test_render_is_deterministic_and_keeps_header(tmp_path):
    write_table(tmp_path / "t.csv", ["k", "r"], [[1, 2], [2, 1]])
    a = render_svg(tmp_path / "t.csv", PlotSpec("k", ["r"]), tmp_path / "a.svg", header="# config_hash: abc\n")
    b = render_svg(tmp_path / "t.csv", PlotSpec("k", ["r"]), tmp_path / "b.svg", header="# config_hash: abc\n")
    assert a.read_bytes() == b.read_bytes()
    assert "config_hash: abc" in a.read_text()


def test_empty_table_writes_nothing(tmp_path):
    (tmp_path / "t.csv").write_text("# header\nk,r\n")
    with pytest.raises(ArgumentError):
        render_svg(tmp_path / "t.csv", PlotSpec("k", ["r"]), tmp_path / "out.svg")
    assert not (tmp_path / "out.svg").exists()


def test_unknown_column(tmp_path):
    write_table(tmp_path / "t.csv", ["k", "r"], [[1, 2]])
    with pytest.raises(ArgumentError):
        render_svg(tmp_path / "t.csv", PlotSpec("k", ["missing"]), tmp_path / "o.svg")
