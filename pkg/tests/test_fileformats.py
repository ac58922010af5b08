"""Sectioned-text and point-cloud file formats."""

import numpy as np
import pytest

from teleop.fileformats import (ParseError, floats, load_point_cloud,
                                parse_sections, save_point_cloud)


def test_parse_sections(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# comment\n[one]\na b c\n\n[two]\n1 2  # trailing\n",
                 encoding="utf-8")
    sections = parse_sections(p)
    assert list(sections) == ["one", "two"]
    assert sections["one"] == [(3, ["a", "b", "c"])]
    assert sections["two"] == [(6, ["1", "2"])]


def test_tokens_before_section_rejected(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("stray tokens\n[one]\n", encoding="utf-8")
    with pytest.raises(ParseError) as ei:
        parse_sections(p)
    assert ei.value.line_no == 1


def test_floats_diagnostics(tmp_path):
    with pytest.raises(ParseError) as ei:
        floats(tmp_path / "x", 7, ["1.5", "oops"], "pose")
    assert ei.value.line_no == 7
    assert "pose" in str(ei.value)


def test_cloud_ascii_round_trip(tmp_path):
    pts = np.array([[0.0, 1.0, 2.0], [-0.5, 0.25, 0.125]])
    path = tmp_path / "c.cloud"
    save_point_cloud(path, pts)
    np.testing.assert_allclose(load_point_cloud(path), pts, atol=1e-12)


def test_cloud_binary_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    pts = rng.uniform(-2, 2, (1000, 3))
    path = tmp_path / "c.cloud"
    save_point_cloud(path, pts, binary=True)
    out = load_point_cloud(path)
    np.testing.assert_allclose(out, pts.astype(np.float32), atol=0)


def test_cloud_bad_line(tmp_path):
    path = tmp_path / "c.cloud"
    path.write_text("0 0 0\n1 2\n", encoding="utf-8")
    with pytest.raises(ParseError) as ei:
        load_point_cloud(path)
    assert ei.value.line_no == 2


def test_cloud_truncated_binary(tmp_path):
    path = tmp_path / "c.cloud"
    save_point_cloud(path, np.zeros((4, 3)), binary=True)
    data = path.read_bytes()
    path.write_bytes(data[:-5])
    with pytest.raises(ParseError):
        load_point_cloud(path)


def test_missing_file():
    with pytest.raises(OSError):
        load_point_cloud("/nonexistent/path.cloud")
