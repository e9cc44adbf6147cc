"""Artifact writers: CSV/JSON formatting, SVG rendering, PNG emission, and
the run manifest."""

import json
import hashlib

import numpy as np

from curvetune.reports import (RunManifestWriter, fmt_float, plot_boundary_png,
                               write_boundary_svg, write_csv, write_json)


class TestFormatting:
    def test_fmt_float_round_trip(self):
        for v in (0.1, -3.5, 1e-12, 12345.6789, float("nan")):
            s = fmt_float(v)
            if v == v:
                assert float(s) == v
            else:
                assert s == "nan"

    def test_write_csv_header_and_rows(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(p, ["a[unit]", "b[unit]"], [(1, 0.5), (2, float("nan"))])
        lines = p.read_text().splitlines()
        assert lines[0] == "a[unit],b[unit]"
        assert lines[1] == "1,0.5"
        assert lines[2].endswith("nan")

    def test_write_json_sorted_stable(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_json(p1, {"b": 1, "a": [1.5, 2.5]})
        write_json(p2, {"a": [1.5, 2.5], "b": 1})
        assert p1.read_bytes() == p2.read_bytes()


class TestSvgAndPng:
    def test_svg_contains_scaled_vertices(self, tmp_path):
        p = tmp_path / "b.svg"
        poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
        write_boundary_svg(p, [poly])
        text = p.read_text()
        assert text.startswith("<svg")
        assert text.count("<polyline") == 1
        assert 'viewBox="0 0 1000 1000"' in text

    def test_png_emitted(self, tmp_path):
        p = tmp_path / "b.png"
        theta = np.linspace(0, 2 * np.pi, 50)
        poly = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        X = np.random.default_rng(0).normal(size=(20, 2))
        y = (np.linalg.norm(X, axis=1) > 1).astype(float)
        plot_boundary_png(p, [poly], data=(X, y), title="t")
        assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestManifest:
    def test_lists_outputs_with_hashes(self, tmp_path):
        man = RunManifestWriter(tmp_path, "cmd", {"k": 1}, seed=3)
        write_csv(man.path("x.csv"), ["a[u]"], [(1,)])
        man.finalize()
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert m["command"] == "cmd" and m["seed"] == 3
        names = {f["name"] for f in m["outputs"]}
        assert names == {"x.csv"}
        digest = hashlib.sha256((tmp_path / "x.csv").read_bytes()).hexdigest()
        assert m["outputs"][0]["sha256"] == digest
        assert "wall_clock_s" in m

    def test_config_hash_stable_under_key_order(self, tmp_path):
        m1 = RunManifestWriter(tmp_path / "1", "c", {"a": 1, "b": 2}, 0)
        m2 = RunManifestWriter(tmp_path / "2", "c", {"b": 2, "a": 1}, 0)
        j1 = json.loads(m1.finalize().read_text())
        j2 = json.loads(m2.finalize().read_text())
        assert j1["config_sha256"] == j2["config_sha256"]
