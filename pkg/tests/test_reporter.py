"""Tests fuer CSV, SVG, PNG und HTML."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from corrmatch_desk.services.reporter import Reporter, format_value, render_line_plot


class TestFormatValue:
    def test_numbers(self) -> None:
        assert format_value(0.1) == "0.10000000000000001"
        assert format_value(np.float64(0.25)) == "0.25"
        assert format_value(3) == "3"
        assert format_value(np.int64(7)) == "7"
        assert format_value(True) == "1"
        assert format_value(None) == ""

    def test_round_trip_is_exact(self) -> None:
        rng = np.random.default_rng(0)
        for value in rng.normal(size=50):
            assert float(format_value(value)) == value


class TestCsv:
    def test_fixed_columns_and_blank_cells(self, tmp_path: Path) -> None:
        path = Reporter.save_csv([{"a": 1, "b": 0.5}, {"a": 2}], ("a", "b"), tmp_path / "out" / "t.csv")
        assert Path(path).read_text(encoding="utf-8") == "a,b\n1,0.5\n2,\n"

    def test_json(self, tmp_path: Path) -> None:
        path = Reporter.save_json({"b": 1, "a": "ä"}, tmp_path / "s.json")
        text = Path(path).read_text(encoding="utf-8")
        assert json.loads(text) == {"a": "ä", "b": 1}
        assert text.index('"a"') < text.index('"b"')


class TestPlots:
    def test_svg_contains_one_line_per_series(self) -> None:
        svg = render_line_plot({"x": [(0, 1.0), (1, 2.0)], "y": [(0, 0.5), (1, float("nan"))]}, "Titel", "loss")
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2
        assert "Titel" in svg

    def test_empty_series(self) -> None:
        svg = render_line_plot({"leer": []}, "t")
        assert "<polyline" not in svg
        assert "leer" in svg

    def test_title_is_escaped(self) -> None:
        assert "a &lt;b&gt;" in render_line_plot({}, "a <b>")

    def test_weight_map_png(self, tmp_path: Path) -> None:
        weights = np.array([[0.0, 0.5], [0.25, 1.0]])
        path = Reporter.save_weight_map(weights, tmp_path / "w.png", zoom=4)
        with Image.open(path) as image:
            assert image.size == (8, 8)
            assert image.mode == "L"
            assert image.getpixel((7, 7)) == 255
            assert image.getpixel((0, 0)) == 0

    def test_html_embeds_plots(self, tmp_path: Path) -> None:
        plot = Path(Reporter.save_line_plot({"tau": [(0, 0.5), (1, 0.6)]}, tmp_path / "tau.svg", "tau"))
        path = Reporter.save_html({"final_val_miou": 0.5, "iterations": 3}, [plot], tmp_path / "report.html")
        html = Path(path).read_text(encoding="utf-8")
        assert "<polyline" in html
        assert "0.5000" in html
        assert "final_val_miou" in html
