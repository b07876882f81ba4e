"""Report-Service - CSV-Tabellen, SVG-Diagramme, PNG-Karten und HTML-Uebersicht.

Diagramme sind eigenstaendige SVG-Dateien. Zahlen in CSV-Dateien haben 17
signifikante Stellen; gleiche Laeufe ergeben byteweise gleiche Dateien.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from ..i18n import t

PLOT_WIDTH = 640
PLOT_HEIGHT = 360
_MARGIN = 48
_COLORS = ("#58a6ff", "#3fb950", "#d29922", "#f85149", "#bc8cff", "#39c5cf", "#8b949e")

Series = Sequence[tuple[float, float]]


def format_value(value: object) -> str:
    """Zahl fuer CSV: 17 signifikante Stellen, ``None`` als leeres Feld."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        return format(float(value), ".17g")
    return str(value)


class Reporter:
    """Schreibt die Ergebnisdateien eines Laufs."""

    @staticmethod
    def save_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str], output_path: Path) -> str:
        """Speichert Zeilen als CSV mit fester Spaltenfolge.

        Args:
            rows: Zeilen; fehlende Spalten bleiben leer.
            columns: Spaltenfolge.
            output_path: Pfad fuer die CSV-Datei.

        Returns:
            Absoluter Pfad der gespeicherten Datei.
        """
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_value(row.get(column)) for column in columns])
        return str(path.resolve())

    @staticmethod
    def save_json(data: Mapping[str, Any], output_path: Path) -> str:
        """Speichert ein Dictionary als JSON."""
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8")
        return str(path.resolve())

    @staticmethod
    def save_line_plot(series: Mapping[str, Series], output_path: Path, title: str, y_label: str = "") -> str:
        """Speichert ein Liniendiagramm als SVG.

        Args:
            series: Name -> Punkte (x, y); nicht endliche Punkte werden ausgelassen.
            output_path: Pfad fuer die SVG-Datei.
            title: Ueberschrift.
            y_label: Beschriftung der y-Achse.

        Returns:
            Absoluter Pfad der gespeicherten Datei.
        """
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_line_plot(series, title, y_label), encoding="utf-8")
        return str(path.resolve())

    @staticmethod
    def save_weight_map(weights: NDArray[np.float64], output_path: Path, zoom: int = 16) -> str:
        """Speichert eine Gewichtskarte ``h x w`` als Graustufen-PNG (Maximum = weiss)."""
        peak = float(weights.max()) if weights.size else 0.0
        scaled = weights / peak if peak > 0 else np.zeros_like(weights)
        pixels = (np.clip(scaled, 0.0, 1.0) * 255).round().astype(np.uint8)
        height, width = pixels.shape
        image = Image.fromarray(pixels, "L").resize((width * zoom, height * zoom), Image.Resampling.NEAREST)
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        image.save(path, "PNG")
        return str(path.resolve())

    @staticmethod
    def save_html(summary: Mapping[str, Any], plots: Sequence[Path], output_path: Path) -> str:
        """Speichert eine HTML-Uebersicht mit den Kennzahlen und eingebetteten Diagrammen.

        Args:
            summary: Kennzahlen (Name -> Wert).
            plots: SVG-Dateien, die inline eingebettet werden.
            output_path: Pfad fuer die HTML-Datei.

        Returns:
            Absoluter Pfad der gespeicherten Datei.
        """
        cards = []
        for key, value in summary.items():
            shown = f"{value:.4f}" if isinstance(value, float) else str(value)
            cards.append(
                f"<div class='summary-card'><div class='label'>{_html_escape(key)}</div>"
                f"<div class='value'>{_html_escape(shown)}</div></div>"
            )
        figures = [
            f"<figure>{plot.read_text(encoding='utf-8')}</figure>" for plot in plots if Path(plot).is_file()
        ]

        html = f"""<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8">
    <title>{_html_escape(t("report.title"))}</title>
    <style>
        body {{ font-family: -apple-system, BlinkMacSystemFont, 'Segoe UI', Roboto, sans-serif; background: #0d1117; color: #c9d1d9; padding: 20px; }}
        h1 {{ color: #58a6ff; margin-bottom: 20px; font-size: 1.5rem; }}
        .summary {{ display: flex; gap: 15px; flex-wrap: wrap; margin-bottom: 25px; }}
        .summary-card {{ background: #161b22; border: 1px solid #30363d; border-radius: 6px; padding: 15px 20px; min-width: 120px; }}
        .summary-card .label {{ color: #8b949e; font-size: 0.8rem; text-transform: uppercase; }}
        .summary-card .value {{ font-size: 1.4rem; font-weight: bold; margin-top: 5px; }}
        figure {{ display: inline-block; margin: 0 15px 15px 0; background: #161b22; border: 1px solid #30363d; border-radius: 6px; }}
    </style>
</head>
<body>
    <h1>{_html_escape(t("report.title"))}</h1>
    <div class="summary">{"".join(cards)}</div>
    {"".join(figures)}
</body>
</html>
"""
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(html, encoding="utf-8")
        return str(path.resolve())


def _finite_points(points: Series) -> list[tuple[float, float]]:
    return [(float(x), float(y)) for x, y in points if math.isfinite(x) and math.isfinite(y)]


def render_line_plot(series: Mapping[str, Series], title: str, y_label: str = "") -> str:
    """Baut den SVG-Text eines Liniendiagramms."""
    cleaned = {name: _finite_points(points) for name, points in series.items()}
    all_points = [p for points in cleaned.values() for p in points]
    if all_points:
        xs = [p[0] for p in all_points]
        ys = [p[1] for p in all_points]
        x_min, x_max = min(xs), max(xs)
        y_min, y_max = min(ys), max(ys)
    else:
        x_min, x_max, y_min, y_max = 0.0, 1.0, 0.0, 1.0
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_min, y_max = y_min - 0.5, y_max + 0.5

    inner_w = PLOT_WIDTH - 2 * _MARGIN
    inner_h = PLOT_HEIGHT - 2 * _MARGIN

    def sx(x: float) -> float:
        return _MARGIN + (x - x_min) / (x_max - x_min) * inner_w

    def sy(y: float) -> float:
        return PLOT_HEIGHT - _MARGIN - (y - y_min) / (y_max - y_min) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" '
        f'viewBox="0 0 {PLOT_WIDTH} {PLOT_HEIGHT}">',
        f'<rect width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" fill="#0d1117"/>',
        f'<text x="{PLOT_WIDTH / 2:.1f}" y="24" fill="#c9d1d9" font-size="15" text-anchor="middle" '
        f'font-family="sans-serif">{_html_escape(title)}</text>',
        f'<line x1="{_MARGIN}" y1="{PLOT_HEIGHT - _MARGIN}" x2="{PLOT_WIDTH - _MARGIN}" '
        f'y2="{PLOT_HEIGHT - _MARGIN}" stroke="#30363d"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{PLOT_HEIGHT - _MARGIN}" stroke="#30363d"/>',
    ]
    for value, anchor_y in ((y_min, sy(y_min)), (y_max, sy(y_max))):
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{anchor_y + 4:.1f}" fill="#8b949e" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{value:.3g}</text>'
        )
    for value in (x_min, x_max):
        parts.append(
            f'<text x="{sx(value):.1f}" y="{PLOT_HEIGHT - _MARGIN + 16}" fill="#8b949e" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{value:.0f}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{PLOT_HEIGHT / 2:.1f}" fill="#8b949e" font-size="12" font-family="sans-serif" '
            f'transform="rotate(-90 14 {PLOT_HEIGHT / 2:.1f})" text-anchor="middle">{_html_escape(y_label)}</text>'
        )

    for index, (name, points) in enumerate(cleaned.items()):
        color = _COLORS[index % len(_COLORS)]
        if points:
            coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points)
            parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        legend_y = _MARGIN + 14 * index
        parts.append(
            f'<text x="{PLOT_WIDTH - _MARGIN - 4}" y="{legend_y}" fill="{color}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{_html_escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _html_escape(text: str) -> str:
    """Escaped HTML-Sonderzeichen.

    Args:
        text: Zu escapender Text.

    Returns:
        HTML-sicherer Text.
    """
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&#x27;")
    )
