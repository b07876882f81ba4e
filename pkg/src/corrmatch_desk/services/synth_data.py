"""Synth-Data-Service - Erzeugt und speichert synthetische Segmentierungsdaten.

Jedes Bild ist eine reine Funktion von (Datensatz-Seed, Proben-ID): Formen,
Farben und Rauschen kommen aus einem eigenen Zufallsstrom je Probe. Dadurch
ist die Reihenfolge der Erzeugung egal, und eine einzelne Probe laesst sich
jederzeit nachbauen.

Jede Klasse hat eine feste Form (Rechteck, Scheibe, Dreieck - reihum) und eine
feste Grundfarbe. Spaetere Formen verdecken fruehere.

Dateiformat (CMDS, little-endian): Kopf mit Magic, Version, den ganzzahligen
Feldern der Spec als int32 und ``noise_std`` als float64; danach je Probe in
ID-Reihenfolge das Bild als float64 (C x H x W, row-major) und die Labelkarte
als uint8 (H x W).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image

from ..models.dataset import ConfigError, Dataset, DatasetSpec, Sample

logger = logging.getLogger(__name__)

MAGIC = b"CMDS"
FORMAT_VERSION = 1

_INT_FIELDS = (
    "seed",
    "n_labeled",
    "n_unlabeled",
    "n_val",
    "height",
    "width",
    "in_channels",
    "num_classes",
    "min_shapes",
    "max_shapes",
)
HEADER_DTYPE = np.dtype(
    [("magic", "S4"), ("version", "<u4")] + [(name, "<i4") for name in _INT_FIELDS] + [("noise_std", "<f8")]
)

_PALETTE_KEY = 0
_SAMPLE_KEY = 1
_MIN_COLOR_DISTANCE = 0.3


class DatasetFormatError(ValueError):
    """CMDS-Datei mit falschem Magic, falscher Version oder abgeschnitten."""


class ShapeKind(StrEnum):
    """Geometrie einer Klasse."""

    RECTANGLE = "rectangle"
    DISC = "disc"
    TRIANGLE = "triangle"


_KIND_CYCLE = (ShapeKind.RECTANGLE, ShapeKind.DISC, ShapeKind.TRIANGLE)


def kind_for_class(class_id: int) -> ShapeKind:
    """Klasse 1 ist Rechteck, 2 Scheibe, 3 Dreieck, danach wieder von vorn."""
    if class_id < 1:
        raise ValueError("Klasse 0 ist Hintergrund und hat keine Form")
    return _KIND_CYCLE[(class_id - 1) % len(_KIND_CYCLE)]


@dataclass(frozen=True)
class Shape:
    """Eine gezeichnete Form.

    Attributes:
        kind: Geometrie.
        class_id: Semantische Klasse (>= 1).
        row, col: Rechteck: linke obere Ecke. Scheibe: Mittelpunkt. Dreieck: Spitze.
        height, width: Rechteck und Dreieck: Ausdehnung. Scheibe: ungenutzt.
        radius: Nur Scheibe.
    """

    kind: ShapeKind
    class_id: int
    row: int
    col: int
    height: int = 0
    width: int = 0
    radius: float = 0.0

    def mask(self, height: int, width: int) -> NDArray[np.bool_]:
        """Zugehoerigkeit jedes Pixels zur Form."""
        rows, cols = np.mgrid[0:height, 0:width]
        if self.kind is ShapeKind.RECTANGLE:
            return (
                (rows >= self.row) & (rows < self.row + self.height) & (cols >= self.col) & (cols < self.col + self.width)
            )
        if self.kind is ShapeKind.DISC:
            return (rows - self.row) ** 2 + (cols - self.col) ** 2 <= self.radius**2
        # Dreieck mit Spitze oben, Basis unten; Breite waechst linear
        depth = rows - self.row
        half = self.width / 2.0
        inside_rows = (depth >= 0) & (depth < self.height)
        reach = half * depth / max(self.height - 1, 1)
        return inside_rows & (np.abs(cols - self.col) <= reach)


def _sample_rng(seed: int, sample_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SAMPLE_KEY, sample_id)))


def palette(spec: DatasetSpec) -> NDArray[np.float64]:
    """Grundfarbe je Klasse, ``K x Cin`` in [0.1, 0.9], nur vom Seed abhaengig.

    Farben werden so lange neu gezogen, bis alle Paare einen Mindestabstand
    haben; nach 1000 Versuchen gilt der letzte Zug.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(_PALETTE_KEY,)))
    colors = rng.uniform(0.1, 0.9, size=(spec.num_classes, spec.in_channels))
    for _ in range(1000):
        gaps = np.linalg.norm(colors[:, None, :] - colors[None, :, :], axis=-1)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= _MIN_COLOR_DISTANCE * np.sqrt(spec.in_channels / 3):
            break
        colors = rng.uniform(0.1, 0.9, size=(spec.num_classes, spec.in_channels))
    return colors


def _draw_shape(rng: np.random.Generator, spec: DatasetSpec) -> Shape:
    height, width = spec.height, spec.width
    class_id = int(rng.integers(1, spec.num_classes))
    kind = kind_for_class(class_id)
    if kind is ShapeKind.DISC:
        radius = float(rng.uniform(min(height, width) / 8, min(height, width) / 4))
        return Shape(kind, class_id, int(rng.integers(0, height)), int(rng.integers(0, width)), radius=radius)
    lo_h, hi_h = max(height // 5, 1), max(height // 2, 1)
    lo_w, hi_w = max(width // 5, 1), max(width // 2, 1)
    shape_h = int(rng.integers(lo_h, hi_h + 1))
    shape_w = int(rng.integers(lo_w, hi_w + 1))
    if kind is ShapeKind.RECTANGLE:
        row = int(rng.integers(0, height - shape_h + 1))
        col = int(rng.integers(0, width - shape_w + 1))
    else:
        row = int(rng.integers(0, height - shape_h + 1))
        col = int(rng.integers(shape_w // 2, width - shape_w // 2))
    return Shape(kind, class_id, row, col, height=shape_h, width=shape_w)


def _draw_shapes(rng: np.random.Generator, spec: DatasetSpec) -> list[Shape]:
    count = int(rng.integers(spec.min_shapes, spec.max_shapes + 1))
    return [_draw_shape(rng, spec) for _ in range(count)]


def sample_shapes(spec: DatasetSpec, sample_id: int) -> list[Shape]:
    """Die Formen einer Probe in Zeichenreihenfolge."""
    return _draw_shapes(_sample_rng(spec.seed, sample_id), spec)


def make_sample(spec: DatasetSpec, sample_id: int, colors: NDArray[np.float64], *, labeled: bool) -> Sample:
    """Baut eine Probe aus (Seed, ID) nach."""
    rng = _sample_rng(spec.seed, sample_id)
    shapes = _draw_shapes(rng, spec)

    label = np.zeros((spec.height, spec.width), dtype=np.uint8)
    for shape in shapes:
        label[shape.mask(spec.height, spec.width)] = shape.class_id

    image = colors[label].transpose(2, 0, 1).copy()
    if spec.noise_std > 0:
        image += rng.normal(0.0, spec.noise_std, size=image.shape)
    np.clip(image, 0.0, 1.0, out=image)
    return Sample(id=sample_id, image=image, ground_truth=label, label=label.copy() if labeled else None)


def generate(spec: DatasetSpec) -> Dataset:
    """Erzeugt alle drei Anteile.

    IDs sind global: beschriftet ``0..N_l-1``, danach unbeschriftet, danach
    Validierung.

    Raises:
        ConfigError: Wenn die Spec ungueltig ist.
    """
    spec.validate()
    colors = palette(spec)
    start_unlabeled = spec.n_labeled
    start_val = start_unlabeled + spec.n_unlabeled
    dataset = Dataset(
        spec=spec,
        labeled=[make_sample(spec, i, colors, labeled=True) for i in range(spec.n_labeled)],
        unlabeled=[make_sample(spec, i, colors, labeled=False) for i in range(start_unlabeled, start_val)],
        val=[make_sample(spec, i, colors, labeled=False) for i in range(start_val, start_val + spec.n_val)],
    )
    logger.debug(
        "Datensatz erzeugt: %d beschriftet, %d unbeschriftet, %d Validierung",
        len(dataset.labeled),
        len(dataset.unlabeled),
        len(dataset.val),
    )
    return dataset


def save(dataset: Dataset, path: Path) -> Path:
    """Schreibt den Datensatz als CMDS-Datei.

    Raises:
        ConfigError: Wenn ein Feld nicht in int32 passt.
        OSError: Wenn die Datei nicht geschrieben werden kann.
    """
    spec = dataset.spec
    header = np.zeros((), dtype=HEADER_DTYPE)
    header["magic"] = MAGIC
    header["version"] = FORMAT_VERSION
    limit = np.iinfo(np.int32)
    for name in _INT_FIELDS:
        value = int(getattr(spec, name))
        if not limit.min <= value <= limit.max:
            raise ConfigError(f"{name}={value} passt nicht in das Dateiformat (int32)")
        header[name] = value
    header["noise_std"] = spec.noise_std

    chunks = [header.tobytes()]
    for sample in dataset.all_samples():
        chunks.append(np.ascontiguousarray(sample.image, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(sample.ground_truth, dtype=np.uint8).tobytes())

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    return path


def load(path: Path) -> Dataset:
    """Liest eine CMDS-Datei.

    Raises:
        DatasetFormatError: Bei falschem Magic, unbekannter Version oder
            abgeschnittener Datei.
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise DatasetFormatError(f"{path}: Datei zu kurz fuer den Kopf")
    header = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise DatasetFormatError(f"{path}: kein CMDS-Datensatz")
    if int(header["version"]) != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: Version {int(header['version'])} wird nicht unterstuetzt")

    values: dict[str, int | float] = {name: int(header[name]) for name in _INT_FIELDS}
    values["noise_std"] = float(header["noise_std"])
    spec = DatasetSpec(**values)  # type: ignore[arg-type]
    try:
        spec.validate()
    except ConfigError as exc:
        raise DatasetFormatError(f"{path}: ungueltiger Kopf: {exc}") from exc

    image_shape = (spec.in_channels, spec.height, spec.width)
    image_bytes = int(np.prod(image_shape)) * 8
    label_bytes = spec.height * spec.width
    total = spec.n_labeled + spec.n_unlabeled + spec.n_val
    expected = HEADER_DTYPE.itemsize + total * (image_bytes + label_bytes)
    if len(raw) != expected:
        raise DatasetFormatError(f"{path}: {len(raw)} Bytes, erwartet {expected}")

    dataset = Dataset(spec=spec)
    offset = HEADER_DTYPE.itemsize
    for sample_id in range(total):
        image = np.frombuffer(raw, dtype="<f8", count=image_bytes // 8, offset=offset).reshape(image_shape)
        offset += image_bytes
        label = np.frombuffer(raw, dtype=np.uint8, count=label_bytes, offset=offset).reshape(spec.height, spec.width)
        offset += label_bytes
        labeled = sample_id < spec.n_labeled
        sample = Sample(
            id=sample_id,
            image=image.astype(np.float64),
            ground_truth=label.copy(),
            label=label.copy() if labeled else None,
        )
        if labeled:
            dataset.labeled.append(sample)
        elif sample_id < spec.n_labeled + spec.n_unlabeled:
            dataset.unlabeled.append(sample)
        else:
            dataset.val.append(sample)
    return dataset


def label_colors(num_classes: int) -> NDArray[np.uint8]:
    """Feste Anzeigefarben fuer Labelkarten; Hintergrund schwarz."""
    rng = np.random.default_rng(num_classes)
    colors = rng.integers(64, 256, size=(num_classes, 3)).astype(np.uint8)
    colors[0] = 0
    return colors


def preview(dataset: Dataset, path: Path, count: int = 8, zoom: int = 4) -> Path:
    """Schreibt einen Kontaktbogen als PNG: oben Bilder, unten Labelkarten."""
    samples = dataset.all_samples()[:count]
    spec = dataset.spec
    tile_h, tile_w = spec.height * zoom, spec.width * zoom
    sheet = Image.new("RGB", (max(len(samples), 1) * tile_w, 2 * tile_h))
    colors = label_colors(spec.num_classes)
    for index, sample in enumerate(samples):
        rgb = sample.image[:3] if spec.in_channels >= 3 else np.repeat(sample.image[:1], 3, axis=0)
        pixels = (rgb.transpose(1, 2, 0) * 255).round().astype(np.uint8)
        tile = Image.fromarray(pixels, "RGB").resize((tile_w, tile_h), Image.Resampling.NEAREST)
        sheet.paste(tile, (index * tile_w, 0))
        label_tile = Image.fromarray(colors[sample.ground_truth], "RGB").resize((tile_w, tile_h), Image.Resampling.NEAREST)
        sheet.paste(label_tile, (index * tile_w, tile_h))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sheet.save(path, "PNG")
    return path
