"""Augment-Service - Schwache und starke Sichten sowie CutMix.

Die schwache Sicht ist rein geometrisch: skalieren (bilinear fuer Bilder,
naechster Nachbar fuer Labels), spiegeln, auffuellen, zuschneiden. Die starke
Sicht setzt auf genau dieser Geometrie auf und veraendert nur Farbwerte - so
liegen beide Sichten Pixel fuer Pixel uebereinander.

Ist das skalierte Bild kleiner als der Ausschnitt, wird rechts und unten
aufgefuellt: Bild mit 0, Label mit IGNORE. ``GeometryRecord.valid_mask()``
kennzeichnet die Pixel, die aus dem echten Bild stammen.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import Sample
from ..numeric.ops import IGNORE, nearest_downsample, resize_array

FloatArray = NDArray[np.float64]

SCALE_RANGE = (0.5, 2.0)
FLIP_PROBABILITY = 0.5
GAIN_RANGE = (0.6, 1.4)
BIAS_RANGE = (-0.2, 0.2)
GRAYSCALE_PROBABILITY = 0.2
BLUR_PROBABILITY = 0.5
SIGMA_RANGE = (0.1, 1.0)
CUTMIX_AREA = (0.25, 0.5)

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GeometryRecord:
    """Die geometrische Transformation einer Probe.

    Attributes:
        scale: Skalierungsfaktor.
        flip: Horizontal gespiegelt (nach dem Skalieren).
        crop_offset: (Zeile, Spalte) des Ausschnitts im aufgefuellten Bild.
        crop_size: (Hoehe, Breite) des Ausschnitts.
        source_size: (Hoehe, Breite) des Originals.
    """

    scale: float
    flip: bool
    crop_offset: tuple[int, int]
    crop_size: tuple[int, int]
    source_size: tuple[int, int]

    def __post_init__(self) -> None:
        padded_h, padded_w = self.padded_size
        row, col = self.crop_offset
        crop_h, crop_w = self.crop_size
        if row < 0 or col < 0 or row + crop_h > padded_h or col + crop_w > padded_w:
            raise ValueError(f"Ausschnitt {self.crop_offset}+{self.crop_size} liegt nicht im Bild {self.padded_size}")

    @classmethod
    def identity(cls, height: int, width: int) -> GeometryRecord:
        """Keine Veraenderung."""
        return cls(scale=1.0, flip=False, crop_offset=(0, 0), crop_size=(height, width), source_size=(height, width))

    @property
    def scaled_size(self) -> tuple[int, int]:
        """Groesse nach dem Skalieren, kaufmaennisch gerundet."""
        height, width = self.source_size
        return max(1, math.floor(height * self.scale + 0.5)), max(1, math.floor(width * self.scale + 0.5))

    @property
    def padded_size(self) -> tuple[int, int]:
        """Groesse nach dem Auffuellen auf mindestens die Ausschnittgroesse."""
        scaled_h, scaled_w = self.scaled_size
        return max(scaled_h, self.crop_size[0]), max(scaled_w, self.crop_size[1])

    def valid_mask(self) -> NDArray[np.bool_]:
        """Ausschnittpixel, die nicht aus dem Auffuellrand stammen."""
        scaled_h, scaled_w = self.scaled_size
        row, col = self.crop_offset
        crop_h, crop_w = self.crop_size
        rows = np.arange(row, row + crop_h) < scaled_h
        cols = np.arange(col, col + crop_w) < scaled_w
        return rows[:, None] & cols[None, :]


def hflip(array: NDArray[np.generic]) -> NDArray[np.generic]:
    """Spiegelt entlang der letzten Achse."""
    return array[..., ::-1].copy()


def apply_geometry(array: NDArray[np.generic], geom: GeometryRecord, *, is_label: bool = False) -> NDArray[np.generic]:
    """Wendet eine Geometrie auf ein Bild (C x H x W) oder eine Labelkarte (H x W) an."""
    scaled_h, scaled_w = geom.scaled_size
    if is_label:
        out: NDArray[np.generic] = nearest_downsample(array, scaled_h, scaled_w)
    elif (scaled_h, scaled_w) != array.shape[1:]:
        out = resize_array(np.asarray(array, dtype=np.float64), scaled_h, scaled_w)
    else:
        out = np.asarray(array, dtype=np.float64).copy()

    if geom.flip:
        out = hflip(out)

    padded_h, padded_w = geom.padded_size
    pad = ((0, padded_h - scaled_h), (0, padded_w - scaled_w))
    if pad != ((0, 0), (0, 0)):
        if is_label:
            out = np.pad(out, pad, constant_values=IGNORE)
        else:
            out = np.pad(out, ((0, 0), *pad), constant_values=0.0)

    row, col = geom.crop_offset
    crop_h, crop_w = geom.crop_size
    return out[..., row : row + crop_h, col : col + crop_w].copy()


def sample_geometry(
    rng: np.random.Generator,
    source_size: tuple[int, int],
    crop_size: tuple[int, int] | None = None,
    scale_range: tuple[float, float] = SCALE_RANGE,
) -> GeometryRecord:
    """Zieht Skalierung, Spiegelung und Ausschnitt."""
    crop = source_size if crop_size is None else crop_size
    scale = float(rng.uniform(*scale_range))
    flip = bool(rng.random() < FLIP_PROBABILITY)
    probe = GeometryRecord(scale, flip, (0, 0), crop, source_size)
    padded_h, padded_w = probe.padded_size
    row = int(rng.integers(0, padded_h - crop[0] + 1))
    col = int(rng.integers(0, padded_w - crop[1] + 1))
    return GeometryRecord(scale, flip, (row, col), crop, source_size)


def weak_augment(
    sample: Sample,
    rng: np.random.Generator,
    *,
    crop_size: tuple[int, int] | None = None,
    scale_range: tuple[float, float] = SCALE_RANGE,
) -> tuple[FloatArray, NDArray[np.uint8] | None, GeometryRecord]:
    """Schwache Sicht einer Probe.

    Returns:
        Bild, Labelkarte (nur bei beschrifteten Proben) und die Geometrie.
    """
    height, width = sample.image.shape[1:]
    geom = sample_geometry(rng, (height, width), crop_size, scale_range)
    view = apply_geometry(sample.image, geom).astype(np.float64)
    label_view = None
    if sample.label is not None:
        label_view = apply_geometry(sample.label, geom, is_label=True).astype(np.uint8)
    return view, label_view, geom


# ----------------------------------------------------------------------
# Starke Sicht (nur Farbwerte)
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class StrongParams:
    """Parameter der photometrischen Stoerung.

    ``blur_sigma`` ist None, wenn nicht weichgezeichnet wird.
    """

    gain: FloatArray
    bias: FloatArray
    grayscale: bool = False
    blur_sigma: float | None = None

    @classmethod
    def identity(cls, channels: int) -> StrongParams:
        """Stoerung, die nichts veraendert."""
        return cls(gain=np.ones(channels), bias=np.zeros(channels))


def sample_strong_params(rng: np.random.Generator, channels: int) -> StrongParams:
    """Zieht die Stoerung; verbraucht immer gleich viele Zufallszahlen."""
    gain = rng.uniform(*GAIN_RANGE, size=channels)
    bias = rng.uniform(*BIAS_RANGE, size=channels)
    grayscale = bool(rng.random() < GRAYSCALE_PROBABILITY)
    blur = bool(rng.random() < BLUR_PROBABILITY)
    sigma = float(rng.uniform(*SIGMA_RANGE))
    return StrongParams(gain=gain, bias=bias, grayscale=grayscale, blur_sigma=sigma if blur else None)


def to_grayscale(image: FloatArray) -> FloatArray:
    """Setzt alle Kanaele auf die Helligkeit (bei drei Kanaelen Luma, sonst Mittel)."""
    if image.shape[0] == 3:
        gray = np.tensordot(_LUMA, image, axes=(0, 0))
    else:
        gray = image.mean(axis=0)
    return np.broadcast_to(gray, image.shape).copy()


def gaussian_kernel(sigma: float) -> FloatArray:
    """Normierter 1D-Gausskern mit Radius ``max(1, ceil(3 sigma))``."""
    radius = max(1, math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    result: FloatArray = kernel / kernel.sum()
    return result


def gaussian_blur(image: FloatArray, sigma: float) -> FloatArray:
    """Separierbare Weichzeichnung je Kanal, Rand gespiegelt."""
    kernel = gaussian_kernel(sigma)
    radius = kernel.size // 2
    out = image
    for axis in (1, 2):
        pad = [(0, 0)] * 3
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect")
        windows = np.lib.stride_tricks.sliding_window_view(padded, kernel.size, axis=axis)
        out = windows @ kernel
    return out


def apply_strong(view: FloatArray, params: StrongParams) -> FloatArray:
    """Farbstoerung, Graustufen, Weichzeichnung, dann Beschneiden auf [0, 1]."""
    out = view * params.gain[:, None, None] + params.bias[:, None, None]
    if params.grayscale:
        out = to_grayscale(out)
    if params.blur_sigma is not None:
        out = gaussian_blur(out, params.blur_sigma)
    result: FloatArray = np.clip(out, 0.0, 1.0)
    return result


def strong_augment(view: FloatArray, rng: np.random.Generator) -> FloatArray:
    """Starke Sicht aus einer schwachen; die Pixelpositionen bleiben gleich."""
    return apply_strong(view, sample_strong_params(rng, view.shape[0]))


# ----------------------------------------------------------------------
# CutMix
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CutMixBox:
    """Rechteck, das aus Probe ``source`` in das Ziel kopiert wird."""

    source: int
    row: int
    col: int
    height: int
    width: int

    def area_fraction(self, height: int, width: int) -> float:
        """Anteil des Rechtecks an der Bildflaeche."""
        return self.height * self.width / (height * width)

    def fits(self, height: int, width: int) -> bool:
        """Liegt das Rechteck vollstaendig im Bild?"""
        return (
            self.row >= 0
            and self.col >= 0
            and self.height >= 0
            and self.width >= 0
            and self.row + self.height <= height
            and self.col + self.width <= width
        )


def sample_cutmix_boxes(count: int, height: int, width: int, rng: np.random.Generator) -> list[CutMixBox | None]:
    """Ein Rechteck je Ziel mit Flaechenanteil in [0.25, 0.5] und fremdem Spender.

    Bei einem Batch aus einer Probe gibt es keinen Spender: ``[None]``.
    """
    if count < 2:
        return [None] * count
    area = height * width
    boxes: list[CutMixBox | None] = []
    for target in range(count):
        donor = (target + int(rng.integers(1, count))) % count
        box_h = int(rng.integers(math.ceil(height / 2), height + 1))
        lo_w = max(1, math.ceil(CUTMIX_AREA[0] * area / box_h))
        hi_w = min(width, math.floor(CUTMIX_AREA[1] * area / box_h))
        box_w = int(rng.integers(lo_w, max(lo_w, hi_w) + 1))
        row = int(rng.integers(0, height - box_h + 1))
        col = int(rng.integers(0, width - box_w + 1))
        boxes.append(CutMixBox(donor, row, col, box_h, box_w))
    return boxes


def paste(batch: Sequence[NDArray[np.generic]], boxes: Sequence[CutMixBox | None]) -> list[NDArray[np.generic]]:
    """Kopiert die Rechtecke aus den (ungemischten) Spendern in die Ziele.

    Die letzten beiden Achsen sind die Bildachsen; vorangehende Achsen (Kanaele,
    Klassen) werden mitkopiert.
    """
    if len(batch) != len(boxes):
        raise ValueError(f"{len(batch)} Proben, aber {len(boxes)} Rechtecke")
    mixed = []
    for target, box in enumerate(boxes):
        out = np.array(batch[target], copy=True)
        if box is not None and box.height > 0 and box.width > 0:
            if not box.fits(*out.shape[-2:]):
                raise ValueError(f"Rechteck {box} liegt nicht im Bild {out.shape[-2:]}")
            rows = slice(box.row, box.row + box.height)
            cols = slice(box.col, box.col + box.width)
            out[..., rows, cols] = batch[box.source][..., rows, cols]
        mixed.append(out)
    return mixed


def cutmix(
    views: Sequence[FloatArray],
    pseudo: Sequence[NDArray[np.generic]],
    masks: Sequence[NDArray[np.generic]],
    rng: np.random.Generator,
    *,
    boxes: Sequence[CutMixBox | None] | None = None,
) -> tuple[list[FloatArray], list[NDArray[np.generic]], list[NDArray[np.generic]]]:
    """Mischt Sichten, Pseudo-Labels und Masken mit denselben Rechtecken.

    Masken werden pixelweise wie die Labels gemischt; ein kopiertes Label
    bringt also immer seine eigene Maske mit. Ein Batch aus einer Probe bleibt
    unveraendert.
    """
    if boxes is None:
        height, width = views[0].shape[-2:] if views else (0, 0)
        boxes = sample_cutmix_boxes(len(views), height, width, rng)
    return paste(views, boxes), paste(pseudo, boxes), paste(masks, boxes)  # type: ignore[return-value]
