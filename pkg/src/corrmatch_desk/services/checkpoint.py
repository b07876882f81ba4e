"""Checkpoint-Service - Speichert und laedt Modellparameter (CMPT).

Aufbau, little-endian: Magic ``CMPT``, Version (uint32), danach bis zum
Dateiende je Tensor: Namenslaenge (uint32), Name (UTF-8), Rang (uint32),
Dimensionen (je uint32) und die Werte als float64.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import ConfigError
from .network import ModelParams

MAGIC = b"CMPT"
FORMAT_VERSION = 1

_U32 = np.dtype("<u4")
_F64 = np.dtype("<f8")


class CheckpointFormatError(ValueError):
    """CMPT-Datei mit falschem Magic, falscher Version oder abgeschnitten."""


def save_checkpoint(params: ModelParams, path: Path) -> Path:
    """Schreibt alle Parameter in ``named()``-Reihenfolge."""
    chunks = [MAGIC, np.array(FORMAT_VERSION, dtype=_U32).tobytes()]
    for name, tensor in params.named().items():
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype=_U32).tobytes())
        chunks.append(encoded)
        chunks.append(np.array([tensor.data.ndim, *tensor.data.shape], dtype=_U32).tobytes())
        chunks.append(np.ascontiguousarray(tensor.data, dtype=_F64).tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    return path


class _Reader:
    def __init__(self, raw: bytes, path: Path) -> None:
        self.raw = raw
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.raw):
            raise CheckpointFormatError(f"{self.path}: Datei abgeschnitten bei Byte {self.offset}")
        chunk = self.raw[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, count: int = 1) -> list[int]:
        return [int(v) for v in np.frombuffer(self.take(4 * count), dtype=_U32)]

    @property
    def done(self) -> bool:
        return self.offset >= len(self.raw)


def read_arrays(path: Path) -> dict[str, NDArray[np.float64]]:
    """Liest alle Tensoren als Arrays.

    Raises:
        CheckpointFormatError: Bei falschem Magic, Version oder Laenge.
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: kein CMPT-Checkpoint")
    (version,) = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: Version {version} wird nicht unterstuetzt")

    arrays: dict[str, NDArray[np.float64]] = {}
    while not reader.done:
        (name_length,) = reader.u32()
        name = reader.take(name_length).decode("utf-8")
        (rank,) = reader.u32()
        dims = reader.u32(rank)
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(reader.take(8 * count), dtype=_F64)
        arrays[name] = values.reshape(dims).astype(np.float64)
    return arrays


def load_checkpoint(path: Path) -> ModelParams:
    """Laedt einen Checkpoint als neue Blaetter mit Gradienten.

    Raises:
        CheckpointFormatError: Auch wenn Parameternamen fehlen oder unbekannt sind.
    """
    try:
        return ModelParams.from_arrays(read_arrays(path))
    except ConfigError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from exc
