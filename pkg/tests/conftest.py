"""Gemeinsame Test-Vorbereitung.

Alle Tests laufen mit fester Sprache und ohne ``CORRMATCH_SEED`` aus der
Umgebung. Ohne diese Trennung haengen Texte und Seeds an dem Rechner, auf dem
die Tests gerade laufen.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from corrmatch_desk import i18n
from corrmatch_desk.models.dataset import Dataset
from corrmatch_desk.models.run_config import SEED_ENV, RunConfig
from corrmatch_desk.services import synth_data


@pytest.fixture(autouse=True)
def _german_locale() -> None:
    """Setzt fuer jeden Test die deutsche Sprachdatei."""
    i18n.load_locale("de")


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(SEED_ENV, raising=False)


TINY: dict[str, Any] = {
    "seed": 7,
    "n_labeled": 2,
    "n_unlabeled": 4,
    "n_val": 2,
    "height": 8,
    "width": 8,
    "num_classes": 3,
    "feature_dim": 8,
    "total_iters": 3,
    "batch_labeled": 1,
    "batch_unlabeled": 2,
    "eval_interval": 2,
    "dump_correlation": False,
}


@pytest.fixture
def tiny_values(tmp_path: Path) -> dict[str, Any]:
    """Inhalt einer Konfigurationsdatei fuer Laeufe von Sekundenbruchteilen."""
    return {**TINY, "out_dir": str(tmp_path / "run")}


@pytest.fixture
def tiny_config(tiny_values: dict[str, Any]) -> RunConfig:
    return RunConfig.from_dict(tiny_values)


@pytest.fixture
def tiny_dataset(tiny_config: RunConfig) -> Dataset:
    return synth_data.generate(tiny_config.dataset_spec())


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
