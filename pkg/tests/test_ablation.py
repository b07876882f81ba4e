"""Tests fuer Ablationsreihen."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Any

import pytest

from corrmatch_desk.models.dataset import ConfigError
from corrmatch_desk.models.run_config import RunConfig, ThresholdMode
from corrmatch_desk.services import ablation
from corrmatch_desk.services.ablation import ABLATION_COLUMNS, SweepSpec, ThresholdChoice, Variant

SWEEP: dict[str, Any] = {
    "thresholds": [{"mode": "fixed", "value": 0.95}, {"mode": "relaxed_global"}],
    "variants": [{"name": "voll"}, {"name": "ohne_cutmix", "use_cutmix": False}],
    "seeds": [1],
    "overrides": {"total_iters": 1},
}


class TestSweepSpec:
    def test_cells_in_fixed_order(self) -> None:
        spec = SweepSpec.from_dict({**SWEEP, "seeds": [1, 2]})
        cells = [(t.label, v.name, s) for t, v, s in spec.cells()]
        assert cells == [
            ("fixed-0.95", "voll", 1),
            ("fixed-0.95", "voll", 2),
            ("fixed-0.95", "ohne_cutmix", 1),
            ("fixed-0.95", "ohne_cutmix", 2),
            ("relaxed_global", "voll", 1),
            ("relaxed_global", "voll", 2),
            ("relaxed_global", "ohne_cutmix", 1),
            ("relaxed_global", "ohne_cutmix", 2),
        ]

    @pytest.mark.parametrize(
        "changes",
        [
            {"extra": 1},
            {"seeds": []},
            {"seeds": [-1]},
            {"seeds": [True]},
            {"thresholds": [{"mode": "adaptive"}]},
            {"thresholds": [{"value": 0.5}]},
            {"variants": [{"name": "x", "lambda1": 0.0}]},
            {"variants": [{"name": "x", "use_cutmix": "no"}]},
            {"variants": [{"use_cutmix": False}]},
            {"overrides": [1]},
        ],
    )
    def test_invalid(self, changes: dict[str, Any]) -> None:
        with pytest.raises(ConfigError):
            SweepSpec.from_dict({**SWEEP, **changes})

    def test_load_bad_file(self, tmp_path: Path) -> None:
        path = tmp_path / "sweep.json"
        path.write_text("{", encoding="utf-8")
        with pytest.raises(ConfigError, match="Sweep"):
            SweepSpec.load(path)

    def test_threshold_overrides(self) -> None:
        assert ThresholdChoice(ThresholdMode.FIXED, 0.7).overrides() == {"threshold_mode": "fixed", "threshold_value": 0.7}
        assert ThresholdChoice(ThresholdMode.RELAXED_PER_CLASS).overrides() == {"threshold_mode": "relaxed_per_class"}
        assert ThresholdChoice.overrides.__doc__


class TestCellConfig:
    def test_layers_changes(self, tiny_config: RunConfig, tmp_path: Path) -> None:
        spec = SweepSpec.from_dict(SWEEP)
        config = ablation.cell_config(
            tiny_config, spec, ThresholdChoice(ThresholdMode.FIXED, 0.9), Variant("v", {"use_cutmix": False}), 5, tmp_path
        )
        assert config.seed == 5
        assert config.total_iters == 1
        assert config.threshold_mode is ThresholdMode.FIXED
        assert config.threshold_value == 0.9
        assert config.use_cutmix is False
        assert Path(config.out_dir) == tmp_path / "fixed-0.9__v__seed5"

    def test_override_may_set_seed_without_clash(self, tiny_config: RunConfig, tmp_path: Path) -> None:
        spec = SweepSpec.from_dict({**SWEEP, "overrides": {"seed": 99}})
        config = ablation.cell_config(tiny_config, spec, spec.thresholds[0], spec.variants[0], 3, tmp_path)
        assert config.seed == 3


class TestRunSweep:
    def test_rows_and_csv(self, tiny_config: RunConfig, tmp_path: Path) -> None:
        rows = ablation.run_sweep(tiny_config, SweepSpec.from_dict(SWEEP), tmp_path)
        assert len(rows) == 4
        assert all(row["status"] == "ok" for row in rows)
        with (tmp_path / "ablation.csv").open(encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            assert tuple(reader.fieldnames or ()) == ABLATION_COLUMNS
            assert len(list(reader)) == 4
        assert (tmp_path / "relaxed_global__ohne_cutmix__seed1" / "summary.json").is_file()

    def test_failed_cell_is_marked_and_sweep_continues(
        self, tiny_config: RunConfig, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        real_trainer = ablation.Trainer

        class FlakyTrainer(real_trainer):  # type: ignore[misc, valid-type]
            def run(self, out_dir: Path | None = None) -> Any:
                if not self.config.use_cutmix:
                    raise RuntimeError("kaputt")
                return super().run(out_dir)

        monkeypatch.setattr(ablation, "Trainer", FlakyTrainer)
        seen: list[str] = []
        rows = ablation.run_sweep(tiny_config, SweepSpec.from_dict(SWEEP), tmp_path, progress=lambda r: seen.append(r["status"]))
        assert [row["status"] for row in rows] == ["ok", "failed", "ok", "failed"]
        assert seen == ["ok", "failed", "ok", "failed"]
        assert rows[1]["error"] == "RuntimeError: kaputt"
        assert "final_val_miou" not in rows[1]

    def test_invalid_cell_config_fails_the_row(self) -> None:
        row = ablation.run_cell({"seed": 1, "unbekannt": 2}, "fixed-0.95", "voll")
        assert row["status"] == "failed"
        assert "ConfigError" in row["error"]

    def test_workers_give_the_same_rows(self, tiny_config: RunConfig, tmp_path: Path) -> None:
        spec = SweepSpec.from_dict(SWEEP)
        serial = ablation.run_sweep(tiny_config, spec, tmp_path / "serial")
        parallel = ablation.run_sweep(tiny_config, spec, tmp_path / "parallel", workers=2)
        assert parallel == serial
        assert (tmp_path / "serial" / "ablation.csv").read_bytes() == (tmp_path / "parallel" / "ablation.csv").read_bytes()
