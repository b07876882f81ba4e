"""Tests fuer den kompletten Lauf und seine Ergebnisdateien."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from corrmatch_desk.models.dataset import ConfigError, Dataset
from corrmatch_desk.models.run_config import RunConfig, ThresholdMode
from corrmatch_desk.services import network, synth_data, trainer
from corrmatch_desk.services.checkpoint import load_checkpoint
from corrmatch_desk.services.engine import NumericalAbort
from corrmatch_desk.services.trainer import METRICS_COLUMNS, Trainer

# Standardrezept: 3000 Schritte in hoechstens 5 Minuten
STEP_BUDGET_SECONDS = 300.0 / 3000


def _rows(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


class TestRun:
    def test_output_files(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        result = Trainer(tiny_config, tiny_dataset).run(tmp_path / "run")
        names = {p.name for p in result.out_dir.iterdir()}
        assert {
            "config.json",
            "metrics.csv",
            "diagnostics.csv",
            "checkpoint.cmpt",
            "summary.json",
            "losses.svg",
            "tau.svg",
            "ratios.svg",
            "val_miou.svg",
            "report.html",
        } <= names
        assert "abort.json" not in names
        assert not any(name.startswith("correlation_") for name in names)

    def test_metrics_rows(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        Trainer(tiny_config, tiny_dataset).run(tmp_path)
        rows = _rows(tmp_path / "metrics.csv")
        assert [r["iteration"] for r in rows] == ["0", "1", "2"]
        assert list(rows[0]) == list(METRICS_COLUMNS)
        # Auswertung nach Schritt 2 (Intervall) und nach dem letzten Schritt
        assert rows[0]["val_miou"] == ""
        assert rows[1]["val_miou"] != ""
        assert rows[2]["val_miou"] != ""
        assert float(rows[0]["lr"]) == tiny_config.lr0

    def test_same_config_same_bytes(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        Trainer(tiny_config, tiny_dataset).run(tmp_path / "a")
        Trainer(tiny_config, tiny_dataset).run(tmp_path / "b")
        for name in ("metrics.csv", "diagnostics.csv", "checkpoint.cmpt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_single_iteration(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        result = Trainer(tiny_config.with_overrides(total_iters=1), tiny_dataset).run(tmp_path)
        assert len(_rows(tmp_path / "metrics.csv")) == 1
        assert len(_rows(tmp_path / "diagnostics.csv")) == 1
        assert result.summary["iterations"] == 1

    def test_supervised_only_logs_zero_unlabeled_terms(
        self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path
    ) -> None:
        Trainer(tiny_config.with_overrides(use_unlabeled=False), tiny_dataset).run(tmp_path)
        for row in _rows(tmp_path / "metrics.csv"):
            assert float(row["lu_h"]) == float(row["lu_s"]) == float(row["lu_c"]) == 0.0

    def test_logged_total_matches_weighted_terms(
        self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path
    ) -> None:
        Trainer(tiny_config, tiny_dataset).run(tmp_path)
        for row in _rows(tmp_path / "metrics.csv"):
            v = {k: float(row[k]) for k in ("ls_h", "ls_c", "lu_h", "lu_s", "lu_c", "total")}
            expected = 0.5 * (0.5 * (v["ls_h"] + v["ls_c"]) + 0.5 * v["lu_h"] + 0.25 * v["lu_s"] + 0.25 * v["lu_c"])
            assert abs(v["total"] - expected) <= 1e-12

    def test_summary_and_checkpoint(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        result = Trainer(tiny_config, tiny_dataset).run(tmp_path)
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert summary["final_val_miou"] == result.final_val_miou
        assert 0.0 <= summary["final_val_miou"] <= 1.0
        assert summary["final_tau"] == result.threshold.tau
        assert {"mask_ratio", "mining_ratio", "pixel_accuracy"} <= set(summary)
        loaded = load_checkpoint(tmp_path / "checkpoint.cmpt")
        for name, value in result.params.arrays().items():
            np.testing.assert_array_equal(loaded.named()[name].data, value)

    def test_config_is_written_first(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        Trainer(tiny_config, tiny_dataset).run(tmp_path)
        assert RunConfig.load(tmp_path / "config.json") == tiny_config

    def test_progress_callback(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        calls: list[tuple[int, int]] = []
        Trainer(tiny_config, tiny_dataset, progress=lambda done, total: calls.append((done, total))).run(tmp_path)
        assert calls == [(1, 3), (2, 3), (3, 3)]

    def test_correlation_dumps(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        config = tiny_config.with_overrides(dump_correlation=True, total_iters=1)
        Trainer(config, tiny_dataset).run(tmp_path)
        assert any(p.name.startswith("correlation_") and p.suffix == ".png" for p in tmp_path.iterdir())

    def test_out_dir_from_config(self, tiny_config: RunConfig, tiny_dataset: Dataset) -> None:
        result = Trainer(tiny_config.with_overrides(total_iters=1), tiny_dataset).run()
        assert result.out_dir == Path(tiny_config.out_dir)
        assert (result.out_dir / "metrics.csv").is_file()


class TestAbort:
    def test_abort_writes_details_and_rows(
        self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        real_step = trainer.train_step

        def failing_step(*args: Any) -> Any:
            if args[1].iteration == 1:
                raise NumericalAbort("lu_s", {"term": "lu_s", "losses": {"lu_s": float("nan")}})
            return real_step(*args)

        monkeypatch.setattr(trainer, "train_step", failing_step)
        with pytest.raises(NumericalAbort):
            Trainer(tiny_config, tiny_dataset).run(tmp_path)
        details = json.loads((tmp_path / "abort.json").read_text(encoding="utf-8"))
        assert details["iteration"] == 1
        assert details["term"] == "lu_s"
        assert len(_rows(tmp_path / "metrics.csv")) == 1
        assert not (tmp_path / "summary.json").exists()


class TestHelpers:
    def test_initial_threshold(self, tiny_config: RunConfig) -> None:
        assert trainer.initial_threshold(tiny_config).tau == tiny_config.tau0
        fixed = trainer.initial_threshold(tiny_config.with_overrides(threshold_mode="fixed", threshold_value=0.6))
        assert fixed.mode is ThresholdMode.FIXED
        assert fixed.tau == 0.6

    def test_sample_batches(self, tiny_config: RunConfig, tiny_dataset: Dataset) -> None:
        config = tiny_config.with_overrides(batch_labeled=5, batch_unlabeled=3)
        labeled, unlabeled = trainer.sample_batches(tiny_dataset, config, np.random.default_rng(0))
        assert len(labeled) == 5
        assert len(unlabeled) == 3
        assert len({s.id for s in unlabeled}) == 3
        assert all(s.is_labeled for s in labeled)
        assert not any(s.is_labeled for s in unlabeled)

    def test_evaluate(self, tiny_config: RunConfig, tiny_dataset: Dataset) -> None:
        params = network.init(1, 3, 8, 3)
        miou, accuracy = trainer.evaluate(params, tiny_dataset.val, 3)
        assert 0.0 <= miou <= 1.0
        assert 0.0 <= accuracy <= 1.0
        assert all(t.grad is None for t in params)

    def test_load_dataset_from_file(self, tiny_config: RunConfig, tiny_dataset: Dataset, tmp_path: Path) -> None:
        path = synth_data.save(tiny_dataset, tmp_path / "data.cmds")
        loaded = trainer.load_dataset(tiny_config.with_overrides(dataset_path=str(path)))
        assert len(loaded.unlabeled) == len(tiny_dataset.unlabeled)

    def test_load_dataset_size_mismatch(self, tiny_config: RunConfig, tmp_path: Path) -> None:
        other = synth_data.generate(replace(tiny_config.dataset_spec(), height=12))
        path = synth_data.save(other, tmp_path / "data.cmds")
        with pytest.raises(ConfigError, match="height"):
            trainer.load_dataset(tiny_config.with_overrides(dataset_path=str(path)))


class TestSpeed:
    def test_default_recipe_step_time(self, tmp_path: Path) -> None:
        """Median-Schrittzeit des Standardrezepts bleibt im Zeitbudget."""
        stamps: list[float] = []
        config = RunConfig.from_dict({"seed": 0, "total_iters": 12, "dump_correlation": False})
        runner = Trainer(config, progress=lambda done, total: stamps.append(time.perf_counter()))
        runner.run(tmp_path)
        # erster Schritt und die Auswertung am Ende fallen im Median heraus
        step_time = float(np.median(np.diff(stamps)))
        assert step_time < STEP_BUDGET_SECONDS, f"{step_time:.3f} s je Schritt"
