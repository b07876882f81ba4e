"""Tests fuer die Kommandozeile und ihre Exit-Codes."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from corrmatch_desk import __main__ as cli
from corrmatch_desk.services import synth_data
from corrmatch_desk.services.engine import NumericalAbort


@pytest.fixture
def config_file(tiny_values: dict[str, Any], tmp_path: Path) -> Path:
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**tiny_values, "total_iters": 1}), encoding="utf-8")
    return path


class TestParser:
    def test_defaults(self) -> None:
        args = cli._build_parser().parse_args(["ablate", "--config", "c.json", "--sweep", "s.json"])
        assert args.workers == 1
        assert args.out == ""
        assert args.verbose is False

    def test_command_is_required(self) -> None:
        with pytest.raises(SystemExit):
            cli._build_parser().parse_args([])


class TestCommands:
    def test_generate(self, config_file: Path, tmp_path: Path) -> None:
        out = tmp_path / "data.cmds"
        preview = tmp_path / "preview.png"
        assert cli.main(["generate", "--config", str(config_file), "--out", str(out), "--preview", str(preview)]) == 0
        dataset = synth_data.load(out)
        assert dataset.spec.seed == 7
        assert preview.is_file()

    def test_train(self, config_file: Path, tmp_path: Path) -> None:
        assert cli.main(["train", "--config", str(config_file), "--out", str(tmp_path / "lauf")]) == cli.EXIT_OK
        assert (tmp_path / "lauf" / "summary.json").is_file()

    def test_simulate(self, tmp_path: Path) -> None:
        spec = tmp_path / "stream.json"
        spec.write_text(
            json.dumps({"lambda": 0.5, "tau0": [0.1, 0.9], "steps": 5, "stream": {"kind": "constant", "value": 0.5}}),
            encoding="utf-8",
        )
        assert cli.main(["simulate-threshold", "--spec", str(spec)]) == cli.EXIT_OK
        assert (tmp_path / "trajectory.csv").is_file()

    def test_ablate(self, config_file: Path, tmp_path: Path) -> None:
        sweep = tmp_path / "sweep.json"
        sweep.write_text(
            json.dumps({"thresholds": [{"mode": "relaxed_global"}], "variants": [{"name": "voll"}], "seeds": [1]}),
            encoding="utf-8",
        )
        out = tmp_path / "reihe"
        assert cli.main(["ablate", "--config", str(config_file), "--sweep", str(sweep), "--out", str(out)]) == 0
        assert (out / "ablation.csv").is_file()


class TestExitCodes:
    def test_invalid_config(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"seed": 1, "use_cutmx": False}), encoding="utf-8")
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_missing_config(self, tmp_path: Path) -> None:
        assert cli.main(["generate", "--config", str(tmp_path / "absent.json")]) == cli.EXIT_CONFIG

    def test_broken_dataset_file(self, tiny_values: dict[str, Any], tmp_path: Path) -> None:
        data = tmp_path / "broken.cmds"
        data.write_bytes(b"CMDS")
        path = tmp_path / "run.json"
        path.write_text(json.dumps({**tiny_values, "dataset_path": str(data)}), encoding="utf-8")
        assert cli.main(["train", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_workers_must_be_positive(self, config_file: Path, tmp_path: Path) -> None:
        sweep = tmp_path / "sweep.json"
        sweep.write_text(
            json.dumps({"thresholds": [{"mode": "fixed"}], "variants": [{"name": "v"}], "seeds": [0]}), encoding="utf-8"
        )
        args = ["ablate", "--config", str(config_file), "--sweep", str(sweep), "--workers", "0"]
        assert cli.main(args) == cli.EXIT_CONFIG

    def test_numerical_abort(self, config_file: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        def explode(self: Any, out_dir: Path | None = None) -> Any:
            raise NumericalAbort("total", {"term": "total"})

        monkeypatch.setattr(cli.Trainer, "run", explode)
        assert cli.main(["train", "--config", str(config_file)]) == cli.EXIT_ABORT
