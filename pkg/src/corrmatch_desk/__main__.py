"""Entry Point fuer corrmatch-desk."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from corrmatch_desk import __version__
from corrmatch_desk.i18n import detect_language, load_locale, t
from corrmatch_desk.models.dataset import ConfigError
from corrmatch_desk.models.run_config import RunConfig
from corrmatch_desk.models.step_result import RATIO_FIELDS
from corrmatch_desk.services import synth_data
from corrmatch_desk.services.ablation import SweepSpec, run_sweep
from corrmatch_desk.services.engine import NumericalAbort
from corrmatch_desk.services.threshold_sim import StreamSpec, run_simulation
from corrmatch_desk.services.trainer import Trainer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

console = Console(stderr=True)


def _build_parser() -> argparse.ArgumentParser:
    """Baut die Kommandozeilen-Schnittstelle auf."""
    parser = argparse.ArgumentParser(
        prog="corrmatch-desk",
        description=f"\n  corrmatch-desk v{__version__}\n  {t('cli.description')}\n",
        epilog=t("cli.examples"),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", "-v", action="store_true", default=False, help=t("cli.help.verbose"))
    parser.add_argument("--version", action="version", version=f"corrmatch-desk {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    generate = commands.add_parser("generate", help=t("cli.help.generate"))
    generate.add_argument("--config", required=True, metavar="FILE", help=t("cli.help.config"))
    generate.add_argument("--out", default="", metavar="PATH", help=t("cli.help.out_dataset"))
    generate.add_argument("--preview", default="", metavar="PNG", help=t("cli.help.preview"))

    train = commands.add_parser("train", help=t("cli.help.train"))
    train.add_argument("--config", required=True, metavar="FILE", help=t("cli.help.config"))
    train.add_argument("--out", default="", metavar="DIR", help=t("cli.help.out_run"))

    ablate = commands.add_parser("ablate", help=t("cli.help.ablate"))
    ablate.add_argument("--config", required=True, metavar="FILE", help=t("cli.help.config"))
    ablate.add_argument("--sweep", required=True, metavar="FILE", help=t("cli.help.sweep"))
    ablate.add_argument("--out", default="", metavar="DIR", help=t("cli.help.out_ablate"))
    ablate.add_argument("--workers", type=int, default=1, metavar="N", help=t("cli.help.workers"))

    simulate = commands.add_parser("simulate-threshold", help=t("cli.help.simulate"))
    simulate.add_argument("--spec", required=True, metavar="FILE", help=t("cli.help.spec"))

    return parser


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _progress() -> Progress:
    return Progress(
        TextColumn("[bold blue]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=console,
    )


def cmd_generate(args: argparse.Namespace) -> int:
    """Erzeugt den Datensatz als CMDS-Datei."""
    config = RunConfig.load(Path(args.config))
    out = Path(args.out or config.dataset_path or Path(config.out_dir) / "dataset.cmds")
    dataset = synth_data.generate(config.dataset_spec())
    synth_data.save(dataset, out)
    if args.preview:
        synth_data.preview(dataset, Path(args.preview))
    console.print(t("cli.generate.done", count=len(dataset.all_samples()), path=out))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Ein Trainingslauf mit Fortschrittsbalken."""
    config = RunConfig.load(Path(args.config))
    if args.out:
        config = config.with_overrides(out_dir=args.out)
    with _progress() as progress:
        task = progress.add_task(t("cli.train.progress"), total=config.total_iters)
        trainer = Trainer(config, progress=lambda done, _total: progress.update(task, completed=done))
        result = trainer.run()
    console.print(t("cli.train.done", miou=f"{result.final_val_miou:.4f}", path=result.out_dir))
    return EXIT_OK


def _ablation_table(rows: Sequence[dict[str, Any]]) -> Table:
    table = Table(title=t("cli.ablate.title"))
    for column in ("threshold", "variant", "seed", "status", "final_val_miou", "mask_ratio", "mining_ratio"):
        table.add_column(column, justify="right" if column not in ("threshold", "variant", "status") else "left")
    for row in rows:
        cells = [str(row["threshold"]), str(row["variant"]), str(row["seed"]), str(row["status"])]
        for key in ("final_val_miou", "mask_ratio", "mining_ratio"):
            value = row.get(key)
            cells.append(f"{value:.4f}" if isinstance(value, float) else "-")
        table.add_row(*cells, style="red" if row["status"] != "ok" else None)
    return table


def cmd_ablate(args: argparse.Namespace) -> int:
    """Ablationsreihe mit Zusammenfassung als Tabelle."""
    config = RunConfig.load(Path(args.config))
    sweep = SweepSpec.load(Path(args.sweep))
    if args.workers < 1:
        raise ConfigError(f"--workers muss >= 1 sein, ist {args.workers}")
    out = Path(args.out or Path(config.out_dir) / "ablation")
    cells = len(list(sweep.cells()))
    with _progress() as progress:
        task = progress.add_task(t("cli.ablate.progress"), total=cells)
        rows = run_sweep(config, sweep, out, workers=args.workers, progress=lambda _row: progress.advance(task))
    console.print(_ablation_table(rows))
    failed = sum(1 for row in rows if row["status"] != "ok")
    console.print(t("cli.ablate.done", count=len(rows), failed=failed, path=out / "ablation.csv"))
    return EXIT_OK


def cmd_simulate_threshold(args: argparse.Namespace) -> int:
    """Trajektorien der Schwelle fuer einen synthetischen Strom."""
    spec = StreamSpec.load(Path(args.spec))
    trajectories = run_simulation(spec)
    final = [float(trajectory[-1]) for trajectory in trajectories.values()]
    console.print(t("cli.simulate.done", gap=f"{max(final) - min(final):.3g}", path=spec.out))
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "simulate-threshold": cmd_simulate_threshold,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Haupteinstiegspunkt fuer die CLI; gibt den Exit-Code zurueck."""
    load_locale(detect_language())
    parser = _build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)

    try:
        return _COMMANDS[args.command](args)
    except NumericalAbort as exc:
        console.print(t("cli.error.abort", term=exc.term), style="bold red")
        return EXIT_ABORT
    except (ConfigError, synth_data.DatasetFormatError, OSError) as exc:
        console.print(t("cli.error.config", message=str(exc)), style="bold red")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
