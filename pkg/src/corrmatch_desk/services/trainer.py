"""Trainer-Service - Ein kompletter Trainingslauf mit allen Ergebnisdateien.

Ein Lauf ist eine reine Funktion von Konfiguration und Seed: Batches,
Augmentierung, CutMix und Dropout ziehen aus Stroemen, die aus (Seed,
Iteration) abgeleitet sind. Zwei Laeufe mit gleicher Konfiguration schreiben
byteweise gleiche CSV-Dateien.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import ConfigError, Dataset, Sample
from ..models.run_config import RunConfig, ThresholdMode
from ..models.step_result import LOSS_TERMS, RATIO_FIELDS
from ..models.threshold_state import ThresholdState
from ..numeric.ops import nearest_downsample
from . import network, synth_data
from .checkpoint import save_checkpoint
from .correlation import correlation_map, correlation_softmax
from .engine import NumericalAbort, StepStreams, train_step
from .metrics import ConfusionMatrix, summarize
from .network import ModelParams
from .optimizer import SGDState, poly_lr
from .reporter import Reporter

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ("iteration", "lr", *LOSS_TERMS, "total", "tau", "val_miou")
DIAGNOSTICS_COLUMNS = ("iteration", *RATIO_FIELDS)
SUMMARY_FRACTION = 0.25

ProgressCallback = Callable[[int, int], None]


@dataclass
class RunResult:
    """Ergebnis eines Laufs."""

    out_dir: Path
    params: ModelParams
    threshold: ThresholdState
    summary: dict[str, Any]
    metrics_rows: list[dict[str, Any]] = field(default_factory=list)
    diagnostics_rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def final_val_miou(self) -> float:
        """mIoU auf dem Validierungsanteil nach dem letzten Schritt."""
        return float(self.summary["final_val_miou"])


def load_dataset(config: RunConfig) -> Dataset:
    """Liest ``dataset_path`` oder erzeugt den Datensatz aus der Konfiguration.

    Raises:
        ConfigError: Wenn die Datei nicht zur Konfiguration passt.
    """
    if not config.dataset_path:
        return synth_data.generate(config.dataset_spec())
    dataset = synth_data.load(Path(config.dataset_path))
    spec = dataset.spec
    for name in ("height", "width", "in_channels", "num_classes"):
        if getattr(spec, name) != getattr(config, name):
            raise ConfigError(f"Datensatz {config.dataset_path}: {name}={getattr(spec, name)}, Konfiguration {getattr(config, name)}")
    return dataset


def initial_threshold(config: RunConfig) -> ThresholdState:
    """Startzustand der Schwelle fuer den konfigurierten Modus."""
    if config.threshold_mode is ThresholdMode.FIXED:
        return ThresholdState.fixed(config.threshold_value)
    return ThresholdState.initial(config.tau0, config.ema_momentum, config.threshold_mode, config.num_classes)


def sample_batches(dataset: Dataset, config: RunConfig, rng: np.random.Generator) -> tuple[list[Sample], list[Sample]]:
    """Zieht einen beschrifteten und einen unbeschrifteten Batch.

    Ist ein Anteil kleiner als der Batch, wird mit Zuruecklegen gezogen.
    """
    labeled_idx = rng.choice(len(dataset.labeled), size=config.batch_labeled, replace=len(dataset.labeled) < config.batch_labeled)
    labeled = [dataset.labeled[int(i)] for i in labeled_idx]
    if not dataset.unlabeled:
        return labeled, []
    unlabeled_idx = rng.choice(
        len(dataset.unlabeled), size=config.batch_unlabeled, replace=len(dataset.unlabeled) < config.batch_unlabeled
    )
    return labeled, [dataset.unlabeled[int(i)] for i in unlabeled_idx]


def evaluate(params: ModelParams, samples: list[Sample], num_classes: int) -> tuple[float, float]:
    """mIoU und Pixelgenauigkeit ueber einen ganzen Anteil (ganzes Bild, eine Skala)."""
    frozen = params.detached()
    matrix = ConfusionMatrix(num_classes)
    for sample in samples:
        matrix.update(network.predict(frozen, sample.image), sample.ground_truth)
    return matrix.miou(), matrix.pixel_accuracy()


def correlation_dumps(params: ModelParams, sample: Sample) -> dict[str, NDArray[np.float64]]:
    """Propagationsgewichte je eines Objekt- und eines Hintergrundpixels (als ``h x w``-Karten)."""
    output = network.forward(params.detached(), sample.image)
    h, w = output.feature_size
    weights = correlation_softmax(correlation_map(output.extracted, params.w1.detach(), params.w2.detach()))
    small = nearest_downsample(sample.ground_truth, h, w).reshape(-1)
    dumps: dict[str, NDArray[np.float64]] = {}
    for name, hits in (("object", np.flatnonzero(small != 0)), ("background", np.flatnonzero(small == 0))):
        if hits.size:
            dumps[name] = weights[:, int(hits[0])].reshape(h, w)
    return dumps


class Trainer:
    """Fuehrt einen Lauf aus und schreibt seine Ergebnisdateien."""

    def __init__(
        self,
        config: RunConfig,
        dataset: Dataset | None = None,
        progress: ProgressCallback | None = None,
    ) -> None:
        self.config = config
        self.dataset = dataset if dataset is not None else load_dataset(config)
        self.progress = progress

    def run(self, out_dir: Path | None = None) -> RunResult:
        """Trainiert ``total_iters`` Schritte.

        Raises:
            NumericalAbort: Nach dem Schreiben von ``abort.json`` und den
                bis dahin gesammelten Zeilen.
        """
        config = self.config
        target = Path(out_dir if out_dir is not None else config.out_dir)
        target.mkdir(parents=True, exist_ok=True)
        config.save(target / "config.json")

        params = network.init(config.seed, config.in_channels, config.feature_dim, config.num_classes)
        opt_state = SGDState()
        threshold = initial_threshold(config)
        metrics_rows: list[dict[str, Any]] = []
        diagnostics_rows: list[dict[str, Any]] = []
        val_miou = 0.0
        val_accuracy = 0.0

        logger.info(
            "Lauf startet: %d Schritte, %d beschriftet, %d unbeschriftet -> %s",
            config.total_iters,
            len(self.dataset.labeled),
            len(self.dataset.unlabeled),
            target,
        )
        for iteration in range(config.total_iters):
            streams = StepStreams.derive(config.seed, iteration)
            labeled, unlabeled = sample_batches(self.dataset, config, streams.sampler)
            lr = poly_lr(config.lr0, iteration, config.total_iters)
            try:
                params, opt_state, threshold, breakdown, diagnostics = train_step(
                    params, opt_state, threshold, labeled, unlabeled, streams, config
                )
            except NumericalAbort as exc:
                logger.error("Numerischer Abbruch in Schritt %d: %s", iteration, exc)
                Reporter.save_json({"iteration": iteration, **exc.details}, target / "abort.json")
                self._write_tables(target, metrics_rows, diagnostics_rows)
                raise

            row: dict[str, Any] = {"iteration": iteration, "lr": lr, **breakdown.values(), "tau": threshold.tau}
            last = iteration == config.total_iters - 1
            if (iteration + 1) % config.eval_interval == 0 or last:
                val_miou, val_accuracy = evaluate(params, self.dataset.val, config.num_classes)
                row["val_miou"] = val_miou
                logger.info(
                    "Schritt %d: Verlust %.4f, tau %.4f, val mIoU %.4f", iteration, row["total"], threshold.tau, val_miou
                )
            metrics_rows.append(row)
            diagnostics_rows.append({"iteration": iteration, **{k: getattr(diagnostics, k) for k in RATIO_FIELDS}})
            if self.progress is not None:
                self.progress(iteration + 1, config.total_iters)

        summary: dict[str, Any] = {
            "final_val_miou": val_miou,
            "final_pixel_accuracy": val_accuracy,
            "final_tau": threshold.tau,
            "iterations": config.total_iters,
            **summarize(diagnostics_rows, SUMMARY_FRACTION),
        }
        self._write_tables(target, metrics_rows, diagnostics_rows)
        save_checkpoint(params, target / "checkpoint.cmpt")
        Reporter.save_json(summary, target / "summary.json")
        plots = self._write_plots(target, metrics_rows, diagnostics_rows)
        if config.dump_correlation and self.dataset.val:
            for name, weights in correlation_dumps(params, self.dataset.val[0]).items():
                Reporter.save_weight_map(weights, target / f"correlation_{name}.png")
        Reporter.save_html(summary, plots, target / "report.html")
        logger.info("Lauf fertig: val mIoU %.4f", val_miou)
        return RunResult(
            out_dir=target,
            params=params,
            threshold=threshold,
            summary=summary,
            metrics_rows=metrics_rows,
            diagnostics_rows=diagnostics_rows,
        )

    @staticmethod
    def _write_tables(target: Path, metrics_rows: list[dict[str, Any]], diagnostics_rows: list[dict[str, Any]]) -> None:
        Reporter.save_csv(metrics_rows, METRICS_COLUMNS, target / "metrics.csv")
        Reporter.save_csv(diagnostics_rows, DIAGNOSTICS_COLUMNS, target / "diagnostics.csv")

    @staticmethod
    def _write_plots(
        target: Path, metrics_rows: list[dict[str, Any]], diagnostics_rows: list[dict[str, Any]]
    ) -> list[Path]:
        def series(rows: list[dict[str, Any]], key: str) -> list[tuple[float, float]]:
            return [(float(r["iteration"]), float(r[key])) for r in rows if r.get(key) is not None]

        plots = {
            "losses.svg": ({name: series(metrics_rows, name) for name in (*LOSS_TERMS, "total")}, "loss"),
            "tau.svg": ({"tau": series(metrics_rows, "tau")}, "tau"),
            "ratios.svg": (
                {name: series(diagnostics_rows, name) for name in ("mask_ratio", "mining_ratio")},
                "ratio",
            ),
            "val_miou.svg": ({"val_miou": series(metrics_rows, "val_miou")}, "mIoU"),
        }
        paths = []
        for filename, (data, label) in plots.items():
            path = target / filename
            Reporter.save_line_plot(data, path, title=filename.removesuffix(".svg"), y_label=label)
            paths.append(path)
        return paths
