"""Network-Service - Kleines Segmentierungsnetz mit Merkmals-Extraktor.

Aufbau:

- Encoder: zwei 3x3-Faltungen mit Schrittweite 2 (Cin -> 16 -> D), je mit
  Bias und ReLU. Ergebnis ``D x H/4 x W/4``.
- Klassifikator: 1x1-Faltung D -> K, danach bilinear auf ``H x W``.
- Extraktor: 3x3-Faltung D -> D, kanalweise Normierung ueber die
  Bildpositionen, affine Parameter, ReLU; flach gelegt zu ``D x (h*w)``.
- W1, W2: lineare Projektionen ``D x D`` fuer die Korrelationskarte.

Die Normierung im Extraktor arbeitet je Bild, nicht ueber den Batch; jede
Vorwaertsrechnung ist eine reine Funktion.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, fields

import numpy as np
from numpy.typing import NDArray

from ..models.dataset import MODEL_STRIDE, ConfigError
from ..numeric import ops
from ..numeric.tensor import Tensor

logger = logging.getLogger(__name__)

HIDDEN_CHANNELS = 16
DROPOUT_RATE = 0.5
PROJECTION_NOISE = 0.01


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Alle lernbaren Tensoren; Reihenfolge der Felder = Reihenfolge in ``named()``."""

    enc1_weight: Tensor
    enc1_bias: Tensor
    enc2_weight: Tensor
    enc2_bias: Tensor
    ext_weight: Tensor
    ext_gamma: Tensor
    ext_beta: Tensor
    w1: Tensor
    w2: Tensor
    cls_weight: Tensor

    @property
    def in_channels(self) -> int:
        """Eingangskanaele (Cin)."""
        return self.enc1_weight.shape[1]

    @property
    def feature_dim(self) -> int:
        """Merkmalsdimension (D)."""
        return self.w1.shape[0]

    @property
    def num_classes(self) -> int:
        """Klassen (K)."""
        return self.cls_weight.shape[0]

    def named(self) -> dict[str, Tensor]:
        """Name -> Tensor in fester Reihenfolge."""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.named().values())

    @classmethod
    def from_arrays(cls, arrays: dict[str, NDArray[np.float64]], *, requires_grad: bool = True) -> ModelParams:
        """Baut neue Blaetter aus Arrays; die Namen muessen vollstaendig sein."""
        expected = [f.name for f in fields(cls)]
        missing = [name for name in expected if name not in arrays]
        extra = [name for name in arrays if name not in expected]
        if missing or extra:
            raise ConfigError(f"Parameter passen nicht: fehlend {missing}, unbekannt {extra}")
        return cls(**{name: Tensor(np.array(arrays[name], dtype=np.float64), requires_grad, name=name) for name in expected})

    def arrays(self) -> dict[str, NDArray[np.float64]]:
        """Kopien der Werte."""
        return {name: tensor.data.copy() for name, tensor in self.named().items()}

    def detached(self) -> ModelParams:
        """Dieselben Werte ohne Gradienten (fuer reine Auswertung)."""
        return ModelParams.from_arrays(self.arrays(), requires_grad=False)


@dataclass(frozen=True, eq=False)
class ForwardOutput:
    """Ergebnis einer Vorwaertsrechnung.

    Attributes:
        logits: ``K x H x W``.
        encoder_feature: ``D x h x w`` mit ``h = H/4``, ``w = W/4``.
        extracted: ``D x (h*w)``, die Merkmale fuer die Korrelationskarte.
        perturbed_feature: Encoder-Merkmal nach Kanal-Dropout (nur mit Stoerung).
        perturbed_logits: Logits aus dem gestoerten Merkmal (nur mit Stoerung).
    """

    logits: Tensor
    encoder_feature: Tensor
    extracted: Tensor
    perturbed_feature: Tensor | None = None
    perturbed_logits: Tensor | None = None

    @property
    def feature_size(self) -> tuple[int, int]:
        """(h, w) der Merkmalskarte."""
        return self.encoder_feature.shape[1], self.encoder_feature.shape[2]


def _kaiming(rng: np.random.Generator, shape: tuple[int, ...]) -> NDArray[np.float64]:
    fan_in = int(np.prod(shape[1:]))
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def init(seed: int, in_channels: int, feature_dim: int, num_classes: int) -> ModelParams:
    """Deterministische Startwerte.

    Faltungskerne: Normalverteilung mit Varianz ``2 / fan_in``. Bias und Beta:
    0, Gamma: 1. W1, W2: Einheitsmatrix plus Rauschen mit sigma 0.01.

    Raises:
        ConfigError: Bei Dimensionen < 1.
    """
    if in_channels < 1 or feature_dim < 1 or num_classes < 1:
        raise ConfigError(f"Modelldimensionen ungueltig: Cin={in_channels}, D={feature_dim}, K={num_classes}")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    d = feature_dim
    arrays = {
        "enc1_weight": _kaiming(rng, (HIDDEN_CHANNELS, in_channels, 3, 3)),
        "enc1_bias": np.zeros(HIDDEN_CHANNELS),
        "enc2_weight": _kaiming(rng, (d, HIDDEN_CHANNELS, 3, 3)),
        "enc2_bias": np.zeros(d),
        "ext_weight": _kaiming(rng, (d, d, 3, 3)),
        "ext_gamma": np.ones(d),
        "ext_beta": np.zeros(d),
        "w1": np.eye(d) + rng.normal(0.0, PROJECTION_NOISE, size=(d, d)),
        "w2": np.eye(d) + rng.normal(0.0, PROJECTION_NOISE, size=(d, d)),
        "cls_weight": _kaiming(rng, (num_classes, d, 1, 1)),
    }
    return ModelParams.from_arrays(arrays)


def sample_keep_mask(rng: np.random.Generator, channels: int) -> NDArray[np.float64]:
    """Kanalmaske des Dropouts: jeder Kanal bleibt mit Wahrscheinlichkeit 0.5."""
    return (rng.random(channels) >= DROPOUT_RATE).astype(np.float64)


def encode(params: ModelParams, image: Tensor) -> Tensor:
    """Encoder ``Cin x H x W -> D x H/4 x W/4``."""
    hidden = ops.relu(ops.add_channel_bias(ops.conv2d(image, params.enc1_weight, stride=2, padding=1), params.enc1_bias))
    return ops.relu(ops.add_channel_bias(ops.conv2d(hidden, params.enc2_weight, stride=2, padding=1), params.enc2_bias))


def classify(params: ModelParams, feature: Tensor, height: int, width: int) -> Tensor:
    """1x1-Klassifikator und bilineares Hochskalieren auf ``height x width``."""
    return ops.bilinear_resize(ops.conv2d(feature, params.cls_weight), height, width)


def extract(params: ModelParams, feature: Tensor) -> Tensor:
    """Extraktor E, flach gelegt zu ``D x (h*w)``."""
    conv = ops.conv2d(feature, params.ext_weight, padding=1)
    normalized = ops.channel_normalize(conv)
    activated = ops.relu(ops.channel_affine(normalized, params.ext_gamma, params.ext_beta))
    d, h, w = activated.shape
    return ops.reshape(activated, (d, h * w))


def forward(
    params: ModelParams,
    image: NDArray[np.float64] | Tensor,
    perturb_features: bool = False,
    rng: np.random.Generator | None = None,
    *,
    keep_mask: NDArray[np.float64] | None = None,
) -> ForwardOutput:
    """Vorwaertsrechnung fuer ein Bild.

    Mit ``perturb_features`` entsteht zusaetzlich ein gestoerter Zweig: das
    Encoder-Merkmal mit Kanal-Dropout (ueberlebende Kanaele mal 2) durch den
    Klassifikator. Logits und Extraktor nutzen immer das ungestoerte Merkmal.

    Args:
        params: Modellparameter.
        image: ``Cin x H x W``.
        perturb_features: Gestoerten Zweig berechnen.
        rng: Quelle fuer die Dropout-Maske, wenn ``keep_mask`` fehlt.
        keep_mask: Vorgegebene Maske (1 = Kanal bleibt).

    Raises:
        ConfigError: Wenn H oder W nicht durch 4 teilbar sind.
    """
    x = image if isinstance(image, Tensor) else Tensor(image)
    _, height, width = x.shape
    if height % MODEL_STRIDE or width % MODEL_STRIDE:
        raise ConfigError(f"Bildgroesse {height}x{width} nicht durch {MODEL_STRIDE} teilbar")

    feature = encode(params, x)
    logits = classify(params, feature, height, width)
    extracted = extract(params, feature)
    if not perturb_features:
        return ForwardOutput(logits=logits, encoder_feature=feature, extracted=extracted)

    if keep_mask is None:
        if rng is None:
            raise ValueError("Stoerung verlangt rng oder keep_mask")
        keep_mask = sample_keep_mask(rng, feature.shape[0])
    dropped = ops.channel_scale(feature, np.asarray(keep_mask, dtype=np.float64) / (1.0 - DROPOUT_RATE))
    return ForwardOutput(
        logits=logits,
        encoder_feature=feature,
        extracted=extracted,
        perturbed_feature=dropped,
        perturbed_logits=classify(params, dropped, height, width),
    )


def predict(params: ModelParams, image: NDArray[np.float64]) -> NDArray[np.uint8]:
    """Argmax-Labelkarte fuer die Auswertung."""
    frozen = params.detached() if any(t.requires_grad for t in params) else params
    output = forward(frozen, image)
    return output.logits.data.argmax(axis=0).astype(np.uint8)
