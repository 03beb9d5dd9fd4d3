"""Backbone registry: embedding models that turn audio into frame vectors.

Three pretrained foundation-model backbones (``muq``, ``mert``, ``beats``) are
registered by name but require checkpoints that are not bundled with this
package; requesting one raises CheckpointError with instructions.  The
``identity-mel-debug`` backbone has no learned weights — it is the hand-rolled
log-mel statistics extractor from :mod:`fpextract.melspec` — and exists so the
full extract→train→index pipeline is exercisable on any machine.
"""

from __future__ import annotations

import hashlib
import json
import os
from abc import ABC, abstractmethod

import numpy as np

from . import melspec
from .errors import CheckpointError, ParameterError


class Backbone(ABC):
    """One embedding model: a name, an output dim, and an embed() method."""

    name: str
    dim: int

    @abstractmethod
    def embed(self, samples: np.ndarray, sample_rate: int,
              hop_seconds: float, window_seconds: float) -> np.ndarray:
        """Return pooled frame embeddings, shape [n_frames, dim]."""

    @abstractmethod
    def checksum(self) -> str:
        """Digest of every weight/buffer; training in frozen mode must not change it."""

    def torch_parameters(self) -> list:
        """Trainable parameters exposed to unfrozen training (none by default)."""
        return []


class MelStatsBackbone(Backbone):
    """The ``identity-mel-debug`` backbone: log-mel statistics, 1024 dims."""

    name = "identity-mel-debug"
    dim = melspec.N_MELS * melspec.N_STATS

    def __init__(self) -> None:
        self._banks: dict[int, np.ndarray] = {}

    def _bank(self, sample_rate: int) -> np.ndarray:
        if sample_rate not in self._banks:
            self._banks[sample_rate] = melspec.mel_filterbank(sample_rate)
        return self._banks[sample_rate]

    def embed(self, samples: np.ndarray, sample_rate: int,
              hop_seconds: float, window_seconds: float) -> np.ndarray:
        return melspec.pooled_statistics(
            samples, sample_rate, hop_seconds, window_seconds, self._bank(sample_rate)
        )

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(json.dumps({
            "name": self.name,
            "n_fft": melspec.N_FFT,
            "stft_hop": melspec.STFT_HOP,
            "n_mels": melspec.N_MELS,
            "n_stats": melspec.N_STATS,
        }, sort_keys=True).encode())
        digest.update(melspec.mel_filterbank(16000).tobytes())
        return digest.hexdigest()


class CheckpointBackbone(Backbone):
    """Placeholder for a foundation model whose checkpoint must be supplied."""

    dim = 1024

    def __init__(self, name: str, checkpoint: str | os.PathLike | None) -> None:
        self.name = name
        if checkpoint is None:
            raise CheckpointError(
                f"{name}: checkpoint not bundled with this package; download the "
                f"pretrained weights and pass --checkpoint to enable this backbone"
            )
        raise CheckpointError(
            f"{name}: loading external checkpoints is not implemented in this "
            f"build; use the identity-mel-debug backbone for a weight-free pipeline"
        )

    def embed(self, samples, sample_rate, hop_seconds, window_seconds):  # pragma: no cover
        raise CheckpointError(f"{self.name}: backbone unavailable")

    def checksum(self) -> str:  # pragma: no cover
        raise CheckpointError(f"{self.name}: backbone unavailable")


BACKBONE_NAMES = ("muq", "mert", "beats", "identity-mel-debug")


def get_backbone(name: str, checkpoint: str | os.PathLike | None = None) -> Backbone:
    """Instantiate a backbone by registry name."""
    if name == "identity-mel-debug":
        return MelStatsBackbone()
    if name in ("muq", "mert", "beats"):
        return CheckpointBackbone(name, checkpoint)
    raise ParameterError(f"unknown backbone {name!r}; expected one of {BACKBONE_NAMES}")
