"""Batch embedding extraction: audio files in, .afpe files out."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .audio import read_wav
from .backbones import Backbone, get_backbone
from .errors import ParameterError
from .formats import write_embeddings_file

logger = logging.getLogger(__name__)


@dataclass
class ExtractorConfig:
    """Settings for one extraction run."""

    model: str = "identity-mel-debug"
    checkpoint: str | None = None
    layer: int | None = None  # reserved for checkpoint backbones
    hop_seconds: float = 0.5
    window_seconds: float = 1.0
    out_dir: str | os.PathLike = "."
    device: str = "cpu"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.hop_seconds <= 0 or self.window_seconds <= 0:
            raise ParameterError(
                f"hop and window must be positive, got hop={self.hop_seconds}, "
                f"window={self.window_seconds}"
            )
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")


def _extract_one(backbone: Backbone, config: ExtractorConfig,
                 audio_path: Path) -> Path:
    clip = read_wav(audio_path)
    frames = backbone.embed(
        clip.samples, clip.sample_rate, config.hop_seconds, config.window_seconds
    )
    out_path = Path(config.out_dir) / (audio_path.stem + ".afpe")
    write_embeddings_file(
        out_path,
        track_id=audio_path.stem,
        data=frames,
        hop_seconds=config.hop_seconds,
        window_seconds=config.window_seconds,
    )
    logger.info("extracted %s -> %s (%d frames x %d dims)",
                audio_path, out_path, frames.shape[0], backbone.dim)
    return out_path


def extract(config: ExtractorConfig,
            audio_paths: list[str | os.PathLike]) -> list[Path]:
    """Embed every audio file, writing one .afpe per track into out_dir.

    Files are processed in parallel over ``config.workers`` threads; each
    output is written atomically, so a failure in one file leaves no partial
    artifacts.  Returns the written paths in input order.
    """
    if not audio_paths:
        raise ParameterError("no audio files given")
    backbone = get_backbone(config.model, config.checkpoint)
    paths = [Path(p) for p in audio_paths]
    if config.workers == 1:
        return [_extract_one(backbone, config, p) for p in paths]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda p: _extract_one(backbone, config, p), paths))
