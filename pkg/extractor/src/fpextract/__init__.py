"""fpextract: frame-level audio embedding extraction and projection training.

Turns audio into `.afpe` embedding files via a pluggable backbone registry and
optionally trains the two-layer projection head with an NT-Xent contrastive
objective, emitting `.afpw` weights.  Both artifact formats are the interchange
contract with the downstream fingerprint-matching engine; this package shares
no code with it.
"""

from .audio import AudioClip, read_wav
from .backbones import BACKBONE_NAMES, Backbone, MelStatsBackbone, get_backbone
from .errors import (
    CheckpointError,
    DecodeError,
    ExtractorError,
    FormatError,
    ParameterError,
)
from .extract import ExtractorConfig, extract
from .formats import (
    EmbeddingFile,
    WeightsFile,
    read_embeddings_file,
    read_weights_file,
    write_embeddings_file,
    write_weights_file,
)
from .melspec import log_mel_spectrogram, mel_filterbank, pooled_statistics
from .train import (
    ProjectionHead,
    TrainConfig,
    TrainResult,
    make_jitter_sampler,
    make_matched_sampler,
    nt_xent_loss,
    train_projection,
)

__all__ = [
    "AudioClip",
    "BACKBONE_NAMES",
    "Backbone",
    "CheckpointError",
    "DecodeError",
    "EmbeddingFile",
    "ExtractorConfig",
    "ExtractorError",
    "FormatError",
    "MelStatsBackbone",
    "ParameterError",
    "ProjectionHead",
    "TrainConfig",
    "TrainResult",
    "WeightsFile",
    "extract",
    "get_backbone",
    "log_mel_spectrogram",
    "make_jitter_sampler",
    "make_matched_sampler",
    "mel_filterbank",
    "nt_xent_loss",
    "pooled_statistics",
    "read_embeddings_file",
    "read_wav",
    "read_weights_file",
    "train_projection",
    "write_embeddings_file",
    "write_weights_file",
]

__version__ = "0.1.0"
