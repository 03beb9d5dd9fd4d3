"""Contrastive training of the projection head.

The head is the two-layer MLP z = W2·elu(W1·x + b1) + b2 that the matching
engine applies at query time; training optimizes the normalized-temperature
cross-entropy (NT-Xent) objective over batches of positive pairs — an original
frame paired with a degraded rendition of the same frame — so that pairs score
high cosine similarity against all in-batch negatives.

Pairs arrive through a sampler callable, keeping the data source pluggable:
embedding-space jitter for weight-free smoke training, or matched .afpe files
extracted from clean and degraded audio renditions.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
from torch import nn

from .backbones import Backbone
from .errors import ParameterError
from .formats import write_weights_file

PairSampler = Callable[[int], tuple[np.ndarray, np.ndarray]]
"""Maps a step index to a (clean, degraded) batch pair, each [batch, d_in]."""

DEFAULT_LEARNING_RATES = {
    "muq": 3e-5,
    "mert": 3e-5,
    "beats": 5e-5,
    "identity-mel-debug": 3e-5,
}
DEFAULT_TAU = 0.05
DEFAULT_BATCH = 64


@dataclass
class TrainConfig:
    """Settings for one projection-head training run."""

    model: str = "identity-mel-debug"
    lr: float | None = None  # None = per-model default
    tau: float = DEFAULT_TAU
    batch_size: int = DEFAULT_BATCH
    epochs: int = 1
    steps_per_epoch: int = 50
    freeze: bool = True
    d_hidden: int = 4096
    d_out: int = 256
    seed: int = 0
    device: str = "cpu"
    augmentation: dict = field(default_factory=lambda: {"kind": "jitter", "sigma": 0.1})

    def __post_init__(self) -> None:
        if self.lr is None:
            self.lr = DEFAULT_LEARNING_RATES.get(self.model, 3e-5)
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.tau <= 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")
        if self.batch_size < 2:
            raise ParameterError(f"batch size must be >= 2, got {self.batch_size}")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ParameterError("epochs and steps_per_epoch must be >= 1")
        if self.d_hidden < 1 or self.d_out < 1:
            raise ParameterError("d_hidden and d_out must be >= 1")


class ProjectionHead(nn.Module):
    """z = W2·elu(W1·x + b1) + b2, exported in the .afpw weight layout."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int) -> None:
        super().__init__()
        self.layer1 = nn.Linear(d_in, d_hidden)
        self.layer2 = nn.Linear(d_hidden, d_out)
        self.act = nn.ELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layer2(self.act(self.layer1(x)))

    def export_weights(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Float32 (W1, b1, W2, b2) matching the .afpw row-major layout."""
        with torch.no_grad():
            return (
                self.layer1.weight.detach().cpu().numpy().astype(np.float32),
                self.layer1.bias.detach().cpu().numpy().astype(np.float32),
                self.layer2.weight.detach().cpu().numpy().astype(np.float32),
                self.layer2.bias.detach().cpu().numpy().astype(np.float32),
            )


def nt_xent_loss(za: torch.Tensor, zb: torch.Tensor, tau: float) -> torch.Tensor:
    """NT-Xent over a batch of positive pairs.

    The 2N projected vectors are L2-normalized; each vector's positive is its
    pair mate and its negatives are the remaining 2N−2 vectors.  Loss is the
    mean cross-entropy of picking the mate among all candidates at temperature
    tau.
    """
    if za.shape != zb.shape:
        raise ParameterError(f"pair batches must match, got {tuple(za.shape)} vs {tuple(zb.shape)}")
    n = za.shape[0]
    if n < 2:
        raise ParameterError(f"batch size must be >= 2, got {n}")
    z = torch.nn.functional.normalize(torch.cat([za, zb], dim=0), dim=1)
    sim = (z @ z.T) / tau
    sim.fill_diagonal_(float("-inf"))
    targets = torch.cat([
        torch.arange(n, 2 * n, device=za.device),
        torch.arange(0, n, device=za.device),
    ])
    return torch.nn.functional.cross_entropy(sim, targets)


@dataclass
class TrainResult:
    """Trained head weights (float32, .afpw layout) plus the loss trace."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    losses: list[float]

    def save(self, path: str | os.PathLike) -> None:
        write_weights_file(path, self.W1, self.b1, self.W2, self.b2)


def train_projection(config: TrainConfig, pair_sampler: PairSampler,
                     steps: int | None = None,
                     backbone: Backbone | None = None) -> TrainResult:
    """Optimize the projection head with NT-Xent; returns weights and losses.

    ``steps`` overrides epochs x steps_per_epoch.  In frozen mode (the
    default) only head parameters are optimized; unfrozen mode additionally
    registers the backbone's trainable parameters, of which the weight-free
    debug backbone has none.
    """
    total_steps = steps if steps is not None else config.epochs * config.steps_per_epoch
    if total_steps < 1:
        raise ParameterError(f"steps must be >= 1, got {total_steps}")

    first_clean, first_degraded = pair_sampler(0)
    first_clean = np.asarray(first_clean, dtype=np.float32)
    first_degraded = np.asarray(first_degraded, dtype=np.float32)
    if first_clean.ndim != 2 or first_clean.shape != first_degraded.shape:
        raise ParameterError(
            f"sampler must yield matching [batch, d_in] pairs, got "
            f"{first_clean.shape} vs {first_degraded.shape}"
        )
    if first_clean.shape[0] < 2:
        raise ParameterError(f"batch size must be >= 2, got {first_clean.shape[0]}")
    d_in = first_clean.shape[1]

    torch.manual_seed(config.seed)
    device = torch.device(config.device)
    head = ProjectionHead(d_in, config.d_hidden, config.d_out).to(device)
    params = list(head.parameters())
    if not config.freeze and backbone is not None:
        params += list(backbone.torch_parameters())
    optimizer = torch.optim.Adam(params, lr=config.lr)

    losses: list[float] = []
    batch = (first_clean, first_degraded)
    for step in range(total_steps):
        if step > 0:
            batch = pair_sampler(step)
        clean = torch.as_tensor(np.asarray(batch[0], dtype=np.float32), device=device)
        degraded = torch.as_tensor(np.asarray(batch[1], dtype=np.float32), device=device)
        optimizer.zero_grad()
        loss = nt_xent_loss(head(clean), head(degraded), config.tau)
        loss.backward()
        optimizer.step()
        losses.append(float(loss.detach()))

    W1, b1, W2, b2 = head.export_weights()
    return TrainResult(W1, b1, W2, b2, losses)


def make_jitter_sampler(frames: np.ndarray, batch_size: int, sigma: float,
                        seed: int = 0) -> PairSampler:
    """Positive pairs are (frame, frame + Gaussian jitter) in embedding space.

    A weight-free degradation stand-in: each step draws ``batch_size`` frames
    with replacement and perturbs the copy with N(0, sigma) noise.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ParameterError(f"frames must be a non-empty 2-D array, got shape {frames.shape}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)

    def sample(step: int) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, frames.shape[0], size=batch_size)
        clean = frames[idx]
        return clean, clean + rng.normal(0.0, sigma, clean.shape).astype(np.float32)

    return sample


def make_matched_sampler(clean: np.ndarray, degraded: np.ndarray, batch_size: int,
                         seed: int = 0) -> PairSampler:
    """Positive pairs are row-aligned (clean, degraded) embedding frames."""
    clean = np.asarray(clean, dtype=np.float32)
    degraded = np.asarray(degraded, dtype=np.float32)
    if clean.shape != degraded.shape or clean.ndim != 2 or clean.shape[0] < 1:
        raise ParameterError(
            f"clean and degraded must be equal-shape non-empty 2-D arrays, got "
            f"{clean.shape} vs {degraded.shape}"
        )
    rng = np.random.default_rng(seed)

    def sample(step: int) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.integers(0, clean.shape[0], size=batch_size)
        return clean[idx], degraded[idx]

    return sample
