"""Noisy pilot reception at the BS for both training stages.

Pilot symbols are 1 and transmit power is 1, so a slot with RIS
configuration ``e`` yields ``G e + n``. Noise is circular complex
Gaussian with per-entry variance ``noise_power``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .codebook import Stage1Codebook, Stage2Codebook
from .errors import DegenerateSceneError, InvalidInputError

__all__ = [
    "ReceivedBlock",
    "simulate_stage1_rx",
    "simulate_stage2_rx",
    "noiseless_stage1",
    "noiseless_stage2",
    "calibrate_noise",
]

STAGE1 = "stage1"
STAGE2 = "stage2"


@dataclass(frozen=True)
class ReceivedBlock:
    """N x T block of received samples from one training stage."""

    samples: np.ndarray
    stage: str
    user_index: Optional[int] = None
    noise_power: float = 0.0

    def __post_init__(self):
        if self.stage not in (STAGE1, STAGE2):
            raise InvalidInputError(f"unknown stage {self.stage!r}")
        if self.samples.ndim != 2 or self.samples.shape[1] < 1:
            raise InvalidInputError("received samples must be an N x T matrix with T >= 1")

    @property
    def slots(self):
        return self.samples.shape[1]

    def prefix(self, tau):
        """Block restricted to the first ``tau`` slots."""
        if not 1 <= tau <= self.slots:
            raise InvalidInputError(f"prefix length {tau} outside [1, {self.slots}]")
        s = self.samples[:, :tau]
        s.setflags(write=False)
        return ReceivedBlock(s, self.stage, self.user_index, self.noise_power)


def _noise(rng, n, t, noise_power):
    # drawn slot by slot so shorter blocks are prefixes of longer ones
    z = rng.standard_normal((t, n, 2))
    return np.sqrt(noise_power / 2.0) * (z[..., 0] + 1j * z[..., 1]).T


def _check_codebook(scene, matrix):
    if matrix.shape[0] != scene.geometry.n_ris:
        raise InvalidInputError(
            f"codebook has {matrix.shape[0]} rows, scene has {scene.geometry.n_ris} RIS elements"
        )


def noiseless_stage1(scene, codebook: Stage1Codebook):
    """``H diag(sum_k h_k) E``."""
    _check_codebook(scene, codebook.matrix)
    h = np.sum(scene.h_users, axis=0)
    return (scene.h_common * h[None, :]) @ codebook.matrix


def noiseless_stage2(scene, user_index, codebook: Stage2Codebook):
    """``G_k E_k``."""
    _check_codebook(scene, codebook.matrix)
    if not 0 <= user_index < scene.k_users:
        raise InvalidInputError(f"user_index {user_index} outside [0, {scene.k_users})")
    return scene.cascaded[user_index] @ codebook.matrix


def _block(signal, stage, user_index, noise_power, seed):
    if noise_power < 0:
        raise InvalidInputError("noise_power must be non-negative")
    samples = signal.astype(complex, copy=True)
    if noise_power > 0:
        rng = np.random.default_rng(seed)
        samples += _noise(rng, *signal.shape, noise_power)
    samples.setflags(write=False)
    return ReceivedBlock(samples, stage, user_index, float(noise_power))


def simulate_stage1_rx(scene, codebook, noise_power, seed=None):
    """All users transmit simultaneously: ``Y = H diag(h) E + N``."""
    return _block(noiseless_stage1(scene, codebook), STAGE1, None, noise_power, seed)


def simulate_stage2_rx(scene, user_index, codebook, noise_power, seed=None):
    """User ``user_index`` (0-based) transmits alone: ``Y_k = G_k E_k + N_k``."""
    return _block(
        noiseless_stage2(scene, user_index, codebook), STAGE2, user_index, noise_power, seed
    )


def calibrate_noise(
    scene,
    codebook: Union[Stage1Codebook, Stage2Codebook, Sequence[Stage2Codebook]],
    target_snr_db,
    user_index=None,
):
    """Noise power giving ``target_snr_db`` per received sample.

    The signal power is the mean squared magnitude of the noiseless
    entries of the block(s) the codebook produces. For stage II a single
    codebook with ``user_index=None`` (or one codebook per user) pools the
    blocks of every user.
    """
    if isinstance(codebook, Stage1Codebook):
        blocks = [noiseless_stage1(scene, codebook)]
    elif isinstance(codebook, Stage2Codebook):
        users = range(scene.k_users) if user_index is None else [user_index]
        blocks = [noiseless_stage2(scene, k, codebook) for k in users]
    else:
        codebooks = list(codebook)
        if len(codebooks) != scene.k_users:
            raise InvalidInputError("need one stage II codebook per user")
        blocks = [noiseless_stage2(scene, k, cb) for k, cb in enumerate(codebooks)]
    total = sum(float(np.sum(np.abs(b) ** 2)) for b in blocks)
    count = sum(b.size for b in blocks)
    p_sig = total / count
    if not p_sig > 0:
        raise DegenerateSceneError("noiseless received signal has zero power")
    return p_sig / 10.0 ** (target_snr_db / 10.0)
