"""RIS phase-shift matrices for the two training stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidDimensionError

__all__ = ["Stage1Codebook", "Stage2Codebook", "dft_matrix", "stage1_codebook", "stage2_codebook"]


def dft_matrix(v):
    """V x V DFT matrix with entries ``exp(-2j*pi*n*m/V)`` (0-based n, m)."""
    v = int(v)
    if v < 1:
        raise InvalidDimensionError(f"DFT size must be >= 1, got {v}")
    n = np.arange(v)
    # reduce n*m mod v before exponentiating to keep the phases exact-ish for large v
    return np.exp(-2j * np.pi * (np.outer(n, n) % v) / v)


@dataclass(frozen=True)
class Stage1Codebook:
    """``E = [U_V; 0]``: the first V RIS elements cycle through DFT columns,
    the remaining ``M - V`` elements are switched off."""

    matrix: np.ndarray

    @property
    def v_slots(self):
        return self.matrix.shape[1]

    @property
    def n_ris(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Stage2Codebook:
    """Random +/-1 RIS configurations, one column per pilot slot."""

    matrix: np.ndarray
    seed: object = None

    @property
    def tau(self):
        return self.matrix.shape[1]

    @property
    def n_ris(self):
        return self.matrix.shape[0]

    def prefix(self, tau):
        """Codebook made of the first ``tau`` slots."""
        if not 1 <= tau <= self.tau:
            raise ConfigurationError(f"prefix length {tau} outside [1, {self.tau}]")
        m = self.matrix[:, :tau]
        m.setflags(write=False)
        return Stage2Codebook(m, self.seed)


def stage1_codebook(m, v):
    if v < 1 or m < 1:
        raise InvalidDimensionError("m and v must be >= 1")
    if v > m:
        raise ConfigurationError(f"stage I needs v <= m, got v={v} > m={m}")
    e = np.zeros((m, v), dtype=complex)
    e[:v, :] = dft_matrix(v)
    e.setflags(write=False)
    return Stage1Codebook(e)


def stage2_codebook(m, tau, seed=None):
    """Draw an ``m x tau`` equiprobable Bernoulli (+/-1) matrix.

    Slots are drawn one at a time, so a longer codebook drawn with the same
    seed starts with the shorter one.
    """
    if m < 1 or tau < 1:
        raise InvalidDimensionError("m and tau must be >= 1")
    rng = np.random.default_rng(seed)
    e = (2.0 * rng.integers(0, 2, size=(tau, m)) - 1.0).T.copy()
    e.setflags(write=False)
    return Stage2Codebook(e, seed)
