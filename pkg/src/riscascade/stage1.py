"""Stage I: ambiguous common RIS-BS channel from the joint uplink block.

All users transmit together while the RIS cycles through the DFT codebook.
The BS first locates the common AoAs, projects the block onto their
steering vectors, and then expresses every path relative to a reference
path through a rotation (AoD offset) and a complex scaling. Those factors
are enough to build ``H_s = A_N diag(conj(x)) A_s^H``, which equals the
true RIS-BS channel up to a gain and an AoD shift that cancel in the
cascaded channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering_matrix, steering_vector, wrap_frequency
from .codebook import dft_matrix
from .errors import (
    ConfigurationError,
    DegenerateReferenceError,
    EstimationFailureError,
    InvalidInputError,
    NumericalRankError,
    PilotBudgetError,
)

__all__ = [
    "AoaEstimate",
    "CorrelationFactors",
    "AmbiguousCommonChannel",
    "aoa_from_frequencies",
    "angular_spectrum",
    "estimate_common_aoa",
    "project_received",
    "select_reference_path",
    "matching_operator",
    "rotation_objective",
    "estimate_rotation_scaling",
    "assemble_ambiguous_common",
    "estimate_stage1",
    "PINV_RCOND",
]

# singular values below PINV_RCOND * largest are treated as zero
PINV_RCOND = 1e-10


@dataclass(frozen=True)
class AoaEstimate:
    frequencies: np.ndarray
    steering: np.ndarray

    @property
    def count(self):
        return len(self.frequencies)


@dataclass(frozen=True)
class CorrelationFactors:
    """Rotation and scaling of every common path w.r.t. path ``reference_index``."""

    reference_index: int
    rotations: np.ndarray
    scalings: np.ndarray


@dataclass(frozen=True)
class AmbiguousCommonChannel:
    aoa: AoaEstimate
    gain_diag: np.ndarray
    aod_steering: np.ndarray
    assembled: np.ndarray


def aoa_from_frequencies(n, frequencies):
    freqs = np.atleast_1d(wrap_frequency(frequencies))
    return AoaEstimate(freqs, steering_matrix(n, freqs))


def angular_spectrum(samples, freqs):
    """``||a_N(psi)^H Y||^2`` for each ``psi`` in ``freqs``."""
    a = steering_matrix(samples.shape[0], freqs)
    return np.sum(np.abs(a.conj().T @ samples) ** 2, axis=1)


def _dft_peaks(samples, floor):
    n = samples.shape[0]
    # a_N(p/N)^H y = N * ifft(y)[p]
    power = np.sum(np.abs(n * np.fft.ifft(samples, axis=0)) ** 2, axis=1)
    if n == 1:
        is_peak = power > 0
    else:
        is_peak = (power > np.roll(power, 1)) & (power >= np.roll(power, -1))
    top = power.max(initial=0.0)
    is_peak &= power > floor * top
    bins = np.flatnonzero(is_peak)
    bins = bins[np.argsort(-power[bins], kind="stable")]
    return [(float(wrap_frequency(b / n)), float(power[b])) for b in bins]


def _refine(samples, centre, offsets):
    local = centre + offsets
    return local[np.argmax(angular_spectrum(samples, local))]


def _residual(samples, freqs):
    if not freqs:
        return samples
    a = steering_matrix(samples.shape[0], freqs)
    return samples - a @ np.linalg.lstsq(a, samples, rcond=None)[0]


def estimate_common_aoa(rx, l_paths, refine_points=101, method="successive", sweeps=2,
                        peak_floor=1e-10):
    """BS angles of arrival of the common paths from a stage I block.

    Both methods work on the N-point DFT across the antenna axis, with the
    power summed over pilot slots, and refine a DFT peak by maximising
    ``||a_N(psi)^H Y||`` on ``refine_points`` points spanning one DFT bin
    either side of it.

    ``method="peaks"`` refines the ``l_paths`` strongest local maxima of the
    spectrum of ``Y`` independently. ``method="successive"`` (default) takes
    the strongest peak, refines it, projects the block onto the orthogonal
    complement of the angles found so far and repeats; ``sweeps`` rounds of
    re-refining each angle against the others then follow. Successive
    cancellation still separates paths whose main lobes merge in the raw
    spectrum.
    """
    samples = np.asarray(getattr(rx, "samples", rx))
    n = samples.shape[0]
    if not 1 <= l_paths <= n:
        raise ConfigurationError(f"l_paths must be in [1, {n}], got {l_paths}")
    if method not in ("peaks", "successive"):
        raise ConfigurationError(f"unknown AoA method {method!r}")
    offsets = np.linspace(-1.0 / n, 1.0 / n, refine_points)

    if method == "peaks":
        peaks = _dft_peaks(samples, peak_floor)
        if len(peaks) < l_paths:
            raise EstimationFailureError(
                f"found {len(peaks)} resolvable DFT peaks, need {l_paths}", peaks
            )
        return aoa_from_frequencies(n, [_refine(samples, c, offsets) for c, _ in peaks[:l_paths]])

    floor = peak_floor * np.sum(np.abs(samples) ** 2) * n
    freqs = []
    found = []
    for _ in range(l_paths):
        peaks = _dft_peaks(_residual(samples, freqs), 0.0)
        peaks = [pk for pk in peaks if pk[1] > floor]
        found.extend(peaks[:1])
        if not peaks:
            raise EstimationFailureError(
                f"found {len(freqs)} resolvable DFT peaks, need {l_paths}", found
            )
        freqs.append(_refine(_residual(samples, freqs), peaks[0][0], offsets))
    for _ in range(sweeps if l_paths > 1 else 0):
        for l in range(l_paths):
            others = freqs[:l] + freqs[l + 1:]
            freqs[l] = _refine(_residual(samples, others), freqs[l], offsets)
    return aoa_from_frequencies(n, freqs)


def project_received(aoa, rx):
    """``pinv(A_N_hat) @ Y`` (L x T)."""
    samples = np.asarray(getattr(rx, "samples", rx))
    a = aoa.steering
    if a.shape[0] != samples.shape[0]:
        raise InvalidInputError("steering matrix and received block disagree on N")
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[-1] <= PINV_RCOND * s[0]:
        raise NumericalRankError("estimated AoA steering matrix is rank deficient")
    return np.linalg.pinv(a, rcond=PINV_RCOND) @ samples


def select_reference_path(projected):
    """Row with the largest received power (0-based; ties go to the lowest index)."""
    power = np.sum(np.abs(np.atleast_2d(projected)) ** 2, axis=1)
    return int(np.argmax(power))


def matching_operator(rotation, v):
    """``A(w) = [U_V * (a_V(w) 1^T)]^H U_V / V``."""
    u = dft_matrix(v)
    return (u * steering_vector(v, rotation)[:, None]).conj().T @ u / v


def _candidates(y_r, rotations):
    # B(w) = A(w) y_r = U^H (conj(a_V(w)) * (U y_r)) / V, one column per w
    v = len(y_r)
    u = dft_matrix(v)
    z = u @ y_r
    return u.conj().T @ (steering_matrix(v, rotations).conj() * z[:, None]) / v


def rotation_objective(y_l, y_r, rotations):
    """``|<y_l, B(w)>|^2 / ||B(w)||^2`` for every candidate rotation ``w``."""
    b = _candidates(np.asarray(y_r), np.atleast_1d(rotations))
    num = np.abs(np.conj(y_l) @ b) ** 2
    return num / np.sum(np.abs(b) ** 2, axis=0)


def estimate_rotation_scaling(projected, r, codebook, coarse_points=512, refine_points=101):
    """Rotation and scaling factors of every path relative to path ``r``.

    For each path ``l != r`` the rotation maximises the variable-projection
    objective :func:`rotation_objective` over one period, first on
    ``coarse_points`` uniform points and then on ``refine_points`` points
    spanning one coarse step either side of the best coarse point. The
    scaling is the least-squares fit ``<B, y_l> / ||B||^2`` at that rotation.
    """
    projected = np.atleast_2d(projected)
    n_paths, slots = projected.shape
    v = codebook.v_slots
    if slots != v:
        raise InvalidInputError(f"projected block has {slots} slots, codebook has {v}")
    if not 0 <= r < n_paths:
        raise InvalidInputError(f"reference index {r} outside [0, {n_paths})")
    rows = projected.conj()
    y_r = rows[r]
    if not np.linalg.norm(y_r) > 0:
        raise DegenerateReferenceError("reference path row is numerically zero")

    coarse = -0.5 + np.arange(coarse_points) / coarse_points
    offsets = np.linspace(-1.0, 1.0, refine_points) / coarse_points
    rotations = np.zeros(n_paths)
    scalings = np.ones(n_paths, dtype=complex)
    for l in range(n_paths):
        if l == r:
            continue
        y_l = rows[l]
        best = coarse[np.argmax(rotation_objective(y_l, y_r, coarse))]
        local = best + offsets
        best = local[np.argmax(rotation_objective(y_l, y_r, local))]
        b = _candidates(y_r, [best])[:, 0]
        bb = np.vdot(b, b).real
        if not bb > 0:
            raise DegenerateReferenceError("matched reference vanished at the optimum")
        rotations[l] = wrap_frequency(best)
        scalings[l] = np.vdot(b, y_l) / bb
    return CorrelationFactors(r, rotations, scalings)


def assemble_ambiguous_common(aoa, factors, n_ris):
    """``H_s = A_N diag(conj(x)) A_s^H`` with ``A_s[:, l] = a_M(-w_l)``."""
    if len(factors.rotations) != aoa.count or len(factors.scalings) != aoa.count:
        raise InvalidInputError("factor count does not match the number of AoAs")
    gains = np.conj(factors.scalings)
    a_s = steering_matrix(n_ris, -np.asarray(factors.rotations))
    h_s = (aoa.steering * gains[None, :]) @ a_s.conj().T
    return AmbiguousCommonChannel(aoa, gains, a_s, h_s)


def estimate_stage1(rx, codebook, l_paths, *, aoa=None, coarse_points=512,
                    refine_points=101, aoa_refine_points=101, aoa_method="successive"):
    """Run the whole Stage I chain; ``aoa`` injects known AoAs."""
    if codebook.v_slots < l_paths:
        raise PilotBudgetError(f"stage I needs V >= L, got V={codebook.v_slots}, L={l_paths}")
    if aoa is None:
        aoa = estimate_common_aoa(rx, l_paths, refine_points=aoa_refine_points, method=aoa_method)
    projected = project_received(aoa, rx)
    r = select_reference_path(projected)
    factors = estimate_rotation_scaling(projected, r, codebook, coarse_points, refine_points)
    return assemble_ambiguous_common(aoa, factors, codebook.n_ris), factors
