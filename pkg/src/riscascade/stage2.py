"""Stage II: per-user sparse recovery of the ambiguous user-RIS channel, and
the end-to-end two-stage estimator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import khatri_rao

from .channel import steering_matrix
from .errors import ConfigurationError, InvalidInputError, PilotBudgetError, RecoveryFailureError
from .stage1 import PINV_RCOND, estimate_stage1, project_received

__all__ = [
    "AngleDictionary",
    "SparseEstimate",
    "EstimatorConfig",
    "TwoStageEstimate",
    "build_dictionary",
    "vectorize_measurements",
    "omp_recover",
    "whitening_matrix",
    "projected_noise_cov",
    "reconstruct_cascaded",
    "estimate_all",
]


@dataclass(frozen=True)
class AngleDictionary:
    grid: np.ndarray
    atoms: np.ndarray

    @property
    def size(self):
        return len(self.grid)


@dataclass(frozen=True)
class SparseEstimate:
    """OMP output. ``support`` holds 0-based atom indices in selection order."""

    support: np.ndarray
    coefficients: np.ndarray
    residual_norm: float
    residual_history: tuple = ()


def build_dictionary(m, d_size):
    """``d_size`` steering vectors on a uniform grid over ``[-0.5, 0.5)``."""
    if d_size < m:
        raise ConfigurationError(f"dictionary needs d_size >= m, got {d_size} < {m}")
    grid = -0.5 + np.arange(d_size) / d_size
    return AngleDictionary(grid, steering_matrix(m, grid))


def vectorize_measurements(projected_k, ambient, codebook):
    """Stack ``projected_k`` column-wise and form ``W_k = E_k^T (kr) Lambda_s A_s^H``.

    Noiselessly ``w_k == W_k @ h_sk``.
    """
    projected_k = np.atleast_2d(projected_k)
    e = np.asarray(getattr(codebook, "matrix", codebook))
    mixing = ambient.gain_diag[:, None] * ambient.aod_steering.conj().T
    if projected_k.shape != (mixing.shape[0], e.shape[1]) or e.shape[0] != mixing.shape[1]:
        raise InvalidInputError(
            f"projected block {projected_k.shape}, codebook {e.shape} and "
            f"common channel ({mixing.shape[0]} paths, {mixing.shape[1]} elements) disagree"
        )
    w = projected_k.reshape(-1, order="F")
    return w, khatri_rao(e.T, mixing)


def omp_recover(w_k, sensing, dictionary, sparsity, tol=None, whitening=None):
    """Orthogonal matching pursuit over the equivalent dictionary ``sensing @ atoms``.

    Each iteration picks the atom with the largest normalised correlation
    ``|<r, phi_d>| / ||phi_d||`` with the residual, then refits all selected
    coefficients by least squares. Runs ``sparsity`` iterations, or stops
    earlier once the residual norm drops to ``tol`` when that is given.

    ``whitening`` is an optional square matrix applied to both sides of
    ``w = sensing @ h`` before the greedy search (see
    :func:`whitening_matrix`). The returned coefficients are always the
    least-squares fit of the original, unwhitened system on the selected
    support.
    """
    if sparsity < 1:
        raise ConfigurationError("sparsity must be >= 1")
    w_k = np.asarray(w_k)
    phi = np.asarray(sensing) @ dictionary.atoms
    if phi.shape[0] != w_k.shape[0]:
        raise InvalidInputError("measurement vector and sensing matrix disagree")
    if whitening is None:
        y, psi = w_k, phi
    else:
        y, psi = whitening @ w_k, whitening @ phi
    norms = np.linalg.norm(psi, axis=0)
    # zero columns can never be selected
    inv_norms = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)

    support = []
    coef = np.zeros(0, dtype=complex)
    residual = y.astype(complex)
    history = [float(np.linalg.norm(residual))]
    for _ in range(min(sparsity, psi.shape[1])):
        if tol is not None and history[-1] <= tol:
            break
        score = np.abs(psi.conj().T @ residual) * inv_norms
        score[support] = -1.0
        support.append(int(np.argmax(score)))
        sub = psi[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
        if rank < len(support):
            raise RecoveryFailureError("selected atoms are linearly dependent", support)
        residual = y - sub @ coef
        history.append(float(np.linalg.norm(residual)))

    residual_norm = history[-1]
    if whitening is not None and support:
        sub = phi[:, support]
        coef, _, rank, _ = np.linalg.lstsq(sub, w_k, rcond=None)
        if rank < len(support):
            raise RecoveryFailureError("selected atoms are linearly dependent", support)
        residual_norm = float(np.linalg.norm(w_k - sub @ coef))
    return SparseEstimate(np.array(support, dtype=int), coef, residual_norm, tuple(history))


def whitening_matrix(w_k, sensing, noise_cov):
    """``(c W W^H + C)^(-1/2)`` for measurements ``w = W h + n``, ``cov(n) = C``.

    ``c`` is a moment estimate of the per-entry power of ``h``. With
    ``C = 0`` this orthonormalises the rows of ``W``; as ``C`` grows it
    tends to a scaled identity. Directions with (numerically) zero
    eigenvalue are dropped.
    """
    gram = sensing @ sensing.conj().T
    tr = np.trace(gram).real
    c = (np.vdot(w_k, w_k).real - np.trace(noise_cov).real) / tr if tr > 0 else 0.0
    ev, u = np.linalg.eigh(max(c, 0.0) * gram + noise_cov)
    keep = ev > 1e-12 * max(ev.max(), 0.0)
    if not keep.any():
        return np.eye(len(w_k))
    u = u[:, keep]
    return (u / np.sqrt(ev[keep])) @ u.conj().T


def projected_noise_cov(aoa, noise_power, slots):
    """Covariance of ``vec(pinv(A_N_hat) N_k)`` for white noise of power ``noise_power``."""
    pinv = np.linalg.pinv(aoa.steering, rcond=PINV_RCOND)
    return np.kron(np.eye(slots), noise_power * (pinv @ pinv.conj().T))


def reconstruct_cascaded(ambient, estimate, dictionary):
    """``G_k_hat = H_s diag(h_sk_hat)`` with ``h_sk_hat`` the sparse synthesis."""
    h = dictionary.atoms[:, estimate.support] @ estimate.coefficients
    if h.shape[0] != ambient.assembled.shape[1]:
        raise InvalidInputError("dictionary and common channel disagree on M")
    return ambient.assembled * h[None, :]


@dataclass(frozen=True)
class EstimatorConfig:
    """Knobs of the two-stage estimator.

    ``dict_size`` defaults to twice the RIS size. ``aoa`` injects known
    BS AoAs (an :class:`~riscascade.stage1.AoaEstimate`) in place of DFT
    estimation.

    With ``whiten=True`` the Stage II search runs on measurements whitened
    by :func:`whitening_matrix`, with the thermal noise covariance inflated
    by ``noise_inflation`` to absorb Stage I errors. ``whiten=False`` is
    plain OMP.
    """

    l_paths: int
    sparsity: int
    dict_size: Optional[int] = None
    coarse_points: int = 512
    refine_points: int = 101
    aoa_refine_points: int = 101
    residual_tol: Optional[float] = None
    aoa_method: str = "successive"
    whiten: bool = True
    noise_inflation: float = 10.0
    aoa: object = field(default=None, repr=False)


@dataclass(frozen=True)
class TwoStageEstimate:
    cascaded: list
    common: object
    factors: object
    sparse: list
    dictionary: AngleDictionary = field(repr=False)


def estimate_all(stage1_rx, stage2_rxs, stage1_cb, stage2_cbs, config):
    """Estimate every user's cascaded channel from both training stages.

    Parameters
    ----------
    stage1_rx : ReceivedBlock
        Joint block received while all users transmit.
    stage2_rxs, stage2_cbs : sequence
        Per-user blocks and the Bernoulli codebooks that produced them.
    stage1_cb : Stage1Codebook
    config : EstimatorConfig

    Returns
    -------
    TwoStageEstimate
        ``cascaded[k]`` is the N x M estimate for user k.
    """
    if stage1_cb.v_slots < config.l_paths:
        raise PilotBudgetError(
            f"stage I needs V >= L, got V={stage1_cb.v_slots}, L={config.l_paths}"
        )
    stage2_rxs = list(stage2_rxs)
    stage2_cbs = list(stage2_cbs)
    if len(stage2_rxs) != len(stage2_cbs):
        raise InvalidInputError("need one stage II codebook per received block")

    m = stage1_cb.n_ris
    common, factors = estimate_stage1(
        stage1_rx,
        stage1_cb,
        config.l_paths,
        aoa=config.aoa,
        coarse_points=config.coarse_points,
        refine_points=config.refine_points,
        aoa_refine_points=config.aoa_refine_points,
        aoa_method=config.aoa_method,
    )
    dictionary = build_dictionary(m, config.dict_size or 2 * m)

    cascaded, sparse = [], []
    for rx, cb in zip(stage2_rxs, stage2_cbs):
        w, sensing = vectorize_measurements(project_received(common.aoa, rx), common, cb)
        whitening = None
        if config.whiten:
            noise = config.noise_inflation * getattr(rx, "noise_power", 0.0)
            cov = projected_noise_cov(common.aoa, noise, cb.tau)
            whitening = whitening_matrix(w, sensing, cov)
        est = omp_recover(
            w, sensing, dictionary, config.sparsity, tol=config.residual_tol, whitening=whitening
        )
        sparse.append(est)
        cascaded.append(reconstruct_cascaded(common, est, dictionary))
    return TwoStageEstimate(cascaded, common, factors, sparse, dictionary)
