"""Reference estimators for the cascaded channel.

``direct_omp_estimate`` treats each user's cascaded channel on its own:
``G_k = sum_{l,j} alpha_l beta_kj a_N(psi_l) a_M(omega_l - phi_kj)^H`` is
``L*J``-sparse in a two-dimensional angle dictionary, and
``vec(Y_k) = (E_k^T kron I_N) vec(G_k) + noise``.

``genie_ls_estimate`` is an oracle for sanity checks. With
``subspace="user"`` (default) it knows the true common channel ``H`` and
the user's RIS AoAs and fits the ``J`` user gains; with
``subspace="cascaded"`` it knows every true angle and fits the ``L*J``
cascaded-path coefficients, which is what Direct-OMP reduces to once its
support is right.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import steering_matrix, wrap_frequency
from .errors import ConfigurationError, InvalidInputError, OracleFailureError, RecoveryFailureError

__all__ = [
    "BaselineConfig",
    "direct_omp_estimate",
    "genie_ls_estimate",
    "cascaded_path_frequencies",
]


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "direct_omp"
    grid_n: Optional[int] = None
    grid_m: Optional[int] = None
    sparsity: Optional[int] = None

    def __post_init__(self):
        if self.method not in ("direct_omp", "genie_ls"):
            raise ConfigurationError(f"unknown baseline {self.method!r}")

    def resolved(self, n, m, sparsity):
        """Fill unset grids with 2x oversampling and the sparsity with ``sparsity``."""
        grid_n = self.grid_n or 2 * n
        grid_m = self.grid_m or 2 * m
        if grid_n < n or grid_m < m:
            raise ConfigurationError("angle grids must be at least as large as the arrays")
        return BaselineConfig(self.method, grid_n, grid_m, self.sparsity or sparsity)


def _grid(size):
    return -0.5 + np.arange(size) / size


def _samples(rx):
    return np.asarray(getattr(rx, "samples", rx))


def _ls_on_atoms(y, bs_atoms, ris_resp):
    """Least squares over atoms ``vec(a_n phi_m^T)``; columns given pairwise."""
    cols = np.stack(
        [np.outer(a, p).reshape(-1, order="F") for a, p in zip(bs_atoms.T, ris_resp.T)], axis=1
    )
    coef, _, rank, _ = np.linalg.lstsq(cols, y.reshape(-1, order="F"), rcond=None)
    return coef, rank, cols


def direct_omp_estimate(rx_k, codebook, config, support=None):
    """Recover ``G_k`` from one user's block with 2-D OMP.

    Parameters
    ----------
    rx_k : ReceivedBlock
    codebook : Stage2Codebook
        RIS configurations used for ``rx_k``.
    config : BaselineConfig
        ``grid_n``/``grid_m`` default to twice the array sizes; ``sparsity``
        must be set (``L*J`` in the standard model).
    support : sequence of (bs_index, ris_index), optional
        Skip the greedy search and fit these atoms directly.
    """
    y = _samples(rx_k)
    e = np.asarray(codebook.matrix)
    n, tau = y.shape
    m = e.shape[0]
    if e.shape[1] != tau:
        raise InvalidInputError(f"block has {tau} slots, codebook has {e.shape[1]}")
    if config.sparsity is None and support is None:
        raise ConfigurationError("direct OMP needs a sparsity level")
    cfg = config.resolved(n, m, config.sparsity)
    a_n = steering_matrix(n, _grid(cfg.grid_n))
    a_m = steering_matrix(m, _grid(cfg.grid_m))
    # response of RIS atom conj(a_M(theta)) through the pilots: tau x grid_m
    phi_m = e.T @ a_m.conj()

    if support is None:
        inv_norm = 1.0 / (np.sqrt(n) * np.maximum(np.linalg.norm(phi_m, axis=0), 1e-300))
        chosen = []
        residual = y.astype(complex)
        coef = np.zeros(0, dtype=complex)
        for _ in range(cfg.sparsity):
            score = np.abs(a_n.conj().T @ residual @ phi_m.conj()) * inv_norm[None, :]
            for i, j in chosen:
                score[i, j] = -1.0
            i, j = np.unravel_index(np.argmax(score), score.shape)
            chosen.append((int(i), int(j)))
            idx = np.array(chosen).T
            coef, rank, cols = _ls_on_atoms(y, a_n[:, idx[0]], phi_m[:, idx[1]])
            if rank < len(chosen):
                raise RecoveryFailureError("selected atoms are linearly dependent", chosen)
            residual = y - (cols @ coef).reshape(n, tau, order="F")
    else:
        chosen = [(int(i), int(j)) for i, j in support]
        idx = np.array(chosen).T
        coef, rank, _ = _ls_on_atoms(y, a_n[:, idx[0]], phi_m[:, idx[1]])
        if rank < len(chosen):
            raise RecoveryFailureError("injected atoms are linearly dependent", chosen)

    idx = np.array(chosen).T
    return (a_n[:, idx[0]] * coef[None, :]) @ a_m[:, idx[1]].conj().T


def cascaded_path_frequencies(scene, k):
    """(BS AoA, RIS cascaded angle) for each of user k's ``L*J`` cascaded paths."""
    psi = scene.common.aoa_bs
    omega = scene.common.aod_ris
    phi = scene.users[k].aoa_ris
    bs = np.repeat(psi, len(phi))
    ris = wrap_frequency(np.subtract.outer(omega, phi).ravel())
    return bs, np.atleast_1d(ris)


def genie_ls_estimate(rx_k, codebook, scene, user_index=None, subspace="user"):
    """Least-squares ``G_k`` restricted to a subspace known from the true scene."""
    y = _samples(rx_k)
    k = getattr(rx_k, "user_index", None) if user_index is None else user_index
    if k is None:
        raise InvalidInputError("user index unknown: pass user_index")
    e = np.asarray(codebook.matrix)
    n, tau = y.shape
    m = e.shape[0]
    if e.shape[1] != tau:
        raise InvalidInputError(f"block has {tau} slots, codebook has {e.shape[1]}")
    if subspace == "cascaded":
        bs, ris = cascaded_path_frequencies(scene, k)
        a_n = steering_matrix(n, bs)
        a_m = steering_matrix(m, ris)
        coef, rank, _ = _ls_on_atoms(y, a_n, e.T @ a_m.conj())
        if rank < len(coef):
            raise OracleFailureError("true cascaded-path atoms are not identifiable from this block")
        return (a_n * coef[None, :]) @ a_m.conj().T
    if subspace == "user":
        h = scene.h_common
        a_u = steering_matrix(m, scene.users[k].aoa_ris)
        # column j: vec(H diag(a_M(phi_j)) E_k)
        cols = np.stack([((h * a[None, :]) @ e).reshape(-1, order="F") for a in a_u.T], axis=1)
        beta, _, rank, _ = np.linalg.lstsq(cols, y.reshape(-1, order="F"), rcond=None)
        if rank < len(beta):
            raise OracleFailureError("true user-path responses are not identifiable from this block")
        return h * (a_u @ beta)[None, :]
    raise ConfigurationError(f"unknown genie subspace {subspace!r}")
