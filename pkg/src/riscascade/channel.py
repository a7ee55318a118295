"""Geometric mmWave channels for a RIS-aided uplink.

Angles are handled as spatial frequencies ``x`` on one period
``[-0.5, 0.5)``; the steering vector of a ``Q``-element ULA is
``a_Q(x)[m] = exp(-2j*pi*m*x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidDimensionError, InvalidInputError

__all__ = [
    "ArrayGeometry",
    "CommonPathSet",
    "UserPathSet",
    "Scene",
    "wrap_frequency",
    "steering_vector",
    "steering_matrix",
    "build_common_channel",
    "build_user_channel",
    "cascade_channel",
    "make_scene",
    "sample_scene",
    "circular_distance",
]


def wrap_frequency(x):
    """Reduce spatial frequencies onto ``[-0.5, 0.5)``."""
    w = np.mod(np.asarray(x, dtype=float) + 0.5, 1.0) - 0.5
    # mod can round up to exactly +0.5
    w = np.where(w >= 0.5, w - 1.0, w)
    return w if w.ndim else float(w)


def circular_distance(a, b):
    """Distance between spatial frequencies on the unit circle."""
    return np.abs(wrap_frequency(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def steering_matrix(q, freqs):
    """Stack ``a_q(x)`` for every ``x`` in ``freqs`` as columns (q x len(freqs))."""
    q = int(q)
    if q < 1:
        raise InvalidDimensionError(f"array size must be >= 1, got {q}")
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    # reducing x first keeps a_q(x) and a_q(x + 1) bit-identical
    freqs = freqs - np.floor(freqs)
    m = np.arange(q)[:, None]
    return np.exp(-2j * np.pi * m * freqs[None, :])


def steering_vector(q, x):
    """ULA response ``[1, e^{-i2pi x}, ..., e^{-i2pi(q-1)x}]``."""
    return steering_matrix(q, [x])[:, 0]


def _check_freqs(name, values):
    values = np.asarray(values, dtype=float)
    if np.any(values < -0.5) or np.any(values >= 0.5):
        raise InvalidInputError(f"{name} must lie in [-0.5, 0.5)")
    return values


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ArrayGeometry:
    """BS and RIS array sizes and element spacings (in wavelengths)."""

    n_bs: int
    n_ris: int
    spacing_ratio_bs: float = 0.5
    spacing_ratio_ris: float = 0.5

    def __post_init__(self):
        if self.n_bs < 1 or self.n_ris < 1:
            raise InvalidDimensionError("n_bs and n_ris must be >= 1")
        for name in ("spacing_ratio_bs", "spacing_ratio_ris"):
            d = getattr(self, name)
            if not 0.0 < d <= 0.5:
                raise ConfigurationError(f"{name} must be in (0, 0.5], got {d}")


@dataclass(frozen=True)
class CommonPathSet:
    """Paths of the RIS-BS channel: BS AoAs, RIS AoDs and complex gains."""

    aoa_bs: np.ndarray
    aod_ris: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        aoa = _check_freqs("aoa_bs", self.aoa_bs)
        aod = _check_freqs("aod_ris", self.aod_ris)
        gains = np.asarray(self.gains, dtype=complex)
        if not (aoa.ndim == aod.ndim == gains.ndim == 1) or not (
            len(aoa) == len(aod) == len(gains) >= 1
        ):
            raise InvalidInputError("aoa_bs, aod_ris and gains need one entry per path")
        if len(np.unique(aoa)) != len(aoa):
            raise InvalidInputError("aoa_bs entries must be pairwise distinct")
        object.__setattr__(self, "aoa_bs", _frozen(aoa))
        object.__setattr__(self, "aod_ris", _frozen(aod))
        object.__setattr__(self, "gains", _frozen(gains))

    @property
    def count(self):
        return len(self.gains)


@dataclass(frozen=True)
class UserPathSet:
    """Paths of one user-RIS channel: RIS AoAs and complex gains."""

    aoa_ris: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        aoa = _check_freqs("aoa_ris", self.aoa_ris)
        gains = np.asarray(self.gains, dtype=complex)
        if not (aoa.ndim == gains.ndim == 1) or len(aoa) != len(gains) or len(aoa) < 1:
            raise InvalidInputError("aoa_ris and gains need one entry per path")
        object.__setattr__(self, "aoa_ris", _frozen(aoa))
        object.__setattr__(self, "gains", _frozen(gains))

    @property
    def count(self):
        return len(self.gains)


@dataclass(frozen=True)
class Scene:
    """One channel realisation: path parameters plus assembled matrices.

    ``h_common`` is the N x M RIS-BS channel, ``h_users[k]`` the length-M
    channel of user k and ``cascaded[k] = h_common @ diag(h_users[k])``.
    """

    geometry: ArrayGeometry
    common: CommonPathSet
    users: tuple
    h_common: np.ndarray = field(repr=False)
    h_users: tuple = field(repr=False)
    cascaded: tuple = field(repr=False)

    @property
    def k_users(self):
        return len(self.users)

    @property
    def l_paths(self):
        return self.common.count


def build_common_channel(geometry, common):
    """``H = sum_l alpha_l a_N(psi_l) a_M(omega_l)^H``."""
    if not isinstance(common, CommonPathSet):
        raise InvalidInputError("common must be a CommonPathSet")
    a_n = steering_matrix(geometry.n_bs, common.aoa_bs)
    a_m = steering_matrix(geometry.n_ris, common.aod_ris)
    return (a_n * common.gains[None, :]) @ a_m.conj().T


def build_user_channel(geometry, user):
    """``h_k = sum_j beta_kj a_M(phi_kj)``."""
    if not isinstance(user, UserPathSet):
        raise InvalidInputError("user must be a UserPathSet")
    return steering_matrix(geometry.n_ris, user.aoa_ris) @ user.gains


def cascade_channel(h_common, h_user):
    """``G = H diag(h)``: scale column m of ``h_common`` by ``h_user[m]``."""
    h_common = np.asarray(h_common)
    h_user = np.asarray(h_user)
    if h_common.ndim != 2 or h_user.ndim != 1 or h_common.shape[1] != h_user.shape[0]:
        raise InvalidInputError(
            f"cannot cascade {h_common.shape} channel with user channel {h_user.shape}"
        )
    return h_common * h_user[None, :]


def make_scene(geometry, common, users):
    """Assemble a :class:`Scene` from explicit path parameters."""
    users = tuple(users)
    if not users:
        raise InvalidInputError("a scene needs at least one user")
    h_common = build_common_channel(geometry, common)
    a_n = steering_matrix(geometry.n_bs, common.aoa_bs)
    if np.linalg.matrix_rank(a_n) < common.count:
        raise InvalidInputError("BS steering matrix of the common paths is rank deficient")
    h_users = tuple(_frozen(build_user_channel(geometry, u)) for u in users)
    cascaded = tuple(_frozen(cascade_channel(h_common, h)) for h in h_users)
    return Scene(geometry, common, users, _frozen(h_common), h_users, cascaded)


def _separated_continuous(rng, count, sep):
    # spacings of uniform points on a shortened circle, each padded by `sep`
    slack = 1.0 - count * sep
    u = np.sort(rng.uniform(0.0, slack, size=count))
    x = wrap_frequency(u + sep * np.arange(count) + rng.uniform())
    return rng.permutation(np.atleast_1d(x))


def _separated_on_grid(rng, count, sep, grid):
    step = max(1, int(np.ceil(sep * grid - 1e-9)))
    if count * step > grid:
        raise ConfigurationError(
            f"cannot place {count} grid frequencies {step} bins apart on a {grid}-point grid"
        )
    # anchor the first point at 0, pack the rest, then rotate at random
    free = grid - 2 * step + 1 - (count - 2) * (step - 1)
    if count > 1:
        q = np.sort(rng.choice(free, size=count - 1, replace=False))
        idx = np.concatenate(([0], q + step + np.arange(count - 1) * (step - 1)))
    else:
        idx = np.array([0])
    idx = (idx + rng.integers(grid)) % grid
    return rng.permutation(wrap_frequency(idx / grid))


def _separated(rng, count, sep, grid):
    if count * sep > 1.0 + 1e-12:
        raise ConfigurationError(
            f"cannot fit {count} frequencies with separation {sep} on one period"
        )
    if grid is None:
        return _separated_continuous(rng, count, sep)
    return _separated_on_grid(rng, count, sep, int(grid))


def _complex_gaussian(rng, variance, size):
    return np.sqrt(variance / 2.0) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_scene(
    geometry,
    k_users,
    l_paths,
    j_paths,
    distances=(10.0, 100.0),
    seed=None,
    *,
    min_separation=None,
    grid=None,
):
    """Draw a random scene.

    Parameters
    ----------
    geometry : ArrayGeometry
    k_users, l_paths, j_paths : int
        Number of users, RIS-BS paths and user-RIS paths per user.
    distances : (float, float)
        BS-RIS and RIS-user distances in metres. Path gains are
        circular Gaussian with variances ``1e-3 d_BR^-2.2`` and
        ``1e-3 d_RU^-2.8``.
    seed : int or numpy Generator
    min_separation : float, optional
        Minimum circular distance between frequencies seen by the same
        array. Defaults to ``2 / max(N, M)``.
    grid : int, optional
        If given, every frequency is a multiple of ``1 / grid``.
    """
    if min(k_users, l_paths, j_paths) < 1:
        raise ConfigurationError("k_users, l_paths and j_paths must all be >= 1")
    d_br, d_ru = distances
    if d_br <= 0 or d_ru <= 0:
        raise ConfigurationError("distances must be positive")
    if min_separation is None:
        min_separation = 2.0 / max(geometry.n_bs, geometry.n_ris)
    rng = np.random.default_rng(seed)

    var_common = 1e-3 * d_br ** -2.2
    var_user = 1e-3 * d_ru ** -2.8
    common = CommonPathSet(
        aoa_bs=_separated(rng, l_paths, min_separation, grid),
        aod_ris=_separated(rng, l_paths, min_separation, grid),
        gains=_complex_gaussian(rng, var_common, l_paths),
    )
    users = [
        UserPathSet(
            aoa_ris=_separated(rng, j_paths, min_separation, grid),
            gains=_complex_gaussian(rng, var_user, j_paths),
        )
        for _ in range(k_users)
    ]
    return make_scene(geometry, common, users)
