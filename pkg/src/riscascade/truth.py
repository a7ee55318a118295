"""Ground-truth counterparts of the estimator products, computed from a Scene.

These are the quantities an ideal estimator would return; tests and the
exact-AoA mode of the harness use them.
"""

import numpy as np

from .channel import steering_vector, wrap_frequency
from .stage1 import CorrelationFactors, aoa_from_frequencies, assemble_ambiguous_common

__all__ = [
    "true_aoa",
    "true_factors",
    "true_ambiguous_common",
    "true_ambiguous_user_channel",
]


def true_aoa(scene):
    return aoa_from_frequencies(scene.geometry.n_bs, scene.common.aoa_bs)


def true_factors(scene, r):
    """Rotations ``omega_r - omega_l`` and scalings ``conj(alpha_l) / conj(alpha_r)``."""
    aod = scene.common.aod_ris
    alpha = scene.common.gains
    rotations = np.asarray(wrap_frequency(aod[r] - aod), dtype=float)
    rotations[r] = 0.0
    scalings = np.conj(alpha) / np.conj(alpha[r])
    scalings[r] = 1.0
    return CorrelationFactors(r, rotations, scalings)


def true_ambiguous_common(scene, r):
    return assemble_ambiguous_common(true_aoa(scene), true_factors(scene, r), scene.geometry.n_ris)


def true_ambiguous_user_channel(scene, k, r):
    """``alpha_r * a_M(-omega_r) * h_k`` (elementwise)."""
    m = scene.geometry.n_ris
    alpha_r = scene.common.gains[r]
    omega_r = scene.common.aod_ris[r]
    return alpha_r * steering_vector(m, -omega_r) * scene.h_users[k]
