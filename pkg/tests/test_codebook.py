import numpy as np
import pytest

from conftest import crandn
from riscascade.codebook import dft_matrix, stage1_codebook, stage2_codebook
from riscascade.errors import ConfigurationError, InvalidDimensionError
from riscascade.stage1 import matching_operator
from riscascade.channel import steering_vector


def test_dft_small_sizes():
    np.testing.assert_allclose(dft_matrix(1), [[1]])
    np.testing.assert_allclose(dft_matrix(2), [[1, 1], [1, -1]], atol=1e-15)
    u = dft_matrix(4)
    np.testing.assert_allclose(u.conj().T @ u, 4 * np.eye(4), atol=1e-12)


def test_dft_entries_match_definition():
    v = 7
    u = dft_matrix(v)
    for n in range(v):
        for m in range(v):
            assert abs(u[n, m] - np.exp(-2j * np.pi * n * m / v)) < 1e-12


def test_dft_rejects_zero():
    with pytest.raises(InvalidDimensionError):
        dft_matrix(0)


def test_stage1_codebook_layout():
    cb = stage1_codebook(3, 2)
    np.testing.assert_allclose(cb.matrix[:2], dft_matrix(2))
    np.testing.assert_array_equal(cb.matrix[2], [0, 0])
    assert cb.v_slots == 2 and cb.n_ris == 3
    np.testing.assert_array_equal(stage1_codebook(5, 5).matrix, dft_matrix(5))


@pytest.mark.parametrize("m, v", [(1, 1), (8, 3), (16, 16), (64, 16)])
def test_stage1_codebook_columns_orthogonal(m, v):
    e = stage1_codebook(m, v).matrix
    np.testing.assert_allclose(e.conj().T @ e, v * np.eye(v), atol=1e-12)


def test_stage1_codebook_rejects_v_above_m():
    with pytest.raises(ConfigurationError):
        stage1_codebook(4, 5)


def test_stage2_codebook_entries_and_seed():
    cb = stage2_codebook(256, 256, seed=9)
    assert set(np.unique(cb.matrix)) == {-1.0, 1.0}
    assert abs(cb.matrix.mean()) < 0.05
    assert np.array_equal(cb.matrix, stage2_codebook(256, 256, seed=9).matrix)
    assert not np.array_equal(cb.matrix, stage2_codebook(256, 256, seed=10).matrix)


def test_stage2_codebook_prefix_property():
    long = stage2_codebook(10, 12, seed=4)
    short = stage2_codebook(10, 5, seed=4)
    np.testing.assert_array_equal(long.prefix(5).matrix, short.matrix)
    with pytest.raises(ConfigurationError):
        long.prefix(13)


def test_stage1_codebook_shift_identity(rng):
    # [U (.) a_V(w) 1^T]^H U E^H / V == E^H conj(Diag(a_V(w) zero-padded))
    for _ in range(50):
        m = int(rng.integers(2, 40))
        v = int(rng.integers(1, m + 1))
        w = rng.uniform(-1, 1)
        e = stage1_codebook(m, v).matrix
        pad = np.zeros(m, dtype=complex)
        pad[:v] = steering_vector(v, w)
        lhs = matching_operator(w, v) @ e.conj().T
        rhs = e.conj().T @ np.diag(pad.conj())
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_stage1_inactive_elements_do_not_matter(rng):
    m, v = 12, 5
    e = stage1_codebook(m, v).matrix
    h = crandn(rng, 6, m)
    d = crandn(rng, m)
    d2 = d.copy()
    d2[v:] = crandn(rng, m - v)
    np.testing.assert_allclose(h @ np.diag(d) @ e, h @ np.diag(d2) @ e, atol=1e-13)
