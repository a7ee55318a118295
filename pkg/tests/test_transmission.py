import numpy as np
import pytest

from conftest import rel_err
from riscascade.channel import ArrayGeometry, CommonPathSet, UserPathSet, make_scene, sample_scene
from riscascade.codebook import stage1_codebook, stage2_codebook
from riscascade.errors import DegenerateSceneError, InvalidInputError
from riscascade.transmission import (
    ReceivedBlock,
    calibrate_noise,
    noiseless_stage2,
    simulate_stage1_rx,
    simulate_stage2_rx,
)
from riscascade.truth import true_ambiguous_common, true_ambiguous_user_channel


def scene_with(users, seed=0):
    base = sample_scene(ArrayGeometry(8, 10), len(users), 2, 1, seed=seed)
    return make_scene(base.geometry, base.common, users)


def test_stage1_noiseless_single_user(small_scene):
    s = make_scene(small_scene.geometry, small_scene.common, small_scene.users[:1])
    cb = stage1_codebook(16, 6)
    rx = simulate_stage1_rx(s, cb, 0.0, seed=1)
    ref = s.h_common @ np.diag(s.h_users[0]) @ cb.matrix
    np.testing.assert_allclose(rx.samples, ref, rtol=1e-13, atol=1e-13 * np.abs(ref).max())
    assert rx.stage == "stage1" and rx.user_index is None and rx.noise_power == 0.0


def test_stage1_superposition(small_scene):
    s = small_scene
    cb = stage1_codebook(16, 8)
    joint = simulate_stage1_rx(s, cb, 0.0).samples
    parts = sum(
        simulate_stage1_rx(make_scene(s.geometry, s.common, [u]), cb, 0.0).samples for u in s.users
    )
    np.testing.assert_allclose(joint, parts, atol=1e-12 * np.abs(joint).max())


def test_stage1_noise_variance(small_scene):
    cb = stage1_codebook(16, 16)
    noise = 3.7
    rx = simulate_stage1_rx(small_scene, cb, noise, seed=2)
    clean = simulate_stage1_rx(small_scene, cb, 0.0).samples
    resid = np.concatenate([(rx.samples - clean).ravel()] + [
        (simulate_stage1_rx(small_scene, cb, noise, seed=s).samples - clean).ravel()
        for s in range(3, 42)
    ])
    assert resid.size >= 10**4
    assert np.mean(np.abs(resid) ** 2) == pytest.approx(noise, rel=0.05)


def test_stage2_noiseless_and_all_ones_slot(small_scene):
    s = small_scene
    cb = stage2_codebook(16, 5, seed=3)
    rx = simulate_stage2_rx(s, 1, cb, 0.0)
    np.testing.assert_array_equal(rx.samples, s.cascaded[1] @ cb.matrix)
    ones = type(cb)(np.ones((16, 1)))
    y = simulate_stage2_rx(s, 2, ones, 0.0).samples[:, 0]
    np.testing.assert_allclose(y, s.h_common @ s.h_users[2], atol=1e-15)


def test_stage2_factorizations_agree(small_scene):
    s = small_scene
    cb = stage2_codebook(16, 7, seed=3)
    for r in range(s.l_paths):
        h_s = true_ambiguous_common(s, r).assembled
        for k in range(s.k_users):
            via_ambiguous = h_s @ np.diag(true_ambiguous_user_channel(s, k, r)) @ cb.matrix
            assert rel_err(via_ambiguous, noiseless_stage2(s, k, cb)) <= 1e-10


def test_stage2_rejects_bad_user(small_scene):
    cb = stage2_codebook(16, 2, seed=0)
    with pytest.raises(InvalidInputError):
        simulate_stage2_rx(small_scene, 3, cb, 0.0)
    with pytest.raises(InvalidInputError):
        simulate_stage2_rx(small_scene, -1, cb, 0.0)


def test_dimension_mismatch_and_negative_noise(small_scene):
    with pytest.raises(InvalidInputError):
        simulate_stage1_rx(small_scene, stage1_codebook(12, 4), 0.0)
    with pytest.raises(InvalidInputError):
        simulate_stage1_rx(small_scene, stage1_codebook(16, 4), -1.0)


def test_noise_prefix_consistency(small_scene):
    long = stage2_codebook(16, 9, seed=1)
    a = simulate_stage2_rx(small_scene, 0, long, 0.5, seed=8)
    b = simulate_stage2_rx(small_scene, 0, long.prefix(4), 0.5, seed=8)
    np.testing.assert_array_equal(a.prefix(4).samples, b.samples)
    assert a.slots == 9 and b.slots == 4


def test_same_seed_same_block(small_scene):
    cb = stage1_codebook(16, 4)
    a = simulate_stage1_rx(small_scene, cb, 1.0, seed=5).samples
    assert np.array_equal(a, simulate_stage1_rx(small_scene, cb, 1.0, seed=5).samples)


def test_calibrate_noise_levels(small_scene):
    cb = stage2_codebook(16, 6, seed=0)
    p = np.mean(np.abs(noiseless_stage2(small_scene, 0, cb)) ** 2)
    assert calibrate_noise(small_scene, cb, 0.0, user_index=0) == pytest.approx(p, rel=1e-12)
    assert calibrate_noise(small_scene, cb, 10.0, user_index=0) == pytest.approx(p / 10, rel=1e-12)
    pooled = np.mean([np.mean(np.abs(noiseless_stage2(small_scene, k, cb)) ** 2) for k in range(3)])
    assert calibrate_noise(small_scene, cb, 0.0) == pytest.approx(pooled, rel=1e-12)
    cb1 = stage1_codebook(16, 8)
    p1 = np.mean(np.abs(simulate_stage1_rx(small_scene, cb1, 0.0).samples) ** 2)
    assert calibrate_noise(small_scene, cb1, 3.0) == pytest.approx(p1 / 10 ** 0.3, rel=1e-12)


def test_calibrate_noise_scales_with_gain_squared():
    s = scene_with([UserPathSet([0.1], [0.5 + 0.1j])])
    c2 = CommonPathSet(s.common.aoa_bs, s.common.aod_ris, 2 * s.common.gains)
    s2 = make_scene(s.geometry, c2, s.users)
    cb = stage2_codebook(10, 6, seed=0)
    assert calibrate_noise(s2, cb, 5.0) == pytest.approx(4 * calibrate_noise(s, cb, 5.0), rel=1e-12)


def test_calibrate_noise_zero_signal():
    s = scene_with([UserPathSet([0.1], [0.0])])
    with pytest.raises(DegenerateSceneError):
        calibrate_noise(s, stage2_codebook(10, 3, seed=0), 0.0)


def test_received_block_validation():
    with pytest.raises(InvalidInputError):
        ReceivedBlock(np.zeros((3, 0)), "stage1")
    with pytest.raises(InvalidInputError):
        ReceivedBlock(np.zeros((3, 2)), "stage3")
