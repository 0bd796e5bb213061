import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_region
from nightglow.errors import ConvergenceError, MatteOvershootError, ParameterError
from nightglow.imgio import load_image
from nightglow.lightsource import (
    MattingConfig,
    MattingLaplacian,
    detect_light_sources,
    matting_refine,
    solve_matting,
    threshold_mask,
)
from oracles import dense_matte, dense_matting_laplacian


def _operator_matrix(img):
    op = MattingLaplacian(img)
    n = img.shape[0] * img.shape[1]
    return np.stack([op.apply(e.reshape(img.shape[:2])).ravel() for e in np.eye(n)], axis=1), op


def test_threshold_mask_examples():
    img = np.array([[[0.9, 0.1, 0.1], [0.7, 0.7, 0.7], [0.8, 0.8, 0.8]]])
    assert threshold_mask(img).tolist() == [[1.0, 0.0, 0.0]]
    assert not threshold_mask(np.zeros((4, 4, 3))).any()


def test_operator_matches_dense_assembly(rng):
    img = rng.random((8, 8, 3))
    dense = dense_matting_laplacian(img)
    mat, op = _operator_matrix(img)
    np.testing.assert_allclose(mat, dense, rtol=0, atol=1e-10)
    np.testing.assert_allclose(op.diagonal.ravel(), np.diag(dense), rtol=0, atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_laplacian_row_sums_and_psd(seed):
    img = np.random.default_rng(seed).random((8, 8, 3))
    dense = dense_matting_laplacian(img)
    assert np.abs(dense.sum(axis=1)).max() < 1e-10
    np.testing.assert_allclose(dense, dense.T, atol=1e-12)
    mat, _ = _operator_matrix(img)
    assert np.abs(mat.sum(axis=1)).max() < 1e-10
    vs = np.random.default_rng(seed + 100).normal(size=(20, 64))
    assert min(v @ mat @ v for v in vs) >= -1e-8


def test_grayscale_operator_matches_dense(rng):
    img = rng.random((7, 9, 1))
    dense = dense_matting_laplacian(img)
    mat, _ = _operator_matrix(img)
    np.testing.assert_allclose(mat, dense, atol=1e-10)


def test_constant_image_all_ones_mask():
    img = np.full((12, 12, 3), 0.95)
    matte = matting_refine(img, np.ones((12, 12)))
    np.testing.assert_array_equal(matte, np.ones((12, 12)))


def test_two_region_residual_and_oracle():
    img, mask = two_region(7, 16)
    cfg = MattingConfig()
    alpha, info = solve_matting(img, mask, cfg)
    ref, lap = dense_matte(img, mask)
    a = lap + cfg.lam * np.eye(lap.shape[0])
    b = cfg.lam * mask.ravel()
    res = np.linalg.norm(a @ alpha.ravel() - b)
    assert res <= cfg.cg_tol * np.linalg.norm(b)
    assert np.abs(alpha - ref).max() < 1e-4
    matte = np.clip(alpha, 0, 1)
    assert matte[mask == 1].min() > 0.9
    assert matte[mask == 0].max() < 0.1


def test_patch_mass_matches_dense_oracle():
    img = np.full((32, 32, 3), 0.08)
    img[14:18, 10:14] = 1.0
    res = detect_light_sources(img)
    ref, _ = dense_matte(img, threshold_mask(img))
    ref = np.clip(ref, 0, 1)
    assert res.light_sz == pytest.approx(100 * ref.sum() / 1024, abs=1e-6)
    inside = res.matte[14:18, 10:14].sum()
    assert inside / res.matte.sum() > 0.9
    assert 1.0 < res.light_sz < 2.0


def test_detect_black_and_white():
    black = detect_light_sources(np.zeros((10, 10, 3)))
    assert black.light_sz == 0 and not black.matte.any() and not black.light_image.any()
    white = detect_light_sources(np.ones((10, 10, 3)))
    assert white.light_sz == 100
    np.testing.assert_array_equal(white.light_image, np.ones((10, 10, 3)))


def test_light_image_is_product(rng):
    img, _ = two_region(3)
    res = detect_light_sources(img)
    np.testing.assert_array_equal(res.light_image, img * res.matte[:, :, None])
    assert res.light_sz == pytest.approx(100 * res.matte.sum() / res.matte.size)


def test_deterministic(scene_paths):
    img = load_image(scene_paths[0])
    a = detect_light_sources(img)
    b = detect_light_sources(img)
    assert a.matte.tobytes() == b.matte.tobytes()
    assert a.light_image.tobytes() == b.light_image.tobytes()


def test_convergence_error_carries_residual():
    img, mask = two_region(1)
    cfg = MattingConfig(cg_tol=1e-14, cg_max_iter=1)
    with pytest.raises(ConvergenceError) as info:
        solve_matting(img, mask, cfg)
    assert info.value.residual > 1e-14
    assert info.value.iterations == 1


def test_overshoot_flagged():
    img, mask = two_region(2)
    # targets above 1 pull the unclamped solution out of the sanity band
    with pytest.raises(MatteOvershootError):
        matting_refine(img, np.full(mask.shape, 1.2))


def test_half_resolution_path(scene_paths):
    img = load_image(scene_paths[1])
    full = detect_light_sources(img, cfg=MattingConfig(half_resolution=False))
    half = detect_light_sources(img, cfg=MattingConfig(half_resolution=True))
    assert half.matte.shape == full.matte.shape
    assert half.matte.min() >= 0 and half.matte.max() <= 1
    assert half.light_sz == pytest.approx(full.light_sz, rel=0.25)


def test_config_validation():
    with pytest.raises(ParameterError):
        MattingConfig(window=4)
    with pytest.raises(ParameterError):
        MattingConfig(eps=0)
    with pytest.raises(ParameterError):
        MattingConfig(cg_tol=1.5)
    with pytest.raises(ParameterError):
        matting_refine(np.zeros((5, 5, 3)), np.zeros((4, 5)))


def test_lower_tau_never_shrinks_light(scene_paths):
    for path in scene_paths:
        img = load_image(path)
        sizes = [detect_light_sources(img, tau).light_sz for tau in (0.9, 0.8, 0.7, 0.5)]
        assert sizes == sorted(sizes)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_matte_in_unit_interval(seed):
    img, mask = two_region(seed, 16)
    matte = matting_refine(img, mask)
    assert matte.min() >= 0 and matte.max() <= 1
