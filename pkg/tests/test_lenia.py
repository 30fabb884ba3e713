import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import roll_convolve
from lenia_imgep.lenia import (
    DynamicsParams,
    InvalidParameterError,
    Lenia,
    as_pattern,
    build_kernel,
    convolve_direct,
    convolve_spectral,
    growth_mapping,
    kernel_core,
    kernel_shell,
    rollout,
    step,
    torus_distance,
)

ORBIUM = DynamicsParams(R=13, T=10, mu=0.15, sigma=0.015, beta=(1.0, 0.0, 0.0))


def test_growth_peak_and_tails():
    assert growth_mapping(0.3, 0.3, 0.05) == 1.0
    assert growth_mapping(50.0, 0.3, 0.05) == pytest.approx(-1.0, abs=1e-12)
    assert growth_mapping(-50.0, 0.3, 0.05) == pytest.approx(-1.0, abs=1e-12)
    expected = 2 * math.exp(-(0.2 ** 2) / (2 * 0.015 ** 2)) - 1
    assert growth_mapping(0.35, 0.15, 0.015) == pytest.approx(expected, abs=1e-15)


@given(st.floats(-10, 10), st.floats(0, 1), st.floats(0.001, 0.3))
def test_growth_bounded(u, mu, sigma):
    g = growth_mapping(u, mu, sigma)
    assert -1.0 <= g <= 1.0
    assert g <= growth_mapping(mu, mu, sigma)


@pytest.mark.parametrize("sigma", [0.0, -0.1])
def test_growth_rejects_nonpositive_sigma(sigma):
    with pytest.raises(InvalidParameterError):
        growth_mapping(0.1, 0.1, sigma)


def test_kernel_core_values():
    assert kernel_core(0.5) == pytest.approx(1.0, abs=1e-15)
    assert kernel_core(1e-4) < 1e-300 or kernel_core(1e-4) == 0.0
    assert kernel_core(1 - 1e-4) < 1e-300 or kernel_core(1 - 1e-4) == 0.0
    assert kernel_core(0.0) == 0.0 and kernel_core(1.0) == 0.0
    r = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(kernel_core(r), np.exp(4 - 4 / (4 * r * (1 - r))))


def test_kernel_shell_ring_midpoints():
    vals = kernel_shell(np.array([1 / 6, 3 / 6, 5 / 6]), (1.0, 1.0, 1.0))
    np.testing.assert_allclose(vals, 1.0, atol=1e-12)
    vals = kernel_shell(np.array([1 / 6, 3 / 6, 5 / 6]), (0.2, 0.5, 0.9))
    np.testing.assert_allclose(vals, [0.2, 0.5, 0.9], atol=1e-12)
    assert kernel_shell(1.0, (1, 1, 1)) == 0.0
    assert kernel_shell(1.5, (1, 1, 1)) == 0.0


def test_build_kernel_properties():
    L = 64
    k = build_kernel(ORBIUM, L)
    assert k.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(k >= 0)
    assert np.all(k[torus_distance(L) >= ORBIUM.R] == 0)
    # symmetric under reflection through the origin and transposition
    np.testing.assert_array_equal(k, k.T)
    np.testing.assert_array_equal(k, np.roll(k[::-1, ::-1], 1, axis=(0, 1)))


def test_build_kernel_zero_beta_and_radius_limits():
    assert not build_kernel(DynamicsParams(5, 10, 0.15, 0.015, (0, 0, 0)), 32).any()
    with pytest.raises(InvalidParameterError):
        build_kernel(DynamicsParams(16, 10, 0.15, 0.015), 32)
    with pytest.raises(InvalidParameterError):
        DynamicsParams(0, 10, 0.15, 0.015)
    with pytest.raises(InvalidParameterError):
        DynamicsParams(3, 0, 0.15, 0.015)
    with pytest.raises(InvalidParameterError):
        DynamicsParams(3, 1, 0.15, 0.015, (1.0, 1.0))


def test_convolutions_match_roll_oracle(rng):
    for R in (2, 5, 9, 15):
        params = DynamicsParams(R, 5, 0.2, 0.02, tuple(rng.random(3)))
        k = build_kernel(params, 32)
        a = rng.random((32, 32)).astype(np.float32)
        oracle = roll_convolve(a, k)
        np.testing.assert_allclose(convolve_direct(a, k), oracle, atol=1e-12)
        np.testing.assert_allclose(convolve_spectral(a, k), oracle, atol=1e-12)


def test_convolution_shape_mismatch():
    k = build_kernel(ORBIUM, 64)
    with pytest.raises(ValueError):
        convolve_direct(np.zeros((32, 32)), k)
    with pytest.raises(ValueError):
        convolve_spectral(np.zeros((32, 32)), k)
    with pytest.raises(ValueError):
        step(np.zeros((32, 32)), ORBIUM, k)


def test_step_fixed_points():
    k = build_kernel(ORBIUM, 64)
    zero = np.zeros((64, 64), dtype=np.float32)
    np.testing.assert_array_equal(step(zero, ORBIUM, k), zero)
    ones = np.ones((64, 64), dtype=np.float32)
    g1 = growth_mapping(1.0, ORBIUM.mu, ORBIUM.sigma)
    expected = np.float32(np.clip(1 + g1 / ORBIUM.T, 0, 1))
    np.testing.assert_allclose(step(ones, ORBIUM, k), expected, atol=1e-6)
    wide = DynamicsParams(5, 4, 1.0, 0.3)
    np.testing.assert_array_equal(step(ones, wide, build_kernel(wide, 64)), ones)


def test_single_cell_wraps_to_opposite_corner():
    L = 32
    params = DynamicsParams(3, 1, 0.0, 0.3)
    k = build_kernel(params, L)
    a = np.zeros((L, L), dtype=np.float32)
    a[0, 0] = 1.0
    u = convolve_direct(a, k)
    # (L-1, L-1) is at torus distance sqrt(2) from (0, 0)
    assert u[L - 1, L - 1] > 0
    assert u[L // 2, L // 2] == 0


def test_step_output_is_clipped(rng):
    k = build_kernel(ORBIUM, 32)
    for _ in range(5):
        out = step(rng.random((32, 32)), DynamicsParams(13, 1, 0.3, 0.1), k)
        assert out.dtype == np.float32
        assert out.min() >= 0 and out.max() <= 1


def test_rollout_contract(rng):
    a = rng.random((32, 32)).astype(np.float32)
    params = DynamicsParams(6, 5, 0.2, 0.03, (0.5, 1.0, 0.2))
    r = rollout(a, params, M=2)
    assert r.M == 2
    np.testing.assert_array_equal(r.steps[0], a)
    np.testing.assert_array_equal(r.steps[1], step(a, params, build_kernel(params, 32)))
    r1, r2 = rollout(a, params, M=20), rollout(a, params, M=20)
    for s1, s2 in zip(r1.steps, r2.steps):
        assert s1.tobytes() == s2.tobytes()
    zero = rollout(np.zeros((32, 32)), ORBIUM.__class__(6, 10, 0.15, 0.015), M=10)
    assert all(not s.any() for s in zero.steps)
    with pytest.raises(ValueError):
        rollout(a, params, M=1)


def test_as_pattern_validation():
    with pytest.raises(ValueError):
        as_pattern(np.zeros((4, 5)))
    with pytest.raises(ValueError):
        as_pattern(np.full((4, 4), 1.5))
    with pytest.raises(ValueError):
        as_pattern(np.full((4, 4), np.nan))


@given(st.integers(0, 31), st.integers(0, 31), st.integers(0, 2**32 - 1))
def test_rollout_translation_equivariance_direct(dy, dx, seed):
    r = np.random.default_rng(seed)
    a = r.random((32, 32)).astype(np.float32)
    params = DynamicsParams(int(r.integers(2, 15)), int(r.integers(1, 20)), float(r.random()),
                            float(r.uniform(0.001, 0.3)), tuple(r.random(3)))
    base = rollout(a, params, M=4, method="direct")
    shifted = rollout(np.roll(a, (dy, dx), axis=(0, 1)), params, M=4, method="direct")
    for s0, s1 in zip(base.steps, shifted.steps):
        np.testing.assert_array_equal(np.roll(s0, (dy, dx), axis=(0, 1)), s1)


@given(st.integers(0, 63), st.integers(0, 63))
def test_rollout_translation_equivariance_spectral(dy, dx):
    a = np.random.default_rng(dy * 64 + dx).random((64, 64)).astype(np.float32)
    base = rollout(a, ORBIUM, M=4)
    shifted = rollout(np.roll(a, (dy, dx), axis=(0, 1)), ORBIUM, M=4)
    for s0, s1 in zip(base.steps, shifted.steps):
        np.testing.assert_allclose(np.roll(s0, (dy, dx), axis=(0, 1)), s1, atol=1e-6)


def test_lenia_class_chooses_backend():
    assert Lenia(ORBIUM, 64).method == "spectral"
    assert Lenia(DynamicsParams(5, 10, 0.15, 0.015), 32).method == "direct"
    with pytest.raises(ValueError):
        Lenia(ORBIUM, 64, method="gpu")
    with pytest.raises(ValueError):
        next(iter(Lenia(ORBIUM, 64).run(np.zeros((64, 64)), 1)))


def test_direct_convolution_full_support_kernel(rng):
    # support reaching L/2 must not count the antipodal offset twice
    for L in (8, 9, 32):
        s, k = rng.random((L, L)), rng.random((L, L))
        np.testing.assert_allclose(convolve_direct(s, k), roll_convolve(s, k), atol=1e-9)
