"""Receiver-algebra identities, worked small examples, and validation errors."""

import numpy as np
import pytest

from helpers import random_geometry, random_pattern
from subnyq.errors import ConfigError, SpatialAliasingError
from subnyq.model import (
    ArrayGeometry,
    MultiCosetPattern,
    build_A,
    build_B,
    build_G_selected,
    build_H,
    build_H_selected,
    build_J,
    doa_from_phase,
    full_steering,
    joint_steering,
    phase_from_doa,
    selected_channel_columns,
    spatial_steering,
    steering_set,
)

GEOM = ArrayGeometry(M=5, d=0.5, c_prop=1.0)
PATTERN = MultiCosetPattern(L=7, offsets=(0, 1, 3), f_N=2.0)


def test_coset_matrix_rows_orthonormal():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pattern = random_pattern(rng, max_coherence=1.0)
        B = build_B(pattern)
        np.testing.assert_allclose(B @ B.conj().T, np.eye(pattern.P),
                                   atol=1e-12)


def test_coset_matrix_entries():
    B = build_B(PATTERN)
    assert B.shape == (3, 7)
    for i, c in enumerate(PATTERN.offsets):
        for l in range(PATTERN.L):
            expected = np.exp(2j * np.pi * c * l / 7) / np.sqrt(7)
            assert abs(B[i, l] - expected) < 1e-14


def test_selection_matrix_small_example():
    # M=3 sensors, P=2 branches: keep channels (s1,b1), (s1,b2), (s2,b1), (s3,b1)
    J = build_J(3, 2)
    expected = np.zeros((4, 6))
    expected[0, 0] = expected[1, 1] = expected[2, 2] = expected[3, 4] = 1.0
    np.testing.assert_array_equal(J, expected)
    np.testing.assert_array_equal(selected_channel_columns(3, 2), [0, 1, 2, 4])


def test_selection_matrix_orthonormal_rows():
    for M, P in [(2, 1), (3, 2), (8, 5), (6, 6)]:
        J = build_J(M, P)
        assert J.shape == (M + P - 1, M * P)
        np.testing.assert_array_equal(J @ J.T, np.eye(M + P - 1))


def test_spatial_steering_values():
    a = spatial_steering(0.3, 4)
    np.testing.assert_allclose(a, np.exp(-1j * 0.3 * np.arange(4)), atol=1e-15)
    assert a[0] == 1.0 + 0.0j
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-15)


def test_steering_matrix_columns():
    phis = [0.1, -1.2, 2.5]
    A = build_A(phis, 6)
    for k, phi in enumerate(phis):
        np.testing.assert_allclose(A[:, k], spatial_steering(phi, 6), atol=1e-15)


def test_joint_steering_matches_selected_kron_column():
    rng = np.random.default_rng(1)
    for _ in range(20):
        geom = random_geometry(rng)
        pattern = random_pattern(rng, max_coherence=1.0)
        phi = rng.uniform(-np.pi, np.pi)
        band = int(rng.integers(pattern.L))
        J = build_J(geom.M, pattern.P)
        direct = J @ np.kron(spatial_steering(phi, geom.M),
                             build_B(pattern)[:, band])
        np.testing.assert_allclose(joint_steering(phi, band, geom, pattern),
                                   direct, atol=1e-13)


def test_joint_steering_norm():
    # P entries of modulus 1/sqrt(L) plus M-1 of the same modulus
    v = joint_steering(0.7, 2, GEOM, PATTERN)
    expected = (GEOM.M + PATTERN.P - 1) / PATTERN.L
    assert abs(np.vdot(v, v).real - expected) < 1e-13


def test_full_steering_is_kron():
    phi, band = -0.9, 5
    g = full_steering(phi, band, GEOM, PATTERN)
    direct = np.kron(spatial_steering(phi, GEOM.M), build_B(PATTERN)[:, band])
    np.testing.assert_allclose(g, direct, atol=1e-14)


def test_combined_matrix_columns():
    phis = [0.4, -2.0]
    H = build_H(phis, GEOM, PATTERN)
    assert H.shape == (GEOM.M + PATTERN.P - 1, 2 * PATTERN.L)
    for k, phi in enumerate(phis):
        for l in range(PATTERN.L):
            np.testing.assert_allclose(
                H[:, k * PATTERN.L + l],
                joint_steering(phi, l, GEOM, PATTERN), atol=1e-13,
            )


def test_selected_builders_pick_columns():
    phis = [0.4, -2.0]
    bands = [1, 6]
    H_sel = build_H_selected(phis, bands, GEOM, PATTERN)
    G_sel = build_G_selected(phis, bands, GEOM, PATTERN)
    for k in range(2):
        np.testing.assert_allclose(
            H_sel[:, k], joint_steering(phis[k], bands[k], GEOM, PATTERN),
            atol=1e-14)
        np.testing.assert_allclose(
            G_sel[:, k], full_steering(phis[k], bands[k], GEOM, PATTERN),
            atol=1e-14)
    # selection matrix maps the full columns onto the simplified ones
    J = build_J(GEOM.M, PATTERN.P)
    np.testing.assert_allclose(J @ G_sel, H_sel, atol=1e-14)


def test_phase_doa_round_trip():
    rng = np.random.default_rng(2)
    geom = ArrayGeometry(M=4, d=0.5, c_prop=1.0)
    for _ in range(50):
        theta = rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01)
        f = rng.uniform(0.05, 1.0)
        phi = phase_from_doa(theta, f, geom)
        assert abs(doa_from_phase(phi, f, geom) - theta) < 1e-12


def test_doa_from_phase_rejects_aliased_phase():
    geom = ArrayGeometry(M=4, d=0.5, c_prop=1.0)
    with pytest.raises(SpatialAliasingError):
        doa_from_phase(3.0, 0.1, geom)


def test_steering_set_bundles_consistent_matrices():
    phis = [0.2, 1.1]
    s = steering_set(phis, GEOM, PATTERN)
    np.testing.assert_allclose(s.H, s.J @ np.kron(s.A, s.B), atol=1e-13)


@pytest.mark.parametrize("kwargs", [
    dict(M=1, d=0.5),
    dict(M=4, d=0.0),
    dict(M=4, d=0.5, c_prop=-1.0),
])
def test_geometry_validation(kwargs):
    with pytest.raises(ConfigError):
        ArrayGeometry(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(L=0, offsets=(0,)),
    dict(L=5, offsets=()),
    dict(L=5, offsets=(0, 5)),
    dict(L=5, offsets=(2, 1)),
    dict(L=5, offsets=(1, 1)),
    dict(L=5, offsets=(0, 2), f_N=0.0),
])
def test_pattern_validation(kwargs):
    with pytest.raises(ConfigError):
        MultiCosetPattern(**kwargs)


def test_band_bounds_checked():
    with pytest.raises(ConfigError):
        joint_steering(0.1, PATTERN.L, GEOM, PATTERN)
    with pytest.raises(ConfigError):
        full_steering(0.1, -1, GEOM, PATTERN)
    with pytest.raises(ConfigError):
        build_H_selected([0.1], [PATTERN.L], GEOM, PATTERN)


def test_selected_builder_rejects_too_many_sources():
    rows = GEOM.M + PATTERN.P - 1
    phis = np.linspace(-1, 1, rows + 1)
    bands = [0] * (rows + 1)
    with pytest.raises(ConfigError):
        build_H_selected(phis, bands, GEOM, PATTERN)
