import numpy as np
import pytest
from hypothesis import given, strategies as st

from rachml.preamble import (
    InvalidConfig,
    ShiftOutOfRange,
    ZcConfig,
    apply_cyclic_shift,
    generate_preamble,
    generate_root_sequence,
    periodic_correlation,
)

CFG = ZcConfig()


def direct_zc(u, n):
    # straight from the definition, with exact integer phase
    return np.array([np.exp(-1j * np.pi * ((u * m * (m + 1)) % (2 * n)) / n) for m in range(n)])


def brute_periodic_corr(a, b):
    n = len(a)
    return np.array([sum(a[(m + l) % n] * np.conj(b[m]) for m in range(n)) for l in range(n)])


def test_defaults_give_64_shifts():
    assert CFG.n_shifts == 64
    assert (CFG.n_zc, CFG.root_u, CFG.n_cs) == (839, 25, 13)


def test_root_matches_definition():
    np.testing.assert_allclose(generate_root_sequence(CFG), direct_zc(25, 839), atol=1e-13)


def test_constant_modulus():
    z = generate_root_sequence(CFG)
    assert np.max(np.abs(np.abs(z) - 1.0)) <= 1e-12


def test_first_sample_is_one():
    assert generate_root_sequence(CFG)[0] == pytest.approx(1.0)


def test_zero_autocorrelation_off_peak():
    z = generate_root_sequence(CFG)
    r = periodic_correlation(z, z)
    assert abs(r[0]) == pytest.approx(839, rel=1e-12)
    assert np.max(np.abs(r[1:])) <= 1e-9 * 839


def test_periodic_correlation_matches_brute_force():
    cfg = ZcConfig(n_zc=31, root_u=4, n_cs=3)
    a = generate_root_sequence(cfg)
    b = generate_preamble(cfg, 2)
    np.testing.assert_allclose(periodic_correlation(a, b), brute_periodic_corr(a, b), atol=1e-10)


@pytest.mark.parametrize("u2", [1, 26, 400, 838])
def test_cross_root_correlation_is_flat(u2):
    z1 = generate_root_sequence(CFG)
    z2 = generate_root_sequence(ZcConfig(root_u=u2))
    mag = np.abs(periodic_correlation(z1, z2))
    np.testing.assert_allclose(mag, np.sqrt(839), rtol=1e-6)


def test_shift_definition():
    z = generate_root_sequence(CFG)
    x = apply_cyclic_shift(z, 5, CFG)
    m = np.arange(839)
    np.testing.assert_array_equal(x, z[(m + 5 * 13) % 839])


def test_shift_composition():
    z = generate_root_sequence(CFG)
    twice = apply_cyclic_shift(apply_cyclic_shift(z, 1, CFG), 1, CFG)
    np.testing.assert_array_equal(twice, apply_cyclic_shift(z, 2, CFG))


@given(st.integers(0, 63))
def test_shift_is_a_permutation(v):
    idx = np.arange(839).astype(complex)
    shifted = apply_cyclic_shift(idx, v, CFG).real.astype(int)
    assert sorted(shifted) == list(range(839))


@given(st.integers(1, 63))
def test_shifted_preambles_are_orthogonal_at_zero_lag(v):
    a = generate_preamble(CFG, 0)
    b = generate_preamble(CFG, v)
    assert abs(np.vdot(b, a)) <= 1e-9 * 839


def test_shift_out_of_range():
    z = generate_root_sequence(CFG)
    with pytest.raises(ShiftOutOfRange):
        apply_cyclic_shift(z, 64, CFG)
    with pytest.raises(ShiftOutOfRange):
        apply_cyclic_shift(z, -1, CFG)


def test_shift_length_mismatch():
    with pytest.raises(InvalidConfig):
        apply_cyclic_shift(np.ones(838, complex), 0, CFG)


@pytest.mark.parametrize("kw", [dict(n_zc=838), dict(n_zc=1), dict(root_u=0), dict(root_u=839),
                                dict(n_cs=0), dict(n_cs=840)])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        ZcConfig(**kw)


def test_large_index_precision():
    # the integer phase reduction keeps long sequences exact
    cfg = ZcConfig(n_zc=100003, root_u=99991, n_cs=1)
    z = generate_root_sequence(cfg)
    m = 100002
    exact = np.exp(-1j * np.pi * ((99991 * m * (m + 1)) % (2 * 100003)) / 100003)
    assert abs(z[-1] - exact) < 1e-12
    assert np.max(np.abs(np.abs(z) - 1)) <= 1e-12


def test_tiny_root_by_hand():
    z = generate_root_sequence(ZcConfig(n_zc=3, root_u=1, n_cs=1))
    np.testing.assert_allclose(z, [1, np.exp(-2j * np.pi / 3), 1], atol=1e-15)
    assert generate_root_sequence(ZcConfig(root_u=1))[0] == 1 + 0j


def test_zero_shift_is_identity():
    z = generate_root_sequence(CFG)
    np.testing.assert_array_equal(apply_cyclic_shift(z, 0, CFG), z)


def test_shift_two_offsets_by_26():
    z = generate_root_sequence(CFG)
    np.testing.assert_array_equal(apply_cyclic_shift(z, 2, CFG), z[(np.arange(839) + 26) % 839])
