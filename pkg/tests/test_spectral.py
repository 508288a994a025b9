import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkdvb.errors import ConfigError, DomainError, ShapeError
from hkdvb.spectral import (Domain, Field, SpectralState, build_basis, gauss_legendre,
                            inner_product, local_sobolev_norm, sobolev_norm, spectral_derivative,
                            to_physical, to_spectral, transform)


def _gram(basis):
    x, w = gauss_legendre(basis.domain.x1, basis.domain.x2, 4 * basis.m + 64)
    E = basis.eval_matrix(x)
    return E.T @ (E * w[:, None])


def test_dimension_and_constant_mode():
    b = build_basis(1, Domain(-math.pi, math.pi))
    assert b.dim == 3
    x, w = gauss_legendre(-math.pi, math.pi, 32)
    e0 = b.eval_matrix(x)[:, 0]
    assert np.sum(w * e0 * e0) == pytest.approx(1.0, abs=1e-14)


def test_gram_off_diagonals_small():
    G = _gram(build_basis(2, Domain(-1.0, 2.0)))
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-12


@pytest.mark.parametrize("m", [1, 7, 32, 128])
def test_orthonormality(m):
    G = _gram(build_basis(m, Domain(-3.0, 5.0)))
    assert np.max(np.abs(G - np.eye(G.shape[0]))) < 1e-12


def test_sin3x_single_coefficient():
    # frozen: the sin(3x) profile is -sin(3(x - x1)) in the shifted basis with x1 = -pi,
    # and <sin 3x, e> = sqrt(1/pi) * pi = sqrt(pi) in magnitude
    b = build_basis(8, Domain(-math.pi, math.pi))
    c = to_spectral(Field(np.sin(3 * b.grid)), b).coeffs
    nz = np.flatnonzero(np.abs(c) > 1e-12)
    assert nz.tolist() == [6]
    assert c[6] == pytest.approx(-1.7724538509055159, rel=1e-13)
    assert abs(c[6]) == pytest.approx(math.sqrt(math.pi), rel=1e-13)


def test_zero_field_and_basis_image(basis16):
    assert np.all(to_spectral(Field(np.zeros(basis16.N)), basis16).coeffs == 0)
    e3 = basis16.eval_matrix(basis16.grid)[:, 3]
    c = to_spectral(Field(e3), basis16).coeffs
    target = np.zeros(basis16.dim)
    target[3] = 1.0
    assert np.max(np.abs(c - target)) < 1e-13


@given(st.integers(1, 40), st.integers(0, 2**31))
def test_round_trip(m, seed):
    b = build_basis(m, Domain(-7.0, 4.0))
    c = np.random.default_rng(seed).normal(size=b.dim)
    back = to_spectral(to_physical(SpectralState(c), b), b).coeffs
    assert np.max(np.abs(back - c)) < 1e-12


def test_transform_dispatch(basis16):
    f = transform(SpectralState(np.ones(basis16.dim)), "to_physical", basis16)
    assert isinstance(f, Field)
    assert isinstance(transform(f, "to_spectral", basis16), SpectralState)
    with pytest.raises(ValueError):
        transform(f, "sideways", basis16)
    with pytest.raises(ShapeError):
        to_spectral(Field(np.zeros(3)), basis16)


def test_derivative_of_constant_is_zero(basis16):
    c = np.zeros(basis16.dim)
    c[0] = 2.5
    for q in (1, 2, 3, 4):
        assert np.all(spectral_derivative(SpectralState(c), q, basis16).coeffs == 0)


def test_second_derivative_eigenfunction(basis16):
    j = 5
    c = np.zeros(basis16.dim)
    c[2 * j] = 1.0
    d2 = spectral_derivative(SpectralState(c), 2, basis16).coeffs
    k = basis16.k[j]
    assert np.max(np.abs(d2 + k * k * c)) < 1e-13 * k * k


def test_fourth_derivative_against_finite_differences():
    dom = Domain(-1.0, 1.0)
    b = build_basis(4, dom)
    k1 = 2 * math.pi / dom.L
    # 512 points: at 4096 the h^-4 rounding of the stencil exceeds the tolerance
    x = dom.x1 + dom.L * np.arange(512) / 512
    h = x[1] - x[0]
    u = np.cos(2 * k1 * (x - dom.x1))
    # 6th order central stencil for the fourth derivative
    w = np.array([-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6])
    fd = sum(wi * np.roll(u, 3 - i) for i, wi in enumerate(w)) / h ** 4
    # least squares multiplier over the grid averages out the h^-4 rounding noise
    ratio = float(fd @ u / (u @ u))
    c = np.zeros(b.dim)
    c[3] = 1.0
    d4 = spectral_derivative(SpectralState(c), 4, b).coeffs
    assert d4[3] == pytest.approx(ratio, rel=1e-6)
    assert d4[3] == pytest.approx((2 * k1) ** 4, rel=1e-13)


@given(st.integers(0, 2**31))
def test_derivative_consistency(seed):
    b = build_basis(24, Domain(-5.0, 5.0))
    s = SpectralState(np.random.default_rng(seed).normal(size=b.dim))
    twice = spectral_derivative(spectral_derivative(s, 1, b), 1, b).coeffs
    once = spectral_derivative(s, 2, b).coeffs
    assert np.max(np.abs(twice - once)) < 1e-11 * max(1.0, np.max(np.abs(once)))


def test_derivative_order_checked(basis16):
    with pytest.raises(ValueError):
        spectral_derivative(SpectralState(np.zeros(basis16.dim)), 5, basis16)


def test_sobolev_zero_and_single_mode(basis16):
    z = SpectralState(np.zeros(basis16.dim))
    for s in (-3, 0, 1.5, 2):
        assert sobolev_norm(z, s, basis16) == 0.0
    j, amp = 4, -1.7
    c = np.zeros(basis16.dim)
    c[2 * j - 1] = amp
    for s in (-1, 0.5, 2):
        expect = (1 + basis16.k[j] ** 2) ** (s / 2) * abs(amp)
        assert sobolev_norm(SpectralState(c), s, basis16) == pytest.approx(expect, rel=1e-14)


@given(st.integers(0, 2**31), st.lists(st.floats(-4, 4), min_size=2, max_size=6))
def test_sobolev_monotone_in_s(seed, ss):
    b = build_basis(12, Domain(-2.0, 3.0))
    s = SpectralState(np.random.default_rng(seed).normal(size=b.dim))
    vals = [sobolev_norm(s, v, b) for v in sorted(ss)]
    assert all(v1 <= v2 * (1 + 1e-14) for v1, v2 in zip(vals, vals[1:]))
    assert sobolev_norm(s, -3, b) <= s.l2_norm() <= sobolev_norm(s, 2, b)


@given(st.integers(0, 2**31))
def test_parseval(seed):
    b = build_basis(20, Domain(-6.0, 9.0))
    c = np.random.default_rng(seed).normal(size=b.dim)
    f = to_physical(SpectralState(c), b)
    assert abs(inner_product(f, f, b) - np.sum(c * c)) < 1e-10 * np.sum(c * c)


def test_inner_products(basis16):
    E = basis16.eval_matrix(basis16.grid)
    assert abs(inner_product(Field(E[:, 1]), Field(E[:, 2]), basis16)) < 1e-14
    assert inner_product(Field(E[:, 1]), Field(E[:, 1]), basis16) == pytest.approx(1.0, abs=1e-13)


def test_local_norms(basis16):
    z = Field(np.zeros(basis16.N))
    for s in (-1, 0, 1):
        assert local_sobolev_norm(z, 4.0, s, basis16) == 0.0
    const = Field(np.full(basis16.N, 1.3))
    assert local_sobolev_norm(const, 4.0, 0, basis16) == pytest.approx(1.3 * math.sqrt(8.0), rel=1e-13)


def test_local_h1_norm_matches_quadrature(basis16):
    k1 = basis16.k[1]
    u = Field(np.sin(k1 * basis16.grid))
    k = 3.0
    x, w = gauss_legendre(-k, k, 400)
    expect = math.sqrt(np.sum(w * (np.sin(k1 * x) ** 2 + (k1 * np.cos(k1 * x)) ** 2)))
    assert local_sobolev_norm(u, k, 1, basis16) == pytest.approx(expect, rel=1e-8)


def test_local_norm_interval_checked(basis16):
    with pytest.raises(DomainError):
        local_sobolev_norm(Field(np.zeros(basis16.N)), 11.0, 0, basis16)


def test_domain_and_basis_validation():
    with pytest.raises(ConfigError):
        Domain(1.0, 2.0)
    with pytest.raises(ConfigError):
        build_basis(0, Domain(-1.0, 1.0))
