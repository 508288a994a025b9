import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hkdvb.errors import ConfigError
from hkdvb.integrator import simulate_path
from hkdvb.model import (Coefficients, InitialCondition, SimConfig, ccond_holds, deterministic_rhs,
                         drift_growth_bound, galerkin_drift, initial_state, preset, soliton_profile,
                         theta_cutoff, validate_config)
from hkdvb.noise import NoiseSpec
from hkdvb.spectral import Domain, SpectralState, build_basis, spectral_derivative, to_spectral, Field


@pytest.mark.parametrize("A,B,C,D,ok", [(2, 1, 0, 0, True), (1, 0, 1, 0, False), (0, 1, 2, 3, True)])
def test_coefficient_condition(A, B, C, D, ok):
    cfg = SimConfig(coefficients=Coefficients(A, B, C, D))
    if ok:
        assert validate_config(cfg).warnings == ()
    else:
        with pytest.raises(ConfigError, match="3B >= A \\+ 1"):
            validate_config(cfg)
        with pytest.warns(UserWarning):
            relaxed = validate_config(replace(cfg, enforce_ccond=False))
        assert relaxed.warnings


def test_negative_coefficients_rejected():
    with pytest.raises(ConfigError):
        validate_config(SimConfig(coefficients=Coefficients(0, 1, -1, 0)))


@pytest.mark.parametrize("name,zeros", [("kdv", "CD"), ("kdv_burgers", "D"), ("damped_burgers", "B"),
                                        ("burgers", "BD"), ("damped_kdv", "C"), ("full", "")])
def test_presets(name, zeros):
    c = preset(name, A=3.0)
    for key in "BCD":
        assert (getattr(c, key) == 0) == (key in zeros)
    assert c.A == 3.0


def test_preset_rejects_pinned_override():
    with pytest.raises(ValueError):
        preset("kdv", C=1.0)
    assert preset("kdv", C=0.0).C == 0.0
    with pytest.raises(ValueError):
        preset("nonsense")


def test_theta_values():
    assert theta_cutoff(0.5) == 1.0
    assert theta_cutoff(1.0) == 1.0
    assert theta_cutoff(3.0) == 0.0
    assert theta_cutoff(1.5) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        theta_cutoff(-0.1)


def test_theta_monotone_and_flat_at_ends():
    x = np.linspace(0, 3, 3001)
    th = theta_cutoff(x)
    assert np.all(np.diff(th) <= 0)
    h = 1e-4
    for x0 in (1.0, 2.0):
        slope = (theta_cutoff(x0 + h) - theta_cutoff(x0 - h)) / (2 * h)
        assert abs(slope) < 1e-6


@given(st.floats(1.0, 2.0))
def test_theta_symmetry(x):
    assert theta_cutoff(x) + theta_cutoff(3.0 - x) == pytest.approx(1.0, abs=1e-14)


def test_zero_state_zero_drift(basis16):
    z = SpectralState(np.zeros(basis16.dim))
    cfg = SimConfig()
    assert np.all(galerkin_drift(z, cfg, basis16).coeffs == 0)
    assert np.all(deterministic_rhs(z, cfg, basis16).coeffs == 0)


def test_diffusion_eigenvalue_with_cutoff(basis16):
    # mode 7 on [-10, 10] with m = 16: |u_2x|^2 / m = k^4 / 16 lies in (1, 2)
    cfg = SimConfig(coefficients=Coefficients(0.0, 0.0, 1.0, 0.0))
    j = 7
    k = basis16.k[j]
    c = np.zeros(basis16.dim)
    c[2 * j] = 1.0
    d = galerkin_drift(SpectralState(c), cfg, basis16).coeffs
    th = theta_cutoff(k ** 4 / 16)
    assert 0 < th < 1
    assert np.max(np.abs(d + k * k * th * c)) < 1e-14


def test_linear_symbol(basis16):
    co = Coefficients(0.0, 0.7, 0.3, 0.2, 0.05)
    cfg = SimConfig(coefficients=co)
    j = 3
    k = basis16.k[j]
    c = np.zeros(basis16.dim)
    c[2 * j - 1] = 1.0  # cos mode
    d = deterministic_rhs(SpectralState(c), cfg, basis16).coeffs
    decay = co.epsilon * k ** 4 + co.C * k * k + co.D
    assert d[2 * j - 1] == pytest.approx(-decay, rel=1e-14)
    # d/dt cos = B k^3 (-sin): u_3x of cos(kx) is k^3 sin(kx), moved to the right-hand side
    assert d[2 * j] == pytest.approx(-co.B * k ** 3, rel=1e-14)
    mask = np.ones(basis16.dim, bool)
    mask[[2 * j - 1, 2 * j]] = False
    assert np.all(d[mask] == 0)


def test_soliton_rhs_is_translation():
    dom = Domain(-10.0, 10.0)
    b = build_basis(256, dom)
    co = preset("kdv")
    c = 4.0
    u = to_spectral(Field(soliton_profile(b.grid, c, co, 0.0, dom.L)), b)
    rhs = deterministic_rhs(u, SimConfig(coefficients=co), b).coeffs
    expect = -c * spectral_derivative(u, 1, b).coeffs
    assert np.linalg.norm(rhs - expect) / np.linalg.norm(expect) < 1e-4


@given(st.integers(0, 2**31), st.sampled_from([8, 16, 32, 64]))
def test_drift_growth_bound(seed, m):
    rng = np.random.default_rng(seed)
    b = build_basis(m, Domain(-10.0, 10.0))
    cfg = SimConfig(coefficients=Coefficients(1.0, 1.0, 0.5, 0.2, 0.01),
                    noise=NoiseSpec("diagonal_gain", 0.1))
    for _ in range(12):
        c = rng.normal(size=b.dim) / np.sqrt(np.arange(1, b.dim + 1)) ** rng.uniform(0, 3)
        c *= rng.uniform(0, 10) / np.linalg.norm(c)
        s = SpectralState(c)
        assert np.linalg.norm(galerkin_drift(s, cfg, b).coeffs) <= drift_growth_bound(s, cfg, b)


def test_cutoff_consistency_for_small_states(basis16):
    cfg = SimConfig(coefficients=Coefficients(1.0, 1.0, 0.5, 0.2, 0.1))
    rng = np.random.default_rng(3)
    c = rng.normal(size=basis16.dim) * 1e-3
    s = SpectralState(c)
    assert np.array_equal(galerkin_drift(s, cfg, basis16).coeffs, deterministic_rhs(s, cfg, basis16).coeffs)


def test_mean_decays_exponentially():
    cfg = validate_config(SimConfig(coefficients=Coefficients(1.0, 1.0, 0.5, 0.7), m=32, dt=1e-3, T=1.0,
                                    cutoff=False, save_stride=100))
    tr = simulate_path(cfg, record_noise=False, local_functional=False)
    mean = tr.coeffs[:, 0]
    np.testing.assert_allclose(mean, mean[0] * np.exp(-0.7 * tr.times), rtol=1e-6)


def test_initial_conditions(basis16):
    g = initial_state(validate_config(SimConfig(m=16, lambda_X=0.4,
                                                initial=InitialCondition(amplitude=5.0))), basis16)
    assert np.max(np.abs(np.asarray(
        basis16.pairs_to_grid(basis16.to_pairs(g.coeffs), basis16.N)))) <= 0.2 + 1e-9
    mode = initial_state(validate_config(SimConfig(m=16, initial=InitialCondition("mode", 1.0, mode=2))),
                         basis16)
    assert np.flatnonzero(np.abs(mode.coeffs) > 1e-12).tolist() == [4]
    with pytest.raises(ConfigError):
        initial_state(validate_config(SimConfig(m=16, initial=InitialCondition("mode", mode=40))), basis16)


def test_initial_from_file(tmp_path, basis16):
    f = tmp_path / "u0.txt"
    np.savetxt(f, np.sin(basis16.k[1] * basis16.grid))
    cfg = validate_config(SimConfig(m=16, initial=InitialCondition("file", file=str(f))))
    s = initial_state(cfg, basis16)
    assert abs(np.linalg.norm(s.coeffs) - math.sqrt(10.0)) < 1e-12


@pytest.mark.parametrize("kw", [dict(T=0.5, dt=0.3), dict(scheme="lawson4", noise=NoiseSpec("diagonal_gain")),
                                dict(scheme="rk45"), dict(m=0), dict(dt=-1.0), dict(k_local=20.0),
                                dict(noise=NoiseSpec("pointwise_multiplicative", 0.4, 0.0))])
def test_config_rejections(kw):
    with pytest.raises(ConfigError):
        validate_config(SimConfig(**kw))


def test_validate_fills_derived_fields():
    cfg = validate_config(SimConfig(m=10, noise=NoiseSpec("diagonal_gain")))
    assert cfg.grid_size == 44
    assert cfg.noise.rank == 21
    assert cfg.resolved_scheme == "euler"
    assert validate_config(SimConfig()).resolved_scheme == "lawson4"
    assert ccond_holds(Coefficients(2, 1, 0, 0))
