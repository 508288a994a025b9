import warnings

import numpy as np
import pytest

from hkdvb.errors import ConfigError
from hkdvb.integrator import simulate_path, simulate_paths
from hkdvb.martingale import (MartingaleTest, bump_coefficients,
                              martingale_diagnostics)
from hkdvb.model import SimConfig, validate_config
from hkdvb.noise import NoiseSpec


def _cfg(**kw):
    base = dict(m=16, dt=1e-3, T=0.5, save_stride=1)
    base.update(kw)
    return validate_config(SimConfig(**base))


def test_noise_off_martingale_vanishes():
    cfg = _cfg(n_paths=16)
    trajs, _ = simulate_paths(cfg)
    rep = martingale_diagnostics(trajs, cfg)
    assert rep.passed
    for row in rep.increments + rep.quadratic_variation:
        assert row["mean"] == 0.0
    assert rep.doob_ratio == 0.0


@pytest.mark.parametrize("kind,k2", [("diagonal_gain", 0.0), ("pointwise_multiplicative", 0.2)])
def test_stochastic_diagnostics_pass(kind, k2):
    cfg = _cfg(n_paths=256, noise=NoiseSpec(kind, 0.5, k2))
    trajs, blow = simulate_paths(cfg, record_noise=True)
    assert not blow
    rep = martingale_diagnostics(trajs, cfg)
    for row in rep.increments + rep.quadratic_variation:
        assert abs(row["mean"]) <= 3 * row["halfwidth"], row
    assert 1.0 <= rep.doob_ratio <= 4.0
    assert rep.doob_ratio_scaled <= 1.0
    assert rep.passed


def test_custom_window():
    cfg = _cfg(n_paths=256, noise=NoiseSpec("diagonal_gain", 0.5))
    trajs, _ = simulate_paths(cfg, record_noise=True)
    from hkdvb.spectral import build_basis
    b = build_basis(cfg.m, cfg.domain)
    a = bump_coefficients(b, 0.0, 3.0)
    rep = martingale_diagnostics(trajs, cfg, tests=[MartingaleTest("w", 0.25, 0.5, a, a)])
    assert rep.increments[0]["test"] == "w" and rep.passed


def test_few_paths_warn():
    cfg = _cfg(n_paths=4, noise=NoiseSpec("diagonal_gain", 0.5))
    trajs, _ = simulate_paths(cfg, record_noise=True)
    with pytest.warns(UserWarning):
        rep = martingale_diagnostics(trajs, cfg)
    assert rep.warnings


def test_requires_full_record_and_valid_window():
    cfg = _cfg(save_stride=10, noise=NoiseSpec("diagonal_gain", 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ConfigError):
            martingale_diagnostics([simulate_path(cfg)], cfg)
        full = _cfg(noise=NoiseSpec("diagonal_gain", 0.5))
        a = np.zeros(2 * 16 + 1)
        with pytest.raises(ConfigError):
            martingale_diagnostics([simulate_path(full)], full, tests=[MartingaleTest("bad", 0.4, 0.2, a, a)])


def test_bump_support(basis32):
    a = bump_coefficients(basis32, 1.0, 2.0)
    vals = basis32.pairs_to_grid(basis32.to_pairs(a), basis32.N)
    far = np.abs(basis32.grid - 1.0) > 6.0
    assert np.max(np.abs(vals[far])) < 1e-3 * np.max(np.abs(vals))
