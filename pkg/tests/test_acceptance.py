"""Acceptance criteria, one test each, at their stated tolerances."""
import json
import math
import os
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from hkdvb.errors import InfeasibleError
from hkdvb.estimates import (check_ibp_identities, ito_residual_scan, moment_bound_scan,
                             random_test_field)
from hkdvb.harness.cli import random_weight_parameters
from hkdvb.integrator import simulate_path, simulate_paths
from hkdvb.martingale import martingale_diagnostics
from hkdvb.model import (Coefficients, InitialCondition, SimConfig, default_soliton_speed, preset,
                         validate_config)
from hkdvb.noise import NoiseSpec, growth_bound, hs_norm, make_noise_operator
from hkdvb.oracles import admit_oracles, convergence_study, validate_solver
from hkdvb.spectral import Domain, SpectralState, build_basis, spectral_derivative
from hkdvb.weight import construct_weight, verify_weight

BENCH = NoiseSpec("diagonal_gain", 0.1)
DOM = Domain(-10.0, 10.0)


def test_linear_exactness(verdict):
    co = Coefficients(0.0, 1.0, 0.3, 0.1, 0.01)
    assert admit_oracles(("linear_mode",))["linear_mode"]["admitted"]
    errs, elapsed = {}, 0.0
    for dt in (1e-2, 1e-3):
        cfg = SimConfig(coefficients=co, m=16, T=1.0, dt=dt, initial=InitialCondition("mode", 1.0, mode=3),
                        save_stride=1)
        t0 = time.perf_counter()
        errs[dt] = validate_solver(cfg, check_gate=False)["max_rel_l2_error"]
        elapsed = max(elapsed, time.perf_counter() - t0)
    ok = max(errs.values()) < 1e-12 and elapsed < 1.0
    verdict(1, "linear exactness", ok, f"max rel error {max(errs.values()):.2e} (< 1e-12), "
            f"slowest run {elapsed:.2f} s (< 1 s)")


def test_kdv_soliton_transport(verdict):
    co = preset("kdv")
    T = DOM.L / default_soliton_speed(co, DOM)
    cfg = SimConfig(coefficients=co, m=256, dt=1e-4, T=T, enforce_ccond=False,
                    initial=InitialCondition("soliton"), save_stride=1000)
    t0 = time.perf_counter()
    out = validate_solver(cfg)
    elapsed = time.perf_counter() - t0
    err, drift = out["max_rel_l2_error"], out["energy_drift_per_time"]
    ok = err < 1e-4 and drift < 1e-8 and elapsed < 30
    verdict(2, "KdV soliton transport", ok, f"L2 error {err:.2e} (< 1e-4), drift {drift:.2e}/time "
            f"(< 1e-8), T = {T:.3f}, {elapsed:.1f} s (< 30 s)")


def _dissipation_residual(dt):
    co = Coefficients(1.0, 1.0, 0.5, 0.3, 0.01)
    cfg = validate_config(SimConfig(coefficients=co, m=32, dt=dt, T=0.2, cutoff=False, save_stride=1,
                                    scheme="euler"))
    b = build_basis(cfg.m, cfg.domain)
    tr = simulate_path(cfg, local_functional=False)
    e = np.sum(tr.coeffs ** 2, axis=1)
    lhs = np.diff(e) / dt

    def sq(order, c):
        return float(np.sum(spectral_derivative(SpectralState(c), order, b).coeffs ** 2))

    rhs = np.array([-2 * co.C * sq(1, c) - 2 * co.D * float(c @ c) - 2 * co.epsilon * sq(2, c)
                    for c in tr.coeffs[:-1]])
    mean = tr.coeffs[:, 0]
    mean_err = float(np.max(np.abs(mean / (mean[0] * np.exp(-co.D * tr.times)) - 1)))
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs))), mean_err


def test_dissipation_law(verdict):
    r1, m1 = _dissipation_residual(2e-3)
    r2, m2 = _dissipation_residual(1e-3)
    ratio = r1 / r2
    ok = 1.6 < ratio < 2.4 and max(m1, m2) < 1e-6
    verdict(3, "dissipation law", ok, f"residual {r1:.2e} -> {r2:.2e} (ratio {ratio:.2f}, first order), "
            f"mean decay error {max(m1, m2):.1e} (< 1e-6)")


def test_ibp_identities(verdict):
    rng = np.random.default_rng(11)
    b = build_basis(64, DOM)
    t0 = time.perf_counter()
    weights = [construct_weight(DOM, *random_weight_parameters(rng)) for _ in range(5)]
    worst = 0.0
    for _ in range(100):
        u = random_test_field(b, rng)
        for p in weights:
            d = check_ibp_identities(u, p, b).details
            worst = max(worst, d["u3x"]["relative"], d["u2x"]["relative"])
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8 and elapsed < 10
    verdict(4, "integration-by-parts identities", ok,
            f"max relative residual {worst:.1e} (< 1e-8) over 100 x 5, {elapsed:.1f} s (< 10 s)")


def test_weight_certification(verdict):
    rng = np.random.default_rng(5)
    certified = 0
    for _ in range(20):
        B, C, delta, gamma = random_weight_parameters(rng)
        p = construct_weight(DOM, B, C, delta, gamma)
        certified += verify_weight(p, DOM, B, C).passed
    try:
        construct_weight(DOM, 0.0, 0.0)
        infeasible = False
    except InfeasibleError:
        infeasible = True
    verdict(5, "weight certification", certified == 20 and infeasible,
            f"{certified}/20 certified, B = C = 0 reported infeasible: {infeasible}")


def test_noise_growth_conformance(verdict):
    rng = np.random.default_rng(8)
    b = build_basis(16, DOM)
    worst_excess, worst_eq = -np.inf, 0.0
    for spec in (NoiseSpec("diagonal_gain", 0.3), NoiseSpec("pointwise_multiplicative", 0.3, 0.1)):
        op = make_noise_operator(spec, b)
        for _ in range(1000):
            r = rng.uniform(0, 10)
            c = rng.normal(size=b.dim)
            s = SpectralState(c * r / np.linalg.norm(c))
            h, g = hs_norm(op, s), growth_bound(spec, r)
            worst_excess = max(worst_excess, h - g)
            if spec.kind == "diagonal_gain":
                worst_eq = max(worst_eq, abs(h - g) / g)
    ok = worst_excess <= 1e-14 and worst_eq < 1e-12
    verdict(6, "noise growth conformance", ok, f"max excess over bound {worst_excess:.1e}, "
            f"diagonal_gain equality error {worst_eq:.1e} (< 1e-12)")


def test_moment_bound_scan(verdict):
    cfg = validate_config(SimConfig(coefficients=preset("full"), noise=BENCH, m=64, T=0.5, dt=1e-3,
                                    n_paths=32))
    t0 = time.perf_counter()
    out = moment_bound_scan(cfg, [1e-1, 1e-2, 1e-3, 1e-4])
    elapsed = time.perf_counter() - t0
    ok = out["bounded"] and elapsed < 600
    verdict(7, "moment-bound scan", ok, f"max/min ratio eps*H2 {out['ratio_eps_h2']:.3g}, local H1 "
            f"{out['ratio_h1_local']:.3g} (each < 10), {elapsed:.0f} s (< 600 s)")


def test_martingale_diagnostics(verdict):
    cfg = validate_config(SimConfig(coefficients=preset("full"), noise=BENCH, m=32, T=0.5, dt=1e-3,
                                    n_paths=256, save_stride=1))
    t0 = time.perf_counter()
    trajs, blowups = simulate_paths(cfg, record_noise=True)
    assert not blowups
    rep = martingale_diagnostics(trajs, cfg)
    elapsed = time.perf_counter() - t0
    inc = max(abs(r["mean"]) / r["halfwidth"] for r in rep.increments)
    qv = max(abs(r["mean"]) / r["halfwidth"] for r in rep.quadratic_variation)
    ok = rep.passed and elapsed < 600
    verdict(8, "martingale diagnostics", ok, f"worst increment |mean|/hw {inc:.2f}, quadratic variation "
            f"{qv:.2f} (<= 3), Doob ratio {rep.doob_ratio:.2f} (<= 4), {elapsed:.0f} s")


def test_ito_energy_slope(verdict):
    cfg = validate_config(SimConfig(coefficients=preset("full", epsilon=0.01), m=32, T=0.1,
                                    noise=NoiseSpec("diagonal_gain", 0.5)))
    out = ito_residual_scan(cfg, [1e-3, 5e-4, 2.5e-4], n_paths=32)
    slope = out["slope"]
    verdict(9, "Ito energy residual", abs(slope - 1.0) <= 0.3,
            f"fitted slope {slope:.3f} (1.0 +/- 0.3) over dt 1e-3 .. 2.5e-4")


def test_eps_convergence(verdict):
    cfg = validate_config(SimConfig(coefficients=preset("full"), noise=BENCH, m=32, T=0.5, dt=1e-3,
                                    n_paths=32))
    out = convergence_study(cfg, "eps", [1e-1, 1e-2, 1e-3])
    frac = out["decreasing_fraction"]
    ok = frac >= 0.9 and out["noise_identical"]
    verdict(10, "eps convergence", ok, f"strictly decreasing for {frac:.0%} of 32 paths (>= 90%), "
            f"shared noise: {out['noise_identical']}")


def _cli(argv, threads, out):
    env = dict(os.environ, HKDVB_THREADS=str(threads))
    proc = subprocess.run([sys.executable, "-m", "hkdvb", *argv, "--out", str(out), "--stamp", "r"],
                          env=env, capture_output=True, text=True)
    files = json.loads(proc.stdout)["files"] if proc.stdout.strip() else []
    return proc.returncode, files


CLI_RUNS = [
    ["ensemble", "--paths", "40", "--m", "16", "--T", "0.1", "--noise", "diagonal_gain"],
    ["ensemble", "--paths", "40", "--m", "16", "--T", "0.1", "--noise", "off"],
    ["simulate", "--m", "16", "--T", "0.1", "--noise", "pointwise_multiplicative", "--kappa2", "0.1", "--seed", "4"],
    ["martingale", "--paths", "40", "--m", "16", "--T", "0.1"],
    ["converge", "--paths", "20", "--m", "16", "--T", "0.1"],
]


def test_reproducibility(verdict, tmp_path):
    same = 0
    for i, argv in enumerate(CLI_RUNS):
        blobs = []
        for threads in (1, 4):
            code, files = _cli(argv, threads, tmp_path / f"{i}-{threads}")
            blobs.append(b"".join(open(f, "rb").read() for f in files if not f.endswith(".meta.json")))
        same += code == 0 and blobs[0] == blobs[1] and len(blobs[0]) > 0
    verdict(11, "reproducibility", same == len(CLI_RUNS),
            f"{same}/{len(CLI_RUNS)} commands byte-identical with 1 and 4 threads")
