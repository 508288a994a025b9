"""Martingale structure of the stochastic integral ``M(t) = int_0^t Phi(u) dW``.

The discrete martingale ``M_n = sum_{j<n} P_m Phi(u_j) dW_j`` is rebuilt from
trajectories saved at every step together with their increments.  Three
Monte Carlo checks follow: orthogonality of increments to the past, the
quadratic variation compensator and Doob's maximal inequality for p = 2.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .integrator import PathEngine
from .model import SimConfig
from .spectral import Basis, Field, to_spectral

MIN_PATHS = 16
CI_MULT = 3.0


@dataclass(frozen=True)
class MartingaleTest:
    """One choice of times ``s < t``, test functions ``a, b`` and past functional ``phi``.

    ``a`` and ``b`` are coefficient vectors; ``phi(times, coeffs)`` receives
    the path restricted to ``[0, s]``.
    """

    name: str
    s: float
    t: float
    a: np.ndarray
    b: np.ndarray
    phi: Callable = field(default=lambda times, coeffs: 1.0)


@dataclass
class MartingaleReport:
    n_paths: int
    increments: list
    quadratic_variation: list
    doob_ratio: float  # E sup |M|^2 / E |M_T|^2, at most 4
    doob_ratio_scaled: float  # E sup |M|^2 / (4 E |M_T|^2), at most 1
    doob_ratio_first_moment: float  # E sup |M|^2 / (4 E |M_T|)
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        rows = self.increments + self.quadratic_variation
        return all(r["passed"] for r in rows) and self.doob_ratio <= 4.0

    def as_dict(self):
        return {
            "n_paths": self.n_paths, "increments": self.increments,
            "quadratic_variation": self.quadratic_variation,
            "doob_ratio": self.doob_ratio, "doob_ratio_scaled": self.doob_ratio_scaled,
            "doob_ratio_first_moment": self.doob_ratio_first_moment,
            "warnings": list(self.warnings), "passed": self.passed,
        }


def bump_coefficients(basis: Basis, center: float, radius: float) -> np.ndarray:
    """Projection of the smooth bump ``exp(-1/(1-r^2))`` supported on ``|x-center|<radius``."""
    r = (basis.grid - center) / radius
    inside = np.abs(r) < 1
    v = np.zeros_like(r)
    v[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return to_spectral(Field(v), basis).coeffs


def default_tests(basis: Basis, k: float, T: float):
    """Three (s, t, a, b, phi) choices with test functions supported in (-k, k)."""
    w = 0.45 * k
    a1 = bump_coefficients(basis, 0.0, w)
    b1 = bump_coefficients(basis, 0.4 * k, 0.5 * w)
    a2 = bump_coefficients(basis, -0.4 * k, 0.5 * w)

    def phi_norm(times, coeffs):
        return math.tanh(float(np.sum(coeffs[-1] ** 2)))

    def phi_path(times, coeffs):
        proj = float(coeffs[-1] @ a1) / float(np.linalg.norm(a1))
        return math.cos(proj) * math.exp(-float(np.max(np.sum(coeffs ** 2, axis=1))))

    return [
        MartingaleTest("half", 0.5 * T, T, a1, b1),
        MartingaleTest("early", 0.2 * T, 0.6 * T, a2, a2, phi_norm),
        MartingaleTest("late", 0.4 * T, 0.9 * T, a1, a2, phi_path),
    ]


def _ci(samples):
    n = samples.size
    mean = float(np.mean(samples))
    hw = float(1.96 * np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return mean, hw


def martingale_diagnostics(trajectories, config: SimConfig, tests=None,
                           basis: Basis | None = None) -> MartingaleReport:
    """Increment orthogonality, quadratic variation and Doob checks over an ensemble."""
    eng = PathEngine(config, basis)
    cfg, b = eng.config, eng.basis
    op = eng.noise
    trajectories = list(trajectories)
    n_paths = len(trajectories)
    notes = []
    if n_paths < MIN_PATHS:
        msg = f"only {n_paths} paths; martingale statistics have little power below {MIN_PATHS}"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    if tests is None:
        tests = default_tests(b, cfg.local_k, cfg.T)
    n_steps = cfg.n_steps
    dt = cfg.dt
    idx = {}
    for tst in tests:
        if not 0 <= tst.s < tst.t <= cfg.T + 1e-12:
            raise ConfigError(f"test {tst.name}: need 0 <= s < t <= T")
        idx[tst.name] = (int(round(tst.s / dt)), int(round(tst.t / dt)))

    inc = {t.name: [] for t in tests}
    qv = {t.name: [] for t in tests}
    sup2, end2, end1 = [], [], []
    for tr in trajectories:
        if tr.coeffs.shape[0] != n_steps + 1:
            raise ConfigError("martingale diagnostics need every step saved (save_stride = 1)")
        if op.is_off:
            M = np.zeros((n_steps + 1, b.dim))
        else:
            if tr.noise_record is None:
                raise ValueError("trajectory carries no noise record")
            Z = b.to_pairs(tr.coeffs[:-1])
            dM = b.from_pairs(op.apply_pairs(Z, tr.noise_record[:n_steps]))
            M = np.vstack([np.zeros(b.dim), np.cumsum(dM, axis=0)])
        m2 = np.sum(M * M, axis=1)
        sup2.append(float(np.max(m2)))
        end2.append(float(m2[-1]))
        end1.append(float(math.sqrt(m2[-1])))
        for tst in tests:
            i_s, i_t = idx[tst.name]
            phi = float(tst.phi(tr.times[: i_s + 1], tr.coeffs[: i_s + 1]))
            Ma, Mb = M @ tst.a, M @ tst.b
            inc[tst.name].append((Ma[i_t] - Ma[i_s]) * phi)
            if op.is_off:
                comp = 0.0
            else:
                Zw = b.to_pairs(tr.coeffs[i_s:i_t])
                comp = dt * float(np.sum(op.adjoint_pairs(Zw, tst.a) * op.adjoint_pairs(Zw, tst.b)))
            qv[tst.name].append((Ma[i_t] * Mb[i_t] - Ma[i_s] * Mb[i_s] - comp) * phi)

    def rows(store):
        out = []
        for tst in tests:
            mean, hw = _ci(np.asarray(store[tst.name]))
            out.append({"test": tst.name, "s": tst.s, "t": tst.t, "mean": mean, "halfwidth": hw,
                        "passed": bool(abs(mean) <= CI_MULT * hw)})
        return out

    es, e2, e1 = np.mean(sup2), np.mean(end2), np.mean(end1)
    return MartingaleReport(
        n_paths=n_paths,
        increments=rows(inc),
        quadratic_variation=rows(qv),
        doob_ratio=float(es / e2) if e2 > 0 else 0.0,
        doob_ratio_scaled=float(es / (4.0 * e2)) if e2 > 0 else 0.0,
        doob_ratio_first_moment=float(es / (4.0 * e1)) if e1 > 0 else 0.0,
        warnings=notes,
    )
