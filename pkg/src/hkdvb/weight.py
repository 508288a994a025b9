"""Polynomial weight functions for the weighted energy ``F(u) = int_X p u^2``.

A certified weight satisfies, on X = [x1, x2],

    (i)   p increasing,
    (ii)  p(x1) = delta > 0,
    (iii) p'(x) > alpha_X,
    (iv)  B p'''(x) + C p''(x) <= gamma < -1.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ConfigError, InfeasibleError
from .spectral import Basis, Domain

ALPHA_X = 1.0
MARGIN = 0.1
VERIFY_POINTS = 10_000


@dataclass
class IdentityReport:
    """Outcome of an identity, inequality or certification check."""

    lhs: float = 0.0
    rhs: float = 0.0
    residual: float = 0.0
    constants_found: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self):
        return {
            "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual,
            "constants_found": dict(self.constants_found),
            "checks": dict(self.checks), "failures": dict(self.failures),
            "details": dict(self.details), "passed": self.passed,
        }


@dataclass(frozen=True)
class WeightFunction:
    """``p(x) = sum_k poly_coeffs[k] (x - x1)^k``."""

    poly_coeffs: tuple
    x1: float
    delta: float
    alpha_X: float
    gamma: float

    @property
    def poly(self) -> Polynomial:
        return Polynomial(np.asarray(self.poly_coeffs, dtype=float))

    def __call__(self, x, order: int = 0):
        s = np.asarray(x, dtype=float) - self.x1
        return self.poly.deriv(order)(s) if order else self.poly(s)

    def derivative(self, x, order: int = 1):
        return self(x, order)


def construct_weight(domain: Domain, B: float, C: float, delta: float = 1.0,
                     gamma: float = -2.0, margin: float = MARGIN,
                     alpha_X: float = ALPHA_X) -> WeightFunction:
    """Cubic (B >= C) or quadratic (C > B) weight with certified margins."""
    if B < 0 or C < 0:
        raise ConfigError(f"B and C must be nonnegative, got B={B}, C={C}")
    if not B + C > 0:
        raise InfeasibleError("B = C = 0: condition (iv) would need 0 <= gamma < -1")
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    if not gamma < -1:
        raise ConfigError(f"gamma must be < -1, got {gamma}")
    L = domain.L
    # quadratic p works whenever C > 0; the cubic is kept for dispersion-dominated cases
    if B >= C:
        # p''' = 6c; p'' = 6cs <= 0 keeps the C term on the right side of (iv)
        c = gamma / (6.0 * B) * (1.0 + margin)
        a = alpha_X * (1.0 + margin) + 3.0 * abs(c) * L * L
        coeffs = (delta, a, 0.0, c)
    else:
        b = gamma / (2.0 * C) * (1.0 + margin)
        a = alpha_X * (1.0 + margin) + 2.0 * abs(b) * L
        coeffs = (delta, a, b)
    if not all(np.isfinite(coeffs)):
        raise InfeasibleError(f"B={B}, C={C} too small for a representable weight")
    return WeightFunction(tuple(float(v) for v in coeffs), float(domain.x1), float(delta),
                          float(alpha_X), float(gamma))


def verify_weight(p: WeightFunction, domain: Domain, B: float, C: float,
                  n_points: int = VERIFY_POINTS) -> IdentityReport:
    """Grid check of conditions (i)-(iv); failing abscissae go to ``failures``."""
    if len(p.poly_coeffs) > 6:
        raise ConfigError("verify_weight handles polynomials of degree <= 5")
    x = np.linspace(domain.x1, domain.x2, n_points)
    v = p(x)
    d1 = p(x, 1)
    iv = B * p(x, 3) + C * p(x, 2)
    p0 = float(p(domain.x1))
    checks = {
        "increasing": bool(np.all(np.diff(v) > 0)),
        "p_x1_equals_delta": bool(abs(p0 - p.delta) <= 1e-12 * max(1.0, abs(p.delta)) and p.delta > 0),
        "slope_above_alpha": bool(np.all(d1 > p.alpha_X)),
        "dispersion_bound": bool(np.all(iv <= p.gamma) and p.gamma < -1),
    }
    failures = {}
    if not checks["increasing"]:
        failures["increasing"] = float(x[np.argmin(np.diff(v))])
    if not checks["p_x1_equals_delta"]:
        failures["p_x1_equals_delta"] = float(domain.x1)
    if not checks["slope_above_alpha"]:
        failures["slope_above_alpha"] = float(x[np.argmin(d1)])
    if not checks["dispersion_bound"]:
        failures["dispersion_bound"] = float(x[np.argmax(iv)])
    return IdentityReport(
        lhs=float(np.max(iv)), rhs=float(p.gamma), residual=float(p.gamma - np.max(iv)),
        constants_found={"min_dp": float(np.min(d1)), "max_BC_term": float(np.max(iv)),
                         "p_x1": p0, "max_p": float(np.max(v))},
        checks=checks, failures=failures,
        details={"slope_margin": float(np.min(d1) - p.alpha_X),
                 "gamma_margin": float(p.gamma - np.max(iv))},
    )


@lru_cache(maxsize=32)
def _gram(m: int, x1: float, x2: float, coeffs: tuple, x1p: float):
    basis = Basis(m, Domain(x1, x2))
    s_poly = Polynomial(np.asarray(coeffs, dtype=float))
    G = basis.weighted_gram(lambda x: s_poly(x - x1p))
    G.setflags(write=False)
    return G


def weighted_gram(p: WeightFunction, basis: Basis) -> np.ndarray:
    """Matrix ``G`` with ``F(u) = c^T G c`` for real coefficients ``c``."""
    d = basis.domain
    return _gram(basis.m, d.x1, d.x2, tuple(p.poly_coeffs), p.x1)
