"""hKdVB drift, coefficient validation and run configuration.

The stochastic equation is

    du + (eps u_4x + A u u_x + B u_3x - C u_2x + D u) dt = Phi(u) dW

and its Galerkin truncation multiplies each differential term by a smooth
cutoff ``theta(|u_kx|^2 / m)`` of the squared L2 norm of the corresponding
derivative.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, ShapeError
from .noise import NoiseSpec
from .spectral import Basis, Domain, SpectralState

PRESETS = ("kdv", "damped_kdv", "burgers", "kdv_burgers", "damped_burgers", "full")

# coefficients pinned to zero by each special case
_ZERO_PATTERN = {
    "kdv": ("C", "D"),
    "damped_kdv": ("C",),
    "burgers": ("B", "D"),
    "kdv_burgers": ("D",),
    "damped_burgers": ("B",),
    "full": (),
}

SCHEMES = ("auto", "euler", "lawson4")


@dataclass(frozen=True)
class Coefficients:
    A: float = 1.0
    B: float = 1.0
    C: float = 1.0
    D: float = 1.0
    epsilon: float = 0.0

    def as_dict(self):
        return {"A": self.A, "B": self.B, "C": self.C, "D": self.D, "epsilon": self.epsilon}


def preset(name: str, **overrides) -> Coefficients:
    """Coefficients of a named special case; free entries default to 1."""
    if name not in _ZERO_PATTERN:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    zeros = _ZERO_PATTERN[name]
    values = {"A": 1.0, "B": 1.0, "C": 1.0, "D": 1.0, "epsilon": 0.0}
    for key, val in overrides.items():
        if key not in values:
            raise ValueError(f"unknown coefficient {key!r}")
        if key in zeros and val != 0:
            raise ValueError(f"preset {name!r} fixes {key}=0")
        values[key] = float(val)
    for key in zeros:
        values[key] = 0.0
    return Coefficients(**values)


def _psi(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def theta_cutoff(xi):
    """Smooth cutoff: 1 on [0, 1], 0 on [2, inf), monotone in between."""
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("theta_cutoff is defined for xi >= 0")
    if np.all(x <= 1.0):
        return 1.0 if x.ndim == 0 else np.ones_like(x)
    a = _psi(2.0 - x)
    b = _psi(x - 1.0)
    out = np.where(x <= 1.0, 1.0, np.where(x >= 2.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))
    return float(out) if out.ndim == 0 else out


# -- run configuration -----------------------------------------------------------

INITIAL_KINDS = ("gaussian", "soliton", "mode", "zero", "file")


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "gaussian"
    amplitude: float = 0.5
    width: float = 1.0
    center: float = 0.0
    mode: int = 1
    phase: float = 0.0
    speed: float = 0.0  # soliton speed; 0 picks one that fits the domain
    file: str = ""


@dataclass(frozen=True)
class SimConfig:
    coefficients: Coefficients = field(default_factory=Coefficients)
    domain: Domain = field(default_factory=lambda: Domain(-10.0, 10.0))
    m: int = 32
    dt: float = 1e-3
    T: float = 0.5
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lambda_X: float = 10.0
    seed: int = 0
    n_paths: int = 1
    enforce_ccond: bool = True
    initial: InitialCondition = field(default_factory=InitialCondition)
    scheme: str = "auto"
    cutoff: bool = True
    save_stride: int = 10
    k_local: float = 0.0  # 0 selects half of the admissible range
    weight_delta: float = 1.0
    weight_gamma: float = -2.0
    # derived by validate_config
    grid_size: int = 0
    warnings: tuple = ()

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def resolved_scheme(self) -> str:
        if self.scheme != "auto":
            return self.scheme
        return "lawson4" if self.noise.kind == "off" else "euler"

    @property
    def local_k(self) -> float:
        return self.k_local if self.k_local > 0 else 0.5 * self.domain.max_local_k


def ccond_holds(c: Coefficients) -> bool:
    return 3.0 * c.B >= c.A + 1.0


def validate_config(config: SimConfig) -> SimConfig:
    """Check structural bounds and the coefficient condition; fill derived fields."""
    c = config.coefficients
    for name in ("A", "B", "C", "D", "epsilon"):
        if not math.isfinite(getattr(c, name)):
            raise ConfigError(f"coefficient {name} must be finite")
    for name in ("B", "C", "D"):
        if getattr(c, name) < 0:
            raise ConfigError(f"coefficient condition requires {name} >= 0, got {getattr(c, name)}")
    if c.epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {c.epsilon}")
    notes = []
    if not ccond_holds(c):
        msg = f"coefficient condition 3B >= A + 1 violated: 3*{c.B} < {c.A} + 1"
        if config.enforce_ccond:
            raise ConfigError(msg)
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)
    if int(config.m) != config.m or config.m < 1:
        raise ConfigError(f"m must be a positive integer, got {config.m}")
    if not config.dt > 0:
        raise ConfigError(f"dt must be positive, got {config.dt}")
    if not config.T >= config.dt:
        raise ConfigError(f"T must be >= dt, got T={config.T}, dt={config.dt}")
    n = config.T / config.dt
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ConfigError(f"T={config.T} is not an integer multiple of dt={config.dt}")
    if not config.lambda_X > 0:
        raise ConfigError(f"lambda_X must be positive, got {config.lambda_X}")
    if config.n_paths < 1:
        raise ConfigError(f"n_paths must be >= 1, got {config.n_paths}")
    if config.save_stride < 1:
        raise ConfigError(f"save_stride must be >= 1, got {config.save_stride}")
    if config.scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {config.scheme!r}; expected one of {SCHEMES}")
    if config.scheme == "lawson4" and config.noise.kind != "off":
        raise ConfigError("the lawson4 scheme is deterministic; use euler with noise")
    if config.initial.kind not in INITIAL_KINDS:
        raise ConfigError(f"unknown initial condition {config.initial.kind!r}")
    if config.k_local < 0 or config.k_local > config.domain.max_local_k:
        raise ConfigError(f"k_local={config.k_local} must lie in (0, {config.domain.max_local_k}]")
    dim = 2 * int(config.m) + 1
    noise = config.noise.validate(dim)
    if noise.kind != "off" and noise.rank == 0:
        noise = replace(noise, rank=dim)
    return replace(config, m=int(config.m), noise=noise, grid_size=4 * int(config.m) + 4,
                   warnings=tuple(notes))


# -- initial data ----------------------------------------------------------------


def default_soliton_speed(coeffs: Coefficients, domain: Domain) -> float:
    """Speed whose soliton width leaves tails of order exp(-20) at the boundary."""
    w = 20.0 / domain.L
    return 4.0 * coeffs.B * w * w


def soliton_profile(x, c: float, coeffs: Coefficients, x0: float = 0.0, period: float | None = None):
    """KdV soliton ``(3c/A) sech^2(sqrt(c/4B)(x - x0))``, wrapped to the nearest image."""
    x = np.asarray(x, dtype=float) - x0
    if period is not None:
        x = (x + 0.5 * period) % period - 0.5 * period
    w = math.sqrt(c / (4.0 * coeffs.B))
    return 3.0 * c / coeffs.A / np.cosh(w * x) ** 2


def initial_field(config: SimConfig, basis: Basis) -> np.ndarray:
    ic = config.initial
    x = basis.grid
    L = basis.L
    if ic.kind == "zero":
        return np.zeros_like(x)
    if ic.kind == "gaussian":
        amp = min(ic.amplitude, 0.5 * config.lambda_X)
        d = (x - ic.center + 0.5 * L) % L - 0.5 * L
        return amp * np.exp(-0.5 * (d / ic.width) ** 2)
    if ic.kind == "mode":
        if not 0 <= ic.mode <= basis.m:
            raise ConfigError(f"initial mode {ic.mode} outside 0..{basis.m}")
        k = 2 * np.pi * ic.mode / L
        return ic.amplitude * np.sin(k * (x - basis.domain.x1) + ic.phase)
    if ic.kind == "soliton":
        co = config.coefficients
        if not (co.A != 0 and co.B > 0):
            raise ConfigError("soliton initial data needs A != 0 and B > 0")
        c = ic.speed if ic.speed > 0 else default_soliton_speed(co, config.domain)
        return soliton_profile(x, c, co, ic.center, L)
    data = np.loadtxt(ic.file, ndmin=1)
    if data.ndim == 1:
        if data.size != basis.N:
            raise ConfigError(f"initial file has {data.size} values, grid has {basis.N}")
        return data
    xs, us = data[:, 0], data[:, 1]
    return np.interp(x, xs, us, period=L)


def initial_state(config: SimConfig, basis: Basis) -> SpectralState:
    values = initial_field(config, basis)
    return SpectralState(basis.from_pairs(basis.grid_to_pairs(values)), 0.0)


# -- drift -------------------------------------------------------------------------


class Dynamics:
    """Batched evaluation of the Galerkin drift in complex pair space.

    All methods accept ``Z`` of shape (n, m+1) and are reentrant.
    """

    def __init__(self, coeffs: Coefficients, basis: Basis, cutoff: bool = True, scale: float | None = None):
        self.coeffs = coeffs
        self.basis = basis
        self.cutoff = cutoff
        self.scale = float(basis.m if scale is None else scale)
        k = basis.k
        self.k = k
        self.k2, self.k3, self.k4 = k ** 2, k ** 3, k ** 4
        self.ik = 1j * k
        self._to_grid = basis.M / basis._pair_scale
        # rfft scaling and d/dx of u^2 / 2 folded together
        self._adv_factor = 0.5 * self.ik * basis._pair_scale / basis.M

    def derivative_norms2(self, Z):
        """Squared L2 norms of u_x, u_2x, u_3x, u_4x, each shape (n,)."""
        a2 = np.abs(Z) ** 2
        k2 = self.k2
        n1 = a2 @ k2
        n2 = a2 @ (k2 * k2)
        n3 = a2 @ (k2 * k2 * k2)
        n4 = a2 @ (k2 * k2 * k2 * k2)
        return n1, n2, n3, n4

    def thetas(self, Z):
        n = Z.shape[0]
        if not self.cutoff:
            one = np.ones(n)
            return one, one, one, one
        return tuple(theta_cutoff(v / self.scale) for v in self.derivative_norms2(Z))

    def advection(self, Z, want_max=True):
        """``P_m(u u_x)`` as pairs plus ``max|u|`` on the padded grid."""
        b = self.basis
        F = np.zeros(Z.shape[:-1] + (b.M // 2 + 1,), dtype=complex)
        F[..., : b.m + 1] = Z * self._to_grid
        u = sfft.irfft(F, n=b.M, axis=-1)
        W = sfft.rfft(u * u, axis=-1)[..., : b.m + 1] * self._adv_factor
        return W, (np.max(np.abs(u), axis=-1) if want_max else None)

    def linear_rates(self, th):
        """Decay ``sigma`` and rotation ``omega`` per mode given cutoff values."""
        c = self.coeffs
        t1, t2, t3, t4 = th
        sigma = (c.epsilon * t4)[:, None] * self.k4 + (c.C * t2)[:, None] * self.k2 + c.D
        omega = (c.B * t3)[:, None] * self.k3
        return sigma, omega

    def nonlinear(self, Z, th, want_max=True):
        adv, umax = self.advection(Z, want_max)
        return -(self.coeffs.A * th[0])[:, None] * adv, umax

    def drift(self, Z):
        th = self.thetas(Z)
        sigma, omega = self.linear_rates(th)
        N, _ = self.nonlinear(Z, th)
        return (-sigma + 1j * omega) * Z + N


def _single(state: SpectralState, basis: Basis):
    if state.dim != basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, basis has {basis.dim}")
    return basis.to_pairs(state.coeffs)[None, :]


def galerkin_drift(state: SpectralState, config: SimConfig, basis: Basis) -> SpectralState:
    """Time derivative of the cutoff Galerkin system (without noise)."""
    Z = _single(state, basis)
    dZ = Dynamics(config.coefficients, basis, cutoff=True).drift(Z)
    return SpectralState(basis.from_pairs(dZ)[0], state.time)


def deterministic_rhs(state: SpectralState, config: SimConfig, basis: Basis) -> SpectralState:
    """Galerkin drift with every cutoff equal to one."""
    Z = _single(state, basis)
    dZ = Dynamics(config.coefficients, basis, cutoff=False).drift(Z)
    return SpectralState(basis.from_pairs(dZ)[0], state.time)


def drift_growth_bound(state: SpectralState, config: SimConfig, basis: Basis) -> float:
    """``(Lambda sqrt(2m) + kappa + D)(|u| + 1)`` with ``Lambda = max(|A|, eps + B + C)``."""
    c = config.coefficients
    lam = max(abs(c.A), c.epsilon + c.B + c.C)
    kappa = max(config.noise.kappa1, config.noise.kappa2)
    return (lam * math.sqrt(2 * basis.m) + kappa + c.D) * (state.l2_norm() + 1.0)
