"""Real trigonometric Galerkin basis on a bounded interval.

The interval ``X = [x1, x2]`` is extended periodically.  The basis is

    e_0 = 1/sqrt(L),
    e_{2j-1} = sqrt(2/L) cos(k_j (x - x1)),
    e_{2j}   = sqrt(2/L) sin(k_j (x - x1)),       k_j = 2 pi j / L,

for ``j = 1..m``, so a state is a real vector of length ``2m + 1``.

Internally most of the package works with the complex pair representation
``Z_0 = c_0``, ``Z_j = a_j - i b_j`` in which ``d/dx`` is multiplication by
``i k_j`` and the coefficients map onto ``rfft`` bins by a fixed scaling.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class Domain:
    x1: float
    x2: float

    def __post_init__(self):
        if not (np.isfinite(self.x1) and np.isfinite(self.x2)):
            raise ConfigError("domain endpoints must be finite")
        if not (self.x1 < 0.0 < self.x2):
            raise ConfigError(
                f"domain must satisfy x1 < 0 < x2, got [{self.x1}, {self.x2}]")

    @property
    def L(self) -> float:
        return float(self.x2 - self.x1)

    @property
    def max_local_k(self) -> float:
        """Largest admissible half-width k with (-k, k) inside X."""
        return float(min(-self.x1, self.x2))


@dataclass
class SpectralState:
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 1:
            raise ShapeError("state coefficients must be a vector")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("state coefficients must be finite")

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.coeffs ** 2)))


@dataclass
class Field:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


@lru_cache(maxsize=64)
def gauss_legendre(a: float, b: float, n: int):
    """Gauss-Legendre nodes and weights on [a, b]."""
    t, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (b - a) * t + 0.5 * (b + a)
    return x, 0.5 * (b - a) * w


class Basis:
    """Orthonormal trigonometric basis of dimension ``2m + 1`` on ``domain``.

    ``grid`` holds the ``N = 4m + 4`` equispaced collocation points on
    ``[x1, x2)``.  Quadratic products are evaluated on a separate padded grid
    of ``M >= 3m + 2`` points so that no aliasing reaches the retained modes.
    """

    def __init__(self, m: int, domain: Domain):
        self.m = int(m)
        self.domain = domain
        self.L = domain.L
        self.dim = 2 * self.m + 1
        self.N = 4 * self.m + 4
        self.M = sfft.next_fast_len(3 * self.m + 2, real=True)
        if self.M % 2:
            self.M += 1
        self.grid = domain.x1 + self.L * np.arange(self.N) / self.N
        # k[0] = 0 for the constant mode
        self.k = 2.0 * np.pi * np.arange(self.m + 1) / self.L
        self.mode_wavenumbers = self.k[1:]
        self._pair_scale = np.full(self.m + 1, np.sqrt(2.0 * self.L))
        self._pair_scale[0] = np.sqrt(self.L)

    def __repr__(self):
        return f"Basis(m={self.m}, domain=[{self.domain.x1}, {self.domain.x2}])"

    # -- coefficient <-> complex pair representation --------------------------

    def to_pairs(self, coeffs):
        """Real coefficients (..., dim) to complex pairs (..., m+1)."""
        c = np.asarray(coeffs, dtype=float)
        if c.shape[-1] != self.dim:
            raise ShapeError(f"expected {self.dim} coefficients, got {c.shape[-1]}")
        Z = np.empty(c.shape[:-1] + (self.m + 1,), dtype=complex)
        Z[..., 0] = c[..., 0]
        Z[..., 1:] = c[..., 1::2] - 1j * c[..., 2::2]
        return Z

    def from_pairs(self, Z):
        Z = np.asarray(Z)
        c = np.empty(Z.shape[:-1] + (self.dim,), dtype=float)
        c[..., 0] = Z[..., 0].real
        c[..., 1::2] = Z[..., 1:].real
        c[..., 2::2] = -Z[..., 1:].imag
        return c

    def pairs_to_grid(self, Z, n=None):
        """Evaluate pairs on an equispaced grid of ``n`` points (default padded)."""
        n = self.M if n is None else n
        F = np.zeros(Z.shape[:-1] + (n // 2 + 1,), dtype=complex)
        F[..., : self.m + 1] = Z * (n / self._pair_scale)
        return sfft.irfft(F, n=n, axis=-1)

    def grid_to_pairs(self, values, n=None):
        """Project grid values onto the retained modes."""
        n = values.shape[-1] if n is None else n
        F = sfft.rfft(values, n=n, axis=-1)
        return F[..., : self.m + 1] * (self._pair_scale / n)

    def product_pairs(self, Z1, Z2):
        """Alias-free ``P_m(u v)`` for two states given as pairs."""
        u = self.pairs_to_grid(Z1)
        v = self.pairs_to_grid(Z2)
        return self.grid_to_pairs(u * v)

    # -- evaluation at arbitrary points --------------------------------------

    def eval_matrix(self, x, order: int = 0):
        """Matrix ``E[p, i] = d^order e_i / dx^order (x_p)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        th = np.outer(x - self.domain.x1, self.k[1:])
        kj = self.k[1:]
        s = np.sqrt(2.0 / self.L)
        E = np.zeros((x.size, self.dim))
        E[:, 0] = 1.0 / np.sqrt(self.L) if order == 0 else 0.0
        # d^q/dx^q of cos and sin rotate by q quarter turns
        phase = order * np.pi / 2.0
        E[:, 1::2] = s * kj ** order * np.cos(th + phase)
        E[:, 2::2] = s * kj ** order * np.sin(th + phase)
        return E

    @cached_property
    def _grid_quadrature(self):
        return gauss_legendre(self.domain.x1, self.domain.x2, 4 * self.m + 64)

    def weighted_gram(self, weight):
        """``G[i, j] = int_X w(x) e_i e_j dx`` by Gauss-Legendre quadrature."""
        x, w = self._grid_quadrature
        E = self.eval_matrix(x)
        return E.T @ (E * (w * weight(x))[:, None])

    def local_gram(self, k: float, order: int = 0):
        """``G[i, j] = int_{-k}^{k} e_i^(order) e_j^(order) dx``."""
        x, w = gauss_legendre(-k, k, 4 * self.m + 64)
        E = self.eval_matrix(x, order)
        return E.T @ (E * w[:, None])


def build_basis(m: int, domain: Domain) -> Basis:
    if not isinstance(domain, Domain):
        raise ConfigError("domain must be a Domain")
    if int(m) != m or m < 1:
        raise ConfigError(f"truncation m must be a positive integer, got {m}")
    return Basis(int(m), domain)


def to_spectral(field_: Field, basis: Basis, time: float = 0.0) -> SpectralState:
    values = np.asarray(field_.values, dtype=float)
    if values.shape != (basis.N,):
        raise ShapeError(f"field has {values.shape} values, basis grid has {basis.N}")
    Z = basis.grid_to_pairs(values)
    return SpectralState(basis.from_pairs(Z), time)


def to_physical(state: SpectralState, basis: Basis) -> Field:
    if state.dim != basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, basis has {basis.dim}")
    return Field(basis.pairs_to_grid(basis.to_pairs(state.coeffs), basis.N))


def transform(obj, direction: str, basis: Basis):
    """Map between a grid Field and a SpectralState."""
    if direction == "to_spectral":
        if not isinstance(obj, Field):
            raise TypeError("to_spectral expects a Field")
        return to_spectral(obj, basis)
    if direction == "to_physical":
        if not isinstance(obj, SpectralState):
            raise TypeError("to_physical expects a SpectralState")
        return to_physical(obj, basis)
    raise ValueError(f"unknown direction {direction!r}")


def spectral_derivative(state: SpectralState, order: int, basis: Basis) -> SpectralState:
    if order not in (1, 2, 3, 4):
        raise ValueError(f"derivative order must be in 1..4, got {order}")
    if state.dim != basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, basis has {basis.dim}")
    Z = basis.to_pairs(state.coeffs) * (1j * basis.k) ** order
    return SpectralState(basis.from_pairs(Z), state.time)


def sobolev_weights(basis: Basis, s: float) -> np.ndarray:
    """Per-coefficient weights ``(1 + k^2)^s`` in real-coefficient order."""
    w = np.empty(basis.dim)
    w[0] = 1.0
    kw = (1.0 + basis.k[1:] ** 2) ** s
    w[1::2] = kw
    w[2::2] = kw
    return w


def sobolev_norm(state: SpectralState, s: float, basis: Basis) -> float:
    if state.dim != basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, basis has {basis.dim}")
    return float(np.sqrt(np.sum(sobolev_weights(basis, s) * state.coeffs ** 2)))


def inner_product(f: Field, g: Field, basis: Basis) -> float:
    """Periodic trapezoidal quadrature of ``f g`` over X."""
    fv = np.asarray(f.values, dtype=float)
    gv = np.asarray(g.values, dtype=float)
    if fv.shape != gv.shape or fv.shape != (basis.N,):
        raise ShapeError("fields must both live on the basis grid")
    return float(basis.L / basis.N * np.dot(fv, gv))


def _check_local_interval(k: float, basis: Basis):
    if not k > 0:
        raise DomainError(f"local half-width must be positive, got {k}")
    if k > basis.domain.max_local_k * (1 + 1e-14):
        raise DomainError(
            f"(-{k}, {k}) is not contained in X = [{basis.domain.x1}, {basis.domain.x2}]")


def _interpolant(values: np.ndarray, x: np.ndarray, basis: Basis, order: int = 0):
    """Trigonometric interpolant of grid values (all N/2 modes) and derivatives at x."""
    n = values.size
    F = sfft.rfft(values)
    j = np.arange(F.size)
    kk = 2.0 * np.pi * j / basis.L
    w = np.full(F.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    phase = np.exp(1j * np.outer(x - basis.domain.x1, kk))
    return (phase @ (w * F * (1j * kk) ** order)).real / n


def interpolate_field(field_: Field, x, basis: Basis, order: int = 0) -> np.ndarray:
    """Values of the grid interpolant of ``field_`` (or its derivative) at ``x``."""
    values = np.asarray(field_.values, dtype=float)
    if values.shape != (basis.N,):
        raise ShapeError(f"field has {values.shape} values, basis grid has {basis.N}")
    return _interpolant(values, np.asarray(x, dtype=float), basis, order)


@lru_cache(maxsize=32)
def _sine_system(k: float, J: int, n: int):
    x, w = gauss_legendre(-k, k, n)
    j = np.arange(1, J + 1)
    S = np.sin(np.outer(x + k, np.pi * j / (2.0 * k))) / np.sqrt(k)
    weights = 1.0 / (1.0 + (np.pi * j / (2.0 * k)) ** 2)
    return x, w, S, weights


def local_sobolev_norm(field_: Field, k: float, s: int, basis: Basis) -> float:
    """Norm of the restriction of ``field_`` to (-k, k) for s in {-1, 0, 1}.

    The field is interpolated with all grid modes, so products of two
    states (degree 2m) are represented exactly.  ``s = -1`` uses the sine
    series on the sub-interval weighted by ``(1 + (pi j / 2k)^2)^-1``,
    truncated at ``J = 4 dim`` terms.
    """
    if s not in (-1, 0, 1):
        raise ValueError(f"local norm order must be -1, 0 or 1, got {s}")
    values = np.asarray(field_.values, dtype=float)
    if values.shape != (basis.N,):
        raise ShapeError(f"field has {values.shape} values, basis grid has {basis.N}")
    _check_local_interval(k, basis)
    if s == -1:
        J = 4 * basis.dim
        x, w, S, weights = _sine_system(float(k), J, 3 * J + 64)
        f = _interpolant(values, x, basis)
        coef = S.T @ (w * f)
        return float(np.sqrt(np.sum(weights * coef ** 2)))
    x, w = gauss_legendre(-k, k, 6 * basis.m + 64)
    total = np.sum(w * _interpolant(values, x, basis) ** 2)
    if s == 1:
        total += np.sum(w * _interpolant(values, x, basis, 1) ** 2)
    return float(np.sqrt(total))
