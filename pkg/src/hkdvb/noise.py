"""Truncated cylindrical Wiener process and state-dependent noise operators.

Two operator families are provided, both Hilbert-Schmidt with respect to
the Galerkin basis ``{e_i}``:

``diagonal_gain``
    ``Phi(u) e_i = lam_i g(|u|) e_i`` with ``g(r) = min(r^2, r)``.  The weights
    are normalised so that ``sum lam_i^2 = kappa1^2``, which makes the growth
    bound ``|Phi(u)|_HS <= kappa1 min(|u|^2, |u|) + kappa2`` an equality when
    ``kappa2 = 0``.
``pointwise_multiplicative``
    ``(Phi(u) e_i)(x) = lam_i u(x) e_i(x) / (1 + |u|)`` projected onto the
    retained modes.  Here ``sum lam_i^2 = kappa1^2 L / 2`` so that
    ``|Phi(u)|_HS <= kappa1 |u| / (1 + |u|)``, which sits below the growth
    bound whenever ``kappa2 >= kappa1 / 4``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .spectral import Basis, SpectralState

NOISE_KINDS = ("off", "diagonal_gain", "pointwise_multiplicative")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "off"
    kappa1: float = 0.1
    kappa2: float = 0.0
    decay_p: float = 1.0
    rank: int = 0  # 0 selects the full basis dimension

    def validate(self, dim: int) -> "NoiseSpec":
        if self.kind not in NOISE_KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.kind == "off":
            return self
        if not self.kappa1 > 0:
            raise ConfigError(f"kappa1 must be positive, got {self.kappa1}")
        if self.kappa2 < 0:
            raise ConfigError(f"kappa2 must be nonnegative, got {self.kappa2}")
        if not self.decay_p > 0.5:
            raise ConfigError(f"decay_p must exceed 1/2, got {self.decay_p}")
        if self.rank < 0 or self.rank > dim:
            raise ConfigError(f"noise rank {self.rank} outside [1, {dim}]")
        if self.kind == "pointwise_multiplicative" and self.kappa2 < self.kappa1 / 4:
            raise ConfigError(
                "pointwise_multiplicative noise needs kappa2 >= kappa1/4 for the growth bound, "
                f"got kappa1={self.kappa1}, kappa2={self.kappa2}")
        return self

    def effective_rank(self, dim: int) -> int:
        if self.kind == "off":
            return 0
        return dim if self.rank == 0 else int(self.rank)


def growth_bound(spec: NoiseSpec, r):
    """Right-hand side ``kappa1 min(r^2, r) + kappa2`` of the HS growth condition."""
    r = np.asarray(r, dtype=float)
    return spec.kappa1 * np.minimum(r * r, r) + spec.kappa2


class NoiseOperator:
    """Finite-rank map ``u -> P_m Phi(u)`` acting on the first ``rank`` basis vectors."""

    def __init__(self, spec: NoiseSpec, basis: Basis):
        self.spec = spec
        self.basis = basis
        self.kind = spec.kind
        self.rank = spec.effective_rank(basis.dim)
        if self.kind == "off":
            self.lambdas = np.zeros(0)
        else:
            raw = np.arange(1, self.rank + 1, dtype=float) ** (-spec.decay_p)
            total = spec.kappa1 ** 2
            if self.kind == "pointwise_multiplicative":
                total *= basis.L / 2.0
            self.lambdas = raw * np.sqrt(total / np.sum(raw ** 2))
        # real-coefficient weights padded to the full dimension
        self._lam_full = np.zeros(basis.dim)
        self._lam_full[: self.rank] = self.lambdas

    def __repr__(self):
        return f"NoiseOperator(kind={self.kind!r}, rank={self.rank})"

    @property
    def is_off(self) -> bool:
        return self.kind == "off"

    def _gain(self, r):
        return np.minimum(r * r, r)

    # -- batched pair-space kernels used by the integrator -------------------

    def apply_pairs(self, Z, dW, norms=None):
        """``P_m Phi(u) dW`` for batches: Z (n, m+1), dW (n, rank) -> (n, m+1)."""
        b = self.basis
        if self.is_off:
            return np.zeros_like(Z)
        if norms is None:
            norms = np.sqrt(np.sum(np.abs(Z) ** 2, axis=-1))
        w = np.zeros(Z.shape[:-1] + (b.dim,))
        w[..., : self.rank] = dW * self.lambdas
        Wz = b.to_pairs(w)
        if self.kind == "diagonal_gain":
            return Wz * self._gain(norms)[..., None]
        return b.product_pairs(Z, Wz) / (1.0 + norms)[..., None]

    def adjoint_pairs(self, Z, a, norms=None):
        """``Phi(u)^* a`` as rank vectors: ``[<Phi(u) e_i, a>]_i`` for each row of Z."""
        b = self.basis
        if self.is_off:
            return np.zeros(Z.shape[:-1] + (0,))
        a = np.asarray(a, dtype=float)
        if norms is None:
            norms = np.sqrt(np.sum(np.abs(Z) ** 2, axis=-1))
        if self.kind == "diagonal_gain":
            return self.lambdas * a[: self.rank] * self._gain(norms)[..., None]
        # <P(u e_i), a> = <e_i, P(u a)> for a in the retained span
        ua = b.from_pairs(b.product_pairs(Z, b.to_pairs(a)))
        return self.lambdas * ua[..., : self.rank] / (1.0 + norms)[..., None]

    def columns_pairs(self, Z, norms=None):
        """``P_m Phi(u) e_i`` for every row of Z: shape (n, rank, m+1)."""
        n = Z.shape[0]
        if self.is_off:
            return np.zeros((n, 0, Z.shape[-1]), dtype=complex)
        if norms is None:
            norms = np.sqrt(np.sum(np.abs(Z) ** 2, axis=-1))
        eye = np.eye(self.rank)
        out = np.empty((n, self.rank, Z.shape[-1]), dtype=complex)
        for r in range(n):
            out[r] = self.apply_pairs(np.broadcast_to(Z[r], (self.rank, Z.shape[-1])), eye,
                                      np.full(self.rank, norms[r]))
        return out

    def matrix(self, coeffs) -> np.ndarray:
        """Real matrix ``G`` of shape (dim, rank) with columns ``P_m Phi(u) e_i``."""
        b = self.basis
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (b.dim,):
            raise ShapeError(f"state has {c.shape} coefficients, basis has {b.dim}")
        G = np.zeros((b.dim, self.rank))
        if self.is_off:
            return G
        r = float(np.sqrt(np.sum(c * c)))
        if self.kind == "diagonal_gain":
            G[np.arange(self.rank), np.arange(self.rank)] = self.lambdas * self._gain(r)
            return G
        E = np.eye(b.dim)[: self.rank]
        cols = b.product_pairs(b.to_pairs(c)[None, :], b.to_pairs(E))
        return (b.from_pairs(cols) * (self.lambdas / (1.0 + r))[:, None]).T


def make_noise_operator(spec: NoiseSpec, basis: Basis) -> NoiseOperator:
    spec.validate(basis.dim)
    return NoiseOperator(spec, basis)


def hs_norm(op: NoiseOperator, state: SpectralState, rank: int | None = None) -> float:
    """``(sum_{i < rank} |Phi(u) e_i|^2)^(1/2)``; ``rank`` defaults to the operator rank."""
    if state.dim != op.basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, operator basis has {op.basis.dim}")
    r = op.rank if rank is None else int(rank)
    if r < 0 or r > op.rank:
        raise ShapeError(f"rank {r} outside [0, {op.rank}]")
    G = op.matrix(state.coeffs)[:, :r]
    return float(np.sqrt(np.sum(G * G)))


def apply_noise(op: NoiseOperator, state: SpectralState, dW) -> SpectralState:
    dW = np.asarray(dW, dtype=float)
    if dW.shape != (op.rank,):
        raise ShapeError(f"dW has shape {dW.shape}, operator rank is {op.rank}")
    if state.dim != op.basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, operator basis has {op.basis.dim}")
    b = op.basis
    Z = b.to_pairs(state.coeffs)[None, :]
    out = op.apply_pairs(Z, dW[None, :])
    return SpectralState(b.from_pairs(out)[0], state.time)


# -- Wiener increments ---------------------------------------------------------


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Independent generator for one path, derived by seed splitting."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class IncrementStream:
    seed: int
    dt: float
    n_steps: int
    rank: int
    path_index: int = 0


def wiener_increments(stream: IncrementStream) -> np.ndarray:
    """All increments of one path as an array (n_steps, rank) of N(0, dt) draws.

    Drawing step by step from ``path_rng`` gives the same numbers, which is
    what the integrator does.
    """
    rng = path_rng(stream.seed, stream.path_index)
    return np.sqrt(stream.dt) * rng.standard_normal((stream.n_steps, stream.rank))


def increments_checksum(increments) -> str:
    return hashlib.sha256(np.ascontiguousarray(increments, dtype=float).tobytes()).hexdigest()
