"""Time stepping, single paths and Monte Carlo ensembles.

Paths are advanced in fixed chunks of ``CHUNK`` rows aligned to the global
path index.  A partially filled chunk is padded with inert rows so every
path is always computed at the same row position of an array of the same
shape.  That makes each path's floating point history independent of how
an ensemble is split, ordered or distributed over threads.
"""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import BlowUpError, EnsembleError, InfeasibleError, ShapeError
from .model import Dynamics, SimConfig, initial_state, validate_config
from .noise import NoiseOperator, path_rng
from .spectral import Basis, SpectralState, build_basis
from .weight import construct_weight, weighted_gram

CHUNK = 16
DRAW_BLOCK = 256
FUNCTIONALS = ("sup_l2", "int_h2", "int_h1_local", "F_T")


def ensure_valid(config: SimConfig) -> SimConfig:
    return config if config.grid_size else validate_config(config)


def worker_count(threads=None) -> int:
    if threads is None:
        env = os.environ.get("HKDVB_THREADS", "")
        threads = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, int(threads))


@dataclass
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray  # (n_saved, dim)
    flags: np.ndarray  # lambda_X exceeded since the previous saved time
    max_abs: np.ndarray
    noise_record: np.ndarray | None = None  # (n_steps, rank)
    noise_checksum: str = ""
    path_index: int = 0
    cutoff_activations: int = 0
    functionals: dict = field(default_factory=dict)

    @property
    def states(self):
        return [SpectralState(c, t) for c, t in zip(self.coeffs, self.times)]

    @property
    def final(self) -> SpectralState:
        return SpectralState(self.coeffs[-1], self.times[-1])

    def l2_norms(self):
        return np.sqrt(np.sum(self.coeffs ** 2, axis=1))


class PathEngine:
    """Batched integrator for a validated configuration."""

    def __init__(self, config: SimConfig, basis: Basis | None = None):
        self.config = config = ensure_valid(config)
        self.basis = basis if basis is not None else build_basis(config.m, config.domain)
        self.dyn = Dynamics(config.coefficients, self.basis, cutoff=config.cutoff)
        self.noise = NoiseOperator(config.noise, self.basis)
        self.scheme = config.resolved_scheme
        self.dt = config.dt
        b = self.basis
        self.h2_weights = (1.0 + b.k ** 2) ** 2
        self._const_exp = None
        if not config.cutoff:
            one = np.ones(1)
            sigma, omega = self.dyn.linear_rates((one, one, one, one))
            self._const_exp = (np.exp((-sigma + 1j * omega) * self.dt),
                               np.exp((-sigma + 1j * omega) * (0.5 * self.dt)))

    @cached_property
    def local_gram(self):
        k = self.config.local_k
        return self.basis.local_gram(k, 0) + self.basis.local_gram(k, 1)

    @cached_property
    def weight(self):
        c = self.config
        try:
            return construct_weight(c.domain, c.coefficients.B, c.coefficients.C,
                                    c.weight_delta, c.weight_gamma)
        except InfeasibleError:
            return None

    @cached_property
    def energy_gram(self):
        return None if self.weight is None else weighted_gram(self.weight, self.basis)

    # -- one step ------------------------------------------------------------

    def _exponentials(self, th):
        if self._const_exp is not None:
            return self._const_exp
        sigma, omega = self.dyn.linear_rates(th)
        g = -sigma + 1j * omega
        return np.exp(g * self.dt), np.exp(g * (0.5 * self.dt))

    def advance(self, Z, dW=None):
        """One step for a batch of pair states; returns (Z_next, max|u| before, cutoff active)."""
        dyn = self.dyn
        h = self.dt
        th = dyn.thetas(Z)
        active = np.zeros(Z.shape[0], dtype=bool)
        if self.config.cutoff:
            active = (th[0] < 1) | (th[1] < 1) | (th[2] < 1) | (th[3] < 1)
        E, Eh = self._exponentials(th)
        a, umax = dyn.nonlinear(Z, th)
        if self.scheme == "euler":
            rhs = Z + h * a
            if not self.noise.is_off and dW is not None:
                rhs = rhs + self.noise.apply_pairs(Z, dW)
            return E * rhs, umax, active
        b, _ = dyn.nonlinear(Eh * (Z + (0.5 * h) * a), th, False)
        c, _ = dyn.nonlinear(Eh * Z + (0.5 * h) * b, th, False)
        d, _ = dyn.nonlinear(E * Z + h * Eh * c, th, False)
        return E * Z + (h / 6.0) * (E * a + 2.0 * Eh * (b + c) + d), umax, active

    # -- functionals -----------------------------------------------------------

    def _instant(self, Z, local=True):
        a2 = Z.real ** 2 + Z.imag ** 2
        l2 = np.sum(a2, axis=-1)
        h2 = np.sum(a2 * self.h2_weights, axis=-1)
        if not local:
            return l2, h2, np.full(Z.shape[0], np.nan)
        c = self.basis.from_pairs(Z)
        h1 = np.sum((c @ self.local_gram) * c, axis=-1)
        return l2, h2, h1

    def energy(self, Z):
        if self.energy_gram is None:
            return np.full(Z.shape[0], np.nan)
        c = self.basis.from_pairs(Z)
        return np.sum((c @ self.energy_gram) * c, axis=-1)

    # -- batch runner ------------------------------------------------------------

    def run_rows(self, rows, save=True, record_noise=False, local=True):
        """Simulate the given global path indices (``None`` marks a padding row)."""
        cfg = self.config
        b = self.basis
        n = len(rows)
        live = np.array([r is not None for r in rows])
        Z0 = b.to_pairs(initial_state(cfg, b).coeffs)
        Z = np.where(live[:, None], Z0[None, :], 0.0).astype(complex)
        n_steps = cfg.n_steps
        rank = self.noise.rank
        noisy = not self.noise.is_off
        rngs = [path_rng(cfg.seed, r) if (noisy and r is not None) else None for r in rows]
        hashers = [hashlib.sha256() if r is not None else None for r in rows]
        records = [[] for _ in rows] if record_noise else None
        sq_dt = math.sqrt(self.dt)

        alive = live.copy()
        blowups = {}
        l2, h2, h1 = self._instant(Z, local)
        sup_l2 = l2.copy()
        acc_h2 = 0.5 * h2
        acc_h1 = 0.5 * h1
        activations = np.zeros(n, dtype=np.int64)
        exceed = np.zeros(n, dtype=bool)
        lam = cfg.lambda_X

        saved_t, saved_Z, saved_flag, saved_umax = [], [], [], []

        def snapshot(t, Zs, flag):
            saved_t.append(t)
            saved_Z.append(Zs.copy())
            saved_flag.append(flag.copy())
            saved_umax.append(np.max(np.abs(b.pairs_to_grid(Zs)), axis=-1))

        if save:
            snapshot(0.0, Z, np.zeros(n, dtype=bool))
        block = None
        for it in range(n_steps):
            dW = None
            if noisy:
                j = it % DRAW_BLOCK
                if j == 0:
                    size = min(DRAW_BLOCK, n_steps - it)
                    block = np.zeros((n, size, rank))
                    for i, rng in enumerate(rngs):
                        if rng is None:
                            continue
                        inc = sq_dt * rng.standard_normal((size, rank))
                        hashers[i].update(inc.tobytes())
                        if records is not None:
                            records[i].append(inc)
                        if alive[i]:
                            block[i] = inc
                dW = block[:, j, :]
            with np.errstate(over="ignore", invalid="ignore"):
                Z, umax, active = self.advance(Z, dW)
                l2, h2, h1 = self._instant(Z, local)
                # finite coefficients whose norms overflow count as blown up too
                bad = alive & ~(np.all(np.isfinite(Z), axis=-1) & np.isfinite(h2))
            activations += active & alive
            exceed |= (umax >= lam) & alive
            t = (it + 1) * self.dt
            if np.any(bad):
                for i in np.flatnonzero(bad):
                    with np.errstate(over="ignore", invalid="ignore"):
                        nrm = float(np.sqrt(np.sum(np.abs(Z[i]) ** 2)))
                    blowups[rows[i]] = (t, nrm)
                alive &= ~bad
                Z[bad] = 0.0
                l2, h2, h1 = self._instant(Z, local)
            np.maximum(sup_l2, l2, out=sup_l2)
            acc_h2 += h2
            acc_h1 += h1
            if save and ((it + 1) % cfg.save_stride == 0 or it + 1 == n_steps):
                final_umax = np.max(np.abs(b.pairs_to_grid(Z)), axis=-1)
                snapshot(t, Z, exceed | ((final_umax >= lam) & alive))
                exceed[:] = False
        acc_h2 -= 0.5 * h2
        acc_h1 -= 0.5 * h1
        funcs = {
            "sup_l2": sup_l2,
            "int_h2": acc_h2 * self.dt,
            "int_h1_local": acc_h1 * self.dt,
            "F_T": self.energy(Z),
        }
        for name in funcs:
            funcs[name] = np.where(alive, funcs[name], np.nan)
        return {
            "rows": rows, "alive": alive, "blowups": blowups,
            "functionals": funcs, "activations": activations,
            "times": np.array(saved_t),
            "Z": np.stack(saved_Z, axis=1) if save else None,
            "flags": np.stack(saved_flag, axis=1) if save else None,
            "umax": np.stack(saved_umax, axis=1) if save else None,
            "checksums": [hh.hexdigest() if hh is not None else "" for hh in hashers],
            "noise": [np.concatenate(r) if r else np.zeros((0, rank)) for r in records]
            if records is not None else None,
        }

    def trajectories(self, out) -> list:
        trajs = []
        b = self.basis
        for i, r in enumerate(out["rows"]):
            if r is None or not out["alive"][i]:
                continue
            trajs.append(Trajectory(
                times=out["times"],
                coeffs=b.from_pairs(out["Z"][i]),
                flags=out["flags"][i],
                max_abs=out["umax"][i],
                noise_record=out["noise"][i] if out["noise"] is not None else None,
                noise_checksum=out["checksums"][i],
                path_index=r,
                cutoff_activations=int(out["activations"][i]),
                functionals={k: float(v[i]) for k, v in out["functionals"].items()},
            ))
        return trajs


# -- public single-step and path API ---------------------------------------------


def step(state: SpectralState, dt: float, dW, config: SimConfig, basis: Basis,
         noise_op: NoiseOperator | None = None) -> SpectralState:
    """Exponential Euler-Maruyama step ``u+ = exp(L dt)(u + dt N(u) + Phi(u) dW)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if state.dim != basis.dim:
        raise ShapeError(f"state has {state.dim} coefficients, basis has {basis.dim}")
    cfg = ensure_valid(replace(config, dt=dt, T=dt, scheme="euler"))
    eng = PathEngine(cfg, basis)
    if noise_op is not None:
        eng.noise = noise_op
    Z = basis.to_pairs(state.coeffs)[None, :]
    dWa = None
    if not eng.noise.is_off:
        dWa = np.asarray(dW, dtype=float)
        if dWa.shape != (eng.noise.rank,):
            raise ShapeError(f"dW has shape {dWa.shape}, noise rank is {eng.noise.rank}")
        dWa = dWa[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        Zn, _, _ = eng.advance(Z, dWa)
    if not np.all(np.isfinite(Zn)):
        with np.errstate(over="ignore", invalid="ignore"):
            nrm = float(np.sqrt(np.sum(np.abs(Zn) ** 2)))
        raise BlowUpError(state.time + dt, nrm)
    return SpectralState(basis.from_pairs(Zn[0]), state.time + dt)


def simulate_path(config: SimConfig, path_index: int = 0, record_noise: bool = True,
                  basis: Basis | None = None, local_functional: bool = True) -> Trajectory:
    """Run one path on its own; raises ``BlowUpError`` if it diverges.

    ``local_functional=False`` skips the per-step local H1 quadratic form,
    which dominates the cost of long single-path runs at large ``m``.
    """
    eng = PathEngine(config, basis)
    out = eng.run_rows([int(path_index)], save=True, record_noise=record_noise,
                       local=local_functional)
    if not out["alive"][0]:
        t, nrm = out["blowups"][int(path_index)]
        raise BlowUpError(t, nrm, int(path_index))
    return eng.trajectories(out)[0]


def _chunk_rows(indices):
    groups = {}
    for idx in indices:
        groups.setdefault(idx // CHUNK, []).append(idx)
    for cid in sorted(groups):
        members = set(groups[cid])
        base = cid * CHUNK
        yield [base + j if base + j in members else None for j in range(CHUNK)]


def _run_chunks(eng: PathEngine, indices, save, record_noise, threads):
    chunks = list(_chunk_rows(indices))
    nw = min(worker_count(threads), len(chunks)) or 1
    if nw == 1:
        return [eng.run_rows(rows, save, record_noise) for rows in chunks]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(lambda rows: eng.run_rows(rows, save, record_noise), chunks))


def simulate_paths(config: SimConfig, path_indices=None, record_noise: bool = False,
                   threads=None, basis: Basis | None = None):
    """Batched paths; returns (trajectories of surviving paths, blow-up map)."""
    eng = PathEngine(config, basis)
    if path_indices is None:
        path_indices = range(eng.config.n_paths)
    indices = sorted(int(i) for i in path_indices)
    outs = _run_chunks(eng, indices, True, record_noise, threads)
    trajs, blowups = [], {}
    for out in outs:
        trajs.extend(eng.trajectories(out))
        blowups.update(out["blowups"])
    return trajs, blowups


# -- ensemble statistics ------------------------------------------------------------


@dataclass
class EnsembleStats:
    path_indices: np.ndarray
    samples: dict
    blowups: dict = field(default_factory=dict)
    cutoff_activations: np.ndarray | None = None
    checksums: tuple = ()

    @property
    def n_paths(self) -> int:
        return int(self.path_indices.size)

    def _finite(self, name):
        v = self.samples[name]
        return v[np.isfinite(v)]

    def mean(self, name) -> float:
        v = self._finite(name)
        return float(np.mean(v)) if v.size else float("nan")

    def var(self, name) -> float:
        v = self._finite(name)
        return float(np.var(v, ddof=1)) if v.size >= 2 else float("nan")

    def halfwidth(self, name) -> float:
        v = self._finite(name)
        if v.size < 2:
            return float("nan")
        return float(1.96 * math.sqrt(self.var(name)) / math.sqrt(v.size))

    def summary(self) -> list:
        rows = []
        for name in self.samples:
            v = self._finite(name)
            mean, hw = self.mean(name), self.halfwidth(name)
            rows.append({
                "functional": name, "n": int(v.size), "mean": mean, "var": self.var(name),
                "ci_low": mean - hw, "ci_high": mean + hw, "halfwidth": hw,
            })
        return rows

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        idx = np.concatenate([self.path_indices, other.path_indices])
        if np.unique(idx).size != idx.size:
            raise ValueError("cannot merge ensembles sharing path indices")
        order = np.argsort(idx, kind="stable")
        samples = {k: np.concatenate([self.samples[k], other.samples[k]])[order] for k in self.samples}
        act = np.concatenate([self.cutoff_activations, other.cutoff_activations])[order]
        sums = tuple(np.array(self.checksums + other.checksums, dtype=object)[order])
        return EnsembleStats(idx[order], samples, {**self.blowups, **other.blowups}, act, sums)


def run_ensemble(config: SimConfig, path_offset: int = 0, threads=None,
                 basis: Basis | None = None) -> EnsembleStats:
    """Per-path functionals for paths ``path_offset .. path_offset + n_paths - 1``."""
    eng = PathEngine(config, basis)
    cfg = eng.config
    indices = list(range(path_offset, path_offset + cfg.n_paths))
    outs = _run_chunks(eng, indices, False, False, threads)
    pos = {}
    samples = {name: np.full(len(indices), np.nan) for name in FUNCTIONALS}
    act = np.zeros(len(indices), dtype=np.int64)
    sums = [""] * len(indices)
    blowups = {}
    for out in outs:
        blowups.update(out["blowups"])
        for i, r in enumerate(out["rows"]):
            if r is None:
                continue
            j = pos.setdefault(r, r - path_offset)
            for name in FUNCTIONALS:
                samples[name][j] = out["functionals"][name][i]
            act[j] = out["activations"][i]
            sums[j] = out["checksums"][i]
    if len(blowups) * 2 > len(indices):
        raise EnsembleError(f"{len(blowups)} of {len(indices)} paths blew up")
    return EnsembleStats(np.array(indices), samples, blowups, act, tuple(sums))
