"""Feynman-Kac Monte Carlo for the linear Fokker-Planck equation.

The density at ``(t, p)`` is ``E[f_in(|Q_t|)]`` where ``Q`` solves

    dQ_s = d(phi(t - s), Q_s) ds + G(phi(t - s), Q_s) dW_s,    Q_0 = p,

integrated by Euler-Maruyama. The field is read backwards along the stored
trajectory, which is the time reversal that turns the forward equation into
a backward Kolmogorov problem.

Paths are grouped in fixed-size blocks. Each block draws from its own
Philox stream keyed by ``(seed, block index)``, so results do not depend on
how blocks are scheduled across threads. Endpoint values are gathered in
path order and reduced by numpy's pairwise summation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import drift_vector, noise_apply, ultra_drift, ultra_noise_apply
from .nordstrom import FieldTrajectory

__all__ = [
    "PathConfig",
    "McEstimate",
    "PathBlowupError",
    "simulate_path",
    "simulate_endpoints",
    "feynman_kac_estimate",
    "block_generator",
]

BLOCK_SIZE = 8192


class PathBlowupError(FloatingPointError):
    """A path left the finite range; usually ``dt`` is too large."""


@dataclass(frozen=True)
class PathConfig:
    n_paths: int
    dt: float
    seed: int = 0
    antithetic: bool = False
    mode: str = "relativistic"
    threads: int = 1

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError(f"n_paths must be a positive integer, got {self.n_paths}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even n_paths")
        if self.mode not in ("relativistic", "ultra"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_effective: int


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Independent counter-based stream for one block of paths."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def _coefficients(mode: str):
    if mode == "ultra":
        return ultra_drift, ultra_noise_apply
    return drift_vector, noise_apply


def _n_steps(t: float, dt: float) -> int:
    return max(1, int(math.ceil(t / dt - 1e-9)))


def _integrate(P, t, phi_traj, cfg, rng, antithetic):
    """Euler-Maruyama on a block; ``P`` is ``(m, 3)`` and modified in place."""
    drift, noise = _coefficients(cfg.mode)
    n = _n_steps(t, cfg.dt)
    h = t / n
    sqrt_h = math.sqrt(h)
    m = P.shape[0]
    half = m // 2
    for k in range(n):
        phi = float(phi_traj.phi_at(t - k * h))
        if antithetic:
            z = rng.standard_normal((half, 3))
            xi = np.concatenate([z, -z])
        else:
            xi = rng.standard_normal((m, 3))
        P += h * drift(phi, P) + sqrt_h * noise(phi, P, xi)
        if not np.all(np.isfinite(P)):
            raise PathBlowupError(
                f"non-finite path state at s={(k + 1) * h:.6g}; reduce dt (now {cfg.dt})"
            )
    return P


def simulate_path(
    p0, t: float, phi_traj: FieldTrajectory, cfg: PathConfig, rng_stream: np.random.Generator
) -> np.ndarray:
    """Endpoint ``Q_t`` of a single path started at ``p0``."""
    p0 = np.asarray(p0, dtype=float).reshape(3)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return p0.copy()
    if t > phi_traj.t_end + 1e-12:
        raise ValueError(f"field trajectory ends at {phi_traj.t_end}, before t={t}")
    P = p0[None, :].copy()
    return _integrate(P, t, phi_traj, cfg, rng_stream, False)[0]


def _block_sizes(cfg: PathConfig) -> list[int]:
    full, rest = divmod(cfg.n_paths, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def simulate_endpoints(p, t: float, phi_traj: FieldTrajectory, cfg: PathConfig) -> np.ndarray:
    """All ``n_paths`` endpoints in path-index order."""
    p = np.asarray(p, dtype=float).reshape(3)
    if t == 0:
        return np.tile(p, (cfg.n_paths, 1))
    if t > phi_traj.t_end + 1e-12:
        raise ValueError(f"field trajectory ends at {phi_traj.t_end}, before t={t}")
    sizes = _block_sizes(cfg)

    def run(b):
        P = np.tile(p, (sizes[b], 1))
        return _integrate(P, t, phi_traj, cfg, block_generator(cfg.seed, b), cfg.antithetic)

    if cfg.threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    else:
        blocks = [run(b) for b in range(len(sizes))]
    return np.concatenate(blocks)


def feynman_kac_estimate(
    f_in: Callable[[np.ndarray], np.ndarray],
    p,
    t: float,
    phi_traj: FieldTrajectory,
    cfg: PathConfig,
) -> McEstimate:
    """Estimate ``f(t, p) = E[f_in(|Q_t|)]`` for a radial initial density.

    With antithetic sampling the pairs are averaged first and the standard
    error is taken over pair means.
    """
    if cfg.antithetic and BLOCK_SIZE % 2:
        raise RuntimeError("block size must be even for antithetic pairs")
    Q = simulate_endpoints(p, t, phi_traj, cfg)
    values = np.asarray(f_in(np.sqrt(np.einsum("ij,ij->i", Q, Q))), dtype=float)
    if cfg.antithetic:
        # pairs are (i, i + m/2) inside each block
        parts, start = [], 0
        for m in _block_sizes(cfg):
            blk = values[start : start + m]
            parts.append(0.5 * (blk[: m // 2] + blk[m // 2 :]))
            start += m
        samples = np.concatenate(parts)
    else:
        samples = values
    n = samples.size
    mean = float(np.sum(samples) / n)
    if n > 1:
        sd = float(np.sqrt(np.sum((samples - mean) ** 2) / (n - 1)))
    else:
        sd = 0.0
    return McEstimate(mean, sd / math.sqrt(n), n)
