"""Nordström field ODE ``phi'' = -H_f(t, phi)`` and its energy bookkeeping.

The field is a function of time only. It is driven by

    H_f = e^{2 phi} * 4 pi int f(q) q^2 / sqrt(e^{2 phi} + q^2) dq,

which is nonnegative for nonnegative densities, so ``phi'`` never increases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fp_radial import DensityState, RadialGrid
from .geometry import FieldValue

__all__ = [
    "FieldState",
    "FieldTrajectory",
    "BoundViolation",
    "FieldBoundsReport",
    "field_source",
    "advance_field",
    "energy",
    "kinetic_energy",
    "integrate_field",
    "check_field_bounds",
]

SourceFn = Callable[[float, float], float]


@dataclass(frozen=True)
class FieldState:
    t: float
    phi: float
    phidot: float
    tau: float = 0.0

    @property
    def fv(self) -> FieldValue:
        return FieldValue(self.phi)


@dataclass(frozen=True)
class FieldTrajectory:
    """Sampled field history on a uniform time grid.

    ``phiddot`` holds ``-H_f`` at each sample when the trajectory came from the
    coupled solver; prescribed trajectories leave it ``None``.
    """

    t: np.ndarray
    phi: np.ndarray
    phidot: np.ndarray
    tau: np.ndarray
    phiddot: np.ndarray | None = None
    dt: float = field(init=False)

    def __post_init__(self):
        arrays = {}
        for name in ("t", "phi", "phidot", "tau", "phiddot"):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.array(val, dtype=float)
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        n = arrays["t"].size
        if any(a.size != n for a in arrays.values()):
            raise ValueError("trajectory arrays must have equal length")
        if n >= 2 and np.any(np.diff(arrays["t"]) <= 0):
            raise ValueError("trajectory times must increase strictly")
        dt = float(arrays["t"][1] - arrays["t"][0]) if n >= 2 else 0.0
        object.__setattr__(self, "dt", dt)

    @classmethod
    def from_states(cls, states, phiddot=None) -> "FieldTrajectory":
        states = list(states)
        return cls(
            t=[s.t for s in states],
            phi=[s.phi for s in states],
            phidot=[s.phidot for s in states],
            tau=[s.tau for s in states],
            phiddot=phiddot,
        )

    @classmethod
    def prescribed(
        cls,
        phi: Callable[[np.ndarray], np.ndarray],
        t_end: float,
        dt: float,
        phidot: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> "FieldTrajectory":
        """Sample a given ``phi(t)`` on ``[0, t_end]``; ``tau`` by trapezoid."""
        n = int(round(t_end / dt))
        t = np.linspace(0.0, n * dt, n + 1)
        ph = np.broadcast_to(np.asarray(phi(t), dtype=float), t.shape)
        if phidot is None:
            pd = np.gradient(ph, t) if t.size > 1 else np.zeros_like(t)
        else:
            pd = np.broadcast_to(np.asarray(phidot(t), dtype=float), t.shape)
        return cls(t=t, phi=ph, phidot=pd, tau=cumulative_tau(t, ph))

    def __len__(self) -> int:
        return self.t.size

    @property
    def states(self) -> list[FieldState]:
        return [
            FieldState(float(t), float(p), float(d), float(u))
            for t, p, d, u in zip(self.t, self.phi, self.phidot, self.tau)
        ]

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def phi_at(self, t):
        """Linear interpolation of ``phi``; flat extrapolation outside the samples."""
        return np.interp(t, self.t, self.phi)


def cumulative_tau(t: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Trapezoidal ``int_0^t e^{2 phi}``."""
    e = np.exp(2.0 * np.asarray(phi, dtype=float))
    out = np.zeros_like(e)
    out[1:] = np.cumsum(0.5 * np.diff(t) * (e[1:] + e[:-1]))
    return out


def _values(density) -> np.ndarray:
    return density.values if isinstance(density, DensityState) else np.asarray(density, float)


def field_source(fv, density, grid: RadialGrid) -> float:
    """``H_f`` by grid quadrature. Rejects densities with real negative mass."""
    f = _values(density)
    scale = np.abs(f).max() if f.size else 0.0
    if scale > 0 and f.min() < -1e-12 * scale:
        raise ValueError(f"density has negative entries (min {f.min():.3e})")
    a = fv.exp2phi if isinstance(fv, FieldValue) else math.exp(2.0 * float(fv))
    s = np.sqrt(a + grid.nodes**2)
    return float(a * (grid.vol_weights @ (f / s)))


def advance_field(state: FieldState, source: SourceFn, dt: float) -> FieldState:
    """One classical RK4 step of ``(phi, phidot)``; ``tau`` by trapezoid."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    t, phi, psi = state.t, state.phi, state.phidot

    def H(tt, ph):
        val = source(tt, ph)
        if not math.isfinite(val):
            raise FloatingPointError(f"non-finite field source at t={tt}, phi={ph}")
        return val

    h = 0.5 * dt
    k1p, k1v = psi, -H(t, phi)
    k2p, k2v = psi + h * k1v, -H(t + h, phi + h * k1p)
    k3p, k3v = psi + h * k2v, -H(t + h, phi + h * k2p)
    k4p, k4v = psi + dt * k3v, -H(t + dt, phi + dt * k3p)
    phi_new = phi + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    psi_new = psi + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    tau_new = state.tau + 0.5 * dt * (math.exp(2.0 * phi) + math.exp(2.0 * phi_new))
    return FieldState(t + dt, phi_new, psi_new, tau_new)


def integrate_field(
    initial: FieldState, source: SourceFn, t_end: float, dt: float
) -> FieldTrajectory:
    """Repeated :func:`advance_field` on a fixed step up to ``t_end``."""
    n = int(round((t_end - initial.t) / dt))
    states = [initial]
    acc = [-source(initial.t, initial.phi)]
    for _ in range(n):
        nxt = advance_field(states[-1], source, dt)
        states.append(nxt)
        acc.append(-source(nxt.t, nxt.phi))
    return FieldTrajectory.from_states(states, phiddot=acc)


def kinetic_energy(density, grid: RadialGrid, phi: float) -> float:
    """``4 pi int f sqrt(e^{2 phi} + q^2) q^2 dq``."""
    a = math.exp(2.0 * phi)
    return float(grid.vol_weights @ (_values(density) * np.sqrt(a + grid.nodes**2)))


def energy(density, grid: RadialGrid, state: FieldState) -> float:
    """Particle energy plus ``phidot^2 / 2``."""
    return kinetic_energy(density, grid, state.phi) + 0.5 * state.phidot**2


@dataclass(frozen=True)
class BoundViolation:
    t: float
    bound: str
    margin: float


@dataclass
class FieldBoundsReport:
    """Outcome of :func:`check_field_bounds`.

    Margins are ``rhs - lhs`` of each inequality, so negative means violated.
    ``t0`` is the first sample with ``phidot < 0`` and ``t_cross`` the
    interpolated zero crossing of ``phidot``.
    """

    violations: list[BoundViolation]
    min_margins: dict[str, float]
    t0: float | None
    t_cross: float | None
    phidot_final: float
    decay_slope: float | None
    phidot_cauchy: float

    @property
    def ok(self) -> bool:
        return not self.violations


def _first_negative(phidot: np.ndarray) -> int | None:
    idx = np.flatnonzero(phidot < 0)
    return int(idx[0]) if idx.size else None


def fit_decay_slope(t: np.ndarray, phi: np.ndarray) -> float:
    """Least-squares slope of ``phi`` over the last quarter of the samples."""
    k = max(2, t.size // 4)
    slope, _ = np.polyfit(t[-k:], phi[-k:], 1)
    return float(slope)


def check_field_bounds(
    traj: FieldTrajectory,
    M: float,
    E0: float,
    *,
    tol: float = 1e-9,
    max_reports: int = 50,
) -> FieldBoundsReport:
    """Check the pointwise field estimates along a coupled trajectory.

    ``M`` is the (conserved) mass, which also bounds the source: with
    ``K = M``, ``-K e^{phi} <= phi'' <= 0``.
    """
    t, phi, pd, tau = traj.t, traj.phi, traj.phidot, traj.tau
    if traj.phiddot is not None:
        acc = traj.phiddot
    else:
        acc = np.gradient(pd, t)
    phi_in, psi_in = float(phi[0]), float(pd[0])
    slack = tol * (1.0 + np.abs(phi) + np.abs(pd))

    margins: dict[str, np.ndarray] = {
        "phiddot_nonpositive": -acc,
        "phiddot_lower": acc + M * np.exp(phi),
        "phidot_upper": psi_in - pd,
        "phi_upper": psi_in * t + phi_in - phi,
    }
    if M > 0 and E0 > 0:
        energy_bound = psi_in - (M / 3.0) * np.log((E0 + 3.0 * M * tau) / E0)
        margins["energy_phidot_upper"] = energy_bound - pd

    i0 = _first_negative(pd)
    t0 = t_cross = None
    if i0 is not None:
        t0 = float(t[i0])
        if i0 > 0 and pd[i0 - 1] >= 0:
            w = pd[i0 - 1] / (pd[i0 - 1] - pd[i0])
            t_cross = float(t[i0 - 1] + w * (t[i0] - t[i0 - 1]))
        else:
            t_cross = t0
        env = np.full_like(phi, np.inf)
        env[i0:] = phi[i0] - abs(pd[i0]) * (t[i0:] - t0) - phi[i0:]
        margins["linear_decay"] = env

    violations: list[BoundViolation] = []
    min_margins: dict[str, float] = {}
    for name, m in margins.items():
        bad = np.flatnonzero(m < -slack)
        min_margins[name] = float(np.min(m))
        for j in bad[:max_reports]:
            violations.append(BoundViolation(float(t[j]), name, float(m[j])))

    half = int(np.searchsorted(t, 0.5 * t[-1]))
    return FieldBoundsReport(
        violations=violations,
        min_margins=min_margins,
        t0=t0,
        t_cross=t_cross,
        phidot_final=float(pd[-1]),
        decay_slope=fit_decay_slope(t, phi) if t.size >= 8 else None,
        phidot_cauchy=float(abs(pd[-1] - pd[min(half, t.size - 1)])),
    )
