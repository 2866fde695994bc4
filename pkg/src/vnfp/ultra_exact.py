r"""Exact solutions of the ultra-relativistic radial equation ``g_t = q g'' + 3 g'``.

The solution operator is the Bessel kernel

.. math::
    g(t, q) = \frac{1}{q} \int_0^\infty g_{in}(z)\, z\, H(t, q, z)\, dz,\qquad
    H(\tau, q, z) = \tau^{-1} e^{-(q+z)/\tau} I_2\!\left(2\sqrt{qz}/\tau\right),

which is the six-dimensional radial heat kernel after ``q = r^2/4``. A
field-modulated equation ``h_t = e^{2 phi} (q h'' + 3 h')`` is solved by the
same kernel at the time ``tau(t) = int_0^t e^{2 phi}``, and its long-time limit
is the kernel at ``tau_inf``.

All kernel evaluations go through :func:`~vnfp.specialfn.bessel_i_scaled`:
``e^{-(q+z)/tau} I_2(x) = e^{-(sqrt q - sqrt z)^2/tau} [e^{-x} I_2(x)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._quadrature import QuadratureError, adaptive_quad
from .nordstrom import FieldTrajectory, fit_decay_slope
from .specialfn import bessel_i_scaled

__all__ = [
    "QuadratureError",
    "NonDecayingFieldError",
    "RadialProfile",
    "TimeChange",
    "ultra_kernel",
    "kernel_tau_derivative",
    "ultra_solution",
    "heat6d_solution",
    "time_change",
    "asymptotic_profile",
    "AsymptoticBoundReport",
    "verify_asymptotic_bound",
    "exponential_solution",
    "gaussian_heat6d_solution",
]

# e^{-46} ~ 1e-20: kernel tails beyond this many time-widths are dropped
_TAIL_EXPONENT = 46.0
_EPSREL = 1e-12
_EPSABS = 1e-15


class NonDecayingFieldError(ValueError):
    """The field does not decay, so ``tau_inf`` cannot be estimated."""


@dataclass(frozen=True)
class RadialProfile:
    """Nonnegative radial initial datum ``q -> value``.

    ``decay`` is a free-form note on integrability; the kernel only requires
    ``int q (1 + q)^2 profile dq < inf``.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    decay: str = "exponential"

    def __call__(self, q):
        return self.eval(q)


def _profile(g) -> Callable:
    return g.eval if isinstance(g, RadialProfile) else g


@dataclass(frozen=True)
class TimeChange:
    """``tau(t) = int_0^t e^{2 phi}`` and its limit ``tau_inf``."""

    tau_of_t: Callable[[float], float]
    tau_infinity: float
    tail_at_end: float = 0.0
    decay_slope: float | None = None

    def tail(self, t) -> float:
        """``tau_inf - tau(t) = int_t^inf e^{2 phi}``."""
        return self.tau_infinity - self.tau_of_t(t)


def ultra_kernel(tau, q, z):
    """``H(tau, q, z)``, symmetric in ``(q, z)``; broadcasts over arrays."""
    tau, q, z = (np.asarray(v, dtype=float) for v in (tau, q, z))
    sq, sz = np.sqrt(q), np.sqrt(z)
    x = 2.0 * sq * sz / tau
    out = np.exp(-((sq - sz) ** 2) / tau) * bessel_i_scaled(2, x) / tau
    return float(out) if out.ndim == 0 else out


def kernel_tau_derivative(tau, q, z):
    """``dH/dtau = e^{-(q+z)/tau} tau^{-2} [I_2(x)(1 + (q+z)/tau) - x I_1(x)]``."""
    tau, q, z = (np.asarray(v, dtype=float) for v in (tau, q, z))
    sq, sz = np.sqrt(q), np.sqrt(z)
    x = 2.0 * sq * sz / tau
    damp = np.exp(-((sq - sz) ** 2) / tau)
    i1 = bessel_i_scaled(1, x)
    i2 = bessel_i_scaled(2, x)
    out = damp / tau**2 * (i2 * (1.0 + (q + z) / tau) - x * i1)
    return float(out) if out.ndim == 0 else out


def _quad(fun, lo, hi, points):
    pts = [lo, hi] + [p for p in points if lo < p < hi]
    return adaptive_quad(fun, pts, epsrel=_EPSREL, epsabs=_EPSABS)


def ultra_solution(g_in, t: float, q: float, *, z_max: float | None = None) -> float:
    """Evaluate the exact solution at ``(t, q)``; ``q = 0`` uses the limit value.

    Raises
    ------
    QuadratureError
        If the adaptive quadrature does not converge.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    g = _profile(g_in)
    if z_max is None:
        z_max = (math.sqrt(q) + math.sqrt(_TAIL_EXPONENT * t)) ** 2
    if q == 0.0:
        # I_2(x) ~ x^2 / 8, so g(t, 0) = (1 / 2t^3) int g z^2 e^{-z/t} dz
        val = _quad(lambda z: g(z) * z * z * np.exp(-z / t), 0.0, z_max, [t, 2 * t, 5 * t])
        return max(val / (2.0 * t**3), 0.0)

    sq, st = math.sqrt(q), math.sqrt(t)
    points = [q] + [(max(sq - k * st, 0.0)) ** 2 for k in (1, 3, 6)]
    points += [(sq + k * st) ** 2 for k in (1, 3, 6)]

    def integrand(z):
        return g(z) * z * ultra_kernel(t, q, z)

    return max(_quad(integrand, 0.0, z_max, points) / q, 0.0)


def heat6d_solution(u_in, t: float, r: float, *, s_max: float | None = None) -> float:
    """Radial solution of the heat equation in six dimensions at ``(t, r)``."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if r < 0:
        raise ValueError(f"r must be nonnegative, got {r}")
    u = _profile(u_in)
    width = math.sqrt(4.0 * t * _TAIL_EXPONENT)
    if s_max is None:
        s_max = r + width
    if r == 0.0:
        # area of S^5 is pi^3, so u(t, 0) = (64 t^3)^{-1} int u s^5 e^{-s^2/4t} ds
        val = _quad(
            lambda s: u(s) * s**5 * np.exp(-s * s / (4.0 * t)),
            0.0,
            s_max,
            [math.sqrt(t), 2 * math.sqrt(t)],
        )
        return max(val / (64.0 * t**3), 0.0)

    st = math.sqrt(2.0 * t)
    points = [r] + [r + k * st for k in (-6, -3, -1, 1, 3, 6) if r + k * st > 0]

    def integrand(s):
        x = r * s / (2.0 * t)
        return u(s) * s**3 * np.exp(-((r - s) ** 2) / (4.0 * t)) * bessel_i_scaled(2, x)

    val = _quad(integrand, 0.0, s_max, points)
    return max(val / (2.0 * r * r * t), 0.0)


def time_change(phi_traj: FieldTrajectory, *, min_slope: float = 1e-8) -> TimeChange:
    """Build ``tau(t)`` from a sampled field and extrapolate ``tau_inf``.

    The tail beyond the last sample assumes linear decay ``phi ~ -beta t``
    with ``beta`` fitted on the last quarter, giving ``e^{2 phi(T)} / (2 beta)``.
    """
    t, phi, tau = phi_traj.t, phi_traj.phi, phi_traj.tau
    if t.size < 8:
        raise NonDecayingFieldError("trajectory too short to estimate the decay rate")
    slope = fit_decay_slope(t, phi)
    if not slope < -min_slope:
        raise NonDecayingFieldError(
            f"field does not decay (fitted slope {slope:.3e}); tau_inf is not finite"
        )
    beta = -slope
    tail = math.exp(2.0 * phi[-1]) / (2.0 * beta)
    tau_inf = float(tau[-1]) + tail

    def tau_of_t(s):
        return float(np.interp(s, t, tau))

    return TimeChange(tau_of_t, tau_inf, tail_at_end=tail, decay_slope=slope)


def asymptotic_profile(h_in, tc: TimeChange, q: float) -> float:
    """The long-time limit profile: the exact solution at ``tau_inf``."""
    if not math.isfinite(tc.tau_infinity):
        raise NonDecayingFieldError("tau_inf is not finite")
    return ultra_solution(h_in, tc.tau_infinity, q)


@dataclass
class AsymptoticBoundReport:
    times: np.ndarray
    sup_errors: np.ndarray
    tails: np.ndarray
    ratios: np.ndarray
    max_spread: float

    @property
    def constant(self) -> float:
        return float(self.ratios.max())

    @property
    def spread(self) -> float:
        return float(self.ratios.max() / self.ratios.min())

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)) and self.spread <= self.max_spread)


def default_q_samples() -> np.ndarray:
    return np.unique(
        np.concatenate([np.geomspace(1e-3, 0.5, 60), np.linspace(0.5, 40.0, 240)])
    )


def verify_asymptotic_bound(
    h_in,
    phi_traj: FieldTrajectory,
    times,
    *,
    q_samples: np.ndarray | None = None,
    max_spread: float = 10.0,
) -> AsymptoticBoundReport:
    """Compare ``h(t) = g(tau(t))`` with the limit profile at each time.

    Reports ``sup_q |h(t) - T[h_in]|`` over ``q_samples`` and its ratio to the
    remaining time-change ``tau_inf - tau(t)``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 1.0):
        raise ValueError("the bound is stated for times greater than 1")
    tc = time_change(phi_traj)
    qs = default_q_samples() if q_samples is None else np.asarray(q_samples, float)
    limit = np.array([asymptotic_profile(h_in, tc, q) for q in qs])
    errors, tails = [], []
    for t in times:
        tau_t = tc.tau_of_t(t)
        h = np.array([ultra_solution(h_in, tau_t, q) for q in qs])
        errors.append(np.abs(h - limit).max())
        tails.append(tc.tail(t))
    errors, tails = np.array(errors), np.array(tails)
    return AsymptoticBoundReport(times, errors, tails, errors / tails, max_spread)


def exponential_solution(t, q):
    """Exact solution for ``g_in = e^{-q}``: ``e^{-q/(1+t)} / (1+t)^3``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-np.asarray(q, dtype=float) / (1.0 + t)) / (1.0 + t) ** 3


def gaussian_heat6d_solution(t, r):
    """Six-dimensional heat flow of ``e^{-r^2/4}``: ``(1+t)^{-3} e^{-r^2/4(1+t)}``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-np.asarray(r, dtype=float) ** 2 / (4.0 * (1.0 + t))) / (1.0 + t) ** 3
