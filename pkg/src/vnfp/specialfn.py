r"""Modified Bessel functions of the first kind, orders 1 and 2.

Only :math:`I_1` and :math:`I_2` are needed by the ultra-relativistic kernel, so
the implementation is specialised to those two orders. Two regimes are used:

* ``x <= 15``: the power series
  :math:`I_\nu(x) = \sum_k (x/2)^{2k+\nu} / (k!\,(k+\nu)!)`, whose terms are
  all positive, so there is no cancellation.
* ``x > 15``: the Hankel asymptotic expansion of the scaled function
  :math:`e^{-x} I_\nu(x) \sim (2\pi x)^{-1/2} \sum_k (-1)^k a_k(\nu) x^{-k}`,
  truncated at its smallest term. At the switch point the smallest term is
  below ``1e-13`` relative.

Both entry points accept scalars or arrays and return the same shape.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["BesselOrder", "bessel_i", "bessel_i_scaled", "SERIES_MAX_X"]

SERIES_MAX_X = 15.0

# enough terms for x = 15: the term ratio (x/2)^2 / (k (k+nu)) drops below
# 1e-17 well before k = 60
_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 40
# largest x with finite exp(x) in double precision
_EXP_OVERFLOW_X = 709.78


class BesselOrder(int):
    """Order of a modified Bessel function; only 1 and 2 exist."""

    def __new__(cls, order: int) -> "BesselOrder":
        if isinstance(order, bool) or int(order) != order or int(order) not in (1, 2):
            raise ValueError(f"Bessel order must be 1 or 2, got {order!r}")
        return super().__new__(cls, int(order))


def _series(nu: int, x: np.ndarray) -> np.ndarray:
    half_sq = 0.25 * x * x
    term = (0.5 * x) ** nu / math.factorial(nu)
    total = term.copy()
    for k in range(1, _SERIES_TERMS):
        term = term * half_sq / (k * (k + nu))
        total += term
    return total


def _asymptotic_scaled(nu: int, x: np.ndarray) -> np.ndarray:
    mu = 4.0 * nu * nu
    total = np.ones_like(x)
    term = np.ones_like(x)
    best = np.abs(term)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        # stop each lane once the divergent tail starts growing
        grow = np.abs(nxt) >= best
        active &= ~grow
        if not active.any():
            break
        term = np.where(active, nxt, term)
        total = total + np.where(active, nxt, 0.0)
        best = np.where(active, np.abs(nxt), best)
    return total / np.sqrt(2.0 * np.pi * x)


def _check_args(order, x) -> tuple[int, np.ndarray]:
    nu = int(BesselOrder(order))
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)):
        raise ValueError("Bessel argument must be finite")
    if np.any(arr < 0):
        raise ValueError("Bessel argument must be nonnegative")
    return nu, arr


def _as_output(values: np.ndarray, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


def bessel_i_scaled(order: int, x):
    """Return ``exp(-x) * I_order(x)`` for ``x >= 0``.

    Bounded for all ``x``; behaves like ``1/sqrt(2 pi x)`` for large ``x``.
    """
    nu, arr = _check_args(order, x)
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    small = flat <= SERIES_MAX_X
    if small.any():
        xs = flat[small]
        out[small] = np.exp(-xs) * _series(nu, xs)
    if (~small).any():
        out[~small] = _asymptotic_scaled(nu, flat[~small])
    return _as_output(out.reshape(arr.shape), x)


def bessel_i(order: int, x):
    """Return the modified Bessel function ``I_order(x)`` for ``x >= 0``.

    Raises
    ------
    OverflowError
        If ``exp(x)`` is not representable; use :func:`bessel_i_scaled`.
    """
    nu, arr = _check_args(order, x)
    if np.any(arr > _EXP_OVERFLOW_X):
        raise OverflowError(
            f"I_{nu}(x) overflows for x > {_EXP_OVERFLOW_X}; use bessel_i_scaled"
        )
    flat = np.atleast_1d(arr).astype(float)
    out = np.empty_like(flat)
    small = flat <= SERIES_MAX_X
    if small.any():
        out[small] = _series(nu, flat[small])
    if (~small).any():
        xl = flat[~small]
        out[~small] = np.exp(xl) * _asymptotic_scaled(nu, xl)
    return _as_output(out.reshape(arr.shape), x)
