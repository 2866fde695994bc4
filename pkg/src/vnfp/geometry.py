r"""Diffusion matrix of the Nordström-Fokker-Planck operator and derived tensors.

With :math:`a = e^{2\phi}` and :math:`s = \sqrt{a + |p|^2}`,

.. math::
    D^{ij} = (a\,\delta^{ij} + p^i p^j) / s .

Everything else here (derivatives of :math:`D`, the auxiliary matrices
:math:`A` and :math:`B`, the SDE drift :math:`d^i = a\,\partial_j D^{ij}` and
the noise matrix :math:`G` with :math:`G G^T = 2 a D`) is a closed form in the
same two scalars.

Every function broadcasts: ``phi`` may be a scalar or an array of shape
``(...)`` and ``p`` an array of shape ``(..., 3)``; tensor indices are always
the trailing axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FieldValue",
    "MomentumPoint",
    "DiffusionTensors",
    "diffusion_matrix",
    "diffusion_derivatives",
    "diffusion_tensors",
    "drift_vector",
    "noise_matrix",
    "drift_jacobian",
    "noise_derivatives",
    "grad_div_hessian",
    "weighted_diffusion",
    "noise_apply",
    "ultra_drift",
    "ultra_noise_apply",
]

_EYE = np.eye(3)
_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class FieldValue:
    """Nordström potential at one instant, with ``exp(2 phi)`` cached."""

    phi: float
    exp2phi: float = field(init=False)

    def __post_init__(self):
        if not math.isfinite(self.phi):
            raise ValueError(f"phi must be finite, got {self.phi}")
        object.__setattr__(self, "exp2phi", math.exp(2.0 * self.phi))

    @property
    def expphi(self) -> float:
        return math.exp(self.phi)


@dataclass(frozen=True)
class MomentumPoint:
    """A 3-momentum and its magnitude."""

    p: np.ndarray
    q: float = field(init=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(3)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", float(np.sqrt(p @ p)))


@dataclass(frozen=True)
class DiffusionTensors:
    """Point tensors at ``(phi, p)``; leading axes are batch axes.

    ``dD[..., i, j, k]`` is the derivative of ``D[i, j]`` along ``p_k`` and
    ``d2D[..., i, j, k, l]`` the second derivative along ``p_k, p_l``.
    """

    D: np.ndarray
    dD: np.ndarray
    d2D: np.ndarray
    lapD: np.ndarray
    A: np.ndarray
    B: np.ndarray
    drift: np.ndarray
    noise: np.ndarray


def _phi(fv):
    if isinstance(fv, FieldValue):
        return fv.phi
    return np.asarray(fv, dtype=float)


def _p(mp):
    if isinstance(mp, MomentumPoint):
        return mp.p
    return np.asarray(mp, dtype=float)


def _scalars(fv, mp):
    """Return ``(c, a, p, q2, s)`` broadcast so scalars carry trailing unit axes."""
    phi = _phi(fv)
    p = _p(mp)
    if p.shape[-1] != 3:
        raise ValueError(f"momentum must have trailing dimension 3, got {p.shape}")
    q2 = np.einsum("...i,...i->...", p, p)
    c = np.exp(phi)
    a = c * c
    s = np.sqrt(a + q2)
    return c, a, p, q2, s


def _ax(x, n):
    """Append ``n`` unit axes to a batch scalar."""
    x = np.asarray(x)
    return x.reshape(x.shape + (1,) * n)


def _outer(p):
    return np.einsum("...i,...j->...ij", p, p)


def diffusion_matrix(fv, mp) -> np.ndarray:
    """``D[phi](p)`` as a symmetric 3x3 matrix (batched)."""
    _, a, p, _, s = _scalars(fv, mp)
    return (_ax(a, 2) * _EYE + _outer(p)) / _ax(s, 2)


def _first_derivative(D, p, s2, s):
    # d_k D^{ij} = (delta_ik p_j + delta_jk p_i)/s - D^{ij} p_k / s^2
    sym = np.einsum("ik,...j->...ijk", _EYE, p) + np.einsum("jk,...i->...ijk", _EYE, p)
    return sym / _ax(s, 3) - np.einsum("...ij,...k->...ijk", D, p) / _ax(s2, 3)


def _noise(c, a, p, s):
    pref = _SQRT2 * c / np.sqrt(s)
    return _ax(pref, 2) * (_ax(c, 2) * _EYE + _outer(p) / _ax(c + s, 2))


def diffusion_tensors(fv, mp) -> DiffusionTensors:
    """Evaluate ``D``, its derivatives, ``A``, ``B``, drift and noise together.

    The square root ``s`` is computed once and shared.
    """
    c, a, p, q2, s = _scalars(fv, mp)
    s2 = s * s
    pp = _outer(p)
    D = (_ax(a, 2) * _EYE + pp) / _ax(s, 2)
    dD = _first_derivative(D, p, s2, s)

    eye_eye = np.einsum("ik,jl->ijkl", _EYE, _EYE) + np.einsum("jk,il->ijkl", _EYE, _EYE)
    sym = np.einsum("ik,...j->...ijk", _EYE, p) + np.einsum("jk,...i->...ijk", _EYE, p)
    d2D = (
        eye_eye / _ax(s, 4)
        - np.einsum("...ijk,...l->...ijkl", sym, p) / _ax(s**3, 4)
        - np.einsum("...ijl,...k->...ijkl", dD, p) / _ax(s2, 4)
        - np.einsum("...ij,kl->...ijkl", D, _EYE) / _ax(s2, 4)
        + 2.0 * np.einsum("...ij,...k,...l->...ijkl", D, p, p) / _ax(s2**2, 4)
    )
    lapD = (2.0 * _EYE - 4.0 * pp / _ax(s2, 2)) / _ax(s, 2) - _ax(3.0 * a / s2**2, 2) * D
    A = _ax(q2 / s**3, 2) * _EYE
    B = 2.0 * pp / _ax(s**3, 2) - _ax(q2 / s2**2, 2) * D
    return DiffusionTensors(
        D=D,
        dD=dD,
        d2D=d2D,
        lapD=lapD,
        A=A,
        B=B,
        drift=_ax(3.0 * a / s, 1) * p,
        noise=_noise(c, a, p, s),
    )


diffusion_derivatives = diffusion_tensors


def drift_vector(fv, mp) -> np.ndarray:
    """SDE drift ``d^i = 3 exp(2phi) p^i / sqrt(exp(2phi) + |p|^2)``."""
    _, a, p, _, s = _scalars(fv, mp)
    return _ax(3.0 * a / s, 1) * p


def noise_matrix(fv, mp) -> np.ndarray:
    """Symmetric positive square root ``G`` of ``2 exp(2phi) D``."""
    c, a, p, _, s = _scalars(fv, mp)
    return _noise(c, a, p, s)


def drift_jacobian(fv, mp) -> np.ndarray:
    """``J[..., i, j] = d d^i / d p^j = 3a (s^2 delta_ij - p_i p_j) / s^3``."""
    _, a, p, _, s = _scalars(fv, mp)
    s2 = s * s
    return _ax(3.0 * a / s**3, 2) * (_ax(s2, 2) * _EYE - _outer(p))


def noise_derivatives(fv, mp) -> np.ndarray:
    """``dG[..., i, j, k]``: derivative of ``G[i, j]`` along ``p_k``."""
    c, a, p, _, s = _scalars(fv, mp)
    pref = _SQRT2 * c / np.sqrt(s)
    pp = _outer(p)
    inner = _ax(c, 2) * _EYE + pp / _ax(c + s, 2)
    # d_k s = p_k / s
    dpref = _ax(-0.5 * pref / (s * s), 1) * p
    sym = np.einsum("ik,...j->...ijk", _EYE, p) + np.einsum("jk,...i->...ijk", _EYE, p)
    dinner = sym / _ax(c + s, 3) - np.einsum("...ij,...k->...ijk", pp, p) / _ax(
        s * (c + s) ** 2, 3
    )
    return np.einsum("...k,...ij->...ijk", dpref, inner) + _ax(pref, 3) * dinner


def grad_div_hessian(fv, mp) -> np.ndarray:
    r"""``T[..., j, k, l] = d_l d_k d_i D^{ij}`` (summed over ``i``).

    Uses ``d_i D^{ij} = 3 p_j / s``.
    """
    _, a, p, _, s = _scalars(fv, mp)
    s3 = _ax(s**3, 3)
    return (
        -3.0 * np.einsum("jk,...l->...jkl", _EYE, p) / s3
        - 3.0
        * (np.einsum("jl,...k->...jkl", _EYE, p) + np.einsum("kl,...j->...jkl", _EYE, p))
        / s3
        + 9.0 * np.einsum("...j,...k,...l->...jkl", p, p, p) / _ax(s**5, 3)
    )


def weighted_diffusion(fv, mp) -> np.ndarray:
    """``exp(2phi) D[phi]``, the full diffusion coefficient of the density equation."""
    _, a, _, _, _ = _scalars(fv, mp)
    return _ax(a, 2) * diffusion_matrix(fv, mp)


def noise_apply(phi, P: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``G(phi, P_n) xi_n`` for ``(n, 3)`` arrays, without forming the matrices."""
    c, _, P, _, s = _scalars(phi, P)
    pref = _SQRT2 * c / np.sqrt(s)
    pxi = np.einsum("...i,...i->...", P, xi)
    return _ax(pref, 1) * (_ax(c, 1) * xi + _ax(pxi / (c + s), 1) * P)


def ultra_drift(phi, P: np.ndarray) -> np.ndarray:
    """Drift of the ``D[-inf] = p p^T / |p|`` operator: ``3 e^{2phi} p / |p|``.

    Zero at the origin.
    """
    P = np.asarray(P, dtype=float)
    a = np.exp(2.0 * np.asarray(phi, dtype=float))
    q = np.sqrt(np.einsum("...i,...i->...", P, P))
    scale = np.divide(3.0 * a, q, out=np.zeros(np.broadcast(a, q).shape), where=q > 0)
    return _ax(scale, 1) * P


def ultra_noise_apply(phi, P: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Rank-one noise ``sqrt(2 e^{2phi} |p|) p_hat p_hat^T`` applied to ``xi``.

    Zero at the origin.
    """
    P = np.asarray(P, dtype=float)
    a = np.exp(2.0 * np.asarray(phi, dtype=float))
    q = np.sqrt(np.einsum("...i,...i->...", P, P))
    pxi = np.einsum("...i,...i->...", P, xi)
    # sqrt(2 a q) (p . xi) / q^2
    num = np.sqrt(2.0 * a * q) * pxi
    scale = np.divide(num, q * q, out=np.zeros(np.broadcast(num, q).shape), where=q > 0)
    return _ax(scale, 1) * P
