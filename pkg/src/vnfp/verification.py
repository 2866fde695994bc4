"""Executable checks shared by the ``verify`` command and the test suite.

Every check returns a :class:`CheckResult` with the measured value and the
threshold it was compared against, so reports are self-describing.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry as geo
from .nordstrom import FieldTrajectory
from .specialfn import bessel_i, bessel_i_scaled
from .ultra_exact import ultra_kernel, verify_asymptotic_bound
from ._quadrature import adaptive_quad

__all__ = [
    "BOUND_CONSTANTS",
    "CheckResult",
    "sample_sweep",
    "bound_ratios",
    "check_noise_square",
    "check_tensor_bounds",
    "check_bessel_recurrence",
    "check_bessel_consistency",
    "check_kernel_normalization",
    "check_asymptotic_bound",
    "check_energy_identity",
    "run_suite",
]

PHI_RANGE = (-10.0, 2.0)
P_MAX = 100.0

# Sup of each ratio over a 1e5-point sweep of the box above, rounded up with
# some headroom. Frozen: a regression that pushes a ratio past its constant
# fails the suite.
BOUND_CONSTANTS = {
    "dD": 1.2,
    "d2D_exp_phi": 1.2,
    "grad_div_hessian_exp_2phi": 2.8,
    "B_quadratic_exp_phi": 0.40,
    "lapD_quadratic_exp_phi": 1.0,
    "drift_jacobian": 22.5,
    "dG_exp_minus_half_phi": 0.65,
    "Ddiff_lipschitz": 1300.0,
    "Ddiffderiv_lipschitz": 130.0,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def as_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {self.value:.6g} (threshold {self.threshold:.6g}) {self.detail}".rstrip()


def sample_sweep(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``(phi, p)`` with ``phi`` in ``PHI_RANGE`` and ``|p| <= P_MAX``.

    Half of the magnitudes are log-uniform on ``[1e-6, P_MAX]``; the other half
    sit on the ``e^phi`` scale where the tensors change fastest. A few exact
    ``p = 0`` points are included.
    """
    rng = np.random.default_rng(seed)
    phi = rng.uniform(*PHI_RANGE, size=n)
    direction = rng.standard_normal((n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    half = n // 2
    mag = np.empty(n)
    mag[:half] = np.exp(rng.uniform(math.log(1e-6), math.log(P_MAX), size=half))
    scaled = np.exp(phi[half:]) * np.exp(rng.uniform(math.log(1e-3), math.log(1e3), n - half))
    mag[half:] = np.minimum(scaled, P_MAX)
    mag[: min(8, n)] = 0.0
    return phi, direction * mag[:, None]


def _max_abs(x: np.ndarray, axes: int) -> np.ndarray:
    return np.abs(x).reshape(x.shape[: x.ndim - axes] + (-1,)).max(axis=-1)


def bound_ratios(n: int = 10_000, seed: int = 0) -> dict[str, float]:
    """Sup over the sweep of each tensor quantity divided by its weight.

    Tensor sizes are max-abs entries; quadratic forms use the largest
    eigenvalue; Lipschitz ratios compare pairs sharing ``p``.
    """
    phi, p = sample_sweep(n, seed)
    c = np.exp(phi)
    t = geo.diffusion_tensors(phi, p)
    out = {
        "dD": _max_abs(t.dD, 3).max(),
        "d2D_exp_phi": (_max_abs(t.d2D, 4) * c).max(),
        "grad_div_hessian_exp_2phi": (_max_abs(geo.grad_div_hessian(phi, p), 3) * c * c).max(),
        "B_quadratic_exp_phi": (np.linalg.eigvalsh(t.B)[:, -1] * c).max(),
        "lapD_quadratic_exp_phi": (np.linalg.eigvalsh(t.lapD)[:, -1] * c).max(),
        "drift_jacobian": _max_abs(geo.drift_jacobian(phi, p), 2).max(),
        "dG_exp_minus_half_phi": (_max_abs(geo.noise_derivatives(phi, p), 3) / np.sqrt(c)).max(),
    }
    rng = np.random.default_rng(seed + 1)
    phi2 = np.clip(phi + rng.uniform(-0.5, 0.5, size=n), *PHI_RANGE)
    dphi = np.abs(phi - phi2)
    ok = dphi > 1e-9
    w1 = geo.weighted_diffusion(phi, p)
    w2 = geo.weighted_diffusion(phi2, p)
    q2 = np.einsum("ij,ij->i", p, p)
    lip = _max_abs(w1 - w2, 2) / (np.sqrt(1.0 + q2) * dphi)
    out["Ddiff_lipschitz"] = lip[ok].max()
    a1, a2 = np.exp(2 * phi), np.exp(2 * phi2)
    g1 = a1[:, None, None, None] * t.dD
    g2 = a2[:, None, None, None] * geo.diffusion_tensors(phi2, p).dD
    out["Ddiffderiv_lipschitz"] = (_max_abs(g1 - g2, 3) / dphi)[ok].max()
    return {k: float(v) for k, v in out.items()}


def check_noise_square(n: int = 10_000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    phi, p = sample_sweep(n, seed)
    G = geo.noise_matrix(phi, p)
    target = 2.0 * np.exp(2 * phi)[:, None, None] * geo.diffusion_matrix(phi, p)
    err = np.linalg.norm(G @ np.swapaxes(G, -1, -2) - target, axis=(1, 2))
    rel = float((err / np.linalg.norm(target, axis=(1, 2))).max())
    return CheckResult("noise_square", rel <= tol, rel, tol, f"{n} points")


def check_tensor_bounds(n: int = 10_000, seed: int = 0) -> list[CheckResult]:
    ratios = bound_ratios(n, seed)
    return [
        CheckResult(f"bound_{k}", v <= BOUND_CONSTANTS[k], v, BOUND_CONSTANTS[k])
        for k, v in ratios.items()
    ]


def check_bessel_recurrence(n: int = 50) -> CheckResult:
    """``I_2' = I_1 - (2/x) I_2`` against central differences on ``[1e-3, 100]``.

    Each derivative of ``I_n`` is an average of neighbouring orders, so
    ``|I_2'''(x)| <= I_0(x) <= cosh(x)``. The allowed gap is the truncation
    bound ``h^2/6 cosh(x + h)`` plus a cancellation term ``4 eps I_2(x + h) / h``.
    """
    x = np.geomspace(1e-3, 100.0, n)
    h = 1e-4 * np.maximum(x, 1e-2)
    fd = (bessel_i(2, x + h) - bessel_i(2, x - h)) / (2 * h)
    exact = bessel_i(1, x) - 2.0 / x * bessel_i(2, x)
    bound = h * h / 6.0 * np.cosh(x + h) + 4.0 * np.finfo(float).eps * bessel_i(2, x + h) / h
    worst = float((np.abs(fd - exact) / bound).max())
    return CheckResult("bessel_recurrence", worst <= 1.0, worst, 1.0, "max |FD - rec| / bound")


def check_bessel_consistency(tol: float = 1e-12) -> CheckResult:
    x = np.concatenate([np.linspace(0.01, 15, 200), np.linspace(15, 700, 400)])
    rel = 0.0
    for order in (1, 2):
        a = bessel_i(order, x)
        b = np.exp(x) * bessel_i_scaled(order, x)
        rel = max(rel, float((np.abs(a - b) / a).max()))
    return CheckResult("bessel_scaled_consistency", rel <= tol, rel, tol)


def kernel_pairs(n: int = 20, seed: int = 3) -> list[tuple[float, float]]:
    rng = np.random.default_rng(seed)
    ts = np.exp(rng.uniform(math.log(0.05), math.log(5.0), n))
    zs = np.exp(rng.uniform(math.log(0.01), math.log(20.0), n))
    return list(zip(ts.tolist(), zs.tolist()))


def kernel_normalization(tau: float, z: float) -> float:
    """``int_0^inf H(tau, q, z) q dq / z``; equals 1 exactly."""
    sz, st = math.sqrt(z), math.sqrt(tau)
    hi = (sz + math.sqrt(46.0) * st) ** 2
    pts = [0.0, z, hi] + [(max(sz - k * st, 0.0)) ** 2 for k in (1, 3, 6)]
    pts += [(sz + k * st) ** 2 for k in (1, 3, 6) if (sz + k * st) ** 2 < hi]
    return adaptive_quad(lambda q: ultra_kernel(tau, q, z) * q, pts) / z


def check_kernel_normalization(tol: float = 1e-8) -> CheckResult:
    worst = max(abs(kernel_normalization(t, z) - 1.0) for t, z in kernel_pairs())
    return CheckResult("kernel_normalization", worst <= tol, worst, tol, "20 (t, z) pairs")


def check_asymptotic_bound(max_spread: float = 10.0) -> CheckResult:
    traj = FieldTrajectory.prescribed(lambda t: -0.5 * t, 40.0, 1e-3)
    rep = verify_asymptotic_bound(lambda z: np.exp(-z), traj, [2.0, 4.0, 8.0, 16.0])
    return CheckResult(
        "asymptotic_bound_spread",
        rep.bounded,
        rep.spread,
        max_spread,
        "ratios " + ", ".join(f"{r:.4g}" for r in rep.ratios),
    )


def check_energy_identity(t_end: float = 2.0, n: int = 500, dt: float = 2e-3, tol=1e-5):
    from .coupled import SimConfig, energy_identity_residual, run_coupled

    traj = run_coupled(SimConfig(t_end=t_end, n=n, dt=dt, q_max=40.0))
    res = energy_identity_residual(traj)
    return CheckResult("energy_identity", res <= tol, res, tol, f"n={n} dt={dt} T={t_end}")


def run_suite(*, sweep_points: int = 10_000, seed: int = 0) -> list[CheckResult]:
    results = [check_noise_square(sweep_points, seed)]
    results += check_tensor_bounds(sweep_points, seed)
    results += [
        check_bessel_recurrence(),
        check_bessel_consistency(),
        check_kernel_normalization(),
        check_asymptotic_bound(),
        check_energy_identity(),
    ]
    return results
