import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vnfp import geometry as geo
from vnfp.verification import BOUND_CONSTANTS, bound_ratios, check_noise_square

phis = st.floats(min_value=-10.0, max_value=2.0)
comps = st.floats(min_value=-30.0, max_value=30.0)
momenta = st.tuples(comps, comps, comps).map(np.array)


def fd_h(phi, p):
    # tensors vary on the scale s = sqrt(e^{2 phi} + |p|^2), not max(1, |p|)
    return 1e-5 * math.sqrt(math.exp(2 * phi) + float(p @ p))


def fd_grad(fn, p, phi):
    """Central differences of ``fn`` along each momentum axis (last axis)."""
    h = fd_h(phi, p)
    out = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out.append((fn(p + e) - fn(p - e)) / (2 * h))
    return np.stack(out, axis=-1)


def test_field_and_momentum_types():
    fv = geo.FieldValue(0.3)
    assert fv.exp2phi == pytest.approx(math.exp(0.6), rel=1e-14)
    mp = geo.MomentumPoint([3.0, 4.0, 0.0])
    assert mp.q == 5.0
    with pytest.raises(ValueError):
        geo.FieldValue(math.nan)


def test_diffusion_matrix_examples():
    assert np.allclose(geo.diffusion_matrix(0.0, np.zeros(3)), np.eye(3), atol=0)
    phi = -1.7
    assert np.allclose(geo.diffusion_matrix(phi, np.zeros(3)), math.exp(phi) * np.eye(3), rtol=1e-15)
    D = geo.diffusion_matrix(geo.FieldValue(0.0), geo.MomentumPoint([1, 0, 0]))
    assert np.allclose(D, np.diag([2, 1, 1]) / math.sqrt(2), rtol=1e-15)


def test_derivative_examples():
    t = geo.diffusion_tensors(0.4, np.zeros(3))
    assert np.all(t.dD == 0) and np.all(t.A == 0) and np.all(t.B == 0)
    t = geo.diffusion_tensors(0.0, np.array([1.0, 0, 0]))
    assert np.allclose(t.A, np.eye(3) / 2**1.5, rtol=1e-15)
    assert np.allclose(geo.drift_vector(0.0, [1.0, 0, 0]), [3 / math.sqrt(2), 0, 0])
    assert np.all(geo.drift_vector(2.0, np.zeros(3)) == 0)


def test_noise_examples():
    phi = 0.7
    G = geo.noise_matrix(phi, np.zeros(3))
    assert np.allclose(G, math.sqrt(2) * math.exp(1.5 * phi) * np.eye(3), rtol=1e-14)
    G = geo.noise_matrix(0.0, np.array([1.0, 0, 0]))
    assert np.allclose(G @ G, 2 * np.diag([2, 1, 1]) / math.sqrt(2), rtol=1e-14)


@given(phis, momenta)
def test_first_derivative_matches_fd(phi, p):
    dD = geo.diffusion_tensors(phi, p).dD
    fd = fd_grad(lambda x: geo.diffusion_matrix(phi, x), p, phi)
    assert np.allclose(dD, fd, rtol=1e-6, atol=1e-7)


@given(phis, momenta)
def test_second_derivative_matches_fd(phi, p):
    d2D = geo.diffusion_tensors(phi, p).d2D
    fd = fd_grad(lambda x: geo.diffusion_tensors(phi, x).dD, p, phi)
    scale = 1.0 + np.abs(d2D).max()
    assert np.allclose(d2D, fd, atol=1e-6 * scale)


@given(phis, momenta)
def test_laplacian_and_trace(phi, p):
    t = geo.diffusion_tensors(phi, p)
    assert np.allclose(t.lapD, np.einsum("...ijkk->...ij", t.d2D), rtol=1e-10, atol=1e-12)


@given(phis, momenta)
def test_drift_equals_weighted_divergence(phi, p):
    fd = fd_grad(lambda x: geo.diffusion_matrix(phi, x), p, phi)
    div = np.einsum("ijj->i", fd)
    a = math.exp(2 * phi)
    d = geo.drift_vector(phi, p)
    # 3 a p / s equals a d_j D^{ij}
    assert np.allclose(d, a * div, rtol=1e-6, atol=1e-7 * max(a, 1e-300))


@given(phis, momenta)
def test_drift_jacobian_matches_fd(phi, p):
    J = geo.drift_jacobian(phi, p)
    fd = fd_grad(lambda x: geo.drift_vector(phi, x), p, phi)
    assert np.allclose(J, fd, rtol=1e-6, atol=1e-8 * (1 + np.abs(J).max()))
    assert np.abs(geo.drift_vector(phi, p)).max() <= 3 * math.exp(2 * phi)


@given(phis, momenta)
def test_noise_derivatives_match_fd(phi, p):
    dG = geo.noise_derivatives(phi, p)
    fd = fd_grad(lambda x: geo.noise_matrix(phi, x), p, phi)
    assert np.allclose(dG, fd, rtol=1e-6, atol=1e-8 * (1 + np.abs(dG).max()))


@given(phis, momenta)
def test_grad_div_hessian_matches_fd(phi, p):
    T = geo.grad_div_hessian(phi, p)

    def hess_div(x):
        d2 = geo.diffusion_tensors(phi, x).d2D
        return np.einsum("...ijik->...jk", d2)

    fd = fd_grad(hess_div, p, phi)
    assert np.allclose(T, fd, atol=1e-6 * (1 + np.abs(T).max()))


@given(phis, momenta)
def test_matrix_invariants(phi, p):
    t = geo.diffusion_tensors(phi, p)
    a = math.exp(2 * phi)
    s = math.sqrt(a + p @ p)
    ev = np.linalg.eigvalsh(t.D)
    assert np.allclose(t.D, t.D.T)
    assert ev.min() > 0 and ev.max() <= s * (1 + 1e-12)
    G = t.noise
    assert np.allclose(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0
    assert np.allclose(G @ G.T, 2 * a * t.D, rtol=1e-12, atol=1e-14 * 2 * a * s)
    # A is a nonnegative multiple of the identity
    assert np.allclose(t.A, t.A[0, 0] * np.eye(3)) and t.A[0, 0] >= 0
    # spherical contraction
    assert np.allclose(t.D @ p, p * s, rtol=1e-12, atol=1e-12 * s)


def test_batched_matches_pointwise():
    rng = np.random.default_rng(5)
    phi = rng.uniform(-3, 1, 7)
    p = rng.normal(size=(7, 3)) * 4
    batch = geo.diffusion_tensors(phi, p)
    for i in range(7):
        one = geo.diffusion_tensors(phi[i], p[i])
        for name in ("D", "dD", "d2D", "lapD", "A", "B", "drift", "noise"):
            assert np.allclose(getattr(batch, name)[i], getattr(one, name), rtol=1e-14, atol=0)


def test_noise_apply_matches_matrix():
    rng = np.random.default_rng(1)
    phi = rng.uniform(-2, 1, 20)
    P = rng.normal(size=(20, 3))
    xi = rng.normal(size=(20, 3))
    G = geo.noise_matrix(phi, P)
    assert np.allclose(geo.noise_apply(phi, P, xi), np.einsum("nij,nj->ni", G, xi), rtol=1e-13)


def test_ultra_coefficients():
    P = np.array([[2.0, 0, 0], [0, 0, 0]])
    xi = np.array([[1.0, 5.0, -3.0], [1, 1, 1]])
    d = geo.ultra_drift(0.0, P)
    assert np.allclose(d, [[3, 0, 0], [0, 0, 0]])
    n = geo.ultra_noise_apply(0.0, P, xi)
    # sqrt(2 |p|) p_hat p_hat^T xi
    assert np.allclose(n, [[2.0, 0, 0], [0, 0, 0]])


def test_noise_square_sweep():
    res = check_noise_square(10_000, seed=11)
    assert res.passed, res.line()


def test_tensor_bounds_with_frozen_constants():
    ratios = bound_ratios(10_000, seed=7)
    for name, value in ratios.items():
        assert value <= BOUND_CONSTANTS[name], (name, value)
        assert value > 0


def test_lipschitz_pairs_respect_sqrt_weight():
    # the Lipschitz ratio uses sqrt(1 + |p|^2): check growth is not faster
    p_small = np.array([[0.1, 0, 0]])
    p_big = np.array([[100.0, 0, 0]])
    for p in (p_small, p_big):
        w1 = geo.weighted_diffusion(0.0, p)
        w2 = geo.weighted_diffusion(0.01, p)
        ratio = np.abs(w1 - w2).max() / (math.sqrt(1 + float(p[0] @ p[0])) * 0.01)
        assert ratio <= BOUND_CONSTANTS["Ddiff_lipschitz"]
