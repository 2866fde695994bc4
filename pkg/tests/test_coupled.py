import dataclasses
import math

import numpy as np
import pytest

import vnfp.coupled as coupled
from vnfp.coupled import (
    SimConfig,
    SolverError,
    energy_identity_residual,
    run_coupled,
    run_fixed_point,
)
from vnfp.fp_radial import DensityState, SingularSystemError, evolve
from vnfp.ultra_exact import ultra_solution

SHORT = SimConfig(t_end=1.0, dt=2e-3, n=400, q_max=30.0, diagnostics_every=5, snapshot_every=100)


@pytest.fixture(scope="module")
def short_run():
    return run_coupled(SHORT)


def test_config_validation_names_key():
    with pytest.raises(ValueError, match="dt"):
        SimConfig(dt=-1.0)
    with pytest.raises(ValueError, match="theta"):
        SimConfig(theta=2.0)
    with pytest.raises(ValueError, match="f_in"):
        SimConfig(f_in="triangle")
    assert SimConfig().n_steps == 20_000
    assert SHORT.with_(n=10).n == 10


def test_zero_density_gives_free_field():
    cfg = SHORT.with_(f_in="zero", phi_in=0.2, psi_in=-0.3)
    traj = run_coupled(cfg)
    assert np.allclose(traj.field.phi, 0.2 - 0.3 * traj.field.t, atol=1e-13)
    assert np.all(traj.final_density.values == 0.0)
    assert traj.mass0 == 0.0


def test_mass_and_field_sign(short_run):
    masses = np.array([r.mass for r in short_run.diagnostics])
    assert np.abs(masses / short_run.mass0 - 1).max() <= 1e-12
    assert all(r.phiddot_sign_ok for r in short_run.diagnostics)
    assert np.all(short_run.field.phiddot <= 0)
    assert short_run.bounds.ok


def test_records_and_snapshots(short_run):
    steps = [r.step for r in short_run.diagnostics]
    assert steps[0] == 0 and steps[-1] == 500 and all(s % 5 == 0 for s in steps)
    assert [s.t for s in short_run.snapshots] == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    rec = short_run.diagnostics[-1]
    assert set(rec.field_bound_margins) >= {"phiddot_nonpositive", "phi_upper"}
    assert rec.t == 500 * 2e-3


def test_energy_residual_small(short_run):
    assert energy_identity_residual(short_run) <= 1e-5
    rec = max(short_run.diagnostics, key=lambda r: abs(r.energy_residual))
    assert abs(rec.energy_residual) <= 1e-5


def test_energy_residual_detects_fault(short_run):
    phi = short_run.field.phi.copy()
    phi[5] += 1e-3
    bad_field = dataclasses.replace(short_run.field, phi=phi)
    bad = dataclasses.replace(short_run, field=bad_field)
    assert energy_identity_residual(bad) > 1e-5


def test_single_iterate_is_frozen_field_solve():
    cfg = SHORT.with_(phi_in=-0.4, psi_in=0.2)
    res = run_fixed_point(cfg, 1, 0.4)
    assert res.phi_diffs == [] and len(res.iterates) == 1
    grid = cfg.grid()
    f0 = DensityState.from_profile(grid, cfg.profile)
    ref = evolve(f0, -0.4, 0.4, cfg.dt, grid)
    assert np.allclose(res.iterates[0].final_density.values, ref.values, rtol=1e-13, atol=0)


@pytest.mark.parametrize("seed", ["constant", "free"])
def test_fixed_point_converges_to_coupled(seed):
    cfg = SHORT.with_(psi_in=0.5)
    res = run_fixed_point(cfg, 6, 0.5, seed=seed)
    assert res.monotone
    assert res.phi_diffs[-1] < 1e-10 and not res.stagnated
    direct = run_coupled(cfg.with_(t_end=0.5))
    assert np.abs(res.iterates[-1].field.phi - direct.field.phi).max() < 1e-10
    assert np.abs(res.iterates[-1].final_density.values - direct.final_density.values).max() < 1e-10


def test_fixed_point_arguments():
    with pytest.raises(ValueError):
        run_fixed_point(SHORT, 0, 1.0)
    with pytest.raises(ValueError):
        run_fixed_point(SHORT, 2, 1.0, seed="random")


def test_solver_error_wraps_failure(monkeypatch):
    real = coupled.step_theta
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 4:
            raise SingularSystemError("zero pivot")
        return real(*args, **kwargs)

    monkeypatch.setattr(coupled, "step_theta", flaky)
    with pytest.raises(SolverError) as info:
        run_coupled(SHORT)
    assert info.value.step == 3
    assert "zero pivot" in str(info.value)


def test_ultra_run_matches_exact_solution():
    # the ultra density is the exact profile evaluated at the accumulated tau
    errs = []
    for n, dt in ((500, 2e-3), (1000, 1e-3)):
        cfg = SimConfig(t_end=2.0, dt=dt, n=n, q_max=40.0, mode="ultra", snapshot_every=4000)
        traj = run_coupled(cfg)
        tau = traj.field.tau[-1]
        q = traj.grid.nodes[::n // 100]
        vals = traj.final_density.values[::n // 100]
        sel = q < 10.0
        exact = np.array([ultra_solution(lambda z: np.exp(-z), tau, x) for x in q[sel]])
        errs.append(np.abs(vals[sel] - exact).max())
        assert 0 < tau < 2.0
    assert errs[1] < 5e-4
    assert errs[0] / errs[1] > 3.0


def test_exponential_decay_of_field(short_run):
    # free particles pull phi down: phidot is nonincreasing and negative after t=0
    assert np.all(np.diff(short_run.field.phidot) <= 1e-15)
    assert short_run.field.phidot[-1] < 0
    assert math.isfinite(short_run.field.tau[-1])
