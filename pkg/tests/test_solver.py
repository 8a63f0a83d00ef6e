"""Implicit stepper: cap, bound enforcement, steady states, trajectories."""

import math

import numpy as np
import pytest

from fracstep.grid import Grid2D, laplacian, norm_inf
from fracstep.kernels import build_kernels
from fracstep.mesh import AdaptiveConfig, TimeMesh, build_graded_mesh, build_uniform_mesh
from fracstep.solver import (
    AdaptiveSchedule,
    BoundViolation,
    ConvergenceError,
    ManufacturedForcing,
    SolverConfig,
    _solve_shifted_poisson,
    crank_nicolson_step,
    run,
    step,
    step_size_cap,
)

TWO_PI = 2.0 * math.pi


def _grid(M=8):
    return Grid2D(M=M, L=TWO_PI)


def _cfg(alpha=0.5, epsilon=0.5, M=8, **kw):
    return SolverConfig(alpha=alpha, epsilon=epsilon, grid=_grid(M), **kw)


def test_forcing_validation():
    with pytest.raises(ValueError):
        ManufacturedForcing(sigma=0.0)
    with pytest.raises(ValueError):
        ManufacturedForcing(sigma=-1.0)


def test_forcing_exact_profile():
    g = _grid(16)
    f = ManufacturedForcing(sigma=0.5)
    assert np.array_equal(f.exact(0.0, g), np.zeros((16, 16)))
    from fracstep.special import omega

    got = f.exact(0.7, g)
    want = float(omega(1.5, 0.7)) * g.field_from_function(lambda x, y: np.sin(x) * np.sin(y))
    assert np.allclose(got, want, rtol=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(alpha=1.0)
    with pytest.raises(ValueError):
        _cfg(epsilon=0.0)


def test_step_size_cap_frozen_reaction_branch():
    # alpha = 1/2 with the diffusion branch slack: the reaction bound
    # (theta omega_{3/2}(3/4) / (2(1-theta)))^2
    assert step_size_cap(0.5, TWO_PI / 8, 0.5) == pytest.approx(
        0.02652582384864922, rel=1e-14
    )
    # same value when epsilon shrinks: reaction branch still governs
    assert step_size_cap(0.5, TWO_PI / 8, 0.05) == pytest.approx(
        0.02652582384864922, rel=1e-14
    )


def test_step_size_cap_integer_order_limit():
    # alpha -> 1: min(1/2, h^2 / (4 eps^2))
    assert step_size_cap(1.0 - 1e-9, 0.1, 0.1) == pytest.approx(0.25, rel=1e-7)
    assert step_size_cap(1.0 - 1e-9, 1.0, 0.01) == pytest.approx(0.5, rel=1e-7)


def test_step_size_cap_diffusion_branch_scales_with_h():
    # once diffusion-limited, cap ~ h^(2/alpha)
    a, eps = 0.5, 0.5
    c1 = step_size_cap(a, 0.01, eps)
    c2 = step_size_cap(a, 0.02, eps)
    assert c2 / c1 == pytest.approx(2.0 ** (2.0 / a), rel=1e-12)


def test_linear_solver_recovers_known_field():
    rng = np.random.default_rng(0)
    g = _grid(16)
    x_true = rng.standard_normal((16, 16))
    c, nu = 2.0, 0.3
    rhs = c * x_true - nu * laplacian(x_true, g)
    x = _solve_shifted_poisson(c, nu, rhs, g, tol=1e-13, max_iter=2000, x0=np.zeros_like(rhs))
    assert norm_inf(x - x_true) < 1e-10


def test_linear_solver_stall_raises():
    rng = np.random.default_rng(6)
    g = _grid(8)
    rhs = rng.standard_normal((8, 8))
    with pytest.raises(ConvergenceError, match="linear solve"):
        _solve_shifted_poisson(1.0, 1.0, rhs, g, tol=1e-13, max_iter=1, x0=np.zeros_like(rhs))


@pytest.mark.parametrize("value", [-1.0, 0.0, 1.0])
def test_steady_states_preserved(value):
    # the three zeros of phi^3 - phi are discrete fixed points
    cfg = _cfg()
    mesh = build_uniform_mesh(0.1, 5)
    traj = run(cfg, mesh, np.full((8, 8), value))
    for phi in traj.fields:
        assert norm_inf(phi - value) < 1e-12


def test_maximum_bound_random_data():
    rng = np.random.default_rng(42)
    cfg = _cfg(enforce_bound=True)
    phi0 = rng.uniform(-0.95, 0.95, (8, 8))
    mesh = build_uniform_mesh(0.2, 10)  # tau = 0.02 < cap 0.0265
    traj = run(cfg, mesh, phi0)
    assert np.all(traj.sup_norms <= 1.0 + 1e-10)
    assert np.all(traj.cap_ok)
    assert np.all(traj.ratio_ok)
    # unforced flow dissipates the modified energy
    e_alpha = [rec.E_alpha for rec in traj.energy]
    assert all(b <= a + 1e-10 for a, b in zip(e_alpha, e_alpha[1:]))


def test_step_rejects_over_cap_when_enforcing():
    cfg = _cfg(enforce_bound=True)
    mesh = build_uniform_mesh(0.5, 10)  # tau = 0.05 > cap
    kern = build_kernels(mesh, cfg.alpha, 1)
    with pytest.raises(ValueError, match="cap"):
        step([np.zeros((8, 8))], mesh, kern, cfg)


def test_bound_violation_detected():
    cfg = _cfg(enforce_bound=True)
    mesh = build_uniform_mesh(0.2, 10)
    with pytest.raises(BoundViolation):
        run(cfg, mesh, np.full((8, 8), 1.5))


def test_fixed_point_stall_raises():
    rng = np.random.default_rng(1)
    cfg = _cfg(fixed_point_max_iter=1)
    mesh = build_uniform_mesh(0.2, 10)
    kern = build_kernels(mesh, cfg.alpha, 1)
    with pytest.raises(ConvergenceError, match="fixed point"):
        step([rng.uniform(-0.9, 0.9, (8, 8))], mesh, kern, cfg)


def test_crank_nicolson_implicit_relation():
    # the computed level satisfies the trapezoidal relation to solver accuracy
    rng = np.random.default_rng(3)
    g = _grid(16)
    cfg = SolverConfig(alpha=0.9, epsilon=0.3, grid=g)
    prev = 0.5 * rng.uniform(-1.0, 1.0, (16, 16))
    tau = 0.05
    phi, sweeps = crank_nicolson_step(prev, tau, cfg)
    res = (
        (phi - prev) / tau
        + 0.5 * ((prev**3 - prev) + (phi**3 - phi))
        - 0.5 * cfg.epsilon**2 * laplacian(prev + phi, g)
    )
    assert norm_inf(res) < 1e-10
    assert sweeps >= 2


def test_run_matches_manual_stepping():
    rng = np.random.default_rng(9)
    cfg = _cfg()
    mesh = build_uniform_mesh(0.06, 3)
    phi0 = rng.uniform(-0.5, 0.5, (8, 8))
    traj = run(cfg, mesh, phi0, record_energy=False)

    fields = [phi0.copy()]
    for n in range(1, 4):
        sub = TimeMesh(np.asarray(mesh.nodes[: n + 1]))
        kern = build_kernels(sub, cfg.alpha, n)
        phi, _ = step(fields, sub, kern, cfg)
        fields.append(phi)
    for a, b in zip(traj.fields, fields):
        assert np.array_equal(a, b)


def test_run_deterministic():
    rng = np.random.default_rng(10)
    phi0 = rng.uniform(-0.5, 0.5, (8, 8))
    cfg = _cfg()
    mesh = build_graded_mesh(0.02, 6, 2.0)
    t1 = run(cfg, mesh, phi0)
    t2 = run(cfg, mesh, phi0)
    assert np.array_equal(t1.fields[-1], t2.fields[-1])
    assert [r.E_alpha for r in t1.energy] == [r.E_alpha for r in t2.energy]


def test_manufactured_solution_tracked():
    g = Grid2D(M=16, L=TWO_PI)
    f = ManufacturedForcing(sigma=2.0)
    cfg = SolverConfig(alpha=0.5, epsilon=math.sqrt(0.1), grid=g, forcing=f)
    mesh = build_uniform_mesh(1.0, 10)
    traj = run(cfg, mesh, f.exact(0.0, g), record_energy=False)
    errs = [norm_inf(traj.fields[n] - f.exact(t, g)) for n, t in enumerate(mesh.nodes)]
    assert max(errs) < 5e-3


def test_snapshots_at_nodes():
    cfg = _cfg()
    mesh = build_uniform_mesh(1.0, 4)
    phi0 = np.full((8, 8), 0.3)
    traj = run(cfg, mesh, phi0, snapshot_times=(0.0, 0.5, 1.0))
    assert sorted(traj.snapshots) == [0.0, 0.5, 1.0]
    assert np.array_equal(traj.snapshots[0.0], phi0)
    assert np.array_equal(traj.snapshots[0.5], traj.fields[2])
    assert np.array_equal(traj.snapshots[1.0], traj.fields[4])


def test_keep_fields_false_drops_history():
    cfg = _cfg()
    mesh = build_uniform_mesh(0.1, 5)
    traj = run(cfg, mesh, np.zeros((8, 8)), keep_fields=False)
    assert traj.fields == []
    assert traj.sup_norms.size == 6
    assert len(traj.energy) == 6


def test_adaptive_schedule_validation():
    warm = build_graded_mesh(1.0, 4, 2.0)
    ctrl = AdaptiveConfig(tau_min=1e-3, tau_max=0.1, eta=1e3, r_floor=0.39)
    with pytest.raises(ValueError):
        AdaptiveSchedule(warmup=warm, controller=ctrl, horizon=0.5)


def test_adaptive_run_reaches_horizon_and_notes_clip():
    # quiescent data: the controller proposes tau_max each step, the last
    # step is clipped to land on the horizon and breaks the ratio floor
    cfg = _cfg()
    warm = build_graded_mesh(0.01, 2, 1.0)
    ctrl = AdaptiveConfig(tau_min=1e-3, tau_max=0.04, eta=1e3, r_floor=0.39)
    sched = AdaptiveSchedule(warmup=warm, controller=ctrl, horizon=0.1)
    traj = run(cfg, sched, np.zeros((8, 8)))
    assert traj.mesh.horizon == pytest.approx(0.1, abs=1e-14)
    assert traj.mesh.step(traj.num_steps) == pytest.approx(0.01, abs=1e-12)
    assert any("clipped" in text for _, text in traj.notes)
    assert not traj.ratio_ok[-1]
    assert traj.cap_ok.size == traj.num_steps == traj.fp_iters.size


def test_adaptive_run_respects_controller_cap():
    cfg = _cfg(epsilon=0.05)  # large solver cap, controller cap binds
    warm = build_graded_mesh(0.01, 2, 1.0)
    ctrl = AdaptiveConfig(tau_min=1e-3, tau_max=0.1, eta=1e3, r_floor=0.39, physical_cap=0.02)
    sched = AdaptiveSchedule(warmup=warm, controller=ctrl, horizon=0.2)
    traj = run(cfg, sched, np.zeros((8, 8)))
    post_warm = np.asarray(traj.mesh.steps)[2:]
    assert np.all(post_warm <= 0.02 * (1.0 + 1e-12))
