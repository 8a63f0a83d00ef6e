"""Implicit time stepping for the time-fractional Allen-Cahn equation.

The field phi on a periodic grid evolves by

    (d^alpha_t phi)(t_{n-theta}) = -f(phi)^{n-theta} + eps^2 Lap phi^{n-theta},

with f(phi) = phi^3 - phi and the theta-weighted averages
w^{n-theta} = theta w^{n-1} + (1-theta) w^n, theta = alpha/2.  The
fractional derivative uses the split form from kernels.py, so each step
solves a nonlinear equation in phi^n with all history frozen.  A plain
fixed-point iteration lags the cubic term; each sweep inverts the
constant-coefficient operator (D I - (1-theta) eps^2 Lap) by conjugate
gradients (symmetric positive definite, so convergence is guaranteed).

Below the step-size cap the discrete maximum bound |phi| <= 1 is
inherited from the initial data; the stepper never clips, it audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyRecord, dissipation_lhs, free_energy, modified_energy
from .grid import Grid2D, grid_sum, laplacian, norm_inf
from .kernels import (
    KernelSet,
    as_order,
    build_kernels,
    history_sum,
    local_coefficient,
    min_step_ratio,
)
from .mesh import AdaptiveConfig, TimeMesh, adaptive_next_step
from .special import omega


class ConvergenceError(RuntimeError):
    """Fixed-point or linear solve failed to reach its tolerance."""


class BoundViolation(RuntimeError):
    """Computed field left [-1, 1] although the hypotheses guarantee it."""


@dataclass(frozen=True)
class ManufacturedForcing:
    """Source term that makes omega_{1+sigma}(t) sin(x) sin(y) the exact solution.

    The power factor has Caputo derivative omega_{1+sigma-alpha}(t) and the
    profile is a Laplacian eigenfunction (eigenvalue -2), so the force is
    assembled from the same closed forms the error is measured against.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise ValueError(f"solution regularity exponent must be positive, got {self.sigma}")

    def profile(self, grid: Grid2D) -> np.ndarray:
        return grid.field_from_function(lambda x, y: np.sin(x) * np.sin(y))

    def exact(self, t: float, grid: Grid2D) -> np.ndarray:
        factor = float(omega(1.0 + self.sigma, t)) if t > 0.0 else 0.0
        return factor * self.profile(grid)

    def force(self, t: float, grid: Grid2D, order, epsilon: float) -> np.ndarray:
        alpha = as_order(order).alpha
        S = self.profile(grid)
        phi = (float(omega(1.0 + self.sigma, t)) if t > 0.0 else 0.0) * S
        dphi = float(omega(1.0 + self.sigma - alpha, t)) * S
        return dphi + (phi**3 - phi) + 2.0 * epsilon**2 * phi


@dataclass(frozen=True)
class SolverConfig:
    """Problem data and iteration tolerances for one run."""

    alpha: float
    epsilon: float
    grid: Grid2D
    forcing: ManufacturedForcing | None = None
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 200
    linear_tol: float = 1e-13
    linear_max_iter: int = 4000
    enforce_bound: bool = False
    bound_tol: float = 1e-10

    def __post_init__(self):
        as_order(self.alpha)  # validates the range
        if self.epsilon <= 0.0:
            raise ValueError(f"interface width must be positive, got {self.epsilon}")


def step_size_cap(alpha: float, h: float, epsilon: float) -> float:
    """Largest step for which solvability, the maximum bound, and the energy law hold.

    min of a reaction bound (theta * omega_{2-alpha}(1-theta) / (2(1-theta)))^(1/alpha)
    and a diffusion bound (h^2 omega_{2-alpha}(1-theta) / (4 eps^2))^(1/alpha);
    tends to min(1/2, h^2/(4 eps^2)) as alpha -> 1.
    """
    order = as_order(alpha)
    theta = order.theta
    w = float(omega(2.0 - order.alpha, 1.0 - theta))
    reaction = (theta * w / (2.0 * (1.0 - theta))) ** (1.0 / order.alpha)
    diffusion = (h * h * w / (4.0 * epsilon**2)) ** (1.0 / order.alpha)
    return min(reaction, diffusion)


def _dot(u: np.ndarray, v: np.ndarray) -> float:
    return grid_sum(u * v)


def _solve_shifted_poisson(
    c: float, nu: float, rhs: np.ndarray, grid: Grid2D, tol: float, max_iter: int, x0: np.ndarray
) -> np.ndarray:
    """Conjugate gradients for (c I - nu Lap) x = rhs with diagonal preconditioning.

    c > 0 and nu >= 0 make the periodic operator symmetric positive
    definite.  The diagonal is the constant c + 4 nu / h^2.
    """
    diag = c + 4.0 * nu / grid.h**2

    def apply(x):
        return c * x - nu * laplacian(x, grid)

    x = x0.copy()
    r = rhs - apply(x)
    target = tol * max(math.sqrt(_dot(rhs, rhs)), 1e-300)
    if math.sqrt(_dot(r, r)) <= target:
        return x
    z = r / diag
    p = z.copy()
    rz = _dot(r, z)
    for _ in range(max_iter):
        Ap = apply(p)
        denom = _dot(p, Ap)
        a = rz / denom
        x = x + a * p
        r = r - a * Ap
        if math.sqrt(_dot(r, r)) <= target:
            return x
        z = r / diag
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"linear solve stalled: residual {math.sqrt(_dot(r, r)):.3e} after {max_iter} iterations"
    )


def _reaction(phi: np.ndarray) -> np.ndarray:
    return phi**3 - phi


def step(fields, mesh: TimeMesh, kernels: KernelSet, cfg: SolverConfig):
    """Advance one level: fields holds phi^0..phi^{n-1}, returns (phi^n, sweeps).

    Fixed-point sweeps lag the reaction term; all history contributions
    are frozen.  Convergence is measured by the max-norm change between
    sweeps against cfg.fixed_point_tol.
    """
    order = as_order(cfg.alpha)
    n = kernels.n
    assert len(fields) == n, f"need {n} history fields, got {len(fields)}"
    theta = order.theta
    tau_n = mesh.step(n)
    grid = cfg.grid
    eps2 = cfg.epsilon**2

    if cfg.enforce_bound:
        cap = step_size_cap(order.alpha, grid.h, cfg.epsilon)
        if tau_n > cap * (1.0 + 1e-9):
            raise ValueError(
                f"step {n}: tau = {tau_n:.6e} exceeds the cap {cap:.6e} while the bound is enforced"
            )

    prev = fields[-1]
    D = local_coefficient(order, kernels) + kernels.hat_a[0]
    if n >= 2:
        weights = kernels.hat_a[1:n][::-1]          # ascending k = 1..n-1
        diffs = [fields[k] - fields[k - 1] for k in range(1, n)]
        hist = history_sum(weights, diffs)
    else:
        hist = np.zeros_like(prev)

    rhs_fixed = D * prev - hist - theta * _reaction(prev) + theta * eps2 * laplacian(prev, grid)
    if cfg.forcing is not None:
        t_off = mesh.offset_node(n, theta)
        rhs_fixed = rhs_fixed + cfg.forcing.force(t_off, grid, order, cfg.epsilon)

    nu = (1.0 - theta) * eps2
    psi = prev.copy()
    for sweep in range(1, cfg.fixed_point_max_iter + 1):
        rhs = rhs_fixed - (1.0 - theta) * _reaction(psi)
        psi_new = _solve_shifted_poisson(
            D, nu, rhs, grid, cfg.linear_tol, cfg.linear_max_iter, psi
        )
        change = norm_inf(psi_new - psi)
        psi = psi_new
        if change <= cfg.fixed_point_tol:
            break
    else:
        raise ConvergenceError(
            f"step {n}: fixed point stalled at change {change:.3e} "
            f"after {cfg.fixed_point_max_iter} sweeps"
        )
    if not np.all(np.isfinite(psi)):
        raise ConvergenceError(f"step {n}: non-finite values in the field")
    if cfg.enforce_bound and norm_inf(psi) > 1.0 + cfg.bound_tol:
        raise BoundViolation(
            f"step {n}: max norm {norm_inf(psi):.15f} exceeds 1 + {cfg.bound_tol:.1e}"
        )
    return psi, sweep


def crank_nicolson_step(prev: np.ndarray, tau: float, cfg: SolverConfig, t_prev: float = 0.0):
    """Reference half-offset step of the integer-order equation, same machinery.

    Solves (phi - prev)/tau = -(f(prev) + f(phi))/2 + eps^2 Lap (prev + phi)/2,
    with the optional force evaluated at the interval midpoint.
    """
    grid = cfg.grid
    eps2 = cfg.epsilon**2
    c = 1.0 / tau
    rhs_fixed = c * prev - 0.5 * _reaction(prev) + 0.5 * eps2 * laplacian(prev, grid)
    if cfg.forcing is not None:
        rhs_fixed = rhs_fixed + cfg.forcing.force(t_prev + 0.5 * tau, grid, cfg.alpha, cfg.epsilon)
    psi = prev.copy()
    for sweep in range(1, cfg.fixed_point_max_iter + 1):
        rhs = rhs_fixed - 0.5 * _reaction(psi)
        psi_new = _solve_shifted_poisson(
            c, 0.5 * eps2, rhs, grid, cfg.linear_tol, cfg.linear_max_iter, psi
        )
        change = norm_inf(psi_new - psi)
        psi = psi_new
        if change <= cfg.fixed_point_tol:
            break
    else:
        raise ConvergenceError(f"reference step stalled at change {change:.3e}")
    return psi, sweep


@dataclass(frozen=True)
class AdaptiveSchedule:
    """Graded warm-up mesh followed by controller-driven steps until the horizon."""

    warmup: TimeMesh
    controller: AdaptiveConfig
    horizon: float

    def __post_init__(self):
        if self.warmup.horizon >= self.horizon:
            raise ValueError(
                f"warm-up already reaches t = {self.warmup.horizon}, horizon is {self.horizon}"
            )


@dataclass
class SolveTrajectory:
    """Everything a run produced: mesh as built, fields, norms, energies, flags."""

    mesh: TimeMesh
    fields: list
    snapshots: dict
    sup_norms: np.ndarray
    fp_iters: np.ndarray
    energy: list | None
    cap: float
    cap_ok: np.ndarray
    ratio_ok: np.ndarray
    notes: list

    @property
    def num_steps(self) -> int:
        return self.mesh.num_steps


def run(
    cfg: SolverConfig,
    schedule,
    phi0: np.ndarray,
    record_energy: bool = True,
    snapshot_times=(),
    keep_fields: bool = True,
) -> SolveTrajectory:
    """Integrate from phi0 over a fixed TimeMesh or an AdaptiveSchedule.

    Energy records (free and kernel-modified, with the per-step
    dissipation residual) are optional but cheap relative to the history
    sums.  Snapshot times are matched to the first node at or past each
    requested time.
    """
    order = as_order(cfg.alpha)
    grid = cfg.grid
    phi0 = np.asarray(phi0, dtype=float)
    assert phi0.shape == (grid.M, grid.M), "initial data must match the grid"
    cap = step_size_cap(order.alpha, grid.h, cfg.epsilon)
    r_floor = min_step_ratio(order.alpha)

    adaptive = isinstance(schedule, AdaptiveSchedule)
    if adaptive:
        nodes = list(schedule.warmup.nodes)
        horizon = schedule.horizon
    else:
        nodes = list(np.asarray(schedule.nodes))
        horizon = nodes[-1]

    fields = [phi0.copy()]
    sup_norms = [norm_inf(phi0)]
    fp_iters = []
    cap_ok = []
    ratio_ok = []
    notes = []
    records = [modified_energy(fields, None, cfg.epsilon, grid)] if record_energy else None
    pending_snaps = sorted(set(snapshot_times))
    snapshots = {}
    if pending_snaps and pending_snaps[0] <= 1e-12:
        snapshots[pending_snaps.pop(0)] = phi0.copy()

    n = 0
    change_norm = 0.0
    while True:
        if n >= len(nodes) - 1:
            if not adaptive or nodes[-1] >= horizon - 1e-12 * max(1.0, horizon):
                break
            tau_next = adaptive_next_step(nodes[-1] - nodes[-2], change_norm, schedule.controller)
            if nodes[-1] + tau_next > horizon:
                tau_next = horizon - nodes[-1]
                if tau_next < schedule.controller.r_floor * (nodes[-1] - nodes[-2]):
                    notes.append((n + 1, "final step clipped below the ratio floor"))
            nodes.append(nodes[-1] + tau_next)
        n += 1
        mesh_n = TimeMesh(np.asarray(nodes[: n + 1]))
        kernels = build_kernels(mesh_n, order, n)
        phi, sweeps = step(fields, mesh_n, kernels, cfg)
        fields.append(phi)
        sup_norms.append(norm_inf(phi))
        fp_iters.append(sweeps)
        tau_n = mesh_n.step(n)
        cap_ok.append(tau_n <= cap * (1.0 + 1e-12))
        ratio_ok.append(n == 1 or mesh_n.ratio(n) >= r_floor * (1.0 - 1e-12))
        step_sq = grid.h**2 * grid_sum((phi - fields[n - 1]) ** 2)
        change_norm = math.sqrt(step_sq) / tau_n
        if record_energy:
            rec = modified_energy(fields, kernels, cfg.epsilon, grid)
            lhs = dissipation_lhs(records[-1], rec, order, kernels.a[0], tau_n, step_sq)
            records.append(EnergyRecord(rec.n, rec.E, rec.G_term, rec.E_alpha, lhs))
        while pending_snaps and nodes[n] >= pending_snaps[0] - 1e-12:
            snapshots[pending_snaps.pop(0)] = phi.copy()

    mesh = TimeMesh(np.asarray(nodes))
    return SolveTrajectory(
        mesh=mesh,
        fields=fields if keep_fields else [],
        snapshots=snapshots,
        sup_norms=np.asarray(sup_norms),
        fp_iters=np.asarray(fp_iters, dtype=int),
        energy=records,
        cap=cap,
        cap_ok=np.asarray(cap_ok, dtype=bool),
        ratio_ok=np.asarray(ratio_ok, dtype=bool),
        notes=notes,
    )
