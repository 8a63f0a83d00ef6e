"""Experiment drivers behind the CLI: accuracy study, coarsening study,
kernel certification, and the step-ratio root table.

Each driver is a plain function from a parameter dataclass to an in-memory
result; file emission (CSV, PGM, raw fields) is separated so tests can
inspect results without touching the filesystem.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .audits import audit_kernel_properties
from .grid import Grid2D, grid_sum, save_pgm, save_raw
from .kernels import (
    as_order,
    build_kernels,
    dgs_forms,
    frac_derivative,
    min_step_ratio,
    _ratio_equation,
)
from .energy import write_energy_csv
from .mesh import (
    AdaptiveConfig,
    TimeMesh,
    build_graded_mesh,
    build_two_phase_mesh,
    random_ratio_mesh,
)
from .solver import (
    AdaptiveSchedule,
    ManufacturedForcing,
    SolveTrajectory,
    SolverConfig,
    run,
    step_size_cap,
)


def fit_order(Ns, errors):
    """Least-squares slope of log error against log N, with the fit residual.

    Returns (order, residual) where order = -slope; residual is the rms
    misfit of the line in log space.
    """
    x = np.log(np.asarray(Ns, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if len(x) < 2:
        raise ValueError("order fit needs at least two mesh levels")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(-coef[0]), math.sqrt(float(np.mean(resid**2)))


# -- accuracy study ----------------------------------------------------------


@dataclass(frozen=True)
class AccuracySpec:
    alpha: float
    sigma: float
    gammas: tuple
    Ns: tuple
    M: int = 64
    eps2: float = 0.1
    T: float = 1.0
    seed: int = 0
    spatial_check: bool = True


@dataclass
class AccuracyRow:
    gamma: float
    N: int
    error: float
    fitted_order: float


@dataclass
class AccuracyTable:
    rows: list
    orders: dict                    # gamma -> (order, fit residual)
    spatial_estimate: float | None  # |e_M - e_2M| at the sharpest table entry
    spatial_ok: bool | None
    failures: list                  # (gamma, N, message) for aborted rows


def _solution_error(cfg: SolverConfig, forcing: ManufacturedForcing, mesh: TimeMesh) -> float:
    """max_n of the discrete L2 error against the manufactured solution."""
    grid = cfg.grid
    traj = run(cfg, mesh, forcing.exact(0.0, grid), record_energy=False)
    worst = 0.0
    for n in range(1, mesh.num_steps + 1):
        diff = traj.fields[n] - forcing.exact(float(mesh.nodes[n]), grid)
        worst = max(worst, math.sqrt(grid.h**2 * grid_sum(diff * diff)))
    return worst


def accuracy_table(spec: AccuracySpec) -> AccuracyTable:
    """Manufactured-solution error table over (gamma, N) on two-phase meshes.

    A failed run aborts its row, not the table.  When spatial_check is on,
    the sharpest (gamma, N) entry is recomputed on a doubled grid; the
    difference estimates the spatial floor, reported against 10% of the
    smallest tabulated error.
    """
    forcing = ManufacturedForcing(sigma=spec.sigma)
    epsilon = math.sqrt(spec.eps2)

    def one(gamma, N, M):
        grid = Grid2D(M=M, L=2.0 * np.pi)
        cfg = SolverConfig(alpha=spec.alpha, epsilon=epsilon, grid=grid, forcing=forcing)
        mesh = build_two_phase_mesh(spec.T, gamma, N, spec.seed)
        return _solution_error(cfg, forcing, mesh)

    rows, orders, failures = [], {}, []
    for gamma in spec.gammas:
        errs, Ns_done = [], []
        for N in spec.Ns:
            try:
                errs.append(one(gamma, N, spec.M))
                Ns_done.append(N)
            except Exception as exc:  # a bad row must not sink the table
                failures.append((gamma, N, f"{type(exc).__name__}: {exc}"))
        if len(Ns_done) >= 2:
            order, resid = fit_order(Ns_done, errs)
        else:
            order, resid = math.nan, math.nan
        orders[gamma] = (order, resid)
        for N, e in zip(Ns_done, errs):
            rows.append(AccuracyRow(gamma=gamma, N=N, error=e, fitted_order=order))

    spatial_estimate = spatial_ok = None
    if spec.spatial_check and rows:
        best = min(rows, key=lambda r: r.error)
        fine = one(best.gamma, best.N, 2 * spec.M)
        spatial_estimate = abs(best.error - fine)
        spatial_ok = spatial_estimate < 0.1 * best.error
    return AccuracyTable(rows, orders, spatial_estimate, spatial_ok, failures)


def write_accuracy_csv(path, table: AccuracyTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma", "N", "error", "fitted_order"])
        for r in table.rows:
            w.writerow([f"{r.gamma:.6g}", r.N, f"{r.error:.16e}", f"{r.fitted_order:.6f}"])


# -- coarsening study --------------------------------------------------------


@dataclass(frozen=True)
class CoarsenSpec:
    alpha: float
    T: float = 50.0
    M: int = 128
    epsilon: float = 0.05
    init_amplitude: float = 1e-3
    tau_min: float = 1e-3
    tau_max: float = 0.1
    eta: float = 1e3
    warmup_T0: float = 0.01
    warmup_N0: int = 30
    warmup_gamma: float = 3.0
    enforce_cap: bool = False     # strict mode: cap clips steps and bound is enforced
    snapshot_times: tuple = (1.0, 10.0, 30.0, 50.0)
    seed: int = 0

    def quick(self) -> "CoarsenSpec":
        """CI profile: short horizon, coarse grid, strict hypotheses."""
        return replace(self, T=5.0, M=64, enforce_cap=True,
                       snapshot_times=tuple(t for t in self.snapshot_times if t <= 5.0))


def random_initial_field(grid: Grid2D, amplitude: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return amplitude * (2.0 * rng.random((grid.M, grid.M)) - 1.0)


def run_coarsening(spec: CoarsenSpec) -> tuple:
    """Random-data coarsening run: graded warm-up, then adaptive stepping.

    Returns (trajectory, config).  In strict mode the theoretical step cap
    is applied inside the controller and the maximum bound is enforced;
    otherwise both are recorded as per-step audit flags only.
    """
    grid = Grid2D(M=spec.M, L=2.0 * np.pi)
    cfg = SolverConfig(
        alpha=spec.alpha,
        epsilon=spec.epsilon,
        grid=grid,
        enforce_bound=spec.enforce_cap,
    )
    cap = step_size_cap(spec.alpha, grid.h, spec.epsilon)
    controller = AdaptiveConfig(
        tau_min=min(spec.tau_min, cap) if spec.enforce_cap else spec.tau_min,
        tau_max=spec.tau_max,
        eta=spec.eta,
        r_floor=min_step_ratio(spec.alpha),
        physical_cap=cap if spec.enforce_cap else None,
    )
    warmup = build_graded_mesh(spec.warmup_T0, spec.warmup_N0, spec.warmup_gamma)
    schedule = AdaptiveSchedule(warmup=warmup, controller=controller, horizon=spec.T)
    phi0 = random_initial_field(grid, spec.init_amplitude, spec.seed)
    snaps = tuple(t for t in spec.snapshot_times if t <= spec.T)
    traj = run(cfg, schedule, phi0, record_energy=True, snapshot_times=snaps)
    return traj, cfg


def write_coarsening_outputs(outdir, spec: CoarsenSpec, traj: SolveTrajectory) -> list:
    """Emit energy CSV, step CSV, and snapshot images; returns the paths."""
    import os

    grid = Grid2D(M=spec.M, L=2.0 * np.pi)
    paths = []
    energy_path = os.path.join(outdir, "energy.csv")
    write_energy_csv(energy_path, traj.mesh, traj.energy, traj.sup_norms, traj.fp_iters)
    paths.append(energy_path)
    mesh_path = os.path.join(outdir, "mesh.csv")
    traj.mesh.to_csv(mesh_path)
    paths.append(mesh_path)
    for t_snap, field_ in sorted(traj.snapshots.items()):
        stem = os.path.join(outdir, f"snapshot_t{t_snap:g}")
        save_pgm(stem + ".pgm", field_)
        save_raw(stem + ".raw", field_, grid)
        paths.extend([stem + ".pgm", stem + ".raw"])
    return paths


# -- kernel certification ----------------------------------------------------


@dataclass(frozen=True)
class KernelAuditSpec:
    alphas: tuple = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    num_meshes: int = 100
    n_max: int = 20
    dgs_histories: int = 50
    seed: int = 0


@dataclass
class KernelAuditResult:
    reports: list              # (alpha, mesh index, AuditReport)
    total_checks: int
    violations: list           # (alpha, mesh index, AuditEntry)
    dgs_residual: float        # worst relative DGS identity residual
    dgs_min_G: float
    dgs_min_R: float


def run_kernel_audit(spec: KernelAuditSpec) -> KernelAuditResult:
    """Fuzz admissible meshes, audit every kernel inequality, and check the
    gradient-structure identity on random histories."""
    rng = np.random.default_rng(spec.seed)
    reports, violations, total = [], [], 0
    for alpha in spec.alphas:
        order = as_order(alpha)
        r_star = min_step_ratio(alpha)
        for m in range(spec.num_meshes):
            mesh = random_ratio_mesh(rng, spec.n_max, r_star)
            report = audit_kernel_properties(mesh, order, spec.n_max, r_min=r_star)
            total += len(report.entries)
            for bad in report.violations():
                violations.append((alpha, m, bad))
            reports.append((alpha, m, report))

    worst = 0.0
    min_G = min_R = math.inf
    for _ in range(spec.dgs_histories):
        alpha = float(rng.uniform(0.05, 0.95))
        order = as_order(alpha)
        n = int(rng.integers(2, 11))
        mesh = random_ratio_mesh(rng, n, min_step_ratio(alpha))
        diffs = rng.standard_normal(n)
        kern_prev = build_kernels(mesh, order, n - 1) if n >= 2 else None
        kern_curr = build_kernels(mesh, order, n)
        history = np.concatenate([[0.0], np.cumsum(diffs)])
        deriv = frac_derivative(history, kern_curr, order)
        G_n, G_prev, R_n = dgs_forms(kern_prev, kern_curr, diffs)
        a0 = kern_curr.a[0]
        lhs = 2.0 * diffs[-1] * deriv
        rhs = G_n - G_prev + R_n + (2.0 * order.alpha / (2.0 - order.alpha)) * a0 * diffs[-1] ** 2
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
        min_G = min(min_G, G_n, G_prev)
        min_R = min(min_R, R_n)
    return KernelAuditResult(reports, total, violations, worst, min_G, min_R)


def write_kernel_audit_csv(path, result: KernelAuditResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "mesh", "n", "property", "k", "lhs", "rhs", "slack"])
        for alpha, m, report in result.reports:
            for e in report.entries:
                w.writerow([alpha, m, e.n, e.prop, e.k,
                            f"{e.lhs:.16e}", f"{e.rhs:.16e}", f"{e.slack:.6e}"])


# -- step-ratio root table ---------------------------------------------------


@dataclass
class RstarRow:
    alpha: float
    r_star: float
    residual: float


def rstar_table(alphas) -> list:
    """r*(alpha) rows with the defining-equation residual; monotone in alpha."""
    rows = []
    for alpha in alphas:
        r = min_step_ratio(alpha)
        rows.append(RstarRow(alpha=alpha, r_star=r, residual=abs(_ratio_equation(r, alpha))))
    values = [row.r_star for row in rows]
    order = np.argsort([row.alpha for row in rows])
    sorted_vals = [values[i] for i in order]
    if any(b <= a for a, b in zip(sorted_vals, sorted_vals[1:])):
        raise AssertionError("step-ratio root table is not strictly increasing in alpha")
    return rows


def write_rstar_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "r_star", "residual"])
        for row in rows:
            w.writerow([f"{row.alpha:.6g}", f"{row.r_star:.12f}", f"{row.residual:.3e}"])
