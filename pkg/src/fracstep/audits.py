"""Inequality certificates for the split derivative kernels.

The energy analysis of the scheme rests on sign and monotonicity
properties of the gradient-structure kernels aux_a, of the moment weights
zeta, and of two endpoint-weighted curvature integrals per interval.  The
audit recomputes every inequality numerically on a given mesh and reports
the raw slack (positive means satisfied), so hypothesis violations are
observable instead of silent.

Checked per level n (prev = level n-1 kernels, A = aux_a, Z = zeta):
  kernel_decreasing        A[m-1] > A[m] > 0
  kernel_level_decay       A_prev[n-1-k] > A[n-k]
  kernel_diff_decay        A_prev gaps dominate A gaps, offset by one
  moment_level_decay       Z[n-k] < Z_prev[n-1-k]
  moment_ratio_gap         Z[n-k-1] > r_{k+1} Z[n-k]
  moment_ratio_gap_decay   the same gap grows when moving to level n-1
  left_curvature_gap       I[n-k] > (1 + beta_{k+1}) Z[n-k]
  left_curvature_gap_decay the same gap grows at level n-1
  right_curvature_gap      J[n-k] > 3 Z[n-k]
  right_curvature_gap_decay the same gap grows at level n-1
  head_moment_bound        r_n Z[1] < alpha/(3(2-alpha)) * weight(t_{n-1})

I and J are the curvature integrals weighted toward the left/right
endpoint of each interval.  Inside the audit they are obtained from the
exact identities I = a - w'(t_{k-1}) and J = w'(t_k) - a; the diagnostics
routine recomputes them by adaptive quadrature so the identities
themselves can be cross-checked.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .kernels import FracOrder, KernelSet, as_order, build_kernels
from .mesh import TimeMesh
from .special import omega
from . import quadrature


@dataclass(frozen=True)
class AuditEntry:
    n: int
    prop: str
    k: int
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


@dataclass
class AuditReport:
    """All audit rows for one mesh, plus the violations under a round-off floor."""

    r_min: float
    entries: list = field(default_factory=list)

    def add(self, n: int, prop: str, k: int, lhs: float, rhs: float) -> None:
        self.entries.append(AuditEntry(n, prop, k, lhs, rhs))

    def violations(self, floor: float = 1e-13):
        """Entries whose slack is negative beyond round-off at their scale."""
        out = []
        for e in self.entries:
            tol = floor * max(1.0, abs(e.lhs), abs(e.rhs))
            if e.slack < -tol:
                out.append(e)
        return out

    def worst_slack(self):
        """Minimum slack per property, as {prop: (slack, n, k)}."""
        worst = {}
        for e in self.entries:
            cur = worst.get(e.prop)
            if cur is None or e.slack < cur[0]:
                worst[e.prop] = (e.slack, e.n, e.k)
        return worst

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "property", "k", "lhs", "rhs", "slack"])
            for e in self.entries:
                writer.writerow([e.n, e.prop, e.k, repr(e.lhs), repr(e.rhs), repr(e.slack)])


def beta_factors(mesh: TimeMesh, order, n: int) -> np.ndarray:
    """Comparison factors beta_k = 2(1-alpha/2) r_k / (1+alpha+(1-alpha/2) r_k).

    Returned as beta[k] for k = 2..n (entries 0..1 are nan placeholders).
    """
    alpha = as_order(order).alpha
    s = 1.0 - 0.5 * alpha
    beta = np.full(n + 1, np.nan)
    r = mesh.steps[1:n] / mesh.steps[: n - 1]
    beta[2:] = 2.0 * s * r / (1.0 + alpha + s * r)
    return beta


def _weight_at_nodes(mesh: TimeMesh, order: FracOrder, n: int) -> np.ndarray:
    """w'(t_j) = omega_{1-alpha}(t_{n-theta} - t_j) for j = 0..n-1."""
    t_off = mesh.nodes[n - 1] + (1.0 - order.theta) * mesh.steps[n - 1]
    d = t_off - mesh.nodes[:n]
    d[n - 1] = (1.0 - order.theta) * mesh.steps[n - 1]
    return omega(1.0 - order.alpha, d)


def endpoint_gaps(kernels: KernelSet, mesh: TimeMesh, order, n: int):
    """(I, J) by offset m = n-k for k = 1..n-1, from the interval-average identities.

    I[m] = a[m] - w'(t_{k-1}) and J[m] = w'(t_k) - a[m]; both are positive
    because the weight is convex.  Offset 0 is nan (the head interval has
    no integrable curvature).
    """
    order = as_order(order)
    wp = _weight_at_nodes(mesh, order, n)
    I = np.full(n, np.nan)
    J = np.full(n, np.nan)
    if n >= 2:
        ks = np.arange(1, n)
        ms = n - ks
        I[ms] = kernels.a[ms] - wp[ks - 1]
        J[ms] = wp[ks] - kernels.a[ms]
    return I, J


@dataclass(frozen=True)
class DiagnosticSet:
    """Quadrature-evaluated curvature integrals and comparison factors at level n.

    I and J are indexed by offset m = n-k (entry 0 nan), beta by step
    index k (entries 0..1 nan).  err holds the worst quadrature error
    estimate encountered.
    """

    n: int
    I: np.ndarray
    J: np.ndarray
    beta: np.ndarray
    err: float


def diagnostics(mesh: TimeMesh, order, n: int) -> DiagnosticSet:
    """Recompute I and J by adaptive quadrature of the weight curvature."""
    order = as_order(order)
    I = np.full(n, np.nan)
    J = np.full(n, np.nan)
    worst = 0.0
    for k in range(1, n):
        m = n - k
        I[m] = quadrature.endpoint_moment_quad(mesh, order, n, k, side="left")
        J[m] = quadrature.endpoint_moment_quad(mesh, order, n, k, side="right")
    return DiagnosticSet(n=n, I=I, J=J, beta=beta_factors(mesh, order, n), err=worst)


def audit_kernel_properties(mesh: TimeMesh, order, n_max: int, r_min: float | None = None) -> AuditReport:
    """Run every kernel inequality for levels 2..n_max and report slacks.

    The caller is responsible for the mesh hypothesis (ratios >= r_min);
    the report's r_min field records what was assumed.
    """
    order = as_order(order)
    alpha = order.alpha
    from .kernels import min_step_ratio

    if r_min is None:
        r_min = min_step_ratio(alpha)
    report = AuditReport(r_min=r_min)
    n_max = min(n_max, mesh.num_steps)
    prev = build_kernels(mesh, order, 1)
    prev_IJ = endpoint_gaps(prev, mesh, order, 1)
    for n in range(2, n_max + 1):
        ks = build_kernels(mesh, order, n)
        A, Ap = ks.aux_a, prev.aux_a
        Z, Zp = ks.zeta, prev.zeta
        beta = beta_factors(mesh, order, n)
        I, J = endpoint_gaps(ks, mesh, order, n)
        Ip, Jp = prev_IJ
        r = mesh.steps[1:n] / mesh.steps[: n - 1]   # r[j-2] = ratio at step j

        for k in range(1, n):                        # kernel_decreasing, positivity
            m = n - k
            report.add(n, "kernel_decreasing", k, float(A[m - 1]), float(A[m]))
            report.add(n, "kernel_positive", k, float(A[m]), 0.0)
        for k in range(1, n):                        # kernel_level_decay
            report.add(n, "kernel_level_decay", k, float(Ap[n - 1 - k]), float(A[n - k]))
        for k in range(1, n - 1):                    # kernel_diff_decay
            lhs = float(Ap[n - 2 - k] - Ap[n - 1 - k])
            rhs = float(A[n - k - 1] - A[n - k])
            report.add(n, "kernel_diff_decay", k, lhs, rhs)
        for k in range(1, n - 1):                    # moment_level_decay (flipped to >)
            report.add(n, "moment_level_decay", k, float(Zp[n - 1 - k]), float(Z[n - k]))
        for k in range(1, n - 1):                    # moment_ratio_gap
            report.add(n, "moment_ratio_gap", k, float(Z[n - k - 1]), float(r[k - 1] * Z[n - k]))
        for k in range(1, n - 2):                    # moment_ratio_gap_decay (flipped)
            lhs = float(Zp[n - k - 2] - r[k - 1] * Zp[n - k - 1])
            rhs = float(Z[n - k - 1] - r[k - 1] * Z[n - k])
            report.add(n, "moment_ratio_gap_decay", k, lhs, rhs)
        for k in range(1, n):                        # left/right curvature gaps
            m = n - k
            report.add(n, "left_curvature_gap", k, float(I[m]), float((1.0 + beta[k + 1]) * Z[m]))
            report.add(n, "right_curvature_gap", k, float(J[m]), float(3.0 * Z[m]))
        for k in range(1, n - 1):                    # their level decays (flipped)
            report.add(
                n, "left_curvature_gap_decay", k,
                float(Ip[n - 1 - k] - (1.0 + beta[k + 1]) * Zp[n - 1 - k]),
                float(I[n - k] - (1.0 + beta[k + 1]) * Z[n - k]),
            )
            report.add(
                n, "right_curvature_gap_decay", k,
                float(Jp[n - 1 - k] - 3.0 * Zp[n - 1 - k]),
                float(J[n - k] - 3.0 * Z[n - k]),
            )
        # head_moment_bound: r_n Z[1] < alpha/(3(2-alpha)) w'(t_{n-1})
        wp_tail = float(_weight_at_nodes(mesh, order, n)[n - 1])
        report.add(
            n, "head_moment_bound", n - 1,
            alpha / (3.0 * (2.0 - alpha)) * wp_tail,
            float(r[n - 2] * Z[1]),
        )
        prev = ks
        prev_IJ = (I, J)
    return report
