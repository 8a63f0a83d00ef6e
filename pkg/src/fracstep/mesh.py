"""Nonuniform time meshes: graded, graded-plus-random, and adaptive steps.

A mesh is a strictly increasing node vector 0 = t_0 < t_1 < ... < t_N.
Graded meshes t_k = T0 * (k/N0)^gamma concentrate steps near t = 0 to
resolve the weak initial singularity of time-fractional problems.  The
two-phase builder glues a graded prefix on [0, T0] to random steps on
[T0, T].  The adaptive controller shrinks the step where the solution
moves fast, with a hard floor on the step ratio so that the kernel
monotonicity needed by the energy analysis is preserved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised when a requested mesh cannot be built."""


@dataclass(frozen=True)
class TimeMesh:
    """Immutable node/step/ratio view of a time mesh.

    nodes[k] = t_k for k = 0..N, steps[k-1] = tau_k = t_k - t_{k-1} for
    k = 1..N, ratios[k-2] = tau_k / tau_{k-1} for k = 2..N.  Offset nodes
    t_{k-theta} depend on the fractional order through theta = alpha/2 and
    are exposed as a method instead of a stored field.
    """

    nodes: np.ndarray
    steps: np.ndarray = field(default=None)
    ratios: np.ndarray = field(default=None)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise MeshError("mesh needs at least two nodes")
        if nodes[0] != 0.0:
            raise MeshError(f"mesh must start at t = 0, got {nodes[0]}")
        steps = np.diff(nodes)
        if not np.all(steps > 0.0):
            raise MeshError("mesh nodes must be strictly increasing")
        with np.errstate(divide="ignore"):
            ratios = steps[1:] / steps[:-1]
        for name, arr in (("nodes", nodes), ("steps", steps), ("ratios", ratios)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_steps(self) -> int:
        return self.steps.size

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    def step(self, k: int) -> float:
        """tau_k for 1 <= k <= N."""
        assert 1 <= k <= self.num_steps, f"step index {k} out of range"
        return float(self.steps[k - 1])

    def ratio(self, k: int) -> float:
        """r_k = tau_k / tau_{k-1} for 2 <= k <= N."""
        assert 2 <= k <= self.num_steps, f"ratio index {k} out of range"
        return float(self.ratios[k - 2])

    def offset_node(self, k: int, theta: float) -> float:
        """t_{k-theta} = t_{k-1} + (1-theta) tau_k, for 1 <= k <= N."""
        assert 0.0 < theta < 0.5, f"offset must lie in (0, 1/2), got {theta}"
        return float(self.nodes[k - 1] + (1.0 - theta) * self.steps[k - 1])

    def prefix(self, n: int) -> "TimeMesh":
        """Sub-mesh containing nodes t_0..t_n."""
        return TimeMesh(self.nodes[: n + 1].copy())

    def to_csv(self, path) -> None:
        """Write rows (k, t_k, tau_k, r_k); tau/ratio cells empty where undefined."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "t_k", "tau_k", "r_k"])
            for k in range(self.num_steps + 1):
                tau = repr(self.step(k)) if k >= 1 else ""
                rk = repr(self.ratio(k)) if k >= 2 else ""
                writer.writerow([k, repr(float(self.nodes[k])), tau, rk])


def build_graded_mesh(T0: float, N0: int, gamma: float) -> TimeMesh:
    """Graded mesh t_k = T0 * (k/N0)^gamma on [0, T0].

    gamma = 1 is uniform; gamma > 1 clusters nodes at the origin.
    """
    if T0 <= 0.0:
        raise MeshError(f"graded mesh needs T0 > 0, got {T0}")
    if N0 < 1:
        raise MeshError(f"graded mesh needs N0 >= 1, got {N0}")
    if gamma < 1.0:
        raise MeshError(f"grading exponent must satisfy gamma >= 1, got {gamma}")
    k = np.arange(N0 + 1, dtype=float)
    return TimeMesh(T0 * (k / N0) ** gamma)


def build_two_phase_mesh(T: float, gamma: float, N: int, seed: int) -> TimeMesh:
    """Graded prefix on [0, T0] plus random steps on [T0, T], N steps total.

    T0 = min(1/gamma, T) and the prefix gets N0 = ceil(N / (T + 1 - 1/gamma))
    of the N subintervals.  The remaining N - N0 steps are drawn uniformly
    and rescaled so they sum to T - T0 exactly; the final node is pinned to
    T.  When T0 == T the mesh degenerates to a pure graded mesh with all N
    steps (uniform for gamma = 1).
    """
    if T <= 0.0:
        raise MeshError(f"horizon must be positive, got {T}")
    if gamma < 1.0:
        raise MeshError(f"grading exponent must satisfy gamma >= 1, got {gamma}")
    if N < 1:
        raise MeshError(f"need at least one step, got N = {N}")
    T0 = min(1.0 / gamma, T)
    if T0 >= T:
        return build_graded_mesh(T, N, gamma)
    N0 = int(np.ceil(N / (T + 1.0 - 1.0 / gamma)))
    if N0 >= N:
        raise MeshError(
            f"graded prefix uses N0 = {N0} of N = {N} steps; no room for the random phase"
        )
    rng = np.random.default_rng(seed)
    eps = rng.random(N - N0)
    while np.any(eps <= 0.0):  # astronomically rare, but (0,1) is the contract
        eps = rng.random(N - N0)
    tail_steps = (T - T0) * eps / eps.sum()
    prefix = T0 * (np.arange(N0 + 1, dtype=float) / N0) ** gamma
    nodes = np.concatenate([prefix, T0 + np.cumsum(tail_steps)])
    nodes[-1] = T
    return TimeMesh(nodes)


def build_uniform_mesh(T: float, N: int) -> TimeMesh:
    """Uniform mesh with N steps on [0, T]."""
    return build_graded_mesh(T, N, 1.0)


@dataclass(frozen=True)
class ConstraintReport:
    """Result of checking r_k >= r_min over a mesh."""

    r_min: float
    min_ratio: float
    min_ratio_index: int
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def check_ratio_constraint(mesh: TimeMesh, r_min: float) -> ConstraintReport:
    """List every step index k >= 2 whose ratio falls below r_min.

    This is an audit, never a rejection: meshes with violating ratios are
    legal inputs to the solver, they just void the energy guarantees.
    """
    ratios = mesh.ratios
    if ratios.size == 0:
        return ConstraintReport(r_min, np.inf, 0, ())
    idx = int(np.argmin(ratios))
    bad = np.nonzero(ratios < r_min)[0]
    violations = tuple((int(i) + 2, float(ratios[i])) for i in bad)
    return ConstraintReport(r_min, float(ratios[idx]), idx + 2, violations)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Parameters of the step controller.

    The proposed step is tau_max / sqrt(1 + eta * speed^2) clipped from
    below by tau_min, where speed is the L2 norm of the divided difference
    of the last accepted step.  The controller then enforces the ratio
    floor tau_{n+1} >= r_floor * tau_n, and finally the physical cap (if
    one is supplied) as a hard upper limit.
    """

    tau_min: float
    tau_max: float
    eta: float
    r_floor: float
    physical_cap: float | None = None

    def __post_init__(self):
        if not 0.0 < self.tau_min <= self.tau_max:
            raise MeshError(
                f"need 0 < tau_min <= tau_max, got ({self.tau_min}, {self.tau_max})"
            )
        if self.eta < 0.0:
            raise MeshError(f"controller weight eta must be >= 0, got {self.eta}")
        if not 0.0 < self.r_floor < 1.0:
            raise MeshError(f"ratio floor must lie in (0, 1), got {self.r_floor}")
        if self.physical_cap is not None and self.physical_cap <= 0.0:
            raise MeshError(f"physical cap must be positive, got {self.physical_cap}")


def adaptive_next_step(tau_n: float, change_norm: float, cfg: AdaptiveConfig) -> float:
    """Next step from the last step and the solution speed of that step.

    Applies, in order: the inverse-speed proposal, the tau_min floor, the
    ratio floor r_floor * tau_n, and last the physical cap.  The cap wins
    even when it undercuts the ratio floor; callers that care (energy
    audits) should compare the result against r_floor * tau_n.
    """
    assert tau_n > 0.0 and change_norm >= 0.0
    proposal = cfg.tau_max / np.sqrt(1.0 + cfg.eta * change_norm**2)
    tau = max(cfg.tau_min, proposal, cfg.r_floor * tau_n)
    if cfg.physical_cap is not None:
        tau = min(tau, cfg.physical_cap)
    return float(tau)


def random_ratio_mesh(
    rng: np.random.Generator,
    n: int,
    r_min: float,
    r_max: float = 4.0,
    tau1_range: tuple = (1e-3, 1.0),
) -> TimeMesh:
    """Random mesh with n steps whose ratios all lie in [r_min, r_max].

    Used to fuzz the kernel audits; the first step is log-uniform in
    tau1_range and roughly one draw in ten sits exactly at the floor.
    """
    lo, hi = tau1_range
    tau1 = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    ratios = rng.uniform(r_min, r_max, size=n - 1)
    at_floor = rng.random(n - 1) < 0.1
    ratios[at_floor] = r_min
    steps = tau1 * np.concatenate([[1.0], np.cumprod(ratios)])
    return TimeMesh(np.concatenate([[0.0], np.cumsum(steps)]))
