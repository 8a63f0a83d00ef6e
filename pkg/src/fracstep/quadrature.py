"""Adaptive-quadrature evaluation of the derivative weights.

Everything in kernels.py has a closed form; this module recomputes the
same quantities by numerically integrating the defining integrands, so
the two routes can be checked against each other.  The quadratures also
back the curvature diagnostics, whose integrals have no closed form that
is independent of the weight identities.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.special import rgamma

from .kernels import FracOrder, as_order
from .mesh import TimeMesh


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature cannot reach the requested accuracy."""


_EPSABS = 1e-14
_EPSREL = 1e-12
_LIMIT = 200


def _run_quad(fn, lo, hi, **kwargs):
    val, err, info, *tail = quad(
        fn, lo, hi, epsabs=_EPSABS, epsrel=_EPSREL, limit=_LIMIT,
        full_output=1, **kwargs,
    )
    # QUADPACK flags round-off chatter even when the achieved estimate is
    # tight; only give up when the estimate is genuinely loose.
    if tail and err > max(5e-13, 1e-11 * abs(val)):
        raise QuadratureError(f"quadrature failed on [{lo}, {hi}]: {tail[0]} (est {err:.2e})")
    return val, err


def _geometry(mesh: TimeMesh, order: FracOrder, n: int):
    t_off = mesh.nodes[n - 1] + (1.0 - order.theta) * mesh.steps[n - 1]
    return mesh.nodes, mesh.steps, t_off


def weight_fn(order, t_off: float):
    """The integrand weight omega_{1-alpha}(t_off - t) as a scalar callable."""
    alpha = as_order(order).alpha
    scale = rgamma(1.0 - alpha)
    return lambda t: (t_off - t) ** (-alpha) * scale


def curvature_fn(order, t_off: float):
    """Derivative of the weight: alpha * (t_off - t)^(-alpha-1) / Gamma(1-alpha)."""
    alpha = as_order(order).alpha
    scale = alpha * rgamma(1.0 - alpha)
    return lambda t: (t_off - t) ** (-alpha - 1.0) * scale


def interval_weight_quad(mesh: TimeMesh, order, n: int, k: int) -> float:
    """Average of the weight over interval k at level n, by quadrature.

    For k = n the integral stops at t_{n-theta} and the endpoint
    singularity (t_off - t)^(-alpha) is handled with a weighted rule.
    """
    order = as_order(order)
    nodes, steps, t_off = _geometry(mesh, order, n)
    assert 1 <= k <= n
    if k < n:
        val, _ = _run_quad(weight_fn(order, t_off), nodes[k - 1], nodes[k])
        return val / steps[k - 1]
    scale = rgamma(1.0 - order.alpha)
    val, _ = _run_quad(
        lambda t: scale, nodes[n - 1], t_off,
        weight="alg", wvar=(0.0, -order.alpha),
    )
    return val / steps[n - 1]


def moment_weight_quad(mesh: TimeMesh, order, n: int, k: int, form: str = "auto") -> float:
    """First-moment weight for interval k < n at level n, by quadrature.

    form="signed" integrates (t - t_{k-1/2}) times the weight, which is the
    defining integral but cancels for intervals far from the evaluation
    point; form="curvature" integrates the positive-definite equivalent
    (t - t_{k-1})(t_k - t) times the weight derivative.  "auto" picks
    "signed" when the interval is within a factor hundred of the
    backdistance and "curvature" otherwise.
    """
    order = as_order(order)
    nodes, steps, t_off = _geometry(mesh, order, n)
    assert 1 <= k <= n - 1
    lo, hi = nodes[k - 1], nodes[k]
    tau = steps[k - 1]
    if form == "auto":
        form = "signed" if tau / (t_off - hi) >= 1e-2 else "curvature"
    if form == "signed":
        mid = lo + 0.5 * tau
        wfn = weight_fn(order, t_off)
        val, _ = _run_quad(lambda t: (t - mid) * wfn(t), lo, hi)
        return 2.0 * val / tau**2
    if form == "curvature":
        cfn = curvature_fn(order, t_off)
        val, _ = _run_quad(lambda t: (t - lo) * (hi - t) * cfn(t), lo, hi)
        return val / tau**2
    raise ValueError(f"unknown form {form!r}")


def derivative_quad(mesh: TimeMesh, order, n: int, history) -> float:
    """Discrete derivative at t_{n-theta} straight from the interpolants.

    Integrates the derivative of the piecewise quadratic (history
    intervals) and final linear interpolant against the weight, which
    bypasses the closed-form weights entirely.
    """
    order = as_order(order)
    v = np.asarray(history, dtype=float)
    assert v.size == n + 1
    nodes, steps, t_off = _geometry(mesh, order, n)
    diffs = np.diff(v)
    total = 0.0
    wfn = weight_fn(order, t_off)
    for k in range(1, n):
        tau_k, tau_k1 = steps[k - 1], steps[k]
        r_k1 = tau_k1 / tau_k
        mid = nodes[k - 1] + 0.5 * tau_k
        slope = diffs[k - 1] / tau_k
        curve = 2.0 * (diffs[k] - r_k1 * diffs[k - 1]) / (tau_k1 * (tau_k + tau_k1))
        val, _ = _run_quad(
            lambda t: (slope + curve * (t - mid)) * wfn(t), nodes[k - 1], nodes[k]
        )
        total += val
    scale = rgamma(1.0 - order.alpha)
    head, _ = _run_quad(
        lambda t: scale, nodes[n - 1], t_off,
        weight="alg", wvar=(0.0, -order.alpha),
    )
    return total + head * diffs[n - 1] / steps[n - 1]


def endpoint_moment_quad(mesh: TimeMesh, order, n: int, k: int, side: str) -> float:
    """Curvature integral weighted toward one interval endpoint.

    side="right" is the integral of ((t - t_{k-1})/tau_k) * curvature over
    interval k (controls the gap between the weight at t_k and the interval
    average); side="left" weights (t_k - t)/tau_k instead.  Defined for
    k <= n-1, where the curvature is integrable.
    """
    order = as_order(order)
    nodes, steps, t_off = _geometry(mesh, order, n)
    assert 1 <= k <= n - 1
    lo, hi = nodes[k - 1], nodes[k]
    tau = steps[k - 1]
    cfn = curvature_fn(order, t_off)
    if side == "right":
        val, _ = _run_quad(lambda t: (t - lo) / tau * cfn(t), lo, hi)
    elif side == "left":
        val, _ = _run_quad(lambda t: (hi - t) / tau * cfn(t), lo, hi)
    else:
        raise ValueError(f"unknown side {side!r}")
    return val
