"""Dense log-barrier Newton solver for small smooth convex programs.

Solves

    minimize    f(z)
    subject to  g_c(z) >= 0,  c = 1..m,

with f convex and every g_c concave, all twice differentiable, starting from
a strictly feasible z0.  Problems in this package have at most a few hundred
variables, so plain dense Newton steps are the fast option.

The caller supplies two callbacks:

    objective(z)             -> (f, grad, hess)
    constraints(z, need_jac) -> (g, jac, curvature)

where g is the (m,) constraint vector, jac its (m, n) Jacobian and
curvature(w) returns sum_c w_c * (-hess g_c), the weighted constraint
curvature (an (n, n) PSD matrix; return None when every g_c is linear).
With need_jac=False only g is used (line-search evaluations); jac and
curvature may then be None.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["BarrierResult", "minimize_barrier"]


@dataclass
class BarrierResult:
    z: np.ndarray
    multipliers: np.ndarray  # estimates 1 / (t * g_c) of the KKT multipliers
    t: float
    newton_steps: int
    converged: bool
    stopped_early: bool


def _solve_kkt(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(hess, -grad)
    except np.linalg.LinAlgError:
        ridge = 1e-10 * (np.trace(hess) / hess.shape[0] + 1.0)
        return np.linalg.solve(hess + ridge * np.eye(hess.shape[0]), -grad)


def minimize_barrier(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray | None]],
    constraints: Callable[
        [np.ndarray, bool],
        tuple[np.ndarray, np.ndarray | None, Callable[[np.ndarray], np.ndarray] | None],
    ],
    z0: np.ndarray,
    *,
    t0: float = 1.0,
    mu: float = 30.0,
    comp_tol: float = 1e-7,
    center_tol: float = 1e-10,
    max_newton: int = 600,
    stop_early: Callable[[np.ndarray], bool] | None = None,
) -> BarrierResult:
    """Follow the central path until every mu_c * g_c = 1/t is below comp_tol.

    The total duality gap at the end is m / t <= m * comp_tol.  Driving t
    higher than needed wrecks the Newton system's conditioning, so the stop
    rule is per-constraint complementarity rather than the total gap.
    """
    z = np.asarray(z0, dtype=float).copy()
    g = constraints(z, False)[0]
    m = g.size
    if m and not np.all(g > 0):
        raise ValueError(f"start point is not strictly feasible (min slack {np.min(g):.3e})")

    t = float(t0)
    steps = 0
    stopped = False

    def barrier_value(zz: np.ndarray, tt: float) -> float:
        # constraint callbacks may produce NaN outside their domain; any
        # non-positive or non-finite slack means "infeasible"
        f, _, _ = objective(zz)
        gg = constraints(zz, False)[0]
        if gg.size and not np.all(gg > 0):
            return np.inf
        return tt * f - float(np.log(gg).sum()) if gg.size else tt * f

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        while True:
            # center at the current t
            for _ in range(max_newton):
                f, f_grad, f_hess = objective(z)
                g, jac, curvature = constraints(z, True)
                inv_g = 1.0 / g
                grad = t * f_grad - jac.T @ inv_g
                hess = jac.T @ (inv_g[:, None] ** 2 * jac)
                if f_hess is not None:
                    hess = hess + t * f_hess
                if curvature is not None:
                    extra = curvature(inv_g)
                    if extra is not None:
                        hess = hess + extra
                dz = _solve_kkt(hess, grad)
                decrement = float(-grad @ dz)
                steps += 1
                if decrement / 2.0 < center_tol:
                    break
                # fraction-to-boundary cap from the linearized constraints,
                # then a backtracking Armijo search on the barrier value
                slope = jac @ dz
                shrinking = slope < 0
                alpha = 1.0
                if np.any(shrinking):
                    alpha = min(1.0, 0.99 * float(np.min(-0.995 * g[shrinking] / slope[shrinking])))
                phi0 = t * f - float(np.log(g).sum())
                for _ in range(60):
                    cand = barrier_value(z + alpha * dz, t)
                    if cand < phi0 - 0.25 * alpha * decrement + 1e-12 * abs(phi0):
                        break
                    alpha *= 0.5
                else:
                    alpha = 0.0
                if alpha == 0.0:
                    break  # no descent possible at this scale; accept the center
                z = z + alpha * dz
                if stop_early is not None and stop_early(z):
                    stopped = True
                    break
                if steps >= max_newton:
                    break
            if stopped or steps >= max_newton:
                break
            if m == 0 or 1.0 / t < comp_tol:
                break
            t *= mu

    g = constraints(z, False)[0]
    return BarrierResult(
        z=z,
        multipliers=1.0 / (t * g) if g.size else np.zeros(0),
        t=t,
        newton_steps=steps,
        converged=(m == 0 or 1.0 / t < comp_tol) and not stopped,
        stopped_early=stopped,
    )
