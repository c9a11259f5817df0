"""Reflection-vector design and SIC decoding-order determination.

With rho_ijk = diag(g_ik^H) f_jk the combined gain is H = h + nu^H rho, so
every quantity here works on the cascaded vectors:

* :func:`sum_gain_bcd` maximizes the served sum of |H|^2 by cyclic
  closed-form single-element updates (the default phase-design strategy).
* :func:`lift_problem` / :func:`sdr_solve` / :func:`gaussian_randomization`
  form the lifted unit-diagonal PSD relaxation of the same objective and
  recover unit-modulus phases from it (optional strategy, cross-validation).
* :func:`feasibility_design` restores the SINR-target and decoding-order
  constraints by successive convex approximation with a max-min-slack
  objective.
* :func:`decoding_order` sorts each cluster by combined gain (weakest
  decoded first).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import NetworkConfig
from .model import Allocation, ChannelSet, OrderTable, PhaseConfig
from .power import CubState
from .solvers import minimize_barrier

__all__ = [
    "CascadedChannel",
    "TaylorPoint",
    "LiftedProblem",
    "SdrResult",
    "FeasibilityResult",
    "PsdBackend",
    "CvxpyPsdBackend",
    "SdpSizeCapError",
    "cascade",
    "served_cascade_arrays",
    "taylor_lower_bound",
    "feasibility_design",
    "sum_gain_bcd",
    "phase_objective",
    "lift_problem",
    "sdr_solve",
    "gaussian_randomization",
    "decoding_order",
    "order_table",
]

SDP_SIZE_CAP = 33  # largest M+1 the bundled PSD backend accepts


@dataclass(frozen=True)
class CascadedChannel:
    """Cascaded vectors rho and the SINR-constraint coefficients.

    rho[i, j, k, :]  = conj(g_ik) * f_jk
    phi[i, j, k]     = gamma * p_hat / p   (0 off served tuples)
    xi_hat[i, j, k]  = gamma * (I_th + sigma^2) / p
    """

    rho: np.ndarray
    phi: np.ndarray
    xi_hat: np.ndarray


@dataclass(frozen=True)
class TaylorPoint:
    """Real/imaginary parts of H and their expansion anchors."""

    x: np.ndarray
    y: np.ndarray
    x_tilde: np.ndarray
    y_tilde: np.ndarray

    @classmethod
    def at(cls, h: np.ndarray, rho: np.ndarray, nu: np.ndarray) -> "TaylorPoint":
        gains = h + rho @ np.conj(nu)
        return cls(x=gains.real, y=gains.imag, x_tilde=gains.real, y_tilde=gains.imag)


@dataclass(frozen=True)
class LiftedProblem:
    """Unit-diagonal PSD lifting of the sum-gain objective."""

    c_mats: np.ndarray  # (T, M+1, M+1) Hermitian blocks [[rho rho^H, conj(h) rho], [h rho^H, 0]]
    h_abs2: np.ndarray  # (T,)
    rho: np.ndarray  # (T, M)
    h: np.ndarray  # (T,)


@dataclass(frozen=True)
class SdrResult:
    v: np.ndarray
    upper_bound: float


@dataclass(frozen=True)
class FeasibilityResult:
    phases: PhaseConfig
    slack: float
    status: str  # feasible | no_improvement
    rounds: int


class SdpSizeCapError(Exception):
    """The lifted problem exceeds the PSD backend's size cap; use sum_gain_bcd."""


class PsdBackend(ABC):
    """Abstract positive-semidefinite subproblem solver.

    Implementations maximize Re tr(C V) over Hermitian PSD V with unit
    diagonal and return (V, objective value).
    """

    @abstractmethod
    def solve(self, c: np.ndarray) -> tuple[np.ndarray, float]: ...


class CvxpyPsdBackend(PsdBackend):
    def __init__(self, solver: str = "CLARABEL"):
        self.solver = solver

    def solve(self, c: np.ndarray) -> tuple[np.ndarray, float]:
        import cvxpy as cp

        n = c.shape[0]
        v = cp.Variable((n, n), hermitian=True)
        problem = cp.Problem(
            cp.Maximize(cp.real(cp.trace(c @ v))), [v >> 0, cp.diag(v) == 1]
        )
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            problem.solve(solver=self.solver)
            if problem.status != "optimal":
                # one retry on the first-order solver at tight tolerance
                problem.solve(solver="SCS", eps=1e-9, max_iters=50_000)
        if problem.status not in ("optimal", "optimal_inaccurate"):
            raise RuntimeError(f"PSD solver did not converge: {problem.status}")
        return np.asarray(v.value), float(problem.value)


def cascade(
    cfg: NetworkConfig,
    ch: ChannelSet,
    alloc: Allocation,
    cub: CubState,
    i_th: float | np.ndarray | None = None,
) -> CascadedChannel:
    """Cascaded vectors plus phi / xi_hat coefficients from a power solution."""
    if i_th is None:
        i_th = cfg.inter_threshold_w
    rho = np.einsum("ikm,jkm->ijkm", np.conj(ch.irs_to_user), ch.bs_to_irs)
    served = alloc.served
    if np.any(served & (alloc.power <= 0)):
        raise ValueError("cascade requires positive power on every served tuple")
    phi = np.zeros_like(alloc.power)
    xi_hat = np.zeros_like(alloc.power)
    p = alloc.power[served]
    ith_served = np.broadcast_to(np.asarray(i_th, dtype=float), served.shape)[served]
    phi[served] = cub.gamma[served] * cub.p_hat[served] / p
    xi_hat[served] = cub.gamma[served] * (ith_served + cfg.noise_power_w) / p
    return CascadedChannel(rho=rho, phi=phi, xi_hat=xi_hat)


def served_cascade_arrays(
    ch: ChannelSet, assoc: np.ndarray, subch: np.ndarray
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, int]]]:
    """(rho matrix, direct gains, tuple ids) restricted to served tuples."""
    tuples = [
        (i, j, k)
        for j in range(subch.shape[0])
        for k in range(subch.shape[1])
        if subch[j, k]
        for i in np.flatnonzero(assoc[:, j])
    ]
    if not tuples:
        m = ch.bs_to_irs.shape[2]
        return np.zeros((0, m), dtype=complex), np.zeros(0, dtype=complex), []
    rho = np.stack([np.conj(ch.irs_to_user[i, k]) * ch.bs_to_irs[j, k] for i, j, k in tuples])
    h = np.array([ch.direct[i, j, k] for i, j, k in tuples])
    return rho, h, tuples


def taylor_lower_bound(x_tilde, y_tilde, x, y):
    """First-order lower bound of x^2 + y^2 around (x_tilde, y_tilde)."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    y_tilde = np.asarray(y_tilde, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (
        x_tilde**2
        + y_tilde**2
        + 2.0 * x_tilde * (x - x_tilde)
        + 2.0 * y_tilde * (y - y_tilde)
    )
    return float(out) if out.ndim == 0 else out


def phase_objective(rho: np.ndarray, h: np.ndarray, phases: PhaseConfig) -> float:
    """Served sum of combined gains sum_t |h_t + nu^H rho_t|^2."""
    gains = h + rho @ np.conj(phases.nu)
    return float(np.sum(np.abs(gains) ** 2))


def sum_gain_bcd(
    rho: np.ndarray,
    h: np.ndarray,
    init_phases: PhaseConfig,
    *,
    tol: float = 1e-4,
    max_sweeps: int = 50,
) -> PhaseConfig:
    """Cyclic per-element maximization of sum_t |h_t + nu^H rho_t|^2.

    Each update sets theta_m = arg(sum_t rho_tm * conj(c_t)) with c_t the
    gain excluding element m, the closed-form argmax, so the objective is
    nondecreasing at every step.  Sweeps stop once a full pass improves the
    objective by less than tol (relative).
    """
    theta = init_phases.theta.copy()
    num_elements = theta.size
    if rho.shape[0] == 0 or num_elements == 0:
        return init_phases
    w = np.exp(-1j * theta)  # w_m = conj(nu_m)
    prev = float(np.sum(np.abs(h + rho @ w) ** 2))
    for _ in range(max_sweeps):
        gains = h + rho @ w
        for m in range(num_elements):
            col = rho[:, m]
            partial = gains - w[m] * col
            s = col @ np.conj(partial)
            if abs(s) > 0:
                theta[m] = float(np.angle(s)) % (2.0 * np.pi)
                w[m] = np.exp(-1j * theta[m])
            gains = partial + w[m] * col
        obj = float(np.sum(np.abs(gains) ** 2))
        if obj - prev < tol * max(prev, 1e-300):
            prev = obj
            break
        prev = obj
    return PhaseConfig.from_theta(theta)


def lift_problem(rho: np.ndarray, h: np.ndarray) -> LiftedProblem:
    """Hermitian blocks C_t with nu_bar^H C_t nu_bar + |h_t|^2 = |h_t + nu^H rho_t|^2.

    C_t = [[rho rho^H, conj(h) rho], [h rho^H, 0]]; the cross term is
    2 Re(conj(h) nu^H rho), exact for complex h as well.
    """
    t_cnt, m = rho.shape
    c_mats = np.zeros((t_cnt, m + 1, m + 1), dtype=complex)
    for t in range(t_cnt):
        c_mats[t, :m, :m] = np.outer(rho[t], np.conj(rho[t]))
        c_mats[t, :m, m] = np.conj(h[t]) * rho[t]
        c_mats[t, m, :m] = h[t] * np.conj(rho[t])
    return LiftedProblem(c_mats=c_mats, h_abs2=np.abs(h) ** 2, rho=rho, h=h)


def sdr_solve(
    lifted: LiftedProblem,
    backend: PsdBackend | None = None,
    size_cap: int = SDP_SIZE_CAP,
) -> SdrResult:
    """Solve the unit-diagonal PSD relaxation; the value upper-bounds the sum gain."""
    n = lifted.c_mats.shape[1]
    if n > size_cap:
        raise SdpSizeCapError(
            f"lifted dimension {n} exceeds cap {size_cap}; fall back to sum_gain_bcd"
        )
    if backend is None:
        backend = CvxpyPsdBackend()
    c_sum = lifted.c_mats.sum(axis=0)
    v, value = backend.solve(c_sum)
    v = np.asarray(v)
    v = (v + v.conj().T) / 2.0
    return SdrResult(v=v, upper_bound=value + float(lifted.h_abs2.sum()))


def _phases_from_lifted_vector(u: np.ndarray) -> PhaseConfig:
    u = np.where(np.abs(u) > 0, u, 1.0)
    u = u / np.abs(u)
    nu = u[:-1] / u[-1]
    return PhaseConfig.from_theta(np.mod(np.angle(nu), 2.0 * np.pi))


def gaussian_randomization(
    v: np.ndarray,
    lifted: LiftedProblem,
    samples: int = 200,
    seed: int = 0,
) -> PhaseConfig:
    """Recover unit-modulus phases from a (possibly high-rank) lifted solution.

    Candidates: the leading eigenvector (exact when V is rank one) plus
    `samples` draws of CN(0, V), each normalized entrywise to unit modulus
    and de-homogenized by the last entry.  Returns the candidate with the
    largest sum-gain objective; by construction this never exceeds the SDR
    upper bound.
    """
    eigvals, eigvecs = np.linalg.eigh(v)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]

    candidates = [eigvecs[:, 0]]
    factor = eigvecs * np.sqrt(eigvals)[None, :]
    rng = np.random.default_rng(seed)
    if samples > 0:
        draws = (
            rng.standard_normal((samples, v.shape[0]))
            + 1j * rng.standard_normal((samples, v.shape[0]))
        ) / np.sqrt(2.0)
        candidates.extend(draws @ factor.T)

    best_phases = None
    best_obj = -np.inf
    for u in candidates:
        phases = _phases_from_lifted_vector(u)
        obj = phase_objective(lifted.rho, lifted.h, phases)
        if obj > best_obj:
            best_obj = obj
            best_phases = phases
    return best_phases


def decoding_order(
    ch: ChannelSet,
    phases: PhaseConfig,
    clusters: Mapping[tuple[int, int], Sequence[int]],
) -> dict[tuple[int, int], tuple[int, ...]]:
    """Sort each (BS, subchannel) cluster ascending by |H|^2, weakest first.

    Ties break toward the lower user index, so the result is deterministic.
    """
    from .model import combined_gain_table

    gains2 = np.abs(combined_gain_table(ch, phases)) ** 2
    out = {}
    for (j, k), users in clusters.items():
        out[(j, k)] = tuple(sorted(users, key=lambda i: (gains2[i, j, k], i)))
    return out


def order_table(
    cfg: NetworkConfig,
    ch: ChannelSet,
    phases: PhaseConfig,
    assoc: np.ndarray,
    subch: np.ndarray,
) -> OrderTable:
    """Decoding orders for every served cluster, as an Allocation order table."""
    clusters = {
        (j, k): tuple(int(i) for i in np.flatnonzero(assoc[:, j]))
        for j in range(cfg.num_bs)
        for k in range(cfg.num_subchannels)
        if subch[j, k]
    }
    ordered = decoding_order(ch, phases, clusters)
    return tuple(
        tuple(ordered.get((j, k), ()) for k in range(cfg.num_subchannels))
        for j in range(cfg.num_bs)
    )


def _true_slacks(
    h: np.ndarray,
    rho: np.ndarray,
    nu: np.ndarray,
    phi: np.ndarray,
    xi_hat: np.ndarray,
    pairs: list[tuple[int, int]],
    scale_c: np.ndarray,
    scale_p: np.ndarray,
) -> float:
    """Exact normalized minimum slack of (16b)/(16c) at unit-modulus nu."""
    gains2 = np.abs(h + rho @ np.conj(nu)) ** 2
    slacks = ((1.0 - phi) * gains2 - xi_hat) / scale_c
    vals = [float(slacks.min())] if slacks.size else []
    for idx, (weak, strong) in enumerate(pairs):
        vals.append(float((gains2[strong] - gains2[weak]) / scale_p[idx]))
    return min(vals) if vals else 0.0


def feasibility_design(
    cascaded: CascadedChannel,
    direct: np.ndarray,
    phases: PhaseConfig,
    order: OrderTable,
    *,
    max_iters: int = 30,
    tol: float = 1e-4,
) -> FeasibilityResult:
    """Restore SINR-target feasibility by SCA over the reflection vector.

    Maximizes the minimum normalized slack of the linearized decoding-order
    and SINR-target constraints with |nu_m| <= 1, projects back to unit
    modulus, and re-expands; keeps the best unit-modulus iterate.  Returns
    immediately when the input phases already have nonnegative slack, and
    returns the input phases with status "no_improvement" when no iterate
    reaches feasibility.
    """
    tuples = [
        (i, j, k)
        for j, row in enumerate(order)
        for k, cluster in enumerate(row)
        for i in cluster
    ]
    if not tuples:
        return FeasibilityResult(phases=phases, slack=0.0, status="feasible", rounds=0)

    idx = {t: n for n, t in enumerate(tuples)}
    rho = np.stack([cascaded.rho[i, j, k] for i, j, k in tuples])
    h = np.array([direct[i, j, k] for i, j, k in tuples])
    phi = np.array([cascaded.phi[i, j, k] for i, j, k in tuples])
    xi_hat = np.array([cascaded.xi_hat[i, j, k] for i, j, k in tuples])
    pairs = [
        (idx[(cluster[n], j, k)], idx[(cluster[n + 1], j, k)])
        for j, row in enumerate(order)
        for k, cluster in enumerate(row)
        for n in range(len(cluster) - 1)
    ]

    # static per-constraint magnitude scales; channel gains are ~1e-10 so
    # absolute slacks would be meaningless
    reach2 = (np.abs(h) + np.abs(rho).sum(axis=1)) ** 2
    scale_c = reach2 + xi_hat + 1e-300
    scale_p = np.array([max(reach2[a], reach2[b]) for a, b in pairs]) + 1e-300

    feas_tol = -1e-9  # normalized slack within round-off of zero counts as feasible
    best_slack = _true_slacks(h, rho, phases.nu, phi, xi_hat, pairs, scale_c, scale_p)
    best_phases = phases
    if best_slack >= feas_tol:
        return FeasibilityResult(phases=phases, slack=best_slack, status="feasible", rounds=0)

    t_cnt, m = rho.shape
    n_var = 2 * m + 1  # [Re nu, Im nu, slack]
    # x = h_re + a_r v, y = h_im + a_i v with v = [Re nu; Im nu]
    a_r = np.hstack([rho.real, rho.imag])
    a_i = np.hstack([rho.imag, -rho.real])

    anchor = phases
    rounds = 0
    for _ in range(max_iters):
        rounds += 1
        v_anchor = np.concatenate([anchor.nu.real, anchor.nu.imag])
        x_t = h.real + a_r @ v_anchor
        y_t = h.imag + a_i @ v_anchor
        # linear part of the Taylor bound: tau = 2*x_t*x + 2*y_t*y - (x_t^2 + y_t^2)
        tau_rows = 2.0 * (x_t[:, None] * a_r + y_t[:, None] * a_i)
        tau_const = (
            2.0 * x_t * h.real + 2.0 * y_t * h.imag - x_t**2 - y_t**2
        )

        def constraints(z, need_jac=True):
            v, s = z[: 2 * m], z[-1]
            x = h.real + a_r @ v
            y = h.imag + a_i @ v
            tau = tau_const + tau_rows @ v
            quad = x**2 + y**2
            circles = 1.0 - v[:m] ** 2 - v[m:] ** 2
            g_c = (tau - phi * quad - xi_hat) / scale_c - s
            g_p = np.array(
                [(tau[strong] - quad[weak]) / scale_p[n_p] - s
                 for n_p, (weak, strong) in enumerate(pairs)]
            )
            g = np.concatenate([g_c, g_p, circles])
            if not need_jac:
                return g, None, None

            jac_c = (
                tau_rows - 2.0 * phi[:, None] * (x[:, None] * a_r + y[:, None] * a_i)
            ) / scale_c[:, None]
            jac_list = [np.hstack([jac_c, -np.ones((t_cnt, 1))])]
            for n_p, (weak, strong) in enumerate(pairs):
                row = (
                    tau_rows[strong] - 2.0 * (x[weak] * a_r[weak] + y[weak] * a_i[weak])
                ) / scale_p[n_p]
                jac_list.append(np.hstack([row, [-1.0]])[None, :])
            jac_circ = np.zeros((m, n_var))
            jac_circ[np.arange(m), np.arange(m)] = -2.0 * v[:m]
            jac_circ[np.arange(m), m + np.arange(m)] = -2.0 * v[m:]
            jac_list.append(jac_circ)
            jac = np.vstack(jac_list)

            def curvature(w):
                hmat = np.zeros((n_var, n_var))
                w_c = w[:t_cnt] * (2.0 * phi / scale_c)
                stack = []
                weights = []
                for t in range(t_cnt):
                    if w_c[t] > 0:
                        stack.append(a_r[t])
                        stack.append(a_i[t])
                        weights.extend([w_c[t], w_c[t]])
                for n_p, (weak, _) in enumerate(pairs):
                    w_p = w[t_cnt + n_p] * (2.0 / scale_p[n_p])
                    stack.append(a_r[weak])
                    stack.append(a_i[weak])
                    weights.extend([w_p, w_p])
                if stack:
                    mat = np.asarray(stack)
                    hmat[: 2 * m, : 2 * m] += mat.T @ (np.asarray(weights)[:, None] * mat)
                w_circ = w[t_cnt + len(pairs) :]
                diag = 2.0 * np.concatenate([w_circ, w_circ])
                hmat[np.arange(2 * m), np.arange(2 * m)] += diag
                return hmat

            return g, jac, curvature

        def objective(z):
            grad = np.zeros(n_var)
            grad[-1] = -1.0
            return -float(z[-1]), grad, None

        v0 = 0.995 * np.concatenate([anchor.nu.real, anchor.nu.imag])
        g_probe = constraints(np.concatenate([v0, [0.0]]), False)[0]
        s0 = float(np.min(g_probe[: t_cnt + len(pairs)])) - 0.1
        z0 = np.concatenate([v0, [s0]])
        res = minimize_barrier(objective, constraints, z0, comp_tol=1e-6)
        nu_raw = res.z[:m] + 1j * res.z[m : 2 * m]
        nu_raw = np.where(np.abs(nu_raw) > 0, nu_raw, 1.0)
        nu_proj = nu_raw / np.abs(nu_raw)
        candidate = PhaseConfig.from_theta(np.mod(np.angle(nu_proj), 2.0 * np.pi))
        slack = _true_slacks(h, rho, candidate.nu, phi, xi_hat, pairs, scale_c, scale_p)
        improved = slack - best_slack
        if slack > best_slack:
            best_slack = slack
            best_phases = candidate
        anchor = candidate
        if best_slack >= feas_tol or improved < tol:
            break

    if best_slack >= feas_tol:
        return FeasibilityResult(
            phases=best_phases, slack=best_slack, status="feasible", rounds=rounds
        )
    return FeasibilityResult(
        phases=phases, slack=best_slack, status="no_improvement", rounds=rounds
    )
