"""Iterative power allocation via convex-upper-bound (CUB) substitution.

Given matching, decoding order and phases, the per-tuple SINR targets gamma
must satisfy

    p >= gamma * p_hat + gamma * xi,      xi = (I_th + sigma^2) / |H|^2,

where p_hat sums the powers of co-cluster users decoded later.  The bilinear
term gamma * p_hat is replaced by its convex upper bound

    g(gamma, p_hat, lambda) = (lambda/2) gamma^2 + p_hat^2 / (2 lambda),

tight at lambda = p_hat / gamma.  Alternating the lambda update with the
resulting convex subproblem (solved by a primal log-barrier method) yields a
monotonically improving sequence of KKT points; iteration stops once the
utility U = sum (W/K) log2(1 + gamma) changes by less than the tolerance.

The inter-cell interference seen by each tuple is approximated by the preset
level I_th; callers refresh I_th between outer rounds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .config import NetworkConfig
from .model import Allocation, ChannelSet, combined_gain_table
from .solvers import minimize_barrier

__all__ = [
    "LAMBDA_FLOOR",
    "CubState",
    "PowerSolution",
    "cub_value",
    "update_lambda",
    "solve_power_subproblem",
    "allocate_power",
    "equal_power_split",
    "cub_from_allocation",
]

LAMBDA_FLOOR = 1e-6  # watts per unit SINR; guards the lambda update at p_hat or gamma == 0

_LN2 = float(np.log(2.0))


def cub_value(gamma, p_hat, lam):
    """Convex upper bound (lambda/2) gamma^2 + p_hat^2 / (2 lambda) of gamma * p_hat."""
    gamma = np.asarray(gamma, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("lambda must be positive")
    out = 0.5 * lam * gamma**2 + p_hat**2 / (2.0 * lam)
    return float(out) if out.ndim == 0 else out


def update_lambda(gamma, p_hat, floor: float = LAMBDA_FLOOR):
    """lambda = p_hat / gamma elementwise; the floor substitutes exact zeros."""
    gamma = np.asarray(gamma, dtype=float)
    p_hat = np.asarray(p_hat, dtype=float)
    lam = np.full(np.broadcast(gamma, p_hat).shape, floor)
    ok = (gamma > 0) & (p_hat > 0)
    lam[ok] = p_hat[ok] / gamma[ok]
    return float(lam) if lam.ndim == 0 else lam


@dataclass(frozen=True)
class CubState:
    """Converged tables and the iteration trace of one allocate_power call."""

    p: np.ndarray
    gamma: np.ndarray
    lam: np.ndarray
    xi: np.ndarray
    p_hat: np.ndarray
    utility_trace: tuple[float, ...]
    kkt_trace: tuple[float, ...]
    status: str  # converged | max_iters | infeasible
    iterations: int

    def export_trace(self, path: str) -> None:
        """Write the iteration trace as CSV (iter, U, maxKktResidual)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "U", "maxKktResidual"])
            for n, u in enumerate(self.utility_trace):
                kkt = "" if n == 0 else f"{self.kkt_trace[n - 1]:.6g}"
                writer.writerow([n, f"{u:.10g}", kkt])


@dataclass(frozen=True)
class PowerSolution:
    p: np.ndarray
    gamma: np.ndarray
    kkt_residual: float
    status: str  # optimal | infeasible


class _TupleData:
    """Served tuples flattened for the solver, with cluster structure."""

    def __init__(self, cfg: NetworkConfig, alloc: Allocation, gains2: np.ndarray):
        users, bss, subs, ranks = [], [], [], []
        for j in range(cfg.num_bs):
            for k in range(cfg.num_subchannels):
                for pos, i in enumerate(alloc.order[j][k]):
                    users.append(i)
                    bss.append(j)
                    subs.append(k)
                    ranks.append(pos)
        self.users = np.array(users, dtype=int)
        self.bss = np.array(bss, dtype=int)
        self.subs = np.array(subs, dtype=int)
        self.count = len(users)
        self.gain2 = gains2[self.users, self.bss, self.subs] if self.count else np.zeros(0)
        # later[t, u] = 1 when tuple u belongs to the same cluster as t and is
        # decoded after it, so p_hat = later @ p.
        t = self.count
        later = np.zeros((t, t))
        ranks = np.array(ranks)
        for a in range(t):
            same = (self.bss == self.bss[a]) & (self.subs == self.subs[a])
            later[a, same & (ranks > ranks[a])] = 1.0
        self.later = later
        self.bs_tuples = [np.flatnonzero(self.bss == j) for j in range(cfg.num_bs)]
        self.user_tuples = [np.flatnonzero(self.users == i) for i in range(cfg.num_users)]

    def scatter(self, values: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
        dense = np.zeros(shape)
        dense[self.users, self.bss, self.subs] = values
        return dense

    def gather(self, table_or_scalar) -> np.ndarray:
        """Per-tuple values from a scalar or an (I, J, K) table."""
        arr = np.asarray(table_or_scalar, dtype=float)
        if arr.ndim == 0:
            return np.full(self.count, float(arr))
        return arr[self.users, self.bss, self.subs]


def _kkt_residual(f_grad, g, jac, mults) -> float:
    """Stationarity plus complementary-slackness residual of a certified point."""
    stationarity = float(np.max(np.abs(f_grad - jac.T @ mults)))
    comp = float(np.max(np.abs(mults * g))) if g.size else 0.0
    return max(stationarity, comp)


def _polish_active_set(objective, constraints, z, barrier_mults, active=None):
    """Newton crossover from the barrier point to a sharp KKT certificate.

    The barrier's conditioning caps its final accuracy around 1e-5; a few
    Newton steps on the active-set KKT system (stationarity plus active
    constraints as equalities) reach machine precision.  Falls back to the
    input point when the polish leaves the feasible region.
    """
    g, jac, curvature = constraints(z, True)
    if active is None:
        active = np.flatnonzero((barrier_mults >= 1e-7) & (g <= 1e-2 * (1.0 + g.max())))
    mults = np.zeros_like(g)
    if active.size == 0:
        return z, mults
    z_p = z.copy()
    mu_a = barrier_mults[active].copy()
    n = z.size
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for _ in range(8):
            f, f_grad, f_hess = objective(z_p)
            g, jac, curvature = constraints(z_p, True)
            mults = np.zeros_like(g)
            mults[active] = mu_a
            r1 = f_grad - jac[active].T @ mu_a
            r2 = g[active]
            if max(np.max(np.abs(r1)), np.max(np.abs(r2))) < 1e-11:
                break
            h = curvature(mults)
            if f_hess is not None:
                h = h + f_hess if h is not None else f_hess
            kkt = np.zeros((n + active.size, n + active.size))
            kkt[:n, :n] = h
            kkt[:n, n:] = -jac[active].T
            kkt[n:, :n] = jac[active]
            try:
                step = np.linalg.solve(kkt, -np.concatenate([r1, r2]))
            except np.linalg.LinAlgError:
                break
            # damp the Newton step so inactive constraints stay in range
            alpha = 1.0
            for _ in range(8):
                g_try = constraints(z_p + alpha * step[:n], False)[0]
                if np.all(np.isfinite(g_try)) and np.all(g_try >= -1e-9):
                    break
                alpha *= 0.5
            z_p = z_p + alpha * step[:n]
            mu_a = mu_a + alpha * step[n:]
        g, _, _ = constraints(z_p, False)
    if np.all(g >= -1e-12) and np.all(mu_a >= -1e-9):
        mults = np.zeros_like(g)
        mults[active] = np.maximum(mu_a, 0.0)
        return z_p, mults
    return z, None


def _gamma_max(p_n: np.ndarray, lam_n: np.ndarray, xi_n: np.ndarray, later: np.ndarray):
    """Largest gamma satisfying the CUB constraint at fixed normalized powers."""
    rhs = p_n - (later @ p_n) ** 2 / (2.0 * lam_n)
    rhs = np.maximum(rhs, 0.0)
    return 2.0 * rhs / (xi_n + np.sqrt(xi_n**2 + 2.0 * lam_n * rhs))


def _strict_power_start(
    data: _TupleData, lam_n: np.ndarray, start_n: np.ndarray | None, budgets: list[np.ndarray]
) -> np.ndarray:
    """A normalized power vector strictly inside budget and CUB constraints."""
    t = data.count
    if start_n is not None:
        p_n = np.maximum(start_n, 1e-9).copy()
    else:
        p_n = np.zeros(t)
        for idx in budgets:
            p_n[idx] = 0.8 / idx.size
    for idx in budgets:
        used = p_n[idx].sum()
        if used > 0.98:
            p_n[idx] *= 0.98 / used
    # shrink later-decoded powers until the CUB right side is positive
    shrink = 0.1
    for _ in range(40):
        rhs = p_n - (data.later @ p_n) ** 2 / (2.0 * lam_n)
        if rhs.min() > 1e-14:
            return p_n
        has_later = data.later.any(axis=0)
        p_n[has_later] *= shrink
        p_n = np.maximum(p_n, 1e-16)
    return p_n


class _SubproblemCore:
    """Reusable solver for the CUB-substituted subproblem at fixed structure.

    Variables z = [p_n, gamma(, s)] in budget-normalized units; constraint
    rows: budgets | soc | rate floors | p >= 0 | gamma >= 0.  Static pieces
    of the Jacobian are assembled once; lambda changes per call.
    """

    def __init__(self, cfg: NetworkConfig, data: _TupleData):
        self.data = data
        self.p_max = cfg.max_bs_power_w
        self.r_nat = cfg.min_rate_bps * cfg.num_subchannels * _LN2 / cfg.bandwidth_hz
        t_cnt = data.count
        self.t_cnt = t_cnt
        self.n_var = 2 * t_cnt
        self.budgets = [idx for idx in data.bs_tuples if idx.size]
        self.rate_groups = (
            [idx for idx in data.user_tuples if idx.size] if self.r_nat > 0 else []
        )
        self.n_b, self.n_r = len(self.budgets), len(self.rate_groups)
        self.arange_t = np.arange(t_cnt)
        self.budget_mat = np.zeros((self.n_b, t_cnt))
        for pos, idx in enumerate(self.budgets):
            self.budget_mat[pos, idx] = 1.0
        self.rate_mat = np.zeros((self.n_r, t_cnt))
        for pos, idx in enumerate(self.rate_groups):
            self.rate_mat[pos, idx] = 1.0
        self.templates = {
            False: self._template(False),
            True: self._template(True),
        }

    def _template(self, with_slack: bool) -> np.ndarray:
        extra = 1 if with_slack else 0
        m = self.n_b + self.t_cnt + self.n_r + self.n_var
        template = np.zeros((m, self.n_var + extra))
        template[: self.n_b, : self.t_cnt] = -self.budget_mat
        base = self.n_b + self.t_cnt + self.n_r
        template[base + np.arange(self.n_var), np.arange(self.n_var)] = 1.0
        if with_slack:
            template[self.n_b + self.t_cnt + np.arange(self.n_r), -1] = -1.0
        return template

    def _make_constraints(self, lam_n, xi_n, with_slack: bool):
        t_cnt, n_b, n_r = self.t_cnt, self.n_b, self.n_r
        base = n_b + t_cnt + n_r
        m = base + self.n_var
        later = self.data.later
        template = self.templates[with_slack]
        arange_t = self.arange_t

        def constraints(z, need_jac=True):
            p_n, gamma = z[:t_cnt], z[t_cnt : 2 * t_cnt]
            s = z[-1] if with_slack else 0.0
            p_hat_n = later @ p_n
            g = np.empty(m)
            g[:n_b] = 1.0 - self.budget_mat @ p_n
            g[n_b : n_b + t_cnt] = (
                p_n - 0.5 * lam_n * gamma**2 - p_hat_n**2 / (2.0 * lam_n) - xi_n * gamma
            )
            if n_r:
                g[n_b + t_cnt : base] = self.rate_mat @ np.log1p(gamma) - self.r_nat - s
            g[base : base + t_cnt] = p_n
            g[base + t_cnt :] = gamma
            if not need_jac:
                return g, None, None

            jac = template.copy()
            jac[n_b : n_b + t_cnt, :t_cnt] = -(p_hat_n / lam_n)[:, None] * later
            jac[n_b + arange_t, arange_t] += 1.0
            jac[n_b + arange_t, t_cnt + arange_t] = -(lam_n * gamma + xi_n)
            inv1g = 1.0 / (1.0 + gamma)
            if n_r:
                jac[n_b + t_cnt : base, t_cnt : 2 * t_cnt] = self.rate_mat * inv1g[None, :]

            def curvature(w):
                h = np.zeros((self.n_var + (1 if with_slack else 0),) * 2)
                w_soc = w[n_b : n_b + t_cnt]
                h[:t_cnt, :t_cnt] = later.T @ ((w_soc / lam_n)[:, None] * later)
                gg = w_soc * lam_n
                if n_r:
                    gg = gg + (w[n_b + t_cnt : base] @ self.rate_mat) * inv1g**2
                h[t_cnt + arange_t, t_cnt + arange_t] += gg
                return h

            return g, jac, curvature

        return constraints

    def _objective(self, z):
        t_cnt = self.t_cnt
        gamma = z[t_cnt : 2 * t_cnt]
        val = -float(np.log1p(gamma).sum())
        grad = np.zeros(self.n_var)
        grad[t_cnt:] = -1.0 / (1.0 + gamma)
        hess = np.zeros((self.n_var, self.n_var))
        hess[t_cnt + self.arange_t, t_cnt + self.arange_t] = 1.0 / (1.0 + gamma) ** 2
        return val, grad, hess

    def _min_rate_slack(self, gamma) -> float:
        if not self.rate_groups:
            return np.inf
        return float(np.min(self.rate_mat @ np.log1p(gamma))) - self.r_nat

    def solve(
        self,
        lam_n: np.ndarray,
        xi_n: np.ndarray,
        start_pn: np.ndarray | None = None,
        start_gamma: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray, float, str]:
        """Returns (p_n, gamma, kkt_residual, status) in normalized units."""
        t_cnt = self.t_cnt
        cons = self._make_constraints(lam_n, xi_n, with_slack=False)

        z0 = None
        t_start = 1.0
        if start_pn is not None and start_gamma is not None:
            cand = np.concatenate([start_pn, start_gamma])
            g0 = cons(cand, False)[0]
            if np.all(g0 > 0):
                z0 = cand
                t_start = 1e3
        if z0 is None:
            p0 = _strict_power_start(self.data, lam_n, start_pn, self.budgets)
            # 0.9 * gamma_max keeps a tenth of the cone slack; the floor only
            # guards the log barrier against an exact zero
            gamma0 = np.maximum(0.9 * _gamma_max(p0, lam_n, xi_n, self.data.later), 1e-300)
            z0 = np.concatenate([p0, gamma0])
            margin = 1e-3 * (1.0 + self.r_nat)
            if self.rate_groups and self._min_rate_slack(gamma0) <= margin:
                # phase 1: maximize the worst rate-floor slack; the early exit
                # fires as soon as a strict interior point appears, so the
                # loose gap only affects how infeasibility is certified
                s0 = self._min_rate_slack(gamma0)
                z1 = np.concatenate([z0, [s0 - 0.1 * (1.0 + abs(s0))]])

                def phase1_objective(z):
                    grad = np.zeros(self.n_var + 1)
                    grad[-1] = -1.0
                    return -float(z[-1]), grad, None

                def feasible_enough(z):
                    return self._min_rate_slack(z[t_cnt : 2 * t_cnt]) > margin

                res1 = minimize_barrier(
                    phase1_objective,
                    self._make_constraints(lam_n, xi_n, with_slack=True),
                    z1,
                    mu=60.0,
                    comp_tol=1e-4,
                    center_tol=1e-8,
                    stop_early=feasible_enough,
                )
                if not feasible_enough(res1.z):
                    return np.zeros(t_cnt), np.zeros(t_cnt), float("nan"), "infeasible"
                z0 = res1.z[:-1]

        res = minimize_barrier(
            self._objective, cons, z0,
            t0=t_start, mu=60.0, comp_tol=1e-6, center_tol=1e-10,
        )

        def certify(z_raw, mu_raw):
            _, f_grad, _ = self._objective(z_raw)
            g, jac, _ = cons(z_raw)
            return _kkt_residual(f_grad, g, jac, mu_raw)

        best_z, best_mu = res.z, res.multipliers
        best_kkt = certify(best_z, best_mu)
        g_bar, jac_bar, _ = cons(res.z, True)
        _, f_grad_bar, _ = self._objective(res.z)
        # cheap certificate first: refit multipliers of near-active rows by
        # nonnegative least squares (drop rows that fit negative) without
        # moving the point
        for g_rel in (1e-3, 1e-5):
            if best_kkt <= 1e-8:
                break
            active = np.flatnonzero(g_bar <= g_rel * (1.0 + g_bar.max()))
            fit = np.zeros(0)
            for _ in range(6):
                if active.size == 0:
                    break
                fit, *_ = np.linalg.lstsq(jac_bar[active].T, f_grad_bar, rcond=None)
                if fit.min() >= -1e-12:
                    break
                active = active[fit > -1e-12]
            if active.size == 0:
                continue
            mu_ls = np.zeros_like(g_bar)
            mu_ls[active] = np.maximum(fit, 0.0)
            kkt_ls = certify(res.z, mu_ls)
            if kkt_ls < best_kkt:
                best_mu, best_kkt = mu_ls, kkt_ls
        # the right active set is not known exactly at the barrier's accuracy;
        # try a few thresholds and keep the sharpest certificate
        for mu_min, g_rel in ((1e-7, 1e-2), (1e-9, 1e-3), (0.0, 1e-5)):
            if best_kkt <= 1e-8:
                break
            active = np.flatnonzero(
                (res.multipliers >= mu_min) & (g_bar <= g_rel * (1.0 + g_bar.max()))
            )
            z_p, mu_p = _polish_active_set(
                self._objective, cons, res.z, res.multipliers, active=active
            )
            if mu_p is None:
                continue
            kkt_p = certify(z_p, mu_p)
            if kkt_p < best_kkt:
                best_z, best_mu, best_kkt = z_p, mu_p, kkt_p
        if best_kkt > 1e-6:
            # rare: every certificate missed; buy accuracy with more barrier
            res2 = minimize_barrier(
                self._objective, cons, res.z,
                t0=res.t, mu=60.0, comp_tol=1e-9, center_tol=1e-11, max_newton=300,
            )
            for candidate in (
                (res2.z, res2.multipliers),
                _polish_active_set(self._objective, cons, res2.z, res2.multipliers),
            ):
                z_c, mu_c = candidate
                if mu_c is None:
                    continue
                kkt_c = certify(z_c, mu_c)
                if kkt_c < best_kkt:
                    best_z, best_mu, best_kkt = z_c, mu_c, kkt_c
        # clip the polished point into the domain; the polish tolerance only
        # permits violations at round-off level
        best_z = np.maximum(best_z, 0.0)
        return best_z[:t_cnt], best_z[t_cnt:], best_kkt, "optimal"


def solve_power_subproblem(
    cfg: NetworkConfig,
    alloc: Allocation,
    gains2: np.ndarray,
    lam: np.ndarray,
    i_th: float | np.ndarray | None = None,
    start_p: np.ndarray | None = None,
) -> PowerSolution:
    """Solve the CUB-substituted convex power subproblem for fixed lambda.

    Maximizes sum (W/K) log2(1 + gamma) over powers and SINR targets subject
    to the per-BS budget, the per-user rate floor and the second-order-cone
    form of the SINR constraint.  i_th may be a scalar preset or an (I, J, K)
    table of per-tuple interference presets.  Returns a point with KKT
    residual <= 1e-6 (in budget-normalized units), or status "infeasible"
    when the rate floors cannot all be met.
    """
    if i_th is None:
        i_th = cfg.inter_threshold_w
    data = _TupleData(cfg, alloc, gains2)
    if data.count == 0:
        return PowerSolution(
            p=np.zeros_like(alloc.power), gamma=np.zeros_like(alloc.power), kkt_residual=0.0,
            status="optimal",
        )
    if np.any(data.gain2 <= 0):
        raise ValueError("combined gain must be positive on every served tuple")

    p_max = cfg.max_bs_power_w
    lam_t = lam[data.users, data.bss, data.subs] if lam.ndim == 3 else np.asarray(lam, dtype=float)
    if np.any(lam_t <= 0):
        raise ValueError("lambda must be positive on served tuples")
    core = _SubproblemCore(cfg, data)
    xi_n = (data.gather(i_th) + cfg.noise_power_w) / data.gain2 / p_max
    start_n = None if start_p is None else start_p[data.users, data.bss, data.subs] / p_max
    p_n, gamma, kkt, status = core.solve(lam_t / p_max, xi_n, start_pn=start_n)
    shape = alloc.power.shape
    if status == "infeasible":
        return PowerSolution(
            p=np.zeros(shape), gamma=np.zeros(shape), kkt_residual=kkt, status=status
        )
    return PowerSolution(
        p=data.scatter(p_n * p_max, shape),
        gamma=data.scatter(gamma, shape),
        kkt_residual=kkt,
        status=status,
    )


def equal_power_split(cfg: NetworkConfig, alloc: Allocation, fraction: float = 0.8) -> np.ndarray:
    """Equal division of fraction * P_max over each BS's served tuples."""
    power = np.zeros_like(alloc.power)
    for j in range(cfg.num_bs):
        users = np.flatnonzero(alloc.assoc[:, j])
        subs = np.flatnonzero(alloc.subch[j])
        n = users.size * subs.size
        if n:
            power[np.ix_(users, [j], subs)] = fraction * cfg.max_bs_power_w / n
    return power


def achieved_gamma(
    cfg: NetworkConfig, data: _TupleData, p_t: np.ndarray, i_th
) -> np.ndarray:
    """Per-tuple SINR under the I_th inter-cell approximation."""
    ith_t = data.gather(i_th)
    return data.gain2 * p_t / (data.gain2 * (data.later @ p_t) + ith_t + cfg.noise_power_w)


def cub_from_allocation(
    cfg: NetworkConfig, ch: ChannelSet, alloc: Allocation, i_th=None
) -> CubState:
    """CubState snapshot of an existing allocation (gamma = achieved SINR)."""
    if i_th is None:
        i_th = cfg.inter_threshold_w
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    data = _TupleData(cfg, alloc, gains2)
    shape = alloc.power.shape
    if data.count == 0:
        empty = np.zeros(shape)
        return CubState(empty, empty, empty, empty, empty, (0.0,), (), "provisional", 0)
    p_t = alloc.power[data.users, data.bss, data.subs]
    gamma_t = achieved_gamma(cfg, data, p_t, i_th)
    p_hat_t = data.later @ p_t
    u0 = cfg.subchannel_bandwidth_hz / _LN2 * float(np.log1p(gamma_t).sum())
    return CubState(
        p=data.scatter(p_t, shape),
        gamma=data.scatter(gamma_t, shape),
        lam=data.scatter(update_lambda(gamma_t, p_hat_t), shape),
        xi=data.scatter((data.gather(i_th) + cfg.noise_power_w) / data.gain2, shape),
        p_hat=data.scatter(p_hat_t, shape),
        utility_trace=(u0,),
        kkt_trace=(),
        status="provisional",
        iterations=0,
    )


def allocate_power(
    cfg: NetworkConfig,
    ch: ChannelSet,
    alloc: Allocation,
    i_th: float | np.ndarray | None = None,
    *,
    tol: float | None = None,
    max_iters: int | None = None,
    init_power: np.ndarray | None = None,
) -> tuple[Allocation, CubState]:
    """Run the CUB power-allocation iteration until the utility stalls.

    Starts from an equal split of 0.8 * P_max per BS with gamma matching the
    achieved SINR (or from init_power when given, e.g. the previous outer
    round's powers), then alternates the lambda update with the convex
    subproblem.  i_th is the scalar or per-tuple inter-cell interference
    preset.  The utility trace is nondecreasing; iteration ends when the
    relative change drops below tol (default cfg.tolerance) or after
    max_iters (default cfg.max_power_iters) rounds.
    """
    if i_th is None:
        i_th = cfg.inter_threshold_w
    tol = cfg.tolerance if tol is None else tol
    n1 = cfg.max_power_iters if max_iters is None else max_iters

    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    data = _TupleData(cfg, alloc, gains2)
    shape = alloc.power.shape
    rate_scale = cfg.subchannel_bandwidth_hz / _LN2  # bit/s per nat

    if data.count == 0:
        empty = np.zeros(shape)
        state = CubState(empty, empty, empty, empty, empty, (0.0,), (), "converged", 0)
        return alloc.replace(power=empty), state

    if np.any(data.gain2 <= 0):
        raise ValueError("combined gain must be positive on every served tuple")

    if init_power is not None and np.all(init_power[data.users, data.bss, data.subs] > 0):
        p_dense = init_power
    else:
        p_dense = equal_power_split(cfg, alloc)
    p_t = p_dense[data.users, data.bss, data.subs]
    gamma_t = achieved_gamma(cfg, data, p_t, i_th)

    core = _SubproblemCore(cfg, data)
    p_max = cfg.max_bs_power_w
    xi_n = (data.gather(i_th) + cfg.noise_power_w) / data.gain2 / p_max

    def utility(g):
        return rate_scale * float(np.log1p(g).sum())

    status = "max_iters"
    iterations = 0
    infeasible = False
    if n1 > 0 and core._min_rate_slack(gamma_t) < 0:
        # the equal split (or warm start) misses a rate floor; restore a
        # feasible interior initialization before the monotone iteration
        lam0_n = update_lambda(gamma_t, data.later @ p_t) / p_max
        p_n, gamma_n, _, st0 = core.solve(lam0_n, xi_n, start_pn=p_t / p_max)
        if st0 == "infeasible":
            infeasible = True
            status = "infeasible"
        else:
            p_t, gamma_t = p_n * p_max, gamma_n

    trace = [utility(gamma_t)]
    kkts: list[float] = []
    for _ in range(0 if infeasible else n1):
        p_hat_t = data.later @ p_t
        lam_n = update_lambda(gamma_t, p_hat_t) / p_max
        p_n, gamma_n, kkt, st = core.solve(
            lam_n, xi_n, start_pn=p_t / p_max, start_gamma=gamma_t
        )
        if st == "infeasible":
            status = "infeasible"
            break
        iterations += 1
        # snap vanishing entries to exact zero so the next lambda update
        # floors them instead of producing astronomically large coefficients
        gamma_n[gamma_n < 1e-12] = 0.0
        p_n[p_n < 1e-12] = 0.0
        u_new = utility(gamma_n)
        if u_new < trace[-1]:
            # the subproblem can only stall numerically; keep the better point
            status = "converged"
            break
        p_t, gamma_t = p_n * p_max, gamma_n
        kkts.append(kkt)
        improvement = u_new - trace[-1]
        trace.append(u_new)
        if improvement < tol * max(abs(trace[-2]), 1e-9):
            status = "converged"
            break

    lam_final = update_lambda(gamma_t, data.later @ p_t)
    xi_t = (data.gather(i_th) + cfg.noise_power_w) / data.gain2
    state = CubState(
        p=data.scatter(p_t, shape),
        gamma=data.scatter(gamma_t, shape),
        lam=data.scatter(lam_final, shape),
        xi=data.scatter(xi_t, shape),
        p_hat=data.scatter(data.later @ p_t, shape),
        utility_trace=tuple(trace),
        kkt_trace=tuple(kkts),
        status=status,
        iterations=iterations,
    )
    return alloc.replace(power=state.p), state
