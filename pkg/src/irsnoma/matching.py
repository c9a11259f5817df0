"""Swap matching with externalities for user association and subchannel assignment.

A matching is a bipartite edge set with degree quotas.  Two players on the
same side may exchange one partner each (a swap); the pair is swap-blocking
when all four affected players weakly gain and at least one strictly gains
under the swapped matching, with utilities re-evaluated including
externalities.  The engines repeatedly apply blocking swaps until the state
is two-sided exchange-stable.

Utilities during matching are evaluated under an equal-power provisional
allocation with the current phases; the caller supplies a report function so
the same engine drives both the NOMA pipeline and the OMA baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import NetworkConfig
from .model import ChannelSet, OrderTable, PhaseConfig, RateReport, combined_gain_table, rates_from_gains

__all__ = [
    "DELTA_UTILITY",
    "MatchingState",
    "SwapPair",
    "SwapTrace",
    "MatchingContext",
    "user_bs_utility",
    "bs_utility",
    "bs_subchannel_utility",
    "subchannel_utility",
    "is_swap_blocking",
    "apply_swap",
    "round_robin_subchannels",
    "init_user_association",
    "init_subchannel_assignment",
    "match_users_to_bs",
    "match_bs_to_subchannels",
    "no_blocking_pair",
    "provisional_report_fn",
]

# strictness margin for "strictly greater" in the blocking test (bit/s)
DELTA_UTILITY = 1e-9


@dataclass(frozen=True)
class MatchingState:
    """Bipartite matching with per-side degree quotas.

    mode "user_bs":  side A = users (degree exactly 1), side B = BSs
                     (degree 2..A_max).
    mode "bs_subch": side A = BSs (degree >= 1), side B = subchannels
                     (degree >= 1).
    """

    mode: str
    num_a: int
    num_b: int
    edges: frozenset

    def matched_b(self, a: int) -> tuple[int, ...]:
        return tuple(sorted(b for (x, b) in self.edges if x == a))

    def matched_a(self, b: int) -> tuple[int, ...]:
        return tuple(sorted(a for (a, x) in self.edges if x == b))

    def assoc_matrix(self) -> np.ndarray:
        if self.mode != "user_bs":
            raise ValueError("not a user-BS matching")
        out = np.zeros((self.num_a, self.num_b), dtype=bool)
        for i, j in self.edges:
            out[i, j] = True
        return out

    def subch_matrix(self) -> np.ndarray:
        if self.mode != "bs_subch":
            raise ValueError("not a BS-subchannel matching")
        out = np.zeros((self.num_a, self.num_b), dtype=bool)
        for j, k in self.edges:
            out[j, k] = True
        return out


@dataclass(frozen=True)
class SwapPair:
    """Players e, e' exchanging partners w = mu(e) and w' = mu(e')."""

    e: int
    e_prime: int
    w: int
    w_prime: int
    deltas: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.e == self.e_prime:
            raise ValueError("swap requires two distinct players")
        if self.w == self.w_prime:
            raise ValueError("swapping identical partners is a no-op")


@dataclass
class SwapTrace:
    """Accepted swaps with the total utility before/after each."""

    swaps: list[tuple[SwapPair, float, float]] = field(default_factory=list)
    scans: int = 0
    capped: bool = False

    @property
    def deltas(self) -> list[float]:
        return [after - before for _, before, after in self.swaps]


def apply_swap(state: MatchingState, pair: SwapPair) -> MatchingState:
    """Exchange the partners of e and e'; every other edge is untouched."""
    old = {(pair.e, pair.w), (pair.e_prime, pair.w_prime)}
    if not old <= state.edges:
        raise ValueError("swap refers to edges not present in the matching")
    new = {(pair.e, pair.w_prime), (pair.e_prime, pair.w)}
    if new & state.edges:
        raise ValueError("swap would duplicate an existing edge (quota violation)")
    return MatchingState(
        mode=state.mode,
        num_a=state.num_a,
        num_b=state.num_b,
        edges=frozenset((state.edges - old) | new),
    )


def user_bs_utility(report: RateReport, i: int, j: int) -> float:
    """U_ij: user i's rate when associated with BS j (0 if unserved)."""
    return float(report.rate[i, j, :].sum())


def bs_utility(report: RateReport, j: int, users) -> float:
    """U_j: sum of U_ij over the BS's user set."""
    return float(sum(user_bs_utility(report, i, j) for i in users))


def bs_subchannel_utility(report: RateReport, j: int, k: int) -> float:
    """U_jk: BS j's rate on subchannel k, summed over its served users."""
    return float(report.rate[:, j, k].sum())


def subchannel_utility(report: RateReport, k: int, bss) -> float:
    """U_k: sum of U_jk over the BSs sharing subchannel k."""
    return float(sum(bs_subchannel_utility(report, j, k) for j in bss))


class MatchingContext:
    """Memoized utility evaluation for candidate matchings.

    report_fn(assoc, subch) must return the RateReport of the provisional
    allocation for that matching; results are cached on the matching key
    because phases and the power rule stay fixed during a matching phase.
    """

    def __init__(self, report_fn: Callable[[np.ndarray, np.ndarray], RateReport]):
        self._report_fn = report_fn
        self._cache: dict = {}

    def report(self, assoc: np.ndarray, subch: np.ndarray) -> RateReport:
        key = (assoc.tobytes(), subch.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = self._report_fn(assoc, subch)
            self._cache[key] = hit
        return hit

    def total(self, assoc: np.ndarray, subch: np.ndarray) -> float:
        return self.report(assoc, subch).sum_rate


def provisional_report_fn(
    cfg: NetworkConfig, ch: ChannelSet, phases: PhaseConfig
) -> Callable[[np.ndarray, np.ndarray], RateReport]:
    """NOMA provisional evaluator: equal power split of P_max per BS.

    Decoding orders are re-derived from the fixed phases for every candidate
    matching, then rates follow the standard SINR expression.
    """
    gains2 = np.abs(combined_gain_table(ch, phases)) ** 2

    def report_fn(assoc: np.ndarray, subch: np.ndarray) -> RateReport:
        power = np.zeros_like(gains2)
        for j in range(cfg.num_bs):
            users = np.flatnonzero(assoc[:, j])
            subs = np.flatnonzero(subch[j])
            if users.size and subs.size:
                power[np.ix_(users, [j], subs)] = cfg.max_bs_power_w / (users.size * subs.size)
        order = _order_from_gains(cfg, gains2, assoc, subch)
        return rates_from_gains(cfg, gains2, power, order)

    return report_fn


def _order_from_gains(
    cfg: NetworkConfig, gains2: np.ndarray, assoc: np.ndarray, subch: np.ndarray
) -> OrderTable:
    table = []
    for j in range(cfg.num_bs):
        row = []
        users = [int(i) for i in np.flatnonzero(assoc[:, j])]
        for k in range(cfg.num_subchannels):
            if subch[j, k]:
                row.append(tuple(sorted(users, key=lambda i: (gains2[i, j, k], i))))
            else:
                row.append(())
        table.append(tuple(row))
    return tuple(table)


def _four_utilities_user(
    report: RateReport, assoc: np.ndarray, i: int, i2: int, j: int, j2: int
) -> tuple[float, float, float, float]:
    u_i = user_bs_utility(report, i, int(np.flatnonzero(assoc[i])[0]))
    u_i2 = user_bs_utility(report, i2, int(np.flatnonzero(assoc[i2])[0]))
    u_j = bs_utility(report, j, np.flatnonzero(assoc[:, j]))
    u_j2 = bs_utility(report, j2, np.flatnonzero(assoc[:, j2]))
    return u_i, u_i2, u_j, u_j2


def _four_utilities_subch(
    report: RateReport, subch: np.ndarray, j: int, j2: int, k: int, k2: int
) -> tuple[float, float, float, float]:
    u_j = float(report.rate[:, j, subch[j]].sum())
    u_j2 = float(report.rate[:, j2, subch[j2]].sum())
    u_k = subchannel_utility(report, k, np.flatnonzero(subch[:, k]))
    u_k2 = subchannel_utility(report, k2, np.flatnonzero(subch[:, k2]))
    return u_j, u_j2, u_k, u_k2


def _swapped_assoc(assoc: np.ndarray, i: int, i2: int, j: int, j2: int) -> np.ndarray:
    out = assoc.copy()
    out[i, j] = False
    out[i, j2] = True
    out[i2, j2] = False
    out[i2, j] = True
    return out


def _swapped_subch(subch: np.ndarray, j: int, j2: int, k: int, k2: int) -> np.ndarray:
    out = subch.copy()
    out[j, k] = False
    out[j, k2] = True
    out[j2, k2] = False
    out[j2, k] = True
    return out


def is_swap_blocking(
    state: MatchingState,
    pair: SwapPair,
    ctx: MatchingContext,
    *,
    assoc: np.ndarray | None = None,
    subch: np.ndarray | None = None,
    delta: float = DELTA_UTILITY,
) -> bool:
    """Definition of a swap-blocking pair: all four weakly gain, one by > delta.

    For user association pass the fixed `subch`; for subchannel assignment
    pass the fixed `assoc`.  Quota-violating swaps raise ValueError.
    """
    if state.mode == "user_bs":
        if subch is None:
            raise ValueError("user-association blocking test needs the subchannel matrix")
        a0 = state.assoc_matrix()
        if not (a0[pair.e, pair.w] and a0[pair.e_prime, pair.w_prime]):
            raise ValueError("swap pair does not match the current association")
        a1 = _swapped_assoc(a0, pair.e, pair.e_prime, pair.w, pair.w_prime)
        before = _four_utilities_user(
            ctx.report(a0, subch), a0, pair.e, pair.e_prime, pair.w, pair.w_prime
        )
        after = _four_utilities_user(
            ctx.report(a1, subch), a1, pair.e, pair.e_prime, pair.w, pair.w_prime
        )
    elif state.mode == "bs_subch":
        if assoc is None:
            raise ValueError("subchannel blocking test needs the association matrix")
        s0 = state.subch_matrix()
        if not (s0[pair.e, pair.w] and s0[pair.e_prime, pair.w_prime]):
            raise ValueError("swap pair does not match the current assignment")
        if s0[pair.e, pair.w_prime] or s0[pair.e_prime, pair.w]:
            raise ValueError("swap would duplicate an existing edge (quota violation)")
        s1 = _swapped_subch(s0, pair.e, pair.e_prime, pair.w, pair.w_prime)
        before = _four_utilities_subch(
            ctx.report(assoc, s0), s0, pair.e, pair.e_prime, pair.w, pair.w_prime
        )
        after = _four_utilities_subch(
            ctx.report(assoc, s1), s1, pair.e, pair.e_prime, pair.w, pair.w_prime
        )
    else:
        raise ValueError(f"unknown matching mode {state.mode!r}")
    weakly = all(a >= b for a, b in zip(after, before))
    strictly = any(a > b + delta for a, b in zip(after, before))
    return weakly and strictly


def round_robin_subchannels(cfg: NetworkConfig) -> np.ndarray:
    """Deterministic starter assignment: BS j takes q subchannels from offset j*q."""
    q = cfg.subchannel_quota()
    out = np.zeros((cfg.num_bs, cfg.num_subchannels), dtype=bool)
    for j in range(cfg.num_bs):
        for t in range(q):
            out[j, (j * q + t) % cfg.num_subchannels] = True
    return out


def _single_user_scores(
    cfg: NetworkConfig, gains2: np.ndarray, subch: np.ndarray, power: float
) -> np.ndarray:
    """score[i, j]: user i's rate from BS j at the provisional per-tuple power."""
    denom = cfg.inter_threshold_w + cfg.noise_power_w
    per_k = cfg.subchannel_bandwidth_hz * np.log2(1.0 + gains2 * power / denom)
    return np.einsum("ijk,jk->ij", per_k, subch.astype(float))


def init_user_association(
    cfg: NetworkConfig,
    ch: ChannelSet,
    phases: PhaseConfig,
    subch: np.ndarray | None = None,
) -> MatchingState:
    """Deferred-acceptance initial association.

    Users propose in preference order, BSs keep their best up to A_max; a
    rebalancing pass then moves users from over-full BSs so every BS ends
    with at least two users.
    """
    if cfg.num_users > cfg.num_bs * cfg.max_cluster_size:
        raise ValueError("infeasible quotas: more users than J * A_max seats")
    if subch is None:
        subch = round_robin_subchannels(cfg)
    gains2 = np.abs(combined_gain_table(ch, phases)) ** 2
    k_per_bs = np.maximum(subch.sum(axis=1), 1)
    power = cfg.max_bs_power_w / (cfg.max_cluster_size * float(k_per_bs.max()))
    score = _single_user_scores(cfg, gains2, subch, power)

    prefs = {i: sorted(range(cfg.num_bs), key=lambda j: (-score[i, j], j)) for i in range(cfg.num_users)}
    rejected: dict[int, set[int]] = {i: set() for i in range(cfg.num_users)}
    matched: dict[int, int] = {}
    kept: dict[int, list[int]] = {j: [] for j in range(cfg.num_bs)}
    while len(matched) < cfg.num_users:
        proposals: dict[int, list[int]] = {j: [] for j in range(cfg.num_bs)}
        for i in range(cfg.num_users):
            if i in matched:
                continue
            choices = [j for j in prefs[i] if j not in rejected[i]]
            proposals[choices[0]].append(i)
        for j, incoming in proposals.items():
            pool = sorted(kept[j] + incoming, key=lambda i: (-score[i, j], i))
            kept[j] = pool[: cfg.max_cluster_size]
            for i in pool[cfg.max_cluster_size :]:
                rejected[i].add(j)
                matched.pop(i, None)
            for i in kept[j]:
                matched[i] = j

    # rebalance: (7g) demands at least two users per BS
    sizes = {j: len(kept[j]) for j in range(cfg.num_bs)}
    while any(s < 2 for s in sizes.values()):
        needy = min(j for j, s in sizes.items() if s < 2)
        donors = [j for j, s in sizes.items() if s > 2]
        if not donors:
            break  # cannot rebalance (I < 2J); validator reports the violation
        best = max(
            ((i, j) for j in donors for i in kept[j]),
            key=lambda pair: (score[pair[0], needy], -pair[0]),
        )
        i, donor = best
        kept[donor].remove(i)
        kept[needy].append(i)
        sizes[donor] -= 1
        sizes[needy] += 1

    edges = frozenset((i, j) for j, users in kept.items() for i in users)
    return MatchingState(mode="user_bs", num_a=cfg.num_users, num_b=cfg.num_bs, edges=edges)


def init_subchannel_assignment(
    cfg: NetworkConfig,
    ch: ChannelSet,
    phases: PhaseConfig,
    assoc: np.ndarray,
) -> MatchingState:
    """Initial assignment: one coverage round, then preference-ordered fill.

    Every subchannel first receives its best remaining BS so (7i) holds,
    then each BS extends to the quota with its own preferred subchannels.
    """
    q = cfg.subchannel_quota()
    gains2 = np.abs(combined_gain_table(ch, phases)) ** 2
    power = cfg.max_bs_power_w / (cfg.max_cluster_size * q)
    denom = cfg.inter_threshold_w + cfg.noise_power_w
    per_k = cfg.subchannel_bandwidth_hz * np.log2(1.0 + gains2 * power / denom)
    pref = np.einsum("ijk,ij->jk", per_k, assoc.astype(float))  # U_jk proxy

    held: dict[int, set[int]] = {j: set() for j in range(cfg.num_bs)}
    for k in range(cfg.num_subchannels):
        available = [j for j in range(cfg.num_bs) if len(held[j]) < q]
        j = max(available, key=lambda jj: (pref[jj, k], -jj))
        held[j].add(k)
    for j in range(cfg.num_bs):
        order = sorted(range(cfg.num_subchannels), key=lambda k: (-pref[j, k], k))
        for k in order:
            if len(held[j]) >= q:
                break
            held[j].add(k)
    edges = frozenset((j, k) for j, subs in held.items() for k in subs)
    return MatchingState(
        mode="bs_subch", num_a=cfg.num_bs, num_b=cfg.num_subchannels, edges=edges
    )


def match_users_to_bs(
    state: MatchingState,
    ctx: MatchingContext,
    subch: np.ndarray,
    *,
    delta: float = DELTA_UTILITY,
    max_scans: int | None = None,
) -> tuple[MatchingState, SwapTrace]:
    """Repeatedly apply the first blocking user swap until exchange-stable."""
    if max_scans is None:
        max_scans = 10 * state.num_a * state.num_b
    trace = SwapTrace()
    while trace.scans < max_scans:
        trace.scans += 1
        changed = False
        for i in range(state.num_a):
            for i2 in range(i + 1, state.num_a):
                j = state.matched_b(i)[0]
                j2 = state.matched_b(i2)[0]
                if j == j2:
                    continue
                pair = SwapPair(e=i, e_prime=i2, w=j, w_prime=j2)
                if is_swap_blocking(state, pair, ctx, subch=subch, delta=delta):
                    before = ctx.total(state.assoc_matrix(), subch)
                    state = apply_swap(state, pair)
                    trace.swaps.append((pair, before, ctx.total(state.assoc_matrix(), subch)))
                    changed = True
        if not changed:
            return state, trace
    trace.capped = True
    return state, trace


def match_bs_to_subchannels(
    state: MatchingState,
    ctx: MatchingContext,
    assoc: np.ndarray,
    *,
    delta: float = DELTA_UTILITY,
    max_scans: int | None = None,
) -> tuple[MatchingState, SwapTrace]:
    """Per-BS best-swap search until no blocking pair remains.

    For each BS the blocking candidates are collected and the one with the
    largest post-swap total utility is applied.
    """
    if max_scans is None:
        max_scans = 10 * state.num_a * state.num_b
    trace = SwapTrace()
    while trace.scans < max_scans:
        trace.scans += 1
        changed = False
        for j in range(state.num_a):
            subch0 = state.subch_matrix()
            candidates = []
            for k in state.matched_b(j):
                for j2 in range(state.num_a):
                    if j2 == j:
                        continue
                    for k2 in state.matched_b(j2):
                        if k2 == k or subch0[j, k2] or subch0[j2, k]:
                            continue
                        pair = SwapPair(e=j, e_prime=j2, w=k, w_prime=k2)
                        if is_swap_blocking(state, pair, ctx, assoc=assoc, delta=delta):
                            after = ctx.total(
                                assoc, _swapped_subch(subch0, j, j2, k, k2)
                            )
                            candidates.append((after, (j2, k, k2), pair))
            if candidates:
                candidates.sort(key=lambda c: (-c[0], c[1]))
                best = candidates[0]
                before = ctx.total(assoc, subch0)
                state = apply_swap(state, best[2])
                trace.swaps.append((best[2], before, best[0]))
                changed = True
        if not changed:
            return state, trace
    trace.capped = True
    return state, trace


def no_blocking_pair(
    state: MatchingState,
    ctx: MatchingContext,
    *,
    assoc: np.ndarray | None = None,
    subch: np.ndarray | None = None,
    delta: float = DELTA_UTILITY,
) -> bool:
    """Exhaustively certify two-sided exchange stability of `state`."""
    if state.mode == "user_bs":
        for i in range(state.num_a):
            for i2 in range(i + 1, state.num_a):
                j, j2 = state.matched_b(i)[0], state.matched_b(i2)[0]
                if j == j2:
                    continue
                pair = SwapPair(e=i, e_prime=i2, w=j, w_prime=j2)
                if is_swap_blocking(state, pair, ctx, subch=subch, delta=delta):
                    return False
        return True
    subch0 = state.subch_matrix()
    for j in range(state.num_a):
        for j2 in range(state.num_a):
            if j2 == j:
                continue
            for k in state.matched_b(j):
                for k2 in state.matched_b(j2):
                    if k2 == k or subch0[j, k2] or subch0[j2, k]:
                        continue
                    pair = SwapPair(e=j, e_prime=j2, w=k, w_prime=k2)
                    if is_swap_blocking(state, pair, ctx, assoc=assoc, delta=delta):
                        return False
    return True
