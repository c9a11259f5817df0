"""Domain types and link-level math for the IRS-aided multi-cell NOMA downlink.

Conventions
-----------
* Indices are 0-based everywhere in code; user/BS/subchannel numbering in
  docstrings follows the 1-based scenario description.
* The combined gain of user i served by BS j on subchannel k is

      H_ijk = h_ijk + sum_m conj(nu_m) * conj(g_ikm) * f_jkm,

  with nu_m = exp(1j*theta_m) the reflection response of element m, i.e. the
  inner-product form H = h + nu^H rho with rho = diag(g^H) f.
* Powers are in watts, rates in bit/s.  Each subchannel carries W/K of the
  total bandwidth and sees noise power sigma^2.
* Decoding position 0 is decoded first (the weakest user of the cluster);
  users decoded later interfere with earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .config import NetworkConfig

__all__ = [
    "PhaseConfig",
    "ChannelSet",
    "Allocation",
    "RateReport",
    "Violation",
    "combined_gain",
    "combined_gain_table",
    "sinr",
    "rates",
    "rates_from_gains",
    "sic_margin",
    "all_sic_margins",
    "validate_allocation",
    "SIC_MARGIN_TOL",
]

# Absolute slack tolerance for the SIC-order margin check (7c).
SIC_MARGIN_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PhaseConfig:
    """Reflection phases theta_m in [0, 2*pi) and responses nu_m = e^{j theta_m}."""

    theta: np.ndarray
    nu: np.ndarray

    def __post_init__(self) -> None:
        theta = _readonly(np.asarray(self.theta, dtype=float))
        nu = _readonly(np.asarray(self.nu, dtype=complex))
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "nu", nu)
        if theta.shape != nu.shape or theta.ndim != 1:
            raise ValueError("theta and nu must be 1-D arrays of equal length")
        if theta.size and np.max(np.abs(np.abs(nu) - 1.0)) > 1e-12:
            raise ValueError("|nu_m| must equal 1 within 1e-12")
        if theta.size and np.max(np.abs(nu - np.exp(1j * theta))) > 1e-9:
            raise ValueError("nu must equal exp(1j*theta)")

    @classmethod
    def from_theta(cls, theta: Iterable[float]) -> "PhaseConfig":
        theta = np.mod(np.asarray(list(theta), dtype=float), 2.0 * np.pi)
        return cls(theta=theta, nu=np.exp(1j * theta))

    @classmethod
    def zeros(cls, num_elements: int) -> "PhaseConfig":
        return cls.from_theta(np.zeros(num_elements))

    @property
    def num_elements(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class ChannelSet:
    """One fading realization.

    direct[i, j, k]      BS j -> user i on subchannel k (complex amplitude)
    bs_to_irs[j, k, :]   BS j -> IRS on subchannel k (M-vector)
    irs_to_user[i, k, :] IRS -> user i on subchannel k (M-vector)
    """

    direct: np.ndarray
    bs_to_irs: np.ndarray
    irs_to_user: np.ndarray

    def __post_init__(self) -> None:
        direct = _readonly(np.asarray(self.direct, dtype=complex))
        bs_to_irs = _readonly(np.asarray(self.bs_to_irs, dtype=complex))
        irs_to_user = _readonly(np.asarray(self.irs_to_user, dtype=complex))
        object.__setattr__(self, "direct", direct)
        object.__setattr__(self, "bs_to_irs", bs_to_irs)
        object.__setattr__(self, "irs_to_user", irs_to_user)
        if direct.ndim != 3 or bs_to_irs.ndim != 3 or irs_to_user.ndim != 3:
            raise ValueError("channel arrays must be 3-D")
        i, j, k = direct.shape
        if bs_to_irs.shape[:2] != (j, k) or irs_to_user.shape[:2] != (i, k):
            raise ValueError("channel array shapes are inconsistent")
        if bs_to_irs.shape[2] != irs_to_user.shape[2]:
            raise ValueError("element counts of bs_to_irs and irs_to_user differ")
        for name in ("direct", "bs_to_irs", "irs_to_user"):
            if not np.all(np.isfinite(getattr(self, name).view(float))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        i, j, k = self.direct.shape
        return i, j, k, self.bs_to_irs.shape[2]

    def check_dims(self, cfg: NetworkConfig) -> None:
        if self.shape != (cfg.num_users, cfg.num_bs, cfg.num_subchannels, cfg.num_elements):
            raise ValueError(
                f"channel dimensions {self.shape} do not match config "
                f"({cfg.num_users}, {cfg.num_bs}, {cfg.num_subchannels}, {cfg.num_elements})"
            )


OrderTable = tuple[tuple[tuple[int, ...], ...], ...]


@dataclass(frozen=True)
class Allocation:
    """Full decision state: association, assignment, powers, order, phases.

    assoc[i, j]    user i attached to BS j (exactly one j per user)
    subch[j, k]    subchannel k assigned to BS j
    power[i, j, k] transmit power in watts (positive only on served tuples)
    order[j][k]    user ids of cluster (j, k) in decoding sequence,
                   first decoded first; empty tuple when j does not hold k
    """

    assoc: np.ndarray
    subch: np.ndarray
    power: np.ndarray
    order: OrderTable
    phases: PhaseConfig

    def __post_init__(self) -> None:
        assoc = _readonly(np.asarray(self.assoc, dtype=bool))
        subch = _readonly(np.asarray(self.subch, dtype=bool))
        power = _readonly(np.asarray(self.power, dtype=float))
        object.__setattr__(self, "assoc", assoc)
        object.__setattr__(self, "subch", subch)
        object.__setattr__(self, "power", power)
        object.__setattr__(
            self,
            "order",
            tuple(tuple(tuple(int(u) for u in cl) for cl in row) for row in self.order),
        )
        i, j = assoc.shape
        if subch.shape[0] != j or power.shape != (i, j, subch.shape[1]):
            raise ValueError("allocation array shapes are inconsistent")
        if len(self.order) != j or any(len(row) != subch.shape[1] for row in self.order):
            raise ValueError("order table shape must be (J, K)")

    @property
    def served(self) -> np.ndarray:
        """Boolean (I, J, K) mask of served tuples: assoc[i,j] and subch[j,k]."""
        return self.assoc[:, :, None] & self.subch[None, :, :]

    def users_of_bs(self, j: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.assoc[:, j]))

    def subchannels_of_bs(self, j: int) -> tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.subch[j]))

    def replace(self, **kwargs) -> "Allocation":
        data = {
            "assoc": self.assoc,
            "subch": self.subch,
            "power": self.power,
            "order": self.order,
            "phases": self.phases,
        }
        data.update(kwargs)
        return Allocation(**data)


@dataclass(frozen=True)
class RateReport:
    """Per-tuple SINR / rate tables plus aggregates for one allocation."""

    sinr: np.ndarray
    rate: np.ndarray
    intra: np.ndarray
    inter: np.ndarray
    per_user_rate: np.ndarray
    sum_rate: float

    def __post_init__(self) -> None:
        for name in ("sinr", "rate", "intra", "inter", "per_user_rate"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))


class Violation(NamedTuple):
    """One violated constraint of the sum-rate problem, as data."""

    constraint: str
    detail: str


def combined_gain(ch: ChannelSet, ph: PhaseConfig, i: int, j: int, k: int) -> complex:
    """Combined channel gain H_ijk = h_ijk + nu^H rho_ijk."""
    cascaded = np.conj(ph.nu) * np.conj(ch.irs_to_user[i, k]) * ch.bs_to_irs[j, k]
    return complex(ch.direct[i, j, k] + cascaded.sum())


def combined_gain_table(ch: ChannelSet, ph: PhaseConfig) -> np.ndarray:
    """All combined gains H as a complex (I, J, K) array."""
    cascade = np.einsum(
        "m,ikm,jkm->ijk", np.conj(ph.nu), np.conj(ch.irs_to_user), ch.bs_to_irs
    )
    return ch.direct + cascade


def _interference(
    gains2: np.ndarray, power: np.ndarray, order: OrderTable
) -> tuple[np.ndarray, np.ndarray]:
    """Intra-cell and inter-cell interference tables in watts, shape (I, J, K)."""
    num_j, num_k = gains2.shape[1], gains2.shape[2]

    intra = np.zeros_like(gains2)
    for j in range(num_j):
        for k in range(num_k):
            cluster = order[j][k]
            tail = 0.0
            # users decoded after position n interfere with the user at n
            for pos in range(len(cluster) - 1, -1, -1):
                i = cluster[pos]
                intra[i, j, k] = gains2[i, j, k] * tail
                tail += power[i, j, k]

    cell_power = power.sum(axis=0)  # (J, K): total power of each cell per subchannel
    total = np.einsum("ijk,jk->ik", gains2, cell_power)
    inter = total[:, None, :] - gains2 * cell_power[None, :, :]
    return intra, inter


def rates_from_gains(
    cfg: NetworkConfig, gains2: np.ndarray, power: np.ndarray, order: OrderTable
) -> RateReport:
    """RateReport from precomputed |H|^2; used wherever gains are cached."""
    intra, inter = _interference(gains2, power, order)
    sinr_table = gains2 * power / (intra + inter + cfg.noise_power_w)
    rate = cfg.subchannel_bandwidth_hz * np.log2(1.0 + sinr_table)
    return RateReport(
        sinr=sinr_table,
        rate=rate,
        intra=intra,
        inter=inter,
        per_user_rate=rate.sum(axis=(1, 2)),
        sum_rate=float(rate.sum()),
    )


def sinr(cfg: NetworkConfig, ch: ChannelSet, alloc: Allocation) -> np.ndarray:
    """Received SINR table, shape (I, J, K).

    SINR_ijk = |H_ijk|^2 P_ijk / (I_intra + I_inter + sigma^2) on served tuples
    with positive power, zero elsewhere.
    """
    ch.check_dims(cfg)
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    intra, inter = _interference(gains2, alloc.power, alloc.order)
    return gains2 * alloc.power / (intra + inter + cfg.noise_power_w)


def rates(cfg: NetworkConfig, ch: ChannelSet, alloc: Allocation) -> RateReport:
    """Achievable rates R_ijk = (W/K) log2(1 + SINR_ijk) and aggregates."""
    ch.check_dims(cfg)
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    return rates_from_gains(cfg, gains2, alloc.power, alloc.order)


def sic_margin(
    cfg: NetworkConfig,
    ch: ChannelSet,
    alloc: Allocation,
    j: int,
    k: int,
    i: int,
    i_tilde: int,
) -> float:
    """Decoding-order margin Delta_jk(i, i~) for co-clustered users i, i~.

    Delta = |H_i~jk|^2 (E_i + sigma^2) - |H_ijk|^2 (E_i~ + sigma^2), where E_u
    is user u's inter-cell interference on subchannel k.  Nonnegative Delta
    certifies that user i~ (decoded no earlier than i) can decode and cancel
    user i's signal.
    """
    cluster = alloc.order[j][k]
    if i == i_tilde or i not in cluster or i_tilde not in cluster:
        raise ValueError(f"users {i} and {i_tilde} are not co-clustered on ({j}, {k})")
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    _, inter = _interference(gains2, alloc.power, alloc.order)
    sig2 = cfg.noise_power_w
    return float(
        gains2[i_tilde, j, k] * (inter[i, j, k] + sig2)
        - gains2[i, j, k] * (inter[i_tilde, j, k] + sig2)
    )


def all_sic_margins(
    cfg: NetworkConfig, ch: ChannelSet, alloc: Allocation
) -> list[tuple[int, int, int, int, float]]:
    """Margins Delta_jk(i, i~) for every ordered cluster pair pi(i) <= pi(i~)."""
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    _, inter = _interference(gains2, alloc.power, alloc.order)
    sig2 = cfg.noise_power_w
    out = []
    for j in range(cfg.num_bs):
        for k in range(cfg.num_subchannels):
            cluster = alloc.order[j][k]
            for a in range(len(cluster)):
                for b in range(a + 1, len(cluster)):
                    i, i_t = cluster[a], cluster[b]
                    delta = gains2[i_t, j, k] * (inter[i, j, k] + sig2) - gains2[i, j, k] * (
                        inter[i_t, j, k] + sig2
                    )
                    out.append((j, k, i, i_t, float(delta)))
    return out


def validate_allocation(
    cfg: NetworkConfig,
    alloc: Allocation,
    ch: ChannelSet | None = None,
    report: RateReport | None = None,
    margin_tol: float = SIC_MARGIN_TOL,
) -> list[Violation]:
    """Check constraints (7e)-(7i), and (7c)/(7d) when channels/rates are given.

    Returns an empty list when the allocation is feasible.  Violations are
    returned as data; nothing raises.
    """
    out: list[Violation] = []
    assoc, subch, power = alloc.assoc, alloc.subch, alloc.power

    per_user = assoc.sum(axis=1)
    for i in np.flatnonzero(per_user != 1):
        out.append(Violation("7f", f"user {i} associated with {per_user[i]} BSs (need 1)"))
    per_bs = assoc.sum(axis=0)
    for j in range(cfg.num_bs):
        if not (2 <= per_bs[j] <= cfg.max_cluster_size):
            out.append(
                Violation(
                    "7g",
                    f"BS {j} serves {per_bs[j]} users (need 2..{cfg.max_cluster_size})",
                )
            )
    for j in np.flatnonzero(subch.sum(axis=1) < 1):
        out.append(Violation("7h", f"BS {j} holds no subchannel"))
    for k in np.flatnonzero(subch.sum(axis=0) < 1):
        out.append(Violation("7i", f"subchannel {k} serves no BS"))

    bs_power = power.sum(axis=(0, 2))
    for j in np.flatnonzero(bs_power > cfg.max_bs_power_w * (1.0 + 1e-12) + 1e-15):
        out.append(
            Violation("7e", f"BS {j} power {bs_power[j]:.6g} W exceeds {cfg.max_bs_power_w:.6g} W")
        )

    stray = (power > 0) & ~alloc.served
    for i, j, k in zip(*np.nonzero(stray)):
        out.append(Violation("support", f"positive power on unserved tuple ({i}, {j}, {k})"))

    for j in range(cfg.num_bs):
        for k in range(cfg.num_subchannels):
            cluster = alloc.order[j][k]
            if alloc.subch[j, k]:
                if sorted(cluster) != sorted(alloc.users_of_bs(j)):
                    out.append(Violation("order", f"order[{j}][{k}] is not the cluster of BS {j}"))
            elif cluster:
                out.append(Violation("order", f"order[{j}][{k}] nonempty on unassigned subchannel"))

    if ch is not None:
        for j, k, i, i_t, delta in all_sic_margins(cfg, ch, alloc):
            if delta < -margin_tol:
                out.append(
                    Violation("7c", f"SIC margin Delta_{j}{k}({i},{i_t}) = {delta:.3e} < 0")
                )

    if report is not None:
        for i in np.flatnonzero(report.per_user_rate < cfg.min_rate_bps * (1.0 - 1e-12)):
            out.append(
                Violation(
                    "7d",
                    f"user {i} rate {report.per_user_rate[i]:.6g} bit/s "
                    f"< required {cfg.min_rate_bps:.6g}",
                )
            )
    return out
