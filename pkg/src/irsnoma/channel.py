"""Seeded generation of fading realizations for the scenario geometry.

Large-scale model: 30 dB reference loss at 1 m plus 10*n*log10(d) dB, with
exponent n = 3.5 on the obstructed BS-user links and n = 2.2 on the elevated
BS-IRS and IRS-user links.  Small-scale model: Rayleigh on BS-user and
IRS-user links, Rician (factor kappa, uniform-linear-array line-of-sight
steering) on BS-IRS links.  Everything is independent across subchannels and
deterministic in the seed: the direct, BS-IRS and IRS-user draws come from
three independent substreams, so e.g. zeroing the surface or changing M never
perturbs the direct-link realization.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .config import NetworkConfig
from .model import ChannelSet

__all__ = ["pathloss", "generate_channels", "without_irs", "dump_channels"]

_REFERENCE_LOSS_DB = 30.0


def pathloss(distance_m: float, exponent: float) -> float:
    """Linear power gain 10^(-(30 + 10*exponent*log10(d)) / 10) at d meters."""
    if distance_m <= 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    loss_db = _REFERENCE_LOSS_DB + 10.0 * exponent * np.log10(distance_m)
    return float(10.0 ** (-loss_db / 10.0))


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def _cn(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Circularly-symmetric complex Gaussian with unit variance per entry."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _ula_response(num_elements: int, azimuth: float) -> np.ndarray:
    """Uniform linear array steering vector e^{-j*pi*(m-1)*sin(azimuth)}."""
    m = np.arange(num_elements)
    return np.exp(-1j * np.pi * m * np.sin(azimuth))


def generate_channels(cfg: NetworkConfig, seed: int) -> ChannelSet:
    """Draw one ChannelSet for the configured geometry, deterministic in seed."""
    users = np.asarray(cfg.user_positions, dtype=float)
    bss = np.asarray(cfg.bs_positions, dtype=float)
    irs = np.asarray(cfg.irs_position, dtype=float)

    d_bs_user = _distances(users, bss)  # (I, J)
    d_irs_user = np.linalg.norm(users - irs[None, :], axis=1)  # (I,)
    d_bs_irs = np.linalg.norm(bss - irs[None, :], axis=1)  # (J,)
    if d_bs_user.min() <= 0 or d_irs_user.min() <= 0 or d_bs_irs.min() <= 0:
        raise ValueError("coincident node positions (zero distance)")

    i_n, j_n, k_n, m_n = cfg.num_users, cfg.num_bs, cfg.num_subchannels, cfg.num_elements
    rng_direct, rng_bs_irs, rng_irs_user = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )

    pl_direct = np.vectorize(pathloss)(d_bs_user, cfg.pl_exponent_direct)
    direct = np.sqrt(pl_direct)[:, :, None] * _cn(rng_direct, (i_n, j_n, k_n))

    # Rician BS-IRS links share the deterministic LoS steering per BS.
    kappa = cfg.rician_k
    los_scale = math.sqrt(kappa / (kappa + 1.0))
    nlos_scale = math.sqrt(1.0 / (kappa + 1.0))
    bs_to_irs = np.empty((j_n, k_n, m_n), dtype=complex)
    for j in range(j_n):
        azimuth = math.atan2(irs[1] - bss[j, 1], irs[0] - bss[j, 0])
        los = _ula_response(m_n, azimuth)
        amp = math.sqrt(pathloss(float(d_bs_irs[j]), cfg.pl_exponent_bs_irs))
        nlos = _cn(rng_bs_irs, (k_n, m_n))
        bs_to_irs[j] = amp * (los_scale * los[None, :] + nlos_scale * nlos)

    pl_irs_user = np.array([pathloss(float(d), cfg.pl_exponent_irs_user) for d in d_irs_user])
    irs_to_user = np.sqrt(pl_irs_user)[:, None, None] * _cn(rng_irs_user, (i_n, k_n, m_n))

    return ChannelSet(direct=direct, bs_to_irs=bs_to_irs, irs_to_user=irs_to_user)


def without_irs(ch: ChannelSet) -> ChannelSet:
    """The same realization with the surface removed (IRS-user links zeroed)."""
    return ChannelSet(
        direct=ch.direct,
        bs_to_irs=ch.bs_to_irs,
        irs_to_user=np.zeros_like(ch.irs_to_user),
    )


def dump_channels(ch: ChannelSet, path: str) -> None:
    """Write one realization as JSON.

    Schema: {"shape": {"users", "bs", "subchannels", "elements"},
             "direct": [{"user", "bs", "subchannel", "re", "im"}, ...],
             "bs_to_irs": [{"bs", "subchannel", "re": [...], "im": [...]}, ...],
             "irs_to_user": [{"user", "subchannel", "re": [...], "im": [...]}, ...]}
    """
    i_n, j_n, k_n, m_n = ch.shape
    doc = {
        "shape": {"users": i_n, "bs": j_n, "subchannels": k_n, "elements": m_n},
        "direct": [
            {
                "user": i,
                "bs": j,
                "subchannel": k,
                "re": float(ch.direct[i, j, k].real),
                "im": float(ch.direct[i, j, k].imag),
            }
            for i in range(i_n)
            for j in range(j_n)
            for k in range(k_n)
        ],
        "bs_to_irs": [
            {
                "bs": j,
                "subchannel": k,
                "re": [float(x) for x in ch.bs_to_irs[j, k].real],
                "im": [float(x) for x in ch.bs_to_irs[j, k].imag],
            }
            for j in range(j_n)
            for k in range(k_n)
        ],
        "irs_to_user": [
            {
                "user": i,
                "subchannel": k,
                "re": [float(x) for x in ch.irs_to_user[i, k].real],
                "im": [float(x) for x in ch.irs_to_user[i, k].imag],
            }
            for i in range(i_n)
            for k in range(k_n)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
