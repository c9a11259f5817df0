import numpy as np
import pytest

from irsnoma.config import NetworkConfig
from irsnoma.model import Allocation, ChannelSet, PhaseConfig


@pytest.fixture
def default_cfg():
    return NetworkConfig()


def make_channels(cfg: NetworkConfig, rng: np.random.Generator, irs_scale: float = 1.0):
    """Synthetic O(1)-scale fading for formula-level tests."""
    i, j, k, m = cfg.num_users, cfg.num_bs, cfg.num_subchannels, cfg.num_elements

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelSet(
        direct=cn(i, j, k),
        bs_to_irs=cn(j, k, m),
        irs_to_user=irs_scale * cn(i, k, m),
    )


def single_cell_cfg(num_users=2, num_subchannels=1, num_elements=1, **kw):
    """Small single-cell scenario with O(1) synthetic units."""
    defaults = dict(
        num_users=num_users,
        num_bs=1,
        num_subchannels=num_subchannels,
        num_elements=num_elements,
        bandwidth_hz=3e6,
        noise_power_w=1.0,
        min_rate_bps=0.0,
        max_bs_power_w=10.0,
        max_cluster_size=max(2, num_users),
        inter_threshold_w=1e-12,
        user_positions=tuple((50.0 * (n + 1), 30.0, 0.0) for n in range(num_users)),
        bs_positions=((100.0, 0.0, 20.0),),
    )
    defaults.update(kw)
    return NetworkConfig(**defaults)


def full_alloc(cfg: NetworkConfig, power: np.ndarray, order=None, theta=None):
    """Allocation serving every user on every subchannel of its (single) BS."""
    assoc = np.zeros((cfg.num_users, cfg.num_bs), dtype=bool)
    assoc[:, 0] = True
    subch = np.ones((cfg.num_bs, cfg.num_subchannels), dtype=bool)
    if order is None:
        order = tuple(
            tuple(tuple(range(cfg.num_users)) for _ in range(cfg.num_subchannels))
            for _ in range(cfg.num_bs)
        )
    phases = PhaseConfig.from_theta(theta if theta is not None else np.zeros(cfg.num_elements))
    return Allocation(assoc=assoc, subch=subch, power=power, order=order, phases=phases)
