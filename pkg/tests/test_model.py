import numpy as np
import pytest

from irsnoma.config import NetworkConfig
from irsnoma.model import (
    Allocation,
    ChannelSet,
    PhaseConfig,
    combined_gain,
    combined_gain_table,
    rates,
    sic_margin,
    sinr,
    validate_allocation,
)
from irsnoma.channel import generate_channels

from conftest import full_alloc, make_channels, single_cell_cfg


def scalar_channel(h, g, f):
    """1-user 1-BS 1-subchannel ChannelSet with given entries."""
    m = len(g)
    return ChannelSet(
        direct=np.array(h, dtype=complex).reshape(1, 1, 1),
        bs_to_irs=np.array(f, dtype=complex).reshape(1, 1, m),
        irs_to_user=np.array(g, dtype=complex).reshape(1, 1, m),
    )


class TestCombinedGain:
    def test_reflected_path_vanishes(self):
        ch = scalar_channel(0.3 + 0.4j, [0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
        ph = PhaseConfig.from_theta(np.array([0.1, 0.2, 0.3]))
        assert combined_gain(ch, ph, 0, 0, 0) == pytest.approx(0.3 + 0.4j, abs=1e-15)

    def test_identity_phase_single_element(self):
        ch = scalar_channel(0.0, [1.0], [1.0])
        ph = PhaseConfig.from_theta([0.0])
        assert combined_gain(ch, ph, 0, 0, 0) == pytest.approx(1.0, abs=1e-15)

    def test_matches_term_by_term_expansion(self):
        # independent summation oracle over explicit complex terms
        rng = np.random.default_rng(3)
        cfg = single_cell_cfg(num_users=2, num_subchannels=2, num_elements=4)
        ch = make_channels(cfg, rng)
        ph = PhaseConfig.from_theta(rng.uniform(0, 2 * np.pi, 4))
        for i in range(2):
            for k in range(2):
                expected = complex(ch.direct[i, 0, k])
                for m in range(4):
                    expected += (
                        np.conj(ph.nu[m]) * np.conj(ch.irs_to_user[i, k, m]) * ch.bs_to_irs[0, k, m]
                    )
                got = combined_gain(ch, ph, i, 0, k)
                assert abs(got - expected) < 1e-12 * max(1.0, abs(expected))

    def test_table_matches_scalar(self):
        rng = np.random.default_rng(4)
        cfg = single_cell_cfg(num_users=2, num_subchannels=3, num_elements=5)
        ch = make_channels(cfg, rng)
        ph = PhaseConfig.from_theta(rng.uniform(0, 2 * np.pi, 5))
        table = combined_gain_table(ch, ph)
        for i in range(2):
            for k in range(3):
                assert table[i, 0, k] == pytest.approx(combined_gain(ch, ph, i, 0, k), abs=1e-15)

    def test_no_irs_is_phase_independent(self):
        rng = np.random.default_rng(5)
        cfg = single_cell_cfg(num_users=2, num_subchannels=2, num_elements=6)
        ch = make_channels(cfg, rng, irs_scale=0.0)
        t1 = combined_gain_table(ch, PhaseConfig.zeros(6))
        t2 = combined_gain_table(ch, PhaseConfig.from_theta(rng.uniform(0, 2 * np.pi, 6)))
        np.testing.assert_allclose(t1, t2)


def hand_sinr_oracle(cfg, ch, alloc):
    """Direct expansion of the SINR definition, loops only."""
    gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
    out = np.zeros_like(gains2)
    num_i, num_j, num_k = gains2.shape
    for i in range(num_i):
        for j in range(num_j):
            for k in range(num_k):
                p = alloc.power[i, j, k]
                cluster = alloc.order[j][k]
                if i not in cluster:
                    continue
                pos = cluster.index(i)
                intra = gains2[i, j, k] * sum(alloc.power[u, j, k] for u in cluster[pos + 1 :])
                inter = sum(
                    gains2[i, s, k] * sum(alloc.power[u, s, k] for u in range(num_i))
                    for s in range(num_j)
                    if s != j
                )
                out[i, j, k] = gains2[i, j, k] * p / (intra + inter + cfg.noise_power_w)
    return out


class TestSinrAndRates:
    def test_single_user_no_interference(self):
        cfg = single_cell_cfg(num_users=1, max_cluster_size=2)
        ch = scalar_channel(2.0, [0.0], [0.0])
        alloc = full_alloc(cfg, power=np.full((1, 1, 1), 5.0))
        table = sinr(cfg, ch, alloc)
        assert table[0, 0, 0] == pytest.approx(4.0 * 5.0 / 1.0, rel=1e-12)

    def test_zero_power_zero_sinr(self):
        rng = np.random.default_rng(6)
        cfg = single_cell_cfg(num_users=2, num_subchannels=2, num_elements=3)
        ch = make_channels(cfg, rng)
        alloc = full_alloc(cfg, power=np.zeros((2, 1, 2)))
        assert np.all(sinr(cfg, ch, alloc) == 0.0)

    def test_two_user_cluster_matches_hand_expansion(self):
        rng = np.random.default_rng(7)
        cfg = NetworkConfig(
            num_users=4, num_bs=2, num_subchannels=2, num_elements=3,
            noise_power_w=0.5, max_bs_power_w=10.0, min_rate_bps=0.0,
        )
        ch = make_channels(cfg, rng)
        assoc = np.zeros((4, 2), dtype=bool)
        assoc[[0, 1], 0] = True
        assoc[[2, 3], 1] = True
        subch = np.ones((2, 2), dtype=bool)
        order = (((0, 1), (1, 0)), ((2, 3), (3, 2)))
        power = rng.uniform(0.1, 1.0, size=(4, 2, 2)) * assoc[:, :, None]
        alloc = Allocation(
            assoc=assoc, subch=subch, power=power, order=order, phases=PhaseConfig.zeros(3)
        )
        got = sinr(cfg, ch, alloc)
        expected = hand_sinr_oracle(cfg, ch, alloc)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_rate_scaling_paper_bandwidth(self):
        # SINR = 1 at W = 3 MHz over 3 subchannels gives exactly 1 Mbit/s
        cfg = single_cell_cfg(num_users=1, num_subchannels=3, max_cluster_size=2)
        ch = ChannelSet(
            direct=np.ones((1, 1, 3), dtype=complex),
            bs_to_irs=np.zeros((1, 3, 1), dtype=complex),
            irs_to_user=np.zeros((1, 3, 1), dtype=complex),
        )
        power = np.full((1, 1, 3), 1.0)
        report = rates(cfg, ch, full_alloc(cfg, power))
        assert np.allclose(report.sinr[0, 0], 1.0)
        assert report.rate[0, 0, 0] == pytest.approx(1e6, rel=1e-12)

    def test_rate_zero_and_log2_of_four(self):
        cfg = single_cell_cfg(num_users=1, num_subchannels=1)
        ch = scalar_channel(1.0, [0.0], [0.0])
        report0 = rates(cfg, ch, full_alloc(cfg, np.zeros((1, 1, 1))))
        assert report0.sum_rate == 0.0
        report3 = rates(cfg, ch, full_alloc(cfg, np.full((1, 1, 1), 3.0)))
        assert report3.rate[0, 0, 0] == pytest.approx(2.0 * cfg.subchannel_bandwidth_hz, rel=1e-12)

    def test_rate_recomputes_from_sinr(self):
        rng = np.random.default_rng(8)
        cfg = single_cell_cfg(num_users=3, num_subchannels=2, num_elements=2, max_cluster_size=3)
        ch = make_channels(cfg, rng)
        alloc = full_alloc(cfg, rng.uniform(0.1, 1.0, (3, 1, 2)))
        report = rates(cfg, ch, alloc)
        again = cfg.subchannel_bandwidth_hz * np.log2(1.0 + report.sinr)
        np.testing.assert_allclose(report.rate, again, rtol=1e-12)
        assert report.sum_rate == pytest.approx(report.rate.sum(), rel=1e-12)

    def test_rates_nonincreasing_in_noise_and_inter_power(self):
        rng = np.random.default_rng(9)
        cfg = NetworkConfig(
            num_users=4, num_bs=2, num_subchannels=2, num_elements=2,
            noise_power_w=0.3, max_bs_power_w=10.0, min_rate_bps=0.0,
        )
        ch = make_channels(cfg, rng)
        assoc = np.zeros((4, 2), dtype=bool)
        assoc[[0, 1], 0] = True
        assoc[[2, 3], 1] = True
        subch = np.ones((2, 2), dtype=bool)
        order = (((0, 1), (0, 1)), ((2, 3), (2, 3)))
        power = rng.uniform(0.1, 1.0, (4, 2, 2)) * assoc[:, :, None]
        alloc = Allocation(
            assoc=assoc, subch=subch, power=power, order=order, phases=PhaseConfig.zeros(2)
        )
        base = rates(cfg, ch, alloc)

        noisier = cfg.with_overrides(noise_power_w=0.6)
        assert np.all(rates(noisier, ch, alloc).rate <= base.rate + 1e-15)

        boosted = power.copy()
        boosted[2, 1, :] *= 3.0  # raising another cell's power cannot help cell 0
        alloc2 = Allocation(
            assoc=assoc, subch=subch, power=boosted, order=order, phases=PhaseConfig.zeros(2)
        )
        cell0 = rates(cfg, ch, alloc2).rate[[0, 1], 0, :]
        assert np.all(cell0 <= base.rate[[0, 1], 0, :] + 1e-15)


class TestSicMargin:
    def _instance(self, seed, num_bs=2):
        rng = np.random.default_rng(seed)
        cfg = NetworkConfig(
            num_users=2 * num_bs, num_bs=num_bs, num_subchannels=1, num_elements=2,
            noise_power_w=rng.uniform(0.2, 1.0), max_bs_power_w=10.0, min_rate_bps=0.0,
        )
        ch = make_channels(cfg, rng)
        assoc = np.zeros((cfg.num_users, num_bs), dtype=bool)
        for j in range(num_bs):
            assoc[[2 * j, 2 * j + 1], j] = True
        subch = np.ones((num_bs, 1), dtype=bool)
        order = tuple(((2 * j, 2 * j + 1),) for j in range(num_bs))
        power = rng.uniform(0.1, 1.0, (cfg.num_users, num_bs, 1)) * assoc[:, :, None]
        alloc = Allocation(
            assoc=assoc, subch=subch, power=power, order=order, phases=PhaseConfig.zeros(2)
        )
        return cfg, ch, alloc

    def test_symmetric_channels_zero_margin(self):
        cfg = single_cell_cfg(num_users=2)
        ch = ChannelSet(
            direct=np.array([1.0 + 1.0j, 1.0 + 1.0j], dtype=complex).reshape(2, 1, 1),
            bs_to_irs=np.zeros((1, 1, 1), dtype=complex),
            irs_to_user=np.zeros((2, 1, 1), dtype=complex),
        )
        alloc = full_alloc(cfg, np.full((2, 1, 1), 1.0))
        assert sic_margin(cfg, ch, alloc, 0, 0, 0, 1) == pytest.approx(0.0, abs=1e-15)

    def test_no_inter_cell_collapse(self):
        cfg = single_cell_cfg(num_users=2, noise_power_w=0.7)
        ch = ChannelSet(
            direct=np.array([1.0, 2.0], dtype=complex).reshape(2, 1, 1),
            bs_to_irs=np.zeros((1, 1, 1), dtype=complex),
            irs_to_user=np.zeros((2, 1, 1), dtype=complex),
        )
        alloc = full_alloc(cfg, np.full((2, 1, 1), 1.0))
        # Delta = (|H_2|^2 - |H_1|^2) * sigma^2
        assert sic_margin(cfg, ch, alloc, 0, 0, 0, 1) == pytest.approx((4.0 - 1.0) * 0.7, rel=1e-12)

    def test_antisymmetry(self):
        cfg, ch, alloc = self._instance(11)
        d1 = sic_margin(cfg, ch, alloc, 0, 0, 0, 1)
        d2 = sic_margin(cfg, ch, alloc, 0, 0, 1, 0)
        assert d1 == pytest.approx(-d2, rel=1e-12)

    def test_rejects_non_coclustered(self):
        cfg, ch, alloc = self._instance(12)
        with pytest.raises(ValueError):
            sic_margin(cfg, ch, alloc, 0, 0, 0, 2)
        with pytest.raises(ValueError):
            sic_margin(cfg, ch, alloc, 0, 0, 0, 0)

    def test_sign_agrees_with_sinr_comparison(self):
        # evaluate both sides of the SIC-SINR dominance condition directly
        agreements = 0
        total = 0
        for seed in range(2000):
            cfg, ch, alloc = self._instance(1000 + seed)
            gains2 = np.abs(combined_gain_table(ch, alloc.phases)) ** 2
            delta = sic_margin(cfg, ch, alloc, 0, 0, 0, 1)
            if abs(delta) <= 1e-12:
                continue
            p = alloc.power
            cluster = (0, 1)
            hat = p[1, 0, 0]  # power decoded after user 0
            inter = {
                u: sum(
                    gains2[u, s, 0] * p[:, s, 0].sum() for s in range(cfg.num_bs) if s != 0
                )
                for u in cluster
            }
            sig2 = cfg.noise_power_w
            lhs = gains2[1, 0, 0] * p[0, 0, 0] / (gains2[1, 0, 0] * hat + inter[1] + sig2)
            rhs = gains2[0, 0, 0] * p[0, 0, 0] / (gains2[0, 0, 0] * hat + inter[0] + sig2)
            total += 1
            agreements += (lhs >= rhs) == (delta >= 0)
        assert total > 1500
        assert agreements == total


class TestValidateAllocation:
    def test_default_scenario_clean(self):
        cfg = NetworkConfig()
        ch = generate_channels(cfg, 3)
        assoc = np.zeros((6, 3), dtype=bool)
        for j in range(3):
            assoc[[2 * j, 2 * j + 1], j] = True
        subch = np.ones((3, 3), dtype=bool)
        order = tuple(tuple((2 * j, 2 * j + 1) for _ in range(3)) for j in range(3))
        power = np.tile(np.where(assoc, cfg.max_bs_power_w / 6.0, 0.0)[:, :, None], (1, 1, 3))
        alloc = Allocation(
            assoc=assoc, subch=subch, power=power, order=order,
            phases=PhaseConfig.zeros(cfg.num_elements),
        )
        assert validate_allocation(cfg, alloc) == []

    def test_unassociated_user_flagged(self):
        cfg = NetworkConfig()
        assoc = np.zeros((6, 3), dtype=bool)
        for j in range(3):
            assoc[[2 * j, 2 * j + 1], j] = True
        assoc[0, 0] = False
        subch = np.ones((3, 3), dtype=bool)
        order = tuple(
            tuple(tuple(i for i in range(6) if assoc[i, j]) for _ in range(3)) for j in range(3)
        )
        alloc = Allocation(
            assoc=assoc, subch=subch, power=np.zeros((6, 3, 3)), order=order,
            phases=PhaseConfig.zeros(cfg.num_elements),
        )
        codes = [v.constraint for v in validate_allocation(cfg, alloc)]
        assert "7f" in codes

    def test_power_budget_violation_flagged(self):
        cfg = NetworkConfig()
        assoc = np.zeros((6, 3), dtype=bool)
        for j in range(3):
            assoc[[2 * j, 2 * j + 1], j] = True
        subch = np.ones((3, 3), dtype=bool)
        order = tuple(tuple((2 * j, 2 * j + 1) for _ in range(3)) for j in range(3))
        power = np.tile(
            np.where(assoc, (cfg.max_bs_power_w + 1.0) / 6.0, 0.0)[:, :, None], (1, 1, 3)
        )
        alloc = Allocation(
            assoc=assoc, subch=subch, power=power, order=order,
            phases=PhaseConfig.zeros(cfg.num_elements),
        )
        codes = [v.constraint for v in validate_allocation(cfg, alloc)]
        assert "7e" in codes
