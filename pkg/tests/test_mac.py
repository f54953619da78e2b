"""Schedulers, Walsh spreading, power control, and power-domain SIC."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiotsim import mac, rxchain
from aiotsim.errors import (InsufficientFrequencies, InsufficientPowerGap,
                            NonOrthogonalSet)
from aiotsim.util import trial_rng


class TestTdma:
    def test_three_devices_three_slots(self):
        sched = mac.tdma_schedule(3, 3)
        assert sorted(sched.assignments.values()) == [0, 1, 2]
        assert sched.collisions() == 0
        assert sched.cycle_frames == 1

    def test_single_device(self):
        sched = mac.tdma_schedule(1, 1)
        assert sched.assignments == {0: 0}

    def test_oversubscribed_cycles(self):
        sched = mac.tdma_schedule(5, 3)
        assert sched.cycle_frames == math.ceil(5 / 3)
        assert sched.collisions() == 0
        # each device is served exactly once per cycle
        for dev in range(5):
            active = [f for f in range(sched.cycle_frames)
                      if sched.active_in_frame(dev, f)]
            assert len(active) == 1

    @given(n=st.integers(1, 20), slots=st.integers(1, 20))
    @settings(max_examples=60)
    def test_no_collisions_when_devices_fit(self, n, slots):
        if n <= slots:
            assert mac.tdma_schedule(n, slots).collisions() == 0


class TestFdma:
    def test_two_devices(self):
        sched = mac.fdma_assign(2, [100e3, 200e3])
        assert sched.assignments == {0: 0, 1: 1}
        assert sched.frequencies == (100e3, 200e3)

    def test_band_exhausted(self):
        with pytest.raises(InsufficientFrequencies):
            mac.fdma_assign(3, [100e3, 200e3])

    def test_two_device_separation_by_shift_filter(self):
        # two tags toggling at different offsets; the shift filter isolates
        # each with cross-device leakage at least 40 dB down
        fs = 2e6
        n = 16384
        t = np.arange(n) / fs
        f0, f1 = 150e3, 450e3
        tag0 = np.exp(2j * np.pi * f0 * t)
        tag1 = np.exp(2j * np.pi * f1 * t)
        rx = tag0 + tag1

        def tone_power(x, f):
            probe = np.exp(2j * np.pi * f * t)
            return np.abs(np.vdot(probe, x) / n) ** 2

        out0 = rxchain.freq_shift_filter(rx, f0, 60e3, fs)
        leakage = tone_power(out0, f1 - f0) / tone_power(out0, 0.0)
        assert 10 * math.log10(leakage) <= -40.0

    def test_schedule_serializes(self):
        sched = mac.fdma_assign(2, [100e3, 200e3])
        cfgdict = sched.as_config()
        assert cfgdict["assignments"] == "0:0;1:1"
        assert "frequencies_hz" in cfgdict


class TestWalsh:
    def test_pairwise_orthogonal_and_autocorrelation(self):
        for L in (4, 8, 16, 32):
            rows = mac.walsh_matrix(L)
            gram = rows @ rows.T
            assert np.array_equal(gram, L * np.eye(L, dtype=np.int64))

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            mac.walsh_matrix(6)

    def test_spreading_set_validation(self):
        with pytest.raises(NonOrthogonalSet):
            mac.SpreadingSet((np.array([1, 1, 1, 1]), np.array([1, 1, 1, -1])))

    def test_walsh_set_skips_dc_row(self):
        sset = mac.walsh_set(8, 2)
        for seq in sset.sequences:
            assert np.sum(seq) == 0


class TestCbma:
    def test_synchronous_noiseless_two_devices(self, rng):
        sset = mac.walsh_set(4, 2)
        bits = [rng.integers(0, 2, 100).astype(np.int8) for _ in range(2)]
        mixed = sum(mac.cbma_spread(bits[d], sset.sequences[d]) for d in range(2))
        decoded = mac.cbma_despread(mixed.astype(complex), sset)
        assert np.array_equal(decoded[0], bits[0])
        assert np.array_equal(decoded[1], bits[1])

    def test_chip_misalignment_degrades(self):
        # one-chip offset on the second device breaks orthogonality
        rng = trial_rng(21)
        sset = mac.walsh_set(4, 2)
        n_bits = 4000
        gamma = 10.0            # 10 dB
        bits = [rng.integers(0, 2, n_bits).astype(np.int8) for _ in range(2)]
        total = n_bits * 4
        mixed = np.zeros(total + 1, dtype=complex)
        mixed[:total] += mac.cbma_spread(bits[0], sset.sequences[0])
        mixed[1:] += mac.cbma_spread(bits[1], sset.sequences[1])
        mixed = mixed[:total]
        sigma = math.sqrt(1 / gamma / 2)
        mixed += sigma * (rng.standard_normal(total) + 1j * rng.standard_normal(total))
        decoded = mac.cbma_despread(mixed, sset)
        ber_misaligned = np.count_nonzero(decoded[1] != bits[1]) / n_bits
        assert ber_misaligned > 0.0

    def test_power_control_helps_weak_device(self):
        # 20 dB imbalance; equalizing weights improve the weak device
        rng_a = trial_rng(22)
        rng_b = trial_rng(22)           # paired noise
        sset = mac.walsh_set(8, 2)
        n_bits = 5000
        amps = np.array([1.0, 0.1])
        weights = mac.power_control_weights(amps)

        def run(rng, use_weights):
            bits = [rng.integers(0, 2, n_bits).astype(np.int8) for _ in range(2)]
            w = weights if use_weights else np.ones(2)
            mixed = sum(amps[d] * w[d] * mac.cbma_spread(bits[d], sset.sequences[d])
                        for d in range(2)).astype(complex)
            sigma = math.sqrt(1 / 4.0 / 2)  # 6 dB per chip for the weak device
            mixed += sigma * (rng.standard_normal(mixed.size)
                              + 1j * rng.standard_normal(mixed.size))
            decoded = mac.cbma_despread(mixed, sset)
            return np.count_nonzero(decoded[1] != bits[1]) / n_bits

        ber_without = run(rng_a, False)
        ber_with = run(rng_b, True)
        assert ber_with <= ber_without

    def test_weights_equalize_received_energy(self):
        amps = np.array([1.0, 0.25, 0.5])
        w = mac.power_control_weights(amps)
        received = amps * w
        assert np.allclose(received, received[0])
        assert np.max(w) <= 1.0


class TestNoma:
    def test_two_devices_ten_db_gap_fifteen_db_snr(self):
        rng = trial_rng(23)
        n = 100_000
        amps = {0: 1.0 + 0j, 1: complex(math.sqrt(0.1))}
        pairing = mac.noma_assign(amps, min_gap_db=6.0)
        bits = {d: rng.integers(0, 2, n).astype(np.int8) for d in amps}
        rx = sum(amps[d] * (1.0 - 2.0 * bits[d]) for d in amps)
        sigma = math.sqrt(1 / 10 ** 1.5 / 2)
        rx = rx + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        decoded = mac.noma_sic_decode(rx, pairing)
        for d in amps:
            ber = np.count_nonzero(decoded[d] != bits[d]) / n
            assert ber < 1e-2

    def test_equal_powers_rejected(self):
        with pytest.raises(InsufficientPowerGap):
            mac.noma_assign({0: 1.0 + 0j, 1: 1.0 + 0j})

    def test_single_device_degenerates_to_plain_detection(self, rng):
        bits = rng.integers(0, 2, 2000).astype(np.int8)
        h = 0.7 * np.exp(0.4j)
        rx = h * (1.0 - 2.0 * bits) + 0.01 * (
            rng.standard_normal(2000) + 1j * rng.standard_normal(2000))
        pairing = mac.noma_assign({5: h})
        decoded = mac.noma_sic_decode(rx, pairing)
        assert np.array_equal(decoded[5], bits)

    def test_decode_order_independent_of_input_order(self, rng):
        n = 5000
        amps_fwd = {0: 1.0 + 0j, 1: complex(math.sqrt(0.05))}
        amps_rev = {1: complex(math.sqrt(0.05)), 0: 1.0 + 0j}
        bits = {d: rng.integers(0, 2, n).astype(np.int8) for d in amps_fwd}
        noise = 0.05 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        rx = sum(amps_fwd[d] * (1.0 - 2.0 * bits[d]) for d in amps_fwd) + noise
        out_a = mac.noma_sic_decode(rx, mac.noma_assign(amps_fwd))
        out_b = mac.noma_sic_decode(rx, mac.noma_assign(amps_rev))
        assert np.array_equal(out_a[0], out_b[0])
        assert np.array_equal(out_a[1], out_b[1])

    def test_gap_below_minimum_rejected(self):
        with pytest.raises(InsufficientPowerGap):
            mac.noma_assign({0: 1.0 + 0j, 1: 0.8 + 0j}, min_gap_db=6.0)
