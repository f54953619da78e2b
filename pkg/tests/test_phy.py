"""Reflection coefficients, constellations, and backscatter modulation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiotsim import phy
from aiotsim.errors import (ConstellationUnrealizable, DegenerateImpedance,
                            LengthMismatch)

ANT50 = phy.Impedance(50.0)


class TestReflectionCoefficient:
    def test_conjugate_matched_load_gives_zero(self):
        antenna = phy.Impedance(50.0, 10.0)
        load = phy.Impedance(50.0, -10.0)
        assert phy.reflection_coefficient(load, antenna) == 0

    def test_short_circuit_gives_minus_one(self):
        assert phy.reflection_coefficient(phy.Impedance(0.0), ANT50) == -1

    def test_complex_antenna_case(self):
        # (25 - (50 - 10j)) / (25 + 50 + 10j) reduces exactly to (-71 + 40j)/229
        gamma = phy.reflection_coefficient(phy.Impedance(25.0), phy.Impedance(50.0, 10.0))
        expected = complex(-71, 40) / 229
        assert gamma == pytest.approx(expected, abs=1e-15)
        assert abs(gamma) <= 1.0

    def test_degenerate_denominator(self):
        with pytest.raises(DegenerateImpedance):
            phy.reflection_coefficient(complex(-50.0, -10.0), phy.Impedance(50.0, 10.0))

    def test_inactive_state_is_exactly_zero(self):
        assert phy.inactive_state() == 0j

    @given(r_l=st.floats(0.0, 1e6), x_l=st.floats(-1e6, 1e6),
           r_a=st.floats(0.1, 1e6), x_a=st.floats(-1e6, 1e6))
    @settings(max_examples=300)
    def test_passivity(self, r_l, x_l, r_a, x_a):
        gamma = phy.reflection_coefficient(phy.Impedance(r_l, x_l),
                                           phy.Impedance(r_a, x_a))
        assert abs(gamma) <= 1.0 + 1e-12

    def test_load_for_gamma_round_trip(self, rng):
        antenna = phy.Impedance(50.0, 5.0)
        for _ in range(50):
            target = (rng.uniform(-0.9, 0.9) + 1j * rng.uniform(-0.9, 0.9))
            load = phy.load_for_gamma(target, antenna)
            assert phy.reflection_coefficient(load, antenna) == pytest.approx(target, abs=1e-9)


def qpsk_reactive_map():
    # purely reactive loads 50j * cot(phi/2) hit the unit circle at phi
    loads = []
    for v in range(4):
        phi = np.angle(phy.unit_constellation(phy.Modulation.QPSK)[v])
        loads.append(phy.Impedance(0.0, (50j / np.tan(phi / 2)).imag))
    return phy.ImpedanceMap(ANT50, tuple(loads))


class TestConstellationFor:
    def test_ook_short_only(self):
        scheme = phy.ModulationScheme(phy.Modulation.OOK)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0),))
        points = phy.constellation_for(scheme, imap)
        assert points[0] == 0
        assert points[1] == -1

    def test_bpsk_short_open(self):
        scheme = phy.ModulationScheme(phy.Modulation.BPSK)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0), phy.Impedance(1e9)))
        points = phy.constellation_for(scheme, imap)
        assert points[0] == pytest.approx(-1, abs=1e-6)
        assert points[1] == pytest.approx(1, abs=1e-6)

    def test_qpsk_reactive_loads(self):
        scheme = phy.ModulationScheme(phy.Modulation.QPSK)
        points = phy.constellation_for(scheme, qpsk_reactive_map())
        mags = np.abs(points)
        assert np.allclose(mags, 1.0, atol=1e-9)
        phases = sorted(np.mod(np.angle(points, deg=True), 360.0))
        assert phases == pytest.approx([45.0, 135.0, 225.0, 315.0], abs=1e-6)
        # scaled copy of the reference constellation, Gray order preserved
        unit = phy.unit_constellation(phy.Modulation.QPSK)
        scale = points[0] / unit[0]
        assert np.allclose(points, scale * unit, atol=1e-9)

    def test_qam16_default_map(self):
        scheme = phy.ModulationScheme(phy.Modulation.QAM16)
        points = phy.constellation_for(scheme, phy.default_map(phy.Modulation.QAM16))
        unit = phy.unit_constellation(phy.Modulation.QAM16)
        scale = points[0] / unit[0]
        assert np.allclose(points, scale * unit, atol=1e-6)
        assert np.max(np.abs(points)) <= 1.0

    def test_unrealizable_geometry(self):
        scheme = phy.ModulationScheme(phy.Modulation.BPSK)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0), phy.Impedance(0.0, 50.0)))
        with pytest.raises(ConstellationUnrealizable):
            phy.constellation_for(scheme, imap)

    def test_too_few_loads(self):
        scheme = phy.ModulationScheme(phy.Modulation.QPSK)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0), phy.Impedance(1e9)))
        with pytest.raises(ConstellationUnrealizable):
            phy.constellation_for(scheme, imap)

    def test_gray_neighbours_differ_in_one_bit(self):
        for kind in (phy.Modulation.QPSK, phy.Modulation.QAM16):
            unit = phy.unit_constellation(kind)
            # every point's nearest geometric neighbours are one bit away
            for v, point in enumerate(unit):
                dists = np.abs(unit - point)
                dists[v] = np.inf
                near = np.flatnonzero(dists <= dists.min() + 1e-9)
                for w in near:
                    assert bin(v ^ w).count("1") == 1


class TestModulate:
    def test_ook_mapping(self):
        scheme = phy.ModulationScheme(phy.Modulation.OOK, samples_per_symbol=1)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0),))
        wave = phy.modulate([1, 0, 1], scheme, imap)
        assert np.array_equal(wave, [-1, 0, -1])

    def test_bpsk_two_samples_per_symbol(self):
        scheme = phy.ModulationScheme(phy.Modulation.BPSK, samples_per_symbol=2)
        imap = phy.ImpedanceMap(ANT50, (phy.Impedance(0.0), phy.Impedance(1e12)))
        wave = phy.modulate([0, 1], scheme, imap)
        g0 = phy.constellation_for(scheme, imap)[0]
        assert np.allclose(wave, [g0, g0, -g0, -g0], atol=1e-9)

    def test_payload_sample_count(self):
        scheme = phy.ModulationScheme(phy.Modulation.BPSK, samples_per_symbol=8)
        wave = phy.modulate(np.zeros(992, dtype=int), scheme,
                            phy.default_map(phy.Modulation.BPSK))
        assert wave.size == 7936

    def test_bit_count_mismatch(self):
        scheme = phy.ModulationScheme(phy.Modulation.QPSK)
        with pytest.raises(LengthMismatch):
            phy.modulate([1, 0, 1], scheme, phy.default_map(phy.Modulation.QPSK))

    def test_amplified_reflection(self):
        scheme = phy.ModulationScheme(phy.Modulation.BPSK, samples_per_symbol=1)
        wave = phy.modulate([0, 1], scheme, phy.default_map(phy.Modulation.BPSK),
                            gain=2.5)
        assert np.max(np.abs(wave)) == pytest.approx(2.5, rel=1e-6)


class TestBackscatter:
    def test_identity_and_zero(self, rng):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        assert np.array_equal(phy.backscatter(x, np.ones(64)), x)
        assert not np.any(phy.backscatter(x, np.zeros(64)))

    def test_half_amplitude_phase_flip(self):
        x = np.full(16, 2.0 + 0j)
        gamma = np.full(16, 0.5 * np.exp(1j * np.pi))
        out = phy.backscatter(x, gamma)
        assert np.allclose(out, -1.0)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            phy.backscatter(np.ones(4), np.ones(5))

    @given(st.integers(1, 6))
    @settings(max_examples=25)
    def test_energy_non_amplification(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal(256) + 1j * r.standard_normal(256)
        g = r.uniform(0, 1, 256) * np.exp(1j * r.uniform(0, 2 * np.pi, 256))
        out = phy.backscatter(x, g)
        assert np.sum(np.abs(out) ** 2) <= np.max(np.abs(g)) ** 2 * np.sum(np.abs(x) ** 2) + 1e-9


@given(data=st.data(),
       kind=st.sampled_from(list(phy.Modulation)))
@settings(max_examples=60, deadline=None)
def test_round_trip_all_schemes(data, kind):
    """Noiseless demap of modulate() recovers the bits exactly."""
    bps = kind.bits_per_symbol
    n_syms = data.draw(st.integers(1, 40))
    bits = np.array(data.draw(st.lists(st.integers(0, 1),
                                       min_size=n_syms * bps,
                                       max_size=n_syms * bps)), dtype=np.int8)
    scheme = phy.ModulationScheme(kind, samples_per_symbol=3)
    imap = phy.default_map(kind)
    wave = phy.modulate(bits, scheme, imap)
    symbols = wave[::3]
    constellation = phy.constellation_for(scheme, imap)
    values = np.argmin(np.abs(symbols[:, None] - constellation[None, :]), axis=1)
    recovered = phy.symbol_values_to_bits(values, bps)
    assert np.array_equal(recovered, bits)


def test_modulate_deterministic():
    scheme = phy.ModulationScheme(phy.Modulation.QPSK, samples_per_symbol=4)
    bits = np.tile([1, 0, 0, 1], 8)
    a = phy.modulate(bits, scheme, phy.default_map(phy.Modulation.QPSK))
    b = phy.modulate(bits, scheme, phy.default_map(phy.Modulation.QPSK))
    assert np.array_equal(a, b)


def test_impedance_map_rejects_degenerate_pairs():
    with pytest.raises(ValueError):
        phy.ImpedanceMap(ANT50, (phy.Impedance(0.0), phy.Impedance(0.0, 1e-9)))
