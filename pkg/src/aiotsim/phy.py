"""Backscatter physical layer.

A tag conveys data by switching its antenna load among M impedances; each
load maps to a complex reflection coefficient

    Gamma = (Z_load - conj(Z_ant)) / (Z_load + Z_ant)

and the reflected wave is the incident wave scaled by Gamma(t).  The inactive
(non-reflecting) state is Gamma = 0.  Everything here operates at complex
baseband: an unmodulated carrier is the constant phasor A * exp(j*theta).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConstellationUnrealizable, DegenerateImpedance, LengthMismatch

# Denominator guard for the reflection formula, in ohms.
IMPEDANCE_EPS = 1e-12

# Matching tolerance for constellation geometry checks.
GEOMETRY_TOL = 1e-6


@dataclass(frozen=True)
class CarrierWave:
    """Unmodulated incident carrier, tracked at complex baseband.

    The RF frequency is metadata only; the baseband representation is the
    constant phasor amplitude * exp(j * phase).
    """

    amplitude: float = 1.0          # linear, unitless in simulation
    frequency_hz: float = 925e6
    phase_rad: float = 0.0
    sample_rate_hz: float = 8e6
    duration_samples: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("carrier amplitude must be >= 0")
        if self.duration_samples <= 0:
            raise ValueError("carrier duration must be positive")

    def samples(self) -> np.ndarray:
        phasor = self.amplitude * np.exp(1j * self.phase_rad)
        return np.full(self.duration_samples, phasor, dtype=complex)


@dataclass(frozen=True)
class Impedance:
    """Complex impedance split into resistance and reactance, in ohms."""

    resistance: float
    reactance: float = 0.0

    @property
    def z(self) -> complex:
        return complex(self.resistance, self.reactance)


@dataclass(frozen=True)
class ImpedanceMap:
    """Antenna impedance plus the tag's M switchable loads.

    Load index m = 1..M selects a reflection state; m = 0 is the inactive
    state with Gamma = 0 (the tag absorbs the carrier).
    """

    antenna: Impedance
    loads: tuple[Impedance, ...]

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(self.loads))
        if self.antenna.resistance <= 0:
            raise ValueError("antenna resistance must be positive")
        if len(self.loads) < 1:
            raise ValueError("need at least one load")
        for load in self.loads:
            if load.resistance < 0:
                raise ValueError("passive loads need non-negative resistance")
        gammas = self.gammas()
        for i in range(len(gammas)):
            for j in range(i + 1, len(gammas)):
                if abs(gammas[i] - gammas[j]) < GEOMETRY_TOL:
                    raise ValueError("degenerate constellation: two loads give the same Gamma")

    def gammas(self) -> np.ndarray:
        """Reflection coefficient of every active load, map order."""
        return np.array([reflection_coefficient(z, self.antenna) for z in self.loads])


class Modulation(Enum):
    OOK = "ook"
    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM16 = "qam16"

    @property
    def bits_per_symbol(self) -> int:
        return {Modulation.OOK: 1, Modulation.BPSK: 1,
                Modulation.QPSK: 2, Modulation.QAM16: 4}[self]

    @property
    def constellation_size(self) -> int:
        return 2 ** self.bits_per_symbol


@dataclass(frozen=True)
class ModulationScheme:
    kind: Modulation
    symbol_rate_hz: float = 1e6
    samples_per_symbol: int = 8

    def __post_init__(self):
        if self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be >= 1")
        if self.symbol_rate_hz <= 0:
            raise ValueError("symbol rate must be positive")

    @property
    def bit_rate_hz(self) -> float:
        return self.symbol_rate_hz * self.kind.bits_per_symbol


def reflection_coefficient(load, antenna) -> complex:
    """Reflection coefficient of one load against the tag antenna.

    Accepts Impedance instances or plain complex ohms.  Raises
    DegenerateImpedance when the denominator |Z_load + Z_ant| collapses.
    """
    z_l = load.z if isinstance(load, Impedance) else complex(load)
    z_a = antenna.z if isinstance(antenna, Impedance) else complex(antenna)
    if z_a.real <= 0:
        raise ValueError("antenna resistance must be positive")
    den = z_l + z_a
    if abs(den) < IMPEDANCE_EPS:
        raise DegenerateImpedance(f"|Z_load + Z_ant| = {abs(den):.3e} ohm")
    return (z_l - z_a.conjugate()) / den


def inactive_state() -> complex:
    """The m = 0 non-reflecting state."""
    return 0j


def load_for_gamma(gamma: complex, antenna: Impedance) -> Impedance:
    """Invert the reflection formula: the load realizing a target Gamma."""
    if abs(1 - gamma) < 1e-9:
        raise DegenerateImpedance("Gamma = 1 needs an infinite load")
    z = (antenna.z.conjugate() + gamma * antenna.z) / (1 - gamma)
    return Impedance(z.real, z.imag)


def unit_constellation(kind: Modulation) -> np.ndarray:
    """Reference constellation, indexed by symbol value (bits MSB-first).

    Multi-bit constellations are Gray-coded: symbol values at neighbouring
    points differ in exactly one bit.  PSK/QAM sets have unit average energy.
    """
    if kind is Modulation.OOK:
        return np.array([0.0 + 0j, 1.0 + 0j])
    if kind is Modulation.BPSK:
        return np.array([1.0 + 0j, -1.0 + 0j])
    if kind is Modulation.QPSK:
        pts = np.empty(4, dtype=complex)
        for v in range(4):
            b0, b1 = (v >> 1) & 1, v & 1
            pts[v] = complex(1 - 2 * b0, 1 - 2 * b1) / np.sqrt(2.0)
        return pts
    if kind is Modulation.QAM16:
        pts = np.empty(16, dtype=complex)
        for v in range(16):
            b0, b1, b2, b3 = (v >> 3) & 1, (v >> 2) & 1, (v >> 1) & 1, v & 1
            i = (1 - 2 * b0) * (3 - 2 * b1)
            q = (1 - 2 * b2) * (3 - 2 * b3)
            pts[v] = complex(i, q) / np.sqrt(10.0)
        return pts
    raise ValueError(f"unknown modulation {kind}")


def bits_to_symbol_values(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Group a bit sequence MSB-first into integer symbol values."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % bits_per_symbol:
        raise LengthMismatch(
            f"{bits.size} bits not divisible by {bits_per_symbol} bits/symbol")
    groups = bits.reshape(-1, bits_per_symbol)
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1)
    return groups @ weights


def symbol_values_to_bits(values: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Inverse of bits_to_symbol_values."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(bits_per_symbol - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).reshape(-1).astype(np.int8)


def constellation_for(scheme: ModulationScheme, imap: ImpedanceMap,
                      tol: float = GEOMETRY_TOL) -> np.ndarray:
    """Gamma constellation the map realizes for a scheme, in bit order.

    Element v of the result is the reflection state transmitted for the
    bit pattern v (MSB-first).  The map's Gamma set must reproduce the
    reference constellation up to one common complex scale; otherwise
    ConstellationUnrealizable is raised.  OOK uses the inactive m = 0 state
    for "off" and, among realizable loads, prefers the strongest reflection.
    """
    kind = scheme.kind
    unit = unit_constellation(kind)
    size = kind.constellation_size

    candidates = list(imap.gammas())
    if kind is Modulation.OOK:
        candidates.append(inactive_state())
    if len(candidates) < size:
        raise ConstellationUnrealizable(
            f"{kind.value} needs {size} states, map offers {len(candidates)}")

    # Anchor the scale hypothesis on the largest-magnitude reference point;
    # try candidates strongest-first so OOK lands on the brightest load.
    anchor = int(np.argmax(np.abs(unit)))
    order = sorted(range(len(candidates)), key=lambda i: -abs(candidates[i]))

    for idx in order:
        scale = candidates[idx] / unit[anchor]
        if abs(scale) < tol:
            continue
        assigned = _match_template(candidates, scale * unit, tol)
        if assigned is not None:
            return assigned
    raise ConstellationUnrealizable(
        f"impedance map cannot realize {kind.value} within tolerance {tol}")


def _match_template(candidates, targets, tol):
    """Injectively match each target point to a candidate within tol."""
    used = set()
    out = np.empty(len(targets), dtype=complex)
    for k, t in enumerate(targets):
        best, best_d = None, tol
        for i, c in enumerate(candidates):
            if i in used:
                continue
            d = abs(c - t)
            if d <= best_d:
                best, best_d = i, d
        if best is None:
            return None
        used.add(best)
        out[k] = candidates[best]
    return out


def modulate(bits, scheme: ModulationScheme, imap: ImpedanceMap,
             gain: float = 1.0) -> np.ndarray:
    """Map bits to a piecewise-constant Gamma waveform, one value per sample.

    Each symbol holds its reflection state for samples_per_symbol samples.
    `gain` models device-side reflection amplification (storage-backed tags);
    it may push |Gamma| past passivity.
    """
    if gain <= 0:
        raise ValueError("gain must be positive")
    constellation = constellation_for(scheme, imap) * gain
    values = bits_to_symbol_values(bits, scheme.kind.bits_per_symbol)
    symbols = constellation[values]
    return np.repeat(symbols, scheme.samples_per_symbol)


def backscatter(incident: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Reflected wave: pointwise product of incident samples and Gamma(t)."""
    incident = np.asarray(incident)
    gamma = np.asarray(gamma)
    if incident.shape != gamma.shape:
        raise LengthMismatch(
            f"incident has {incident.shape}, gamma has {gamma.shape}")
    return incident * gamma


def default_map(kind: Modulation, antenna: Impedance = Impedance(50.0)) -> ImpedanceMap:
    """Stock impedance maps for each scheme against a 50-ohm antenna.

    These are simulation defaults, not measured tag hardware: OOK reflects
    via a short circuit, BPSK via short/open, QPSK and 16-QAM via loads
    solved from the inverse reflection formula.
    """
    if kind is Modulation.OOK:
        return ImpedanceMap(antenna, (Impedance(0.0),))
    if kind is Modulation.BPSK:
        return ImpedanceMap(antenna, (Impedance(0.0), Impedance(1e9)))
    unit = unit_constellation(kind)
    # Shrink slightly so every target stays strictly inside the passive disc.
    scale = 0.999 / np.max(np.abs(unit))
    loads = tuple(load_for_gamma(g * scale, antenna) for g in unit)
    return ImpedanceMap(antenna, loads)
