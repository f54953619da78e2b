"""Multiple access for multi-tag scenes: TDMA, FDMA, CBMA, power-domain NOMA.

TDMA hands out slots round-robin; FDMA assigns tags distinct toggle
frequencies (separated at the receiver by the frequency-shift filter); CBMA
spreads each tag with a Walsh row plus transmit-side power control; NOMA
stacks tags in the power domain and peels them strongest-first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (InsufficientFrequencies, InsufficientPowerGap,
                     NonOrthogonalSet)


@dataclass(frozen=True)
class Schedule:
    """Device -> slot or frequency-index assignment for one access frame."""

    assignments: dict[int, int]
    frame_length: int
    frequencies: tuple[float, ...] = ()
    cycle_frames: int = 1

    def slot_of(self, device_id: int) -> int:
        return self.assignments[device_id]

    def active_in_frame(self, device_id: int, frame_index: int) -> bool:
        """Round-robin cycling when devices outnumber slots."""
        if self.cycle_frames == 1:
            return True
        turn = device_id // self.frame_length
        return turn % self.cycle_frames == frame_index % self.cycle_frames

    def collisions(self) -> int:
        """Pairs of devices sharing a slot within the same cycle frame."""
        seen: dict[tuple[int, int], int] = {}
        clashes = 0
        for dev, slot in self.assignments.items():
            key = ((dev // self.frame_length) % self.cycle_frames, slot)
            clashes += seen.get(key, 0)
            seen[key] = seen.get(key, 0) + 1
        return clashes

    def as_config(self) -> dict[str, str]:
        """Flat key/value form for the scenario config format."""
        out = {
            "frame_length": str(self.frame_length),
            "cycle_frames": str(self.cycle_frames),
            "assignments": ";".join(f"{d}:{s}" for d, s in sorted(self.assignments.items())),
        }
        if self.frequencies:
            out["frequencies_hz"] = ";".join(format(f, ".10g") for f in self.frequencies)
        return out


def tdma_schedule(n_devices: int, n_slots: int) -> Schedule:
    """Round-robin slot assignment; cycles across frames when oversubscribed."""
    if n_devices < 1 or n_slots < 1:
        raise ValueError("need at least one device and one slot")
    assignments = {d: d % n_slots for d in range(n_devices)}
    cycle = -(-n_devices // n_slots)
    return Schedule(assignments=assignments, frame_length=n_slots,
                    cycle_frames=cycle)


def fdma_assign(n_devices: int, frequencies) -> Schedule:
    """One toggle frequency per device; fails when the band runs out."""
    freqs = tuple(float(f) for f in frequencies)
    if n_devices > len(freqs):
        raise InsufficientFrequencies(
            f"{n_devices} devices but only {len(freqs)} frequencies")
    assignments = {d: d for d in range(n_devices)}
    return Schedule(assignments=assignments, frame_length=1, frequencies=freqs)


def walsh_matrix(length: int) -> np.ndarray:
    """Sylvester construction; +/-1 entries, rows pairwise orthogonal."""
    if length < 1 or length & (length - 1):
        raise ValueError("Walsh length must be a power of two")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < length:
        h = np.block([[h, h], [h, -h]])
    return h


@dataclass(frozen=True)
class SpreadingSet:
    """Per-device +/-1 chip sequences, pairwise orthogonal."""

    sequences: tuple = ()

    def __post_init__(self):
        seqs = tuple(np.asarray(s, dtype=np.int64) for s in self.sequences)
        object.__setattr__(self, "sequences", seqs)
        if not seqs:
            raise ValueError("empty spreading set")
        length = seqs[0].size
        if length < 1 or length & (length - 1):
            raise ValueError("chip length must be a power of two")
        for s in seqs:
            if s.size != length:
                raise ValueError("all sequences must share one chip length")
        self.validate()

    @property
    def length(self) -> int:
        return self.sequences[0].size

    def validate(self):
        for i in range(len(self.sequences)):
            for j in range(i + 1, len(self.sequences)):
                if int(np.dot(self.sequences[i], self.sequences[j])) != 0:
                    raise NonOrthogonalSet(f"sequences {i} and {j} correlate")


def walsh_set(length: int, n_devices: int) -> SpreadingSet:
    """First n orthogonal rows of the Walsh matrix, skipping the DC row
    when enough rows remain."""
    if n_devices > length:
        raise ValueError("more devices than orthogonal sequences")
    rows = walsh_matrix(length)
    start = 1 if n_devices < length else 0
    return SpreadingSet(tuple(rows[start + d] for d in range(n_devices)))


def cbma_spread(bits, sequence) -> np.ndarray:
    """BPSK chips: each bit b becomes (1 - 2b) * sequence."""
    bits = np.asarray(bits, dtype=np.int64)
    seq = np.asarray(sequence, dtype=float)
    symbols = 1.0 - 2.0 * bits
    return (symbols[:, None] * seq[None, :]).reshape(-1)


def cbma_despread(rx_chips, spreading_set: SpreadingSet,
                  power_weights=None) -> list[np.ndarray]:
    """Correlate against every device sequence, one decision per bit period.

    Optional per-device weights (the transmit-side power-control gains)
    normalize the correlator output; they do not affect hard decisions but
    keep soft values comparable across devices.
    """
    spreading_set.validate()
    rx = np.asarray(rx_chips, dtype=complex)
    length = spreading_set.length
    if rx.size % length:
        raise ValueError(f"{rx.size} chips not divisible by length {length}")
    blocks = rx.reshape(-1, length)
    weights = (np.ones(len(spreading_set.sequences)) if power_weights is None
               else np.asarray(power_weights, dtype=float))
    out = []
    for seq, w in zip(spreading_set.sequences, weights):
        soft = blocks @ seq.astype(float) / (length * w)
        out.append((soft.real < 0).astype(np.int8))
    return out


def power_control_weights(link_gains) -> np.ndarray:
    """Reflection-magnitude weights equalizing received chip energy.

    The strongest tag backs off so every product |h_d| * w_d matches the
    weakest tag's level; weights stay in (0, 1] because |Gamma| cannot grow.
    """
    gains = np.abs(np.asarray(link_gains, dtype=complex))
    if np.any(gains <= 0):
        raise ValueError("link gains must be nonzero")
    return np.min(gains) / gains


@dataclass(frozen=True)
class NomaPairing:
    """Devices ordered strongest-first with their effective complex gains."""

    device_ids: tuple[int, ...]
    amplitudes: tuple[complex, ...]      # h_forward * h_back * Gamma per device
    min_gap_db: float = 6.0

    def __post_init__(self):
        if len(self.device_ids) != len(self.amplitudes):
            raise ValueError("ids and amplitudes must pair up")


def noma_assign(effective_amplitudes: dict[int, complex],
                min_gap_db: float = 6.0) -> NomaPairing:
    """Order devices by effective received power and enforce the power gap.

    Effective power is |h_forward * h_back|^2 |Gamma|^2; adjacent devices
    closer than min_gap_db cannot be separated by successive cancellation
    and raise InsufficientPowerGap.
    """
    if len(effective_amplitudes) < 1:
        raise ValueError("need at least one device")
    ordered = sorted(effective_amplitudes.items(),
                     key=lambda kv: -abs(kv[1]) ** 2)
    powers = [abs(a) ** 2 for _, a in ordered]
    for stronger, weaker in zip(powers, powers[1:]):
        if weaker <= 0:
            raise InsufficientPowerGap("zero-power device cannot be ordered")
        gap_db = 10.0 * np.log10(stronger / weaker)
        if gap_db < min_gap_db:
            raise InsufficientPowerGap(
                f"adjacent gap {gap_db:.2f} dB below minimum {min_gap_db:.2f} dB")
    return NomaPairing(device_ids=tuple(d for d, _ in ordered),
                       amplitudes=tuple(complex(a) for _, a in ordered),
                       min_gap_db=min_gap_db)


def noma_sic_decode(rx_symbols, pairing: NomaPairing) -> dict[int, np.ndarray]:
    """Power-domain successive cancellation, strongest device first.

    Each tag is BPSK (+1 for bit 0); after deciding a tag its reconstructed
    contribution is subtracted before the next, weaker tag is decoded.
    """
    rx = np.asarray(rx_symbols, dtype=complex).copy()
    out: dict[int, np.ndarray] = {}
    for dev, amp in zip(pairing.device_ids, pairing.amplitudes):
        z = rx / amp
        bits = (z.real < 0).astype(np.int8)
        out[dev] = bits
        rx = rx - amp * (1.0 - 2.0 * bits)
    return out
