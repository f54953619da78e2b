"""Experiment runners behind the CLI: seeded sweeps reduced to CSV rows.

Every runner returns (header, rows) with all values pre-formatted as
strings, so identical (config, seed) pairs serialize to byte-identical
files.  SNR points are per-symbol SNRs for a unit-magnitude reflection
state; on-off keying is referenced to its "on" state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import framing, mac, netsim, phy, rxchain
from .channel import LinkBudget, LinkRealization, compose_received
from .config import ScenarioConfig
from .errors import AiotError, NoSync
from .util import db_to_linear, trial_rng

Z_95 = 1.959963984540054


def wilson_interval(errors: int, n: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    p = errors / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def format_rows(rows) -> list[list[str]]:
    return [[_fmt(v) for v in row] for row in rows]


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# link-level BER machinery


def _constellation_scale(scheme: phy.ModulationScheme) -> complex:
    """Complex factor between the map's Gamma set and the unit constellation."""
    constellation = phy.constellation_for(scheme, phy.default_map(scheme.kind))
    unit = phy.unit_constellation(scheme.kind)
    anchor = int(np.argmax(np.abs(unit)))
    return constellation[anchor] / unit[anchor]


def ber_trial_perfect(scheme: phy.ModulationScheme, snr_db: float,
                      n_bits: int, rng) -> tuple[int, int]:
    """Genie-CSI transmission: modulate, AWGN, matched filter, detect.

    The genie hands the detector the exact composite gain (channel times
    constellation scale).  Returns (bit errors, bits).
    """
    kind = scheme.kind
    bps = kind.bits_per_symbol
    n_bits -= n_bits % bps
    bits = rng.integers(0, 2, n_bits).astype(np.int8)
    gamma = phy.modulate(bits, scheme, phy.default_map(kind))
    sps = scheme.samples_per_symbol
    snr_symbol = db_to_linear(snr_db)
    link = LinkRealization(h_forward=1 + 0j, h_back=1 + 0j, h_direct=0j,
                           noise_power=sps / snr_symbol)
    carrier = np.ones(gamma.size, dtype=complex)
    rx = compose_received(carrier, gamma, link, rng)
    symbols = rxchain.matched_filter(rx, sps)
    if kind is phy.Modulation.OOK:
        detected = rxchain.detect_envelope(symbols)
    else:
        detected = rxchain.detect_coherent(symbols, _constellation_scale(scheme), kind)
    return int(np.count_nonzero(detected != bits)), n_bits


@dataclass(frozen=True)
class FrameOutcome:
    synced: bool
    crc_ok: bool
    payload_errors: int
    payload_bits: int
    est_snr_db: float


def frame_trial(scheme: phy.ModulationScheme, snr_db: float, rng,
                mode: str = "pipeline",
                isolation_db: float = 20.0,
                phase1_samples: int = 512,
                sync_threshold: float = rxchain.DEFAULT_SYNC_THRESHOLD,
                payload: np.ndarray | None = None) -> FrameOutcome:
    """Push one 1024-bit frame through the receiver.

    mode "estimated": genie timing, no direct path; channel estimated from
    the preamble, payload decided coherently (or by envelope for OOK).
    mode "pipeline": the full demonstration chain: silent phase for the
    leakage estimate, correlation sync (a frame that fails to sync scores
    half its payload bits as errors), preamble channel estimate, detection,
    CRC check.
    """
    if mode not in ("estimated", "pipeline"):
        raise ValueError(f"unknown mode {mode!r}")
    kind = scheme.kind
    sps = scheme.samples_per_symbol
    if payload is None:
        payload = rng.integers(0, 2, framing.PAYLOAD_BITS).astype(np.int8)
    tx_bits = framing.build_frame(payload)
    gamma = phy.modulate(tx_bits, scheme, phy.default_map(kind))
    snr_symbol = db_to_linear(snr_db)
    noise_power = sps / snr_symbol

    half = framing.PAYLOAD_BITS // 2
    pre_syms = framing.PREAMBLE_BITS // kind.bits_per_symbol
    pre_vals = phy.bits_to_symbol_values(
        framing.word_to_bits(framing.DEFAULT_PREAMBLE_WORD), kind.bits_per_symbol)
    # Estimation references the unit constellation so the estimate absorbs
    # the map's complex constellation scale along with the channel.
    pre_ref = phy.unit_constellation(kind)[pre_vals]
    constellation = phy.constellation_for(scheme, phy.default_map(kind))
    preamble_wave = np.repeat(constellation[pre_vals], sps)

    if mode == "estimated":
        link = LinkRealization(h_forward=1 + 0j, h_back=1 + 0j, h_direct=0j,
                               noise_power=noise_power)
        carrier = np.ones(gamma.size, dtype=complex)
        rx = compose_received(carrier, gamma, link, rng)
        symbols = rxchain.matched_filter(rx, sps)
        est = rxchain.estimate_channel(symbols[:pre_syms], pre_ref)
        if kind is phy.Modulation.OOK:
            decided = rxchain.detect_envelope(symbols)
        else:
            decided = rxchain.detect_coherent(symbols, est, kind)
        errors = _payload_errors(decided, payload)
        return FrameOutcome(True, _crc_ok(decided), errors,
                            framing.PAYLOAD_BITS, math.nan)

    h_direct = complex(math.sqrt(db_to_linear(-isolation_db)))
    link = LinkRealization(h_forward=1 + 0j, h_back=1 + 0j, h_direct=h_direct,
                           noise_power=noise_power)
    tail = 4 * sps
    n_total = phase1_samples + gamma.size + tail
    carrier = np.ones(n_total, dtype=complex)
    full_gamma = np.concatenate([np.zeros(phase1_samples), gamma,
                                 np.zeros(tail)])
    rx = compose_received(carrier, full_gamma, link, rng)

    phase1, phase2 = rx[:phase1_samples], rx[phase1_samples:]
    snr = rxchain.estimate_snr_two_phase(phase1, rx[phase1_samples:phase1_samples + gamma.size],
                                         carrier)
    est_snr_db = 10 * math.log10(snr.gamma) if 0 < snr.gamma < math.inf else math.nan

    leak = np.vdot(carrier[:phase1_samples], phase1) / phase1_samples
    residual = phase2 - leak * carrier[phase1_samples:]

    try:
        # the trigger instant is known in a reader-talks-first exchange, so
        # only lags near the expected frame start are searched
        sync = rxchain.frame_sync(residual, preamble_wave, sync_threshold,
                                  search_limit=2 * sps)
    except NoSync:
        return FrameOutcome(False, False, half, framing.PAYLOAD_BITS, est_snr_db)
    start = sync.offset
    if start + gamma.size > residual.size:
        return FrameOutcome(False, False, half, framing.PAYLOAD_BITS, est_snr_db)

    segment = residual[start:start + gamma.size]
    symbols = rxchain.matched_filter(segment, sps)
    est = rxchain.estimate_channel(symbols[:pre_syms], pre_ref)
    if kind is phy.Modulation.OOK:
        decided = rxchain.detect_envelope(symbols)
    else:
        decided = rxchain.detect_coherent(symbols, est, kind)
    errors = _payload_errors(decided, payload)
    return FrameOutcome(True, _crc_ok(decided), errors,
                        framing.PAYLOAD_BITS, est_snr_db)


def _payload_errors(decided_bits: np.ndarray, payload: np.ndarray) -> int:
    got = decided_bits[framing.PREAMBLE_BITS:framing.PREAMBLE_BITS + framing.PAYLOAD_BITS]
    return int(np.count_nonzero(got != payload))


def _crc_ok(decided_bits: np.ndarray) -> bool:
    try:
        framing.parse_frame(decided_bits.astype(np.int8))
        return True
    except AiotError:
        return False


# ---------------------------------------------------------------------------
# experiment runners


def run_ber_sweep(cfg: ScenarioConfig):
    scheme = cfg.scheme()
    sweep = cfg["sweep"]
    header = ["snr_db", "scheme", "rate_bps", "bits", "errors", "ber",
              "ci_low", "ci_high"]
    rows = []
    for point, snr_db in enumerate(sweep["snr_db"]):
        errors = bits = 0
        if sweep["csi"] == "perfect":
            rng = trial_rng(cfg.seed, point)
            errors, bits = ber_trial_perfect(scheme, snr_db,
                                             sweep["bits_per_point"], rng)
        else:
            mode = "estimated" if sweep["csi"] == "estimated" else "pipeline"
            n_frames = -(-sweep["bits_per_point"] // framing.PAYLOAD_BITS)
            for trial in range(n_frames):
                rng = trial_rng(cfg.seed, point, trial)
                out = frame_trial(scheme, snr_db, rng, mode=mode)
                errors += out.payload_errors
                bits += out.payload_bits
        ber = errors / bits if bits else 0.0
        lo, hi = wilson_interval(errors, bits)
        rows.append([snr_db, scheme.kind.value, scheme.bit_rate_hz, bits,
                     errors, ber, lo, hi])
    return header, format_rows(rows)


def run_snr_sweep(cfg: ScenarioConfig):
    sweep = cfg["sweep"]
    scheme = cfg.scheme()
    sps = scheme.samples_per_symbol
    header = ["snr_db", "est_snr_db", "samples", "error_db"]
    rows = []
    for point, snr_db in enumerate(sweep["snr_db"]):
        rng = trial_rng(cfg.seed, point)
        n = sweep["samples_per_phase"] - sweep["samples_per_phase"] % sps
        gamma_lin = db_to_linear(snr_db)
        leak = complex(math.sqrt(db_to_linear(-cfg["channel"]["circulator_isolation_db"])))
        h = math.sqrt(gamma_lin)          # per-sample SNR with unit noise
        carrier = np.ones(n, dtype=complex)
        noise1 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        noise2 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
        chips = 1.0 - 2.0 * rng.integers(0, 2, n // sps)
        gamma_wave = np.repeat(chips, sps)
        phase1 = leak * carrier + noise1
        phase2 = leak * carrier + h * gamma_wave * carrier + noise2
        est = rxchain.estimate_snr_two_phase(phase1, phase2, carrier)
        est_db = 10 * math.log10(est.gamma) if est.gamma > 0 else -math.inf
        rows.append([snr_db, est_db, n, est_db - snr_db])
    return header, format_rows(rows)


def _mac_amplitudes(n_devices: int, gap_db: float) -> np.ndarray:
    return np.array([math.sqrt(db_to_linear(-gap_db * d)) for d in range(n_devices)])


_MAC_SCHEME_TAGS = {"tdma": 0, "fdma": 1, "cbma": 2, "noma": 3}


def run_mac_compare(cfg: ScenarioConfig):
    m = cfg["mac"]
    n_dev = m["n_devices"]
    n_bits = m["bits_per_device"]
    noise_power = 1.0 / db_to_linear(m["snr_db"])
    amps = _mac_amplitudes(n_dev, m["power_gap_db"])
    header = ["scheme", "device_id", "bits", "errors", "ber"]
    rows = []

    for scheme_name in m["schemes"]:
        rng = trial_rng(cfg.seed, _MAC_SCHEME_TAGS[scheme_name])
        bits = [rng.integers(0, 2, n_bits).astype(np.int8) for _ in range(n_dev)]
        sigma = math.sqrt(noise_power / 2.0)

        if scheme_name == "tdma":
            # one device per slot: no cross-device interference
            for d in range(n_dev):
                x = amps[d] * (1.0 - 2.0 * bits[d]) + sigma * (
                    rng.standard_normal(n_bits) + 1j * rng.standard_normal(n_bits))
                decided = (x.real < 0).astype(np.int8)
                errors = int(np.count_nonzero(decided != bits[d]))
                rows.append([scheme_name, d, n_bits, errors, errors / n_bits])

        elif scheme_name == "fdma":
            offsets = [(d + 1) * 100e3 for d in range(n_dev)]
            mac.fdma_assign(n_dev, offsets)   # validates the band fits
            for d in range(n_dev):
                x = amps[d] * (1.0 - 2.0 * bits[d]) + sigma * (
                    rng.standard_normal(n_bits) + 1j * rng.standard_normal(n_bits))
                decided = (x.real < 0).astype(np.int8)
                errors = int(np.count_nonzero(decided != bits[d]))
                rows.append([scheme_name, d, n_bits, errors, errors / n_bits])

        elif scheme_name == "cbma":
            sset = mac.walsh_set(m["walsh_length"], n_dev)
            weights = (mac.power_control_weights(amps) if m["power_control"]
                       else np.ones(n_dev))
            length = sset.length
            total = n_bits * length
            mix = np.zeros(total + m["chip_misalignment"], dtype=complex)
            for d in range(n_dev):
                chips = mac.cbma_spread(bits[d], sset.sequences[d])
                shift = m["chip_misalignment"] if d == n_dev - 1 else 0
                mix[shift:shift + total] += amps[d] * weights[d] * chips
            mix = mix[:total]
            mix += sigma * (rng.standard_normal(total)
                            + 1j * rng.standard_normal(total))
            decoded = mac.cbma_despread(mix, sset)
            for d in range(n_dev):
                errors = int(np.count_nonzero(decoded[d] != bits[d]))
                rows.append([scheme_name, d, n_bits, errors, errors / n_bits])

        elif scheme_name == "noma":
            pairing = mac.noma_assign({d: complex(amps[d]) for d in range(n_dev)},
                                      min_gap_db=m["min_power_gap_db"])
            x = sum(amps[d] * (1.0 - 2.0 * bits[d]) for d in range(n_dev))
            x = x + sigma * (rng.standard_normal(n_bits)
                             + 1j * rng.standard_normal(n_bits))
            decoded = mac.noma_sic_decode(x, pairing)
            for d in range(n_dev):
                errors = int(np.count_nonzero(decoded[d] != bits[d]))
                rows.append([scheme_name, d, n_bits, errors, errors / n_bits])
    return header, format_rows(rows)


def build_budget(cfg: ScenarioConfig, distance_m: float | None = None) -> LinkBudget:
    ch = cfg["channel"]
    return LinkBudget(
        tx_power_dbm=ch["tx_power_dbm"],
        tx_antenna_gain_dbi=ch["tx_antenna_gain_dbi"],
        device_antenna_gain_dbi=ch["device_antenna_gain_dbi"],
        carrier_frequency_hz=ch["carrier_frequency_hz"],
        distance_m=distance_m if distance_m is not None else cfg["netsim"]["distance_m"],
        path_loss_exponent=ch["path_loss_exponent"],
        circulator_isolation_db=ch["circulator_isolation_db"],
        circulator_insertion_loss_db=ch["circulator_insertion_loss_db"],
        bandwidth_hz=ch["bandwidth_hz"],
        noise_figure_db=ch["noise_figure_db"])


def run_topology_run(cfg: ScenarioConfig):
    ns = cfg["netsim"]
    budget = build_budget(cfg)
    device = netsim.DeviceState(
        category=ns["device_category"],
        self_discharge_uw=ns["self_discharge_uw"],
        activation_energy_uj=ns["activation_energy_uj"],
        harvest_sensitivity_dbm=ns["harvest_sensitivity_dbm"],
        harvest_efficiency=ns["harvest_efficiency"],
        amplifier_gain=ns["amplifier_gain"],
        active_tx_power_dbm=ns["active_tx_power_dbm"])
    scene = netsim.standard_scene(
        ns["topology"], ns["distance_m"], budget=budget, device=device,
        node_offset_m=ns["node_offset_m"],
        power_cap_dbm=ns["power_cap_dbm"] if ns["topology"] == 4 else None,
        fading=cfg["channel"]["fading"])
    radio = netsim.RadioConfig(scheme=cfg.scheme(),
                               slot_duration_s=ns["slot_duration_s"])
    log = netsim.run_inventory(scene, ns["rounds"], cfg=radio, rng_seed=cfg.seed)
    header = list(netsim.InventoryLog.CSV_COLUMNS)
    rows = []
    for r in log.records:
        rows.append([r.round_index, r.device_id, r.slot, r.category,
                     r.charge_delay_s, int(r.responded), int(r.success),
                     r.end_to_end_delay_s, r.snr_db, r.bits, r.bit_errors,
                     r.downlink_node, r.uplink_node])
    return header, format_rows(rows)


RUNNERS = {
    "ber-sweep": run_ber_sweep,
    "snr-sweep": run_snr_sweep,
    "mac-compare": run_mac_compare,
    "topology-run": run_topology_run,
}


def run_experiment(cfg: ScenarioConfig):
    return RUNNERS[cfg.kind](cfg)
