"""Dyadic backscatter channel, direct-path leakage, path loss, and noise.

A tag's reflected signal reaches the receiver through the cascade of the
forward (source -> tag) and backscatter (tag -> receiver) channels, so the
constellation arrives scaled by the product h_forward * h_back.  The direct
path carries the much stronger unmodulated source signal: circulator leakage
in a monostatic reader, or a plain propagation path in bistatic scenes.

Amplitudes follow a mW-referenced convention throughout: a transmitter at
P dBm emits a baseband phasor of magnitude sqrt(10^(P/10)), and channel
gains are plain amplitude ratios, so |sample|^2 is instantaneous power in mW.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .util import as_rng, db_to_linear

SPEED_OF_LIGHT = 299792458.0

# Thermal noise density at 290 K.
NOISE_DENSITY_DBM_HZ = -174.0


@dataclass(frozen=True)
class LinkBudget:
    """Radio parameters of one reader/tag pair.

    Defaults mirror a 925 MHz demonstration rig: 20 dBm reader output into a
    5 dBi panel, a 2 dBi tag antenna, a circulator with 20 dB isolation and
    0.4 dB insertion loss, 1 MHz occupied bandwidth.
    """

    tx_power_dbm: float = 20.0
    tx_antenna_gain_dbi: float = 5.0
    device_antenna_gain_dbi: float = 2.0
    carrier_frequency_hz: float = 925e6
    distance_m: float = 1.0
    path_loss_exponent: float = 2.2
    circulator_isolation_db: float = 20.0
    circulator_insertion_loss_db: float = 0.4
    bandwidth_hz: float = 1e6
    noise_figure_db: float = 6.0

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        if self.path_loss_exponent < 2.0:
            raise ValueError("path loss exponent below 2 is not physical here")

    def noise_power_mw(self) -> float:
        """Receiver noise power over the occupied bandwidth, linear mW."""
        dbm = (NOISE_DENSITY_DBM_HZ + 10.0 * np.log10(self.bandwidth_hz)
               + self.noise_figure_db)
        return 10.0 ** (dbm / 10.0)

    def tx_amplitude(self) -> float:
        """Baseband carrier magnitude, sqrt(mW)."""
        return np.sqrt(10.0 ** (self.tx_power_dbm / 10.0))


@dataclass(frozen=True)
class LinkRealization:
    """One Monte-Carlo draw of all channel gains for a frame (block fading)."""

    h_forward: complex
    h_back: complex
    h_direct: complex
    noise_power: float            # per complex sample, linear
    carrier_delay: int = 0        # reflected-path delay, whole samples
    direct_delay: int = 0

    def __post_init__(self):
        if self.noise_power < 0:
            raise ValueError("noise power must be >= 0")
        if self.carrier_delay < 0 or self.direct_delay < 0:
            raise ValueError("delays must be >= 0")

    @property
    def h_cascade(self) -> complex:
        return self.h_forward * self.h_back


def friis_reference_db(carrier_frequency_hz: float, d0_m: float = 1.0) -> float:
    """Free-space loss at the reference distance, positive dB."""
    return 20.0 * np.log10(4.0 * np.pi * d0_m * carrier_frequency_hz / SPEED_OF_LIGHT)


def path_gain(budget: LinkBudget, distance_m: float) -> float:
    """One-hop linear power gain of the log-distance model.

    gain_dB = -(FS(1 m) + 10 n log10(d / 1 m)); antenna gains and insertion
    loss are applied by the caller per link end.
    """
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    loss_db = (friis_reference_db(budget.carrier_frequency_hz)
               + 10.0 * budget.path_loss_exponent * np.log10(distance_m))
    return 10.0 ** (-loss_db / 10.0)


def realize_link(budget: LinkBudget, fading: str = "none", rng=0, *,
                 forward_distance_m: float | None = None,
                 back_distance_m: float | None = None,
                 direct_path: str = "circulator",
                 direct_distance_m: float | None = None,
                 sample_rate_hz: float | None = None) -> LinkRealization:
    """Draw one block-fading realization of the full link.

    Both propagation hops carry antenna gains at each end plus the hop path
    gain; the monostatic reader additionally pays circulator insertion loss
    once per direction.  `fading="rayleigh"` multiplies each hop by an
    independent unit-mean-power complex Gaussian; `"none"` leaves hops
    deterministic.  The direct path is either circulator leakage at
    -isolation dB or, for `direct_path="propagation"`, a bistatic
    source -> receiver path.  Deterministic given (budget, seed).
    """
    if fading not in ("none", "rayleigh"):
        raise ValueError(f"unknown fading model {fading!r}")
    if direct_path not in ("circulator", "propagation"):
        raise ValueError(f"unknown direct path model {direct_path!r}")
    rng = as_rng(rng)

    d_fwd = budget.distance_m if forward_distance_m is None else forward_distance_m
    d_back = budget.distance_m if back_distance_m is None else back_distance_m

    g_tx = db_to_linear(budget.tx_antenna_gain_dbi)
    g_dev = db_to_linear(budget.device_antenna_gain_dbi)
    il = db_to_linear(-budget.circulator_insertion_loss_db)

    fwd_power = il * g_tx * path_gain(budget, d_fwd) * g_dev
    back_power = g_dev * path_gain(budget, d_back) * g_tx * il

    def hop(power: float) -> complex:
        amp = np.sqrt(power)
        if fading == "rayleigh":
            return amp * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
        return complex(amp)

    h_forward = hop(fwd_power)
    h_back = hop(back_power)

    if direct_path == "circulator":
        if np.isinf(budget.circulator_isolation_db):
            h_direct = 0j
        else:
            h_direct = complex(np.sqrt(db_to_linear(-budget.circulator_isolation_db)))
    else:
        d_dir = budget.distance_m if direct_distance_m is None else direct_distance_m
        h_direct = hop(il * g_tx * path_gain(budget, d_dir) * g_tx)

    carrier_delay = direct_delay = 0
    if sample_rate_hz is not None:
        carrier_delay = int(round((d_fwd + d_back) / SPEED_OF_LIGHT * sample_rate_hz))
        if direct_path == "propagation":
            d_dir = budget.distance_m if direct_distance_m is None else direct_distance_m
            direct_delay = int(round(d_dir / SPEED_OF_LIGHT * sample_rate_hz))

    return LinkRealization(h_forward=h_forward, h_back=h_back, h_direct=h_direct,
                           noise_power=budget.noise_power_mw(),
                           carrier_delay=carrier_delay, direct_delay=direct_delay)


def _delayed(x: np.ndarray, delay: int) -> np.ndarray:
    if delay == 0:
        return x
    out = np.zeros_like(x)
    out[delay:] = x[:-delay] if delay < x.size else 0
    return out


def compose_received(carrier: np.ndarray, gamma: np.ndarray,
                     link: LinkRealization, rng=0) -> np.ndarray:
    """Receiver-side samples: direct path + dyadic backscatter + noise.

    y = h_direct * s(t - t_d) + h_fwd * h_back * Gamma(t - t_c) * s(t - t_c) + n,
    with n circularly-symmetric Gaussian of per-sample power noise_power.
    Output length equals the carrier length; deterministic given the seed.
    """
    carrier = np.asarray(carrier, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    if carrier.shape != gamma.shape:
        raise LengthMismatch(f"carrier {carrier.shape} vs gamma {gamma.shape}")
    rng = as_rng(rng)

    reflected = link.h_cascade * _delayed(gamma * carrier, link.carrier_delay)
    direct = link.h_direct * _delayed(carrier, link.direct_delay)
    out = direct + reflected
    if link.noise_power > 0:
        sigma = np.sqrt(link.noise_power / 2.0)
        noise = sigma * (rng.standard_normal(carrier.size)
                         + 1j * rng.standard_normal(carrier.size))
        out = out + noise
    return out


def awgn_link(snr_linear: float, signal_power: float = 1.0) -> LinkRealization:
    """Ideal unity link with noise set for a target per-sample SNR."""
    if snr_linear <= 0:
        raise ValueError("SNR must be positive")
    return LinkRealization(h_forward=1 + 0j, h_back=1 + 0j, h_direct=0j,
                           noise_power=signal_power / snr_linear)
