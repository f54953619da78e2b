"""Scenario configuration: strict INI-style files plus AIOT_ env overrides.

Unknown sections, unknown keys, and out-of-range values are rejected rather
than ignored so a typo cannot silently invalidate an experiment.  Defaults
mirror the demonstration-rig parameter table (925 MHz, 1 MHz bandwidth,
20 dBm / 5 dBi / 2 dBi, 20 dB circulator isolation, 0.4 dB insertion loss).
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

from . import framing, netsim, rxchain
from .errors import ConfigError
from .phy import Modulation, ModulationScheme

ENV_PREFIX = "AIOT_"

EXPERIMENT_KINDS = ("ber-sweep", "snr-sweep", "mac-compare", "topology-run")


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    items = [s for s in (part.strip() for part in raw.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(float(s) for s in items)


def _parse_str_list(raw: str) -> tuple[str, ...]:
    items = [s for s in (part.strip().lower() for part in raw.split(",")) if s]
    if not items:
        raise ValueError("empty list")
    return tuple(items)


@dataclass(frozen=True)
class _Key:
    parse: object
    default: object
    choices: tuple = ()
    minimum: float | None = None
    maximum: float | None = None

    def convert(self, section: str, name: str, raw: str):
        try:
            value = self.parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {name} = {raw!r}: {exc}") from None
        if self.choices and value not in self.choices:
            raise ConfigError(f"[{section}] {name} = {raw!r}: "
                              f"must be one of {', '.join(map(str, self.choices))}")
        if self.minimum is not None:
            values = value if isinstance(value, tuple) else (value,)
            if any(v < self.minimum for v in values):
                raise ConfigError(f"[{section}] {name} = {raw!r}: below {self.minimum}")
        if self.maximum is not None:
            values = value if isinstance(value, tuple) else (value,)
            if any(v > self.maximum for v in values):
                raise ConfigError(f"[{section}] {name} = {raw!r}: above {self.maximum}")
        return value


SCHEMA: dict[str, dict[str, _Key]] = {
    "experiment": {
        "kind": _Key(str.lower, None, choices=EXPERIMENT_KINDS),
        "seed": _Key(int, 0, minimum=0),
        "out": _Key(str, ""),
    },
    "phy": {
        "modulation": _Key(str.lower, "bpsk",
                           choices=tuple(m.value for m in Modulation)),
        "symbol_rate_hz": _Key(float, 1e6, minimum=1.0),
        "samples_per_symbol": _Key(int, 8, minimum=1, maximum=4096),
    },
    "channel": {
        "carrier_frequency_hz": _Key(float, 925e6, minimum=1e6),
        "bandwidth_hz": _Key(float, 1e6, minimum=1.0),
        "tx_power_dbm": _Key(float, 20.0, minimum=-50.0, maximum=60.0),
        "tx_antenna_gain_dbi": _Key(float, 5.0, minimum=-10.0, maximum=40.0),
        "device_antenna_gain_dbi": _Key(float, 2.0, minimum=-10.0, maximum=40.0),
        "circulator_isolation_db": _Key(float, 20.0, minimum=0.0),
        "circulator_insertion_loss_db": _Key(float, 0.4, minimum=0.0),
        "path_loss_exponent": _Key(float, 2.2, minimum=2.0, maximum=6.0),
        "noise_figure_db": _Key(float, 6.0, minimum=0.0, maximum=30.0),
        "fading": _Key(str.lower, "none", choices=("none", "rayleigh")),
    },
    "sweep": {
        "snr_db": _Key(_parse_float_list, (0.0, 4.0, 8.0),
                       minimum=-40.0, maximum=60.0),
        "bits_per_point": _Key(int, 100000, minimum=992),
        "csi": _Key(str.lower, "perfect",
                    choices=("perfect", "estimated", "pipeline")),
        "samples_per_phase": _Key(int, 100000, minimum=64),
        "samples_per_symbol_points": _Key(
            lambda raw: tuple(int(float(v)) for v in _parse_float_list(raw)),
            (2, 4, 8, 16, 32), minimum=1),
    },
    "mac": {
        "schemes": _Key(_parse_str_list, ("tdma", "cbma", "noma")),
        "n_devices": _Key(int, 2, minimum=1, maximum=64),
        "snr_db": _Key(float, 15.0, minimum=-40.0, maximum=60.0),
        "power_gap_db": _Key(float, 10.0, minimum=0.0, maximum=60.0),
        "min_power_gap_db": _Key(float, 6.0, minimum=0.0, maximum=60.0),
        "walsh_length": _Key(int, 8, minimum=2, maximum=64),
        "bits_per_device": _Key(int, 20000, minimum=1),
        "chip_misalignment": _Key(int, 0, minimum=0),
        "power_control": _Key(_parse_bool, True),
    },
    "netsim": {
        "topology": _Key(int, 1, minimum=1, maximum=4),
        "distance_m": _Key(float, 1.0, minimum=0.01),
        "rounds": _Key(int, 20, minimum=1),
        "device_category": _Key(str.upper, "B", choices=("A", "B", "C")),
        "self_discharge_uw": _Key(float, 0.0, minimum=0.0),
        "activation_energy_uj": _Key(float, netsim.DEFAULT_ACTIVATION_ENERGY_UJ,
                                     minimum=0.0),
        "harvest_sensitivity_dbm": _Key(float, netsim.HARVEST_SENSITIVITY_DBM),
        "harvest_efficiency": _Key(float, netsim.HARVEST_EFFICIENCY,
                                   minimum=0.0, maximum=1.0),
        "power_cap_dbm": _Key(float, 10.0, minimum=-50.0, maximum=60.0),
        "slot_duration_s": _Key(float, 1.0, minimum=1e-6),
        "node_offset_m": _Key(float, 5.0, minimum=0.01),
        "amplifier_gain": _Key(float, 1.0, minimum=1.0),
        "active_tx_power_dbm": _Key(float, 10.0, minimum=-50.0, maximum=60.0),
    },
}

_VALID_MAC_SCHEMES = ("tdma", "fdma", "cbma", "noma")


@dataclass
class ScenarioConfig:
    """Fully resolved experiment description."""

    kind: str
    seed: int
    out: str
    values: dict[str, dict] = field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def scheme(self) -> ModulationScheme:
        p = self.values["phy"]
        return ModulationScheme(Modulation(p["modulation"]),
                                symbol_rate_hz=p["symbol_rate_hz"],
                                samples_per_symbol=p["samples_per_symbol"])


def _defaults() -> dict[str, dict]:
    return {section: {name: key.default for name, key in keys.items()}
            for section, keys in SCHEMA.items()}


def _env_overrides() -> list[tuple[str, str, str]]:
    """(section, key, raw value) triples from AIOT_SECTION_KEY variables."""
    out = []
    for var in sorted(os.environ):
        if not var.startswith(ENV_PREFIX):
            continue
        rest = var[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"environment override {var} matches no known key")
        out.append((section, key, os.environ[var]))
    return out


def load_config(path: str, *, seed_override: int | None = None,
                out_override: str | None = None) -> ScenarioConfig:
    """Parse, apply env overrides, validate, and resolve defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None

    values = _defaults()
    seen_kind = False
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for name, raw in parser.items(section):
            if name not in SCHEMA[section]:
                raise ConfigError(f"unknown key {name!r} in section [{section}]")
            values[section][name] = SCHEMA[section][name].convert(section, name, raw)
            if (section, name) == ("experiment", "kind"):
                seen_kind = True

    for section, name, raw in _env_overrides():
        values[section][name] = SCHEMA[section][name].convert(section, name, raw)
        if (section, name) == ("experiment", "kind"):
            seen_kind = True

    if not seen_kind or values["experiment"]["kind"] is None:
        raise ConfigError("config must set [experiment] kind")

    if seed_override is not None:
        values["experiment"]["seed"] = int(seed_override)
    if out_override is not None:
        values["experiment"]["out"] = out_override

    cfg = ScenarioConfig(kind=values["experiment"]["kind"],
                         seed=values["experiment"]["seed"],
                         out=values["experiment"]["out"],
                         values=values)
    _cross_validate(cfg)
    return cfg


def _cross_validate(cfg: ScenarioConfig) -> None:
    for scheme in cfg["mac"]["schemes"]:
        if scheme not in _VALID_MAC_SCHEMES:
            raise ConfigError(f"unknown mac scheme {scheme!r}")
    mac = cfg["mac"]
    if mac["n_devices"] > mac["walsh_length"]:
        raise ConfigError("mac n_devices exceeds walsh_length")
    if cfg["netsim"]["topology"] == 4 and cfg["netsim"]["power_cap_dbm"] is None:
        raise ConfigError("topology 4 requires netsim power_cap_dbm")


def resolved_lines(cfg: ScenarioConfig) -> list[str]:
    """Deterministic dump of every resolved parameter and fixed constant."""
    lines = [f"experiment.kind = {cfg.kind}",
             f"experiment.seed = {cfg.seed}",
             f"experiment.out = {cfg.out or '(default)'}"]
    for section in ("phy", "channel", "sweep", "mac", "netsim"):
        for name in SCHEMA[section]:
            value = cfg[section][name]
            if isinstance(value, tuple):
                value = ",".join(format(v, ".10g") if isinstance(v, float) else str(v)
                                 for v in value)
            elif isinstance(value, float):
                value = format(value, ".10g")
            lines.append(f"{section}.{name} = {value}")
    lines += [
        "const.frame_bits = %d" % framing.FRAME_BITS,
        "const.payload_bits = %d" % framing.PAYLOAD_BITS,
        "const.preamble_bits = %d" % framing.PREAMBLE_BITS,
        "const.preamble_word = 0x%04x" % framing.DEFAULT_PREAMBLE_WORD,
        "const.crc_polynomial = 0x%04x" % framing.CRC_POLY,
        "const.crc_init = 0x%04x" % framing.CRC_INIT,
        "const.sync_threshold_default = %.2f" % rxchain.DEFAULT_SYNC_THRESHOLD,
        "const.harvest_sensitivity_dbm_default = %.1f" % netsim.HARVEST_SENSITIVITY_DBM,
        "const.harvest_efficiency_default = %.2f" % netsim.HARVEST_EFFICIENCY,
        "const.activation_energy_uj_default = %.1f" % netsim.DEFAULT_ACTIVATION_ENERGY_UJ,
    ]
    return lines
