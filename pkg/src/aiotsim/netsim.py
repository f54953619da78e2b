"""Discrete-event layer: device energy, topologies, and inventory rounds.

An inventory round follows the reader-talks-first protocol: the reader
transmits a carrier plus query, the addressed tag charges until it can
respond, then backscatters one 1024-bit frame that the receiving node pushes
through the full receiver chain.  Success means a CRC-verified frame.

Device categories: A has no storage and answers only while illuminated; B
stores harvested energy and may amplify its reflection; C stores energy and
transmits actively, but its supercapacitor leaks, which can make harvesting
infeasible.  Topologies: (1) reader and receiver are the same base station,
(2) an intermediate node fronts the tag and relays to the BS, (3) downlink
and uplink terminate at different nodes (bistatic), (4) a UE serves the tag
on an unlicensed band with a transmit-power cap and no BS.
"""
from __future__ import annotations

import copy
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import framing, phy, rxchain
from .channel import LinkBudget, LinkRealization, compose_received, path_gain, realize_link
from .errors import AiotError, InvalidScene, NoSync
from .mac import Schedule, tdma_schedule
from .util import db_to_linear, linear_to_db, trial_rng

NEVER = math.inf

# Harvester defaults; assumptions, surfaced by `aiot describe`.
HARVEST_SENSITIVITY_DBM = -20.0
HARVEST_EFFICIENCY = 0.3
DEFAULT_ACTIVATION_ENERGY_UJ = 50.0


@dataclass
class DeviceState:
    """Energy bookkeeping for one tag."""

    category: str = "B"                  # 'A' | 'B' | 'C'
    energy_store_uj: float = 0.0
    storage_capacity_uj: float = 200.0
    harvest_sensitivity_dbm: float = HARVEST_SENSITIVITY_DBM
    harvest_efficiency: float = HARVEST_EFFICIENCY
    activation_energy_uj: float = DEFAULT_ACTIVATION_ENERGY_UJ
    self_discharge_uw: float = 0.0       # supercapacitor leakage (category C)
    amplifier_gain: float = 1.0          # reflection gain (category B only)
    active_tx_power_dbm: float = 10.0    # category C uplink power
    min_operating_power_uw: float = 0.0  # category A instantaneous floor

    def __post_init__(self):
        if self.category not in ("A", "B", "C"):
            raise ValueError(f"unknown device category {self.category!r}")
        if self.category == "A":
            self.storage_capacity_uj = 0.0
            self.energy_store_uj = 0.0
        if self.amplifier_gain < 1.0:
            raise ValueError("amplifier gain must be >= 1")
        if not 0.0 <= self.energy_store_uj <= max(self.storage_capacity_uj, 0.0):
            raise ValueError("energy store outside [0, capacity]")


def harvested_power(incident_dbm: float,
                    sensitivity_dbm: float = HARVEST_SENSITIVITY_DBM,
                    efficiency: float = HARVEST_EFFICIENCY) -> float:
    """RF-harvester output in microwatts: zero below the sensitivity
    threshold, a constant conversion efficiency above it."""
    if incident_dbm < sensitivity_dbm:
        return 0.0
    incident_uw = 10.0 ** (incident_dbm / 10.0) * 1000.0
    return efficiency * incident_uw


def charge_delay(device: DeviceState, harvest_uw: float) -> float:
    """Seconds until the device can answer, or NEVER (math.inf).

    Storage devices need their store to reach the activation energy; if
    leakage eats the harvest first, the device never becomes ready.  A
    storage-free category-A tag responds instantly while illuminated above
    its operating floor and never otherwise.
    """
    if device.category == "A":
        if harvest_uw > 0.0 and harvest_uw >= device.min_operating_power_uw:
            return 0.0
        return NEVER
    if device.energy_store_uj >= device.activation_energy_uj:
        return 0.0
    net_uw = harvest_uw - device.self_discharge_uw
    if net_uw <= 0.0:
        return NEVER
    return (device.activation_energy_uj - device.energy_store_uj) / net_uw


@dataclass(frozen=True)
class SceneNode:
    name: str
    role: str                       # 'bs' | 'intermediate' | 'assisting' | 'ue'
    position_m: tuple[float, float] = (0.0, 0.0)


@dataclass
class SceneDevice:
    device_id: int
    position_m: tuple[float, float]
    state: DeviceState = field(default_factory=DeviceState)


@dataclass
class TopologyScene:
    """Connectivity pattern plus geometry for one inventory scenario."""

    kind: int
    nodes: list[SceneNode]
    devices: list[SceneDevice]
    budget: LinkBudget = field(default_factory=LinkBudget)
    downlink_node: str = ""            # transmits carrier + query toward tags
    uplink_node: str = ""              # receives the tag responses
    power_cap_dbm: float | None = None  # unlicensed regulatory cap (kind 4)
    relay_hop_delay_s: float = 0.0      # extra store-and-forward latency
    fading: str = "none"

    def __post_init__(self):
        self.validate()

    def node(self, name: str) -> SceneNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise InvalidScene(f"no node named {name!r}")

    def validate(self):
        if self.kind not in (1, 2, 3, 4):
            raise InvalidScene(f"topology kind {self.kind} not in 1..4")
        if not self.devices:
            raise InvalidScene("scene has no devices")
        roles = {n.role for n in self.nodes}
        down = self.node(self.downlink_node)
        up = self.node(self.uplink_node)
        if self.kind == 1:
            if down.role != "bs" or up is not down:
                raise InvalidScene("topology 1 is a direct BS <-> device link")
        elif self.kind == 2:
            if down.role != "intermediate" or up is not down:
                raise InvalidScene("topology 2 fronts the device with one intermediate node")
            if "bs" not in roles:
                raise InvalidScene("topology 2 needs a BS behind the intermediate node")
        elif self.kind == 3:
            if down is up:
                raise InvalidScene("topology 3 splits downlink and uplink across nodes")
            if not {down.role, up.role} & {"bs"}:
                raise InvalidScene("topology 3 keeps the BS on one side of the split")
        elif self.kind == 4:
            if "bs" in roles:
                raise InvalidScene("topology 4 has no BS")
            if down.role != "ue" or up is not down:
                raise InvalidScene("topology 4 is a direct UE <-> device link")
            if self.power_cap_dbm is None:
                raise InvalidScene("topology 4 needs the unlicensed power cap")

    def effective_tx_power_dbm(self) -> float:
        if self.power_cap_dbm is not None:
            return min(self.budget.tx_power_dbm, self.power_cap_dbm)
        return self.budget.tx_power_dbm


def _distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class RadioConfig:
    """Air-interface parameters shared by every round."""

    scheme: phy.ModulationScheme = phy.ModulationScheme(
        phy.Modulation.BPSK, symbol_rate_hz=1e6, samples_per_symbol=8)
    preamble_word: int = framing.DEFAULT_PREAMBLE_WORD
    sync_threshold: float = rxchain.DEFAULT_SYNC_THRESHOLD
    phase1_samples: int = 1024
    slot_duration_s: float = 1.0

    @property
    def sample_rate_hz(self) -> float:
        return self.scheme.symbol_rate_hz * self.scheme.samples_per_symbol


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    device_id: int
    slot: int
    category: str
    charge_delay_s: float
    responded: bool
    success: bool
    end_to_end_delay_s: float
    snr_db: float
    bits: int
    bit_errors: int
    downlink_node: str
    uplink_node: str


@dataclass
class InventoryLog:
    scene_kind: int
    seed: int
    records: list[RoundRecord] = field(default_factory=list)

    CSV_COLUMNS = ("round", "device_id", "slot", "category", "charge_delay_s",
                   "responded", "success", "delay_s", "snr_db", "bits",
                   "bit_errors", "downlink_node", "uplink_node")

    def success_rate(self) -> float:
        if not self.records:
            return 0.0
        return sum(r.success for r in self.records) / len(self.records)

    def bit_error_rate(self) -> float:
        bits = sum(r.bits for r in self.records)
        errors = sum(r.bit_errors for r in self.records)
        return errors / bits if bits else 0.0

    def to_csv(self, stream: io.TextIOBase) -> None:
        stream.write(",".join(self.CSV_COLUMNS) + "\n")
        for r in self.records:
            row = (r.round_index, r.device_id, r.slot, r.category,
                   format(r.charge_delay_s, ".10g"), int(r.responded),
                   int(r.success), format(r.end_to_end_delay_s, ".10g"),
                   format(r.snr_db, ".10g"), r.bits, r.bit_errors,
                   r.downlink_node, r.uplink_node)
            stream.write(",".join(str(v) for v in row) + "\n")

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _incident_power_dbm(scene: TopologyScene, device: SceneDevice) -> float:
    """Carrier power arriving at the tag during the query."""
    down = scene.node(scene.downlink_node)
    d = _distance(down.position_m, device.position_m)
    d = max(d, 0.01)
    gain_db = (scene.budget.tx_antenna_gain_dbi
               + scene.budget.device_antenna_gain_dbi
               - scene.budget.circulator_insertion_loss_db
               + linear_to_db(path_gain(scene.budget, d)))
    return scene.effective_tx_power_dbm() + gain_db


def _round_link(scene: TopologyScene, device: SceneDevice,
                cfg: RadioConfig, rng) -> LinkRealization:
    """Block-fading realization matching the topology's geometry."""
    down = scene.node(scene.downlink_node)
    up = scene.node(scene.uplink_node)
    budget = replace(scene.budget, tx_power_dbm=scene.effective_tx_power_dbm())
    d_fwd = max(_distance(down.position_m, device.position_m), 0.01)
    d_back = max(_distance(device.position_m, up.position_m), 0.01)
    if down is up:
        return realize_link(budget, scene.fading, rng,
                            forward_distance_m=d_fwd, back_distance_m=d_back,
                            direct_path="circulator")
    d_dir = max(_distance(down.position_m, up.position_m), 0.01)
    return realize_link(budget, scene.fading, rng,
                        forward_distance_m=d_fwd, back_distance_m=d_back,
                        direct_path="propagation", direct_distance_m=d_dir)


def _active_uplink(scene: TopologyScene, device: SceneDevice,
                   cfg: RadioConfig, rng) -> LinkRealization:
    """Category C transmits its own RF: single-hop uplink, no reflection
    cascade, the reader carrier still leaks into the receiver."""
    base = _round_link(scene, device, cfg, rng)
    # Baseband amplitudes are referenced to the reader carrier, so the
    # active hop rescales by the device/reader power ratio.
    power_ratio = db_to_linear(device.state.active_tx_power_dbm
                               - scene.effective_tx_power_dbm())
    return replace(base, h_forward=1 + 0j,
                   h_back=base.h_back * math.sqrt(power_ratio))


def _receive_frame(tx_bits: np.ndarray, scene: TopologyScene,
                   device: SceneDevice, cfg: RadioConfig, rng):
    """Simulate one response at sample level; returns (ok, errors, snr_db)."""
    scheme = cfg.scheme
    st = device.state
    amplitude = math.sqrt(db_to_linear(scene.effective_tx_power_dbm()))

    gamma = phy.modulate(tx_bits, scheme,
                         phy.default_map(scheme.kind),
                         gain=st.amplifier_gain if st.category == "B" else 1.0)

    if st.category == "C":
        link = _active_uplink(scene, device, cfg, rng)
    else:
        link = _round_link(scene, device, cfg, rng)

    n1 = cfg.phase1_samples
    carrier = phy.CarrierWave(
        amplitude=amplitude,
        frequency_hz=scene.budget.carrier_frequency_hz,
        sample_rate_hz=cfg.sample_rate_hz,
        duration_samples=n1 + gamma.size).samples()
    silent = np.zeros(n1, dtype=complex)
    full_gamma = np.concatenate([silent, gamma])
    rx = compose_received(carrier, full_gamma, link, rng)

    phase1, phase2 = rx[:n1], rx[n1:]
    ref1, ref2 = carrier[:n1], carrier[n1:]

    snr = rxchain.estimate_snr_two_phase(phase1, phase2, carrier)
    snr_db = 10.0 * math.log10(snr.gamma) if 0 < snr.gamma < math.inf else (
        math.inf if snr.gamma == math.inf else -math.inf)

    # Leakage gain learned on the silent phase, removed from the data phase.
    energy = np.vdot(ref1, ref1)
    leak = np.vdot(ref1, phase1) / energy
    residual = phase2 - leak * ref2

    preamble_wave = phy.modulate(
        framing.word_to_bits(cfg.preamble_word), scheme,
        phy.default_map(scheme.kind))
    try:
        # slotted protocol: the response timing is known to within a couple
        # of symbols, so only nearby lags are searched
        sync = rxchain.frame_sync(residual, preamble_wave, cfg.sync_threshold,
                                  search_limit=2 * scheme.samples_per_symbol)
    except NoSync:
        return False, tx_bits.size, snr_db
    if sync.offset != 0:
        return False, tx_bits.size, snr_db

    symbols = rxchain.matched_filter(residual, scheme.samples_per_symbol)
    n_pre = framing.PREAMBLE_BITS // scheme.kind.bits_per_symbol
    pre_vals = phy.bits_to_symbol_values(
        framing.word_to_bits(cfg.preamble_word), scheme.kind.bits_per_symbol)
    # Reference the unit constellation so the estimate soaks up the map's
    # constellation scale together with the channel gain.
    est = rxchain.estimate_channel(symbols[:n_pre],
                                   phy.unit_constellation(scheme.kind)[pre_vals])

    if scheme.kind is phy.Modulation.OOK:
        rx_bits = rxchain.detect_envelope(symbols)
    else:
        rx_bits = rxchain.detect_coherent(symbols, est, scheme)

    errors = int(np.count_nonzero(rx_bits != tx_bits))
    try:
        framing.parse_frame(rx_bits, cfg.preamble_word)
        return True, errors, snr_db
    except AiotError:
        return False, errors, snr_db


def run_inventory_round(scene: TopologyScene, schedule: Schedule | None = None,
                        cfg: RadioConfig = RadioConfig(), rng_seed: int = 0,
                        *, round_index: int = 0,
                        device_states: dict[int, DeviceState] | None = None
                        ) -> InventoryLog:
    """One reader-talks-first round over every scheduled device.

    Per slot: the reader radiates carrier + query; the tag charges
    (charge_delay) and, once ready within the slot, backscatters one framed
    1024-bit response which the uplink node demodulates and CRC-checks.
    `device_states` lets multi-round callers carry energy forward; by
    default the scene's initial states are deep-copied and left untouched.
    """
    scene.validate()
    if schedule is None:
        schedule = tdma_schedule(len(scene.devices), len(scene.devices))
    states = device_states if device_states is not None else {
        d.device_id: copy.deepcopy(d.state) for d in scene.devices}

    log = InventoryLog(scene_kind=scene.kind, seed=rng_seed)
    extra_delay = cfg.slot_duration_s if scene.kind == 2 else 0.0
    frame_s = framing.FRAME_BITS / cfg.scheme.bit_rate_hz

    for device in sorted(scene.devices, key=lambda d: d.device_id):
        dev_id = device.device_id
        if dev_id not in schedule.assignments:
            continue
        if not schedule.active_in_frame(dev_id, round_index):
            continue
        slot = schedule.slot_of(dev_id)
        state = states[dev_id]
        rng = trial_rng(rng_seed, round_index, dev_id)

        incident = _incident_power_dbm(scene, device)
        harvest = harvested_power(incident, state.harvest_sensitivity_dbm,
                                  state.harvest_efficiency)
        delay = charge_delay(state, harvest)

        responded = delay <= cfg.slot_duration_s
        success, errors, snr_db = False, 0, -math.inf
        bits_count = 0
        if responded:
            if state.category in ("B", "C"):
                # charge up to the response instant, then spend the activation cost
                net_uw = harvest - state.self_discharge_uw
                gained = net_uw * delay
                state.energy_store_uj = min(state.storage_capacity_uj,
                                            max(0.0, state.energy_store_uj + gained))
                state.energy_store_uj = max(
                    0.0, state.energy_store_uj - state.activation_energy_uj)
            payload = rng.integers(0, 2, framing.PAYLOAD_BITS).astype(np.int8)
            tx_bits = framing.build_frame(payload, cfg.preamble_word)
            scene_dev = replace_device(device, state)
            success, errors, snr_db = _receive_frame(tx_bits, scene, scene_dev, cfg, rng)
            bits_count = tx_bits.size
        else:
            # queried but silent: store still charges for the whole slot
            if state.category in ("B", "C"):
                net_uw = harvest - state.self_discharge_uw
                state.energy_store_uj = min(
                    state.storage_capacity_uj,
                    max(0.0, state.energy_store_uj + net_uw * cfg.slot_duration_s))

        log.records.append(RoundRecord(
            round_index=round_index, device_id=dev_id, slot=slot,
            category=state.category, charge_delay_s=delay,
            responded=responded, success=success,
            end_to_end_delay_s=(delay + frame_s + extra_delay) if responded else math.inf,
            snr_db=snr_db, bits=bits_count, bit_errors=errors if responded else 0,
            downlink_node=scene.downlink_node, uplink_node=scene.uplink_node))
    return log


def replace_device(device: SceneDevice, state: DeviceState) -> SceneDevice:
    return SceneDevice(device_id=device.device_id,
                       position_m=device.position_m, state=state)


def run_inventory(scene: TopologyScene, n_rounds: int,
                  schedule: Schedule | None = None,
                  cfg: RadioConfig = RadioConfig(),
                  rng_seed: int = 0) -> InventoryLog:
    """Multi-round inventory with energy carried across rounds."""
    states = {d.device_id: copy.deepcopy(d.state) for d in scene.devices}
    log = InventoryLog(scene_kind=scene.kind, seed=rng_seed)
    for k in range(n_rounds):
        part = run_inventory_round(scene, schedule, cfg, rng_seed,
                                   round_index=k, device_states=states)
        log.records.extend(part.records)
    return log


def standard_scene(kind: int, distance_m: float, *,
                   budget: LinkBudget | None = None,
                   device: DeviceState | None = None,
                   n_devices: int = 1,
                   node_offset_m: float = 5.0,
                   power_cap_dbm: float | None = None,
                   fading: str = "none") -> TopologyScene:
    """Canonical single-line geometry for each connectivity pattern.

    Topology 1: BS at the origin, device `distance_m` away (monostatic).
    Topology 2: BS at the origin, intermediate node `node_offset_m` out,
    device `distance_m` beyond it; the intermediate node is the Ua reader.
    Topology 3: carrier/downlink from an assisting node near the device,
    uplink received at the BS (bistatic split).
    Topology 4: a UE replaces the BS, capped at the unlicensed power limit.
    """
    budget = budget if budget is not None else LinkBudget(distance_m=distance_m)
    proto = device if device is not None else DeviceState()
    if kind in (1, 4):
        anchor = (0.0, 0.0)
        role = "bs" if kind == 1 else "ue"
        nodes = [SceneNode("reader", role, anchor)]
        down = up = "reader"
        dev_x = distance_m
    elif kind == 2:
        nodes = [SceneNode("bs", "bs", (0.0, 0.0)),
                 SceneNode("relay", "intermediate", (node_offset_m, 0.0))]
        down = up = "relay"
        dev_x = node_offset_m + distance_m
    elif kind == 3:
        nodes = [SceneNode("bs", "bs", (0.0, 0.0)),
                 SceneNode("helper", "assisting", (node_offset_m, 0.0))]
        down, up = "helper", "bs"
        dev_x = node_offset_m + distance_m
    else:
        raise InvalidScene(f"topology kind {kind} not in 1..4")
    devices = [SceneDevice(device_id=d, position_m=(dev_x, float(d)),
                           state=copy.deepcopy(proto))
               for d in range(n_devices)]
    return TopologyScene(kind=kind, nodes=nodes, devices=devices,
                         budget=budget, downlink_node=down, uplink_node=up,
                         power_cap_dbm=power_cap_dbm, fading=fading)


def range_sweep(scene: TopologyScene, distances_m, metric: str = "ber",
                cfg: RadioConfig = RadioConfig(), n_rounds: int = 10,
                rng_seed: int = 0) -> list[dict]:
    """Move the (single) device through the distance list and tabulate
    mean estimated SNR plus the chosen metric per point."""
    if metric not in ("ber", "success-rate"):
        raise ValueError(f"unknown metric {metric!r}")
    rows = []
    for d in distances_m:
        moved = copy.deepcopy(scene)
        for dev in moved.devices:
            dev.position_m = (float(d), 0.0)
        log = run_inventory(moved, n_rounds, cfg=cfg, rng_seed=rng_seed)
        finite = [r.snr_db for r in log.records if math.isfinite(r.snr_db)]
        mean_snr = float(np.mean(finite)) if finite else -math.inf
        value = log.bit_error_rate() if metric == "ber" else log.success_rate()
        rows.append({"distance_m": float(d), "mean_snr_db": mean_snr,
                     "metric": metric, "value": value})
    return rows
