"""Seed-reproducible simulator for ambient-IoT backscatter systems.

Layers: `phy` (impedance-switched reflection modulation), `channel` (dyadic
link, direct path, noise), `framing` (1024-bit frame codec), `rxchain`
(synchronization through detection, interference countermeasures), `mac`
(TDMA/FDMA/CBMA/NOMA), `netsim` (device energy and topology rounds), and a
CSV-emitting CLI (`aiot`).
"""

__version__ = "0.1.0"

from . import channel, config, errors, experiments, framing, mac, netsim, phy, rxchain  # noqa: F401
