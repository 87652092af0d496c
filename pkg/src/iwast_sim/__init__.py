"""Desk-scale simulator and toolchain for a modular remote sensing platform.

Virtual hexagonal sensor boards and a motherboard exchange a framed
command set over a shared bus, accumulate measurements into LoRa-style
uplinks, and account every microamp in a per-board energy ledger.  A
configurator CLI, a collector HTTP service, and a web dashboard round
out the toolchain.

Subpackages / modules:

- ``bus``          framed codec and metric wire scales
- ``boards``       behavioral models of the four sensor boards
- ``motherboard``  central controller FSM, NVM config, uplink accumulator
- ``radio``        LoRa time-on-air, duty-cycle gate, payload codec
- ``energy``       power profiles, ledger, battery, power report
- ``engine``       deterministic discrete-event simulator
- ``configurator`` USB-session text protocol, client and CLI
- ``collector``    uplink ingestion, storage, query/export/live APIs
- ``scenarios``    example traces and named reference scenarios
"""

__version__ = "0.1.0"
