"""Uplink physical-layer network coding: codec, OFDM modem, and simulator."""

from .pnc_core import (
    MappingCatalog,
    QamConstellation,
    SfsCatalog,
    enumerate_sfs,
    export_catalog,
    hub_decode,
    load_catalog,
    nearest_sfs,
    offline_search,
    online_select,
    pnc_encode,
)
from .sim_harness import SimConfig, parse_config, run_comp_baseline, run_ser_sweep

__version__ = "0.1.0"

__all__ = [
    "MappingCatalog",
    "QamConstellation",
    "SfsCatalog",
    "SimConfig",
    "enumerate_sfs",
    "export_catalog",
    "hub_decode",
    "load_catalog",
    "nearest_sfs",
    "offline_search",
    "online_select",
    "parse_config",
    "pnc_encode",
    "run_comp_baseline",
    "run_ser_sweep",
    "__version__",
]
