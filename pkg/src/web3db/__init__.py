"""Decentralized SQL query simulator: VRF sortition, ledger-governed access and partitioned execution."""

from .errors import Web3DBError
from .orchestrator import (
    QueryLifecycle,
    Simulation,
    SimulationConfig,
    SimulationReport,
    simulate,
    sortition_stats,
    submit_query,
)
from .vrf import KeyPair, keygen

__all__ = [
    "KeyPair",
    "QueryLifecycle",
    "Simulation",
    "SimulationConfig",
    "SimulationReport",
    "Web3DBError",
    "keygen",
    "simulate",
    "sortition_stats",
    "submit_query",
]
