"""Discrete-event simulation and analytics for the ZeroBlock mining protocol."""

from .analytics import (
    accidental_fork_probability,
    event4_max_probability,
    poisson_pmf,
    revenue_shares,
    selfish_threshold_lower,
)
from .chain import Block, Chain, Kind, RejectReason, compact, expand, fork_choice, validate_block
from .churn import ChurnParams, join_majority_probability, join_protocol
from .mining import MatSchedule, Target
from .scenario import Scenario, load_scenario, parse_scenario
from .simnet import MinerSpec, SimConfig, SimTrace, run

__version__ = "0.1.0"

__all__ = [
    "Block", "Chain", "ChurnParams", "Kind", "MatSchedule", "MinerSpec", "RejectReason",
    "Scenario", "SimConfig", "SimTrace", "Target", "accidental_fork_probability", "compact",
    "event4_max_probability", "expand", "fork_choice", "join_majority_probability",
    "join_protocol", "load_scenario", "parse_scenario", "poisson_pmf", "revenue_shares",
    "run", "selfish_threshold_lower", "validate_block",
]
