"""Random-direction mobility simulator with communities."""
from .sim import (
    DEFAULT_DT,
    DEFAULT_TX_DELAY,
    NodeState,
    SimBatch,
    SimOutcome,
    advance,
    estimate_r_meet_curve,
    estimate_rates,
    first_meeting_times,
    run_epidemic,
    simulate,
)

__all__ = [
    "DEFAULT_DT", "DEFAULT_TX_DELAY", "NodeState", "SimBatch", "SimOutcome", "advance",
    "estimate_r_meet_curve", "estimate_rates", "first_meeting_times", "run_epidemic", "simulate",
]
