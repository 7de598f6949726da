"""Spacecraft proximity-operations sandbox.

Relative-motion dynamics, a waypoint-tracking control environment, a small
policy-gradient trainer, a CBF-based runtime-assurance filter with its QP
solver, and a multi-agent scenario harness.
"""

from .dynamics import (
    ChiefOrbit,
    InertialState,
    PropagationError,
    RelativeState,
    VehicleParams,
    cwh_closed_form,
    default_orbit,
    default_vehicle,
    propagate_cwh,
    propagate_inertial,
)
from .env import EpisodeConfig, Observation, RewardParams, Status, WaypointTask
from .harness import (
    MetricsReport,
    ScenarioSpec,
    TrajectoryLog,
    baseline_stats,
    run,
    single_agent_passes,
    three_agent_standoff,
)
from .policy import BaselineGains, MlpPolicy, baseline_act, load_policy, save_policy
from .qp import QpProblem, QpSolution, solve
from .rta import AgentSnapshot, RtaDecision, RtaParams, filter_actions, filter_agent
from .training import TrainerConfig, evaluate_policy, train

__version__ = "0.1.0"

__all__ = [
    "AgentSnapshot",
    "BaselineGains",
    "ChiefOrbit",
    "EpisodeConfig",
    "InertialState",
    "MetricsReport",
    "MlpPolicy",
    "Observation",
    "PropagationError",
    "QpProblem",
    "QpSolution",
    "RelativeState",
    "RewardParams",
    "RtaDecision",
    "RtaParams",
    "ScenarioSpec",
    "Status",
    "TrainerConfig",
    "TrajectoryLog",
    "VehicleParams",
    "WaypointTask",
    "baseline_act",
    "baseline_stats",
    "cwh_closed_form",
    "default_orbit",
    "default_vehicle",
    "evaluate_policy",
    "filter_actions",
    "filter_agent",
    "load_policy",
    "propagate_cwh",
    "propagate_inertial",
    "run",
    "save_policy",
    "single_agent_passes",
    "solve",
    "three_agent_standoff",
    "train",
]
