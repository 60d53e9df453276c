"""Single-airport ground delay program simulator with offline RL agents."""

__version__ = "0.1.0"

from .data_model import (
    AirportQuarter,
    FlightRecord,
    GdpAdvisory,
    Scenario,
    ScopeKind,
    WeatherKind,
    build_scenario,
    discretize_weather,
    load_scenario,
    parse_airport_quarters,
    parse_flights,
    parse_gdp_advisories,
    save_scenario,
)
from .env import Action, EnvConfig, Observation, RewardParams, SagdpEnv, StepResult, compute_reward
from .rbs_queue import QueueStats, SlotAssignment, advance_arrival_queue, allocate_slots_rbs, queue_stats
from .scenario_gen import Dataset, GenConfig, build_dataset, capacity_from_weather, gen_scenario, scripted_expert
from .scope_filter import ControlClass, ControlReason, FlightClass, Partition, is_in_scope, partition_flights

__all__ = [
    "__version__",
    "Action",
    "AirportQuarter",
    "ControlClass",
    "ControlReason",
    "Dataset",
    "EnvConfig",
    "FlightClass",
    "FlightRecord",
    "GdpAdvisory",
    "GenConfig",
    "Observation",
    "Partition",
    "QueueStats",
    "RewardParams",
    "SagdpEnv",
    "Scenario",
    "ScopeKind",
    "SlotAssignment",
    "StepResult",
    "WeatherKind",
    "advance_arrival_queue",
    "allocate_slots_rbs",
    "build_dataset",
    "build_scenario",
    "capacity_from_weather",
    "compute_reward",
    "discretize_weather",
    "gen_scenario",
    "is_in_scope",
    "load_scenario",
    "parse_airport_quarters",
    "parse_flights",
    "parse_gdp_advisories",
    "partition_flights",
    "queue_stats",
    "save_scenario",
    "scripted_expert",
]
