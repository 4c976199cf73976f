"""Deterministic discrete-event simulator for fog-hosted IoT control loops.

Build a domain of device services, place MAPE-K loops across a
device/fog/cloud topology, pick a control mode, and run scenarios to a
virtual horizon; traces, metrics, and comparisons are exact and repeatable.
"""

from fogloop.coordination import (
    AggregationSpec,
    CentralizedControl,
    Combinator,
    ControlMode,
    DecentralizedControl,
    InteractionKind,
    aggregate,
    decide_round,
    delegate,
)
from fogloop.errors import ConfigError, FogloopError
from fogloop.mape import (
    AdaptationPlan,
    Comparator,
    ElapsedSinceCondition,
    KnowledgeBase,
    Observation,
    PlannedAction,
    Policy,
    Symptom,
    ThresholdCondition,
    analyze,
)
from fogloop.metrics import RunMetrics, compute_metrics, metrics_csv, summary_text
from fogloop.model import (
    CommandSpec,
    Composite,
    Domain,
    ParameterSpec,
    Service,
    ServiceKind,
    Task,
    ValueType,
    validate_domain,
)
from fogloop.placement import LoopSpec, Offering, Placement, place, validate_placement
from fogloop.runtime import RunResult, Runtime, discrete_snapshot, run_scenario
from fogloop.scenario import (
    Scenario,
    building_to_dict,
    config_digest,
    load_scenario,
    parse_scenario,
    validate_scenario,
    with_mode,
    with_offering,
)
from fogloop.simnet import Address, Link, Node, Simulator, Tier, Topology
from fogloop.smartbuilding import (
    BuildingDefaults,
    Device,
    DeviceKind,
    EnvironmentEvent,
    OfficeState,
    build_smart_building,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptationPlan",
    "Address",
    "AggregationSpec",
    "BuildingDefaults",
    "CentralizedControl",
    "Combinator",
    "CommandSpec",
    "Comparator",
    "Composite",
    "ConfigError",
    "ControlMode",
    "DecentralizedControl",
    "Device",
    "DeviceKind",
    "Domain",
    "ElapsedSinceCondition",
    "EnvironmentEvent",
    "FogloopError",
    "InteractionKind",
    "KnowledgeBase",
    "Link",
    "LoopSpec",
    "Node",
    "Observation",
    "Offering",
    "OfficeState",
    "ParameterSpec",
    "Placement",
    "PlannedAction",
    "Policy",
    "RunMetrics",
    "RunResult",
    "Runtime",
    "Scenario",
    "Service",
    "ServiceKind",
    "Simulator",
    "Symptom",
    "Task",
    "ThresholdCondition",
    "Tier",
    "Topology",
    "ValueType",
    "aggregate",
    "analyze",
    "build_smart_building",
    "building_to_dict",
    "compute_metrics",
    "config_digest",
    "decide_round",
    "delegate",
    "discrete_snapshot",
    "load_scenario",
    "metrics_csv",
    "parse_scenario",
    "place",
    "run_scenario",
    "summary_text",
    "validate_domain",
    "validate_placement",
    "validate_scenario",
    "with_mode",
    "with_offering",
]
