"""Control-mode mechanics: interaction taxonomy, state aggregation, master-slave
delegation, and deterministic peer-coordination rounds.

Centralized control has slave loops forward changed observations to a master
whose knowledge base aggregates them into system-state parameters; master
plans are delegated back as per-slave sub-plans. Decentralized control runs
leader-based rounds: peers propose, the lowest-id non-abstaining proposal is
decided, and each decided action executes exactly once at its owner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping

from fogloop.errors import ConfigError, FogloopError
from fogloop.mape import AdaptationPlan, Observation, TypeMismatchError
from fogloop.model import ValueType
from fogloop.simnet import Topology


class InteractionKind(str, Enum):
    """Who talks to whom; every simulator message carries exactly one kind."""

    MANAGER_TO_ELEMENT_SENSE = "m2e-sense"
    MANAGER_TO_ELEMENT_ACTUATE = "m2e-actuate"
    INTER_COMPONENT = "inter-component"
    INTRA_DELEGATION = "intra-delegation"
    INTRA_COORDINATION = "intra-coordination"


class Combinator(str, Enum):
    SUM = "sum"
    MEAN = "mean"
    MAX = "max"
    MIN = "min"
    VECTOR = "vector"


class OrphanActionError(FogloopError):
    """A delegated action targets a service outside every slave scope."""


class IncompleteRoundError(FogloopError):
    """A round was decided before every member proposed or abstained."""


@dataclass(frozen=True)
class AggregationSpec:
    name: str
    inputs: tuple[tuple[str, str, str], ...]
    combinator: Combinator
    output: str
    output_type: ValueType = ValueType.REAL


@dataclass(frozen=True)
class CentralizedControl:
    master: str
    node: str | None = None
    aggregations: tuple[AggregationSpec, ...] = ()


@dataclass(frozen=True)
class DecentralizedControl:
    group: tuple[str, ...]
    coordinate: tuple[str, ...] = ("execute",)


ControlMode = CentralizedControl | DecentralizedControl


def _numeric(value: Any, spec: AggregationSpec) -> Fraction:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeMismatchError(
            f"aggregation '{spec.name}': {spec.combinator.value} needs numbers, got {value!r}"
        )
    return Fraction(value)


def _to_output(value: Fraction, output_type: ValueType) -> int | float:
    if output_type is ValueType.INTEGER:
        return round(value)
    return float(value)


def aggregate(
    spec: AggregationSpec,
    states: Mapping[tuple[str, str, str], Any],
    now: int,
    service: str = "system",
) -> Observation | None:
    """Combine forwarded slave values into one system-state observation.

    Returns None while any input is missing: aggregation stalls until every
    declared input has been forwarded at least once. Arithmetic is exact
    (rationals), with one rounding step to the declared output type, so the
    result is invariant under input permutation.
    """
    values = []
    for key in spec.inputs:
        if key not in states:
            return None
        values.append(states[key])
    if spec.combinator is Combinator.VECTOR:
        return Observation(service, spec.output, list(values), now)
    numbers = [_numeric(v, spec) for v in values]
    if spec.combinator is Combinator.SUM:
        result = sum(numbers, Fraction(0))
    elif spec.combinator is Combinator.MEAN:
        result = sum(numbers, Fraction(0)) / len(numbers)
    elif spec.combinator is Combinator.MAX:
        result = max(numbers)
    else:
        result = min(numbers)
    return Observation(service, spec.output, _to_output(result, spec.output_type), now)


class ForwardingFilter:
    """Change-based forwarding: pass a value through only when it differs from
    the last forwarded one (first samples always pass)."""

    def __init__(self) -> None:
        self._last: dict[tuple[str, str], Any] = {}

    def offer(self, obs: Observation) -> bool:
        key = (obs.service, obs.parameter)
        if key in self._last and self._last[key] == obs.value:
            return False
        self._last[key] = obs.value
        return True


def delegate(
    plan: AdaptationPlan, scopes: Mapping[str, Iterable[str]]
) -> dict[str, AdaptationPlan]:
    """Partition a master plan into per-slave sub-plans by target ownership.

    Sub-plans preserve the master plan's action order; their union is exactly
    the master's action multiset. Iteration order follows `scopes`.
    """
    owners: dict[str, str] = {}
    for loop_id, scope in scopes.items():
        for svc in scope:
            owners[svc] = loop_id
    split: dict[str, list] = {loop_id: [] for loop_id in scopes}
    for action in plan.actions:
        owner = owners.get(action.service)
        if owner is None:
            raise OrphanActionError(
                f"plan '{plan.plan_id}': no slave scope owns '{action.service}'"
            )
        split[owner].append(action)
    return {
        loop_id: AdaptationPlan(f"{plan.plan_id}.{loop_id}", plan.symptom, tuple(actions))
        for loop_id, actions in split.items()
        if actions
    }


@dataclass
class CoordinationRound:
    """One peer-coordination exchange, advanced by message delivery."""

    round_id: str
    component: str
    leader: str
    proposals: dict[str, Any] = field(default_factory=dict)
    decided_by: str | None = None
    decided: Any | None = None
    acked: set[str] = field(default_factory=set)


def decide_round(
    round_id: str,
    group: Iterable[str],
    component: str,
    proposals: Mapping[str, Any],
) -> CoordinationRound:
    """Leader rule: lowest-id member leads; the lowest-id non-abstaining
    proposal wins. All-abstain rounds decide a no-op (None)."""
    members = sorted(group)
    if len(members) < 2:
        raise ConfigError(f"round '{round_id}': group must have at least two members")
    missing = [m for m in members if m not in proposals]
    if missing:
        raise IncompleteRoundError(f"round '{round_id}': missing proposals from {missing}")
    rnd = CoordinationRound(round_id, component, leader=members[0],
                            proposals=dict(proposals))
    for member in members:
        if proposals[member] is not None:
            rnd.decided_by = member
            rnd.decided = proposals[member]
            break
    return rnd


def round_timeout_ms(topology: Topology, nodes: Iterable[str]) -> int:
    """ACK deadline: 10x the largest latency between any two member nodes."""
    ids = sorted(set(nodes))
    worst = 0
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            path = topology.shortest_path(a, b)
            if path is not None:
                worst = max(worst, topology.path_latency(path))
    return 10 * worst
