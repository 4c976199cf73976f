"""MAPE-K building blocks: knowledge base, rule-based analyzer, planner, executor.

The analyzer is a deterministic event-condition-action engine: a policy
fires when every condition holds over the knowledge base's latest values
and its cooldown has elapsed. Analysis itself is pure; re-trigger state
(the last-raised map) is owned by the caller and passed in explicitly.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from fogloop.errors import ConfigError, FogloopError
from fogloop.model import ParameterSpec, value_conforms


class StaleObservationError(FogloopError):
    """An observation's timestamp regressed within its stream."""


class UnknownTouchpointError(FogloopError):
    """Sampling was requested for an unregistered (service, parameter)."""


class UnknownPolicyError(FogloopError):
    """A symptom references a policy the planner does not know."""


class UnreachableTargetError(FogloopError):
    """An actuation target cannot be reached from the executor's node."""


class DoubleDispatchError(FogloopError):
    """A plan was executed a second time."""


class TypeMismatchError(ConfigError):
    """A condition compares incompatible value types; the run must halt."""


@dataclass(frozen=True)
class Observation:
    service: str
    parameter: str
    value: Any
    timestamp: int


@dataclass(frozen=True)
class KbEntry:
    """Latest value of one stream. `since` is when this value first appeared,
    so unchanged periodic samples refresh `timestamp` but not `since`."""

    value: Any
    timestamp: int
    since: int


class KnowledgeBase:
    def __init__(self) -> None:
        self.latest: dict[tuple[str, str], KbEntry] = {}
        self.history: list[Observation] = []
        self.version = 0

    def get(self, service: str, parameter: str) -> KbEntry | None:
        return self.latest.get((service, parameter))

    def put(self, obs: Observation) -> None:
        key = (obs.service, obs.parameter)
        entry = self.latest.get(key)
        if entry is not None and obs.timestamp < entry.timestamp:
            raise StaleObservationError(
                f"{obs.service}.{obs.parameter}: t={obs.timestamp} after t={entry.timestamp}"
            )
        since = entry.since if entry is not None and entry.value == obs.value else obs.timestamp
        self.latest[key] = KbEntry(obs.value, obs.timestamp, since)
        self.history.append(obs)
        self.version += 1


class Comparator(str, Enum):
    LT = "<"
    LE = "<="
    EQ = "=="
    NE = "!="
    GE = ">="
    GT = ">"


_COMPARE: dict[Comparator, Callable[[Any, Any], bool]] = {
    Comparator.LT: operator.lt,
    Comparator.LE: operator.le,
    Comparator.EQ: operator.eq,
    Comparator.NE: operator.ne,
    Comparator.GE: operator.ge,
    Comparator.GT: operator.gt,
}

_ORDERED = (Comparator.LT, Comparator.LE, Comparator.GE, Comparator.GT)


def _family(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    return type(value).__name__


@dataclass(frozen=True)
class ThresholdCondition:
    service: str
    parameter: str
    comparator: Comparator
    threshold: Any

    def holds(self, kb: KnowledgeBase, now: int) -> bool:
        entry = kb.get(self.service, self.parameter)
        if entry is None:
            return False
        left, right = _family(entry.value), _family(self.threshold)
        if left != right or (self.comparator in _ORDERED and left != "number"):
            raise TypeMismatchError(
                f"{self.service}.{self.parameter}: cannot compare {left} "
                f"{self.comparator.value} {right}"
            )
        return _COMPARE[self.comparator](entry.value, self.threshold)


@dataclass(frozen=True)
class ElapsedSinceCondition:
    """Holds once `parameter` has kept `value` for at least `duration_ms`."""

    service: str
    parameter: str
    value: Any
    duration_ms: int

    def holds(self, kb: KnowledgeBase, now: int) -> bool:
        entry = kb.get(self.service, self.parameter)
        if entry is None or entry.value != self.value:
            return False
        return entry.since + self.duration_ms <= now


Condition = ThresholdCondition | ElapsedSinceCondition


@dataclass(frozen=True)
class PlannedAction:
    service: str
    command: str
    argument: Any = None
    delay_ms: int = 0


@dataclass(frozen=True)
class Policy:
    name: str
    when: tuple[Condition, ...]
    then: tuple[PlannedAction, ...]
    cooldown_ms: int = 0


@dataclass(frozen=True)
class Symptom:
    policy: str
    observations: tuple[Observation, ...]
    raised_at: int

    @property
    def base_ts(self) -> int:
        """Newest observation behind the symptom; decision latency is measured
        from here to the actuation taking effect."""
        return max(o.timestamp for o in self.observations) if self.observations else self.raised_at


@dataclass(frozen=True)
class AdaptationPlan:
    plan_id: str
    symptom: Symptom
    actions: tuple[PlannedAction, ...]


def _snapshot(policy: Policy, kb: KnowledgeBase, now: int) -> tuple[Observation, ...]:
    picked: list[Observation] = []
    seen: set[tuple[str, str]] = set()
    for cond in policy.when:
        key = (cond.service, cond.parameter)
        if key in seen:
            continue
        seen.add(key)
        entry = kb.get(*key)
        if entry is not None:
            picked.append(Observation(cond.service, cond.parameter, entry.value, entry.timestamp))
    return tuple(picked)


def analyze(
    kb: KnowledgeBase,
    policies: Iterable[Policy],
    now: int,
    last_raised: Mapping[str, int] | None = None,
) -> list[Symptom]:
    """One symptom per policy whose conditions all hold and whose cooldown has
    elapsed. Evaluation follows declaration order; the KB is never mutated."""
    last_raised = last_raised or {}
    symptoms: list[Symptom] = []
    for policy in policies:
        last = last_raised.get(policy.name)
        if last is not None and now - last < policy.cooldown_ms:
            continue
        if all(cond.holds(kb, now) for cond in policy.when):
            symptoms.append(Symptom(policy.name, _snapshot(policy, kb, now), now))
    return symptoms


Reader = Callable[[], Any]


class Monitor:
    """Sensor-side touchpoint registry: read a device value, stamp the clock."""

    def __init__(self) -> None:
        self._touchpoints: dict[tuple[str, str], tuple[ParameterSpec, Reader]] = {}

    def register_touchpoint(self, service: str, spec: ParameterSpec, reader: Reader) -> None:
        self._touchpoints[(service, spec.name)] = (spec, reader)

    @property
    def touchpoints(self) -> tuple[tuple[str, str], ...]:
        return tuple(self._touchpoints)

    def sample(self, service: str, parameter: str, now: int) -> Observation:
        try:
            spec, reader = self._touchpoints[(service, parameter)]
        except KeyError:
            raise UnknownTouchpointError(f"{service}.{parameter} is not registered") from None
        value = reader()
        if not value_conforms(value, spec.value_type):
            raise TypeMismatchError(
                f"{service}.{parameter}: read {value!r}, expected {spec.value_type.value}"
            )
        return Observation(service, parameter, value, now)


class Planner:
    """Turns symptoms into adaptation plans with run-unique ids."""

    def __init__(self, prefix: str = "plan"):
        self._prefix = prefix
        self._count = 0

    def plan(self, symptom: Symptom, policies: Iterable[Policy]) -> AdaptationPlan:
        for policy in policies:
            if policy.name == symptom.policy:
                self._count += 1
                return AdaptationPlan(f"{self._prefix}-p{self._count}", symptom, policy.then)
        raise UnknownPolicyError(f"no policy named '{symptom.policy}'")


Transport = Callable[[AdaptationPlan, int, PlannedAction, int], Any]


@dataclass
class Executor:
    """Dispatches each plan exactly once through an actuation transport.

    The transport sends one actuation per action, timed at now + delay;
    link latency is added downstream by the network. It raises
    UnreachableTargetError when no route exists.
    """

    transport: Transport
    dispatched: set[str] = field(default_factory=set)

    def execute(self, plan: AdaptationPlan, now: int) -> list[Any]:
        if plan.plan_id in self.dispatched:
            raise DoubleDispatchError(f"plan '{plan.plan_id}' already dispatched")
        self.dispatched.add(plan.plan_id)
        return [
            self.transport(plan, idx, action, now + action.delay_ms)
            for idx, action in enumerate(plan.actions)
        ]
