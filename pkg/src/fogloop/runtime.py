"""Executable runs: wires devices, loop components, and control modes onto
the simulator and drives a scenario to its horizon.

Every interaction crosses the network as a message: devices push samples to
their loop's monitor, components forward work along the MAPE pipeline, the
centralized master aggregates forwarded state and delegates sub-plans, and
decentralized peers coordinate through leader-run rounds. Physics advances
lazily: an office integrates up to the current instant whenever something
reads or changes it, so energy accounting is exact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import count
from typing import Any

from fogloop.coordination import (
    DecentralizedControl,
    ForwardingFilter,
    InteractionKind,
    aggregate,
    decide_round,
    delegate,
    round_timeout_ms,
)
from fogloop.errors import ConfigError
from fogloop.mape import (
    AdaptationPlan,
    Executor,
    KnowledgeBase,
    Monitor,
    Observation,
    PlannedAction,
    Planner,
    StaleObservationError,
    UnreachableTargetError,
    analyze,
)
from fogloop.placement import COMPONENTS, LoopSpec, Placement, place
from fogloop.scenario import Scenario, validate_scenario
from fogloop.simnet import Address, EventTrace, Message, NoRouteError, Simulator
from fogloop.smartbuilding import (
    Device,
    DeviceKind,
    Environment,
    EnvironmentEvent,
    OfficeState,
    instantiate_office,
)

SENSE = InteractionKind.MANAGER_TO_ELEMENT_SENSE.value
ACTUATE = InteractionKind.MANAGER_TO_ELEMENT_ACTUATE.value
PIPELINE = InteractionKind.INTER_COMPONENT.value
DELEGATION = InteractionKind.INTRA_DELEGATION.value
COORDINATION = InteractionKind.INTRA_COORDINATION.value

ENV_SERVICE = "environment"

# Discrete, comparable device state; continuous readings are excluded.
_SNAPSHOT_KEYS: dict[DeviceKind, tuple[str, ...]] = {
    DeviceKind.DOOR: ("lock-state",),
    DeviceKind.WINDOW: ("position",),
    DeviceKind.HEATER: ("power-state",),
    DeviceKind.ENERGY_METER: (),
    DeviceKind.LAMP: ("power-state",),
    DeviceKind.CLOCK: ("armed",),
}


class _Physics:
    """Lazy integrator: advances an office exactly to `now` on demand, so
    every read and every power change sits on a segment boundary."""

    def __init__(self, office: OfficeState, env: Environment):
        self.office = office
        self.env = env
        self.last = 0

    def sync(self, now: int) -> None:
        if now > self.last:
            self.office.advance(self.env, now, now - self.last)
            self.last = now


class DeviceActor:
    """Hosts one device on its node: periodic sampling plus actuation."""

    def __init__(self, runtime: Runtime, device: Device, physics: _Physics | None,
                 office: str | None, owner: LoopActor | None):
        self.runtime = runtime
        self.device = device
        self.physics = physics
        self.office = office
        self.owner = owner
        host = runtime.scenario.topology.host_of(device.service)
        self.addr = Address(host, device.service)
        self.monitor = Monitor()
        service = runtime.scenario.domain.find_service(device.service)
        self.parameters = service.parameters
        for spec in service.parameters:
            self.monitor.register_touchpoint(
                device.service, spec, lambda p=spec.name: device.read(p)
            )
        runtime.sim.register(self.addr, self.on_message)

    def announce(self) -> None:
        self.runtime.sim.emit(
            "init",
            self.addr,
            service=self.device.service,
            kind=self.device.kind.value,
            office=self.office,
            state=dict(self.device.state),
            power_w=self.device.power_w,
        )

    def start_sampling(self) -> None:
        if self.owner is None:
            return
        for spec in self.parameters:
            self.runtime.sim.schedule(0, lambda s=spec: self._tick(s))

    def _tick(self, spec) -> None:
        sim = self.runtime.sim
        if self.physics is not None:
            self.physics.sync(sim.now)
        obs = self.monitor.sample(self.device.service, spec.name, sim.now)
        sim.send(SENSE, self.addr, self.owner.addr["monitor"], obs)
        sim.schedule(sim.now + spec.sample_interval_ms, lambda: self._tick(spec))

    def on_message(self, msg: Message) -> None:
        sim = self.runtime.sim
        if self.physics is not None:
            self.physics.sync(sim.now)
        pay = msg.payload
        action: PlannedAction = pay["action"]
        changed = self.device.apply(action.command, action.argument, sim.now)
        sim.emit(
            "actuate-applied",
            msg.src,
            self.addr,
            service=self.device.service,
            command=action.command,
            arg=action.argument,
            plan=pay["plan"],
            idx=pay["idx"],
            policy=pay["policy"],
            loop=pay["loop"],
            base_ts=pay["base_ts"],
            latency=sim.now - pay["base_ts"],
            changed=[obs.parameter for obs in changed],
        )
        if self.owner is not None:
            for obs in changed:
                sim.send(SENSE, self.addr, self.owner.addr["monitor"], obs)


class LoopActor:
    """One MAPE-K loop: five addressed components sharing a knowledge base.

    Analyze and knowledge must share a node; the other components may sit
    anywhere placement puts them, with all hand-offs sent as messages.
    """

    def __init__(self, runtime: Runtime, spec: LoopSpec):
        self.runtime = runtime
        self.spec = spec
        self.scope = set(spec.scope)
        self.kb = KnowledgeBase()
        self.last_raised: dict[str, int] = {}
        self.planner = Planner(prefix=spec.id)
        self.executor = Executor(self._transport)
        self.addr = {
            comp: Address(runtime.placement.node_of(spec.id, comp), f"{spec.id}.{comp}")
            for comp in COMPONENTS
        }
        if self.addr["analyze"].node != self.addr["knowledge"].node:
            raise ConfigError(
                f"loop '{spec.id}': analyze and knowledge must share a node"
            )
        sim = runtime.sim
        sim.register(self.addr["monitor"], self._on_monitor)
        sim.register(self.addr["analyze"], self._on_analyze)
        sim.register(self.addr["plan"], self._on_plan)
        sim.register(self.addr["execute"], self._on_execute)
        if runtime.master_id == spec.id:
            sim.register(self.addr["knowledge"], self._on_knowledge)
            self.agg_states: dict[tuple[str, str, str], Any] = {}

        self.is_master = runtime.master_id == spec.id
        self.forward_filter = ForwardingFilter()
        self.forward_keys: set[tuple[str, str]] = set()
        if runtime.master_id is not None and not self.is_master:
            for agg in runtime.control.aggregations:
                for loop_id, svc, parameter in agg.inputs:
                    if loop_id == spec.id:
                        self.forward_keys.add((svc, parameter))

        self.in_group = (
            isinstance(runtime.control, DecentralizedControl)
            and spec.id in runtime.control.group
        )
        self.pending: dict[str, deque] = {c: deque() for c in ("analyze", "execute")}
        self.round_seq: dict[str, Any] = {c: count(1) for c in ("analyze", "execute")}
        self.active_round: dict[str, dict | None] = {"analyze": None, "execute": None}
        self.round_requested: dict[str, bool] = {"analyze": False, "execute": False}
        self._round_ctx: str | None = None

    # --- monitor ---------------------------------------------------------

    def _on_monitor(self, msg: Message) -> None:
        obs: Observation = msg.payload
        sim = self.runtime.sim
        sim.send(PIPELINE, self.addr["monitor"], self.addr["analyze"], obs)
        if (obs.service, obs.parameter) in self.forward_keys \
                and self.forward_filter.offer(obs):
            master = self.runtime.loops[self.runtime.master_id]
            sim.send(
                PIPELINE,
                self.addr["monitor"],
                master.addr["knowledge"],
                {"loop": self.spec.id, "obs": obs},
            )

    # --- analyze + knowledge ----------------------------------------------

    def _put(self, obs: Observation) -> bool:
        try:
            self.kb.put(obs)
        except StaleObservationError:
            entry = self.kb.get(obs.service, obs.parameter)
            self.runtime.sim.emit(
                "stale-drop",
                self.addr["knowledge"],
                loop=self.spec.id,
                service=obs.service,
                parameter=obs.parameter,
                t_obs=obs.timestamp,
                t_latest=entry.timestamp,
            )
            return False
        return True

    def _on_analyze(self, msg: Message) -> None:
        if msg.kind == COORDINATION:
            self._on_round("analyze", msg.payload)
            return
        if self._put(msg.payload):
            self._analyze_now()

    def _analyze_now(self) -> None:
        sim = self.runtime.sim
        symptoms = analyze(self.kb, self.spec.policies, sim.now, self.last_raised)
        for symptom in symptoms:
            self.last_raised[symptom.policy] = sim.now
            sim.emit(
                "symptom",
                self.addr["analyze"],
                loop=self.spec.id,
                policy=symptom.policy,
                base_ts=symptom.base_ts,
            )
            if self.in_group and "analyze" in self.runtime.coordinate:
                self.pending["analyze"].append(symptom)
                self._request_round("analyze")
            else:
                sim.send(PIPELINE, self.addr["analyze"], self.addr["plan"], symptom)

    def _on_knowledge(self, msg: Message) -> None:
        pay = msg.payload
        obs: Observation = pay["obs"]
        if not self._put(obs):
            return
        self.agg_states[(pay["loop"], obs.service, obs.parameter)] = obs.value
        sim = self.runtime.sim
        touched = False
        for spec in self.runtime.control.aggregations:
            if (pay["loop"], obs.service, obs.parameter) not in spec.inputs:
                continue
            combined = aggregate(spec, self.agg_states, sim.now, service=self.spec.id)
            if combined is None:
                continue
            self._put(combined)
            touched = True
            sim.emit(
                "aggregate",
                self.addr["knowledge"],
                loop=self.spec.id,
                name=spec.name,
                parameter=spec.output,
                value=combined.value,
            )
        if touched:
            # Knowledge and analyze share a node; re-analysis is a local call.
            self._analyze_now()

    # --- plan -------------------------------------------------------------

    def _on_plan(self, msg: Message) -> None:
        sim = self.runtime.sim
        plan = self.planner.plan(msg.payload, self.spec.policies)
        sim.emit(
            "plan",
            self.addr["plan"],
            loop=self.spec.id,
            plan=plan.plan_id,
            policy=plan.symptom.policy,
            base_ts=plan.symptom.base_ts,
            actions=len(plan.actions),
        )
        sim.send(PIPELINE, self.addr["plan"], self.addr["execute"], plan)

    # --- execute ----------------------------------------------------------

    def _on_execute(self, msg: Message) -> None:
        if msg.kind == COORDINATION:
            self._on_round("execute", msg.payload)
            return
        plan: AdaptationPlan = msg.payload
        if msg.kind == DELEGATION:
            self.executor.execute(plan, self.runtime.sim.now)
            return
        if self.is_master:
            self._delegate(plan)
        elif self.in_group and "execute" in self.runtime.coordinate:
            self.pending["execute"].append(plan)
            self._request_round("execute")
        else:
            self.executor.execute(plan, self.runtime.sim.now)

    def _delegate(self, plan: AdaptationPlan) -> None:
        sim = self.runtime.sim
        scopes = {
            loop.id: loop.scope for loop in self.runtime.scenario.managing_loops
        }
        for loop_id, sub in delegate(plan, scopes).items():
            sim.emit(
                "delegate",
                self.addr["execute"],
                plan=plan.plan_id,
                to=loop_id,
                sub_plan=sub.plan_id,
                actions=len(sub.actions),
            )
            target = self.runtime.loops[loop_id]
            sim.send(DELEGATION, self.addr["execute"], target.addr["execute"], sub)

    def _transport(self, plan: AdaptationPlan, idx: int, action: PlannedAction,
                   at: int) -> None:
        sim = self.runtime.sim
        round_id = self._round_ctx

        def fire() -> None:
            host = self.runtime.scenario.topology.host_of(action.service)
            if host is None:
                raise UnreachableTargetError(
                    f"'{action.service}' is hosted on no node"
                )
            detail = {
                "loop": self.spec.id,
                "plan": plan.plan_id,
                "idx": idx,
                "service": action.service,
                "command": action.command,
                "arg": action.argument,
            }
            if round_id is not None:
                detail["round"] = round_id
            sim.emit("dispatch", self.addr["execute"], **detail)
            payload = {
                "action": action,
                "plan": plan.plan_id,
                "idx": idx,
                "policy": plan.symptom.policy,
                "loop": self.spec.id,
                "base_ts": plan.symptom.base_ts,
            }
            try:
                sim.send(ACTUATE, self.addr["execute"],
                         Address(host, action.service), payload)
            except NoRouteError as exc:
                raise UnreachableTargetError(str(exc)) from exc

        if at <= sim.now:
            fire()
        else:
            sim.schedule(at, fire)

    # --- peer coordination --------------------------------------------------

    def _send_round(self, component: str, to_loop: str, payload: dict) -> None:
        target = self.runtime.loops[to_loop]
        self.runtime.sim.send(
            COORDINATION,
            self.addr[component],
            target.addr[component],
            {"component": component, **payload},
        )

    def _request_round(self, component: str) -> None:
        self._send_round(component, self.runtime.group_leader, {"type": "request"})

    def _on_round(self, component: str, pay: dict) -> None:
        kind = pay["type"]
        if kind == "request":
            if self.active_round[component] is None:
                self._open_round(component)
            else:
                self.round_requested[component] = True
        elif kind == "call":
            queue = self.pending[component]
            item = queue[0] if queue else None
            self._send_round(
                component,
                self.runtime.group_leader,
                {"type": "propose", "round": pay["round"],
                 "from": self.spec.id, "item": item},
            )
        elif kind == "propose":
            self._on_propose(component, pay)
        elif kind == "decide":
            self._on_decide(component, pay)
        elif kind == "ack":
            self._on_ack(component, pay)

    def _open_round(self, component: str) -> None:
        sim = self.runtime.sim
        round_id = f"{self.spec.id}.{component}-r{next(self.round_seq[component])}"
        self.active_round[component] = {
            "id": round_id, "proposals": {}, "acked": set(),
        }
        sim.emit(
            "round-open",
            self.addr[component],
            round=round_id,
            component=component,
            leader=self.spec.id,
        )
        for member in self.runtime.group:
            self._send_round(component, member, {"type": "call", "round": round_id})
        sim.schedule(
            sim.now + self.runtime.round_timeouts[component],
            lambda: self._check_timeout(component, round_id),
        )

    def _on_propose(self, component: str, pay: dict) -> None:
        state = self.active_round[component]
        if state is None or state["id"] != pay["round"]:
            return
        state["proposals"][pay["from"]] = pay["item"]
        if len(state["proposals"]) < len(self.runtime.group):
            return
        outcome = decide_round(
            state["id"], self.runtime.group, component, state["proposals"]
        )
        self.runtime.sim.emit(
            "round-decide",
            self.addr[component],
            round=state["id"],
            component=component,
            winner=outcome.decided_by,
        )
        for member in self.runtime.group:
            self._send_round(
                component,
                member,
                {"type": "decide", "round": state["id"],
                 "by": outcome.decided_by, "item": outcome.decided},
            )

    def _on_decide(self, component: str, pay: dict) -> None:
        sim = self.runtime.sim
        if pay["by"] == self.spec.id and self.pending[component]:
            self.pending[component].popleft()
        item = pay["item"]
        if item is not None:
            if component == "analyze":
                if pay["by"] == self.spec.id:
                    sim.send(PIPELINE, self.addr["analyze"], self.addr["plan"], item)
            else:
                owned = tuple(a for a in item.actions if a.service in self.scope)
                if owned:
                    sub = AdaptationPlan(
                        f"{item.plan_id}@{self.spec.id}", item.symptom, owned
                    )
                    self._round_ctx = pay["round"]
                    try:
                        self.executor.execute(sub, sim.now)
                    finally:
                        self._round_ctx = None
        self._send_round(
            component,
            self.runtime.group_leader,
            {"type": "ack", "round": pay["round"], "from": self.spec.id},
        )
        if self.pending[component]:
            self._request_round(component)

    def _on_ack(self, component: str, pay: dict) -> None:
        state = self.active_round[component]
        if state is None or state["id"] != pay["round"]:
            return
        state["acked"].add(pay["from"])
        if len(state["acked"]) < len(self.runtime.group):
            return
        self.runtime.sim.emit(
            "round-close",
            self.addr[component],
            round=state["id"],
            component=component,
        )
        self.active_round[component] = None
        if self.round_requested[component]:
            self.round_requested[component] = False
            self._open_round(component)

    def _check_timeout(self, component: str, round_id: str) -> None:
        state = self.active_round[component]
        if state is None or state["id"] != round_id:
            return
        missing = sorted(set(self.runtime.group) - state["acked"])
        self.runtime.sim.emit(
            "round-abort",
            self.addr[component],
            round=round_id,
            component=component,
            missing=missing,
        )
        self.active_round[component] = None
        if self.round_requested[component]:
            self.round_requested[component] = False
            self._open_round(component)


class Runtime:
    """A fully wired scenario, ready to run."""

    def __init__(self, scenario: Scenario, seed: int, check: bool = True):
        if check:
            report = validate_scenario(scenario)
            if not report.ok:
                raise ConfigError(
                    "scenario is invalid:\n" + "\n".join(report.lines())
                )
        self.scenario = scenario
        self.placement: Placement = place(scenario.loops, scenario.topology)
        self.sim = Simulator(scenario.topology, seed, config_digest=scenario.digest)
        self.env = Environment(
            scenario.defaults.weather, scenario.defaults.outside_temp_c
        )

        control = scenario.control
        self.control = control
        self.master_id = scenario.master_id
        if isinstance(control, DecentralizedControl):
            self.group = tuple(sorted(control.group))
            self.group_leader = self.group[0]
            self.coordinate = set(control.coordinate)
        else:
            self.group = ()
            self.group_leader = ""
            self.coordinate = set()

        owner_of: dict[str, str] = {}
        for loop in scenario.managing_loops:
            for svc in loop.scope:
                owner_of[svc] = loop.id
        if self.master_id is not None:
            master = scenario.loop(self.master_id)
            for svc in master.scope:
                owner_of.setdefault(svc, master.id)

        self.loops: dict[str, LoopActor] = {
            spec.id: LoopActor(self, spec) for spec in scenario.loops
        }
        if self.group:
            self.round_timeouts = {
                comp: max(
                    round_timeout_ms(
                        scenario.topology,
                        [self.loops[m].addr[comp].node for m in self.group],
                    ),
                    1,
                )
                for comp in ("analyze", "execute")
            }

        self._emit_env(self.env.weather, self.env.outside_temp_c)
        self._inject_env(weather=self.env.weather,
                         outside_temp=self.env.outside_temp_c)

        self.offices: dict[str, OfficeState] = {}
        self.physics: dict[str, _Physics] = {}
        by_office: dict[str, list] = {}
        for setup in scenario.devices:
            if setup.office is not None:
                by_office.setdefault(setup.office, []).append(setup)
        for office_id, setups in by_office.items():
            state = instantiate_office(office_id, setups, scenario.defaults)
            self.offices[office_id] = state
            self.physics[office_id] = _Physics(state, self.env)

        self.devices: dict[str, DeviceActor] = {}
        for setup in scenario.devices:
            if setup.office is not None:
                device = self.offices[setup.office].devices[setup.service]
                physics = self.physics[setup.office]
            else:
                device = Device(setup.service, setup.kind, initial=setup.initial)
                physics = None
            owner = self.loops.get(owner_of.get(setup.service, ""))
            actor = DeviceActor(self, device, physics, setup.office, owner)
            self.devices[setup.service] = actor
        for actor in self.devices.values():
            actor.announce()
        for actor in self.devices.values():
            actor.start_sampling()

        for event in scenario.environment_events:
            self.sim.schedule(event.t, lambda e=event: self._apply_env(e))

    def _emit_env(self, weather: str | None, outside_temp: float | None) -> None:
        detail: dict[str, Any] = {}
        if weather is not None:
            detail["weather"] = weather
        if outside_temp is not None:
            detail["outside_temp_c"] = outside_temp
        self.sim.emit("env", **detail)

    def _inject_env(self, weather: str | None = None,
                    outside_temp: float | None = None) -> None:
        """Ambient context skips the network: every knowledge base learns
        environment values the instant they change."""
        now = self.sim.now
        for actor in self.loops.values():
            if weather is not None:
                actor.kb.put(Observation(ENV_SERVICE, "weather", weather, now))
            if outside_temp is not None:
                actor.kb.put(Observation(ENV_SERVICE, "outside-temp",
                                         outside_temp, now))

    def _apply_env(self, event: EnvironmentEvent) -> None:
        for physics in self.physics.values():
            physics.sync(self.sim.now)
        if event.weather is not None:
            self.env.weather = event.weather
        if event.outside_temp_c is not None:
            self.env.outside_temp_c = event.outside_temp_c
        self._emit_env(event.weather, event.outside_temp_c)
        self._inject_env(weather=event.weather, outside_temp=event.outside_temp_c)

    def finalize(self, horizon: int) -> None:
        for physics in self.physics.values():
            physics.sync(horizon)


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    horizon: int
    trace: EventTrace
    offices: dict[str, OfficeState]
    devices: dict[str, Device]
    placement: Placement


def run_scenario(scenario: Scenario, seed: int, horizon: int,
                 check: bool = True) -> RunResult:
    runtime = Runtime(scenario, seed, check=check)
    runtime.sim.run_until(horizon)
    runtime.finalize(horizon)
    return RunResult(
        scenario=scenario,
        seed=seed,
        horizon=horizon,
        trace=runtime.sim.trace,
        offices=runtime.offices,
        devices={name: actor.device for name, actor in runtime.devices.items()},
        placement=runtime.placement,
    )


def discrete_snapshot(result: RunResult) -> dict[str, dict[str, Any]]:
    """Comparable end state: every discrete device reading, no continuous ones."""
    snapshot: dict[str, dict[str, Any]] = {}
    for name in sorted(result.devices):
        device = result.devices[name]
        keys = _SNAPSHOT_KEYS.get(device.kind, ())
        snapshot[name] = {key: device.read(key) for key in keys}
    return snapshot
