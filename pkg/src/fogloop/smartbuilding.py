"""Smart-building case study: device behavior models and a scenario generator.

Each office has six devices (door, window, heater, energy meter, lamp,
smart clock) behind one fog node and one control loop. Room temperature
follows a linear thermal model stepped at every meter tick, and energy
is accounted in integer millijoules (watts x virtual ms) so the meter is
exact. The generator installs the three standing rules per office:

  P1  lights off while it is sunny and the window is open
  P2  locking the door arms the clock; after the duration the lights go off
  P3  temperature band: too hot -> heater off + window open,
      too cold -> window closed + heater on
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from fogloop.coordination import (
    AggregationSpec,
    CentralizedControl,
    Combinator,
    ControlMode,
    DecentralizedControl,
)
from fogloop.errors import ConfigError, FogloopError
from fogloop.mape import (
    Comparator,
    ElapsedSinceCondition,
    Observation,
    PlannedAction,
    Policy,
    ThresholdCondition,
)
from fogloop.model import (
    CommandSpec,
    Composite,
    Domain,
    ParameterSpec,
    Service,
    ServiceKind,
    Task,
    ValueType,
)
from fogloop.placement import LoopSpec, Offering
from fogloop.simnet import Link, Node, Tier, Topology

MS_PER_MINUTE = 60_000
MJ_PER_KWH = 3_600_000_000


class DeviceKind(str, Enum):
    DOOR = "door"
    WINDOW = "window"
    HEATER = "heater"
    ENERGY_METER = "energy-meter"
    LAMP = "lamp"
    CLOCK = "clock"


class UnknownCommandError(FogloopError):
    """A device received a command it does not implement."""


class BadArgumentError(FogloopError):
    """A command argument has the wrong type or an impossible value."""


class InvalidCountError(ConfigError):
    """The office count must be at least one."""


_DEFAULT_STATE: dict[DeviceKind, dict[str, Any]] = {
    DeviceKind.DOOR: {"lock-state": "locked"},
    DeviceKind.WINDOW: {"position": "open"},
    DeviceKind.HEATER: {"power-state": False, "setpoint-c": 21.0},
    DeviceKind.ENERGY_METER: {},
    DeviceKind.LAMP: {"power-state": True},
    DeviceKind.CLOCK: {"armed-at": None, "duration-ms": None},
}


class Device:
    """One physical device: readable parameters plus command transitions.

    apply() returns the observations produced by the transition; idempotent
    commands (setting the current state) change nothing and return none.
    """

    def __init__(
        self,
        service: str,
        kind: DeviceKind,
        power_w: int = 0,
        initial: Mapping[str, Any] | None = None,
        readers: Mapping[str, Callable[[], Any]] | None = None,
    ):
        self.service = service
        self.kind = kind
        self.power_w = power_w
        self.readers = dict(readers or {})
        self.state: dict[str, Any] = dict(_DEFAULT_STATE[kind])
        self.state.update(initial or {})

    @property
    def active_power_w(self) -> int:
        if self.kind in (DeviceKind.LAMP, DeviceKind.HEATER) and self.state["power-state"]:
            return self.power_w
        return 0

    def read(self, parameter: str) -> Any:
        if parameter in self.readers:
            return self.readers[parameter]()
        if self.kind is DeviceKind.CLOCK and parameter == "armed":
            return self.state["armed-at"] is not None
        if parameter in self.state:
            return self.state[parameter]
        raise ConfigError(f"{self.service} has no readable parameter '{parameter}'")

    def apply(self, command: str, arg: Any, now: int) -> list[Observation]:
        handler = getattr(self, f"_cmd_{self.kind.name.lower()}", None)
        if handler is None:
            raise UnknownCommandError(f"{self.service} accepts no commands")
        return handler(command, arg, now)

    def _set(self, parameter: str, value: Any, now: int) -> list[Observation]:
        if self.state[parameter] == value:
            return []
        self.state[parameter] = value
        return [Observation(self.service, parameter, value, now)]

    def _no_arg(self, command: str, arg: Any) -> None:
        if arg is not None:
            raise BadArgumentError(f"{self.service}.{command} takes no argument, got {arg!r}")

    def _bool_arg(self, command: str, arg: Any) -> bool:
        if not isinstance(arg, bool):
            raise BadArgumentError(f"{self.service}.{command} needs a boolean, got {arg!r}")
        return arg

    def _cmd_door(self, command: str, arg: Any, now: int) -> list[Observation]:
        if command == "lock":
            self._no_arg(command, arg)
            return self._set("lock-state", "locked", now)
        if command == "unlock":
            self._no_arg(command, arg)
            return self._set("lock-state", "unlocked", now)
        raise UnknownCommandError(f"{self.service} has no command '{command}'")

    def _cmd_window(self, command: str, arg: Any, now: int) -> list[Observation]:
        if command != "set-position":
            raise UnknownCommandError(f"{self.service} has no command '{command}'")
        if arg not in ("open", "closed"):
            raise BadArgumentError(f"{self.service}.set-position: got {arg!r}")
        return self._set("position", arg, now)

    def _cmd_heater(self, command: str, arg: Any, now: int) -> list[Observation]:
        if command != "set-power":
            raise UnknownCommandError(f"{self.service} has no command '{command}'")
        return self._set("power-state", self._bool_arg(command, arg), now)

    def _cmd_lamp(self, command: str, arg: Any, now: int) -> list[Observation]:
        if command != "set-power":
            raise UnknownCommandError(f"{self.service} has no command '{command}'")
        return self._set("power-state", self._bool_arg(command, arg), now)

    def _cmd_clock(self, command: str, arg: Any, now: int) -> list[Observation]:
        if command == "arm":
            if isinstance(arg, bool) or not isinstance(arg, int) or arg <= 0:
                raise BadArgumentError(f"{self.service}.arm needs a positive ms count")
            if self.state["armed-at"] is not None:
                return []
            self.state["armed-at"] = now
            self.state["duration-ms"] = arg
            return [Observation(self.service, "armed", True, now)]
        if command == "disarm":
            self._no_arg(command, arg)
            if self.state["armed-at"] is None:
                return []
            self.state["armed-at"] = None
            self.state["duration-ms"] = None
            return [Observation(self.service, "armed", False, now)]
        raise UnknownCommandError(f"{self.service} has no command '{command}'")


def apply_command(device: Device, command: str, arg: Any, now: int) -> list[Observation]:
    return device.apply(command, arg, now)


@dataclass
class Environment:
    weather: str = "not-sunny"
    outside_temp_c: float = 14.0


@dataclass(frozen=True)
class EnvironmentEvent:
    t: int
    weather: str | None = None
    outside_temp_c: float | None = None


class OfficeState:
    """Shared physics of one office: room temperature and the energy meter.

    Energy accrues as integer millijoules; account() must run before any
    power level changes so each segment integrates the power that actually
    held over it.
    """

    def __init__(
        self,
        office_id: str,
        devices: dict[str, Device],
        room_temp_c: float,
        heat_rate_c_per_min: float = 0.5,
        leak_open_per_min: float = 0.2,
        leak_closed_per_min: float = 0.05,
    ):
        self.id = office_id
        self.devices = devices
        self.room_temp_c = room_temp_c
        self.heat_rate_c_per_min = heat_rate_c_per_min
        self.leak_open_per_min = leak_open_per_min
        self.leak_closed_per_min = leak_closed_per_min
        self.energy_mj = 0
        self._accounted_at = 0

    def _of_kind(self, kind: DeviceKind) -> Device | None:
        for device in self.devices.values():
            if device.kind is kind:
                return device
        return None

    @property
    def heater_on(self) -> bool:
        heater = self._of_kind(DeviceKind.HEATER)
        return bool(heater and heater.state["power-state"])

    @property
    def window_open(self) -> bool:
        window = self._of_kind(DeviceKind.WINDOW)
        return bool(window and window.state["position"] == "open")

    def power_w(self) -> int:
        return sum(device.active_power_w for device in self.devices.values())

    def account(self, now: int) -> None:
        if now < self._accounted_at:
            raise ConfigError(f"office '{self.id}': accounting moved backwards")
        self.energy_mj += self.power_w() * (now - self._accounted_at)
        self._accounted_at = now

    def kwh(self) -> float:
        return self.energy_mj / MJ_PER_KWH

    def advance(self, env: Environment, now: int, dt_ms: int) -> None:
        self.account(now)
        self.room_temp_c = step_thermal(self, env, dt_ms)


def step_thermal(office: OfficeState, env: Environment, dt_ms: int) -> float:
    """Linear model: heater adds heat_rate C/min; the outside pulls the room
    toward it at the open or closed leak rate. Returns the new temperature."""
    if dt_ms <= 0:
        raise ConfigError("thermal step needs dt > 0")
    minutes = dt_ms / MS_PER_MINUTE
    temp = office.room_temp_c
    heat = office.heat_rate_c_per_min if office.heater_on else 0.0
    leak = office.leak_open_per_min if office.window_open else office.leak_closed_per_min
    return temp + heat * minutes + leak * (env.outside_temp_c - temp) * minutes


@dataclass(frozen=True)
class BuildingDefaults:
    sample_interval_ms: int = 1000
    clock_duration_ms: int = 600_000
    setpoint_c: float = 21.0
    room_temp_c: float = 21.0
    outside_temp_c: float = 14.0
    weather: str = "not-sunny"
    lamp_w: int = 60
    heater_w: int = 2000
    heat_rate_c_per_min: float = 0.5
    leak_open_per_min: float = 0.2
    leak_closed_per_min: float = 0.05
    door_locked: bool = True
    lamp_on: bool = True
    window_open: bool = True
    heater_on: bool = False
    p3_cooldown_ms: int = 60_000
    device_fog_latency_ms: int = 1
    fog_fog_latency_ms: int = 2
    fog_cloud_latency_ms: int = 50


@dataclass
class DeviceSetup:
    service: str
    kind: DeviceKind
    office: str | None
    initial: dict[str, Any] = field(default_factory=dict)


@dataclass
class Building:
    domain: Domain
    topology: Topology
    loops: tuple[LoopSpec, ...]
    policies: tuple[Policy, ...]
    devices: tuple[DeviceSetup, ...]
    environment: Environment
    environment_events: tuple[EnvironmentEvent, ...]
    control: ControlMode | None
    defaults: BuildingDefaults


_DEVICE_ORDER = ("door", "window", "heater", "meter", "lamp", "clock")

_KIND_BY_SHORT = {
    "door": DeviceKind.DOOR,
    "window": DeviceKind.WINDOW,
    "heater": DeviceKind.HEATER,
    "meter": DeviceKind.ENERGY_METER,
    "lamp": DeviceKind.LAMP,
    "clock": DeviceKind.CLOCK,
}


def _office_services(office: str, interval: int) -> tuple[Service, ...]:
    def param(name: str, vtype: ValueType, unit: str | None = None) -> ParameterSpec:
        return ParameterSpec(name, vtype, unit=unit, sample_interval_ms=interval)

    return (
        Service(
            f"{office}.door",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(param("lock-state", ValueType.ENUM_OF_STRINGS),),
            commands=(CommandSpec("lock"), CommandSpec("unlock")),
        ),
        Service(
            f"{office}.window",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(param("position", ValueType.ENUM_OF_STRINGS),),
            commands=(CommandSpec("set-position", ValueType.ENUM_OF_STRINGS),),
        ),
        Service(
            f"{office}.heater",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(
                param("power-state", ValueType.BOOLEAN),
                param("room-temp", ValueType.REAL, unit="celsius"),
            ),
            commands=(CommandSpec("set-power", ValueType.BOOLEAN),),
        ),
        Service(
            f"{office}.meter",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(param("kwh-reading", ValueType.REAL, unit="kWh"),),
        ),
        Service(
            f"{office}.lamp",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(param("power-state", ValueType.BOOLEAN),),
            commands=(CommandSpec("set-power", ValueType.BOOLEAN),),
        ),
        Service(
            f"{office}.clock",
            ServiceKind.PHYSICAL_DEVICE,
            parameters=(param("armed", ValueType.BOOLEAN),),
            commands=(CommandSpec("arm", ValueType.INTEGER), CommandSpec("disarm")),
        ),
    )


def office_policies(office: str, defaults: BuildingDefaults) -> tuple[Policy, ...]:
    def svc(short: str) -> str:
        return f"{office}.{short}"

    # Cooldowns must outlast one sampling period plus the slowest actuation
    # round trip, or stale samples re-raise the symptom before the effect
    # is observed; 200 ms covers the cloud-hosted analyzer's round trip.
    guard = defaults.sample_interval_ms + 200
    return (
        Policy(
            f"{office}-lights-off-sunny",
            when=(
                ThresholdCondition("environment", "weather", Comparator.EQ, "sunny"),
                ThresholdCondition(svc("window"), "position", Comparator.EQ, "open"),
                ThresholdCondition(svc("lamp"), "power-state", Comparator.EQ, True),
            ),
            then=(PlannedAction(svc("lamp"), "set-power", False),),
            cooldown_ms=guard,
        ),
        Policy(
            f"{office}-arm-clock",
            when=(
                ThresholdCondition(svc("door"), "lock-state", Comparator.EQ, "locked"),
                ThresholdCondition(svc("clock"), "armed", Comparator.EQ, False),
            ),
            then=(PlannedAction(svc("clock"), "arm", defaults.clock_duration_ms),),
            cooldown_ms=guard,
        ),
        Policy(
            f"{office}-lights-off-after-lock",
            when=(
                ElapsedSinceCondition(
                    svc("door"), "lock-state", "locked", defaults.clock_duration_ms
                ),
                ThresholdCondition(svc("lamp"), "power-state", Comparator.EQ, True),
            ),
            then=(PlannedAction(svc("lamp"), "set-power", False),),
            cooldown_ms=defaults.clock_duration_ms,
        ),
        Policy(
            f"{office}-too-hot",
            when=(
                ThresholdCondition(
                    svc("heater"), "room-temp", Comparator.GE, defaults.setpoint_c + 1.0
                ),
            ),
            then=(
                PlannedAction(svc("heater"), "set-power", False),
                PlannedAction(svc("window"), "set-position", "open"),
            ),
            cooldown_ms=defaults.p3_cooldown_ms,
        ),
        Policy(
            f"{office}-too-cold",
            when=(
                ThresholdCondition(
                    svc("heater"), "room-temp", Comparator.LE, defaults.setpoint_c - 1.0
                ),
            ),
            then=(
                PlannedAction(svc("window"), "set-position", "closed"),
                PlannedAction(svc("heater"), "set-power", True),
            ),
            cooldown_ms=defaults.p3_cooldown_ms,
        ),
    )


def _initial_state(short: str, defaults: BuildingDefaults) -> dict[str, Any]:
    if short == "door":
        return {"lock-state": "locked" if defaults.door_locked else "unlocked"}
    if short == "window":
        return {"position": "open" if defaults.window_open else "closed"}
    if short == "heater":
        return {"power-state": defaults.heater_on, "setpoint-c": defaults.setpoint_c}
    if short == "lamp":
        return {"power-state": defaults.lamp_on}
    return {}


def instantiate_office(
    office_id: str, setups: Iterable[DeviceSetup], defaults: BuildingDefaults
) -> OfficeState:
    """Create live devices plus the shared physics for one office."""
    devices: dict[str, Device] = {}
    office = OfficeState(
        office_id,
        devices,
        room_temp_c=defaults.room_temp_c,
        heat_rate_c_per_min=defaults.heat_rate_c_per_min,
        leak_open_per_min=defaults.leak_open_per_min,
        leak_closed_per_min=defaults.leak_closed_per_min,
    )
    for setup in setups:
        readers: dict[str, Callable[[], Any]] = {}
        power = 0
        if setup.kind is DeviceKind.LAMP:
            power = defaults.lamp_w
        elif setup.kind is DeviceKind.HEATER:
            power = defaults.heater_w
            readers["room-temp"] = lambda: office.room_temp_c
        elif setup.kind is DeviceKind.ENERGY_METER:
            readers["kwh-reading"] = office.kwh
        devices[setup.service] = Device(
            setup.service, setup.kind, power_w=power, initial=setup.initial, readers=readers
        )
    return office


def build_smart_building(
    n: int,
    defaults: BuildingDefaults | None = None,
    control: str = "none",
    environment_events: Iterable[EnvironmentEvent] = (),
) -> Building:
    """Generate the N-office building: domain, topology, loops, and rules."""
    if n < 1:
        raise InvalidCountError(f"need at least one office, got {n}")
    if control not in ("none", "centralized", "decentralized"):
        raise ConfigError(f"unknown control mode '{control}'")
    if control == "decentralized" and n < 2:
        raise ConfigError("decentralized control needs at least two offices")
    defaults = defaults or BuildingDefaults()

    offices = [f"office{i}" for i in range(1, n + 1)]
    tasks: list[Task] = []
    nodes: list[Node] = []
    links: list[Link] = []
    loops: list[LoopSpec] = []
    policies: list[Policy] = []
    setups: list[DeviceSetup] = []

    for office in offices:
        services = _office_services(office, defaults.sample_interval_ms)
        tasks.append(
            Task(
                office,
                services=services,
                composites=(
                    Composite(
                        "climate",
                        (f"{office}.heater", f"{office}.window"),
                        goal="hold room temperature near the setpoint",
                    ),
                    Composite(
                        "lighting",
                        (f"{office}.lamp", f"{office}.window", f"{office}.clock",
                         f"{office}.door"),
                        goal="light the office only when useful",
                    ),
                ),
            )
        )
        fog = f"fog{office.removeprefix('office')}"
        nodes.append(Node(fog, Tier.FOG))
        for short in _DEVICE_ORDER:
            service = f"{office}.{short}"
            nodes.append(Node(service, Tier.DEVICE, hosted=(service,)))
            links.append(Link(service, fog, defaults.device_fog_latency_ms))
            setups.append(
                DeviceSetup(service, _KIND_BY_SHORT[short], office,
                            _initial_state(short, defaults))
            )
        office_rules = office_policies(office, defaults)
        policies.extend(office_rules)
        loops.append(
            LoopSpec(office, tuple(s.name for s in services), Offering.MAPEAAS,
                     policies=office_rules)
        )

    tasks.append(
        Task(
            "environment",
            services=(
                Service(
                    "environment",
                    ServiceKind.VIRTUAL,
                    parameters=(
                        ParameterSpec("weather", ValueType.ENUM_OF_STRINGS),
                        ParameterSpec("outside-temp", ValueType.REAL, unit="celsius"),
                    ),
                ),
            ),
        )
    )

    fogs = [f"fog{i}" for i in range(1, n + 1)]
    for i, a in enumerate(fogs):
        for b in fogs[i + 1:]:
            links.append(Link(a, b, defaults.fog_fog_latency_ms))
    nodes.append(Node("cloud", Tier.CLOUD))
    links.extend(Link(fog, "cloud", defaults.fog_cloud_latency_ms) for fog in fogs)

    mode: ControlMode | None = None
    if control == "centralized":
        every_service = tuple(svc for loop in loops for svc in loop.scope)
        loops.append(LoopSpec("building", every_service, Offering.MAPEAAS))
        mode = CentralizedControl(
            master="building",
            aggregations=(
                AggregationSpec(
                    "total-kwh",
                    inputs=tuple(
                        (office, f"{office}.meter", "kwh-reading") for office in offices
                    ),
                    combinator=Combinator.SUM,
                    output="total-kwh",
                ),
            ),
        )
    elif control == "decentralized":
        mode = DecentralizedControl(group=tuple(offices),
                                    coordinate=("analyze", "execute"))

    return Building(
        domain=Domain("smart-building", tasks=tuple(tasks)),
        topology=Topology(tuple(nodes), tuple(links)),
        loops=tuple(loops),
        policies=tuple(policies),
        devices=tuple(setups),
        environment=Environment(defaults.weather, defaults.outside_temp_c),
        environment_events=tuple(environment_events),
        control=mode,
        defaults=defaults,
    )
