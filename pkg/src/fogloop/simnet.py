"""Deterministic discrete-event core: virtual clock, tiered topology, messages.

Virtual time is integer milliseconds. The event loop is single-threaded;
ties at the same timestamp run in insertion order, so a run is a pure
function of (scenario, seed). Components never share memory: everything
crosses the scheduler as a Message.
"""

from __future__ import annotations

import heapq
import itertools
import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from fogloop.errors import ConfigError, FogloopError
from fogloop.model import ValidationReport


class Tier(str, Enum):
    DEVICE = "device"
    FOG = "fog"
    CLOUD = "cloud"


class PastEventError(FogloopError):
    """An event was scheduled before the current clock."""


class NoRouteError(FogloopError):
    """No link path exists between two nodes."""


class NoHandlerError(FogloopError):
    """A message arrived at an address nobody registered."""


@dataclass(frozen=True)
class Node:
    id: str
    tier: Tier
    hosted: tuple[str, ...] = ()


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    latency_ms: int
    jitter_ms: int = 0


@dataclass(frozen=True)
class Address:
    """A component instance located on a node, e.g. fog1/office1.analyze."""

    node: str
    component: str

    def __str__(self) -> str:
        return f"{self.node}/{self.component}"


@dataclass(frozen=True)
class Message:
    id: int
    kind: str
    payload: Any
    src: Address
    dst: Address
    send_time: int
    delivery_time: int
    path: tuple[str, ...]


class Topology:
    def __init__(self, nodes: tuple[Node, ...], links: tuple[Link, ...]):
        self.nodes = nodes
        self.links = links
        self.by_id = {n.id: n for n in nodes}
        self._adjacent: dict[str, list[tuple[str, Link]]] = {n.id: [] for n in nodes}
        self._link_by_pair: dict[tuple[str, str], Link] = {}
        for link in links:
            if link.a in self.by_id and link.b in self.by_id:
                self._adjacent[link.a].append((link.b, link))
                self._adjacent[link.b].append((link.a, link))
                self._link_by_pair[(link.a, link.b)] = link
                self._link_by_pair[(link.b, link.a)] = link
        for peers in self._adjacent.values():
            peers.sort(key=lambda pair: pair[0])
        self._path_cache: dict[tuple[str, str], tuple[str, ...] | None] = {}

    def node(self, node_id: str) -> Node:
        try:
            return self.by_id[node_id]
        except KeyError:
            raise ConfigError(f"unknown node '{node_id}'") from None

    def link_between(self, a: str, b: str) -> Link:
        return self._link_by_pair[(a, b)]

    def host_of(self, service: str) -> str | None:
        for node in self.nodes:
            if service in node.hosted:
                return node.id
        return None

    def shortest_path(self, src: str, dst: str) -> tuple[str, ...] | None:
        """Minimum-latency path src..dst inclusive; latency ties broken by
        lexicographic node-id order. None when unreachable."""
        if src not in self.by_id or dst not in self.by_id:
            return None
        if src == dst:
            return (src,)
        key = (src, dst)
        if key not in self._path_cache:
            best: tuple[str, ...] | None = None
            done: set[str] = set()
            frontier: list[tuple[int, tuple[str, ...]]] = [(0, (src,))]
            while frontier:
                cost, path = heapq.heappop(frontier)
                here = path[-1]
                if here in done:
                    continue
                done.add(here)
                if here == dst:
                    best = path
                    break
                for neighbor, link in self._adjacent[here]:
                    if neighbor not in done:
                        heapq.heappush(frontier, (cost + link.latency_ms, path + (neighbor,)))
            self._path_cache[key] = best
        return self._path_cache[key]

    def path_latency(self, path: tuple[str, ...]) -> int:
        return sum(
            self.link_between(a, b).latency_ms for a, b in zip(path, path[1:])
        )

    def validate(self, device_services: set[str] | None = None) -> ValidationReport:
        """Structural checks; violations are reported, never raised."""
        report = ValidationReport()
        seen: set[str] = set()
        for ni, node in enumerate(self.nodes):
            if node.id in seen:
                report.add(f"nodes[{ni}]", f"duplicate node id '{node.id}'")
            seen.add(node.id)
        clouds = [n for n in self.nodes if n.tier is Tier.CLOUD]
        if len(clouds) != 1:
            report.add("nodes", f"exactly one cloud node required, found {len(clouds)}")

        pairs: set[frozenset[str]] = set()
        for li, link in enumerate(self.links):
            path = f"links[{li}]"
            for end in (link.a, link.b):
                if end not in self.by_id:
                    report.add(path, f"unknown endpoint '{end}'")
            if link.a == link.b:
                report.add(path, "link endpoints must differ")
            pair = frozenset((link.a, link.b))
            if pair in pairs:
                report.add(path, f"duplicate link between '{link.a}' and '{link.b}'")
            pairs.add(pair)
            if link.latency_ms < 0:
                report.add(path, "latency must be >= 0")
            if link.jitter_ms < 0:
                report.add(path, "jitter must be >= 0")
            elif link.jitter_ms > link.latency_ms:
                report.add(path, "jitter must not exceed latency")

        hosts_of: dict[str, str] = {}
        for ni, node in enumerate(self.nodes):
            for svc in node.hosted:
                if svc in hosts_of:
                    report.add(f"nodes[{ni}]", f"'{svc}' already hosted on '{hosts_of[svc]}'")
                hosts_of[svc] = node.id
            if node.tier is Tier.DEVICE and device_services is not None:
                for svc in node.hosted:
                    if svc not in device_services:
                        report.add(f"nodes[{ni}]", f"device node hosts non-device '{svc}'")

        if not report.ok:
            return report
        for ni, node in enumerate(self.nodes):
            if node.tier is Tier.DEVICE:
                if not any(
                    self.shortest_path(node.id, fog.id)
                    for fog in self.nodes
                    if fog.tier is Tier.FOG
                ):
                    report.add(f"nodes[{ni}]", f"device '{node.id}' reaches no fog node")
            elif node.tier is Tier.FOG and clouds:
                if self.shortest_path(node.id, clouds[0].id) is None:
                    report.add(f"nodes[{ni}]", f"fog '{node.id}' does not reach the cloud")
        return report


@dataclass
class EventTrace:
    """Append-only run record: one header plus (t, kind, src, dst, detail) rows."""

    header: dict[str, Any]
    events: list[dict[str, Any]] = field(default_factory=list)

    def append(self, t: int, kind: str, src: str | None, dst: str | None,
               detail: dict[str, Any]) -> None:
        self.events.append({"t": t, "kind": kind, "src": src, "dst": dst, "detail": detail})

    def of_kind(self, kind: str) -> list[dict[str, Any]]:
        return [e for e in self.events if e["kind"] == kind]

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True, separators=(",", ":"))]
        lines.extend(
            json.dumps(e, sort_keys=True, separators=(",", ":")) for e in self.events
        )
        return "\n".join(lines) + "\n"

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())


Handler = Callable[[Message], None]


class Simulator:
    """Single-threaded event loop over a topology.

    Handlers are registered per address; `schedule` runs arbitrary callbacks
    at a future tick (timers, periodic sampling); `send` routes a message and
    schedules its delivery. Everything lands in the trace.
    """

    def __init__(self, topology: Topology, seed: int, config_digest: str = ""):
        self.topology = topology
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._msg_ids = itertools.count(1)
        self._handlers: dict[tuple[str, str], Handler] = {}
        self.trace = EventTrace(
            header={
                "kind": "header",
                "seed": seed,
                "config_digest": config_digest,
                "horizon": None,
                "nodes": {n.id: n.tier.value for n in topology.nodes},
            }
        )

    def register(self, address: Address, handler: Handler) -> None:
        self._handlers[(address.node, address.component)] = handler

    def emit(self, kind: str, src: Address | str | None = None,
             dst: Address | str | None = None, /, **detail: Any) -> None:
        self.trace.append(
            self.now,
            kind,
            None if src is None else str(src),
            None if dst is None else str(dst),
            detail,
        )

    def schedule(self, at: int, fn: Callable[[], None]) -> None:
        if at < self.now:
            raise PastEventError(f"cannot schedule at t={at}, clock is {self.now}")
        heapq.heappush(self._queue, (at, next(self._seq), fn))

    def send(self, kind: str, src: Address, dst: Address, payload: Any = None) -> Message:
        path = self.topology.shortest_path(src.node, dst.node)
        if path is None:
            raise NoRouteError(f"no route from '{src.node}' to '{dst.node}'")
        latency = 0
        for a, b in zip(path, path[1:]):
            link = self.topology.link_between(a, b)
            latency += link.latency_ms
            if link.jitter_ms:
                latency += self.rng.randint(0, link.jitter_ms)
        msg = Message(
            id=next(self._msg_ids),
            kind=kind,
            payload=payload,
            src=src,
            dst=dst,
            send_time=self.now,
            delivery_time=self.now + latency,
            path=path,
        )
        self.emit("send", src, dst, id=msg.id, interaction=kind)
        self.schedule(msg.delivery_time, lambda: self._deliver(msg))
        return msg

    def _deliver(self, msg: Message) -> None:
        handler = self._handlers.get((msg.dst.node, msg.dst.component))
        if handler is None:
            raise NoHandlerError(f"no handler registered at {msg.dst}")
        self.emit(
            "deliver",
            msg.src,
            msg.dst,
            id=msg.id,
            interaction=msg.kind,
            sent=msg.send_time,
            path=list(msg.path),
        )
        handler(msg)

    def run_until(self, horizon: int) -> EventTrace:
        """Process every event with time <= horizon, in (time, seq) order."""
        self.trace.header["horizon"] = horizon
        while self._queue and self._queue[0][0] <= horizon:
            at, _, fn = heapq.heappop(self._queue)
            self.now = at
            fn()
        return self.trace
