"""Event loop, routing, and trace determinism tests."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogloop.simnet import (
    Address,
    Link,
    Node,
    NoRouteError,
    PastEventError,
    Simulator,
    Tier,
    Topology,
)


def three_tier() -> Topology:
    return Topology(
        nodes=(
            Node("lamp1", Tier.DEVICE, hosted=("lamp1",)),
            Node("fog1", Tier.FOG),
            Node("cloud", Tier.CLOUD),
        ),
        links=(Link("lamp1", "fog1", 1), Link("fog1", "cloud", 50)),
    )


def sink(sim: Simulator, address: Address) -> list:
    inbox: list = []
    sim.register(address, inbox.append)
    return inbox


def test_schedule_at_clock_runs_before_later_events():
    sim = Simulator(three_tier(), seed=0)
    order: list[str] = []
    sim.schedule(10, lambda: order.append("later"))
    sim.schedule(0, lambda: order.append("now"))
    sim.run_until(100)
    assert order == ["now", "later"]


def test_equal_times_run_in_insertion_order():
    sim = Simulator(three_tier(), seed=0)
    order: list[str] = []
    sim.schedule(100, lambda: order.append("A"))
    sim.schedule(100, lambda: order.append("B"))
    sim.run_until(100)
    assert order == ["A", "B"]


def test_past_event_is_rejected():
    sim = Simulator(three_tier(), seed=0)
    sim.schedule(5, lambda: None)
    sim.run_until(5)
    assert sim.now == 5
    with pytest.raises(PastEventError):
        sim.schedule(4, lambda: None)


def test_device_to_fog_delivery_takes_link_latency():
    sim = Simulator(three_tier(), seed=0)
    inbox = sink(sim, Address("fog1", "monitor"))
    sim.schedule(1000, lambda: sim.send(
        "sense", Address("lamp1", "lamp1"), Address("fog1", "monitor"), payload="on"
    ))
    sim.run_until(2000)
    assert [m.delivery_time for m in inbox] == [1001]
    assert inbox[0].path == ("lamp1", "fog1")


def test_fog_to_cloud_delivery_takes_default_latency():
    sim = Simulator(three_tier(), seed=0)
    inbox = sink(sim, Address("cloud", "knowledge"))
    sim.send("inter", Address("fog1", "monitor"), Address("cloud", "knowledge"))
    sim.run_until(100)
    assert [m.delivery_time for m in inbox] == [50]


def test_same_node_delivery_is_immediate():
    sim = Simulator(three_tier(), seed=0)
    inbox = sink(sim, Address("fog1", "analyze"))
    sim.schedule(7, lambda: sim.send(
        "inter", Address("fog1", "monitor"), Address("fog1", "analyze")
    ))
    sim.run_until(7)
    assert [m.delivery_time for m in inbox] == [7]


def test_send_to_unlinked_node_raises():
    topo = Topology(
        nodes=(Node("a", Tier.DEVICE), Node("b", Tier.FOG), Node("cloud", Tier.CLOUD),
               Node("island", Tier.FOG)),
        links=(Link("a", "b", 1), Link("b", "cloud", 50)),
    )
    sim = Simulator(topo, seed=0)
    with pytest.raises(NoRouteError):
        sim.send("sense", Address("a", "a"), Address("island", "monitor"))


def test_empty_run_leaves_clock_at_zero():
    sim = Simulator(three_tier(), seed=3)
    trace = sim.run_until(10_000)
    assert sim.now == 0
    assert trace.events == []
    assert trace.header["horizon"] == 10_000
    assert trace.header["seed"] == 3
    assert trace.header["nodes"] == {"lamp1": "device", "fog1": "fog", "cloud": "cloud"}


def test_horizon_zero_processes_only_t0_events():
    sim = Simulator(three_tier(), seed=0)
    ran: list[int] = []
    sim.schedule(0, lambda: ran.append(0))
    sim.schedule(1, lambda: ran.append(1))
    sim.run_until(0)
    assert ran == [0]
    assert sim.now == 0


def scripted_run(seed: int) -> str:
    sim = Simulator(three_tier(), seed=seed, config_digest="abc123")
    sink(sim, Address("fog1", "monitor"))
    sink(sim, Address("cloud", "knowledge"))
    for t in range(0, 50, 10):
        sim.schedule(t, lambda: sim.send(
            "sense", Address("lamp1", "lamp1"), Address("fog1", "monitor")
        ))
    sim.schedule(25, lambda: sim.send(
        "inter", Address("fog1", "monitor"), Address("cloud", "knowledge")
    ))
    return sim.run_until(1_000).to_jsonl()


def test_same_seed_gives_byte_identical_traces():
    assert scripted_run(42) == scripted_run(42)


def test_trace_times_never_decrease():
    sim = Simulator(three_tier(), seed=1)
    sink(sim, Address("cloud", "knowledge"))
    for t in (30, 10, 20, 10):
        sim.schedule(t, lambda: sim.send(
            "inter", Address("fog1", "monitor"), Address("cloud", "knowledge")
        ))
    trace = sim.run_until(500)
    times = [e["t"] for e in trace.events]
    assert times == sorted(times)


def test_every_send_has_exactly_one_delivery():
    sim = Simulator(three_tier(), seed=9)
    sink(sim, Address("fog1", "monitor"))
    for t in range(0, 100, 7):
        sim.schedule(t, lambda: sim.send(
            "sense", Address("lamp1", "lamp1"), Address("fog1", "monitor")
        ))
    trace = sim.run_until(10_000)
    sent = sorted(e["detail"]["id"] for e in trace.of_kind("send"))
    delivered = sorted(e["detail"]["id"] for e in trace.of_kind("deliver"))
    assert sent == delivered
    assert len(set(sent)) == len(sent)


def test_routing_prefers_lower_latency_then_lexicographic():
    topo = Topology(
        nodes=(
            Node("a", Tier.DEVICE),
            Node("fb", Tier.FOG),
            Node("fc", Tier.FOG),
            Node("cloud", Tier.CLOUD),
        ),
        links=(
            Link("a", "fb", 2),
            Link("a", "fc", 2),
            Link("fb", "cloud", 3),
            Link("fc", "cloud", 3),
        ),
    )
    assert topo.shortest_path("a", "cloud") == ("a", "fb", "cloud")
    # A cheaper detour beats the tidy-looking route.
    faster = Topology(
        nodes=topo.nodes,
        links=(
            Link("a", "fb", 2),
            Link("a", "fc", 1),
            Link("fb", "cloud", 3),
            Link("fc", "cloud", 3),
        ),
    )
    assert faster.shortest_path("a", "cloud") == ("a", "fc", "cloud")


@settings(max_examples=50)
@given(seed=st.integers(0, 2**31), jitter=st.integers(0, 20))
def test_jitter_stays_within_bounds_and_is_causal(seed: int, jitter: int):
    topo = Topology(
        nodes=(Node("d", Tier.DEVICE), Node("f", Tier.FOG), Node("cloud", Tier.CLOUD)),
        links=(Link("d", "f", 20, jitter_ms=jitter), Link("f", "cloud", 50)),
    )
    sim = Simulator(topo, seed=seed)
    inbox = sink(sim, Address("f", "monitor"))
    for t in range(0, 200, 20):
        sim.schedule(t, lambda: sim.send("sense", Address("d", "d"), Address("f", "monitor")))
    sim.run_until(10_000)
    assert len(inbox) == 10
    for msg in inbox:
        assert msg.send_time + 20 <= msg.delivery_time <= msg.send_time + 20 + jitter


def test_topology_validation_catches_structural_faults():
    report = Topology(
        nodes=(
            Node("d", Tier.DEVICE, hosted=("d", "office1.analyze")),
            Node("d", Tier.FOG),
            Node("c1", Tier.CLOUD),
            Node("c2", Tier.CLOUD),
        ),
        links=(Link("d", "c1", 5, jitter_ms=9), Link("x", "c1", 1), Link("d", "d", 1)),
    ).validate(device_services={"d"})
    messages = " | ".join(report.lines())
    assert "duplicate node id 'd'" in messages
    assert "exactly one cloud node" in messages
    assert "jitter must not exceed latency" in messages
    assert "unknown endpoint 'x'" in messages
    assert "endpoints must differ" in messages
    assert "non-device 'office1.analyze'" in messages


def test_topology_validation_requires_tier_connectivity():
    report = Topology(
        nodes=(
            Node("d", Tier.DEVICE),
            Node("f1", Tier.FOG),
            Node("f2", Tier.FOG),
            Node("cloud", Tier.CLOUD),
        ),
        links=(Link("f1", "cloud", 50),),
    ).validate()
    messages = " | ".join(report.lines())
    assert "reaches no fog node" in messages
    assert "fog 'f2' does not reach the cloud" in messages


def test_valid_three_tier_topology_is_clean():
    assert three_tier().validate(device_services={"lamp1"}).ok
