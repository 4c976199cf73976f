"""Run reporting: tallies over the event trace plus delimited and text views.

Every count is a pure function of the trace, so an external script can
recompute the delimited output line by line and match it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from fogloop.coordination import CentralizedControl
from fogloop.runtime import RunResult
from fogloop.smartbuilding import MJ_PER_KWH


@dataclass
class RunMetrics:
    event_counts: dict[str, int] = field(default_factory=dict)
    sends: dict[str, int] = field(default_factory=dict)
    deliveries: dict[str, int] = field(default_factory=dict)
    hops: dict[str, int] = field(default_factory=dict)
    latencies: list[int] = field(default_factory=list)
    latency_by_policy: dict[str, list[int]] = field(default_factory=dict)
    symptoms: int = 0
    plans: int = 0
    dispatches: int = 0
    energy_mj: dict[str, int] = field(default_factory=dict)

    @property
    def fog_to_cloud(self) -> int:
        return self.hops.get("fog->cloud", 0)

    def boundary(self, tier_a: str, tier_b: str) -> int:
        return (self.hops.get(f"{tier_a}->{tier_b}", 0)
                + self.hops.get(f"{tier_b}->{tier_a}", 0))

    @property
    def latency_sum(self) -> int:
        return sum(self.latencies)

    @property
    def latency_max(self) -> int:
        return max(self.latencies, default=0)

    @property
    def latency_mean(self) -> float | None:
        if not self.latencies:
            return None
        return self.latency_sum / len(self.latencies)

    def kwh(self, office: str) -> float:
        return self.energy_mj[office] / MJ_PER_KWH

    @property
    def total_energy_mj(self) -> int:
        return sum(self.energy_mj.values())

    @property
    def total_kwh(self) -> float:
        return self.total_energy_mj / MJ_PER_KWH


def compute_metrics(result: RunResult) -> RunMetrics:
    metrics = RunMetrics()
    tiers: dict[str, str] = result.trace.header["nodes"]
    for event in result.trace.events:
        kind = event["kind"]
        detail = event["detail"]
        metrics.event_counts[kind] = metrics.event_counts.get(kind, 0) + 1
        if kind == "send":
            key = detail["interaction"]
            metrics.sends[key] = metrics.sends.get(key, 0) + 1
        elif kind == "deliver":
            key = detail["interaction"]
            metrics.deliveries[key] = metrics.deliveries.get(key, 0) + 1
            path = detail["path"]
            for a, b in zip(path, path[1:]):
                hop = f"{tiers[a]}->{tiers[b]}"
                metrics.hops[hop] = metrics.hops.get(hop, 0) + 1
        elif kind == "actuate-applied":
            metrics.latencies.append(detail["latency"])
            metrics.latency_by_policy.setdefault(
                detail["policy"], []).append(detail["latency"])
        elif kind == "symptom":
            metrics.symptoms += 1
        elif kind == "plan":
            metrics.plans += 1
        elif kind == "dispatch":
            metrics.dispatches += 1
    for office_id, office in sorted(result.offices.items()):
        metrics.energy_mj[office_id] = office.energy_mj
    return metrics


def metrics_csv(metrics: RunMetrics) -> str:
    """Fixed row order: events, sends, deliveries, hops, boundaries,
    latency tallies, pipeline counts, energy. All values are integers."""
    rows: list[tuple[str, str, int]] = []
    for kind in sorted(metrics.event_counts):
        rows.append(("events", kind, metrics.event_counts[kind]))
    for key in sorted(metrics.sends):
        rows.append(("sends", key, metrics.sends[key]))
    for key in sorted(metrics.deliveries):
        rows.append(("deliveries", key, metrics.deliveries[key]))
    for key in sorted(metrics.hops):
        rows.append(("hops", key, metrics.hops[key]))
    for pair in (("device", "fog"), ("fog", "fog"), ("fog", "cloud")):
        rows.append(("boundary", "-".join(pair), metrics.boundary(*pair)))
    rows.append(("latency", "count", len(metrics.latencies)))
    rows.append(("latency", "sum_ms", metrics.latency_sum))
    rows.append(("latency", "max_ms", metrics.latency_max))
    rows.append(("counts", "symptoms", metrics.symptoms))
    rows.append(("counts", "plans", metrics.plans))
    rows.append(("counts", "dispatches", metrics.dispatches))
    for office in sorted(metrics.energy_mj):
        rows.append(("energy_mj", office, metrics.energy_mj[office]))
    rows.append(("energy_mj", "total", metrics.total_energy_mj))
    lines = ["metric,key,value"]
    lines.extend(f"{metric},{key},{value}" for metric, key, value in rows)
    return "\n".join(lines) + "\n"


def summary_text(result: RunResult, metrics: RunMetrics) -> str:
    mode = result.scenario.control
    if mode is None:
        mode_name = "none"
    else:
        mode_name = ("centralized" if isinstance(mode, CentralizedControl)
                     else "decentralized")
    if metrics.latencies:
        latency = (f"mean={metrics.latency_mean:.3f} "
                   f"max={metrics.latency_max} count={len(metrics.latencies)}")
    else:
        latency = "mean=n/a max=n/a count=0"
    lines = [
        f"scenario: {result.scenario.name}",
        f"config digest: {result.scenario.digest}",
        f"seed: {result.seed}",
        f"horizon ms: {result.horizon}",
        f"control mode: {mode_name}",
        f"trace events: {len(result.trace.events)}",
        f"decision latency ms: {latency}",
        f"fog->cloud messages: {metrics.fog_to_cloud}",
    ]
    for office in sorted(metrics.energy_mj):
        lines.append(
            f"energy {office}: {metrics.kwh(office):.9f} kWh"
            f" ({metrics.energy_mj[office]} mJ)"
        )
    lines.append(
        f"energy total: {metrics.total_kwh:.9f} kWh"
        f" ({metrics.total_energy_mj} mJ)"
    )
    return "\n".join(lines) + "\n"


def per_policy_summary(metrics: RunMetrics) -> dict[str, dict[str, Any]]:
    """Latency tallies keyed by the policy that caused the actuation."""
    out: dict[str, dict[str, Any]] = {}
    for policy in sorted(metrics.latency_by_policy):
        samples = metrics.latency_by_policy[policy]
        out[policy] = {
            "count": len(samples),
            "mean": sum(samples) / len(samples),
            "max": max(samples),
        }
    return out
