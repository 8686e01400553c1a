"""Online phase: per-impression contract selection from a compact plan, and
a replay simulator with periodic re-optimization.

Selection consults nothing but the plan and the contract catalog (theta_j,
V_j): beta is recomputed per impression from the eligible contracts' alphas,
then the eligible set is walked in the plan's serving order, exactly the
Stage Two arithmetic.  Delivery counters exist only for metrics and
re-optimization, never for per-event selection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import allocators, metrics, pwl
from .allocators import AllocationPlan
from .model import DataError, DemandNode, Instance, SupplyNode

LOG_HEADER = "LOG v1"


@dataclass(frozen=True)
class ImpressionEvent:
    timestamp: float
    supply_weight: float
    eligible: tuple[str, ...]


@dataclass
class DeliveryStats:
    delivered: dict[str, float] = field(default_factory=dict)
    by_checkpoint: list[tuple[float, dict[str, float]]] = field(default_factory=list)
    alpha_checkpoints: list[tuple[float, dict[str, float]]] = field(default_factory=list)
    none_count: int = 0
    skipped: int = 0
    start: float = 0.0
    end: float = 0.0


class ServingContext:
    """Read-only per-plan state: alphas, zetas, serving order, and the
    contract catalog needed to evaluate g online."""

    def __init__(self, plan: AllocationPlan, instance: Instance):
        self.entries = {}
        rank = {cid: r for r, cid in enumerate(plan.serving_order())}
        for cid, e in plan.entries.items():
            j = instance.demand_index.get(cid)
            if j is None:
                continue
            self.entries[cid] = (e.alpha, e.zeta, rank[cid],
                                 float(instance.theta[j]), float(instance.v[j]))

    def walk_fractions(self, eligible: list[str]) -> list[tuple[str, float]]:
        """The deterministic part of selection: per-contract probabilities."""
        alphas = np.array([self.entries[c][0] for c in eligible])
        thetas = np.array([self.entries[c][3] for c in eligible])
        vs = np.array([self.entries[c][4] for c in eligible])
        beta_i, _ = pwl.beta_root(thetas, vs, alphas)
        out = []
        s_res = 1.0
        for cid in sorted(eligible, key=lambda c: self.entries[c][2]):
            _, zeta, _, theta, v = self.entries[cid]
            frac = s_res if math.isinf(zeta) else min(s_res, pwl.g(theta, v, zeta - beta_i))
            s_res -= frac
            out.append((cid, frac))
        return out


def serve_impression(event: ImpressionEvent, ctx: ServingContext,
                     rng: np.random.Generator,
                     stats: DeliveryStats | None = None) -> str | None:
    """Pick a contract for one impression, or None for the residual mass."""
    eligible = [c for c in event.eligible if c in ctx.entries]
    if stats is not None:
        stats.skipped += len(event.eligible) - len(eligible)
    if not eligible:
        if stats is not None:
            stats.none_count += 1
        return None
    draw = rng.random()
    acc = 0.0
    for cid, frac in ctx.walk_fractions(eligible):
        acc += frac
        if draw < acc:
            return cid
    if stats is not None:
        stats.none_count += 1
    return None


def _remaining_instance(instance: Instance, delivered: dict[str, float],
                        supply_fraction: float) -> Instance | None:
    """Forecast for the rest of the horizon: remaining demand against the
    forecast graph scaled to the remaining time (supply assumed to arrive
    uniformly over the horizon)."""
    keep: list[DemandNode] = []
    for node in instance.demand:
        rest = node.demand - delivered.get(node.id, 0.0)
        if rest > 1e-9:
            keep.append(DemandNode(node.id, rest, node.penalty, node.priority,
                                   node.revenue_per_impression))
    if not keep or supply_fraction <= 0.0:
        return None
    kept_ids = {n.id for n in keep}
    supply = [SupplyNode(n.id, n.weight * supply_fraction) for n in instance.supply]

    def arc_iter():
        for j, nbrs in instance.arcs.iter_by_demand():
            cid = instance.demand_ids[j]
            if cid in kept_ids:
                for i in nbrs.tolist():
                    yield instance.supply_ids[i], cid

    return Instance.from_nodes(supply, keep, arc_iter())


def replay(events: list[ImpressionEvent], instance: Instance,
           reopt_period: float, iterations_per_reopt: int = 20,
           rng_seed: int = 0, *, two_pass: bool = True,
           initial_plan: AllocationPlan | None = None,
           horizon_end: float | None = None
           ) -> tuple[DeliveryStats, metrics.MetricsReport]:
    """Serve a time-ordered log, re-optimizing every `reopt_period` time
    units from the delivery stats collected so far.  Deterministic for a
    fixed seed."""
    if any(b.timestamp < a.timestamp for a, b in zip(events, events[1:])):
        raise DataError("event log must be sorted by timestamp")
    rng = np.random.default_rng(rng_seed)
    stats = DeliveryStats()
    if not events:
        return stats, metrics.compile_report(
            instance, allocators.Allocation({}, {cid: float(instance.d[k])
                                                 for k, cid in enumerate(instance.demand_ids)}),
            with_l2=False)

    t0 = events[0].timestamp
    t_end = horizon_end if horizon_end is not None else events[-1].timestamp
    stats.start, stats.end = t0, t_end

    if initial_plan is not None:
        plan = initial_plan
    else:
        plan, _, _ = allocators.shale(instance, iterations_per_reopt,
                                      two_pass=two_pass, collect_x=False)
    ctx = ServingContext(plan, instance)
    stats.alpha_checkpoints.append((t0, {cid: e.alpha for cid, e in plan.entries.items()}))

    next_cp = t0 + reopt_period
    for event in events:
        while event.timestamp >= next_cp and next_cp <= t_end and math.isfinite(next_cp):
            stats.by_checkpoint.append((next_cp, dict(stats.delivered)))
            rest = _remaining_instance(instance, stats.delivered,
                                       (t_end - next_cp) / (t_end - t0) if t_end > t0 else 0.0)
            if rest is not None:
                plan, _, _ = allocators.shale(rest, iterations_per_reopt,
                                              warm_start=plan, two_pass=two_pass,
                                              collect_x=False)
                ctx = ServingContext(plan, rest)
            else:
                plan = AllocationPlan(plan.variant)
                ctx = ServingContext(plan, instance)
            stats.alpha_checkpoints.append(
                (next_cp, {cid: e.alpha for cid, e in plan.entries.items()}))
            next_cp += reopt_period
        selected = serve_impression(event, ctx, rng, stats)
        if selected is not None:
            stats.delivered[selected] = stats.delivered.get(selected, 0.0) \
                + event.supply_weight
    stats.by_checkpoint.append((t_end, dict(stats.delivered)))

    under = {cid: max(0.0, float(instance.d[k]) - stats.delivered.get(cid, 0.0))
             for k, cid in enumerate(instance.demand_ids)}
    allocation = allocators.Allocation({}, under)
    report = metrics.compile_report(instance, allocation, stats=stats, with_l2=False)
    return stats, report


def forecast_log(instance: Instance, *, unit_weight: float = 1.0,
                 horizon: float = 1.0, shuffle_seed: int | None = None
                 ) -> list[ImpressionEvent]:
    """Expand the forecast graph into an event log: each supply node becomes
    round(s_i / unit_weight) events carrying its eligible contract set,
    spread evenly over [0, horizon]."""
    slots: list[int] = []
    eligible: dict[int, tuple[str, ...]] = {}
    for i, nbrs in instance.arcs.iter_by_supply():
        if nbrs.size == 0:
            continue  # no eligible contracts: the event could never deliver
        count = int(round(instance.s[i] / unit_weight))
        eligible[i] = tuple(instance.demand_ids[j] for j in nbrs.tolist())
        slots.extend([i] * count)
    slots_arr = np.array(slots, dtype=np.int64)
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(slots_arr)
    n = len(slots_arr)
    return [ImpressionEvent((k + 0.5) * horizon / n, unit_weight, eligible[int(i)])
            for k, i in enumerate(slots_arr)]


# ---------------------------------------------------------------------------
# Log and stats files.
# ---------------------------------------------------------------------------

def save_log(events: list[ImpressionEvent], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(LOG_HEADER + "\n")
        for e in events:
            f.write(f"I {e.timestamp!r} {e.supply_weight!r} {','.join(e.eligible)}\n")


def load_log(path: str) -> list[ImpressionEvent]:
    events: list[ImpressionEvent] = []
    with open(path, "r", encoding="utf-8") as f:
        if f.readline().strip() != LOG_HEADER:
            raise DataError(f"{path}:1: bad log header")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4 or parts[0] != "I":
                raise DataError(f"{path}:{lineno}: malformed log record")
            try:
                events.append(ImpressionEvent(float(parts[1]), float(parts[2]),
                                              tuple(parts[3].split(","))))
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed log record")
    return events


def save_stats(stats: DeliveryStats, path: str) -> None:
    doc = {
        "delivered": stats.delivered,
        "by_checkpoint": [[t, snap] for t, snap in stats.by_checkpoint],
        "alpha_checkpoints": [[t, a] for t, a in stats.alpha_checkpoints],
        "none_count": stats.none_count,
        "skipped": stats.skipped,
        "start": stats.start,
        "end": stats.end,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=2)
        f.write("\n")
