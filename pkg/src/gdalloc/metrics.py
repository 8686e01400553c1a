"""Evaluation metrics: under-delivery rate, penalty cost, L2
non-representativeness, average supply contention, pacing, objective."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .model import Allocation, Instance


@dataclass
class MetricsReport:
    under_delivery_rate: float
    penalty_cost: float
    l2_distance: float | None
    asc: float
    objective: float | None
    pacing: float | None = None

    def as_dict(self) -> dict:
        return {
            "under_delivery_rate": self.under_delivery_rate,
            "penalty_cost": self.penalty_cost,
            "l2_distance": self.l2_distance,
            "asc": self.asc,
            "objective": self.objective,
            "pacing": self.pacing,
        }


def under_delivery_rate(allocation: Allocation, instance: Instance) -> float:
    """Total under-delivered impressions as a fraction of total demand."""
    total_u = sum(allocation.under_delivery.get(cid, 0.0) for cid in instance.demand_ids)
    return total_u / float(instance.d.sum())


def penalty_cost(allocation: Allocation, instance: Instance) -> float:
    return float(sum(instance.p[instance.demand_index[cid]] * u
                     for cid, u in allocation.under_delivery.items()
                     if cid in instance.demand_index))


def l2_distance(allocation: Allocation, instance: Instance) -> float:
    """(1/2) sum over arcs of s_i (V_j / theta_j) (x_ij - theta_j)^2.

    Arcs absent from the allocation read as x = 0.
    """
    total = 0.0
    x = allocation.x
    for j, nbrs in instance.arcs.iter_by_demand():
        cid = instance.demand_ids[j]
        theta = instance.theta[j]
        w = instance.v[j] / theta
        for i in nbrs.tolist():
            xij = x.get((instance.supply_ids[i], cid), 0.0)
            total += instance.s[i] * w * (xij - theta) ** 2
    return 0.5 * total


def asc(instance: Instance) -> float:
    """Average supply contention: supply-weighted mean of sum_j d_j / S_j."""
    total_w = float(instance.s.sum())
    if total_w == 0.0:
        return 0.0
    acc = 0.0
    for i, nbrs in instance.arcs.iter_by_supply():
        if nbrs.size:
            acc += instance.s[i] * float((instance.d[nbrs] / instance.S[nbrs]).sum())
    return acc / total_w


def objective(allocation: Allocation, instance: Instance) -> float:
    """The primal objective: L2 distance plus penalty cost."""
    return l2_distance(allocation, instance) + penalty_cost(allocation, instance)


def pacing(stats, instance: Instance, band: float = 0.12, quota: float = 0.80,
           active: dict[str, tuple[float, float]] | None = None) -> float | None:
    """Fraction of contracts whose delivery stays within `band` of the linear
    goal for at least `quota` of their checkpoints.

    `stats` must carry per-checkpoint delivery snapshots; contracts default
    to being active over the whole replay horizon.  Zero-length intervals are
    excluded.  Returns None when there are no checkpoints at all.
    """
    if not stats.by_checkpoint:
        return None
    ok = 0
    counted = 0
    for cid in instance.demand_ids:
        j = instance.demand_index[cid]
        start, end = (active or {}).get(cid, (stats.start, stats.end))
        if not end > start:
            continue
        within = 0
        points = 0
        for t, snapshot in stats.by_checkpoint:
            if t < start or t > end:
                continue
            goal = instance.d[j] * (t - start) / (end - start)
            if abs(snapshot.get(cid, 0.0) - goal) <= band * goal:
                within += 1
            points += 1
        if points == 0:
            continue
        counted += 1
        if within >= quota * points:
            ok += 1
    return None if counted == 0 else ok / counted


def compile_report(instance: Instance, allocation: Allocation,
                   stats=None, with_l2: bool = True) -> MetricsReport:
    l2 = l2_distance(allocation, instance) if with_l2 else None
    pen = penalty_cost(allocation, instance)
    return MetricsReport(
        under_delivery_rate=under_delivery_rate(allocation, instance),
        penalty_cost=pen,
        l2_distance=l2,
        asc=asc(instance),
        objective=None if l2 is None else l2 + pen,
        pacing=None if stats is None else pacing(stats, instance),
    )


def write_report(report: MetricsReport, text_path: str | None = None,
                 json_path: str | None = None) -> str:
    """Emit the flat key=value form (returned, optionally written) and the
    machine-readable JSON document."""
    items = report.as_dict()
    lines = [f"{k}={'' if v is None else repr(float(v))}" for k, v in sorted(items.items())]
    text = "\n".join(lines) + "\n"
    if text_path:
        with open(text_path, "w", encoding="utf-8") as f:
            f.write(text)
    if json_path:
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(items, f, sort_keys=True, indent=2)
            f.write("\n")
    return text
