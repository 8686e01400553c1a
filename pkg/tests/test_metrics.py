"""Metric formulas, presets, pacing, and report serialization."""

import json

import numpy as np
import pytest

from conftest import random_instance
from gdalloc import (
    Allocation,
    DemandNode,
    Instance,
    SupplyNode,
    asc,
    compile_report,
    hwm,
    l2_distance,
    objective,
    pacing,
    penalty_cost,
    under_delivery_rate,
    write_report,
)
from gdalloc.model import PENALTY_PRESETS
from gdalloc.oracle import solve_qp_reference
from gdalloc.serving import DeliveryStats


def two_contract_instance():
    return Instance.from_nodes(
        [SupplyNode("s0", 100.0)],
        [DemandNode("c0", 10.0, 1.0, 1.0), DemandNode("c1", 10.0, 0.015, 1.0)],
        [("s0", "c0"), ("s0", "c1")])


def test_under_delivery_rate():
    inst = two_contract_instance()
    alloc = Allocation({}, {"c0": 0.0, "c1": 5.0})
    assert under_delivery_rate(alloc, inst) == pytest.approx(0.25)
    assert under_delivery_rate(Allocation({}, {}), inst) == 0.0
    assert under_delivery_rate(
        Allocation({}, {"c0": 10.0, "c1": 10.0}), inst) == 1.0


def test_penalty_cost():
    inst = two_contract_instance()
    alloc = Allocation({}, {"c0": 0.0, "c1": 5.0})
    assert penalty_cost(alloc, inst) == pytest.approx(0.075)


def test_penalty_presets_at_q_001():
    assert PENALTY_PRESETS["offline"](0.010) == pytest.approx(0.015)
    assert PENALTY_PRESETS["replay"](0.010) == pytest.approx(0.042)


def test_l2_zero_at_theta(rng):
    inst = random_instance(rng)
    x = {}
    for j, nbrs in inst.arcs.iter_by_demand():
        for i in nbrs.tolist():
            x[(inst.supply_ids[i], inst.demand_ids[j])] = float(inst.theta[j])
    assert l2_distance(Allocation(x, {}), inst) == pytest.approx(0.0, abs=1e-12)


def test_l2_single_arc_hand_value():
    inst = Instance.from_nodes([SupplyNode("s0", 100.0)],
                               [DemandNode("c0", 25.0, 1.0, 1.0)],
                               [("s0", "c0")])
    alloc = Allocation({("s0", "c0"): 0.5}, {})
    # 0.5 * 100 * (1/0.25) * (0.5 - 0.25)^2 = 12.5
    assert l2_distance(alloc, inst) == pytest.approx(12.5)


def test_l2_linear_in_priority(rng):
    inst = random_instance(rng)
    doubled = Instance.from_nodes(
        inst.supply,
        [DemandNode(n.id, n.demand, n.penalty, 2.0 * n.priority)
         for n in inst.demand],
        [(inst.supply_ids[i], inst.demand_ids[j])
         for i, j in inst.arcs.iter_arcs()])
    _, alloc = hwm(inst)
    assert l2_distance(alloc, doubled) == pytest.approx(
        2.0 * l2_distance(alloc, inst), rel=1e-12)


def test_asc_single_pair():
    inst = Instance.from_nodes([SupplyNode("s0", 10.0)],
                               [DemandNode("c0", 5.0, 1.0, 1.0)],
                               [("s0", "c0")])
    assert asc(inst) == pytest.approx(0.5)


def test_asc_doubles_when_supply_halves(rng):
    inst = random_instance(rng)
    halved = Instance.from_nodes(
        [SupplyNode(n.id, 0.5 * n.weight) for n in inst.supply],
        inst.demand,
        [(inst.supply_ids[i], inst.demand_ids[j])
         for i, j in inst.arcs.iter_arcs()])
    assert asc(halved) == pytest.approx(2.0 * asc(inst), rel=1e-12)


def test_objective_is_sum_of_components(rng):
    inst = random_instance(rng)
    _, alloc = hwm(inst)
    assert objective(alloc, inst) == pytest.approx(
        l2_distance(alloc, inst) + penalty_cost(alloc, inst), rel=1e-12)


def test_oracle_objective_below_hwm(rng):
    for _ in range(20):
        inst = random_instance(rng)
        _, alloc_hwm = hwm(inst)
        alloc_opt, _ = solve_qp_reference(inst)
        assert objective(alloc_opt, inst) <= objective(alloc_hwm, inst) + 1e-6


def test_metrics_invariant_under_relabeling(rng):
    inst = random_instance(rng)
    relabeled = Instance.from_nodes(
        [SupplyNode("x" + n.id, n.weight) for n in inst.supply],
        [DemandNode("y" + n.id, n.demand, n.penalty, n.priority)
         for n in inst.demand],
        [("x" + inst.supply_ids[i], "y" + inst.demand_ids[j])
         for i, j in inst.arcs.iter_arcs()])
    _, alloc = hwm(inst)
    _, alloc2 = hwm(relabeled)
    assert objective(alloc, inst) == pytest.approx(
        objective(alloc2, relabeled), rel=1e-12)
    assert asc(inst) == pytest.approx(asc(relabeled), rel=1e-12)


# ---------------------------------------------------------------------------
# Pacing.
# ---------------------------------------------------------------------------

def pacing_stats(checkpoints, end):
    stats = DeliveryStats()
    stats.start, stats.end = 0.0, end
    stats.by_checkpoint = checkpoints
    return stats


def test_pacing_smooth_delivery_is_one():
    inst = Instance.from_nodes([SupplyNode("s0", 100.0)],
                               [DemandNode("c0", 14.0, 1.0, 1.0)],
                               [("s0", "c0")])
    # A 7-day contract with d=14 has a linear goal of 6 on day 3.
    cps = [(float(t), {"c0": 2.0 * t}) for t in range(1, 8)]
    assert cps[2] == (3.0, {"c0": 6.0})
    assert pacing(pacing_stats(cps, 7.0), inst) == 1.0


def test_pacing_all_at_the_end_is_zero():
    inst = Instance.from_nodes([SupplyNode("s0", 100.0)],
                               [DemandNode("c0", 14.0, 1.0, 1.0)],
                               [("s0", "c0")])
    cps = [(float(t), {"c0": 0.0}) for t in range(1, 7)] + [(7.0, {"c0": 14.0})]
    assert pacing(pacing_stats(cps, 7.0), inst) == 0.0


def test_pacing_excludes_zero_length_interval():
    inst = Instance.from_nodes([SupplyNode("s0", 100.0)],
                               [DemandNode("c0", 14.0, 1.0, 1.0)],
                               [("s0", "c0")])
    cps = [(1.0, {"c0": 2.0})]
    assert pacing(pacing_stats(cps, 7.0), inst,
                  active={"c0": (3.0, 3.0)}) is None


# ---------------------------------------------------------------------------
# Reports.
# ---------------------------------------------------------------------------

def test_write_report_text_and_json(tmp_path, rng):
    inst = random_instance(rng)
    _, alloc = hwm(inst)
    report = compile_report(inst, alloc)
    text_path = tmp_path / "report.txt"
    json_path = tmp_path / "report.json"
    text = write_report(report, text_path, json_path)
    assert text_path.read_text() == text
    assert f"under_delivery_rate={report.under_delivery_rate!r}" in text
    doc = json.loads(json_path.read_text())
    assert doc["objective"] == pytest.approx(report.objective)
    assert doc["asc"] == pytest.approx(asc(inst))
