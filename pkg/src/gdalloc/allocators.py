"""Offline allocators: the greedy high-water-mark heuristic (HWM) and the
two-stage iterative dual-descent solver (SHALE).

Both emit a compact AllocationPlan (alpha_j, zeta_j, allocation order, pass
tag per contract) that is the entire offline-to-online handoff, plus an
optional dense primal Allocation for metric evaluation.  Stage One of SHALE
is a streaming coordinate-descent over the duals; every half-pass touches
arcs in one grouped order and keeps only O(nodes) state.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import pwl
from .model import Allocation, DataError, Instance

PLAN_HEADER = "PLAN v1"


@dataclass
class DualState:
    alpha: np.ndarray
    beta: np.ndarray
    iteration: int = 0

    def copy(self) -> "DualState":
        return DualState(self.alpha.copy(), self.beta.copy(), self.iteration)


@dataclass(frozen=True)
class PlanEntry:
    alpha: float
    zeta: float  # math.inf allowed
    order_index: int
    pass_tag: int


@dataclass
class AllocationPlan:
    variant: str  # "HWM" or "SHALE"
    entries: dict[str, PlanEntry] = field(default_factory=dict)

    def serving_order(self) -> list[str]:
        """Contract ids in the order the online walk must visit them."""
        return sorted(self.entries,
                      key=lambda c: (self.entries[c].pass_tag,
                                     self.entries[c].order_index))


def cold_state(instance: Instance) -> DualState:
    return DualState(np.zeros(instance.n_demand), np.zeros(instance.n_supply))


def warm_state(instance: Instance, plan: AllocationPlan) -> DualState:
    """Start Stage One from a previous plan's alphas, clamped to [0, p_j]."""
    alpha = np.zeros(instance.n_demand)
    for cid, entry in plan.entries.items():
        j = instance.demand_index.get(cid)
        if j is not None:
            alpha[j] = min(max(entry.alpha, 0.0), instance.p[j])
    return DualState(alpha, np.zeros(instance.n_supply))


def allocation_order(instance: Instance) -> np.ndarray:
    """Demand indices sorted by contention d_j/S_j descending, ties by id."""
    contention = instance.d / instance.S
    return np.array(sorted(range(instance.n_demand),
                           key=lambda j: (-contention[j], instance.demand_ids[j])),
                    dtype=np.int64)


def supply_duals(instance: Instance, alpha: np.ndarray) -> np.ndarray:
    """One beta half-pass: solve the supply equation for every supply node."""
    beta = np.zeros(instance.n_supply)
    theta, v = instance.theta, instance.v
    for i, nbrs in instance.arcs.iter_by_supply():
        if nbrs.size:
            beta[i], _ = pwl.beta_root(theta[nbrs], v[nbrs], alpha[nbrs])
    return beta


def _alpha_pass(instance: Instance, beta: np.ndarray) -> np.ndarray:
    alpha = np.empty(instance.n_demand)
    s, d, p = instance.s, instance.d, instance.p
    theta, v = instance.theta, instance.v
    for j, nbrs in instance.arcs.iter_by_demand():
        alpha[j], _ = pwl.alpha_root(theta[j], v[j], beta[nbrs], s[nbrs], d[j], p[j])
    return alpha


def stage_one_step(instance: Instance, alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One full Stage One iteration: beta half-pass, then alpha half-pass."""
    beta = supply_duals(instance, alpha)
    return beta, _alpha_pass(instance, beta)


def shale_stage_one(instance: Instance, state: DualState, iterations: int,
                    time_budget: float | None = None,
                    alpha_tol: float | None = None) -> DualState:
    """Run up to `iterations` full Stage One iterations (stop-anytime at
    iteration granularity).  Optional early exit on max |delta alpha| < alpha_tol
    or on an elapsed-seconds budget, both checked only between iterations."""
    deadline = None if time_budget is None else time.monotonic() + time_budget
    for _ in range(iterations):
        beta, alpha = stage_one_step(instance, state.alpha)
        delta = float(np.max(np.abs(alpha - state.alpha))) if alpha.size else 0.0
        state.alpha, state.beta = alpha, beta
        state.iteration += 1
        if alpha_tol is not None and delta < alpha_tol:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break
    return state


def converge(instance: Instance, state: DualState | None = None,
             alpha_tol: float = 1e-8, max_iterations: int = 100000) -> DualState:
    """Stage One until the alpha update stalls below alpha_tol."""
    if state is None:
        state = cold_state(instance)
    before = state.iteration
    shale_stage_one(instance, state, max_iterations, alpha_tol=alpha_tol)
    if state.iteration - before >= max_iterations:
        raise RuntimeError(f"no convergence within {max_iterations} iterations")
    return state


def projected_delivery(instance: Instance, state: DualState) -> np.ndarray:
    """d_j(alpha): delivery projected from the current alphas alone."""
    beta = supply_duals(instance, state.alpha)
    out = np.empty(instance.n_demand)
    s, alpha = instance.s, state.alpha
    theta, v = instance.theta, instance.v
    for j, nbrs in instance.arcs.iter_by_demand():
        out[j] = float(s[nbrs] @ pwl.g_array(theta[j], v[j], alpha[j] - beta[nbrs]))
    return out


def epsilon_approximate(instance: Instance, state: DualState, eps: float,
                        cap_tol: float = 1e-12) -> bool:
    """True when every contract has alpha_j maxed at p_j or projected
    delivery at least (1 - eps) d_j."""
    proj = projected_delivery(instance, state)
    capped = state.alpha >= instance.p - cap_tol
    return bool(np.all(capped | (proj >= (1.0 - eps) * instance.d)))


def iterations_to_epsilon(instance: Instance, eps: float,
                          max_iterations: int = 10000) -> int:
    """First iteration count t (from cold start) at which the duals give an
    eps-approximate delivery."""
    state = cold_state(instance)
    for t in range(max_iterations + 1):
        if epsilon_approximate(instance, state, eps):
            return t
        shale_stage_one(instance, state, 1)
    raise RuntimeError(f"not eps-approximate after {max_iterations} iterations")


# ---------------------------------------------------------------------------
# HWM
# ---------------------------------------------------------------------------

def hwm(instance: Instance, collect_x: bool = True) -> tuple[AllocationPlan, Allocation]:
    """Greedy fill in decreasing contention order.

    Residual supply is tracked in impression units; a contract whose
    remaining eligible inventory cannot meet its demand takes everything
    that is left (zeta = inf).
    """
    order = allocation_order(instance)
    s = instance.s
    s_res = s.copy()
    x: dict[tuple[str, str], float] = {}
    under: dict[str, float] = {}
    plan = AllocationPlan("HWM")
    for rank, j in enumerate(order):
        nbrs = instance.arcs.demand_neighbors(int(j))
        root, _ = pwl.zeta_hwm_root(s[nbrs], s_res[nbrs], instance.d[j])
        if root is None:
            zeta = math.inf
            take = s_res[nbrs].copy()
        else:
            zeta = root
            take = np.minimum(s_res[nbrs], zeta * s[nbrs])
        s_res[nbrs] -= take
        delivered = float(take.sum())
        cid = instance.demand_ids[j]
        under[cid] = max(0.0, float(instance.d[j]) - delivered)
        plan.entries[cid] = PlanEntry(0.0, zeta, rank, 1)
        if collect_x:
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(s[nbrs] > 0, take / np.where(s[nbrs] > 0, s[nbrs], 1.0), 0.0)
            for k, i in enumerate(nbrs.tolist()):
                x[(instance.supply_ids[i], cid)] = float(frac[k])
    return plan, Allocation(x, under)


# ---------------------------------------------------------------------------
# SHALE Stage Two + driver
# ---------------------------------------------------------------------------

def shale_stage_two(instance: Instance, state: DualState, two_pass: bool = True,
                    collect_x: bool = True) -> tuple[AllocationPlan, Allocation]:
    """Convert the Stage One duals into a serveable plan and primal.

    Pass one fills each contract with zeta bounded above by its alpha;
    when `two_pass` is set, a second sweep in the same order re-solves each
    under-delivered contract's remaining demand against leftover inventory
    with no upper bound.  The plan records the pass that performed the final
    allocation so serving can replay the identical arithmetic.
    """
    order = allocation_order(instance)
    s, d = instance.s, instance.d
    theta, v = instance.theta, instance.v
    alpha = state.alpha
    beta = supply_duals(instance, alpha)
    s_res = np.ones(instance.n_supply)  # residual fraction per supply node
    delivered = np.zeros(instance.n_demand)
    zeta = np.zeros(instance.n_demand)
    pass_tag = np.ones(instance.n_demand, dtype=np.int64)
    xfrac: dict[tuple[str, str], float] = {}

    def take_for(j: int, nbrs: np.ndarray, z: float) -> np.ndarray:
        if math.isinf(z):
            return s_res[nbrs].copy()
        return np.minimum(s_res[nbrs], pwl.g_array(theta[j], v[j], z - beta[nbrs]))

    def record(j: int, nbrs: np.ndarray, frac: np.ndarray) -> None:
        if not collect_x:
            return
        cid = instance.demand_ids[j]
        for k, i in enumerate(nbrs.tolist()):
            key = (instance.supply_ids[i], cid)
            xfrac[key] = xfrac.get(key, 0.0) + float(frac[k])

    for j in order.tolist():
        nbrs = instance.arcs.demand_neighbors(j)
        caps = s_res[nbrs] * s[nbrs]
        root, _ = pwl.zeta_capped_root(theta[j], v[j], beta[nbrs], s[nbrs],
                                       caps, d[j], upper=alpha[j])
        z = alpha[j] if root is None else root
        frac = take_for(j, nbrs, z)
        s_res[nbrs] -= frac
        delivered[j] += float(s[nbrs] @ frac)
        zeta[j] = z
        record(j, nbrs, frac)

    if two_pass:
        for j in order.tolist():
            remaining = d[j] - delivered[j]
            if remaining <= max(1e-12, 1e-9 * d[j]):
                continue
            nbrs = instance.arcs.demand_neighbors(j)
            caps = s_res[nbrs] * s[nbrs]
            root, _ = pwl.zeta_capped_root(theta[j], v[j], beta[nbrs], s[nbrs],
                                           caps, remaining)
            z = math.inf if root is None else root
            frac = take_for(j, nbrs, z)
            if float(frac.sum()) <= 0.0:
                continue
            s_res[nbrs] -= frac
            delivered[j] += float(s[nbrs] @ frac)
            zeta[j] = z
            pass_tag[j] = 2
            record(j, nbrs, frac)

    plan = AllocationPlan("SHALE")
    under: dict[str, float] = {}
    rank_of = {int(j): r for r, j in enumerate(order.tolist())}
    for j in range(instance.n_demand):
        cid = instance.demand_ids[j]
        plan.entries[cid] = PlanEntry(float(alpha[j]), float(zeta[j]),
                                      rank_of[j], int(pass_tag[j]))
        under[cid] = max(0.0, float(d[j] - delivered[j]))
    return plan, Allocation(xfrac, under)


def shale(instance: Instance, iterations: int,
          warm_start: AllocationPlan | None = None, two_pass: bool = True,
          collect_x: bool = True, alpha_tol: float | None = None,
          time_budget: float | None = None
          ) -> tuple[AllocationPlan, Allocation, DualState]:
    """Full run: Stage One for `iterations` rounds, then Stage Two."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    state = cold_state(instance) if warm_start is None else warm_state(instance, warm_start)
    shale_stage_one(instance, state, iterations,
                    time_budget=time_budget, alpha_tol=alpha_tol)
    plan, alloc = shale_stage_two(instance, state, two_pass=two_pass,
                                  collect_x=collect_x)
    return plan, alloc, state


def allocation_from_plan(instance: Instance, plan: AllocationPlan,
                         collect_x: bool = True) -> Allocation:
    """Expected allocation obtained by serving the plan against the exact
    forecast: per supply node, the same walk the online phase performs."""
    serving_rank = {cid: r for r, cid in enumerate(plan.serving_order())}
    delivered = np.zeros(instance.n_demand)
    x: dict[tuple[str, str], float] = {}
    theta, v, s = instance.theta, instance.v, instance.s
    for i, nbrs in instance.arcs.iter_by_supply():
        known = [j for j in nbrs.tolist() if instance.demand_ids[j] in plan.entries]
        if not known:
            continue
        alphas = np.array([plan.entries[instance.demand_ids[j]].alpha for j in known])
        idx = np.array(known, dtype=np.int64)
        beta_i, _ = pwl.beta_root(theta[idx], v[idx], alphas)
        s_res = 1.0
        for j in sorted(known, key=lambda j: serving_rank[instance.demand_ids[j]]):
            entry = plan.entries[instance.demand_ids[j]]
            if math.isinf(entry.zeta):
                frac = s_res
            else:
                frac = min(s_res, pwl.g(theta[j], v[j], entry.zeta - beta_i))
            s_res -= frac
            delivered[j] += s[i] * frac
            if collect_x:
                x[(instance.supply_ids[i], instance.demand_ids[j])] = frac
    under = {instance.demand_ids[j]: max(0.0, float(instance.d[j] - delivered[j]))
             for j in range(instance.n_demand)}
    return Allocation(x, under)


# ---------------------------------------------------------------------------
# Plan files: `PLAN v1 <variant>` then one P-line per contract.
# ---------------------------------------------------------------------------

def save_plan(plan: AllocationPlan, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{PLAN_HEADER} {plan.variant}\n")
        for cid in sorted(plan.entries, key=lambda c: plan.entries[c].order_index):
            e = plan.entries[cid]
            zeta = "inf" if math.isinf(e.zeta) else repr(e.zeta)
            f.write(f"P {cid} {e.alpha!r} {zeta} {e.order_index} {e.pass_tag}\n")


def load_plan(path: str) -> AllocationPlan:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3 or " ".join(header[:2]) != PLAN_HEADER:
            raise DataError(f"{path}:1: bad plan header")
        plan = AllocationPlan(header[2])
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6 or parts[0] != "P":
                raise DataError(f"{path}:{lineno}: malformed plan record")
            _, cid, alpha, zeta, order_index, pass_tag = parts
            plan.entries[cid] = PlanEntry(float(alpha),
                                          math.inf if zeta == "inf" else float(zeta),
                                          int(order_index), int(pass_tag))
    return plan
