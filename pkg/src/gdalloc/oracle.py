"""Small-instance reference solver and optimality certification.

Solves the allocation convex program directly (via cvxpy, interior point)
and checks the first-order optimality conditions analytically, giving an
independent ground truth for the iterative allocators.  Deliberately guarded
to small instances; this is a test oracle, not a production path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pwl
from .allocators import DualState, supply_duals
from .model import Allocation, Instance

MAX_ORACLE_SUPPLY = 60
MAX_ORACLE_DEMAND = 25


class OracleError(Exception):
    """Reference solve failed to reach the requested accuracy."""


@dataclass
class KktResidual:
    """Maximum violations of each optimality-condition family.

    gamma (arc non-negativity duals) and psi (under-delivery duals) are
    reconstructed analytically from (x, alpha, beta): gamma from stationarity
    on arcs with x = 0, psi = p - alpha.
    """

    stationarity_x: float
    stationarity_u: float
    comp_slack: float
    feasibility: float
    dual_feasibility: float

    def max_residual(self) -> float:
        return max(self.stationarity_x, self.stationarity_u, self.comp_slack,
                   self.feasibility, self.dual_feasibility)


def _arc_table(instance: Instance):
    """Materialized (i, j) arc arrays; oracle instances are small."""
    i_list, j_list = [], []
    for j, nbrs in instance.arcs.iter_by_demand():
        i_list.extend(nbrs.tolist())
        j_list.extend([j] * nbrs.size)
    return np.array(i_list, dtype=np.int64), np.array(j_list, dtype=np.int64)


def _guard(instance: Instance) -> None:
    if instance.n_supply > MAX_ORACLE_SUPPLY or instance.n_demand > MAX_ORACLE_DEMAND:
        raise ValueError(
            f"oracle limited to {MAX_ORACLE_SUPPLY} supply / "
            f"{MAX_ORACLE_DEMAND} demand nodes, got "
            f"{instance.n_supply}/{instance.n_demand}")


def solve_qp_reference(instance: Instance, tolerance: float = 1e-6
                       ) -> tuple[Allocation, DualState]:
    """Direct minimization of the allocation program; returns the primal
    (x, u) and the duals (alpha, beta) read off the constraint multipliers.

    Raises OracleError when the certified KKT residual exceeds `tolerance`.
    """
    import cvxpy as cp

    _guard(instance)
    arc_i, arc_j = _arc_table(instance)
    n_arcs = arc_i.size
    s_arc = instance.s[arc_i]
    theta_arc = instance.theta[arc_j]
    w_arc = s_arc * instance.v[arc_j] / theta_arc

    x = cp.Variable(n_arcs, nonneg=True)
    u = cp.Variable(instance.n_demand, nonneg=True)
    obj = 0.5 * cp.sum(cp.multiply(w_arc, cp.square(x - theta_arc))) + instance.p @ u

    demand_cons = []
    for j in range(instance.n_demand):
        sel = np.nonzero(arc_j == j)[0]
        demand_cons.append(s_arc[sel] @ x[sel] + u[j] >= instance.d[j])
    supply_cons = {}
    for i in range(instance.n_supply):
        sel = np.nonzero(arc_i == i)[0]
        if sel.size:
            supply_cons[i] = cp.sum(x[sel]) <= 1.0
    problem = cp.Problem(cp.Minimize(obj), demand_cons + list(supply_cons.values()))
    problem.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12,
                  tol_feas=1e-12)
    if x.value is None:
        raise OracleError(f"reference solve failed with status {problem.status}")

    xv = np.clip(np.asarray(x.value, dtype=float), 0.0, None)
    uv = np.clip(np.asarray(u.value, dtype=float), 0.0, None)
    alpha = np.array([float(c.dual_value) for c in demand_cons])
    beta = np.zeros(instance.n_supply)
    for i, c in supply_cons.items():
        beta[i] = float(c.dual_value) / instance.s[i]
    alpha = np.clip(alpha, 0.0, None)
    beta = np.clip(beta, 0.0, None)

    allocation = Allocation(
        x={(instance.supply_ids[i], instance.demand_ids[j]): float(xv[k])
           for k, (i, j) in enumerate(zip(arc_i.tolist(), arc_j.tolist()))},
        under_delivery={instance.demand_ids[j]: float(uv[j])
                        for j in range(instance.n_demand)},
    )
    duals = DualState(alpha, beta)
    residual = kkt_check(instance, allocation, duals)
    if residual.max_residual() > tolerance:
        raise OracleError(
            f"reference solution certifies only to {residual.max_residual():.3e}, "
            f"requested {tolerance:.3e}")
    return allocation, duals


def kkt_check(instance: Instance, allocation: Allocation, duals: DualState,
              x_zero_tol: float = 1e-9) -> KktResidual:
    """Evaluate every optimality condition family and return max violations.

    Complementary-slackness violations are measured as min(|dual|, |slack|)
    per pair, so a tiny dual excuses a slack constraint and vice versa.
    """
    arc_i, arc_j = _arc_table(instance)
    alpha, beta = duals.alpha, duals.beta
    s = instance.s
    xv = np.array([allocation.x.get((instance.supply_ids[i], instance.demand_ids[j]), 0.0)
                   for i, j in zip(arc_i.tolist(), arc_j.tolist())])
    uv = np.array([allocation.under_delivery.get(cid, 0.0)
                   for cid in instance.demand_ids])

    w = instance.v[arc_j] / instance.theta[arc_j]
    grad = s[arc_i] * (w * (xv - instance.theta[arc_j]) - alpha[arc_j] + beta[arc_i])
    gamma = np.where((xv <= x_zero_tol) & (grad > 0.0), grad, 0.0)
    stationarity_x = float(np.max(np.abs(grad - gamma))) if grad.size else 0.0

    psi = instance.p - alpha
    stationarity_u = float(np.max(np.clip(-psi, 0.0, None))) if psi.size else 0.0

    delivered = np.zeros(instance.n_demand)
    np.add.at(delivered, arc_j, s[arc_i] * xv)
    row_sum = np.zeros(instance.n_supply)
    np.add.at(row_sum, arc_i, xv)

    demand_slack = delivered + uv - instance.d
    comp = [np.minimum(np.abs(alpha), np.abs(demand_slack)),
            np.minimum(np.abs(beta), np.abs(row_sum - 1.0)),
            np.minimum(np.abs(gamma), np.abs(xv)),
            np.minimum(np.abs(np.clip(psi, 0.0, None)), np.abs(uv))]
    comp_slack = float(max(np.max(c) if c.size else 0.0 for c in comp))

    feasibility = float(max(
        np.max(np.clip(-demand_slack, 0.0, None), initial=0.0),
        np.max(np.clip(row_sum - 1.0, 0.0, None), initial=0.0),
        np.max(np.clip(-xv, 0.0, None), initial=0.0),
        np.max(np.clip(-uv, 0.0, None), initial=0.0),
    ))
    dual_feasibility = float(max(
        np.max(np.clip(-alpha, 0.0, None), initial=0.0),
        np.max(np.clip(-beta, 0.0, None), initial=0.0),
        np.max(np.clip(-gamma, 0.0, None), initial=0.0),
    ))
    return KktResidual(stationarity_x, stationarity_u, comp_slack,
                       feasibility, dual_feasibility)


def reconstruct_primal(instance: Instance, alpha: np.ndarray) -> Allocation:
    """Pure one-pass reconstruction: per supply node, solve the supply
    equation for beta_i and set x_ij = g(alpha_j - beta_i).  No caps, no
    zeta; this is the claim that the alphas alone carry the solution."""
    beta = supply_duals(instance, alpha)
    x: dict[tuple[str, str], float] = {}
    delivered = np.zeros(instance.n_demand)
    for i, nbrs in instance.arcs.iter_by_supply():
        for j in nbrs.tolist():
            xij = pwl.g(instance.theta[j], instance.v[j], alpha[j] - beta[i])
            x[(instance.supply_ids[i], instance.demand_ids[j])] = xij
            delivered[j] += instance.s[i] * xij
    under = {instance.demand_ids[j]: max(0.0, float(instance.d[j] - delivered[j]))
             for j in range(instance.n_demand)}
    return Allocation(x, under)
