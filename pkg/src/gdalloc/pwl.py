"""Exact root finders for the monotone piecewise-linear equations used everywhere else.

Three families show up in the allocators and in online serving:

* the supply equation  sum_j g_j(alpha_j - beta) = 1, decreasing in beta,
* the demand equation  sum_i s_i * g_j(alpha - beta_i) = d_j, increasing in alpha,
* the capped fill equations  sum_i min{cap_i, s_i * g_j(zeta - beta_i)} = d_j,

where g(theta, V, z) = max{0, theta * (1 + z / V)}.  All are solved exactly by a
breakpoint sweep: sort the kinks, accumulate slope, and solve the linear piece
that brackets the target.  Cost is O(k log k) for k terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Centralized tolerances.  Roots are polished against the exact sum, so the
# residual at a returned finite root is far below ROOT_TOL in practice.
ROOT_TOL = 1e-9
FEAS_TOL = 1e-6

#: Sentinel returned when the capped sum saturates below the target.
NO_SOLUTION = None


@dataclass(frozen=True)
class GTerm:
    """One additive term min{cap, scale * g(theta, priority, z - offset)}."""

    theta: float
    priority: float
    offset: float = 0.0
    scale: float = 1.0
    cap: float = math.inf


@dataclass(frozen=True)
class PwlSolution:
    root: float | None
    clamped: bool = False


def g(theta: float, priority: float, z: float) -> float:
    """The allocation response function max{0, theta * (1 + z / priority)}."""
    return max(0.0, theta * (1.0 + z / priority))


def g_array(theta, priority, z):
    """Vectorized g over numpy arrays (broadcasting allowed)."""
    return np.maximum(0.0, theta * (1.0 + z / priority))


def _eval_sum(start, slope, cap_z, z):
    """Exact value and active slope of the capped piecewise-linear sum at z."""
    contrib = slope * np.clip(z - start, 0.0, cap_z - start)
    active = (z > start) & (z < cap_z)
    return float(contrib.sum()), float(slope[active].sum())


def _smallest_root(start, slope, cap_z, target):
    """Smallest z with sum_t slope_t * clip(z - start_t, 0, cap_z_t - start_t) == target.

    The sum is non-decreasing, zero at -inf.  Returns None when it saturates
    strictly below `target`.
    """
    start = np.asarray(start, dtype=float)
    slope = np.asarray(slope, dtype=float)
    cap_z = np.asarray(cap_z, dtype=float)
    start, slope, cap_z = np.broadcast_arrays(start, slope, cap_z)

    keep = slope > 0.0
    if not keep.all():
        start, slope, cap_z = start[keep], slope[keep], cap_z[keep]
    if start.size == 0:
        return None

    finite = np.isfinite(cap_z)
    ev_z = np.concatenate([start, cap_z[finite]])
    ev_ds = np.concatenate([slope, -slope[finite]])
    order = np.argsort(ev_z, kind="stable")
    z = ev_z[order]
    seg_slope = np.maximum(np.cumsum(ev_ds[order]), 0.0)

    vals = np.empty_like(z)
    vals[0] = 0.0
    np.cumsum(seg_slope[:-1] * np.diff(z), out=vals[1:])

    idx = int(np.searchsorted(vals, target, side="left"))
    if idx == len(vals):
        # Beyond the last event only un-capped terms still rise; recompute the
        # tail slope exactly instead of trusting the cumsum residue.
        tail = float(slope[~finite].sum())
        if tail == 0.0:
            return None
        root = z[-1] + (target - vals[-1]) / tail
    elif idx == 0:
        root = z[0]
    else:
        root = z[idx - 1] + (target - vals[idx - 1]) / seg_slope[idx - 1]

    # One correction step against the exact sum removes the accumulated
    # floating error of the sweep.
    val, active = _eval_sum(start, slope, cap_z, root)
    if active > 0.0:
        root += (target - val) / active
    return float(root)


# ---------------------------------------------------------------------------
# Array-level solvers (used by the allocators on index-aligned numpy data).
# ---------------------------------------------------------------------------

def beta_root(theta, priority, alpha):
    """Solve sum_j g(theta_j, V_j, alpha_j - beta) = 1 for beta >= 0.

    Returns (beta, clamped); clamped means the sum at beta=0 was already
    below 1, i.e. the supply node is uncontended.
    """
    theta = np.asarray(theta, dtype=float)
    priority = np.asarray(priority, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    at_zero = float(np.maximum(0.0, theta * (1.0 + alpha / priority)).sum())
    if at_zero <= 1.0:
        return 0.0, at_zero < 1.0
    # Substitute z = -beta; the sum becomes increasing in z with kinks at
    # z = -(alpha_j + V_j).
    root = _smallest_root(-(alpha + priority), theta / priority, math.inf, 1.0)
    return -root, False


def alpha_root(theta, priority, beta, scale, target, p_cap):
    """Smallest root of sum_i scale_i * g(theta, V, alpha - beta_i) = target.

    Clamped to p_cap when the root exceeds it or no root exists.
    """
    theta = np.asarray(theta, dtype=float)
    priority = np.asarray(priority, dtype=float)
    beta = np.asarray(beta, dtype=float)
    scale = np.asarray(scale, dtype=float)
    root = _smallest_root(beta - priority, scale * theta / priority, math.inf, target)
    if root is None or root > p_cap:
        return float(p_cap), True
    return root, False


def zeta_capped_root(theta, priority, beta, scale, cap, target, upper=math.inf):
    """Smallest root of sum_i min{cap_i, scale_i * g(theta, V, zeta - beta_i)} = target.

    Returns (root, clamped).  root is None (NO_SOLUTION) when the capped sum
    saturates below target; root == upper with clamped=True when the crossing
    lies beyond `upper`.
    """
    theta = np.asarray(theta, dtype=float)
    priority = np.asarray(priority, dtype=float)
    beta = np.asarray(beta, dtype=float)
    scale = np.asarray(scale, dtype=float)
    cap = np.asarray(cap, dtype=float)
    start = np.broadcast_arrays(beta - priority, scale)[0].astype(float)
    slope = np.broadcast_arrays(scale * theta / priority, scale)[0].astype(float)
    safe = np.where(slope > 0, slope, 1.0)
    cap_z = np.where(slope > 0, start + np.broadcast_to(cap, slope.shape) / safe, math.inf)
    root = _smallest_root(start, slope, cap_z, target)
    if root is None:
        return None, False
    if root > upper:
        return float(upper), True
    return root, False


def zeta_hwm_root(scale, available, target):
    """Smallest root of sum_i min{available_i, zeta * scale_i} = target, or None."""
    scale = np.asarray(scale, dtype=float)
    available = np.asarray(available, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cap_z = np.where(scale > 0, available / np.where(scale > 0, scale, 1.0), math.inf)
    root = _smallest_root(np.zeros_like(scale), scale, cap_z, target)
    if root is None:
        return None, False
    return root, False


# ---------------------------------------------------------------------------
# GTerm-level API.
# ---------------------------------------------------------------------------

def _unpack(terms: Sequence[GTerm]):
    if len(terms) == 0:
        raise ValueError("term list must be nonempty")
    theta = np.array([t.theta for t in terms])
    priority = np.array([t.priority for t in terms])
    offset = np.array([t.offset for t in terms])
    scale = np.array([t.scale for t in terms])
    cap = np.array([t.cap for t in terms])
    return theta, priority, offset, scale, cap


def solve_beta(terms: Sequence[GTerm]) -> PwlSolution:
    """Root of sum_j g_j(offset_j - beta) = 1, clamped at beta = 0."""
    theta, priority, offset, _, _ = _unpack(terms)
    root, clamped = beta_root(theta, priority, offset)
    return PwlSolution(root, clamped)


def solve_alpha(terms: Sequence[GTerm], target: float, p_cap: float) -> PwlSolution:
    """Smallest root of sum_i scale_i * g_i(alpha - offset_i) = target, capped at p_cap."""
    theta, priority, offset, scale, _ = _unpack(terms)
    root, clamped = alpha_root(theta, priority, offset, scale, target, p_cap)
    return PwlSolution(root, clamped)


def solve_zeta_capped(terms: Sequence[GTerm], target: float,
                      upper: float = math.inf) -> PwlSolution:
    """Smallest root of sum_i min{cap_i, scale_i * g_i(zeta - offset_i)} = target."""
    theta, priority, offset, scale, cap = _unpack(terms)
    root, clamped = zeta_capped_root(theta, priority, offset, scale, cap, target, upper)
    return PwlSolution(root, clamped)


def solve_zeta_hwm(weights: Iterable[tuple[float, float]], target: float) -> PwlSolution:
    """Smallest root of sum_i min{avail_i, zeta * s_i} = target over (s_i, avail_i) pairs."""
    pairs = list(weights)
    if not pairs:
        raise ValueError("weight list must be nonempty")
    scale = np.array([w[0] for w in pairs])
    available = np.array([w[1] for w in pairs])
    root, clamped = zeta_hwm_root(scale, available, target)
    return PwlSolution(root, clamped)
