"""Shared fixtures and independent oracles for the test suite.

The bisection root-finder here is deliberately naive: it knows nothing about
breakpoints and simply halves an interval on the monotone sums that the
production solvers handle analytically.  Agreement between the two is the
main correctness evidence for the piecewise-linear machinery.
"""

from __future__ import annotations

import numpy as np
import pytest

from gdalloc import DemandNode, Instance, SupplyNode


def bisect_root(fn, lo, hi, target, tol=1e-12, max_iter=200):
    """Smallest z in [lo, hi] with monotone non-decreasing fn(z) == target.

    Returns None if fn(hi) < target (no solution in the interval).
    """
    flo, fhi = fn(lo), fn(hi)
    if fhi < target - 1e-9 * max(1.0, abs(target)):
        return None
    if flo >= target:
        return lo
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if fn(mid) >= target:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return hi


def g_scalar(theta, v, z):
    return max(0.0, theta * (1.0 + z / v))


def random_instance(rng, n_supply=None, n_demand=None,
                    demand_scale=(0.2, 1.3), priority=(0.5, 2.0)):
    """Small dense-ish random instance with every contract connected."""
    ns = int(n_supply or rng.integers(3, 11))
    nd = int(n_demand or rng.integers(2, 6))
    supply = [SupplyNode(f"s{i:02d}", float(rng.uniform(1.0, 10.0)))
              for i in range(ns)]
    demand = []
    arcs = []
    for j in range(nd):
        k = int(rng.integers(1, ns + 1))
        nbrs = rng.choice(ns, size=k, replace=False)
        s_total = sum(supply[i].weight for i in nbrs)
        d = float(rng.uniform(*demand_scale) * s_total)
        demand.append(DemandNode(f"c{j}", d, float(rng.uniform(*priority)), 1.0))
        arcs.extend((f"s{i:02d}", f"c{j}") for i in nbrs)
    return Instance.from_nodes(supply, demand, arcs)


@pytest.fixture
def rng():
    return np.random.default_rng(20260826)


@pytest.fixture
def pair_instance():
    """One supply node, two contended contracts: the worked reference case.

    s = 100; each contract wants 60 impressions, so theta = 0.6 for both and
    the node is oversubscribed.  With V = 1 and p = 10 the first cold-start
    iteration gives beta = 1/6 and alpha = 1/6 for both contracts, and at
    convergence both alphas hit the penalty cap p = 10 with beta = 61/6.
    """
    supply = [SupplyNode("s0", 100.0)]
    demand = [DemandNode("c0", 60.0, 10.0, 1.0),
              DemandNode("c1", 60.0, 10.0, 1.0)]
    arcs = [("s0", "c0"), ("s0", "c1")]
    return Instance.from_nodes(supply, demand, arcs)
