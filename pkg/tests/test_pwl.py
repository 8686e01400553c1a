"""Root-finder tests: worked examples, bisection-oracle agreement, properties."""

import math

import numpy as np
import pytest

from conftest import bisect_root, g_scalar
from gdalloc.pwl import (
    NO_SOLUTION,
    GTerm,
    g,
    solve_alpha,
    solve_beta,
    solve_zeta_capped,
    solve_zeta_hwm,
)

TOL = 1e-7


# ---------------------------------------------------------------------------
# Sum evaluators used both for residual checks and as bisection targets.
# ---------------------------------------------------------------------------

def beta_sum(terms, beta):
    return sum(g_scalar(t.theta, t.priority, t.offset - beta) for t in terms)


def alpha_sum(terms, alpha):
    return sum(t.scale * g_scalar(t.theta, t.priority, alpha - t.offset)
               for t in terms)


def zeta_capped_sum(terms, zeta):
    return sum(min(t.cap, t.scale * g_scalar(t.theta, t.priority, zeta - t.offset))
               for t in terms)


def hwm_sum(weights, zeta):
    return sum(min(avail, zeta * s) for s, avail in weights)


# ---------------------------------------------------------------------------
# g itself.
# ---------------------------------------------------------------------------

def test_g_values():
    assert g(0.25, 1.0, 0.0) == 0.25
    assert g(0.25, 1.0, -1.0) == 0.0       # z = -V is the kink
    assert g(0.25, 1.0, 1.0) == 0.5
    assert g(0.25, 1.0, -5.0) == 0.0       # clamped well past the kink


# ---------------------------------------------------------------------------
# Worked examples, one block per solver family.
# ---------------------------------------------------------------------------

def test_beta_contended_pair():
    # 1.2(1 - beta) = 1  ->  beta = 1/6
    terms = [GTerm(0.6, 1.0, 0.0), GTerm(0.6, 1.0, 0.0)]
    sol = solve_beta(terms)
    assert not sol.clamped
    assert sol.root == pytest.approx(1.0 / 6.0, abs=1e-12)


def test_beta_uncontended_clamps_to_zero():
    sol = solve_beta([GTerm(0.5, 1.0, 0.0)])
    assert sol.root == 0.0
    assert sol.clamped


def test_beta_mixed_alphas():
    # 0.6(1.5 - beta) + 0.6(1 - beta) = 1  ->  1.5 - 1.2 beta = 1  ->  beta = 5/12.
    # (Both terms stay positive there: 1.5 - 5/12 > 0 and 1 - 5/12 > 0.)
    terms = [GTerm(0.6, 1.0, 0.5), GTerm(0.6, 1.0, 0.0)]
    sol = solve_beta(terms)
    assert not sol.clamped
    assert sol.root == pytest.approx(5.0 / 12.0, abs=1e-12)
    assert beta_sum(terms, sol.root) == pytest.approx(1.0, abs=1e-12)


def test_alpha_base_identity_gives_zero():
    # sum s_i * theta = d means alpha = 0 solves the demand equation.
    terms = [GTerm(0.25, 1.0, 0.0, scale=100.0), GTerm(0.25, 1.0, 0.0, scale=100.0)]
    sol = solve_alpha(terms, target=50.0, p_cap=10.0)
    assert sol.root == pytest.approx(0.0, abs=1e-12)
    assert not sol.clamped


def test_alpha_shifted_betas():
    # 50(1 + alpha - 0.2) = 50  ->  alpha = 0.2
    terms = [GTerm(0.25, 1.0, 0.2, scale=100.0), GTerm(0.25, 1.0, 0.2, scale=100.0)]
    sol = solve_alpha(terms, target=50.0, p_cap=10.0)
    assert sol.root == pytest.approx(0.2, abs=1e-12)
    assert not sol.clamped


def test_alpha_penalty_cap_fires():
    terms = [GTerm(0.25, 1.0, 0.2, scale=100.0), GTerm(0.25, 1.0, 0.2, scale=100.0)]
    sol = solve_alpha(terms, target=50.0, p_cap=0.1)
    assert sol.root == 0.1
    assert sol.clamped


def test_zeta_capped_saturates():
    # Caps sum to 2 < 5: no solution at any zeta.
    terms = [GTerm(0.25, 1.0, 0.0, scale=10.0, cap=1.0)] * 2
    sol = solve_zeta_capped(terms, target=5.0)
    assert sol.root is NO_SOLUTION


def test_zeta_capped_interior_root():
    # 5(1 + zeta) = 5  ->  zeta = 0
    terms = [GTerm(0.25, 1.0, 0.0, scale=10.0, cap=10.0)] * 2
    sol = solve_zeta_capped(terms, target=5.0)
    assert sol.root == pytest.approx(0.0, abs=1e-12)


def test_zeta_capped_staggered_betas():
    # 2.5(1 + zeta) + 2.5*max{0, zeta} = 5  ->  zeta = 0.5
    terms = [GTerm(0.25, 1.0, 0.0, scale=10.0, cap=10.0),
             GTerm(0.25, 1.0, 1.0, scale=10.0, cap=10.0)]
    sol = solve_zeta_capped(terms, target=5.0)
    assert sol.root == pytest.approx(0.5, abs=1e-12)


def test_zeta_capped_upper_clamp():
    terms = [GTerm(0.25, 1.0, 0.0, scale=10.0, cap=10.0),
             GTerm(0.25, 1.0, 1.0, scale=10.0, cap=10.0)]
    sol = solve_zeta_capped(terms, target=5.0, upper=0.3)
    assert sol.root == 0.3
    assert sol.clamped


def test_zeta_hwm_linear_piece():
    sol = solve_zeta_hwm([(10.0, 10.0), (10.0, 10.0)], target=5.0)
    assert sol.root == pytest.approx(0.25, abs=1e-12)


def test_zeta_hwm_infeasible():
    sol = solve_zeta_hwm([(10.0, 10.0), (10.0, 10.0)], target=25.0)
    assert sol.root is NO_SOLUTION


def test_zeta_hwm_kinked():
    # zeta <= 0.2: 20*zeta; beyond: 2 + 10*zeta  ->  zeta = 0.6 at target 8.
    sol = solve_zeta_hwm([(10.0, 2.0), (10.0, 10.0)], target=8.0)
    assert sol.root == pytest.approx(0.6, abs=1e-12)


def test_empty_term_lists_rejected():
    with pytest.raises(ValueError):
        solve_beta([])
    with pytest.raises(ValueError):
        solve_alpha([], 1.0, 1.0)
    with pytest.raises(ValueError):
        solve_zeta_capped([], 1.0)
    with pytest.raises(ValueError):
        solve_zeta_hwm([], 1.0)


# ---------------------------------------------------------------------------
# Randomized agreement with the naive bisection oracle, 1,000 cases apiece.
# ---------------------------------------------------------------------------

def _random_terms(rng, with_caps=False):
    k = int(rng.integers(1, 51))
    terms = []
    for _ in range(k):
        cap = float(rng.uniform(0.1, 5.0)) if (with_caps and rng.random() < 0.7) \
            else math.inf
        terms.append(GTerm(
            theta=float(rng.uniform(0.05, 2.0)),
            priority=float(rng.uniform(0.3, 3.0)),
            offset=float(rng.uniform(-1.0, 2.0)),
            scale=float(rng.uniform(0.5, 10.0)),
            cap=cap,
        ))
    return terms


def test_beta_vs_bisection(rng):
    for _ in range(1000):
        terms = _random_terms(rng)
        sol = solve_beta(terms)
        if sol.clamped:
            assert beta_sum(terms, 0.0) <= 1.0 + 1e-12
            continue
        # beta_sum is non-increasing in beta; bisect on its negation.
        hi = max(t.offset + t.priority for t in terms)
        ref = bisect_root(lambda b: -beta_sum(terms, b), 0.0, hi, -1.0)
        assert ref is not None
        assert abs(sol.root - ref) < TOL


def test_alpha_vs_bisection(rng):
    for _ in range(1000):
        terms = _random_terms(rng)
        peak = alpha_sum(terms, 3.0)
        target = float(rng.uniform(0.05, 1.2) * max(peak, 1.0))
        p_cap = float(rng.uniform(0.1, 4.0))
        sol = solve_alpha(terms, target, p_cap)
        lo = min(t.offset - t.priority for t in terms)
        hi = lo + 1.0
        while alpha_sum(terms, hi) < target and hi < 1e6:
            hi = lo + 2 * (hi - lo)
        ref = bisect_root(lambda a: alpha_sum(terms, a), lo, hi, target)
        if sol.clamped:
            assert ref is None or ref > p_cap - TOL
        else:
            assert ref is not None and abs(sol.root - ref) < TOL


def test_zeta_capped_vs_bisection(rng):
    for _ in range(1000):
        terms = _random_terms(rng, with_caps=True)
        saturation = sum(t.cap if math.isfinite(t.cap) else 1e9 for t in terms)
        target = float(rng.uniform(0.05, 1.3) * min(saturation, 50.0))
        sol = solve_zeta_capped(terms, target)
        if sol.root is NO_SOLUTION:
            assert zeta_capped_sum(terms, 1e9) < target
            continue
        lo = min(t.offset - t.priority for t in terms)
        ref = bisect_root(lambda z: zeta_capped_sum(terms, z), lo, 1e6, target)
        assert ref is not None and abs(sol.root - ref) < TOL


def test_zeta_hwm_vs_bisection(rng):
    for _ in range(1000):
        k = int(rng.integers(1, 51))
        weights = [(float(rng.uniform(0.5, 10.0)), float(rng.uniform(0.0, 8.0)))
                   for _ in range(k)]
        total = sum(a for _, a in weights)
        target = float(rng.uniform(0.1, 1.3) * max(total, 1.0))
        sol = solve_zeta_hwm(weights, target)
        if sol.root is NO_SOLUTION:
            assert total < target
            continue
        ref = bisect_root(lambda z: hwm_sum(weights, z), 0.0, 1e6, target)
        assert ref is not None and abs(sol.root - ref) < TOL


# ---------------------------------------------------------------------------
# Structural properties.
# ---------------------------------------------------------------------------

def test_finite_roots_are_exact(rng):
    for _ in range(200):
        terms = _random_terms(rng, with_caps=True)
        target = float(rng.uniform(0.1, 0.9)
                       * min(sum(t.cap if math.isfinite(t.cap) else 1e9
                                 for t in terms), 40.0))
        sol = solve_zeta_capped(terms, target)
        if sol.root is not NO_SOLUTION and not sol.clamped:
            assert zeta_capped_sum(terms, sol.root) == pytest.approx(
                target, rel=1e-9)


def test_alpha_monotone_in_beta_offsets(rng):
    for _ in range(200):
        terms = _random_terms(rng)
        target = float(rng.uniform(0.2, 0.9)) * alpha_sum(terms, 2.0)
        if target <= 0:
            continue
        base = solve_alpha(terms, target, p_cap=1e9).root
        bumped_terms = [GTerm(t.theta, t.priority, t.offset + 0.3, t.scale, t.cap)
                        for t in terms]
        bumped = solve_alpha(bumped_terms, target, p_cap=1e9).root
        assert bumped >= base - 1e-9


def test_beta_monotone_in_alpha_offsets(rng):
    for _ in range(200):
        terms = _random_terms(rng)
        base = solve_beta(terms).root
        bumped_terms = [GTerm(t.theta, t.priority, t.offset + 0.3, t.scale, t.cap)
                        for t in terms]
        bumped = solve_beta(bumped_terms).root
        assert bumped >= base - 1e-9


def test_smallest_root_on_flat_segment():
    # One term saturates at its cap at zeta = 0 (sum == 1 exactly from there on);
    # a second term only starts rising at zeta = 1.  The infimum root is 0.
    terms = [GTerm(1.0, 1.0, 0.0, scale=1.0, cap=1.0),
             GTerm(1.0, 1.0, 2.0, scale=1.0, cap=1.0)]
    sol = solve_zeta_capped(terms, target=1.0)
    assert sol.root == pytest.approx(0.0, abs=1e-12)
