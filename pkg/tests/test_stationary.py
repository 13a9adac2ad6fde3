"""Tests for the line-count stationary distribution and its two MC oracles."""

import numpy as np
import pytest

from levywf.environment import EnvironmentSpec, total_mass
from levywf.stationary import (
    CutoffTooSmallError,
    compute_pi,
    siegmund_absorption,
    simulate_line_count,
    tail_bound,
    unnormalized_ratios,
)

ENV = EnvironmentSpec(0.8, ((0.1, 0.8),))
NULL = EnvironmentSpec(0.0)


def test_ratios_null_chain():
    r = unnormalized_ratios(NULL, 6)
    assert r[1] == 1.0
    assert np.all(r[2:] == 0.0)


def test_ratios_hand_values():
    # k=2: (sigma + lambda)/2; k=3: (sigma/3 + lambda/6) * r(2)
    r = unnormalized_ratios(ENV, 4)
    assert r[2] == pytest.approx(0.8)
    assert r[3] == pytest.approx(0.32)


def test_tail_bound_null():
    for k in range(2, 10):
        assert tail_bound(NULL, k) == 0.0


def test_tail_bound_clamped_and_monotone():
    rng = np.random.default_rng(5)
    for _ in range(10):
        sigma = rng.uniform(0, 2)
        w = rng.uniform(0.1, 2)
        z = rng.uniform(0.05, 0.9) * rng.choice([-1, 1])
        env = EnvironmentSpec(sigma, ((z, w),))
        assert tail_bound(env, 1) == 1.0
        bounds = [tail_bound(env, k) for k in range(2, 80)]
        assert all(0.0 <= b <= 1.0 for b in bounds)
        tail4 = bounds[2:]
        assert all(a >= b for a, b in zip(tail4, tail4[1:]))


def test_tail_bound_dominates_mc_tail():
    occ = simulate_line_count(ENV, 20000.0, 50.0, seed=42)
    for k in (4, 6, 8):
        mc_tail = occ[k:].sum() if len(occ) > k else 0.0
        assert tail_bound(ENV, k) >= mc_tail - 3e-3


def test_compute_pi_null():
    sd = compute_pi(NULL, 4)
    assert np.allclose(sd.pi[1:], [1, 0, 0, 0])
    lo, hi = sd.pi1_bracket
    assert hi - lo == 0.0
    assert sd.tail_upper == 0.0


def test_compute_pi_structure():
    sd = compute_pi(ENV, 64)
    assert sd.pi[2] / sd.pi[1] == pytest.approx(0.8, abs=1e-15)
    total = sd.pi[1:].sum()
    assert 1 - 2 * sd.tail_upper <= total <= 1.0
    assert np.all(sd.pi[1:] >= 0.0)
    assert 1.0 - total <= sd.tail_upper + 1e-12
    lo, hi = sd.pi1_bracket
    assert lo <= hi
    # recursion residual
    lam = total_mass(ENV)
    for k in range(2, 65):
        lo_idx = (k + 1) // 2
        pred = (ENV.sigma / k) * sd.pi[k - 1] + lam / (k * (k - 1)) * sd.pi[lo_idx:k].sum()
        assert pred == pytest.approx(sd.pi[k], rel=1e-12, abs=1e-300)


def test_compute_pi_cutoff_too_small():
    with pytest.raises(CutoffTooSmallError):
        compute_pi(EnvironmentSpec(2.5, ((0.5, 2.5),)), 4)


def test_occupation_null():
    occ = simulate_line_count(NULL, 10.0, 1.0, seed=0)
    assert occ[1] == pytest.approx(1.0)


def _occupation_streams(env, n_streams, horizon, burn_in, seed, kmax):
    fracs = np.zeros((n_streams, kmax + 1))
    for s in range(n_streams):
        occ = simulate_line_count(env, horizon, burn_in, seed=seed + s)
        upto = min(len(occ), kmax + 1)
        fracs[s, :upto] = occ[:upto]
    mean = fracs.mean(axis=0)
    se = fracs.std(axis=0, ddof=1) / np.sqrt(n_streams)
    return mean, se


def test_occupation_matches_recursion():
    mean, se = _occupation_streams(ENV, 8, 4000.0, 20.0, seed=101, kmax=8)
    ratio = mean[2] / mean[1]
    # delta-method standard error for the ratio
    ratio_se = ratio * np.sqrt((se[1] / mean[1]) ** 2 + (se[2] / mean[2]) ** 2)
    assert abs(ratio - 0.8) <= 3 * ratio_se
    sd = compute_pi(ENV, 64)
    for k in range(1, 7):
        assert abs(mean[k] - sd.pi[k]) <= 3 * se[k] + 5e-4


def test_occupation_birth_death_case():
    env = EnvironmentSpec(0.8)
    mean, se = _occupation_streams(env, 8, 3000.0, 20.0, seed=7, kmax=6)
    sd = compute_pi(env, 32)
    for k in range(1, 5):
        assert abs(mean[k] - sd.pi[k]) <= 3 * se[k] + 5e-4


def test_bracket_contains_mc_pi1():
    mean, se = _occupation_streams(ENV, 8, 4000.0, 20.0, seed=55, kmax=4)
    lo, hi = compute_pi(ENV, 64).pi1_bracket
    assert lo - 3 * se[1] <= mean[1] <= hi + 3 * se[1]


def test_siegmund_trivial():
    est = siegmund_absorption(ENV, 1, 8, 100, seed=0)
    assert est.estimate == 1.0
    est0 = siegmund_absorption(NULL, 2, 8, 500, seed=0)
    assert est0.estimate == 0.0
    assert est0.escape_fraction == 1.0


def test_siegmund_matches_pi_tail():
    sd = compute_pi(ENV, 64)
    cap = 64
    cap_bias = tail_bound(ENV, cap)
    for d in range(2, 7):
        est = siegmund_absorption(ENV, d, cap=cap, n_samples=20000, seed=900 + d)
        exact = sd.pi[d:].sum() + 0.5 * sd.tail_upper
        assert abs(est.estimate - exact) <= 3 * est.std_error + cap_bias + sd.tail_upper


def test_siegmund_reproducible():
    a = siegmund_absorption(ENV, 3, 64, 5000, seed=77)
    b = siegmund_absorption(ENV, 3, 64, 5000, seed=77)
    assert a == b
