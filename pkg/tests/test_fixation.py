"""Tests for the fixation-probability evaluators."""

import io
import math

import numpy as np
import pytest

from levywf.environment import EnvironmentSpec
from levywf.fixation import (
    DivergenceError,
    SeriesRepresentation,
    TaylorCoefficients,
    build_series,
    closed_form_no_env,
    h_series,
    h_taylor,
    normalize_b,
    write_curve_csv,
)
from levywf.odes import b_ratios, extract_b_ode

# seven-decimal reference coefficients for sigma = 0.8, lambda = 0.8,
# single atom at a (a = 0 row is the environment-free case)
TABLE1 = {
    0.0: (0.6527730, 0.2611092, 0.0696291, 0.0139258, 0.0022281, 0.0002971, 0.0000340),
    0.1: (0.6830193, 0.2458870, 0.0586850, 0.0106059, 0.0015752, 0.0002021, 0.0000229),
    0.2: (0.7145930, 0.2286698, 0.0475633, 0.0078140, 0.0011734, 0.0001641, 0.0000201),
    0.3: (0.7473968, 0.2092711, 0.0365527, 0.0056493, 0.0009582, 0.0001497, 0.0000206),
}


def table_env(a):
    return EnvironmentSpec(0.8) if a == 0.0 else EnvironmentSpec(0.8, ((a, 0.8),))


@pytest.fixture(scope="module")
def series_no_env():
    return build_series(EnvironmentSpec(0.8), K=32)


@pytest.fixture(scope="module")
def series_a01():
    return build_series(table_env(0.1), K=32)


def test_h_series_at_zero(series_a01):
    value, err = h_series(0.0, series_a01)
    assert value == 0.0
    assert err >= 0.0


def test_h_series_at_one(series_a01):
    value, err = h_series(1.0, series_a01)
    assert 1.0 - err - 1e-6 <= value <= 1.0 + 1e-6


def test_h_series_matches_closed_form(series_no_env):
    value, err = h_series(0.5, series_no_env)
    expected = math.expm1(0.4) / math.expm1(0.8)
    assert expected == pytest.approx(0.401312, abs=1e-6)
    assert abs(value - expected) <= err + 1e-6


def test_h_series_monotone(series_a01, series_no_env):
    xs = np.linspace(0.0, 1.0, 101)
    for s in (series_a01, series_no_env):
        values, err = h_series(xs, s)
        assert np.all(np.diff(values) >= -err - 1e-9)


def test_h_taylor_trivial():
    b = TaylorCoefficients(b=np.array([0.0, 0.5, 0.25]), mode="absolute")
    assert h_taylor(0.0, b, 2) == 0.0
    assert h_taylor(0.5, b, 2) == pytest.approx(0.5 * 0.5 + 0.25 * 0.25)


def test_h_taylor_table_row():
    row = TABLE1[0.1]
    b = np.zeros(8)
    b[1:] = row
    coeffs = TaylorCoefficients(b=b, mode="absolute")
    expected = sum(c * 0.1 ** (j + 1) for j, c in enumerate(row))
    assert h_taylor(0.1, coeffs, 7) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.0708206, abs=5e-7)


def test_h_taylor_ratio_mode_rejected():
    b = TaylorCoefficients(b=np.array([0.0, 1.0, 0.4]), mode="ratio")
    with pytest.raises(ValueError):
        h_taylor(0.5, b, 2)


def test_h_taylor_martingale():
    env = EnvironmentSpec(0.5, ((0.5, 1.0),))
    lim = extract_b_ode(env, 12)
    coeffs = TaylorCoefficients(b=lim.b, mode="absolute")
    for x in (0.1, 0.4, 0.8):
        assert h_taylor(x, coeffs, 7) == pytest.approx(x, abs=1e-5)


def test_closed_form():
    assert closed_form_no_env(0.3, 0.0) == 0.3
    assert closed_form_no_env(1.0, 0.8) == pytest.approx(1.0)
    assert closed_form_no_env(0.0, 0.8) == 0.0
    # derivative at 0 equals sigma/(e^sigma - 1)
    eps = 1e-7
    deriv = closed_form_no_env(eps, 0.8) / eps
    assert deriv == pytest.approx(0.6527730, abs=1e-6)
    # small sigma limit is smooth
    assert closed_form_no_env(0.25, 1e-12) == pytest.approx(0.25, abs=1e-9)


@pytest.mark.parametrize("a,J_sum", [(0.0, 14), (0.1, 14), (0.2, 14), (0.3, 9)])
def test_normalize_b_reproduces_table(a, J_sum):
    ratios = b_ratios(table_env(a), 20)
    coeffs = normalize_b(ratios, J_sum)
    assert coeffs.mode == "normalized"
    assert coeffs.b[1:].sum() == pytest.approx(1.0, abs=1e-12)
    for j, ref in enumerate(TABLE1[a], start=1):
        assert coeffs.b[j] == pytest.approx(ref, abs=5e-7)


def test_normalize_b_divergence():
    # ratios grow to ~35 by j=7 and decay only slowly afterwards; the tail
    # test must refuse to normalize (behavior established by running the
    # recursion to J=60: |ratio| is 1.3 at j=20 and still 7e-4 at j=60)
    env = EnvironmentSpec(5.0, ((-0.9, 5.0),))
    ratios = b_ratios(env, 60)
    assert np.abs(ratios[1:]).max() > 30.0
    with pytest.raises(DivergenceError) as exc:
        normalize_b(ratios, 60)
    assert exc.value.ratios is not None


def test_series_route_agrees_with_taylor(series_a01):
    lim = extract_b_ode(table_env(0.1), 16)
    coeffs = TaylorCoefficients(b=lim.b, mode="absolute")
    b_tail = abs(lim.b[8:]).sum()
    for x in np.linspace(0.05, 0.3, 7):
        value, err = h_series(x, series_a01)
        taylor = h_taylor(x, coeffs, 7)
        assert abs(value - taylor) <= err + b_tail + 1e-6


def test_martingale_series_is_identity():
    env = EnvironmentSpec(0.5, ((0.5, 1.0),))
    s = build_series(env, K=32)
    xs = np.linspace(0.0, 1.0, 51)
    values, err = h_series(xs, s)
    assert np.abs(values - xs).max() <= err + 1e-4


def test_one_sided_nonnegative_coefficients():
    env = EnvironmentSpec(0.5, ((-0.3, 0.7),))
    s = build_series(env, K=32)
    assert s.a.min() >= -1e-9
    lim = extract_b_ode(env, 16)
    assert lim.b[1:].min() >= -1e-9
    assert lim.b[1:].sum() == pytest.approx(1.0, abs=1e-4)


def test_series_per_level_values(series_a01):
    # each level polynomial at 1 sits between 0 and the level's stationary mass
    from levywf.stationary import compute_pi

    sd = compute_pi(table_env(0.1), 256)
    for k in range(1, 13):
        p_k_at_1 = series_a01.a[k, :].sum()
        assert -1e-9 <= p_k_at_1 <= sd.pi[k] + 1e-6


def test_write_curve_csv():
    buf = io.StringIO()
    write_curve_csv(buf, np.array([0.0, 0.5]), np.array([0.0, 0.123456789123]), np.array([1e-3, 1e-3]))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x,h,err"
    assert lines[2] == "0.5,0.123456789,0.001"
