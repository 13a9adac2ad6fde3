"""Tests for the environment spec and its coefficient algebra."""

import numpy as np
import pytest

from levywf.environment import (
    EnvironmentSpec,
    moment,
    ode_coeffs,
    parse_atom,
    tau,
    total_mass,
)


def random_env(rng, max_atoms=4):
    n = rng.integers(0, max_atoms + 1)
    atoms = []
    for _ in range(n):
        z = 0.0
        while z == 0.0:
            z = rng.uniform(-0.95, 0.95)
        atoms.append((z, rng.uniform(0.05, 2.0)))
    return EnvironmentSpec(sigma=rng.uniform(0.0, 2.0), atoms=tuple(atoms))


def test_validation():
    EnvironmentSpec(sigma=0.0, atoms=())
    EnvironmentSpec(sigma=1.0, atoms=((0.5, 0.1), (-0.5, 0.2)))
    with pytest.raises(ValueError):
        EnvironmentSpec(sigma=-0.1)
    with pytest.raises(ValueError):
        EnvironmentSpec(sigma=0.0, atoms=((0.0, 0.5),))
    with pytest.raises(ValueError):
        EnvironmentSpec(sigma=0.0, atoms=((1.5, 0.5),))
    with pytest.raises(ValueError):
        EnvironmentSpec(sigma=0.0, atoms=((0.5, 0.0),))


def test_total_mass():
    assert total_mass(EnvironmentSpec(0.8, ((0.1, 0.8),))) == pytest.approx(0.8)
    assert total_mass(EnvironmentSpec(0.8)) == 0.0
    assert total_mass(EnvironmentSpec(0.0, ((0.2, 0.3), (-0.4, 0.5)))) == pytest.approx(0.8)


def test_moment():
    env = EnvironmentSpec(0.0, ((0.1, 0.8),))
    assert moment(env, 1) == pytest.approx(0.08)
    assert moment(env, 0) == pytest.approx(0.8)
    env2 = EnvironmentSpec(0.0, ((0.2, 0.3), (-0.4, 0.5)))
    # 0.3 * 0.2^2 + 0.5 * (-0.4)^2 = 0.012 + 0.08
    assert moment(env2, 2) == pytest.approx(0.092)


def test_moment_bounds():
    rng = np.random.default_rng(7)
    for _ in range(50):
        env = random_env(rng)
        lam = total_mass(env)
        assert moment(env, 0) == pytest.approx(lam)
        for p in range(8):
            assert abs(moment(env, p)) <= lam + 1e-15


def test_tau_values():
    env = EnvironmentSpec(0.8, ((0.1, 0.8),))
    assert tau(env, 2, 1) == 2.0
    assert tau(env, 1, 3) == 0.0
    assert tau(env, 1, 1) == pytest.approx(0.8 * 1.1)
    # binom(2,1) * 0.8 * (1.1) * (-0.1)
    assert tau(env, 2, 3) == pytest.approx(-0.176)


def test_tau_support_band():
    rng = np.random.default_rng(11)
    env = random_env(rng)
    for i in range(1, 21):
        for j in range(1, 21):
            if j < i - 1 or j > 2 * i:
                assert tau(env, i, j) == 0.0


def test_tau_no_environment_is_pure_coalescence():
    env = EnvironmentSpec(0.7)
    for i in range(1, 21):
        for j in range(1, 21):
            expected = float(i * (i - 1)) if j == i - 1 else 0.0
            assert tau(env, i, j) == expected


def test_tau_11_identity():
    # integral of (1+z) nu(dz) = lambda + first moment
    rng = np.random.default_rng(3)
    for _ in range(30):
        env = random_env(rng)
        assert tau(env, 1, 1) == pytest.approx(total_mass(env) + moment(env, 1), abs=1e-14)


def test_ode_coeffs():
    env = EnvironmentSpec(0.8, ((0.1, 0.8),))
    d1, _, _, _ = ode_coeffs(env, 1, 1)
    assert d1 == pytest.approx(1.6)
    _, e32, _, _ = ode_coeffs(env, 3, 2)
    assert e32 == 10.0
    env0 = EnvironmentSpec(0.0, ((0.3, 0.5),))
    for k in range(1, 8):
        for j in range(1, k + 1):
            _, _, f_j, f_kj = ode_coeffs(env0, k, j)
            assert f_j == 0.0 and f_kj == 0.0
    # f_kj is non-negative exactly where the ODE uses it (j <= k-1)
    env = EnvironmentSpec(1.3, ((0.3, 0.5),))
    for k in range(1, 10):
        for j in range(1, k):
            assert ode_coeffs(env, k, j)[3] >= 0.0


def test_parse_atom():
    assert parse_atom("0.1:0.8") == (0.1, 0.8)
    assert parse_atom("-0.4:0.5") == (-0.4, 0.5)
    with pytest.raises(ValueError):
        parse_atom("0.1")
    with pytest.raises(ValueError):
        parse_atom("a:b")
