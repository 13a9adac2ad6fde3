"""Linear ODE systems for the duality coefficients of the ancestral graph.

Two closed linear systems are integrated to stationarity:

* the lattice system for the time-t coefficients R_t(k, j) indexed by line
  count k and set size j (1 <= j <= k <= K), whose long-time limits a_j^k build
  the series representation of the fixation probability, and
* the vector system for the coefficients Q_t(j) indexed by set size alone,
  whose limits b_j are the Taylor coefficients of the fixation probability at 0.

Both systems are linear with constant coefficients, so time stepping uses the
classical explicit fourth-order one-step scheme; for a linear system the
update is the degree-4 Taylor polynomial of the matrix exponential, which is
precomputed once as a sparse matrix and applied per step.  The step size is
capped at 0.5/d_K where d_K is the largest diagonal outflow rate, keeping the
stiffest mode well inside the stability region.

Truncation closure.  Inflow terms referencing levels beyond the lattice are
read as zero.  On the lattice system the outflow side is censored to match:
the level-doubling outflow is dropped from the diagonal when the doubled
level 2k would leave the lattice, and the up-branching outflow is dropped at
k = K.  This keeps the truncated system exactly mass-conserving, which is
what makes integration-to-stationarity well posed: with the outflow kept, all
levels above K/2 leak mass at the full doubling rate and the grid decays
uniformly at rate ~ lambda * pi((K/2, K]) instead of settling, so a window
delta below ~1e-8 is unreachable even at K = 64.  Rows with 2k <= K and
k < K are identical under both closures, so every relation checked on the
lower part of the lattice is unaffected.  The vector system needs no such
treatment (it is not a mass system and its truncated zero mode is perturbed
only by the negligible coupling to the dropped entry).

The limits b_j also satisfy a three-term-plus-integral recursion that
determines the ratios b_j/b_1 exactly; both routes are exposed and
cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil

import numpy as np
import scipy.sparse as sp

from .environment import EnvironmentSpec, d_rate, ode_coeffs, tau, total_mass


@dataclass(frozen=True)
class StepPolicy:
    """Step-size policy: dt = min(max_dt, 0.5 / d_K)."""

    max_dt: float = 0.05


@dataclass(frozen=True)
class Stabilization:
    """Long-time extraction: stop when the grid moves less than tol per window.

    Truncation can perturb the zero eigenvalue of the system enough that the
    limit itself drains at a slow exponential rate (this happens for the
    vector system when the underlying coefficient tail diverges); the window
    delta then plateaus above tol instead of reaching it.  Once the deltas
    stop shrinking while below ``plateau_guard``, the transient modes are
    gone and waiting longer only lets the limit decay, so extraction stops
    there and flags ``converged: False`` in the diagnostics.
    """

    window: float = 1.0
    tol: float = 1e-9
    t_max: float = 200.0
    plateau_guard: float = 1e-5


class StabilizationError(RuntimeError):
    """Raised when the coefficients fail to settle before t_max."""


@dataclass
class CoefficientGrid:
    """Time-t lattice of coefficients R_t(k, j) for 1 <= j <= k <= K.

    ``values[k, j]`` holds the coefficient; entries with j > k are
    structurally zero.  (m, i) is the start configuration: at t = 0 the grid
    is the indicator of (k, j) = (m, i).
    """

    env: EnvironmentSpec
    m: int
    i: int
    K: int
    t: float
    values: np.ndarray

    def line_count_marginal(self) -> np.ndarray:
        """Row sums: the distribution P(line count = k) implied by the grid."""
        return self.values[: self.K + 1, :].sum(axis=1)


@dataclass
class QVector:
    """Time-t coefficients Q_t(j) for 1 <= j <= J, started from set size i."""

    env: EnvironmentSpec
    i: int
    J: int
    t: float
    values: np.ndarray


@dataclass
class LimitCoefficients:
    """Long-time limits: lattice limits a (if extracted), vector limits b."""

    a: np.ndarray | None = None
    b: np.ndarray | None = None
    K: int = 0
    J: int = 0
    diagnostics: dict = field(default_factory=dict)


def _lattice_size(K: int) -> int:
    return K * (K + 1) // 2


def _idx(k: int, j: int) -> int:
    return k * (k - 1) // 2 + (j - 1)


@lru_cache(maxsize=64)
def _r_generator(env: EnvironmentSpec, K: int) -> sp.csr_matrix:
    """Sparse generator of the lattice system over the flattened (k, j) lattice."""
    rows, cols, vals = [], [], []

    def add(r, c, v):
        if v != 0.0:
            rows.append(r)
            cols.append(c)
            vals.append(v)

    lam = total_mass(env)
    for k in range(1, K + 1):
        for j in range(1, k + 1):
            row = _idx(k, j)
            # censored diagonal: outflows whose destination level would leave
            # the lattice are suppressed, keeping the system mass-conserving
            d_k = k * (k - 1)
            if k < K:
                d_k += k * env.sigma
            if 2 * k <= K:
                d_k += lam
            _, e_kj, f_j, f_kj = ode_coeffs(env, k, j)
            if k + 1 <= K:
                add(row, _idx(k + 1, j + 1), float((j + 1) * j))
                add(row, _idx(k + 1, j), e_kj)
            if k >= 2 and j >= 2:
                add(row, _idx(k - 1, j - 1), f_j)
            if j <= k - 1:
                add(row, _idx(k - 1, j), f_kj)
            add(row, row, -d_k)
            if k % 2 == 0:
                half = k // 2
                for l in range(1, min(j, half) + 1):
                    add(row, _idx(half, l), tau(env, l, j))
    n = _lattice_size(K)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@lru_cache(maxsize=64)
def _q_generator(env: EnvironmentSpec, J: int) -> sp.csr_matrix:
    """Sparse generator of the vector system on 1 <= j <= J."""
    rows, cols, vals = [], [], []
    for j in range(1, J + 1):
        row = j - 1
        d_j = d_rate(env, j)
        rows.append(row), cols.append(row), vals.append(-d_j)
        if j >= 2:
            f_j = (j - 1) * env.sigma
            if f_j != 0.0:
                rows.append(row), cols.append(j - 2), vals.append(f_j)
        for l in range(max(1, (j + 1) // 2), min(j + 1, J) + 1):
            t = tau(env, l, j)
            if t != 0.0:
                rows.append(row), cols.append(l - 1), vals.append(t)
    return sp.csr_matrix((vals, (rows, cols)), shape=(J, J))


def _rk4_step_matrix(A: sp.csr_matrix, h: float) -> sp.csr_matrix:
    """One-step update of the classical 4th-order scheme for y' = Ay.

    Equals I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24, the result of the four
    explicit stages applied to a linear right-hand side.
    """
    n = A.shape[0]
    I = sp.identity(n, format="csr")
    M = I + (h / 4.0) * A
    M = I + (h / 3.0) * (A @ M)
    M = I + (h / 2.0) * (A @ M)
    M = (I + h * (A @ M)).tocsr()
    return M


def _dt_for(env: EnvironmentSpec, K: int, policy: StepPolicy) -> float:
    return min(policy.max_dt, 0.5 / d_rate(env, K))


def initial_grid(env: EnvironmentSpec, K: int, m: int = 1, i: int = 1) -> CoefficientGrid:
    if not 1 <= i <= m <= K:
        raise ValueError("need 1 <= i <= m <= K")
    values = np.zeros((K + 1, K + 1))
    values[m, i] = 1.0
    return CoefficientGrid(env=env, m=m, i=i, K=K, t=0.0, values=values)


def _flatten(grid: CoefficientGrid) -> np.ndarray:
    K = grid.K
    out = np.empty(_lattice_size(K))
    for k in range(1, K + 1):
        out[_idx(k, 1) : _idx(k, k) + 1] = grid.values[k, 1 : k + 1]
    return out


def _unflatten(vec: np.ndarray, K: int) -> np.ndarray:
    values = np.zeros((K + 1, K + 1))
    for k in range(1, K + 1):
        values[k, 1 : k + 1] = vec[_idx(k, 1) : _idx(k, k) + 1]
    return values


def r_rhs(grid: CoefficientGrid) -> np.ndarray:
    """Time derivative of the lattice coefficients under the censored closure.

    Entries with 2k <= K and k < K see the exact right-hand side; boundary
    rows drop the outflow terms whose destinations fall outside the lattice
    (see the module docstring for why).
    """
    A = _r_generator(grid.env, grid.K)
    return _unflatten(A @ _flatten(grid), grid.K)


def q_rhs(q: QVector) -> np.ndarray:
    """Time derivative of the vector coefficients, truncation closure at J."""
    A = _q_generator(q.env, q.J)
    out = np.zeros(q.J + 1)
    out[1:] = A @ q.values[1:]
    return out


def integrate_r(
    env: EnvironmentSpec,
    K: int,
    T: float,
    step_policy: StepPolicy | None = None,
    m: int = 1,
    i: int = 1,
) -> CoefficientGrid:
    """Integrate the lattice system from the (m, i) indicator up to time T."""
    if K < 1 or T < 0.0:
        raise ValueError("need K >= 1 and T >= 0")
    policy = step_policy or StepPolicy()
    grid = initial_grid(env, K, m, i)
    if T == 0.0:
        return grid
    A = _r_generator(env, K)
    dt = _dt_for(env, K, policy)
    y = _flatten(grid)
    n_full = int(np.floor(T / dt + 1e-12))
    rem = T - n_full * dt
    M = _rk4_step_matrix(A, dt)
    for _ in range(n_full):
        y = M @ y
    if rem > 1e-12 * max(1.0, T):
        y = _rk4_step_matrix(A, rem) @ y
    return CoefficientGrid(env=env, m=m, i=i, K=K, t=T, values=_unflatten(y, K))


def integrate_q(
    env: EnvironmentSpec,
    J: int,
    T: float,
    step_policy: StepPolicy | None = None,
    i: int = 1,
) -> QVector:
    """Integrate the vector system from the size-i indicator up to time T."""
    if not 1 <= i <= J or T < 0.0:
        raise ValueError("need 1 <= i <= J and T >= 0")
    policy = step_policy or StepPolicy()
    values = np.zeros(J + 1)
    values[i] = 1.0
    if T == 0.0:
        return QVector(env=env, i=i, J=J, t=0.0, values=values)
    A = _q_generator(env, J)
    dt = _dt_for(env, J, policy)
    y = values[1:].copy()
    n_full = int(np.floor(T / dt + 1e-12))
    rem = T - n_full * dt
    M = _rk4_step_matrix(A, dt)
    for _ in range(n_full):
        y = M @ y
    if rem > 1e-12 * max(1.0, T):
        y = _rk4_step_matrix(A, rem) @ y
    out = np.zeros(J + 1)
    out[1:] = y
    return QVector(env=env, i=i, J=J, t=T, values=out)


def _stabilize(A: sp.csr_matrix, y0: np.ndarray, dt: float, stab: Stabilization):
    """Step until the solution moves less than tol (or plateaus) per window."""
    n_win = max(1, ceil(stab.window / dt))
    window = n_win * dt
    M = _rk4_step_matrix(A, dt)
    y = y0
    t = 0.0
    deltas: list[float] = []
    while t < stab.t_max:
        prev = y
        for _ in range(n_win):
            y = M @ y
        t += window
        delta = float(np.max(np.abs(y - prev)))
        deltas.append(delta)
        diag = {"t_stabilized": t, "window_delta": delta, "dt": dt, "window": window}
        if delta < stab.tol:
            diag["converged"] = True
            return y, diag
        # less than a 2x drop over three windows => only the slow drain is left
        if len(deltas) >= 4 and delta < stab.plateau_guard and delta > 0.5 * deltas[-4]:
            diag["converged"] = False
            return y, diag
    raise StabilizationError(
        f"no stabilization below tol={stab.tol:g} before t_max={stab.t_max:g} "
        f"(last window delta {delta:g})"
    )


def extract_a(
    env: EnvironmentSpec,
    K: int,
    step_policy: StepPolicy | None = None,
    stabilization: Stabilization | None = None,
    m: int = 1,
    i: int = 1,
) -> LimitCoefficients:
    """Long-time limits a_j^k of the lattice system, with stabilization metadata.

    The limits do not depend on the start configuration (m, i); rerunning with
    a different start is an external consistency check, not performed here.
    """
    policy = step_policy or StepPolicy()
    stab = stabilization or Stabilization()
    grid = initial_grid(env, K, m, i)
    A = _r_generator(env, K)
    dt = _dt_for(env, K, policy)
    y, diag = _stabilize(A, _flatten(grid), dt, stab)
    diag["start"] = (m, i)
    return LimitCoefficients(a=_unflatten(y, K), K=K, diagnostics=diag)


def extract_b_ode(
    env: EnvironmentSpec,
    J: int,
    step_policy: StepPolicy | None = None,
    stabilization: Stabilization | None = None,
    i: int = 1,
) -> LimitCoefficients:
    """Long-time limits b_j of the vector system (absolute values, no rescaling)."""
    policy = step_policy or StepPolicy()
    stab = stabilization or Stabilization()
    if not 1 <= i <= J:
        raise ValueError("need 1 <= i <= J")
    y0 = np.zeros(J)
    y0[i - 1] = 1.0
    A = _q_generator(env, J)
    dt = _dt_for(env, J, policy)
    y, diag = _stabilize(A, y0, dt, stab)
    diag["start"] = i
    b = np.zeros(J + 1)
    b[1:] = y
    return LimitCoefficients(b=b, J=J, diagnostics=diag)


def b_ratios(env: EnvironmentSpec, J: int) -> np.ndarray:
    """Ratios b_j / b_1 from the stationarity recursion, seeded with b_1 = 1.

    The recursion solves the stationary balance for b_{j+1}; the divisor
    (j+1)j is the coalescence coefficient and is always positive.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    b = np.zeros(J + 1)
    b[1] = 1.0
    for j in range(1, J):
        d_j = d_rate(env, j)
        f_j = (j - 1) * env.sigma
        prev = b[j - 1] if j >= 2 else 0.0
        s = sum(tau(env, l, j) * b[l] for l in range(1, j + 1))
        b[j + 1] = (d_j * b[j] - f_j * prev - s) / ((j + 1) * j)
    return b


@dataclass
class ResidualReport:
    """Residuals of the stationary linear relations on extracted limits."""

    a_residuals: np.ndarray | None = None
    a_max: float | None = None
    b_residuals: np.ndarray | None = None
    b_max: float | None = None
    b_vs_a: np.ndarray | None = None
    b_vs_a_max: float | None = None


def relation_residuals(
    env: EnvironmentSpec,
    limits: LimitCoefficients,
    k_max: int | None = None,
) -> ResidualReport:
    """Evaluate the limit relations as residual checks.

    For the a grid, each (k, j) with k < K gives one equation (the stationary
    balance of the lattice system); the system is k equations in k+1 unknowns
    per level, so it is only usable as a check, never as a solver.  For the b
    vector the analogous balance is checked for j < J.  When both a and b are
    present, b_j is also compared with the column sums of a.
    """
    report = ResidualReport()
    if limits.a is not None:
        K = limits.K
        kmax = min(k_max or K - 1, K - 1)
        a = limits.a
        res = np.zeros((kmax + 1, kmax + 1))
        for k in range(1, kmax + 1):
            d_k = d_rate(env, k)
            for j in range(1, k + 1):
                _, e_kj, f_j, f_kj = ode_coeffs(env, k, j)
                lhs = (j + 1) * j * a[k + 1, j + 1] + e_kj * a[k + 1, j]
                rhs = d_k * a[k, j]
                if k >= 2 and j >= 2:
                    rhs -= f_j * a[k - 1, j - 1]
                if j <= k - 1:
                    rhs -= f_kj * a[k - 1, j]
                if k % 2 == 0:
                    half = k // 2
                    rhs -= sum(tau(env, l, j) * a[half, l] for l in range(1, min(j, half) + 1))
                res[k, j] = abs(lhs - rhs)
        report.a_residuals = res
        report.a_max = float(res.max())
    if limits.b is not None:
        J = limits.J
        b = limits.b
        res_b = np.zeros(J)
        for j in range(1, J):
            d_j = d_rate(env, j)
            f_j = (j - 1) * env.sigma
            prev = b[j - 1] if j >= 2 else 0.0
            s = sum(tau(env, l, j) * b[l] for l in range(1, j + 2))
            res_b[j] = abs(-d_j * b[j] + f_j * prev + s)
        report.b_residuals = res_b
        report.b_max = float(res_b.max())
    if limits.a is not None and limits.b is not None:
        J = min(limits.J, limits.K)
        diff = np.zeros(J + 1)
        for j in range(1, J + 1):
            diff[j] = abs(limits.b[j] - limits.a[j:, j].sum())
        report.b_vs_a = diff
        report.b_vs_a_max = float(diff.max())
    return report
