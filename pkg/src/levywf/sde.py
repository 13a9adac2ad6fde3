"""Path simulation of the jump-diffusion itself.

Between environmental jumps the type-0 frequency follows the Wright-Fisher
SDE with drift -sigma x(1-x) and diffusion sqrt(2x(1-x)); at each jump time
of the compound-Poisson environment the frequency moves by x(1-x)z.  Paths
are generated by Euler-Maruyama with clamping to [0, 1]: the scheme takes
steps of at most dt, splitting a step exactly at any jump time inside it, so
jumps are applied at their sampled times, not rounded to the grid.  The
states 0 and 1 are exactly absorbing (every increment vanishes there).

Estimators are vectorized across paths and may fan out over independent
seed-indexed streams; results are deterministic given (seed list, path
split).  These Monte Carlo values are the model-level cross-check for the
deterministic coefficient pipeline (moments against the lattice
coefficients, fixation fractions against the series).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .environment import EnvironmentSpec, total_mass


@dataclass(frozen=True)
class PathConfig:
    """Path-level knobs; estimators take x0 and seeds explicitly."""

    x0: float = 0.5
    t_max: float = 200.0
    dt: float = 1e-3
    boundary_tol: float = 1e-6
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.x0 <= 1.0:
            raise ValueError("x0 must lie in [0, 1]")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 < self.boundary_tol < 0.5:
            raise ValueError("boundary_tol must lie in (0, 0.5)")


@dataclass(frozen=True)
class JumpSchedule:
    """Jump times (strictly increasing) and sizes on [0, t_max]."""

    times: np.ndarray
    sizes: np.ndarray


def sample_jump_schedule(
    env: EnvironmentSpec, t_max: float, rng: np.random.Generator
) -> JumpSchedule:
    """Poisson number of jumps, iid uniform times (sorted), iid atom sizes."""
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    lam = total_mass(env)
    if lam == 0.0:
        return JumpSchedule(times=np.empty(0), sizes=np.empty(0))
    n = rng.poisson(lam * t_max)
    times = np.sort(rng.uniform(0.0, t_max, n))
    zs = np.array([z for z, _ in env.atoms])
    ws = np.array([w for _, w in env.atoms])
    sizes = rng.choice(zs, size=n, p=ws / lam)
    return JumpSchedule(times=times, sizes=sizes)


def _em_step(x: np.ndarray, h, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama step of length h (scalar or per-path array)."""
    noise = rng.standard_normal(x.shape)
    drift = -sigma * x * (1.0 - x)
    diff = np.sqrt(2.0 * x * (1.0 - x) * h)
    return np.clip(x + drift * h + diff * noise, 0.0, 1.0)


def evolve_between_jumps(x, duration: float, sigma: float, dt: float, rng) -> float | np.ndarray:
    """Run the jump-free diffusion for `duration` with steps of at most dt."""
    if duration < 0.0:
        raise ValueError("duration must be >= 0")
    xs = np.atleast_1d(np.asarray(x, dtype=float)).copy()
    n_full, rem = divmod(duration, dt)
    for _ in range(int(n_full)):
        xs = _em_step(xs, dt, sigma, rng)
    if rem > 0.0:
        xs = _em_step(xs, rem, sigma, rng)
    return float(xs[0]) if np.ndim(x) == 0 else xs


def apply_jump(x, z):
    """Frequency shift at an environmental jump: x + x(1-x)z."""
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("jump size must lie in (-1, 1)")
    return x + x * (1.0 - x) * z


def simulate_path(env: EnvironmentSpec, cfg: PathConfig, stride: int = 1):
    """One path recorded every `stride` grid steps; returns (times, values)."""
    rng = np.random.default_rng(cfg.seed)
    schedule = sample_jump_schedule(env, cfg.t_max, rng) if total_mass(env) else JumpSchedule(
        np.empty(0), np.empty(0)
    )
    ts, xs = [0.0], [cfg.x0]
    x = np.array([cfg.x0])
    t = 0.0
    k = 0
    n_steps = int(np.ceil(cfg.t_max / cfg.dt))
    for step in range(1, n_steps + 1):
        t_next = min(step * cfg.dt, cfg.t_max)
        while k < len(schedule.times) and schedule.times[k] <= t_next:
            x = _em_step(x, schedule.times[k] - t, env.sigma, rng)
            x = apply_jump(x, schedule.sizes[k])
            t = schedule.times[k]
            k += 1
        if t_next > t:
            x = _em_step(x, t_next - t, env.sigma, rng)
            t = t_next
        if step % stride == 0 or t_next >= cfg.t_max:
            ts.append(t)
            xs.append(float(x[0]))
    return np.array(ts), np.array(xs)


class _JumpCursor:
    """Per-path pointers into a ragged array of presampled jump schedules."""

    def __init__(self, env: EnvironmentSpec, n_paths: int, horizon: float, rng):
        lam = total_mass(env)
        if lam == 0.0:
            self.times = np.empty(0)
            self.sizes = np.empty(0)
            self.ptr = np.zeros(n_paths, dtype=np.int64)
            self.end = np.zeros(n_paths, dtype=np.int64)
            return
        counts = rng.poisson(lam * horizon, n_paths)
        offsets = np.concatenate(([0], np.cumsum(counts)))
        total = int(offsets[-1])
        flat = rng.uniform(0.0, horizon, total)
        # sort within each path's block
        order = np.argsort(np.repeat(np.arange(n_paths), counts) * (2.0 * horizon) + flat)
        self.times = flat[order]
        zs = np.array([z for z, _ in env.atoms])
        ws = np.array([w for _, w in env.atoms])
        self.sizes = rng.choice(zs, size=total, p=ws / lam)
        self.ptr = offsets[:-1].copy()
        self.end = offsets[1:].copy()

    def next_time(self) -> np.ndarray:
        out = np.full(self.ptr.shape, np.inf)
        has = self.ptr < self.end
        out[has] = self.times[self.ptr[has]]
        return out


def _advance_paths(env, x, active, cursor, t, h, rng):
    """Advance active paths from t to t+h, splitting steps at jump times."""
    idx = np.flatnonzero(active)
    local = np.full(idx.shape, t)
    while True:
        nxt = cursor.next_time()[idx]
        hit = nxt <= t + h
        if not hit.any():
            break
        sub = idx[hit]
        dtm = nxt[hit] - local[hit]
        x[sub] = _em_step(x[sub], dtm, env.sigma, rng)
        x[sub] = apply_jump(x[sub], cursor.sizes[cursor.ptr[sub]])
        local[hit] = nxt[hit]
        cursor.ptr[sub] += 1
    rem = (t + h) - local
    pos = rem > 0.0
    if pos.any():
        sub = idx[pos]
        x[sub] = _em_step(x[sub], rem[pos], env.sigma, rng)
    return x


@dataclass(frozen=True)
class FixationEstimate:
    h_hat: float
    std_error: float
    undecided_fraction: float
    n_paths: int


@dataclass(frozen=True)
class MomentEstimate:
    m_hat: float
    std_error: float


def _seed_list(seeds: int | Sequence[int]) -> list[int]:
    if isinstance(seeds, (int, np.integer)):
        return [int(seeds)]
    return [int(s) for s in seeds]


def _split_paths(n_paths: int, n_streams: int) -> list[int]:
    base, extra = divmod(n_paths, n_streams)
    return [base + (1 if s < extra else 0) for s in range(n_streams)]


def estimate_fixation(
    env: EnvironmentSpec,
    x0: float,
    n_paths: int,
    cfg: PathConfig | None = None,
    seeds: int | Sequence[int] = 0,
) -> FixationEstimate:
    """Fraction of paths absorbed at 1 among those that decide by t_max.

    A path is decided once it leaves (boundary_tol, 1 - boundary_tol); it is
    then frozen.  Undecided paths at t_max are excluded from the fraction and
    reported; near-boundary misclassification is O(boundary_tol).
    """
    cfg = cfg or PathConfig()
    seed_list = _seed_list(seeds)
    counts = _split_paths(n_paths, len(seed_list))
    n1 = n0 = und = 0
    for seed, count in zip(seed_list, counts):
        if count == 0:
            continue
        rng = np.random.default_rng(seed)
        x = np.full(count, float(x0))
        cursor = _JumpCursor(env, count, cfg.t_max, rng)
        lo, hi = cfg.boundary_tol, 1.0 - cfg.boundary_tol
        active = (x > lo) & (x < hi)
        t = 0.0
        while active.any() and t < cfg.t_max:
            h = min(cfg.dt, cfg.t_max - t)
            x = _advance_paths(env, x, active, cursor, t, h, rng)
            t += h
            active &= (x > lo) & (x < hi)
        n1 += int(np.sum(~active & (x >= hi)))
        n0 += int(np.sum(~active & (x <= lo)))
        und += int(active.sum())
    decided = n1 + n0
    if decided == 0:
        return FixationEstimate(float("nan"), float("nan"), 1.0, n_paths)
    p = n1 / decided
    se = float(np.sqrt(p * (1.0 - p) / decided))
    return FixationEstimate(p, se, und / n_paths, n_paths)


def estimate_moment(
    env: EnvironmentSpec,
    x0: float,
    l: int,
    T: float,
    n_paths: int,
    cfg: PathConfig | None = None,
    seeds: int | Sequence[int] = 0,
) -> MomentEstimate:
    """Sample mean of X(T)^l over paths started at x0."""
    if l < 1:
        raise ValueError("moment order must be >= 1")
    cfg = cfg or PathConfig()
    if T > cfg.t_max:
        raise ValueError("T must not exceed cfg.t_max")
    seed_list = _seed_list(seeds)
    counts = _split_paths(n_paths, len(seed_list))
    acc = acc2 = 0.0
    n_tot = 0
    for seed, count in zip(seed_list, counts):
        if count == 0:
            continue
        rng = np.random.default_rng(seed)
        x = np.full(count, float(x0))
        cursor = _JumpCursor(env, count, T, rng)
        always = np.ones(count, dtype=bool)
        t = 0.0
        n_steps = int(np.ceil(T / cfg.dt))
        for step in range(1, n_steps + 1):
            t_next = min(step * cfg.dt, T)
            x = _advance_paths(env, x, always, cursor, t, t_next - t, rng)
            t = t_next
        vals = x**l
        acc += float(vals.sum())
        acc2 += float((vals**2).sum())
        n_tot += count
    mean = acc / n_tot
    var = max(acc2 / n_tot - mean**2, 0.0)
    return MomentEstimate(mean, float(np.sqrt(var / n_tot)))
