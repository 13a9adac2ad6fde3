"""Monte Carlo simulation of the enlarged ancestral selection graph.

The enlarged ASG is the branching-coalescing particle system in which every
line splits at each environmental jump (the jump size is kept as the weight
of the branching), single branchings carry weight -1, and pairs coalesce at
rate 2.  Alongside the line set, the simulator maintains the encoding
function F: a signed real-valued function on nonempty subsets of the current
lines that compresses the combinatorics of the whole graph.  F starts as the
indicator of the first i lines and is updated at every event:

* multiple branching with weight S: every line L splits into a continuing
  son C_L and an incoming son I_L, and for each subset A of the new lines
  with parent set P(A),

      F'(A) = F(P(A)) * (1 + S*[S<0])^alpha * (S*[S>0])^beta * (-S)^gamma,

  where alpha counts continuing lines in A whose incoming brother is outside
  A, beta incoming lines in A whose continuing brother is outside A, and
  gamma brother pairs fully inside A (0^0 = 1);
* single branching of line L: F'(A) = F(P(A)) if A contains both sons of L
  or neither, else 0;
* coalescence: F'(A) sums F over the subsets whose image under the merge is
  A.

Sums of F recover everything of interest: the full sum stays 1, partial sums
over subsets of any B stay in [0, 1], sum_A F(A) x^|A| is the conditional
moment polynomial, and averages of indicator-restricted sums estimate the
duality coefficients.  F is stored sparsely (only nonzero entries); support
at most triples per branching and collapses at coalescences.

Estimators freeze a state whose next branching would push the line count
past ``cap`` and exclude such runs, reporting the excluded fraction (the
exclusion bias is bounded by the stationary tail beyond the cap).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .environment import EnvironmentSpec, total_mass


@dataclass(frozen=True)
class EventRecord:
    """One transition, with enough identity data to replay it either way.

    kind is "coalescence" (args = (a, b, merged)), "single"
    (args = (parent, cont, inc), weight -1), or "multiple"
    (args = tuple of (parent, cont, inc) triples, weight = jump size).
    """

    time: float
    kind: str
    args: tuple
    weight: float


@dataclass
class EASGState:
    lines: list[int]
    F: dict[frozenset[int], float]
    t: float
    cap: int
    start_m: int
    start_i: int
    log: list[EventRecord] = field(default_factory=list)
    overflowed: bool = False
    _next_id: int = 0

    @property
    def n(self) -> int:
        return len(self.lines)

    def fresh_id(self) -> int:
        out = self._next_id
        self._next_id += 1
        return out


def init(m: int, i: int, cap: int = 20) -> EASGState:
    """Start state: m ordered lines, F the indicator of the first i of them."""
    if not 1 <= i <= m <= cap:
        raise ValueError("need 1 <= i <= m <= cap")
    state = EASGState(
        lines=list(range(m)),
        F={frozenset(range(i)): 1.0},
        t=0.0,
        cap=cap,
        start_m=m,
        start_i=i,
        _next_id=m,
    )
    return state


def apply_coalescence(state: EASGState, a: int, b: int, merged: int | None = None) -> EASGState:
    """Merge lines a and b; F sums over preimages of each new subset."""
    if a == b or a not in state.lines or b not in state.lines:
        raise ValueError("coalescence needs two distinct existing lines")
    if merged is None:
        merged = state.fresh_id()
    pair = {a, b}
    new_f: dict[frozenset[int], float] = {}
    for subset, value in state.F.items():
        if subset & pair:
            subset = (subset - pair) | {merged}
        key = frozenset(subset)
        new_f[key] = new_f.get(key, 0.0) + value
    state.F = {k: v for k, v in new_f.items() if v != 0.0}
    state.lines = [l for l in state.lines if l not in pair] + [merged]
    state.log.append(EventRecord(state.t, "coalescence", (a, b, merged), 0.0))
    return state


def apply_single_branching(
    state: EASGState, line: int, sons: tuple[int, int] | None = None
) -> EASGState:
    """Split one line; subsets containing exactly one son are zeroed."""
    if line not in state.lines:
        raise ValueError("unknown line")
    if state.n + 1 > state.cap:
        raise ValueError("single branching would exceed cap")
    if sons is None:
        sons = (state.fresh_id(), state.fresh_id())
    cont, inc = sons
    both = frozenset((cont, inc))
    new_f: dict[frozenset[int], float] = {}
    for subset, value in state.F.items():
        if line in subset:
            subset = (subset - {line}) | both
        new_f[frozenset(subset)] = value
    state.F = new_f
    state.lines = [l for l in state.lines if l != line] + [cont, inc]
    state.log.append(EventRecord(state.t, "single", (line, cont, inc), -1.0))
    return state


def apply_multiple_branching(
    state: EASGState, weight: float, pairs: tuple[tuple[int, int, int], ...] | None = None
) -> EASGState:
    """Split every line; F spreads over the 3^|B| son subsets of each parent set B.

    For weight S < 0 the incoming-only choice has factor S*[S>0] = 0 and is
    skipped, leaving 2^|B| subsets.
    """
    if 2 * state.n > state.cap:
        raise ValueError("multiple branching would exceed cap")
    s = weight
    if not (-1.0 < s < 1.0) or s == 0.0:
        raise ValueError("weight must lie in (-1, 1) \\ {0}")
    if pairs is None:
        pairs = tuple((line, state.fresh_id(), state.fresh_id()) for line in state.lines)
    sons = {parent: (cont, inc) for parent, cont, inc in pairs}
    if s < 0.0:
        # choices per parent line: continuing-only, or the full brother pair
        def options(parent):
            cont, inc = sons[parent]
            return (((cont,), 1.0 + s), ((cont, inc), -s))
    else:
        def options(parent):
            cont, inc = sons[parent]
            return (((cont,), 1.0), ((inc,), s), ((cont, inc), -s))

    new_f: dict[frozenset[int], float] = {}
    for subset, value in state.F.items():
        for combo in product(*(options(parent) for parent in sorted(subset))):
            ids: list[int] = []
            factor = value
            for chosen, f in combo:
                ids.extend(chosen)
                factor *= f
            new_f[frozenset(ids)] = factor
    state.F = new_f
    new_lines: list[int] = []
    for parent, cont, inc in pairs:
        new_lines.extend((cont, inc))
    state.lines = new_lines
    state.log.append(EventRecord(state.t, "multiple", pairs, s))
    return state


def _total_rate(state: EASGState, env: EnvironmentSpec) -> float:
    n = state.n
    return n * (n - 1) + n * env.sigma + total_mass(env)


def _draw_and_apply(
    state: EASGState, env: EnvironmentSpec, rng: np.random.Generator, lam: float
) -> None:
    """Pick one event at the current time and apply it (or freeze on overflow)."""
    n = state.n
    u = rng.uniform(0.0, n * (n - 1) + n * env.sigma + lam)
    if u < n * (n - 1):
        i1 = int(rng.integers(n))
        i2 = int(rng.integers(n - 1))
        if i2 >= i1:
            i2 += 1
        apply_coalescence(state, state.lines[i1], state.lines[i2])
    elif u < n * (n - 1) + n * env.sigma:
        if n + 1 > state.cap:
            state.overflowed = True
            return
        apply_single_branching(state, state.lines[int(rng.integers(n))])
    else:
        v = rng.uniform(0.0, lam)
        acc = 0.0
        z = env.atoms[-1][0]
        for zi, wi in env.atoms:
            acc += wi
            if v < acc:
                z = zi
                break
        if 2 * n > state.cap:
            state.overflowed = True
            return
        apply_multiple_branching(state, z)


def step(state: EASGState, env: EnvironmentSpec, rng: np.random.Generator) -> EASGState:
    """Advance by one event: exponential waiting time, then the event itself."""
    if state.overflowed:
        raise ValueError("state is frozen after overflow")
    rate = _total_rate(state, env)
    if rate == 0.0:
        raise ValueError("no event possible (single line, no selection, no jumps)")
    state.t += rng.exponential(1.0 / rate)
    _draw_and_apply(state, env, rng, total_mass(env))
    return state


def run_to(
    env: EnvironmentSpec,
    m: int,
    i: int,
    T: float,
    cap: int = 20,
    rng: np.random.Generator | int | None = None,
) -> EASGState:
    """Simulate on [0, T]; the returned state is read at time T exactly
    (between events), or frozen at the first overflow."""
    if T < 0.0:
        raise ValueError("T must be >= 0")
    if isinstance(rng, (int, np.integer)) or rng is None:
        rng = np.random.default_rng(rng)
    state = init(m, i, cap)
    lam = total_mass(env)
    sigma = env.sigma
    while True:
        n = state.n
        rate = n * (n - 1) + n * sigma + lam
        if rate == 0.0:
            state.t = T
            return state
        wait = rng.exponential(1.0 / rate)
        if state.t + wait >= T:
            state.t = T
            return state
        state.t += wait
        _draw_and_apply(state, env, rng, lam)
        if state.overflowed:
            return state


def f_sum(state: EASGState) -> float:
    """Sum of F over all subsets; stays at 1 up to floating error."""
    return float(sum(state.F.values()))


def partial_sum(state: EASGState, B: frozenset[int]) -> float:
    """Sum of F over subsets of B; lies in [0, 1] for every B."""
    return float(sum(v for s, v in state.F.items() if s <= B))


def size_sums(state: EASGState) -> dict[int, float]:
    """Sums of F over subsets of each cardinality."""
    out: dict[int, float] = {}
    for subset, value in state.F.items():
        out[len(subset)] = out.get(len(subset), 0.0) + value
    return out


def graph_polynomial(state: EASGState, x: float) -> float:
    """sum_A F(A) x^|A|; lies in [0, 1] up to floating error."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    return float(sum(v * x ** len(s) for s, v in state.F.items()))


def assign_types(state: EASGState, x: float, rng: np.random.Generator) -> bool:
    """One draw of the type-assignment procedure on the recorded graph.

    Terminal lines get iid types (0 with probability x); types then propagate
    backward through the event log: through a coalescence both parents copy
    the merged line's type; at a branching an independent Bernoulli(|weight|)
    marks it real, and a real branching favoring type f passes f to the
    branching line iff the incoming son has type f, otherwise (and always for
    virtual branchings) the continuing son's type passes.  Single branchings
    have weight -1: always real, favoring type 1.  Returns True iff the first
    i initial lines all end with type 0.  Averaging over draws on a fixed
    graph estimates graph_polynomial(state, x).
    """
    types: dict[int, int] = {}
    for line in sorted(state.lines):
        types[line] = 0 if rng.uniform() < x else 1
    for event in reversed(state.log):
        if event.kind == "coalescence":
            a, b, merged = event.args
            types[a] = types[b] = types[merged]
        elif event.kind == "single":
            parent, cont, inc = event.args
            types[parent] = 1 if types[inc] == 1 else types[cont]
        else:
            s = event.weight
            favored = 0 if s > 0 else 1
            for parent, cont, inc in event.args:
                real = rng.uniform() < abs(s)
                if real and types[inc] == favored:
                    types[parent] = favored
                else:
                    types[parent] = types[cont]
    return all(types[line] == 0 for line in range(state.start_i))


@dataclass
class DualityEstimates:
    """Sample means and standard errors of the duality coefficients.

    r_mean[k, j] estimates the line-count-k, set-size-j coefficient at time
    T; q_mean[j] the set-size-j coefficient unconditioned on line count.
    Overflowed runs are excluded; their fraction is the (unquantified here)
    exclusion bias knob and should stay well below the target tolerances.
    """

    r_mean: np.ndarray
    r_se: np.ndarray
    q_mean: np.ndarray
    q_se: np.ndarray
    n_used: int
    overflow_fraction: float


def estimate_duality_coeffs(
    env: EnvironmentSpec,
    m: int,
    i: int,
    T: float,
    n_samples: int,
    seed: int,
    cap: int = 20,
) -> DualityEstimates:
    """Average indicator-restricted F sums over independent graphs."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    r_sum = np.zeros((cap + 1, cap + 1))
    r_sumsq = np.zeros((cap + 1, cap + 1))
    q_sum = np.zeros(cap + 1)
    q_sumsq = np.zeros(cap + 1)
    n_used = 0
    n_overflow = 0
    for _ in range(n_samples):
        state = run_to(env, m, i, T, cap=cap, rng=rng)
        if state.overflowed:
            n_overflow += 1
            continue
        n_used += 1
        k = state.n
        row = np.zeros(cap + 1)
        for j, value in size_sums(state).items():
            row[j] = value
        r_sum[k] += row
        r_sumsq[k] += row**2
        q_sum += row
        q_sumsq += row**2
    if n_used == 0:
        raise RuntimeError("every run overflowed; raise the cap")
    r_mean = r_sum / n_used
    q_mean = q_sum / n_used
    r_var = np.maximum(r_sumsq / n_used - r_mean**2, 0.0)
    q_var = np.maximum(q_sumsq / n_used - q_mean**2, 0.0)
    return DualityEstimates(
        r_mean=r_mean,
        r_se=np.sqrt(r_var / n_used),
        q_mean=q_mean,
        q_se=np.sqrt(q_var / n_used),
        n_used=n_used,
        overflow_fraction=n_overflow / n_samples,
    )


def _replay(events: list[EventRecord], lines: list[int], F: dict[frozenset[int], float],
            cap: int, m: int, i: int) -> EASGState:
    state = EASGState(lines=list(lines), F=dict(F), t=0.0, cap=cap, start_m=m, start_i=i)
    for event in events:
        if event.kind == "coalescence":
            apply_coalescence(state, *event.args)
        elif event.kind == "single":
            parent, cont, inc = event.args
            apply_single_branching(state, parent, sons=(cont, inc))
        else:
            apply_multiple_branching(state, event.weight, pairs=event.args)
    return state


def compose_check(state: EASGState, split_time: float) -> float:
    """Verify the branching property of F across a time split.

    The graph after split_time, restarted from the indicator of each subset B
    present at the split, defines transfer coefficients f(B, .); the direct
    F must equal sum_B F_split(B) f(B, A) for every A.  Returns the maximum
    absolute discrepancy (an exact identity, so floating noise only).
    """
    prefix = [e for e in state.log if e.time <= split_time]
    suffix = [e for e in state.log if e.time > split_time]
    base = init(state.start_m, state.start_i, cap=state.cap)
    mid = _replay(prefix, base.lines, base.F, base.cap, state.start_m, state.start_i)
    mid_lines = sorted(mid.lines)
    composite: dict[frozenset[int], float] = {}
    n_mid = len(mid_lines)
    for mask in range(1, 2**n_mid):
        B = frozenset(mid_lines[p] for p in range(n_mid) if mask >> p & 1)
        weight = mid.F.get(B, 0.0)
        if weight == 0.0:
            continue
        transfer = _replay(suffix, mid.lines, {B: 1.0}, base.cap, state.start_m, state.start_i)
        for A, value in transfer.F.items():
            composite[A] = composite.get(A, 0.0) + weight * value
    keys = set(composite) | set(state.F)
    return max(abs(composite.get(k, 0.0) - state.F.get(k, 0.0)) for k in keys)


def format_event_log(state: EASGState) -> str:
    """Line-oriented dump: `time kind args weight` per event."""
    rows = []
    for e in state.log:
        if e.kind == "multiple":
            args = ";".join(f"{p}>{c},{i}" for p, c, i in e.args)
        elif e.kind == "coalescence":
            a, b, merged = e.args
            args = f"{a}+{b}>{merged}"
        else:
            p, c, i = e.args
            args = f"{p}>{c},{i}"
        rows.append(f"{e.time:.9g} {e.kind} {args} {e.weight:.9g}")
    return "\n".join(rows)
