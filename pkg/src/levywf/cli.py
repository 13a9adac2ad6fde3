"""Command-line front end.

Subcommands: ``pi`` (stationary distribution table), ``coeffs`` (coefficient
dumps from both routes with residual diagnostics), ``fixation`` (h(x) curve
as CSV, including the four-curve reference dataset), ``simulate`` (Monte
Carlo estimators over either the path simulator or the ancestral graph), and
``validate`` (the acceptance suite).

Exit codes: 0 success, 1 validation failure, 2 usage error.  All output is
deterministic given the flags and seed; floats are printed with 9
significant digits.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager

import numpy as np

from . import easg
from .environment import EnvironmentSpec, parse_atom
from .fixation import (
    DivergenceError,
    build_series,
    closed_form_no_env,
    h_series,
    normalize_b,
    write_curve_csv,
)
from .odes import (
    LimitCoefficients,
    b_ratios,
    extract_b_ode,
    integrate_q,
    integrate_r,
    relation_residuals,
)
from .sde import PathConfig, estimate_fixation, estimate_moment, simulate_path
from .stationary import CutoffTooSmallError, compute_pi
from .validation import run_all


def _add_env_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sigma", type=float, default=0.0, help="drift magnitude (>= 0)")
    parser.add_argument(
        "--atom",
        action="append",
        default=[],
        metavar="Z:W",
        help="jump atom as size:weight, repeatable; size in (-1,1)\\{0}, weight > 0 "
        "(use --atom=-0.3:0.7 for negative sizes)",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="worker cap (current estimators run single-threaded)")


def _env_from(args: argparse.Namespace, parser: argparse.ArgumentParser) -> EnvironmentSpec:
    try:
        atoms = tuple(parse_atom(a) for a in args.atom)
        return EnvironmentSpec(sigma=args.sigma, atoms=atoms)
    except ValueError as exc:
        parser.error(str(exc))


@contextmanager
def _open_out(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _env_comment(env: EnvironmentSpec) -> str:
    atoms = ",".join(f"{z:.9g}:{w:.9g}" for z, w in env.atoms)
    return f"# params: sigma={env.sigma:.9g} atoms={atoms or 'none'}"


def cmd_pi(args, parser) -> int:
    env = _env_from(args, parser)
    try:
        sd = compute_pi(env, args.K)
    except CutoffTooSmallError as exc:
        parser.error(f"{exc} (try --K {4 * args.K})")
    ratios = sd.pi / sd.pi[1]
    with _open_out(args.out) as fh:
        fh.write("k,pi,ratio\n")
        for k in range(1, args.K + 1):
            fh.write(f"{k},{sd.pi[k]:.9g},{ratios[k]:.9g}\n")
    lo, hi = sd.pi1_bracket
    print(
        f"pi(1) in [{lo:.9g}, {hi:.9g}] (width {hi - lo:.3g}); "
        f"tail beyond K={args.K} bounded by {sd.tail_upper:.3g}",
        file=sys.stderr,
    )
    return 0


def cmd_coeffs(args, parser) -> int:
    env = _env_from(args, parser)
    with _open_out(args.out) as fh:
        fh.write(_env_comment(env) + "\n")
        ratios = b_ratios(env, max(args.j_sum + 2, args.J + 2))
        try:
            norm = normalize_b(ratios, args.j_sum)
            fh.write(f"# b (ratio recursion, normalized to sum 1), J_sum={args.j_sum}\n")
            for j in range(1, 8):
                fh.write(f"{j} {norm.b[j]:.9g}\n")
        except DivergenceError as exc:
            fh.write(f"# b (ratio recursion): DIVERGENT - {exc}\n")
        lim_b = extract_b_ode(env, args.J)
        diag = lim_b.diagnostics
        fh.write(
            f"# b (ode limits), J={args.J} "
            f"(t={diag['t_stabilized']:.9g}, window_delta={diag['window_delta']:.3g}, "
            f"converged={diag['converged']})\n"
        )
        for j in range(1, args.J + 1):
            fh.write(f"{j} {lim_b.b[j]:.9g}\n")
        if not args.skip_a:
            from .odes import extract_a

            lim_a = extract_a(env, args.K)
            fh.write(f"# a grid, K={args.K} (k j value)\n")
            for k in range(1, args.K + 1):
                for j in range(1, k + 1):
                    fh.write(f"{k} {j} {lim_a.a[k, j]:.9g}\n")
            both = LimitCoefficients(a=lim_a.a, b=lim_b.b, K=args.K, J=args.J)
            rep = relation_residuals(env, both, k_max=min(12, args.K - 1))
            fh.write(
                f"# residuals: relation={rep.a_max:.3g} b_recursion={rep.b_max:.3g} "
                f"b_vs_a={rep.b_vs_a_max:.3g}\n"
            )
    return 0


def cmd_fixation(args, parser) -> int:
    xs = np.linspace(0.0, 1.0, args.points)
    if args.figure4:
        for a in (0.0, 0.1, 0.2, 0.3):
            path = f"{args.figure4}_a{a:g}.csv"
            if a == 0.0:
                hs = closed_form_no_env(xs, 0.8)
                errs = np.zeros_like(xs)
            else:
                env = EnvironmentSpec(0.8, ((a, 0.8),))
                s = build_series(env, K=args.K)
                hs, err = h_series(xs, s)
                errs = np.full_like(xs, err)
            with open(path, "w", encoding="utf-8") as fh:
                write_curve_csv(fh, xs, hs, errs)
            print(f"wrote {path}", file=sys.stderr)
        return 0
    env = _env_from(args, parser)
    s = build_series(env, K=args.K)
    hs, err = h_series(xs, s)
    with _open_out(args.out) as fh:
        write_curve_csv(fh, xs, hs, np.full_like(xs, err))
    return 0


def cmd_simulate(args, parser) -> int:
    env = _env_from(args, parser)
    if args.mode == "sde":
        cfg = PathConfig(x0=args.x0, t_max=args.t_max, dt=args.dt, seed=args.seed)
        if args.dump_path:
            ts, vals = simulate_path(env, cfg, stride=args.stride)
            with open(args.dump_path, "w", encoding="utf-8") as fh:
                fh.write("t,x\n")
                for t, v in zip(ts, vals):
                    fh.write(f"{t:.9g},{v:.9g}\n")
            print(f"wrote {args.dump_path}", file=sys.stderr)
        if args.moment:
            est = estimate_moment(env, args.x0, args.moment, args.T, args.paths, cfg,
                                  seeds=args.seed)
            print(f"E[X(T)^{args.moment}] at T={args.T:.9g}, x0={args.x0:.9g}: "
                  f"{est.m_hat:.9g} +/- {est.std_error:.9g}")
        else:
            est = estimate_fixation(env, args.x0, args.paths, cfg, seeds=args.seed)
            print(f"h({args.x0:.9g}) = {est.h_hat:.9g} +/- {est.std_error:.9g} "
                  f"(undecided fraction {est.undecided_fraction:.9g})")
        return 0
    # ancestral-graph mode: estimates next to the deterministic route
    if args.dump_events:
        state = easg.run_to(env, args.m, args.i, args.T, cap=args.cap, rng=args.seed)
        with open(args.dump_events, "w", encoding="utf-8") as fh:
            fh.write(easg.format_event_log(state) + "\n")
        print(f"wrote {args.dump_events}", file=sys.stderr)
    est = easg.estimate_duality_coeffs(env, args.m, args.i, args.T, args.samples,
                                       seed=args.seed, cap=args.cap)
    K = max(32, args.cap)
    grid = integrate_r(env, K, args.T, m=args.m, i=args.i)
    qvec = integrate_q(env, max(16, args.cap), args.T, i=args.i)
    print(f"# runs used {est.n_used}, overflow fraction {est.overflow_fraction:.9g}")
    print("kind k j mc se ode")
    for k in range(1, args.cap + 1):
        for j in range(1, k + 1):
            if abs(est.r_mean[k, j]) < 1e-4 and abs(grid.values[k, j]) < 1e-4:
                continue
            print(f"R {k} {j} {est.r_mean[k, j]:.9g} {est.r_se[k, j]:.9g} "
                  f"{grid.values[k, j]:.9g}")
    for j in range(1, args.cap + 1):
        ref = qvec.values[j] if j < len(qvec.values) else 0.0
        if abs(est.q_mean[j]) < 1e-4 and abs(ref) < 1e-4:
            continue
        print(f"Q - {j} {est.q_mean[j]:.9g} {est.q_se[j]:.9g} {ref:.9g}")
    return 0


def cmd_validate(args, parser) -> int:
    numbers = None
    if args.only:
        numbers = [int(n) for n in args.only.split(",")]
    results = run_all(quick=args.quick, numbers=numbers)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[criterion {res.number:2d}] {status} ({res.seconds:6.1f}s) {res.name}: {res.measured}")
        failed += not res.passed
    print(f"{len(results) - failed}/{len(results)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levywf",
        description="Fixation probabilities for Wright-Fisher diffusions driven by a "
        "compound-Poisson selection environment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_pi = sub.add_parser("pi", help="stationary distribution of the line-counting process")
    _add_env_flags(p_pi)
    p_pi.add_argument("--K", type=int, default=64, help="truncation level")
    p_pi.add_argument("--out", default=None, help="CSV output path (default stdout)")

    p_co = sub.add_parser("coeffs", help="coefficient dumps from both routes")
    _add_env_flags(p_co)
    p_co.add_argument("--K", type=int, default=64)
    p_co.add_argument("--J", type=int, default=16)
    p_co.add_argument("--j-sum", type=int, default=14, dest="j_sum",
                      help="ratio-sum cutoff for the normalization heuristic")
    p_co.add_argument("--skip-a", action="store_true", help="skip the (slow) lattice grid")
    p_co.add_argument("--out", default=None)

    p_fx = sub.add_parser("fixation", help="h(x) curve as CSV (x,h,err)")
    _add_env_flags(p_fx)
    p_fx.add_argument("--K", type=int, default=64)
    p_fx.add_argument("--points", type=int, default=201)
    p_fx.add_argument("--out", default=None)
    p_fx.add_argument("--figure4", metavar="PREFIX", default=None,
                      help="emit the four reference curves (sigma=0.8, lambda=0.8, "
                      "a in {0,0.1,0.2,0.3}) to PREFIX_a*.csv")

    p_sim = sub.add_parser("simulate", help="Monte Carlo estimators")
    _add_env_flags(p_sim)
    p_sim.add_argument("--mode", choices=("sde", "easg"), required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--x0", type=float, default=0.5)
    p_sim.add_argument("--paths", type=int, default=10000)
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--t-max", type=float, default=200.0, dest="t_max")
    p_sim.add_argument("--T", type=float, default=1.0, help="horizon for moments/graph runs")
    p_sim.add_argument("--moment", type=int, default=0,
                       help="estimate E[X(T)^l] for this l instead of fixation")
    p_sim.add_argument("--samples", type=int, default=20000, help="graph-mode run count")
    p_sim.add_argument("--m", type=int, default=1)
    p_sim.add_argument("--i", type=int, default=1)
    p_sim.add_argument("--cap", type=int, default=20)
    p_sim.add_argument("--dump-path", default=None, help="write one path as CSV (t,x)")
    p_sim.add_argument("--stride", type=int, default=100)
    p_sim.add_argument("--dump-events", default=None, help="write one graph's event log")

    p_val = sub.add_parser("validate", help="run the acceptance criteria")
    p_val.add_argument("--quick", action="store_true", help="smaller Monte Carlo samples")
    p_val.add_argument("--only", default=None, help="comma-separated criterion numbers")
    p_val.add_argument("--threads", type=int, default=1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "pi": cmd_pi,
        "coeffs": cmd_coeffs,
        "fixation": cmd_fixation,
        "simulate": cmd_simulate,
        "validate": cmd_validate,
    }
    return handlers[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
