"""Fixation-probability evaluators.

Three routes to h(x), the probability that type 0 takes over from initial
frequency x:

* the series h(x) = sum_k P_k(x) over line counts, P_k(x) = sum_j a_j^k x^j,
  with a rigorous truncation bound given by the stationary tail beyond the
  grid cutoff;
* truncated Taylor sums sum_j b_j x^j, valid near x = 0 in general and
  globally when the coefficients are nonnegative (one-sided selection);
* the closed form (e^{sigma x} - 1)/(e^sigma - 1) for the environment-free
  case, used as a validation anchor.

The normalization step turns the exactly-computed ratios b_j/b_1 into
absolute coefficients by imposing sum_j b_j = 1.  That identity is a theorem
only for one-sided selection; for two-sided parameters it is applied only
when the ratio tail visibly decays, and a divergence error is raised
otherwise (the Taylor series is then unusable as a global representation).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import expm1

import numpy as np

from .environment import EnvironmentSpec
from .odes import StepPolicy, Stabilization, extract_a
from .stationary import tail_bound


@dataclass(frozen=True)
class SeriesRepresentation:
    """Grid of limit coefficients plus the tail bound that prices truncation."""

    a: np.ndarray
    K: int
    pi_tail: float


@dataclass(frozen=True)
class TaylorCoefficients:
    """Leading Taylor coefficients of h at 0; ``b`` is 1-based.

    mode is "absolute" (from the ODE limits), "ratio" (b_1 = 1, scale
    unknown), or "normalized" (rescaled so the coefficients sum to 1).
    """

    b: np.ndarray
    mode: str


class DivergenceError(ValueError):
    """Ratio tail does not decay; the coefficients carry the growth evidence."""

    def __init__(self, message: str, ratios: np.ndarray):
        super().__init__(message)
        self.ratios = ratios


def build_series(
    env: EnvironmentSpec,
    K: int = 64,
    step_policy: StepPolicy | None = None,
    stabilization: Stabilization | None = None,
) -> SeriesRepresentation:
    """Extract the limit grid and package it with its truncation bound."""
    lim = extract_a(env, K, step_policy=step_policy, stabilization=stabilization)
    return SeriesRepresentation(a=lim.a, K=K, pi_tail=tail_bound(env, K + 1))


def h_series(x, s: SeriesRepresentation):
    """Series value at x (scalar or array) and its truncation error bound.

    The error bound is the stationary tail beyond the grid cutoff, which is
    the sharp practical bound for this truncation.
    """
    xs = np.asarray(x, dtype=float)
    if np.any((xs < 0.0) | (xs > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    # finite double sum: collapse over k first, then evaluate in x
    coeffs = s.a[1:, :].sum(axis=0)  # coeffs[j] multiplies x^j; coeffs[0] = 0
    value = np.polynomial.polynomial.polyval(xs, coeffs)
    if np.ndim(x) == 0:
        return float(value), s.pi_tail
    return value, s.pi_tail


def h_taylor(x, b: TaylorCoefficients, n: int) -> float:
    """Partial Taylor sum of order n at x; needs an absolute scale."""
    if b.mode == "ratio":
        raise ValueError("ratio-mode coefficients have no absolute scale; normalize first")
    if n >= len(b.b):
        raise ValueError(f"order n={n} exceeds available coefficients ({len(b.b) - 1})")
    xs = np.asarray(x, dtype=float)
    coeffs = np.zeros(n + 1)
    coeffs[1:] = b.b[1 : n + 1]
    value = np.polynomial.polynomial.polyval(xs, coeffs)
    return float(value) if np.ndim(x) == 0 else value


def closed_form_no_env(x, sigma: float):
    """(e^{sigma x} - 1) / (e^sigma - 1); reduces to x as sigma -> 0."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    xs = np.asarray(x, dtype=float)
    if sigma == 0.0:
        value = xs
    else:
        value = np.expm1(sigma * xs) / expm1(sigma)
    return float(value) if np.ndim(x) == 0 else value


def normalize_b(ratios: np.ndarray, J_sum: int, decay_threshold: float = 1e-8) -> TaylorCoefficients:
    """Rescale b ratios so the coefficients sum to 1 over the first J_sum.

    Accepts the rescaling only when the ratio tail has genuinely decayed:
    |ratio(J_sum)| below decay_threshold of the largest ratio and |ratio|
    decreasing over the last five indices.  Otherwise raises DivergenceError
    carrying the ratios, since exploding ratios mean the Taylor series cannot
    be used globally.  (The default threshold is the tightest that admits all
    decaying reference parameter sets; two-sided ratio sequences can have a
    noise/growth floor just below 1e-8 of the peak.)
    """
    ratios = np.asarray(ratios, dtype=float)
    if J_sum < 6 or J_sum >= len(ratios):
        raise ValueError("need 6 <= J_sum < len(ratios)")
    scale = np.abs(ratios[1 : J_sum + 1]).max()
    tail = np.abs(ratios[J_sum - 4 : J_sum + 1])
    decaying = np.all(np.diff(tail) < 0.0) or np.all(tail == 0.0)
    if not (abs(ratios[J_sum]) < decay_threshold * scale and decaying):
        raise DivergenceError(
            f"ratio tail does not decay (|ratio({J_sum})| = {abs(ratios[J_sum]):.3g} "
            f"vs max {scale:.3g}); Taylor normalization is unusable here",
            ratios,
        )
    total = ratios[1 : J_sum + 1].sum()
    b = np.zeros(J_sum + 1)
    b[1:] = ratios[1 : J_sum + 1] / total
    return TaylorCoefficients(b=b, mode="normalized")


def write_curve_csv(fh, xs: np.ndarray, hs: np.ndarray, errs: np.ndarray) -> None:
    """Write an (x, h, err) table with 9 significant digits per value."""
    fh.write("x,h,err\n")
    for x, h, e in zip(xs, hs, errs):
        fh.write(f"{x:.9g},{h:.9g},{e:.9g}\n")
