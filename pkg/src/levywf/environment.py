"""Selection environment: drift plus a finite atomic jump measure.

The environment of the Wright-Fisher diffusion is a Levy process built from a
non-negative drift magnitude ``sigma`` (permanent selective advantage of type 1)
and a finite measure ``nu`` on (-1, 1) (punctual selective events; positive
jumps favor type 0, negative jumps favor type 1).  We restrict ``nu`` to
finitely many atoms, which makes every integral appearing in the coefficient
algebra an exact finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb


@dataclass(frozen=True)
class EnvironmentSpec:
    """Drift magnitude and atomic decomposition nu = sum_i w_i * delta_{z_i}.

    Atoms are (z, w) pairs with z in (-1, 1), z != 0 and w > 0.  An empty atom
    sequence means no random environment.  Atoms with z = 0 are rejected: a
    zero jump has no effect on the diffusion and would only add virtual
    branchings to the ancestral graph.
    """

    sigma: float
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.sigma >= 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        atoms = tuple((float(z), float(w)) for z, w in self.atoms)
        for z, w in atoms:
            if not (-1.0 < z < 1.0) or z == 0.0:
                raise ValueError(f"atom location must lie in (-1, 1) \\ {{0}}, got {z}")
            if not w > 0.0:
                raise ValueError(f"atom weight must be > 0, got {w}")
        object.__setattr__(self, "atoms", atoms)


def total_mass(env: EnvironmentSpec) -> float:
    """Total mass of the jump measure (the jump rate of the environment)."""
    return sum(w for _, w in env.atoms)


def moment(env: EnvironmentSpec, p: int) -> float:
    """p-th power moment of the jump measure, sum_i w_i * z_i**p."""
    if p < 0:
        raise ValueError("moment order must be >= 0")
    return sum(w * z**p for z, w in env.atoms)


def tau(env: EnvironmentSpec, i: int, j: int) -> float:
    """Branching coefficient coupling i lines to j lines.

    Four cases: i*(i-1) when j = i-1 (a coalescence), the binomial-weighted
    jump integral C(i, j-i) * sum w * (1+z)**(2i-j) * (-z)**(j-i) when
    i <= j <= 2i (a simultaneous branching), and 0 otherwise.  May be negative
    under two-sided selection.
    """
    if i < 1 or j < 1:
        raise ValueError("tau arguments must be >= 1")
    if j == i - 1:
        return float(i * (i - 1))
    if i <= j <= 2 * i:
        acc = 0.0
        for z, w in env.atoms:
            acc += w * (1.0 + z) ** (2 * i - j) * (-z) ** (j - i)
        return comb(i, j - i) * acc
    return 0.0


def ode_coeffs(env: EnvironmentSpec, k: int, j: int) -> tuple[float, float, float, float]:
    """Scalars (d_j, e_kj, f_j, f_kj) of the coefficient ODE systems.

    d_j is the total outflow rate of a j-line configuration, e_kj the
    coalescence inflow weight, f_j and f_kj the single-branching weights.
    f_kj = (k-1-j)*sigma is only meaningful under the guard j <= k-1.
    """
    if k < 1 or not 1 <= j <= k:
        raise ValueError(f"need k >= 1 and 1 <= j <= k, got k={k}, j={j}")
    lam = total_mass(env)
    d_j = lam + j * (j - 1) + j * env.sigma
    e_kj = (k + 1) * k - j * (j - 1)
    f_j = (j - 1) * env.sigma
    f_kj = (k - 1 - j) * env.sigma
    return d_j, e_kj, f_j, f_kj


def d_rate(env: EnvironmentSpec, j: int) -> float:
    """Outflow rate lambda + j(j-1) + j*sigma (the stiffest diagonal term)."""
    return total_mass(env) + j * (j - 1) + j * env.sigma


def parse_atom(text: str) -> tuple[float, float]:
    """Parse a 'z:w' atom flag into a (location, weight) pair."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"atom must look like 'z:w', got {text!r}")
    try:
        z, w = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ValueError(f"atom must look like 'z:w' with numeric fields, got {text!r}") from exc
    return z, w
