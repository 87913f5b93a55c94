"""Closed-form stability quantities for the baseline and buffered controllers.

Two certificates are computed.  For the baseline loop, the expected one-step
Lyapunov factor

    gamma = (1 - q) alpha + q (p0 alpha + (1 - p0) rho)

certifies stability when gamma < 1.  For the buffered controller the relevant
quantity is the per-cycle factor over one excursion of the effective buffer
length away from zero,

    omega = alpha * sum_j rho**(j-1) Pr{return time = j},

where the return-time pmf follows from first-return analysis of the buffer
length chain: Pr{j} = r for j = 1 and r * theta^T G**(j-2) e1 for j >= 2, with
r = 1 - q + p0 q, theta = q (p1, ..., pL), and G the transition matrix among
lengths 1..L (escape to 0 excluded).  Summing the geometric series gives the
closed form omega = alpha r (1 + rho theta^T (I - rho G)^{-1} e1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .domain import PlantSpec, StochasticEnv, validate_env

__all__ = [
    "AnalysisResult",
    "LambdaChain",
    "MAX_CAPACITY",
    "analyze",
    "anytime_contraction",
    "anytime_contraction_series",
    "anytime_mean_bound",
    "baseline_contraction",
    "baseline_mean_bound",
    "boundary_alpha_anytime",
    "boundary_alpha_baseline",
    "boundary_curves",
    "build_lambda_chain",
    "default_series_length",
    "return_time_pmf",
    "return_time_pmf_truncated",
    "return_time_pmf_upto",
]

#: Largest buffer capacity the dense linear solves are sized for.
MAX_CAPACITY = 64


@dataclass(frozen=True, eq=False)
class LambdaChain:
    """First-return structure of the effective-buffer-length chain.

    ``g[l-1, j-1]`` is the probability of moving from length l to length j in
    one step between resets; the escape to 0 (possible only from length 1) is
    carried by ``return1 = 1 - q + p0 q``, and ``theta`` is the entry
    distribution q * (p1, ..., pL) out of length 0.  Row 1 of ``g`` sums to
    q (1 - p0); rows l >= 2 sum to 1.
    """

    g: np.ndarray
    theta: np.ndarray
    return1: float

    @property
    def capacity(self) -> int:
        return self.g.shape[0]

    @property
    def e1(self) -> np.ndarray:
        v = np.zeros(self.capacity)
        v[0] = 1.0
        return v


class SeriesResult(NamedTuple):
    """Truncated series value plus a rigorous bound on the discarded tail."""

    value: float
    tail_bound: float


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    """Bundle of stability quantities for one (plant, env) pair."""

    gamma: float
    omega: float
    delta_pmf: np.ndarray  # return-time pmf over j = 1..len
    delta_mass: float
    bounds: dict[str, float]  # asymptotic tails of the two mean bounds


def _require_valid(env: StochasticEnv) -> None:
    errors = validate_env(env)
    if errors:
        raise ValueError("invalid environment: " + "; ".join(errors))
    if env.capacity > MAX_CAPACITY:
        raise ValueError(f"capacity {env.capacity} exceeds supported maximum {MAX_CAPACITY}")


def build_lambda_chain(env: StochasticEnv) -> LambdaChain:
    """Transition structure of the buffer-length chain between resets.

    From length l, a step granting j >= 1 fresh evaluations jumps to j; a step
    granting none counts down to l - 1, so that column also absorbs the
    no-data and no-processor mass.
    """
    _require_valid(env)
    q = env.q
    p = np.asarray(env.p, dtype=float)
    cap = env.capacity
    g = np.empty((cap, cap))
    for row, length in enumerate(range(1, cap + 1)):
        g[row] = q * p[1:]
        if length >= 2:
            g[row, length - 2] = 1.0 - q + (p[0] + p[length - 1]) * q
    return LambdaChain(g=g, theta=q * p[1:], return1=1.0 - q + p[0] * q)


def return_time_pmf(chain: LambdaChain, j: int) -> float:
    """Probability that the buffer length first returns to zero after j steps."""
    if j < 1:
        raise ValueError("return times start at j = 1")
    if j == 1:
        return chain.return1
    v = chain.e1
    for _ in range(j - 2):
        v = chain.g @ v
    return chain.return1 * float(chain.theta @ v)


def return_time_pmf_upto(chain: LambdaChain, j_max: int) -> np.ndarray:
    """Return-time pmf values for j = 1..j_max (entry i holds j = i + 1)."""
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    out = np.empty(j_max)
    out[0] = chain.return1
    v = chain.e1
    for j in range(2, j_max + 1):
        out[j - 1] = chain.return1 * float(chain.theta @ v)
        v = chain.g @ v
    return out


def return_time_pmf_truncated(
    chain: LambdaChain, mass_target: float = 1.0 - 1e-6, j_cap: int = 100_000
) -> np.ndarray:
    """Shortest pmf prefix whose mass reaches ``mass_target``."""
    if chain.return1 == 0.0:
        raise ValueError("the buffer length never returns to zero (q = 1 with p0 = 0)")
    values = [chain.return1]
    cum = chain.return1
    v = chain.e1
    j = 1
    while cum < mass_target and j < j_cap:
        j += 1
        val = chain.return1 * float(chain.theta @ v)
        values.append(val)
        cum += val
        v = chain.g @ v
    if cum < mass_target:
        raise RuntimeError(f"pmf mass {cum} still below {mass_target} after {j_cap} terms")
    return np.array(values)


def baseline_contraction(alpha: float, rho: float, q: float, p0: float) -> float:
    """Expected one-step Lyapunov factor (gamma) of the baseline loop."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")
    if alpha < rho:
        raise ValueError(f"alpha={alpha} must be >= rho={rho}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q={q} outside [0, 1]")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0={p0} outside [0, 1]")
    return (1.0 - q) * alpha + q * (p0 * alpha + (1.0 - p0) * rho)


def baseline_mean_bound(
    plant: PlantSpec,
    env: StochasticEnv,
    k: int,
    e_phi2_x0: float,
    d_cap: float | None = None,
) -> float:
    """Upper bound on E[phi1(|x(k)|)] for the baseline loop; needs gamma < 1.

    ``d_cap`` overrides the silent-region Lyapunov cap phi2(d).
    """
    gamma = baseline_contraction(plant.alpha, plant.rho, env.q, env.p[0])
    if gamma >= 1.0:
        raise ValueError(f"gamma={gamma} >= 1: no finite bound")
    cap = plant.phi2(plant.d) if d_cap is None else d_cap
    q, p0 = env.q, env.p[0]
    tail = q * (1.0 - p0) * (plant.alpha - plant.rho) * cap / (1.0 - gamma)
    return gamma**k * e_phi2_x0 + tail


def default_series_length(alpha: float, rho: float) -> int:
    """Smallest truncation with rigorous tail bound below 1e-12.

    Uses the coarse cap alpha * rho**J / (1 - rho) valid because the pmf mass
    never exceeds 1 (all row sums of G are <= 1).
    """
    if rho == 0.0:
        return 1
    j = math.log(1e-12 * (1.0 - rho) / alpha) / math.log(rho)
    return max(1, math.ceil(j))


def anytime_contraction_series(
    chain: LambdaChain, alpha: float, rho: float, j_max: int | None = None
) -> SeriesResult:
    """Per-cycle factor (omega) by direct series summation.

    Sums alpha * rho**(j-1) * pmf(j) for j <= j_max and reports the rigorous
    tail cap alpha * rho**j_max / (1 - rho) * (remaining pmf mass).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")
    if j_max is None:
        j_max = default_series_length(alpha, rho)
    pmf = return_time_pmf_upto(chain, j_max)
    powers = rho ** np.arange(j_max)
    value = alpha * float(pmf @ powers)
    remaining = max(0.0, 1.0 - float(pmf.sum()))
    tail = alpha * rho**j_max / (1.0 - rho) * remaining
    return SeriesResult(value=value, tail_bound=tail)


def anytime_contraction(chain: LambdaChain, alpha: float, rho: float) -> float:
    """Closed-form omega: alpha r (1 + rho theta^T (I - rho G)^{-1} e1).

    The resolvent is evaluated by a dense linear solve with partial pivoting
    rather than an explicit inverse.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")
    try:
        y = np.linalg.solve(np.eye(chain.capacity) - rho * chain.g, chain.e1)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"singular system for (I - rho G) at rho={rho}") from exc
    return alpha * chain.return1 * (1.0 + rho * float(chain.theta @ y))


def anytime_mean_bound(
    omega: float,
    alpha: float,
    rho: float,
    i: int,
    e_phi2_x0: float,
    d: float,
    phi2: Callable[[float], float],
) -> float:
    """Upper bound on E[phi1(|x(k)|)] over the i-th buffer cycle; needs omega < 1."""
    if omega >= 1.0:
        raise ValueError(f"omega={omega} >= 1: no finite bound")
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")
    lead = (1.0 + alpha - rho) / (1.0 - rho)
    return lead * omega**i * e_phi2_x0 + phi2(d) / (1.0 - omega)


def boundary_alpha_baseline(rho: float, q: float, p0: float) -> float:
    """Largest open-loop growth keeping gamma < 1; +inf when kappa always runs."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho={rho} outside [0, 1)")
    if not 0.0 <= q <= 1.0 or not 0.0 <= p0 <= 1.0:
        raise ValueError("q and p0 must lie in [0, 1]")
    c = q * (1.0 - p0)
    if c >= 1.0:
        return math.inf
    return (1.0 - c * rho) / (1.0 - c)


def boundary_alpha_anytime(rho: float, env: StochasticEnv) -> float:
    """Largest open-loop growth keeping omega < 1 (omega is linear in alpha)."""
    chain = build_lambda_chain(env)
    unit = anytime_contraction(chain, 1.0, rho)
    if unit <= 0.0:
        return math.inf
    return 1.0 / unit


def boundary_curves(env: StochasticEnv, rho_values: np.ndarray) -> np.ndarray:
    """Stability-boundary curves: rows (rho, alpha*_baseline, alpha*_anytime)."""
    p0 = env.p[0]
    out = np.empty((len(rho_values), 3))
    for i, rho in enumerate(rho_values):
        out[i, 0] = rho
        out[i, 1] = boundary_alpha_baseline(float(rho), env.q, p0)
        out[i, 2] = boundary_alpha_anytime(float(rho), env)
    return out


def analyze(
    plant: PlantSpec,
    env: StochasticEnv,
    mass_target: float = 1.0 - 1e-6,
) -> AnalysisResult:
    """Gamma, omega, the truncated return-time pmf and the bound tails."""
    chain = build_lambda_chain(env)
    gamma = baseline_contraction(plant.alpha, plant.rho, env.q, env.p[0])
    omega = anytime_contraction(chain, plant.alpha, plant.rho)
    pmf = return_time_pmf_truncated(chain, mass_target)
    d_cap = plant.phi2(plant.d)
    q, p0 = env.q, env.p[0]
    baseline_tail = (
        q * (1.0 - p0) * (plant.alpha - plant.rho) * d_cap / (1.0 - gamma)
        if gamma < 1.0
        else math.inf
    )
    anytime_tail = d_cap / (1.0 - omega) if omega < 1.0 else math.inf
    return AnalysisResult(
        gamma=gamma,
        omega=omega,
        delta_pmf=pmf,
        delta_mass=float(pmf.sum()),
        bounds={"baseline_tail": baseline_tail, "anytime_tail": anytime_tail},
    )
