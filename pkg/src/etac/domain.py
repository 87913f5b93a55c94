"""Plant models, stochastic channel/processor environments, and validation.

The controlled object is a discrete-time plant x(k+1) = f(x(k), u(k)).  Its
sensor transmits only while the state sits outside the open ball |x| < d; the
link erases each transmitted packet independently with probability 1 - q, and
the controller's processor grants a random number of control-law evaluations
per step, distributed according to the pmf p = (p_0, ..., p_Lambda).

Dynamics, control laws and Lyapunov functions are plain callables; the
certified contraction/growth factors are floats whose inequalities are checked
on dense grids by the test suite.  The physical sampling interval and the
intra-period processing deadline are background only: nothing computed here
depends on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, partial
from typing import Callable

import numpy as np

__all__ = [
    "BufferState",
    "NoiseSpec",
    "PlantSpec",
    "SAT_LIMIT",
    "StepRecord",
    "StochasticEnv",
    "make_sat_plant",
    "make_scalar_plant",
    "sat",
    "validate_env",
]

#: Relative pad on certified factors so the inequalities survive the rounding
#: of f, kappa and V when evaluated in floating point.
_CERT_PAD = 1.0 + 2.0**-48

SAT_LIMIT = 10.0


@dataclass(frozen=True)
class PlantSpec:
    """A plant together with its certified stabilizability data.

    ``control_law`` (kappa) contracts the Lyapunov function by ``rho`` per step
    outside the trigger ball, while the zero input grows it by at most
    ``alpha``; ``phi1``/``phi2`` sandwich the Lyapunov function between
    class-K-infinity envelopes of the state norm.
    """

    state_dim: int
    input_dim: int
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]
    control_law: Callable[[np.ndarray], np.ndarray]
    lyapunov: Callable[[np.ndarray], float]
    phi1: Callable[[float], float]
    phi2: Callable[[float], float]
    rho: float  # closed-loop factor: V(f(x, kappa(x))) <= rho V(x) for |x| >= d
    alpha: float  # open-loop factor: V(f(x, 0)) <= alpha V(x) everywhere
    d: float  # trigger radius; the sensor is silent while |x| < d
    name: str = "plant"


@dataclass(frozen=True)
class StochasticEnv:
    """Channel and processor model: success probability q, iteration pmf p.

    ``p[j]`` is the probability that the processor completes exactly j
    control-law evaluations in a step that received fresh data; ``capacity``
    is the actuator-buffer size, so ``p`` must have ``capacity + 1`` entries.
    """

    q: float
    p: tuple[float, ...]
    capacity: int


@dataclass(eq=False)
class BufferState:
    """Actuator-side schedule of tentative inputs.

    ``blocks[j]`` is the input planned for j steps ahead; ``lam`` counts how
    many leading rows came from actual control-law evaluations (the rest are
    padding zeros).  Owned by a single simulation run; never shared.
    """

    blocks: np.ndarray  # shape (capacity, input_dim)
    lam: int

    @classmethod
    def zeros(cls, capacity: int, input_dim: int) -> "BufferState":
        return cls(np.zeros((capacity, input_dim)), 0)


@dataclass(frozen=True, eq=False, slots=True)
class StepRecord:
    """One step of a closed-loop run.

    ``beta`` is the transmission outcome (2 silent, 1 received, 0 erased),
    ``n`` the number of control-law evaluations granted, ``lam`` the effective
    buffer length after the step, ``w`` the additive disturbance (None when
    the run is noiseless).
    """

    k: int
    x: np.ndarray
    u: np.ndarray
    beta: int
    n: int
    lam: int
    w: np.ndarray | None = None


@dataclass(frozen=True)
class NoiseSpec:
    """Additive state disturbance: none, or i.i.d. Gaussian per coordinate."""

    kind: str = "none"
    std: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "gaussian-iid"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.std < 0.0:
            raise ValueError("noise std must be nonnegative")
        if self.kind == "none" and self.std != 0.0:
            raise ValueError("noise std must be 0 under kind 'none'")


def validate_env(env: StochasticEnv) -> list[str]:
    """Return every parameter-range violation; the env is valid iff empty."""
    errors: list[str] = []
    if not 0.0 <= env.q <= 1.0:
        errors.append(f"q={env.q} outside [0, 1]")
    if env.capacity < 1:
        errors.append(f"capacity={env.capacity} must be a positive integer")
    if len(env.p) != env.capacity + 1:
        errors.append(
            f"p has {len(env.p)} entries, expected capacity + 1 = {env.capacity + 1}"
        )
    for j, pj in enumerate(env.p):
        # Closed interval: degenerate pmfs (a deterministic processor) are legal.
        if not 0.0 <= pj <= 1.0:
            errors.append(f"p[{j}]={pj} outside [0, 1]")
    total = math.fsum(env.p)
    if abs(total - 1.0) > 1e-12:
        errors.append(f"pmf sums to {total}, expected 1")
    return errors


def sat(mu: float) -> float:
    """Saturate a scalar to [-10, 10]."""
    if mu < -SAT_LIMIT:
        return -SAT_LIMIT
    if mu > SAT_LIMIT:
        return SAT_LIMIT
    return mu


def _sat_dynamics(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.array([x[1] + u[0], -sat(x[0] + x[1]) + u[1]])


def _sat_control(x: np.ndarray) -> np.ndarray:
    return np.array([-x[1], 0.505 * sat(x[0] + x[1])])


def _sat_lyapunov(x: np.ndarray) -> float:
    return 2.0 * math.sqrt(float(x @ x))


def _double(s: float) -> float:
    return 2.0 * s


@lru_cache(maxsize=1)
def _certify_sat_alpha() -> float:
    # Grid-certified open-loop growth sup |f(x, 0)| / |x|, padded by 1e-4.
    # On the unit circle the saturation is inactive, so a fine angular sweep
    # captures the linear-regime supremum; a coarse square sweep covers the
    # saturated branch, which only shrinks the second coordinate.
    ang = np.linspace(0.0, 2.0 * np.pi, 8192, endpoint=False)
    x1, x2 = np.cos(ang), np.sin(ang)
    ratio_linear = np.sqrt(x2**2 + (x1 + x2) ** 2)
    g = np.linspace(-50.0, 50.0, 401)
    xx1, xx2 = np.meshgrid(g, g)
    norm = np.sqrt(xx1**2 + xx2**2)
    mask = norm > 0.0
    s = np.clip(xx1 + xx2, -SAT_LIMIT, SAT_LIMIT)
    ratio_sat = np.sqrt(xx2[mask] ** 2 + s[mask] ** 2) / norm[mask]
    return float(max(ratio_linear.max(), ratio_sat.max()) * (1.0 + 1e-4))


def make_sat_plant(d: float = 0.0) -> PlantSpec:
    """Two-state saturated plant with V(x) = 2|x|.

    Dynamics x1+ = x2 + u1, x2+ = -sat(x1 + x2) + u2 with sat clipping to
    [-10, 10]; kappa(x) = (-x2, 0.505 sat(x1 + x2)) contracts V by rho = 0.99,
    and the open-loop growth factor is certified numerically at construction.
    """
    if d < 0.0:
        raise ValueError("trigger radius d must be nonnegative")
    return PlantSpec(
        state_dim=2,
        input_dim=2,
        dynamics=_sat_dynamics,
        control_law=_sat_control,
        lyapunov=_sat_lyapunov,
        phi1=_double,
        phi2=_double,
        rho=0.99,
        alpha=_certify_sat_alpha(),
        d=d,
        name="saturated",
    )


def _linear_dynamics(a: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return a * x + u


def _linear_control(gain: float, x: np.ndarray) -> np.ndarray:
    return -gain * x


def _norm_lyapunov(x: np.ndarray) -> float:
    return math.sqrt(float(x @ x))


def _identity(s: float) -> float:
    return s


def make_scalar_plant(a: float, gain: float, d: float) -> PlantSpec:
    """Scalar plant f(x, u) = a x + u with kappa(x) = -gain x and V(x) = |x|.

    The certified factors are |a - gain| and |a|, each padded by a few ulps to
    absorb product roundoff so the grid checks hold without tolerance.
    """
    rho = abs(a - gain)
    if rho >= 1.0:
        raise ValueError(f"|a - gain| = {rho} must be < 1 for a contracting loop")
    if d < 0.0:
        raise ValueError("trigger radius d must be nonnegative")
    return PlantSpec(
        state_dim=1,
        input_dim=1,
        dynamics=partial(_linear_dynamics, float(a)),
        control_law=partial(_linear_control, float(gain)),
        lyapunov=_norm_lyapunov,
        phi1=_identity,
        phi2=_identity,
        rho=rho * _CERT_PAD,
        alpha=abs(a) * _CERT_PAD,
        d=d,
        name="scalar",
    )
