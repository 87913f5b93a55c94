"""Brute-force validators, independent of the closed-form analysis path.

Everything here re-derives a quantity the analysis module computes in closed
form: the first-return-time pmf of the effective buffer length by direct
simulation of the length recursion, the transition law of that chain by
conditional frequency counts, and the buffered controller step as a literal
case table for differential testing.  Validation runs in the always-transmit
regime (d = 0), where the length recursion is driven purely by the i.i.d.
channel and processor draws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .domain import BufferState, PlantSpec, StochasticEnv, validate_env

__all__ = [
    "EmpiricalPmf",
    "TransitionEstimate",
    "empirical_transition_matrix",
    "lambda_path_from_counts",
    "reference_anytime_step",
    "simulate_lambda_chain",
    "tv_distance",
]

_MAX_BLOCK = 2_000_000


@dataclass(frozen=True, eq=False)
class EmpiricalPmf:
    """Outcome counts over first-return times; index i holds the count of i + 1."""

    counts: np.ndarray
    total: int

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, len(self.counts) + 1)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def half_width(self) -> np.ndarray:
        """Per-outcome 3-sigma binomial half-widths."""
        f = self.frequencies
        return 3.0 * np.sqrt(f * (1.0 - f) / self.total)

    def mean(self) -> float:
        return float((self.support * self.counts).sum() / self.total)


@dataclass(frozen=True, eq=False)
class TransitionEstimate:
    """Frequency estimate of the buffer-length transition matrix.

    ``matrix[l-1, j-1]`` estimates the one-step probability of length l to
    length j; escapes to zero are counted in the denominator but carried by no
    column, so row 1 sums below one while rows l >= 2 sum to one.
    """

    matrix: np.ndarray
    visits: np.ndarray

    @property
    def half_width(self) -> np.ndarray:
        g = self.matrix
        return 3.0 * np.sqrt(g * (1.0 - g) / self.visits[:, None])


def _require_valid(env: StochasticEnv) -> None:
    errors = validate_env(env)
    if errors:
        raise ValueError("invalid environment: " + "; ".join(errors))


def _draw_counts(env: StochasticEnv, m: int, gen: np.random.Generator) -> np.ndarray:
    # Always-transmit regime: data goes out every step, arrives w.p. q, and a
    # received step grants j evaluations w.p. p[j]; otherwise zero evaluations.
    received = gen.random(m) < env.q
    cum = np.cumsum(env.p)
    draws = np.minimum(np.searchsorted(cum, gen.random(m), side="right"), env.capacity)
    return np.where(received, draws, 0).astype(np.int64)


def lambda_path_from_counts(n_seq: np.ndarray) -> np.ndarray:
    """Buffer-length path from per-step evaluation counts, starting at zero.

    Vectorized unroll of the length recursion for steps without a silent
    trigger: a step with n >= 1 sets the length to n, afterwards it counts
    down by one per step, floored at zero.
    """
    n_seq = np.asarray(n_seq, dtype=np.int64)
    pos = np.arange(1, n_seq.size + 1, dtype=np.int64)
    refill = np.where(n_seq >= 1, pos, 0)
    last = np.maximum.accumulate(refill)
    filled = np.where(last > 0, n_seq[last - 1], 0)
    return np.maximum(filled - (pos - last), 0)


def simulate_lambda_chain(env: StochasticEnv, n_returns: int, rng) -> EmpiricalPmf:
    """Empirical pmf of first-return times of the buffer length to zero.

    Simulates the length recursion directly from i.i.d. channel/processor
    draws (no plant involved, always-transmit regime) and collects the gaps
    between successive zeros of the path until ``n_returns`` returns are seen.
    """
    _require_valid(env)
    if n_returns < 1:
        raise ValueError("n_returns must be >= 1")
    if 1.0 - env.q + env.p[0] * env.q == 0.0:
        raise ValueError("the buffer length never returns to zero (q = 1 with p0 = 0)")
    gen = rng.generator()
    counts = np.zeros(16, dtype=np.int64)
    total = 0
    steps_done = 0
    carry = 0  # steps since the last zero, across block boundaries
    prev_lam = 0
    while total < n_returns:
        if total == 0:
            block = min(max(4 * n_returns, 4096), _MAX_BLOCK)
        else:
            mean_gap = steps_done / total
            block = min(int(1.25 * mean_gap * (n_returns - total)) + 4096, _MAX_BLOCK)
        seq = np.concatenate(([prev_lam], _draw_counts(env, block, gen)))
        path = lambda_path_from_counts(seq)[1:]  # drop the synthetic carry step
        steps_done += block
        zero_pos = np.nonzero(path == 0)[0] + 1
        if zero_pos.size == 0:
            carry += block
            prev_lam = int(path[-1])
            continue
        gaps = np.diff(zero_pos, prepend=0)
        gaps[0] += carry
        carry = block - int(zero_pos[-1])
        prev_lam = int(path[-1])
        needed = n_returns - total
        if gaps.size > needed:
            gaps = gaps[:needed]
        block_counts = np.bincount(gaps)[1:]  # gap values start at 1
        if block_counts.size > counts.size:
            counts = np.concatenate(
                (counts, np.zeros(block_counts.size - counts.size, dtype=np.int64))
            )
        counts[: block_counts.size] += block_counts
        total += int(gaps.size)
    last = int(np.nonzero(counts)[0][-1]) + 1
    return EmpiricalPmf(counts=counts[:last].copy(), total=total)


def empirical_transition_matrix(env: StochasticEnv, n_steps: int, rng) -> TransitionEstimate:
    """Frequency estimate of the buffer-length transition law between resets.

    Splits the sample budget evenly over the source lengths 1..capacity and
    draws one-step transitions from each directly.
    """
    _require_valid(env)
    gen = rng.generator()
    cap = env.capacity
    per_row = n_steps // cap
    if per_row < 1:
        raise ValueError("n_steps too small: needs at least one draw per row")
    if per_row < 1000:
        warnings.warn(
            f"only {per_row} transition samples per row (< 1000); estimates will be coarse",
            stacklevel=2,
        )
    counts = np.zeros((cap, cap + 1), dtype=np.int64)
    for length in range(1, cap + 1):
        n_seq = _draw_counts(env, per_row, gen)
        nxt = np.where(n_seq >= 1, n_seq, length - 1)
        counts[length - 1] = np.bincount(nxt, minlength=cap + 1)
    visits = counts.sum(axis=1)
    matrix = counts[:, 1:] / visits[:, None]
    return TransitionEstimate(matrix=matrix, visits=visits)


def reference_anytime_step(
    x: np.ndarray | None,
    beta: int,
    n: int,
    buf: BufferState,
    plant: PlantSpec,
) -> tuple[np.ndarray, BufferState]:
    """Table-driven rewrite of the buffered controller step.

    Identical contract to ``runtime.anytime_step`` but written as the literal
    operating-mode table, with no shared shift/refill helpers: per-row moves,
    and the effective length re-derived by tagging which rows were written by
    the control law instead of applying the length recursion.
    """
    if n >= 1 and beta != 1:
        raise ValueError("n >= 1 requires beta == 1: inputs are computed only on reception")
    if (beta == 1) != (x is not None):
        raise ValueError("the state argument must be present exactly when beta == 1")
    capacity = buf.blocks.shape[0]
    if n > capacity:
        raise ValueError(f"n={n} exceeds buffer capacity {capacity}")
    blocks = buf.blocks.copy()
    written = [i < buf.lam for i in range(capacity)]

    if beta == 2:
        blocks[:] = 0.0
        written = [False] * capacity
        out = blocks[0].copy()
        return out, BufferState(blocks, sum(written))

    for j in range(capacity - 1):  # shift one step ahead
        blocks[j] = buf.blocks[j + 1]
        written[j] = j + 1 < buf.lam
    blocks[capacity - 1] = 0.0
    written[capacity - 1] = False

    if beta == 1 and n >= 1:
        chi = np.array(x, dtype=float)
        for j in range(n):
            u_j = np.asarray(plant.control_law(chi), dtype=float)
            if j == 0:
                blocks[:] = 0.0
                written = [False] * capacity
            blocks[j] = u_j
            written[j] = True
            if j + 1 < n:
                chi = plant.dynamics(chi, u_j)

    out = blocks[0].copy()
    return out, BufferState(blocks, sum(written))


def tv_distance(analytic: np.ndarray, empirical: EmpiricalPmf) -> float:
    """Total variation between a truncated analytic pmf and an empirical one.

    The analytic mass beyond the truncation (at most the truncation slack) is
    charged in full, so the result upper-bounds the true distance.
    """
    width = max(len(analytic), len(empirical.counts))
    a = np.zeros(width)
    a[: len(analytic)] = analytic
    e = np.zeros(width)
    freq = empirical.frequencies
    e[: len(freq)] = freq
    analytic_tail = max(0.0, 1.0 - float(np.sum(analytic)))
    return 0.5 * (float(np.abs(a - e).sum()) + analytic_tail)
