"""Monte Carlo Shapley estimation by sampling ordered permutations.

The estimator draws permutations uniformly with replacement and averages
marginal contributions. By default one drawn permutation is walked once
and yields a marginal for every player (m draws give ``m*n`` marginals at
``O(m n V)`` evaluation cost). A verbatim per-player mode, with
independent draws for each player, is kept behind a flag for fidelity
testing.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; ``Generator.permutation`` performs an unbiased
Fisher-Yates shuffle. Both are stable across platforms, so a pinned seed
reproduces results bit for bit for a given worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EvaluationFailed,
    InvalidParameter,
    PlayerNotInPermutation,
    UnsatisfiableCoalitions,
)
from .games import Coalition, CoalitionGame


def predecessors(order: Sequence[int], player: int) -> Coalition:
    """Coalition of the players strictly before ``player`` in ``order``."""
    mask = 0
    for p in order:
        p = int(p)
        if p == player:
            return mask
        mask |= 1 << p
    raise PlayerNotInPermutation(f"player {player} does not appear in {tuple(order)}")


@dataclass(frozen=True)
class SamplingConfig:
    """Sampling parameters.

    ``epsilon``/``alpha`` are optional inputs to CLT sample sizing (see
    :func:`required_sample_size`); they do not affect a run with a fixed
    ``m``. ``max_draw_factor`` bounds how many dead (unevaluable) draws are
    tolerated before giving up: the redraw budget is
    ``max(20, ceil(max_draw_factor * m))``.
    """

    m: int
    seed: int = 0
    epsilon: float | None = None
    alpha: float | None = None
    per_player: bool = False
    skip_dead_draws: bool = True
    max_draw_factor: float = 10.0
    workers: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise InvalidParameter(f"m must be >= 1, got {self.m}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise InvalidParameter(f"epsilon must be > 0, got {self.epsilon}")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise InvalidParameter(f"alpha must be in (0, 1), got {self.alpha}")
        if self.workers < 1:
            raise InvalidParameter(f"workers must be >= 1, got {self.workers}")
        if self.max_draw_factor < 1:
            raise InvalidParameter(f"max_draw_factor must be >= 1, got {self.max_draw_factor}")


@dataclass(frozen=True)
class SampledAttribution:
    """Estimated Shapley values plus per-player sampling diagnostics."""

    values: np.ndarray
    per_player_sample_variance: np.ndarray
    m_used: int
    seed: int
    dead_draws: int = 0
    m_used_per_player: np.ndarray | None = None

    def __post_init__(self):
        for name in ("values", "per_player_sample_variance"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def stderr(self) -> np.ndarray:
        """Per-player standard error, ``sqrt(variance / draws)``."""
        m = self.m_used_per_player if self.m_used_per_player is not None else self.m_used
        return np.sqrt(self.per_player_sample_variance / np.maximum(m, 1))


def _worker_rngs(seed: int, workers: int) -> list[np.random.Generator]:
    """One PCG64 stream per worker, spawned deterministically from the seed."""
    seqs = np.random.SeedSequence(int(seed)).spawn(int(workers))
    return [np.random.Generator(np.random.PCG64(s)) for s in seqs]


def _split(total: int, parts: int) -> list[int]:
    base, rem = divmod(int(total), int(parts))
    return [base + 1] * rem + [base] * (parts - rem)


def _walk_shared(game: CoalitionGame, order, out) -> None:
    # One pass over a permutation: marginal contribution for every player.
    value = game.value
    mask = 0
    prev = 0.0
    for p in order:
        p = int(p)
        with_p = mask | (1 << p)
        nxt = value(with_p)
        out[p] = nxt - prev
        mask = with_p
        prev = nxt


def _draw_shared(game, rng, target, max_total, dead_budget, skip_dead):
    n = game.n
    rows = np.empty((target, n), dtype=float)
    live = dead = total = 0
    while live < target and (max_total is None or total < max_total):
        total += 1
        order = rng.permutation(n)
        try:
            _walk_shared(game, order, rows[live])
        except EvaluationFailed:
            if not skip_dead:
                raise
            dead += 1
            if dead > dead_budget:
                raise UnsatisfiableCoalitions(
                    f"{dead} of {total} sampled permutations hit unevaluable coalitions"
                )
            continue
        live += 1
    return rows[:live], dead


def _stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = rows.mean(axis=0)
    if rows.shape[0] > 1:
        var = np.maximum(rows.var(axis=0, ddof=1), 0.0)
    else:
        var = np.zeros(rows.shape[1])
    return values, var


def _sampled_shared(game, cfg, max_total_draws):
    targets = _split(cfg.m, cfg.workers)
    budgets = _split(max_total_draws, cfg.workers) if max_total_draws is not None else [None] * cfg.workers
    rngs = _worker_rngs(cfg.seed, cfg.workers)

    def job(idx):
        target = targets[idx]
        if target == 0:
            return np.empty((0, game.n)), 0
        dead_budget = max(20, math.ceil(cfg.max_draw_factor * target))
        return _draw_shared(game, rngs[idx], target, budgets[idx], dead_budget, cfg.skip_dead_draws)

    if cfg.workers == 1:
        results = [job(0)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, range(cfg.workers)))

    rows = np.vstack([r for r, _ in results])
    dead = sum(d for _, d in results)
    if rows.shape[0] == 0:
        raise UnsatisfiableCoalitions("no sampled permutation could be evaluated")
    values, var = _stats(rows)
    return SampledAttribution(values, var, m_used=rows.shape[0], seed=cfg.seed, dead_draws=dead)


def _sampled_per_player(game, cfg, max_total_draws):
    n = game.n
    seqs = np.random.SeedSequence(int(cfg.seed)).spawn(n)
    dead_budget = max(20, math.ceil(cfg.max_draw_factor * cfg.m))

    def job(i):
        rng = np.random.Generator(np.random.PCG64(seqs[i]))
        bit = 1 << i
        value = game.value
        vals = np.empty(cfg.m, dtype=float)
        live = dead = total = 0
        while live < cfg.m and (max_total_draws is None or total < max_total_draws):
            total += 1
            order = rng.permutation(n)
            pre = 0
            for p in order:
                p = int(p)
                if p == i:
                    break
                pre |= 1 << p
            try:
                # marginal contribution of i: v(Pre u {i}) - v(Pre)
                v_with = value(pre | bit)
                v_without = value(pre)
            except EvaluationFailed:
                if not cfg.skip_dead_draws:
                    raise
                dead += 1
                if dead > dead_budget:
                    raise UnsatisfiableCoalitions(
                        f"player {i}: {dead} of {total} draws hit unevaluable coalitions"
                    )
                continue
            vals[live] = v_with - v_without
            live += 1
        if live == 0:
            raise UnsatisfiableCoalitions(f"player {i}: no evaluable draw within budget")
        return vals[:live], dead

    # Streams are per player, so the result does not depend on worker count.
    if cfg.workers == 1:
        results = [job(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(job, range(n)))

    values = np.empty(n)
    var = np.empty(n)
    m_per = np.empty(n, dtype=int)
    dead = 0
    for i, (vals, d) in enumerate(results):
        values[i] = vals.mean()
        var[i] = max(float(np.var(vals, ddof=1)), 0.0) if len(vals) > 1 else 0.0
        m_per[i] = len(vals)
        dead += d
    return SampledAttribution(
        values,
        var,
        m_used=int(m_per.min()),
        seed=cfg.seed,
        dead_draws=dead,
        m_used_per_player=m_per,
    )


def shapley_sampled(
    game: CoalitionGame,
    cfg: SamplingConfig | None = None,
    *,
    permutations: Sequence[Sequence[int]] | None = None,
    max_total_draws: int | None = None,
) -> SampledAttribution:
    """Estimate Shapley values from sampled permutations.

    ``max_total_draws`` caps the total number of permutations consumed
    (live plus dead); when it truncates a run, the divisor is the number of
    draws actually used, which ``m_used`` records. ``permutations`` bypasses
    sampling and evaluates exactly the given orderings once each (test
    hook; enumerating all ``n!`` orderings reproduces the exact values).

    Identical ``(game, cfg)`` inputs reproduce identical outputs bit for
    bit; determinism is per worker count, since each worker owns a spawned
    RNG stream and partial results are reduced in worker-index order.
    """
    if permutations is not None:
        rows = np.empty((len(permutations), game.n), dtype=float)
        for k, order in enumerate(permutations):
            _walk_shared(game, order, rows[k])
        if rows.shape[0] == 0:
            raise InvalidParameter("permutations hook needs at least one ordering")
        values, var = _stats(rows)
        return SampledAttribution(
            values, var, m_used=rows.shape[0], seed=cfg.seed if cfg else 0
        )
    if cfg is None:
        raise InvalidParameter("a SamplingConfig is required unless permutations are given")
    if max_total_draws is not None and max_total_draws < 1:
        raise InvalidParameter(f"max_total_draws must be >= 1, got {max_total_draws}")
    if cfg.per_player:
        return _sampled_per_player(game, cfg, max_total_draws)
    return _sampled_shared(game, cfg, max_total_draws)


# Coefficients of Acklam's rational approximation to the inverse normal CDF.
_ACKLAM_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_ACKLAM_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_ACKLAM_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_ACKLAM_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)
_ACKLAM_P_LOW = 0.02425


def normal_quantile(p: float) -> float:
    """Standard normal quantile via Acklam's rational approximation.

    Relative error is below 1.2e-9 over (0, 1), comfortably inside the 1e-8
    accuracy this module documents.
    """
    if not 0.0 < p < 1.0:
        raise InvalidParameter(f"quantile probability must be in (0, 1), got {p}")
    a, b, c, d = _ACKLAM_A, _ACKLAM_B, _ACKLAM_C, _ACKLAM_D
    p_high = 1.0 - _ACKLAM_P_LOW
    if p < _ACKLAM_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > p_high:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


def required_sample_size(variance_bound: float, epsilon: float, alpha: float) -> int:
    """CLT sample size: smallest m with error below ``epsilon`` at level ``1 - alpha``.

    Returns ``ceil(z_{1-alpha/2}^2 * variance_bound / epsilon^2)``.
    """
    if not variance_bound > 0:
        raise InvalidParameter(f"variance_bound must be > 0, got {variance_bound}")
    if not epsilon > 0:
        raise InvalidParameter(f"epsilon must be > 0, got {epsilon}")
    if not 0 < alpha < 1:
        raise InvalidParameter(f"alpha must be in (0, 1), got {alpha}")
    z = normal_quantile(1.0 - alpha / 2.0)
    return max(1, math.ceil(z * z * variance_bound / (epsilon * epsilon)))


def pilot_variance_bound(game: CoalitionGame, draws: int = 50, seed: int = 0) -> float:
    """Largest per-player marginal variance observed in a short pilot run.

    Default variance bound for :func:`required_sample_size` when no
    analytic bound is available.
    """
    pilot = shapley_sampled(game, SamplingConfig(m=draws, seed=seed))
    return float(pilot.per_player_sample_variance.max())


def plan_sampling(
    game: CoalitionGame,
    epsilon: float,
    alpha: float,
    seed: int = 0,
    pilot_draws: int = 50,
) -> SamplingConfig:
    """Build a :class:`SamplingConfig` whose ``m`` comes from the CLT bound."""
    bound = pilot_variance_bound(game, draws=pilot_draws, seed=seed)
    if bound == 0.0:
        m = 1  # all marginals identical in the pilot; nothing to resolve
    else:
        m = required_sample_size(bound, epsilon, alpha)
    return SamplingConfig(m=m, seed=seed, epsilon=epsilon, alpha=alpha)
