"""Coalitional games: exact Shapley values, one-step baselines, axiom checks.

Players are indexed ``0..n-1`` and coalitions are integer bitmasks (bit i
set means player i is in the coalition), so a coalition fits one machine
word for up to 63 players. Every game is normalised at construction so the
empty coalition is worth exactly zero; the raw value at the empty coalition
is retained for reporting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import PlayerCapExceeded

Coalition = int

MAX_PLAYERS = 63
# Capability cap of the exact engine (2**20 evaluations), distinct from the
# attribution pipeline's dispatch threshold, which is policy.
EXACT_PLAYER_CAP = 20
# Full n! enumeration is an oracle; past 8 players it stops being one.
ENUMERATION_CAP = 8


def coalition_of(players: Iterable[int]) -> Coalition:
    """Bitmask of the given player indices."""
    mask = 0
    for p in players:
        mask |= 1 << p
    return mask


def members(coalition: Coalition) -> tuple[int, ...]:
    """Player indices present in a coalition, ascending."""
    out = []
    i = 0
    c = int(coalition)
    while c:
        if c & 1:
            out.append(i)
        c >>= 1
        i += 1
    return tuple(out)


class CoalitionGame:
    """A deterministic characteristic function with memoised evaluation.

    ``raw_fn`` maps a coalition bitmask to a real number and may take any
    finite value on the empty coalition; values are shifted by ``raw_fn(0)``
    so that ``value(0) == 0.0``. The memo table is a plain dict keyed by
    bitmask; because the function is deterministic by contract, concurrent
    duplicate evaluation is benign and last-write-wins inserts are safe.
    """

    def __init__(self, n_players: int, raw_fn: Callable[[Coalition], float], cache: bool = True):
        n = int(n_players)
        if not 1 <= n <= MAX_PLAYERS:
            raise ValueError(f"player count must be in 1..{MAX_PLAYERS}, got {n_players}")
        self.n = n
        self._raw_fn = raw_fn
        self._offset = float(raw_fn(0))
        if not math.isfinite(self._offset):
            raise ValueError("characteristic function is not finite on the empty coalition")
        self._cache: dict[int, float] | None = {0: 0.0} if cache else None

    @classmethod
    def from_table(cls, values: Sequence[float], cache: bool = True) -> "CoalitionGame":
        """Game over an explicit table of ``2**n`` values indexed by bitmask."""
        table = [float(v) for v in values]
        size = len(table)
        n = size.bit_length() - 1
        if size < 2 or (1 << n) != size:
            raise ValueError(f"table length must be a power of two >= 2, got {size}")
        return cls(n, table.__getitem__, cache=cache)

    @property
    def grand_coalition(self) -> Coalition:
        return (1 << self.n) - 1

    @property
    def raw_at_empty(self) -> float:
        """Unshifted value of the empty coalition."""
        return self._offset

    def value(self, coalition: Coalition) -> float:
        """v(S), shifted so v(empty) == 0; memoised per bitmask."""
        c = int(coalition)
        if not 0 <= c <= self.grand_coalition:
            raise ValueError(f"coalition {coalition:#x} out of range for {self.n} players")
        cache = self._cache
        if cache is not None:
            hit = cache.get(c)
            if hit is not None:
                return hit
        v = float(self._raw_fn(c)) - self._offset
        if cache is not None:
            cache[c] = v
        return v

    def raw_value(self, coalition: Coalition) -> float:
        """The unshifted value of a coalition."""
        return self.value(coalition) + self._offset


def shift_to_zero(raw_fn: Callable[[Coalition], float], n_players: int, cache: bool = True) -> CoalitionGame:
    """Wrap a raw set function as a game with ``v(empty) == 0``.

    The wrapped game satisfies ``v(S) = raw_fn(S) - raw_fn(0)``, so summing
    exact Shapley values recovers ``raw_fn(full) - raw_fn(0)``. Errors from
    evaluating ``raw_fn`` on the empty coalition propagate unchanged.
    """
    return CoalitionGame(n_players, raw_fn, cache=cache)


@dataclass(frozen=True)
class AttributionVector:
    """Per-player attribution values plus the method that produced them."""

    values: np.ndarray
    method: str

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def total(self) -> float:
        return float(np.sum(self.values))


def _subset_weights(n: int) -> np.ndarray:
    """Shapley coefficients ``|S|! (n-|S|-1)! / n!`` indexed by ``|S|``.

    Computed as exact integer factorial ratios (Python bigints) and rounded
    once to float, which stays exact well past 64-bit factorial range.
    """
    fact = math.factorial
    denom = fact(n)
    return np.array([fact(s) * fact(n - 1 - s) / denom for s in range(n)], dtype=float)


def _full_table(game: CoalitionGame, cap: int) -> np.ndarray:
    if game.n > cap:
        raise PlayerCapExceeded(
            f"{game.n} players exceeds the exact-mode cap of {cap}; use shapley_sampled instead"
        )
    size = 1 << game.n
    return np.fromiter((game.value(m) for m in range(size)), dtype=float, count=size)


def shapley_exact(game: CoalitionGame, exact_cap: int = EXACT_PLAYER_CAP) -> AttributionVector:
    """Exact Shapley values by weighted enumeration of all ``2**n`` subsets.

    For player i, sums ``|S|!(n-|S|-1)!/n! * (v(S u {i}) - v(S))`` over all
    coalitions ``S`` not containing i. Each coalition value is computed at
    most once through the game's cache, so the cost is ``O(2^n V)`` plus the
    ``O(2^n n)`` combination pass.
    """
    n = game.n
    table = _full_table(game, exact_cap)
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.bitwise_count(masks).astype(np.intp)
    w = _subset_weights(n)
    phi = np.empty(n, dtype=float)
    for i in range(n):
        bit = 1 << i
        without = (masks & bit) == 0
        subs = masks[without]
        gains = table[subs | bit] - table[subs]
        phi[i] = float(np.dot(w[sizes[without]], gains))
    return AttributionVector(phi, "exact")


def shapley_by_permutations(game: CoalitionGame) -> AttributionVector:
    """Exact Shapley values as the average marginal over all ``n!`` orderings.

    Independent of :func:`shapley_exact` (permutation identity instead of the
    subset-weight formula); used as its cross-checking oracle. Capped at
    ``n <= 8``.
    """
    n = game.n
    if n > ENUMERATION_CAP:
        raise PlayerCapExceeded(f"full permutation enumeration is capped at {ENUMERATION_CAP} players")
    total = math.factorial(n)
    marginals = np.empty((total, n), dtype=float)
    value = game.value
    row = 0
    for perm in itertools.permutations(range(n)):
        mask = 0
        prev = 0.0
        out = marginals[row]
        for p in perm:
            nxt = value(mask | (1 << p))
            out[p] = nxt - prev
            mask |= 1 << p
            prev = nxt
        row += 1
    return AttributionVector(marginals.mean(axis=0), "permutation_enumeration")


def add_one(game: CoalitionGame) -> AttributionVector:
    """Add-One baseline: ``v({i}) - v(empty)`` for each player."""
    empty = game.value(0)
    vals = np.array([game.value(1 << i) - empty for i in range(game.n)])
    return AttributionVector(vals, "add_one")


def remove_one(game: CoalitionGame) -> AttributionVector:
    """Remove-One baseline: ``v(N) - v(N \\ {i})`` for each player."""
    full = game.grand_coalition
    v_full = game.value(full)
    vals = np.array([v_full - game.value(full & ~(1 << i)) for i in range(game.n)])
    return AttributionVector(vals, "remove_one")


@dataclass(frozen=True)
class AxiomReport:
    """Outcome of checking an attribution vector against the fairness axioms.

    Symmetry and dummy players are detected by brute force over all
    coalitions (exact value equality), then the attribution is required to
    respect them within the tolerance. Additivity needs two games and is
    exercised by a separate test harness, not here.
    """

    efficiency_passed: bool
    efficiency_residual: float
    symmetric_pairs: tuple[tuple[int, int], ...]
    symmetry_passed: bool
    symmetry_residual: float
    dummy_players: tuple[int, ...]
    dummy_passed: bool
    dummy_residual: float

    @property
    def passed(self) -> bool:
        return self.efficiency_passed and self.symmetry_passed and self.dummy_passed


def check_axioms(
    game: CoalitionGame,
    phi: AttributionVector | np.ndarray | Sequence[float],
    tolerance: float,
) -> AxiomReport:
    """Check Efficiency, Symmetry and Dummy for ``phi`` on ``game``."""
    values = np.asarray(getattr(phi, "values", phi), dtype=float)
    n = game.n
    if len(values) != n:
        raise ValueError(f"attribution has {len(values)} entries for a {n}-player game")
    table = _full_table(game, EXACT_PLAYER_CAP)
    masks = np.arange(1 << n, dtype=np.int64)

    eff_residual = abs(float(np.sum(values)) - table[-1])

    pairs = []
    sym_residual = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            both = (1 << i) | (1 << j)
            outside = masks[(masks & both) == 0]
            if np.array_equal(table[outside | (1 << i)], table[outside | (1 << j)]):
                pairs.append((i, j))
                sym_residual = max(sym_residual, abs(float(values[i] - values[j])))

    dummies = []
    dummy_residual = 0.0
    for i in range(n):
        bit = 1 << i
        outside = masks[(masks & bit) == 0]
        if np.array_equal(table[outside | bit], table[outside]):
            dummies.append(i)
            dummy_residual = max(dummy_residual, abs(float(values[i])))

    return AxiomReport(
        efficiency_passed=eff_residual <= tolerance,
        efficiency_residual=eff_residual,
        symmetric_pairs=tuple(pairs),
        symmetry_passed=sym_residual <= tolerance,
        symmetry_residual=sym_residual,
        dummy_players=tuple(dummies),
        dummy_passed=dummy_residual <= tolerance,
        dummy_residual=dummy_residual,
    )
