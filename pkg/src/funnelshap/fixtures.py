"""Built-in two-player interaction games and a linear reference game.

These encode the textbook cases where one-step baselines break down: the
conjunction game zeroes out Add-One, the disjunction game zeroes out
Remove-One, while the Shapley split is (1/2, 1/2) in both. The linear game
is the case where all three methods coincide.
"""

from __future__ import annotations

from .attribution import AttributionConfig, AttributionReport, attribute_game
from .games import CoalitionGame


def and_game() -> CoalitionGame:
    """Value 1 only when both players are present."""
    return CoalitionGame.from_table([0.0, 0.0, 0.0, 1.0])


def or_game() -> CoalitionGame:
    """Value 1 when at least one player is present."""
    return CoalitionGame.from_table([0.0, 1.0, 1.0, 1.0])


def linear_game(coeffs: tuple[float, ...] = (3.0, -1.0, 4.0)) -> CoalitionGame:
    """Additive game: each coalition is worth the sum of its members' coefficients."""
    c = tuple(float(v) for v in coeffs)

    def value(mask: int) -> float:
        return sum(c[i] for i in range(len(c)) if mask >> i & 1)

    return CoalitionGame(len(c), value)


FIXTURES = {
    "and-game": (and_game, ("x1", "x2")),
    "or-game": (or_game, ("x1", "x2")),
    "linear": (linear_game, ("x1", "x2", "x3")),
}


def fixture_report(name: str, cfg: AttributionConfig | None = None) -> AttributionReport:
    """Attribution report for a named fixture game."""
    try:
        builder, names = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(FIXTURES)}") from None
    return attribute_game(builder(), names, cfg)
