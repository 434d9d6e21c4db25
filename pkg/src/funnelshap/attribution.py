"""End-to-end confounder attribution: dispatch, baselines, ranking, report.

Exact Shapley values are used up to a configurable confounder count
(default 6) and permutation sampling beyond it (default 100 draws).
One-step Add-One and Remove-One baselines ride along for comparison. The
report carries everything a run produced: per-confounder values, ranks,
percentage contributions, totals, estimator metadata and matching
diagnostics, and is reproducible byte for byte for identical inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import cem
from .errors import InvalidK, InvalidParameter
from .funnel import FunnelDataset, characteristic_fn
from .games import CoalitionGame, add_one, remove_one, shapley_exact, shift_to_zero
from .sampling import SamplingConfig, shapley_sampled

RANK_MODES = ("magnitude", "signed")


@dataclass(frozen=True)
class AttributionConfig:
    """Pipeline policy: dispatch threshold, sampling budget, ranking."""

    exact_threshold: int = 6
    permutations_m: int = 100
    seed: int = 0
    top_k: int | None = None
    rank_by: str = "magnitude"
    add_one: bool = True
    remove_one: bool = True
    iteration_limit: int | None = None
    skip_dead_draws: bool = True
    per_player: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.exact_threshold < 1:
            raise InvalidParameter(f"exact_threshold must be >= 1, got {self.exact_threshold}")
        if self.permutations_m < 1:
            raise InvalidParameter(f"permutations_m must be >= 1, got {self.permutations_m}")
        if self.top_k is not None and self.top_k < 1:
            raise InvalidParameter(f"top_k must be >= 1, got {self.top_k}")
        if self.rank_by not in RANK_MODES:
            raise InvalidParameter(f"rank_by must be one of {RANK_MODES}, got {self.rank_by!r}")
        if self.iteration_limit is not None and self.iteration_limit < 1:
            raise InvalidParameter(f"iteration_limit must be >= 1, got {self.iteration_limit}")
        if self.workers < 1:
            raise InvalidParameter(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ConfounderRow:
    """One confounder's attribution values and rank."""

    name: str
    shapley: float
    add_one: float | None
    remove_one: float | None
    rank: int
    pct_contribution: float | None
    shapley_stderr: float | None = None


@dataclass(frozen=True)
class AttributionReport:
    """Full outcome of one attribution run; rows follow input order."""

    rows: tuple[ConfounderRow, ...]
    r_empty: float
    r_full: float
    delta: float
    sum_shapley: float
    mode: str
    m: int | None
    m_used: int | None
    seed: int
    dead_draws: int
    per_player_variance: tuple[float, ...] | None
    matched_fraction_full: float | None
    matched_fraction_singletons: tuple[float, ...] | None
    selection: tuple[str, ...] | None
    selection_mode: str | None
    top_k: int | None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rows)

    @property
    def shapley_values(self) -> np.ndarray:
        return np.array([r.shapley for r in self.rows])

    def rows_by_rank(self) -> list[ConfounderRow]:
        return sorted(self.rows, key=lambda r: r.rank)

    def to_dict(self) -> dict:
        matching = None
        if self.matched_fraction_full is not None:
            matching = {
                "full": self.matched_fraction_full,
                "singletons": {
                    r.name: f
                    for r, f in zip(self.rows, self.matched_fraction_singletons or ())
                },
            }
        selection = None
        if self.selection is not None:
            selection = {
                "k": self.top_k,
                "mode": self.selection_mode,
                "confounders": list(self.selection),
            }
        return {
            "confounders": list(self.names),
            "rows": [
                {
                    "name": r.name,
                    "shapley": r.shapley,
                    "shapley_stderr": r.shapley_stderr,
                    "add_one": r.add_one,
                    "remove_one": r.remove_one,
                    "rank": r.rank,
                    "pct_contribution": r.pct_contribution,
                }
                for r in self.rows
            ],
            "totals": {
                "r_empty": self.r_empty,
                "r_full": self.r_full,
                "delta": self.delta,
                "sum_shapley": self.sum_shapley,
            },
            "estimator": {
                "mode": self.mode,
                "m": self.m,
                "m_used": self.m_used,
                "seed": self.seed,
                "dead_draws": self.dead_draws,
                "per_player_sample_variance": (
                    list(self.per_player_variance) if self.per_player_variance is not None else None
                ),
            },
            "matching": matching,
            "selection": selection,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "AttributionReport":
        rows = tuple(
            ConfounderRow(
                name=r["name"],
                shapley=float(r["shapley"]),
                add_one=None if r["add_one"] is None else float(r["add_one"]),
                remove_one=None if r["remove_one"] is None else float(r["remove_one"]),
                rank=int(r["rank"]),
                pct_contribution=(
                    None if r["pct_contribution"] is None else float(r["pct_contribution"])
                ),
                shapley_stderr=(
                    None if r["shapley_stderr"] is None else float(r["shapley_stderr"])
                ),
            )
            for r in data["rows"]
        )
        totals = data["totals"]
        est = data["estimator"]
        matching = data.get("matching")
        matched_full = None
        matched_singletons = None
        if matching is not None:
            matched_full = float(matching["full"])
            singles = matching["singletons"]
            matched_singletons = tuple(float(singles[r.name]) for r in rows)
        selection = data.get("selection")
        var = est.get("per_player_sample_variance")
        return cls(
            rows=rows,
            r_empty=float(totals["r_empty"]),
            r_full=float(totals["r_full"]),
            delta=float(totals["delta"]),
            sum_shapley=float(totals["sum_shapley"]),
            mode=est["mode"],
            m=est["m"],
            m_used=est["m_used"],
            seed=int(est["seed"]),
            dead_draws=int(est["dead_draws"]),
            per_player_variance=None if var is None else tuple(float(v) for v in var),
            matched_fraction_full=matched_full,
            matched_fraction_singletons=matched_singletons,
            selection=None if selection is None else tuple(selection["confounders"]),
            selection_mode=None if selection is None else selection["mode"],
            top_k=None if selection is None else selection["k"],
        )


def _ranks(values: np.ndarray) -> np.ndarray:
    # Descending by signed value; ties keep input order.
    order = np.argsort(-values, kind="stable")
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def _ordered_names(names: Sequence[str], values: np.ndarray, mode: str) -> list[str]:
    key = np.abs(values) if mode == "magnitude" else values
    order = np.argsort(-key, kind="stable")
    return [names[i] for i in order]


def attribute_game(
    game: CoalitionGame,
    names: Sequence[str],
    cfg: AttributionConfig | None = None,
    *,
    matched_fraction_full: float | None = None,
    matched_fraction_singletons: Sequence[float] | None = None,
) -> AttributionReport:
    """Attribution report for an already-built coalition game."""
    cfg = cfg or AttributionConfig()
    names = tuple(names)
    n = game.n
    if len(names) != n:
        raise ValueError(f"{len(names)} names for a {n}-player game")

    delta = game.value(game.grand_coalition)
    r_empty = game.raw_at_empty
    r_full = r_empty + delta

    if n <= cfg.exact_threshold:
        vec = shapley_exact(game)
        shap = vec.values
        mode = "exact"
        m = m_used = None
        dead = 0
        variances = None
        stderr = [None] * n
    else:
        est = shapley_sampled(
            game,
            SamplingConfig(
                m=cfg.permutations_m,
                seed=cfg.seed,
                per_player=cfg.per_player,
                skip_dead_draws=cfg.skip_dead_draws,
                workers=cfg.workers,
            ),
            max_total_draws=cfg.iteration_limit,
        )
        shap = est.values
        mode = "sampled"
        m = cfg.permutations_m
        m_used = est.m_used
        dead = est.dead_draws
        variances = tuple(float(v) for v in est.per_player_sample_variance)
        stderr = [float(s) for s in est.stderr]

    add_vals = add_one(game).values if cfg.add_one else None
    rem_vals = remove_one(game).values if cfg.remove_one else None

    sum_shapley = float(np.sum(shap))
    ranks = _ranks(shap)
    use_pct = abs(sum_shapley) > 1e-12

    rows = tuple(
        ConfounderRow(
            name=names[i],
            shapley=float(shap[i]),
            add_one=None if add_vals is None else float(add_vals[i]),
            remove_one=None if rem_vals is None else float(rem_vals[i]),
            rank=int(ranks[i]),
            pct_contribution=float(shap[i] / sum_shapley) if use_pct else None,
            shapley_stderr=stderr[i],
        )
        for i in range(n)
    )

    selection = None
    if cfg.top_k is not None:
        if not 1 <= cfg.top_k <= n:
            raise InvalidK(f"top_k must be in 1..{n}, got {cfg.top_k}")
        selection = tuple(_ordered_names(names, shap, cfg.rank_by)[: cfg.top_k])

    return AttributionReport(
        rows=rows,
        r_empty=float(r_empty),
        r_full=float(r_full),
        delta=float(delta),
        sum_shapley=sum_shapley,
        mode=mode,
        m=m,
        m_used=m_used,
        seed=cfg.seed,
        dead_draws=dead,
        per_player_variance=variances,
        matched_fraction_full=matched_fraction_full,
        matched_fraction_singletons=(
            None if matched_fraction_singletons is None else tuple(matched_fraction_singletons)
        ),
        selection=selection,
        selection_mode=cfg.rank_by if selection is not None else None,
        top_k=cfg.top_k if selection is not None else None,
    )


def attribute(
    dataset: FunnelDataset,
    spec: cem.CoarseningSpec | None = None,
    cfg: AttributionConfig | None = None,
) -> AttributionReport:
    """Run the full pipeline on a dataset.

    Builds the adjusted-survival-ratio characteristic function, shifts it
    to zero at the empty subset, dispatches exact vs sampled Shapley per
    the config, and assembles the report. Failures at the empty or full
    coalition are fatal and propagate; failures on intermediate coalitions
    follow the engines' policy (abort in exact mode, redraw in sampled
    mode when ``skip_dead_draws`` is set).
    """
    cfg = cfg or AttributionConfig()
    char = characteristic_fn(dataset, spec)
    game = shift_to_zero(char, char.n)
    full = game.grand_coalition
    game.value(full)  # fail fast if the full coalition is unevaluable

    report = attribute_game(
        game,
        char.names,
        cfg,
        matched_fraction_full=char.ratio(full).matched_fraction,
        matched_fraction_singletons=[
            char.ratio(1 << i).matched_fraction for i in range(char.n)
        ],
    )
    return report


def select_top_k(report: AttributionReport, k: int, mode: str | None = None) -> list[str]:
    """The k confounders with the largest Shapley values, in rank order.

    ``mode`` is ``"magnitude"`` (default; large negative contributions count
    as important) or ``"signed"`` (literal largest values).
    """
    n = len(report.rows)
    if not 1 <= k <= n:
        raise InvalidK(f"k must be in 1..{n}, got {k}")
    mode = mode or "magnitude"
    if mode not in RANK_MODES:
        raise InvalidK(f"mode must be one of {RANK_MODES}, got {mode!r}")
    return _ordered_names(report.names, report.shapley_values, mode)[:k]


@dataclass(frozen=True)
class EfficiencyCheck:
    """Result of the sum-equals-delta verification."""

    mode: str
    residual: float
    bound: float
    passed: bool


def verify_efficiency(report: AttributionReport, tolerance: float = 1e-9) -> EfficiencyCheck:
    """Check that Shapley values sum to the survival-ratio difference.

    Exact mode must close to within ``tolerance`` (relative to the scale of
    delta). Sampled mode is held to a four-standard-error band combined
    from the per-player sampling variances.
    """
    residual = abs(report.sum_shapley - report.delta)
    if report.mode == "exact":
        bound = tolerance * max(1.0, abs(report.delta))
    else:
        if report.per_player_variance is None or not report.m_used:
            bound = math.inf
        else:
            bound = 4.0 * math.sqrt(sum(report.per_player_variance) / report.m_used)
    return EfficiencyCheck(report.mode, residual, bound, residual <= bound)
