"""Funnel survival ratios, raw and CEM-adjusted, as a set function.

The survival ratio compares how the treatment/control composition changes
from the previous funnel stage to the current one. Adjusting for a
confounder subset means matching the previous-stage (at-risk) population
on its coarsened values and reweighting both stages with the resulting CEM
weights. Evaluated over all subsets, the adjusted ratio is the
characteristic function the attribution engines consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import cem
from .errors import DegenerateFunnel, EmptyDataset, EvaluationFailed, NoMatchedStrata
from .games import members

TREATMENT = "treatment"
CONTROL = "control"

_GROUPS = (TREATMENT, CONTROL)


@dataclass(frozen=True)
class UnitRecord:
    """One member: group label, funnel-stage flags, confounder values."""

    unit_id: str
    group: str
    in_previous: bool
    survived: bool
    confounders: tuple

    def __post_init__(self):
        if self.group not in _GROUPS:
            raise ValueError(f"group must be one of {_GROUPS}, got {self.group!r}")
        if self.survived and not self.in_previous:
            raise ValueError(
                f"unit {self.unit_id}: survived implies membership in the previous funnel"
            )
        object.__setattr__(self, "confounders", tuple(self.confounders))


def _infer_kind(values: Iterable) -> str:
    for v in values:
        if v is None:
            continue
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return "categorical"
    return "numeric"


class FunnelDataset:
    """Immutable collection of units with typed confounder columns."""

    def __init__(
        self,
        records: Sequence[UnitRecord],
        confounder_names: Sequence[str],
        kinds: Sequence[str] | None = None,
    ):
        self._records = tuple(records)
        if not self._records:
            raise EmptyDataset("a funnel dataset needs at least one unit")
        self.confounder_names = tuple(confounder_names)
        n = len(self.confounder_names)
        for r in self._records:
            if len(r.confounders) != n:
                raise ValueError(
                    f"unit {r.unit_id} has {len(r.confounders)} confounder values, expected {n}"
                )
        if kinds is None:
            kinds = tuple(
                _infer_kind(r.confounders[i] for r in self._records) for i in range(n)
            )
        else:
            kinds = tuple(kinds)
            if len(kinds) != n:
                raise ValueError("kinds must match confounder_names")
            for k in kinds:
                if k not in ("numeric", "categorical"):
                    raise ValueError(f"unknown confounder kind {k!r}")
        self.confounder_kinds = kinds

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, idx):
        return self._records[idx]

    @property
    def n_confounders(self) -> int:
        return len(self.confounder_names)

    @cached_property
    def treatment_mask(self) -> np.ndarray:
        return np.array([r.group == TREATMENT for r in self._records])

    @cached_property
    def in_previous_mask(self) -> np.ndarray:
        return np.array([r.in_previous for r in self._records])

    @cached_property
    def survived_mask(self) -> np.ndarray:
        return np.array([r.survived for r in self._records])

    @cached_property
    def _columns(self) -> tuple[np.ndarray, ...]:
        cols = []
        for i, kind in enumerate(self.confounder_kinds):
            raw = [r.confounders[i] for r in self._records]
            if kind == "numeric":
                col = np.empty(len(raw), dtype=float)
                for j, v in enumerate(raw):
                    if v is None or (isinstance(v, float) and np.isnan(v)):
                        col[j] = np.nan
                    elif isinstance(v, (int, float)) and not isinstance(v, bool):
                        col[j] = float(v)
                    else:
                        raise ValueError(
                            f"confounder {self.confounder_names[i]!r} is numeric "
                            f"but unit {self._records[j].unit_id} has value {v!r}"
                        )
                cols.append(col)
            else:
                cols.append(
                    np.array([None if v is None else str(v) for v in raw], dtype=object)
                )
        return tuple(cols)

    def confounder_column(self, index: int) -> np.ndarray:
        return self._columns[index]

    def with_swapped_groups(self) -> "FunnelDataset":
        """The same units with treatment and control labels exchanged."""
        swapped = [
            UnitRecord(
                r.unit_id,
                CONTROL if r.group == TREATMENT else TREATMENT,
                r.in_previous,
                r.survived,
                r.confounders,
            )
            for r in self._records
        ]
        return FunnelDataset(swapped, self.confounder_names, self.confounder_kinds)


@dataclass(frozen=True)
class SurvivalRatio:
    """A survival ratio plus the pieces it was assembled from."""

    value: float
    prev_ratio: float
    curr_ratio: float
    matched_fraction: float
    subset: int


def _require_positive(count: float, what: str):
    if count <= 0:
        raise DegenerateFunnel(f"{what} is zero; survival ratio undefined")


def raw_survival_ratio(dataset: FunnelDataset) -> SurvivalRatio:
    """Unadjusted ratio: current-stage group ratio over previous-stage group ratio."""
    prev = dataset.in_previous_mask
    treat = dataset.treatment_mask
    surv = dataset.survived_mask
    t_prev = int((prev & treat).sum())
    c_prev = int((prev & ~treat).sum())
    t_curr = int((surv & treat).sum())
    c_curr = int((surv & ~treat).sum())
    _require_positive(t_prev, "previous-funnel treatment count")
    _require_positive(c_prev, "previous-funnel control count")
    _require_positive(t_curr, "current-funnel treatment count")
    _require_positive(c_curr, "current-funnel control count")
    prev_ratio = t_prev / c_prev
    curr_ratio = t_curr / c_curr
    return SurvivalRatio(curr_ratio / prev_ratio, prev_ratio, curr_ratio, 1.0, 0)


def adjusted_survival_ratio(
    dataset: FunnelDataset,
    spec: cem.CoarseningSpec | None,
    subset: int,
    *,
    _frozen: cem.FrozenCoarsening | None = None,
) -> SurvivalRatio:
    """Survival ratio after CEM-matching the at-risk set on ``subset``.

    The previous-funnel population is stratified on the coarsened subset
    and both stages are reweighted with the stratum weights; survival flags
    act as the downstream outcome. The empty subset routes to
    :func:`raw_survival_ratio` upstream and is rejected here.
    """
    if subset == 0:
        raise ValueError("the empty subset routes to raw_survival_ratio")
    if subset >> dataset.n_confounders:
        raise ValueError(f"subset {subset:#x} names confounders beyond {dataset.n_confounders}")
    frozen = _frozen if _frozen is not None else cem.FrozenCoarsening.fit(dataset, spec)
    prev = dataset.in_previous_mask
    if not prev.any():
        raise DegenerateFunnel("previous funnel is empty; survival ratio undefined")
    labels = frozen.subset_codes(subset)[prev]
    groups = dataset.treatment_mask[prev]
    surv = dataset.survived_mask[prev]
    table = cem.stratify(labels, groups)
    w = cem.weights(table)
    w_t_prev = float(w[groups].sum())
    w_c_prev = float(w[~groups].sum())
    w_t_curr = float(w[groups & surv].sum())
    w_c_curr = float(w[~groups & surv].sum())
    _require_positive(w_t_prev, "weighted previous-funnel treatment count")
    _require_positive(w_c_prev, "weighted previous-funnel control count")
    _require_positive(w_t_curr, "weighted current-funnel treatment count")
    _require_positive(w_c_curr, "weighted current-funnel control count")
    prev_ratio = w_t_prev / w_c_prev
    curr_ratio = w_t_curr / w_c_curr
    return SurvivalRatio(
        curr_ratio / prev_ratio,
        prev_ratio,
        curr_ratio,
        cem.matching_rate(table),
        subset,
    )


class SurvivalCharacteristic:
    """Memoising map from confounder subsets to adjusted survival ratios.

    Callable as ``r(bitmask) -> float`` for the attribution engines;
    :meth:`ratio` returns the full :class:`SurvivalRatio` with matching
    diagnostics. Evaluation failures are wrapped in
    :class:`~funnelshap.errors.EvaluationFailed` carrying the coalition,
    and are memoised too (the function is deterministic, so a dead subset
    stays dead).
    """

    def __init__(self, dataset: FunnelDataset, spec: cem.CoarseningSpec | None = None):
        self.dataset = dataset
        self.spec = spec or cem.CoarseningSpec()
        self.n = dataset.n_confounders
        self.names = dataset.confounder_names
        self._frozen = cem.FrozenCoarsening.fit(dataset, self.spec)
        self._ratios: dict[int, SurvivalRatio] = {}
        self._failures: dict[int, EvaluationFailed] = {}

    def ratio(self, subset: int) -> SurvivalRatio:
        subset = int(subset)
        hit = self._ratios.get(subset)
        if hit is not None:
            return hit
        failed = self._failures.get(subset)
        if failed is not None:
            raise failed
        try:
            if subset == 0:
                r = raw_survival_ratio(self.dataset)
            else:
                r = adjusted_survival_ratio(self.dataset, self.spec, subset, _frozen=self._frozen)
        except (DegenerateFunnel, NoMatchedStrata) as exc:
            named = [self.names[i] for i in members(subset)]
            err = EvaluationFailed(
                f"survival ratio undefined for coalition {named or '(empty)'}: {exc}",
                coalition=subset,
            )
            err.__cause__ = exc
            self._failures[subset] = err
            raise err
        self._ratios[subset] = r
        return r

    def __call__(self, subset: int) -> float:
        return self.ratio(subset).value


def characteristic_fn(
    dataset: FunnelDataset, spec: cem.CoarseningSpec | None = None
) -> SurvivalCharacteristic:
    """The adjusted survival ratio as a deterministic function of subsets."""
    return SurvivalCharacteristic(dataset, spec)
