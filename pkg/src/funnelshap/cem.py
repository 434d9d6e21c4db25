"""Coarsened exact matching: binning rules, strata, weights, diagnostics.

Coarsening turns each confounder column into integer bin codes; bin edges
and category tables are computed once per dataset and frozen, so every
confounder subset is evaluated against identical bins. Exact matching then
groups units on the tuple of codes for the active subset. A stratum is
matched when it holds at least one treatment and one control unit;
weighting follows the usual CEM convention (treatment weight 1, control
weights rebalanced to the treatment composition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import EmptyDataset, NoMatchedStrata, NonNumericForNumericRule

MISSING_LABEL = "MISSING"
DEFAULT_NUMERIC_BINS = 10


@dataclass(frozen=True)
class CategoricalRule:
    """Each distinct value is its own bin."""


@dataclass(frozen=True)
class EqualWidthRule:
    """k equal-width bins over the dataset's [min, max]."""

    bins: int

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")


@dataclass(frozen=True)
class EqualFrequencyRule:
    """k bins with edges at the dataset's j/k quantiles."""

    bins: int

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")


@dataclass(frozen=True)
class CutpointRule:
    """Explicit interior edges; values outside fall in the edge bins."""

    edges: tuple[float, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        if not edges:
            raise ValueError("cutpoints need at least one edge")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"cutpoints must be strictly increasing, got {edges}")
        object.__setattr__(self, "edges", edges)


Rule = CategoricalRule | EqualWidthRule | EqualFrequencyRule | CutpointRule


class CoarseningSpec:
    """Per-confounder coarsening rules with kind-based defaults.

    Unless overridden, categorical confounders use identity bins and
    numeric confounders use equal-frequency binning with
    ``DEFAULT_NUMERIC_BINS`` bins.
    """

    def __init__(self, rules: Mapping[str, Rule] | None = None):
        self.rules = dict(rules or {})

    def rule_for(self, name: str, kind: str) -> Rule:
        rule = self.rules.get(name)
        if rule is not None:
            return rule
        if kind == "categorical":
            return CategoricalRule()
        return EqualFrequencyRule(DEFAULT_NUMERIC_BINS)


class _Binner:
    """Frozen bin assignment for one confounder column.

    Real bins are coded ``0..n_real_bins-1``; missing values always map to
    the reserved code ``n_real_bins`` so the unit population survives every
    coalition unchanged.
    """

    def __init__(self, kind, categories=None, edges=None, n_real_bins=None):
        self.kind = kind  # "categorical" | "numeric"
        self.categories = categories
        self.edges = edges
        if n_real_bins is None:
            n_real_bins = len(categories) if categories is not None else len(edges) + 1
        self.n_real_bins = max(1, int(n_real_bins))
        self.missing_code = self.n_real_bins

    def codes(self, column: np.ndarray) -> np.ndarray:
        if self.kind == "categorical":
            lookup = {cat: i for i, cat in enumerate(self.categories)}
            out = np.fromiter(
                (self.missing_code if v is None else lookup[v] for v in column),
                dtype=np.int32,
                count=len(column),
            )
            return out
        values = np.asarray(column, dtype=float)
        miss = np.isnan(values)
        out = np.searchsorted(self.edges, values, side="right").astype(np.int32)
        out[miss] = self.missing_code
        return out

    def label(self, code: int) -> str:
        if code == self.missing_code:
            return MISSING_LABEL
        if self.kind == "categorical":
            return str(self.categories[code])
        lo = "-inf" if code == 0 else f"{self.edges[code - 1]:g}"
        hi = "inf" if code == len(self.edges) else f"{self.edges[code]:g}"
        return f"[{lo}, {hi})"


def _fit_binner(column: np.ndarray, kind: str, rule: Rule) -> _Binner:
    if isinstance(rule, CategoricalRule):
        if kind == "categorical":
            present = sorted({v for v in column if v is not None})
        else:
            values = np.asarray(column, dtype=float)
            present = [float(v) for v in np.unique(values[~np.isnan(values)])]
        return _Binner("categorical", categories=tuple(present))

    if kind != "numeric":
        raise NonNumericForNumericRule(
            f"{type(rule).__name__} cannot bin categorical values; "
            "declare the confounder numeric or use a categorical rule"
        )
    values = np.asarray(column, dtype=float)
    finite = values[~np.isnan(values)]

    if isinstance(rule, CutpointRule):
        return _Binner("numeric", edges=np.asarray(rule.edges, dtype=float))

    if finite.size == 0:
        # Nothing to fit on; a single real bin keeps the column inert.
        return _Binner("numeric", edges=np.empty(0), n_real_bins=1)

    if isinstance(rule, EqualWidthRule):
        lo, hi = float(finite.min()), float(finite.max())
        edges = np.linspace(lo, hi, rule.bins + 1)[1:-1]
        return _Binner("numeric", edges=edges, n_real_bins=rule.bins)

    if isinstance(rule, EqualFrequencyRule):
        qs = np.arange(1, rule.bins) / rule.bins
        edges = np.quantile(finite, qs) if rule.bins > 1 else np.empty(0)
        return _Binner("numeric", edges=np.asarray(edges, dtype=float), n_real_bins=rule.bins)

    raise TypeError(f"unknown coarsening rule {rule!r}")


class FrozenCoarsening:
    """Bin codes for every (unit, confounder), with the fit frozen.

    Fitting happens once against the full dataset; selecting the columns of
    a confounder subset is then the only per-coalition work, which is what
    guarantees each coalition sees identical bin edges.
    """

    def __init__(self, names, binners, codes):
        self.names = tuple(names)
        self.binners = tuple(binners)
        self.codes = codes

    @classmethod
    def fit(cls, dataset, spec: CoarseningSpec | None = None) -> "FrozenCoarsening":
        spec = spec or CoarseningSpec()
        if len(dataset) == 0:
            raise EmptyDataset("cannot coarsen an empty dataset")
        names = dataset.confounder_names
        kinds = dataset.confounder_kinds
        binners = []
        codes = np.empty((len(dataset), len(names)), dtype=np.int32)
        for i, (name, kind) in enumerate(zip(names, kinds)):
            column = dataset.confounder_column(i)
            binner = _fit_binner(column, kind, spec.rule_for(name, kind))
            binners.append(binner)
            codes[:, i] = binner.codes(column)
        return cls(names, binners, codes)

    def subset_codes(self, subset: int) -> np.ndarray:
        """Code matrix restricted to the confounders in the subset bitmask."""
        if subset >> len(self.names):
            raise ValueError(
                f"subset {subset:#x} names confounders beyond the {len(self.names)} fitted"
            )
        cols = [i for i in range(len(self.names)) if subset >> i & 1]
        return self.codes[:, cols]

    def decode(self, confounder_index: int, codes) -> list[str]:
        binner = self.binners[confounder_index]
        return [binner.label(int(c)) for c in np.asarray(codes).ravel()]


def coarsen(dataset, spec: CoarseningSpec | None, subset: int) -> np.ndarray:
    """Bin-code matrix for the confounders in ``subset`` (one column each)."""
    return FrozenCoarsening.fit(dataset, spec).subset_codes(subset)


@dataclass
class StratumTable:
    """Matched strata over one coarsened label matrix.

    ``stratum_of_unit`` indexes into the per-stratum arrays; ``groups`` is
    True for treatment units. A stratum is matched iff it holds at least
    one unit of each group; ``M_T``/``M_C`` count units in matched strata.
    """

    keys: tuple[tuple[int, ...], ...]
    treatment_counts: np.ndarray
    control_counts: np.ndarray
    stratum_of_unit: np.ndarray
    groups: np.ndarray
    matched: np.ndarray = field(init=False)

    def __post_init__(self):
        self.matched = (self.treatment_counts > 0) & (self.control_counts > 0)

    @property
    def n_units(self) -> int:
        return len(self.stratum_of_unit)

    @property
    def n_strata(self) -> int:
        return len(self.keys)

    @property
    def M_T(self) -> int:
        return int(self.treatment_counts[self.matched].sum())

    @property
    def M_C(self) -> int:
        return int(self.control_counts[self.matched].sum())

    @property
    def matched_mask(self) -> np.ndarray:
        """Per-unit flag: does this unit sit in a matched stratum."""
        return self.matched[self.stratum_of_unit]

    def members(self, stratum_index: int) -> np.ndarray:
        return np.nonzero(self.stratum_of_unit == stratum_index)[0]


def stratify(labels: np.ndarray, groups: np.ndarray) -> StratumTable:
    """Group units exactly on their full label tuple.

    ``labels`` has one row per unit and one column per active confounder;
    zero columns put every unit in a single stratum.
    """
    labels = np.asarray(labels)
    groups = np.asarray(groups, dtype=bool)
    if labels.ndim != 2 or labels.shape[0] != groups.shape[0]:
        raise ValueError("labels and groups must cover the same units")
    n_units = groups.shape[0]
    if n_units == 0:
        raise EmptyDataset("cannot stratify zero units")
    if labels.shape[1] == 0:
        keys: tuple[tuple[int, ...], ...] = ((),)
        inverse = np.zeros(n_units, dtype=np.intp)
    else:
        uniq, inverse = np.unique(labels, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        keys = tuple(tuple(int(v) for v in row) for row in uniq)
    t = np.bincount(inverse[groups], minlength=len(keys))
    c = np.bincount(inverse[~groups], minlength=len(keys))
    return StratumTable(keys, t, c, inverse, groups)


def weights(table: StratumTable) -> np.ndarray:
    """Per-unit CEM weights.

    Treatment units in matched strata weigh 1; control units in matched
    stratum s weigh ``(T_s / C_s) * (M_C / M_T)``; units in unmatched strata
    weigh 0. Control weights therefore sum to ``M_C`` and treatment weights
    to ``M_T``.
    """
    if not table.matched.any():
        raise NoMatchedStrata("every stratum contains only one group")
    w = np.zeros(table.n_units, dtype=float)
    unit_matched = table.matched_mask
    w[table.groups & unit_matched] = 1.0
    ratio = np.zeros(table.n_strata, dtype=float)
    ratio[table.matched] = (
        table.treatment_counts[table.matched] / table.control_counts[table.matched]
    )
    scale = table.M_C / table.M_T
    control = ~table.groups & unit_matched
    w[control] = ratio[table.stratum_of_unit[control]] * scale
    return w


def matching_rate(table: StratumTable) -> float:
    """Fraction of units that landed in a matched stratum."""
    return float(table.matched_mask.mean())
