"""Shared builders for games and hand-constructed funnel datasets."""

import numpy as np
import pytest

from funnelshap import CONTROL, TREATMENT, CoalitionGame, FunnelDataset, UnitRecord


def table_game(n, seed, lo=-1.0, hi=1.0, cache=True):
    """Random game from a uniform value table (shifted to zero internally)."""
    rng = np.random.default_rng(seed)
    return CoalitionGame.from_table(rng.uniform(lo, hi, 1 << n), cache=cache)


def additive_game(coeffs):
    coeffs = tuple(float(c) for c in coeffs)

    def value(mask):
        return sum(coeffs[i] for i in range(len(coeffs)) if mask >> i & 1)

    return CoalitionGame(len(coeffs), value)


def cells_dataset(cells, names, kinds=None):
    """Dataset from exact per-cell counts.

    ``cells`` is a list of (confounder_values, group, count, survivors); the
    builder emits ``count`` previous-funnel units with ``survivors`` of them
    surviving. Deterministic, no sampling noise.
    """
    records = []
    uid = 0
    for values, group, count, survivors in cells:
        assert 0 <= survivors <= count
        for j in range(count):
            records.append(
                UnitRecord(
                    unit_id=f"u{uid:05d}",
                    group=group,
                    in_previous=True,
                    survived=j < survivors,
                    confounders=tuple(values),
                )
            )
            uid += 1
    return FunnelDataset(records, names, kinds)


def and_structure_dataset():
    """Two binary confounders whose singleton strata mirror the marginal mix.

    Each confounder's one-variable strata have the same 2:1 treatment:control
    composition as the whole population, so adjusting on either confounder
    alone reproduces the raw ratio exactly; the joint cells are unbalanced,
    so adjusting on both moves it. The induced game has the conjunction
    shape: v(empty) = v({0}) = v({1}) = 0 and v(full) != 0.
    """
    cells = [
        (("a", "a"), TREATMENT, 40, 20), (("a", "a"), CONTROL, 10, 2),
        (("a", "b"), TREATMENT, 20, 10), (("a", "b"), CONTROL, 20, 15),
        (("b", "a"), TREATMENT, 20, 10), (("b", "a"), CONTROL, 20, 15),
        (("b", "b"), TREATMENT, 40, 20), (("b", "b"), CONTROL, 10, 2),
    ]
    return cells_dataset(cells, ["x1", "x2"])


def append_constant_confounder(dataset, name, value="const"):
    """Copy of the dataset with one extra confounder that never varies."""
    records = [
        UnitRecord(r.unit_id, r.group, r.in_previous, r.survived, r.confounders + (value,))
        for r in dataset
    ]
    return FunnelDataset(
        records,
        dataset.confounder_names + (name,),
        dataset.confounder_kinds + ("categorical",),
    )


@pytest.fixture
def and_dataset():
    return and_structure_dataset()
