"""Raw and adjusted survival ratios and the characteristic function."""

import numpy as np
import pytest

from funnelshap import (
    CONTROL,
    TREATMENT,
    ConfounderSpec,
    DegenerateFunnel,
    EmptyDataset,
    EvaluationFailed,
    FunnelDataset,
    GeneratorConfig,
    UnitRecord,
    adjusted_survival_ratio,
    characteristic_fn,
    generate,
    raw_survival_ratio,
    shapley_exact,
    shift_to_zero,
)

from conftest import and_structure_dataset, append_constant_confounder, cells_dataset


def simple_funnel(t_prev, c_prev, t_curr, c_curr):
    cells = [
        ((0,), TREATMENT, t_prev, t_curr),
        ((0,), CONTROL, c_prev, c_curr),
    ]
    return cells_dataset(cells, ["c0"])


class TestUnitRecord:
    def test_survival_implies_previous_membership(self):
        with pytest.raises(ValueError):
            UnitRecord("u0", TREATMENT, False, True, ())

    def test_group_labels_are_checked(self):
        with pytest.raises(ValueError):
            UnitRecord("u0", "exposed", True, False, ())


class TestFunnelDataset:
    def test_needs_units(self):
        with pytest.raises(EmptyDataset):
            FunnelDataset([], ["c0"])

    def test_confounder_arity_is_checked(self):
        rec = UnitRecord("u0", TREATMENT, True, False, (1.0,))
        with pytest.raises(ValueError):
            FunnelDataset([rec], ["a", "b"])

    def test_kind_inference(self):
        records = [
            UnitRecord("u0", TREATMENT, True, False, (1.0, "US")),
            UnitRecord("u1", CONTROL, True, False, (2.5, "BR")),
        ]
        ds = FunnelDataset(records, ["score", "country"])
        assert ds.confounder_kinds == ("numeric", "categorical")

    def test_declared_numeric_with_string_value_fails(self):
        records = [UnitRecord("u0", TREATMENT, True, False, ("oops",))]
        ds = FunnelDataset(records, ["x"], kinds=["numeric"])
        with pytest.raises(ValueError):
            ds.confounder_column(0)


class TestRawSurvivalRatio:
    def test_balanced_funnel_is_one(self):
        ds = simple_funnel(100, 100, 50, 50)
        assert raw_survival_ratio(ds).value == 1.0

    def test_hand_computed_ratio(self):
        # (60/40) / (100/100) = 1.5
        ds = simple_funnel(100, 100, 60, 40)
        r = raw_survival_ratio(ds)
        assert r.value == 1.5
        assert r.prev_ratio == 1.0
        assert r.curr_ratio == 1.5
        assert r.matched_fraction == 1.0

    def test_zero_control_survivors_is_degenerate(self):
        ds = simple_funnel(100, 100, 50, 0)
        with pytest.raises(DegenerateFunnel, match="control count"):
            raw_survival_ratio(ds)

    def test_zero_previous_treatment_is_degenerate(self):
        cells = [((0,), CONTROL, 10, 5)]
        ds = cells_dataset(cells, ["c0"])
        with pytest.raises(DegenerateFunnel, match="treatment count"):
            raw_survival_ratio(ds)


class TestAdjustedSurvivalRatio:
    def test_constant_confounder_reduces_to_raw(self):
        ds = simple_funnel(80, 40, 30, 10)
        raw = raw_survival_ratio(ds).value
        adj = adjusted_survival_ratio(ds, None, 0b1)
        assert adj.value == raw
        assert adj.matched_fraction == 1.0

    def test_conditioning_removes_planted_skew(self):
        # Within each device level, treatment and control survive at equal
        # rates; marginally they differ because group composition differs by
        # device. Adjusting on the device removes the skew entirely.
        cells = [
            (("A",), TREATMENT, 100, 80), (("A",), CONTROL, 50, 40),
            (("B",), TREATMENT, 50, 15), (("B",), CONTROL, 100, 30),
        ]
        ds = cells_dataset(cells, ["device"])
        assert raw_survival_ratio(ds).value != pytest.approx(1.0, abs=0.05)
        adj = adjusted_survival_ratio(ds, None, 0b1)
        assert adj.value == pytest.approx(1.0, abs=1e-12)

    def test_irrelevant_confounders_leave_ratio_near_raw(self):
        cfg = GeneratorConfig(
            seed=21,
            n_units=10_000,
            confounders=(
                ConfounderSpec("noise_cat", "categorical", ("a", "b", "c"), {}, {}),
                ConfounderSpec("noise_num", "numeric", None, 0.0, 0.0),
            ),
        )
        ds = generate(cfg)
        raw = raw_survival_ratio(ds)
        adj = adjusted_survival_ratio(ds, None, 0b11)
        # no confounding planted: both are ~1 within binomial noise
        t_prev = int(ds.treatment_mask.sum())
        c_prev = len(ds) - t_prev
        p_t = ds.survived_mask[ds.treatment_mask].mean()
        p_c = ds.survived_mask[~ds.treatment_mask].mean()
        se = np.sqrt((1 - p_t) / (p_t * t_prev) + (1 - p_c) / (p_c * c_prev))
        assert abs(raw.value - 1.0) <= 3 * se
        assert abs(adj.value - 1.0) <= 3 * se

    def test_empty_subset_is_rejected(self):
        ds = simple_funnel(10, 10, 5, 5)
        with pytest.raises(ValueError):
            adjusted_survival_ratio(ds, None, 0)

    def test_subset_beyond_confounders_is_rejected(self):
        ds = simple_funnel(10, 10, 5, 5)
        with pytest.raises(ValueError):
            adjusted_survival_ratio(ds, None, 0b10)

    def test_degenerate_weighted_survivors(self):
        cells = [
            (("A",), TREATMENT, 10, 0),
            (("A",), CONTROL, 10, 5),
        ]
        ds = cells_dataset(cells, ["device"])
        with pytest.raises(DegenerateFunnel, match="current-funnel treatment"):
            adjusted_survival_ratio(ds, None, 0b1)


class TestCharacteristicFn:
    def test_empty_subset_equals_raw(self):
        ds = and_structure_dataset()
        char = characteristic_fn(ds)
        assert char(0) == raw_survival_ratio(ds).value

    def test_repeated_evaluation_is_identical(self):
        ds = and_structure_dataset()
        char = characteristic_fn(ds)
        assert char(0b11) == char(0b11)
        assert char.ratio(0b01) is char.ratio(0b01)

    def test_failure_carries_coalition(self):
        # a confounder equal to the group label makes every stratum single-group
        cells = [
            (("t",), TREATMENT, 10, 5),
            (("c",), CONTROL, 10, 5),
        ]
        ds = cells_dataset(cells, ["leak"])
        char = characteristic_fn(ds)
        with pytest.raises(EvaluationFailed) as err:
            char(0b1)
        assert err.value.coalition == 0b1
        with pytest.raises(EvaluationFailed):
            char(0b1)  # memoised failure stays failed

    def test_constant_confounder_is_a_dummy_player(self):
        ds = append_constant_confounder(and_structure_dataset(), "const")
        char = characteristic_fn(ds)
        game = shift_to_zero(char, char.n)
        phi = shapley_exact(game)
        assert abs(phi.values[2]) <= 1e-14

    def test_constant_confounder_never_changes_any_ratio(self):
        base = and_structure_dataset()
        extended = append_constant_confounder(base, "const")
        char = characteristic_fn(base)
        char_ext = characteristic_fn(extended)
        const_bit = 1 << 2
        for subset in range(4):
            if subset == 0:
                assert char_ext(const_bit) == char(0)
            else:
                assert char_ext(subset | const_bit) == char(subset)
            assert char_ext(subset) == char(subset)

    def test_group_relabel_antisymmetry(self):
        # Exact at the empty subset on any dataset; exact everywhere when
        # stratum compositions are proportional (here: weights identically 1).
        cells = [
            (("A",), TREATMENT, 40, 30), (("A",), CONTROL, 20, 10),
            (("B",), TREATMENT, 20, 5), (("B",), CONTROL, 10, 4),
        ]
        ds = cells_dataset(cells, ["device"])
        swapped = ds.with_swapped_groups()
        char = characteristic_fn(ds)
        char_sw = characteristic_fn(swapped)
        for subset in (0b0, 0b1):
            product = char(subset) * char_sw(subset)
            assert product == pytest.approx(1.0, rel=1e-9)

    def test_duplicating_units_leaves_ratios_unchanged(self):
        ds = and_structure_dataset()
        doubled = FunnelDataset(
            list(ds) + list(ds), ds.confounder_names, ds.confounder_kinds
        )
        char = characteristic_fn(ds)
        char2 = characteristic_fn(doubled)
        for subset in range(4):
            assert char2(subset) == pytest.approx(char(subset), abs=1e-12)
