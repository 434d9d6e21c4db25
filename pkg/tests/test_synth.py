"""Synthetic generator: planted effects, determinism, validation."""

import numpy as np
import pytest

from funnelshap import (
    AttributionConfig,
    ConfounderSpec,
    GeneratorConfig,
    InvalidConfig,
    adjusted_survival_ratio,
    attribute,
    generate,
    raw_survival_ratio,
)


def binomial_se(dataset):
    treat = dataset.treatment_mask
    surv = dataset.survived_mask
    t_prev, c_prev = int(treat.sum()), int((~treat).sum())
    p_t = surv[treat].mean()
    p_c = surv[~treat].mean()
    return float(np.sqrt((1 - p_t) / (p_t * t_prev) + (1 - p_c) / (p_c * c_prev)))


def driver_spec(strength=1.0):
    return ConfounderSpec(
        "driver",
        "categorical",
        ("m", "d"),
        {"m": strength, "d": -strength},
        {"m": strength, "d": -strength},
    )


class TestGenerate:
    def test_no_confounding_gives_unit_ratio(self):
        cfg = GeneratorConfig(
            seed=100,
            n_units=100_000,
            confounders=(
                ConfounderSpec("a", "categorical", ("x", "y"), {}, {}),
                ConfounderSpec("b", "numeric", None, 0.0, 0.0),
            ),
        )
        ds = generate(cfg)
        r = raw_survival_ratio(ds)
        assert abs(r.value - 1.0) <= 3 * binomial_se(ds)

    def test_planted_driver_skews_raw_but_not_adjusted(self):
        cfg = GeneratorConfig(seed=17, n_units=50_000, confounders=(driver_spec(),))
        ds = generate(cfg)
        raw = raw_survival_ratio(ds).value
        adj = adjusted_survival_ratio(ds, None, 0b1).value
        se = binomial_se(ds)
        assert abs(raw - 1.0) > 10 * se  # strong planted skew
        assert abs(adj - 1.0) <= 3 * se  # conditional independence by construction

    def test_same_seed_reproduces_dataset(self):
        cfg = GeneratorConfig(seed=8, n_units=500, confounders=(driver_spec(),))
        a, b = generate(cfg), generate(cfg)
        assert list(a) == list(b)

    def test_different_seeds_differ(self):
        base = dict(n_units=500, confounders=(driver_spec(),))
        assert list(generate(GeneratorConfig(seed=1, **base))) != list(
            generate(GeneratorConfig(seed=2, **base))
        )

    def test_all_units_are_in_previous_funnel(self):
        cfg = GeneratorConfig(seed=8, n_units=200, confounders=(driver_spec(),))
        assert all(r.in_previous for r in generate(cfg))

    def test_numeric_confounder_values_are_floats(self):
        cfg = GeneratorConfig(
            seed=8,
            n_units=50,
            confounders=(ConfounderSpec("score", "numeric", None, 0.5, 0.25),),
        )
        ds = generate(cfg)
        assert ds.confounder_kinds == ("numeric",)
        assert all(isinstance(r.confounders[0], float) for r in ds)


class TestValidation:
    def test_rates_must_be_probabilities(self):
        with pytest.raises(InvalidConfig):
            generate(GeneratorConfig(seed=0, n_units=10, confounders=(), base_treatment_rate=1.0))

    def test_n_units_positive(self):
        with pytest.raises(InvalidConfig):
            generate(GeneratorConfig(seed=0, n_units=0, confounders=()))

    def test_categorical_needs_levels(self):
        with pytest.raises(InvalidConfig):
            generate(
                GeneratorConfig(
                    seed=0,
                    n_units=10,
                    confounders=(ConfounderSpec("a", "categorical", None, {}, {}),),
                )
            )

    def test_categorical_effects_must_be_mappings(self):
        with pytest.raises(InvalidConfig):
            generate(
                GeneratorConfig(
                    seed=0,
                    n_units=10,
                    confounders=(ConfounderSpec("a", "categorical", ("x",), 0.5, {}),),
                )
            )

    def test_numeric_effects_must_be_slopes(self):
        with pytest.raises(InvalidConfig):
            generate(
                GeneratorConfig(
                    seed=0,
                    n_units=10,
                    confounders=(ConfounderSpec("a", "numeric", None, {"x": 1.0}, 0.0),),
                )
            )

    def test_unknown_levels_in_effects(self):
        with pytest.raises(InvalidConfig):
            generate(
                GeneratorConfig(
                    seed=0,
                    n_units=10,
                    confounders=(ConfounderSpec("a", "categorical", ("x",), {"y": 1.0}, {}),),
                )
            )

    def test_duplicate_names(self):
        with pytest.raises(InvalidConfig):
            generate(
                GeneratorConfig(
                    seed=0,
                    n_units=10,
                    confounders=(driver_spec(), driver_spec()),
                )
            )

    def test_from_dict_round_trip(self):
        data = {
            "seed": 3,
            "n_units": 25,
            "base_treatment_rate": 0.4,
            "confounders": [
                {
                    "name": "device",
                    "kind": "categorical",
                    "levels": ["m", "d"],
                    "group_skew": {"m": 1.0},
                    "survival_effect": {"d": -1.0},
                },
                {"name": "score", "kind": "numeric", "group_skew": 0.2},
            ],
        }
        cfg = GeneratorConfig.from_dict(data)
        ds = generate(cfg)
        assert len(ds) == 25
        assert ds.confounder_names == ("device", "score")


class TestPlantedRecovery:
    def test_driver_dominates_inert_confounders(self):
        confs = (
            driver_spec(),
            ConfounderSpec("inert_cat", "categorical", ("a", "b", "c"), {}, {}),
            ConfounderSpec("inert_num", "numeric", None, 0.0, 0.0),
        )
        hits = 0
        for seed in range(10):
            ds = generate(GeneratorConfig(seed=seed, n_units=8000, confounders=confs))
            report = attribute(ds, cfg=AttributionConfig(seed=seed))
            shap = np.abs(report.shapley_values)
            hits += int(np.argmax(shap) == 0)
        assert hits >= 9

    def test_sampled_constant_confounder_is_exactly_zero(self):
        # A constant confounder never splits a stratum, so every sampled
        # marginal is exactly zero: value 0 with zero variance.
        from conftest import append_constant_confounder

        confs = tuple(
            [driver_spec()]
            + [ConfounderSpec(f"inert{i}", "categorical", ("a", "b"), {}, {}) for i in range(5)]
        )
        ds = append_constant_confounder(
            generate(GeneratorConfig(seed=4, n_units=4000, confounders=confs)), "const"
        )
        report = attribute(ds)  # 7 confounders -> sampled
        assert report.mode == "sampled"
        const_row = report.rows[-1]
        assert const_row.shapley == 0.0
        assert const_row.shapley_stderr == 0.0

    def test_sampled_inert_confounders_stay_small(self):
        # Stochastic inerts carry finite-sample noise, not planted signal:
        # they stay a small fraction of the driver's attribution.
        confs = tuple(
            [driver_spec()]
            + [ConfounderSpec(f"inert{i}", "categorical", ("a", "b"), {}, {}) for i in range(6)]
        )
        ds = generate(GeneratorConfig(seed=4, n_units=4000, confounders=confs))
        report = attribute(ds)
        assert report.mode == "sampled"
        shap = np.abs(report.shapley_values)
        assert np.all(shap[1:] <= 0.05 * shap[0])
