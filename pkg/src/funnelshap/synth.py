"""Synthetic funnel data with planted confounding.

Group membership and survival are drawn from logistic models whose
log-odds are a base rate plus per-confounder shifts, so a confounder
confounds the survival ratio exactly when it shifts both models. All
generated units belong to the previous funnel stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import InvalidConfig
from .funnel import CONTROL, TREATMENT, FunnelDataset, UnitRecord


@dataclass(frozen=True)
class ConfounderSpec:
    """One planted confounder.

    Categorical confounders need ``levels`` and per-level log-odds shifts
    (missing levels shift by 0); numeric confounders draw standard-normal
    values and use scalar slopes.
    """

    name: str
    kind: str = "categorical"
    levels: tuple[str, ...] | None = None
    group_skew: Mapping[str, float] | float = 0.0
    survival_effect: Mapping[str, float] | float = 0.0


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    n_units: int
    confounders: tuple[ConfounderSpec, ...]
    base_treatment_rate: float = 0.5
    base_survival_rate: float = 0.5

    @classmethod
    def from_dict(cls, data: Mapping) -> "GeneratorConfig":
        confs = []
        for c in data.get("confounders", ()):
            confs.append(
                ConfounderSpec(
                    name=c["name"],
                    kind=c.get("kind", "categorical"),
                    levels=tuple(c["levels"]) if c.get("levels") else None,
                    group_skew=c.get("group_skew", 0.0),
                    survival_effect=c.get("survival_effect", 0.0),
                )
            )
        return cls(
            seed=int(data["seed"]),
            n_units=int(data["n_units"]),
            confounders=tuple(confs),
            base_treatment_rate=float(data.get("base_treatment_rate", 0.5)),
            base_survival_rate=float(data.get("base_survival_rate", 0.5)),
        )


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _validate(cfg: GeneratorConfig):
    if cfg.n_units < 1:
        raise InvalidConfig(f"n_units must be >= 1, got {cfg.n_units}")
    for rate, name in (
        (cfg.base_treatment_rate, "base_treatment_rate"),
        (cfg.base_survival_rate, "base_survival_rate"),
    ):
        if not 0.0 < rate < 1.0:
            raise InvalidConfig(f"{name} must be in (0, 1), got {rate}")
    seen = set()
    for c in cfg.confounders:
        if c.name in seen:
            raise InvalidConfig(f"duplicate confounder name {c.name!r}")
        seen.add(c.name)
        if c.kind == "categorical":
            if not c.levels:
                raise InvalidConfig(f"categorical confounder {c.name!r} needs levels")
            for effect, label in ((c.group_skew, "group_skew"), (c.survival_effect, "survival_effect")):
                if not isinstance(effect, Mapping):
                    raise InvalidConfig(
                        f"{label} of categorical confounder {c.name!r} must map levels to shifts"
                    )
                unknown = set(effect) - set(c.levels)
                if unknown:
                    raise InvalidConfig(f"{label} of {c.name!r} names unknown levels {sorted(unknown)}")
        elif c.kind == "numeric":
            for effect, label in ((c.group_skew, "group_skew"), (c.survival_effect, "survival_effect")):
                if isinstance(effect, Mapping):
                    raise InvalidConfig(f"{label} of numeric confounder {c.name!r} must be a slope")
        else:
            raise InvalidConfig(f"unknown confounder kind {c.kind!r}")


def generate(cfg: GeneratorConfig) -> FunnelDataset:
    """Draw a dataset; deterministic given the seed."""
    _validate(cfg)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_units

    columns = []
    group_logit = np.full(n, _logit(cfg.base_treatment_rate))
    surv_logit = np.full(n, _logit(cfg.base_survival_rate))
    for c in cfg.confounders:
        if c.kind == "categorical":
            idx = rng.integers(0, len(c.levels), size=n)
            g_shift = np.array([float(c.group_skew.get(lv, 0.0)) for lv in c.levels])
            s_shift = np.array([float(c.survival_effect.get(lv, 0.0)) for lv in c.levels])
            group_logit += g_shift[idx]
            surv_logit += s_shift[idx]
            columns.append([c.levels[i] for i in idx])
        else:
            x = rng.standard_normal(n)
            group_logit += float(c.group_skew) * x
            surv_logit += float(c.survival_effect) * x
            columns.append([float(v) for v in x])

    treated = rng.random(n) < _sigmoid(group_logit)
    survived = rng.random(n) < _sigmoid(surv_logit)

    records = [
        UnitRecord(
            unit_id=f"u{i:06d}",
            group=TREATMENT if treated[i] else CONTROL,
            in_previous=True,
            survived=bool(survived[i]),
            confounders=tuple(col[i] for col in columns),
        )
        for i in range(n)
    ]
    names = [c.name for c in cfg.confounders]
    kinds = [c.kind for c in cfg.confounders]
    return FunnelDataset(records, names, kinds)
