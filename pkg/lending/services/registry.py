"""
Named pool specifications.

"type1".."type30" are the synthetic individual-lending distributions,
"group_basic" and "group_advanced_type1".."group_advanced_type18" the group
lending pools, plus the shifted variants used by SHIFT_CASES. "csv:<path>"
names are resolved by `resolve_pool` through CSV ingestion.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .core import ConfigurationError
from .datagen import (
    ApplicantPool,
    FeatureDistSpec,
    GroupSpec,
    PoolSpec,
    RepaymentSpec,
    WeightRule,
    build_pool,
    ingest_csv_pool,
)

logger = logging.getLogger(__name__)

DEFAULT_N = 100
BINS = 100

LINEAR = (0.0, 0.25, 0.0)
QUADRATIC = (-1.0 / 16.0, 0.5, 0.0)

# a_S for the increasing pmfs of types 1-18 and the decreasing pmfs of 19-26
BASE_COLUMNS = (0.0, 0.005, 0.01)
FLIP_COLUMNS = (0.02, 0.015)

BASE_ROWS: Tuple[RepaymentSpec, ...] = (
    RepaymentSpec("linear", WeightRule("constant", 1.0), 0.0, LINEAR),
    RepaymentSpec("quadratic", WeightRule("constant", 1.0), 0.0, QUADRATIC),
    RepaymentSpec("sigmoid", WeightRule("constant", 2.0), -4.0),
    RepaymentSpec("sigmoid", WeightRule("constant", 2.5), -4.0),
    RepaymentSpec("sigmoid", WeightRule("constant", 3.0), -4.0),
    RepaymentSpec("sigmoid", WeightRule("normal", 2.0, sd=4.0), -4.0),
)

FLIP_ROWS: Tuple[RepaymentSpec, ...] = (
    RepaymentSpec("linear", WeightRule("constant", -1.0), 0.0, (0.0, 0.25, 1.0)),
    RepaymentSpec("quadratic", WeightRule("constant", -2.0), 0.0, (-1.0 / 128.0, 1.0 / 16.0, 1.0)),
    RepaymentSpec("sigmoid", WeightRule("constant", -3.0), 7.0),
    RepaymentSpec("sigmoid", WeightRule("normal", -3.0, sd=4.0), 7.0),
)


def _unbounded(n: int) -> Dict[int, Tuple[FeatureDistSpec, RepaymentSpec]]:
    return {
        27: (FeatureDistSpec("gaussian", n, mean=2.0, sd=0.25),
             RepaymentSpec("sigmoid", WeightRule("ramp", 0.0, span=5.0), -4.0)),
        28: (FeatureDistSpec("gaussian", n, mean=6.0, sd=1.0),
             RepaymentSpec("sigmoid", WeightRule("v_shape"), -4.0)),
        29: (FeatureDistSpec("abs_gaussian", n, sd=1.0),
             RepaymentSpec("sigmoid", WeightRule("ramp", 20.0, span=-25.0), -4.0)),
        30: (FeatureDistSpec("log_gaussian", n, sd=0.25),
             RepaymentSpec("sigmoid", WeightRule("ramp", 0.0, span=10.0), -4.0)),
    }


def distribution_type(k: int, n: int = DEFAULT_N) -> Tuple[FeatureDistSpec, RepaymentSpec]:
    """Feature distribution and repayment form of synthetic type k (1..30)."""
    if 1 <= k <= 18:
        row, col = divmod(k - 1, len(BASE_COLUMNS))
        return FeatureDistSpec("binned", n, a_s=BASE_COLUMNS[col], b_s=BINS), BASE_ROWS[row]
    if 19 <= k <= 26:
        row, col = divmod(k - 19, len(FLIP_COLUMNS))
        # decreasing pmf: bin mass falls from a_S as l grows
        return FeatureDistSpec("binned", n, a_s=FLIP_COLUMNS[col], b_s=BINS), FLIP_ROWS[row]
    if 27 <= k <= 30:
        return _unbounded(n)[k]
    raise ConfigurationError(f"unknown distribution type {k}; expected 1..30")


def _shifted(name: str, n: int) -> PoolSpec:
    if name == "type3_flipped":
        features, _ = distribution_type(3, n)
        return PoolSpec(name, features, RepaymentSpec("linear", WeightRule("constant", 1.0), 0.0,
                                                      (0.0, -0.25, 1.0)))
    if name == "type9_flipped":
        features, _ = distribution_type(9, n)
        return PoolSpec(name, features, RepaymentSpec("sigmoid", WeightRule("constant", -1.0), 4.0))
    if name == "type27_reflected":
        _, repayment = distribution_type(27, n)
        return PoolSpec(name, FeatureDistSpec("gaussian", n, mean=2.0, sd=0.25, reflect=True), repayment)
    if name == "type28_reflected":
        _, repayment = distribution_type(28, n)
        return PoolSpec(name, FeatureDistSpec("gaussian", n, mean=6.0, sd=1.0, reflect=True), repayment)
    raise ConfigurationError(f"unknown pool {name!r}")


SHIFTED_NAMES = ("type3_flipped", "type9_flipped", "type27_reflected", "type28_reflected")


@dataclass(frozen=True)
class ShiftCase:
    before: str
    after: str


SHIFT_CASES: Dict[int, ShiftCase] = {
    1: ShiftCase("type1", "type19"),
    2: ShiftCase("type2", "type20"),
    3: ShiftCase("type3", "type3_flipped"),
    4: ShiftCase("type9", "type9_flipped"),
    5: ShiftCase("type27", "type27_reflected"),
    6: ShiftCase("type28", "type28_reflected"),
}


def shift_case(k: int) -> ShiftCase:
    try:
        return SHIFT_CASES[int(k)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"unknown shift case {k!r}; expected one of {sorted(SHIFT_CASES)}")


def _type_number(name: str, prefix: str) -> Optional[int]:
    suffix = name[len(prefix):]
    return int(suffix) if name.startswith(prefix) and suffix.isdigit() else None


def get_pool_spec(name: str, n_features: int = DEFAULT_N, interest_rate: float = 0.35,
                  mc_samples: int = 10_000) -> PoolSpec:
    """Resolve a registry name (anything but csv:) to a PoolSpec."""
    name = name.strip()
    if name == "group_basic":
        return PoolSpec(name, group=GroupSpec("basic", gain_mean=1.0 + 1.2 * interest_rate, gain_sd=0.5,
                                              interest_rate=interest_rate, mc_samples=mc_samples))
    k = _type_number(name, "group_advanced_type")
    if k is not None:
        if not 1 <= k <= 18:
            raise ConfigurationError(f"advanced group pools exist for types 1..18, got {name!r}")
        features, repayment = distribution_type(k, n_features)
        return PoolSpec(name, group=GroupSpec("advanced", gain_sd=0.5, interest_rate=interest_rate,
                                              features=features, repayment=repayment, mc_samples=mc_samples))
    if name in SHIFTED_NAMES:
        return _shifted(name, n_features)
    k = _type_number(name, "type")
    if k is not None:
        features, repayment = distribution_type(k, n_features)
        return PoolSpec(name, features, repayment)
    raise ConfigurationError(f"unknown pool {name!r}")


def pool_names() -> List[str]:
    names = [f"type{k}" for k in range(1, 31)]
    names += ["group_basic"] + [f"group_advanced_type{k}" for k in range(1, 19)]
    return names + list(SHIFTED_NAMES)


def resolve_pool(name: str, size: int, rng: np.random.Generator, seed: Optional[int] = None,
                 n_features: int = DEFAULT_N, interest_rate: float = 0.35,
                 mc_samples: int = 10_000) -> ApplicantPool:
    """Build (or ingest) the pool a config names."""
    if name.startswith("csv:"):
        return ingest_csv_pool(name[4:])
    spec = get_pool_spec(name, n_features, interest_rate, mc_samples)
    return build_pool(spec, size, rng, seed=seed)
