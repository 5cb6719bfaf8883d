"""
Shared domain types for the lending engine: feature vectors with missing
entries, policy parameters, utility configuration, lending records, the
decision-rule interface and the error hierarchy.

Indices exposed by this module are 1-based; arrays are stored 0-based.
A missing feature entry is stored as NaN and is never conflated with 0.0.
"""
from __future__ import annotations

import enum
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np

MISSING = float("nan")

DEFAULT_BOX_LO = 0.0
DEFAULT_BOX_HI = 10.0


class LendingError(RuntimeError):
    """Base class for every error raised by the lending engine."""


class ConfigurationError(LendingError):
    pass


class ConfigParseError(ConfigurationError):
    """Config file could not be parsed (carries the offending line when known)."""


class ContractViolation(LendingError):
    pass


class DomainError(LendingError):
    pass


class DataIntegrityError(LendingError):
    pass


class DegenerateFitError(LendingError):
    pass


class DegenerateNormalizationError(LendingError):
    pass


class ParseError(LendingError):
    pass


class ResultsIOError(LendingError):
    pass


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureVector:
    """Applicant attributes; NaN entries are MISSING."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ContractViolation(f"feature vector must be 1-D and non-empty, got shape {arr.shape}")
        object.__setattr__(self, "entries", _frozen_array(arr))

    @classmethod
    def from_entries(cls, entries: Iterable[Optional[float]]) -> "FeatureVector":
        """Build from a sequence where None (or NaN) marks a missing entry."""
        return cls(np.array([MISSING if v is None else float(v) for v in entries], dtype=float))

    @property
    def n(self) -> int:
        return int(self.entries.size)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.entries)

    def is_missing(self, j: int) -> bool:
        """1-based check."""
        if not 1 <= j <= self.n:
            raise ContractViolation(f"feature index {j} outside 1..{self.n}")
        return bool(np.isnan(self.entries[j - 1]))

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.entries, other.entries, equal_nan=True))

    def __hash__(self) -> int:
        return hash(tuple(None if math.isnan(v) else v for v in self.entries.tolist()))


@dataclass(frozen=True)
class IndexSet:
    """Ordered set of 1-based feature indices."""

    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(set(int(i) for i in self.indices)))
        if ordered and ordered[0] < 1:
            raise ContractViolation(f"index set must contain positive indices, got {ordered[0]}")
        object.__setattr__(self, "indices", ordered)

    def __contains__(self, j: object) -> bool:
        return j in self.indices

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def available_indices(features: FeatureVector) -> IndexSet:
    """U(ŝ): the 1-based indices of the non-missing entries."""
    return IndexSet(tuple(int(j) + 1 for j in np.flatnonzero(features.observed)))


@dataclass(frozen=True)
class Box:
    """Axis-aligned admissible set [lo, hi] applied to every coordinate."""

    lo: float = DEFAULT_BOX_LO
    hi: float = DEFAULT_BOX_HI

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigurationError(f"box bounds must be finite, got [{self.lo}, {self.hi}]")
        if self.lo < 0:
            raise ConfigurationError(f"box lower bound must be >= 0 for the link domain, got {self.lo}")
        if self.hi <= self.lo:
            raise ConfigurationError(f"box upper bound must exceed lower bound, got [{self.lo}, {self.hi}]")

    def diameter(self, dim: int) -> float:
        """Euclidean diameter of the box in `dim` coordinates."""
        return math.sqrt(dim) * (self.hi - self.lo)

    def clip(self, z: np.ndarray) -> np.ndarray:
        return np.clip(z, self.lo, self.hi)

    def contains(self, z: np.ndarray) -> bool:
        return bool(np.all((z >= self.lo) & (z <= self.hi)))


@dataclass(frozen=True)
class PolicyParams:
    """z = [φ; ε], each of length n, every coordinate inside `box`."""

    phi: np.ndarray
    eps: np.ndarray
    box: Box = field(default_factory=Box)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        eps = np.asarray(self.eps, dtype=float)
        if phi.ndim != 1 or phi.shape != eps.shape or phi.size == 0:
            raise ContractViolation(f"phi and eps must be equal-length 1-D vectors, got {phi.shape} and {eps.shape}")
        z = np.concatenate([phi, eps])
        if not np.all(np.isfinite(z)) or not self.box.contains(z):
            raise ContractViolation(f"policy parameters outside box [{self.box.lo}, {self.box.hi}]")
        object.__setattr__(self, "phi", _frozen_array(phi))
        object.__setattr__(self, "eps", _frozen_array(eps))

    @classmethod
    def from_vector(cls, z: Sequence[float], box: Optional[Box] = None) -> "PolicyParams":
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.size % 2:
            raise ContractViolation(f"z must be a 1-D vector of even length, got shape {z.shape}")
        half = z.size // 2
        return cls(z[:half], z[half:], box or Box())

    @property
    def n(self) -> int:
        return int(self.phi.size)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.phi, self.eps])


@dataclass(frozen=True)
class UtilityConfig:
    interest_rate: float = 0.35
    subsidy: float = 0.0

    def __post_init__(self):
        if not self.interest_rate > 0:
            raise ConfigurationError(f"interest rate must be > 0, got {self.interest_rate}")
        if not self.subsidy >= 0:
            raise ConfigurationError(f"subsidy must be >= 0, got {self.subsidy}")

    @property
    def approval_threshold(self) -> float:
        """Repayment probability at which approving has zero expected utility."""
        return (1.0 - self.subsidy) / (1.0 + self.interest_rate)


class Action(str, enum.Enum):
    APPROVED = "approved"
    REJECTED = "rejected"


class Outcome(str, enum.Enum):
    RETURNED = "returned"
    DEFAULTED = "defaulted"
    NOT_APPLICABLE = "not_applicable"


def _check_pair(action: Action, outcome: Outcome) -> None:
    if (action is Action.REJECTED) != (outcome is Outcome.NOT_APPLICABLE):
        raise ContractViolation(f"inconsistent action/outcome pair: {action.value}/{outcome.value}")


def compute_utility(group_size: int, action: Action, outcome: Outcome, cfg: UtilityConfig) -> float:
    """n(r+e) on repayment, n(e-1) on default, 0 on rejection."""
    if group_size < 1:
        raise ContractViolation(f"group size must be positive, got {group_size}")
    _check_pair(action, outcome)
    if action is Action.REJECTED:
        return 0.0
    if outcome is Outcome.RETURNED:
        return group_size * (cfg.interest_rate + cfg.subsidy)
    return group_size * (cfg.subsidy - 1.0)


def batch_utilities(group_sizes: np.ndarray, approved: np.ndarray, returned: np.ndarray,
                    cfg: UtilityConfig) -> np.ndarray:
    """Vectorised compute_utility; `returned` is ignored where not approved."""
    gain = np.where(returned, cfg.interest_rate + cfg.subsidy, cfg.subsidy - 1.0)
    return np.where(approved, np.asarray(group_sizes, dtype=float) * gain, 0.0)


@dataclass(frozen=True)
class LendingRecord:
    features: FeatureVector
    group_size: int
    approve_prob: float
    action: Action
    outcome: Outcome
    utility: float
    period: int

    def __post_init__(self):
        _check_pair(self.action, self.outcome)
        if not 0.0 <= self.approve_prob <= 1.0:
            raise ContractViolation(f"approval probability {self.approve_prob} outside [0, 1]")

    @classmethod
    def build(cls, features: FeatureVector, group_size: int, approve_prob: float, action: Action,
              outcome: Outcome, cfg: UtilityConfig, period: int) -> "LendingRecord":
        utility = compute_utility(group_size, action, outcome, cfg)
        return cls(features, int(group_size), float(approve_prob), action, outcome, utility, int(period))

    @property
    def action_prob(self) -> float:
        """π_z(ŝ, a) for the action actually taken."""
        return self.approve_prob if self.action is Action.APPROVED else 1.0 - self.approve_prob


@dataclass(frozen=True)
class ObservedBatch:
    """What a non-oracle decision rule may see about one period's applicants."""

    period: int
    features: np.ndarray
    group_sizes: np.ndarray

    def __len__(self) -> int:
        return int(self.features.shape[0])


@dataclass(frozen=True)
class Decision:
    approved: np.ndarray
    approve_probs: np.ndarray


@dataclass(frozen=True)
class Feedback:
    """Outcomes revealed after decisions; `returned` is meaningful only where approved."""

    returned: np.ndarray
    utilities: np.ndarray


class DecisionRule(ABC):
    """An approval algorithm driven period by period by the harness."""

    name: str = "rule"
    oracle_access: bool = False

    @abstractmethod
    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        ...

    def observe(self, batch: ObservedBatch, decision: Decision, feedback: Feedback,
                oracle_probs: Optional[np.ndarray] = None) -> None:
        """Learn from the period's outcomes; stateless rules ignore it."""
        return None

    def state_vector(self) -> Optional[np.ndarray]:
        """Current parameters for rules that have them (learner's z)."""
        return None


def records_from_period(batch: ObservedBatch, decision: Decision, feedback: Feedback,
                        cfg: UtilityConfig) -> list[LendingRecord]:
    """Materialise one period's arrays as LendingRecords."""
    records = []
    for i in range(len(batch)):
        approved = bool(decision.approved[i])
        action = Action.APPROVED if approved else Action.REJECTED
        if not approved:
            outcome = Outcome.NOT_APPLICABLE
        elif feedback.returned[i]:
            outcome = Outcome.RETURNED
        else:
            outcome = Outcome.DEFAULTED
        records.append(LendingRecord.build(
            FeatureVector(batch.features[i]), int(batch.group_sizes[i]), float(decision.approve_probs[i]),
            action, outcome, cfg, batch.period,
        ))
    return records
