"""
Online policy-gradient learner.

Each period the incumbent parameter vector decides on the period's
applicants, the score-function gradient estimate (with the historical-mean
baseline subtracted) is formed from the sampled actions, and z takes one
projected ascent step. During the first `multi_periods` periods a population
of candidates is maintained: every candidate steps on its own batch, the best
`keep_best` by trailing mean utility survive and the rest are replaced by
fresh random points.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    Action,
    Box,
    ConfigurationError,
    ContractViolation,
    DataIntegrityError,
    Decision,
    DecisionRule,
    Feedback,
    LendingRecord,
    ObservedBatch,
    PolicyParams,
    UtilityConfig,
    batch_utilities,
    records_from_period,
)
from .policy import LinkKind, approval_gradient_batch, sample_decisions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GradientEstimate:
    values: np.ndarray
    batch_size: int

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if not np.all(np.isfinite(values)):
            raise DataIntegrityError("gradient estimate has non-finite coordinates")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class BaselineTracker:
    """R̄: mean over past periods of the per-period mean utility."""

    running_sum: float = 0.0
    periods_seen: int = 0

    @property
    def current(self) -> float:
        return self.running_sum / self.periods_seen if self.periods_seen else 0.0

    def advanced(self, period_mean: float) -> "BaselineTracker":
        return BaselineTracker(self.running_sum + float(period_mean), self.periods_seen + 1)


def baseline_update(tracker: BaselineTracker, period_records: Sequence[LendingRecord]) -> BaselineTracker:
    # an empty period carries no utility information
    if not period_records:
        return tracker
    return tracker.advanced(float(np.mean([r.utility for r in period_records])))


@dataclass(frozen=True)
class StepSchedule:
    kind: str = "constant"  # constant | theoretic
    value: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "theoretic"):
            raise ConfigurationError(f"unknown step schedule {self.kind!r}")
        if not (self.value > 0 and math.isfinite(self.value)):
            raise ConfigurationError(f"step size must be a positive number, got {self.value}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", alpha)

    @classmethod
    def theoretic(cls, ratio: float) -> "StepSchedule":
        return cls("theoretic", ratio)


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 1:
        raise ContractViolation(f"step index must be >= 1, got {t}")
    if schedule.kind == "constant":
        return schedule.value
    return schedule.value / math.sqrt(t)


@dataclass(frozen=True)
class MultiStartConfig:
    num_candidates: int = 10
    keep_best: int = 5
    fresh_random: int = 5
    multi_periods: int = 50
    window: int = 5

    def __post_init__(self):
        if self.keep_best + self.fresh_random != self.num_candidates:
            raise ConfigurationError(
                f"keep_best ({self.keep_best}) + fresh_random ({self.fresh_random}) "
                f"must equal num_candidates ({self.num_candidates})")
        if self.keep_best < 1 or self.multi_periods < 0 or self.window < 1:
            raise ConfigurationError("multi-start needs keep_best >= 1, multi_periods >= 0 and window >= 1")

    @classmethod
    def single(cls) -> "MultiStartConfig":
        return cls(num_candidates=1, keep_best=1, fresh_random=0, multi_periods=0)


@dataclass(frozen=True)
class LearnerConfig:
    link: LinkKind = LinkKind.CASE_A
    schedule: StepSchedule = field(default_factory=StepSchedule)
    box: Box = field(default_factory=Box)
    multi_start: MultiStartConfig = field(default_factory=MultiStartConfig)
    init_range: Tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.init_range
        if not self.box.lo <= lo <= hi <= self.box.hi:
            raise ConfigurationError(f"init range {self.init_range} must lie inside the box "
                                     f"[{self.box.lo}, {self.box.hi}]")

    def with_link(self, link) -> "LearnerConfig":
        return replace(self, link=LinkKind.parse(link))


def score_gradient(z: np.ndarray, features: np.ndarray, approved: np.ndarray, approve_probs: np.ndarray,
                    utilities: np.ndarray, kind: LinkKind, baseline: float) -> np.ndarray:
    """(1/N) Σ_i (∂π(ŝ_i,a_i)/∂z) / π(ŝ_i,a_i) · (R_i − baseline)."""
    if features.shape[0] == 0:
        return np.zeros(z.size)
    _, _, grad_p = approval_gradient_batch(z, features, kind)
    action_prob = np.where(approved, approve_probs, 1.0 - approve_probs)
    if np.any(action_prob <= 0.0):
        i = int(np.flatnonzero(action_prob <= 0.0)[0])
        raise DataIntegrityError(f"record {i} has probability 0 for its own action")
    sign = np.where(approved, 1.0, -1.0)
    weights = grad_p * (sign / action_prob)[:, None]
    return weights.T @ (utilities - baseline) / features.shape[0]


def gradient_estimate(records: Sequence[LendingRecord], z: PolicyParams, kind: LinkKind,
                      baseline: float) -> GradientEstimate:
    if not records:
        return GradientEstimate(np.zeros(2 * z.n), 0)
    features = np.vstack([r.features.entries for r in records])
    if features.shape[1] != z.n:
        raise ContractViolation(f"record dimension {features.shape[1]} does not match policy dimension {z.n}")
    approved = np.array([r.action is Action.APPROVED for r in records])
    probs = np.array([r.approve_prob for r in records])
    utilities = np.array([r.utility for r in records])
    values = score_gradient(z.vector, features, approved, probs, utilities, LinkKind.parse(kind), baseline)
    return GradientEstimate(values, len(records))


def update_and_project(z: PolicyParams, F: GradientEstimate, alpha: float, box: Optional[Box] = None) -> PolicyParams:
    if not alpha > 0:
        raise ContractViolation(f"step size must be > 0, got {alpha}")
    box = box or z.box
    return PolicyParams.from_vector(box.clip(z.vector + alpha * F.values), box)


# ---------------------------------------------------------------------------
# Decision rule
# ---------------------------------------------------------------------------

Sampler = Callable[[int, np.random.Generator, int], Any]


@dataclass
class _Candidate:
    slot: int
    z: np.ndarray
    rng: np.random.Generator
    baseline: BaselineTracker = field(default_factory=BaselineTracker)
    history: List[float] = field(default_factory=list)

    def score(self, window: int) -> float:
        return float(np.mean(self.history[-window:])) if self.history else -math.inf


class PolicyGradientRule(DecisionRule):
    """The learner as a harness decision rule.

    `sampler(count, rng, period)` must return an applicant batch (with
    `observed()`, `group_sizes` and `repays`); non-incumbent candidates use it
    to draw their private batches during the multi-start phase.
    """

    name = "learner"

    def __init__(self, cfg: LearnerConfig, utility: UtilityConfig, n: int,
                 sampler: Optional[Sampler] = None, replication: int = 0, name: Optional[str] = None):
        self.cfg = cfg
        self.utility = utility
        self.n = n
        self.sampler = sampler
        self.replication = replication
        if name:
            self.name = name
        self._next_slot = 0
        self.t = 0
        self._pending: Optional[np.ndarray] = None
        ms = cfg.multi_start
        count = ms.num_candidates if ms.multi_periods > 0 else 1
        self.candidates: List[_Candidate] = [self._fresh_candidate() for _ in range(count)]

    def _fresh_candidate(self) -> _Candidate:
        slot = self._next_slot
        self._next_slot += 1
        rng = np.random.default_rng([self.cfg.seed, self.replication, slot])
        lo, hi = self.cfg.init_range
        z = self.cfg.box.clip(rng.uniform(lo, hi, 2 * self.n))
        return _Candidate(slot, z, rng)

    @property
    def incumbent(self) -> _Candidate:
        return self.candidates[0]

    @property
    def in_multi_start(self) -> bool:
        return len(self.candidates) > 1

    def state_vector(self) -> np.ndarray:
        return self.incumbent.z.copy()

    def policy(self) -> PolicyParams:
        return PolicyParams.from_vector(self.incumbent.z, self.cfg.box)

    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        cand = self.incumbent
        _, p, _ = approval_gradient_batch(cand.z, batch.features, self.cfg.link)
        approved = sample_decisions(p, cand.rng)
        return Decision(approved, np.asarray(p, dtype=float))

    def observe(self, batch: ObservedBatch, decision: Decision, feedback: Feedback,
                oracle_probs: Optional[np.ndarray] = None) -> None:
        self.t += 1
        alpha = step_size(self.cfg.schedule, self.t)
        self._step(self.incumbent, batch.features, decision.approved, decision.approve_probs,
                   feedback.utilities, alpha)

        if not self.in_multi_start:
            return
        if self.sampler is None:
            raise ConfigurationError("multi-start learning needs an applicant sampler for private batches")
        for cand in self.candidates[1:]:
            private = self.sampler(len(batch), cand.rng, batch.period)
            features = private.observed().features
            _, p, _ = approval_gradient_batch(cand.z, features, self.cfg.link)
            approved = sample_decisions(p, cand.rng)
            utilities = batch_utilities(private.group_sizes, approved, private.repays, self.utility)
            self._step(cand, features, approved, np.asarray(p, dtype=float), utilities, alpha)
        self._reselect()

    def _step(self, cand: _Candidate, features: np.ndarray, approved: np.ndarray, probs: np.ndarray,
              utilities: np.ndarray, alpha: float) -> None:
        F = score_gradient(cand.z, features, approved, probs, utilities, self.cfg.link, cand.baseline.current)
        cand.z = self.cfg.box.clip(cand.z + alpha * F)
        if utilities.size:
            mean = float(np.mean(utilities))
            cand.baseline = cand.baseline.advanced(mean)
            cand.history.append(mean)

    def _reselect(self) -> None:
        ms = self.cfg.multi_start
        ranked = sorted(self.candidates, key=lambda c: -c.score(ms.window))
        if self.t >= ms.multi_periods:
            best = ranked[0]
            logger.debug(f"multi-start finished at period {self.t}: keeping candidate {best.slot} "
                         f"(trailing mean {best.score(ms.window):.4f})")
            self.candidates = [best]
            return
        self.candidates = ranked[:ms.keep_best] + [self._fresh_candidate() for _ in range(ms.fresh_random)]


# ---------------------------------------------------------------------------
# Stand-alone learning loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodOutcome:
    period: int
    z: np.ndarray
    features: np.ndarray
    group_sizes: np.ndarray
    approved: np.ndarray
    approve_probs: np.ndarray
    returned: np.ndarray
    utilities: np.ndarray

    def records(self, utility: UtilityConfig) -> List[LendingRecord]:
        batch = ObservedBatch(self.period, self.features, self.group_sizes)
        return records_from_period(batch, Decision(self.approved, self.approve_probs),
                                   Feedback(self.returned, self.utilities), utility)


@dataclass(frozen=True)
class LearningTrajectory:
    periods: Tuple[PeriodOutcome, ...]
    final_z: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.periods)

    @property
    def z_history(self) -> np.ndarray:
        if not self.periods:
            return np.empty((0, 0))
        return np.vstack([p.z for p in self.periods])

    @property
    def mean_utilities(self) -> np.ndarray:
        return np.array([p.utilities.mean() if p.utilities.size else 0.0 for p in self.periods])


def run_learning(pool, cfg: LearnerConfig, utility: UtilityConfig, T: int, N_t: int,
                 missing_p: float = 0.0, replication: int = 0) -> LearningTrajectory:
    """Run the learner alone on `pool` for T periods of N_t applicants."""
    from .datagen import ApplicantStream

    if pool.size == 0:
        raise ConfigurationError("cannot learn from an empty applicant pool")
    if T < 0 or N_t < 1:
        raise ConfigurationError(f"need T >= 0 and N_t >= 1, got T={T}, N_t={N_t}")
    stream = ApplicantStream(pool, missing_p)
    rng = np.random.default_rng([cfg.seed, replication, 2 ** 31 - 1])
    rule = PolicyGradientRule(cfg, utility, pool.n, sampler=lambda k, r, t: stream.draw(k, r, t),
                              replication=replication)
    periods = []
    for t in range(1, T + 1):
        batch = stream.draw(N_t, rng, t)
        observed = batch.observed()
        z = rule.state_vector()
        decision = rule.decide(observed)
        utilities = batch_utilities(batch.group_sizes, decision.approved, batch.repays, utility)
        feedback = Feedback(batch.repays & decision.approved, utilities)
        rule.observe(observed, decision, feedback)
        periods.append(PeriodOutcome(t, z, observed.features, batch.group_sizes, decision.approved,
                                     decision.approve_probs, feedback.returned, utilities))
    logger.info(f"Learning run finished: T={T}, N_t={N_t}, link={cfg.link.value}, replication={replication}")
    return LearningTrajectory(tuple(periods), rule.state_vector() if T else None)
