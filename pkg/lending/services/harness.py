"""
Experiment harness.

A scenario draws one applicant stream per replication and feeds every
configured decision rule the identical batches, so algorithms are compared
on paired data. Per-period statistics are reduced to MetricSeries; the
learner additionally gets a Monte-Carlo regret diagnostic when requested.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import minimize

from .baselines import (
    ApproveAllRule,
    ExtrapolationRule,
    LogisticRule,
    PerceptronRule,
    PerfectRule,
)
from .core import (
    Action,
    ConfigurationError,
    ContractViolation,
    DecisionRule,
    DegenerateNormalizationError,
    Feedback,
    LendingRecord,
    Outcome,
    UtilityConfig,
    batch_utilities,
)
from .datagen import ApplicantPool, ApplicantStream, mask_batch
from .learner import LearnerConfig, PolicyGradientRule
from .policy import LinkKind, link_derivative, link_value
from .registry import resolve_pool, shift_case

logger = logging.getLogger(__name__)

ALGORITHMS = ("learner", "learner_a", "learner_b", "perfect", "extrapolation", "perceptron", "logistic",
              "approve_all")
LEARNERS = ("learner", "learner_a", "learner_b")

CONVERGED_WINDOW = 50
RISE_WINDOW = 10
RISE_FRACTION = 0.9
DEFAULT_SHIFT_PERIOD = 250

# Simple in-process metrics for operational visibility (reset on process restart)
_metrics = {
    'scenarios_run': 0,
    'replications_run': 0,
    'periods_simulated': 0,
    'pools_built': 0,
    'last_runtime_s': 0.0,
}


def get_metrics() -> Dict[str, Any]:
    return dict(_metrics)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    pool: str = "type5"
    shifted_pool: Optional[str] = None
    shift_period: Optional[int] = None
    algorithms: Tuple[str, ...] = ("learner", "perfect")
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    T: int = 500
    N_t: int = 10
    missing_p: float = 0.0
    replications: int = 50
    seed: int = 0
    pool_size: int = 100_000
    n_features: int = 100
    group_mc_samples: int = 10_000
    logistic_learning_rate: float = 0.1
    regret_sample: int = 0

    def __post_init__(self):
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigurationError(f"unknown algorithm(s) {unknown}; expected some of {list(ALGORITHMS)}")
        if not self.algorithms:
            raise ConfigurationError("a scenario needs at least one algorithm")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigurationError(f"duplicate algorithms in {list(self.algorithms)}")
        if self.T < 0 or self.N_t < 1 or self.replications < 1:
            raise ConfigurationError(f"need T >= 0, N_t >= 1 and replications >= 1 "
                                     f"(got {self.T}, {self.N_t}, {self.replications})")
        if not 0.0 <= self.missing_p <= 1.0:
            raise ConfigurationError(f"missing_p must lie in [0, 1], got {self.missing_p}")
        if self.pool_size < 1 and not self.pool.startswith("csv:"):
            raise ConfigurationError(f"pool size must be positive, got {self.pool_size}")
        if self.shifted_pool is not None:
            if self.shift_period is None or not 0 <= self.shift_period < max(self.T, 1):
                raise ConfigurationError(f"shift period {self.shift_period} must lie in [0, T={self.T})")

    @classmethod
    def for_shift_case(cls, k: int, shift_period: int = DEFAULT_SHIFT_PERIOD, **kwargs) -> "ScenarioConfig":
        case = shift_case(k)
        return cls(pool=case.before, shifted_pool=case.after, shift_period=shift_period, **kwargs)


@dataclass(frozen=True)
class PeriodStats:
    applicants: int
    approved: int
    defaulted: int
    total_utility: float

    @classmethod
    def from_records(cls, records: Sequence[LendingRecord]) -> "PeriodStats":
        return cls(
            applicants=len(records),
            approved=sum(r.action is Action.APPROVED for r in records),
            defaulted=sum(r.outcome is Outcome.DEFAULTED for r in records),
            total_utility=float(sum(r.utility for r in records)),
        )


@dataclass
class RegretDiagnostic:
    D: float
    G: float
    T: int
    bound: float
    gap: float
    gap_stderr: float

    @property
    def within_bound(self) -> bool:
        return self.gap <= self.bound + 3.0 * self.gap_stderr


@dataclass
class MetricSeries:
    algorithm: str
    replication: int
    mean_utility: np.ndarray
    avg_cum_utility: np.ndarray
    approval_rate: np.ndarray
    default_rate: np.ndarray
    converged_utility: float
    converged_approval_rate: float
    converged_default_rate: float
    rise_time: Optional[int]
    post_shift_rise_time: Optional[int] = None
    z: Optional[np.ndarray] = None
    normalized_utility: Optional[float] = None
    wall_time_s: float = 0.0
    regret: Optional[RegretDiagnostic] = None

    @property
    def periods(self) -> int:
        return int(self.mean_utility.size)

    @classmethod
    def empty(cls, algorithm: str, replication: int) -> "MetricSeries":
        nothing = np.empty(0)
        return cls(algorithm, replication, nothing, nothing, nothing, nothing,
                   math.nan, math.nan, math.nan, None)


def rise_time(means: np.ndarray, window: int = RISE_WINDOW, fraction: float = RISE_FRACTION,
              converged_window: int = CONVERGED_WINDOW) -> Optional[int]:
    """First (1-based) period whose trailing mean covers `fraction` of the way from the first period to convergence."""
    means = np.asarray(means, dtype=float)
    if means.size == 0:
        return None
    initial = means[0]
    converged = means[-converged_window:].mean()
    target = initial + fraction * (converged - initial)
    trailing = np.convolve(means, np.ones(window), "full")[:means.size] / np.minimum(np.arange(1, means.size + 1), window)
    reached = trailing >= target if converged >= initial else trailing <= target
    hits = np.flatnonzero(reached)
    return int(hits[0]) + 1 if hits.size else int(means.size)


def compute_metrics(periods: Sequence, algorithm: str = "", replication: int = 0,
                    shift_period: Optional[int] = None) -> MetricSeries:
    """Reduce a per-period stream (PeriodStats or lists of LendingRecords) to a MetricSeries."""
    if len(periods) == 0:
        raise ContractViolation("cannot compute metrics of an empty period stream")
    stats = [p if isinstance(p, PeriodStats) else PeriodStats.from_records(p) for p in periods]
    applicants = np.array([s.applicants for s in stats], dtype=float)
    approved = np.array([s.approved for s in stats], dtype=float)
    defaulted = np.array([s.defaulted for s in stats], dtype=float)
    totals = np.array([s.total_utility for s in stats])

    safe = np.maximum(applicants, 1.0)
    mean_utility = np.where(applicants > 0, totals / safe, 0.0)
    avg_cum = np.cumsum(totals) / np.arange(1, totals.size + 1)
    approval_rate = np.where(applicants > 0, approved / safe, 0.0)
    default_rate = np.where(approved > 0, defaulted / np.maximum(approved, 1.0), 0.0)

    tail = slice(-CONVERGED_WINDOW, None)
    if shift_period is not None and 0 < shift_period < mean_utility.size:
        rise = rise_time(mean_utility[:shift_period])
        post_rise = rise_time(mean_utility[shift_period:])
    else:
        rise, post_rise = rise_time(mean_utility), None
    return MetricSeries(
        algorithm=algorithm,
        replication=replication,
        mean_utility=mean_utility,
        avg_cum_utility=avg_cum,
        approval_rate=approval_rate,
        default_rate=default_rate,
        converged_utility=float(mean_utility[tail].mean()),
        converged_approval_rate=float(approval_rate[tail].mean()),
        converged_default_rate=float(default_rate[tail].mean()),
        rise_time=rise,
        post_shift_rise_time=post_rise,
    )


def shift_recovery(means: np.ndarray, shift_period: int, window: int = RISE_WINDOW) -> Tuple[float, float]:
    """(pre-shift plateau, final level): trailing `window` mean utility before the shift and at the end."""
    means = np.asarray(means, dtype=float)
    if not window <= shift_period <= means.size - window:
        raise ContractViolation(f"need {window} periods on each side of shift period {shift_period} "
                                f"in a series of {means.size}")
    return float(means[shift_period - window:shift_period].mean()), float(means[-window:].mean())


def recovered_after_shift(means: np.ndarray, shift_period: int, tolerance: float = 0.2,
                          window: int = RISE_WINDOW) -> bool:
    plateau, final = shift_recovery(means, shift_period, window)
    return final >= plateau - tolerance * abs(plateau)


def normalized_utility(converged: float, lowest: float, perfect: float) -> float:
    if perfect <= lowest:
        raise DegenerateNormalizationError(f"perfect level {perfect} does not exceed lowest level {lowest}")
    return 2.0 * (converged - lowest) / (perfect - lowest) - 1.0


def regret_bound(D: float, G: float, T: int) -> float:
    if not (D > 0 and G > 0) or T < 1:
        raise ContractViolation(f"regret bound needs D, G > 0 and T >= 1 (got {D}, {G}, {T})")
    return 3.0 * D * G / (2.0 * math.sqrt(T))


# ---------------------------------------------------------------------------
# Monte-Carlo value estimates for the regret diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValueSample:
    """A fixed draw of (masked features, expected reward if approved) used to evaluate V(z)."""

    features: np.ndarray
    reward: np.ndarray

    @classmethod
    def draw(cls, pool: ApplicantPool, utility: UtilityConfig, size: int, missing_p: float,
             rng: np.random.Generator) -> "ValueSample":
        idx = rng.integers(0, pool.size, size)
        p = pool.probs[idx]
        sizes = pool.group_sizes[idx].astype(float)
        reward = sizes * (p * (utility.interest_rate + utility.subsidy) + (1.0 - p) * (utility.subsidy - 1.0))
        return cls(mask_batch(pool.features[idx], missing_p, rng), reward)

    def _q(self, z: np.ndarray) -> np.ndarray:
        n = self.features.shape[1]
        observed = ~np.isnan(self.features)
        return np.where(observed, z[:n] * np.nan_to_num(self.features) + z[n:], 0.0).sum(axis=1) / n

    def per_sample(self, z: np.ndarray, kind: LinkKind) -> np.ndarray:
        return np.asarray(link_value(kind, self._q(z))) * self.reward

    def value(self, z: np.ndarray, kind: LinkKind) -> Tuple[float, float]:
        v = self.per_sample(z, kind)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    def gradient_terms(self, z: np.ndarray, kind: LinkKind) -> np.ndarray:
        """Per-applicant contributions to the gradient of V, shape (m, 2n)."""
        n = self.features.shape[1]
        observed = ~np.isnan(self.features)
        g = np.hstack([np.where(observed, self.features, 0.0), observed.astype(float)])
        dl = np.asarray(link_derivative(kind, self._q(z)))
        return g * (self.reward * dl / n)[:, None]

    def gradient(self, z: np.ndarray, kind: LinkKind) -> np.ndarray:
        return self.gradient_terms(z, kind).mean(axis=0)

    def gradient_stderr(self, z: np.ndarray, kind: LinkKind) -> np.ndarray:
        terms = self.gradient_terms(z, kind)
        if terms.shape[0] < 2:
            return np.zeros(terms.shape[1])
        return terms.std(axis=0, ddof=1) / math.sqrt(terms.shape[0])


def maximize_value(sample: ValueSample, kind: LinkKind, box, dim: int, x0: Optional[np.ndarray] = None
                   ) -> np.ndarray:
    """z* = argmax of the sample-average V over the box (L-BFGS-B)."""
    x0 = np.full(dim, 0.5 * (box.lo + box.hi)) if x0 is None else np.asarray(x0, dtype=float)
    res = minimize(lambda z: -sample.per_sample(z, kind).mean(), x0,
                   jac=lambda z: -sample.gradient(z, kind), method="L-BFGS-B",
                   bounds=[(box.lo, box.hi)] * dim)
    return res.x


def estimate_gradient_bound(pool: ApplicantPool, cfg: LearnerConfig, utility: UtilityConfig,
                            missing_p: float, rng: np.random.Generator, samples: int = 10_000) -> float:
    """1.5 × max ‖F‖ over single-record gradient estimates at random z in the box."""
    n = pool.n
    box = cfg.box
    Z = rng.uniform(box.lo, box.hi, (samples, 2 * n))
    idx = rng.integers(0, pool.size, samples)
    X = mask_batch(pool.features[idx], missing_p, rng)
    observed = ~np.isnan(X)
    q = np.where(observed, Z[:, :n] * np.nan_to_num(X) + Z[:, n:], 0.0).sum(axis=1) / n
    p = np.asarray(link_value(cfg.link, q))
    dl = np.asarray(link_derivative(cfg.link, q))
    approved = rng.random(samples) < p
    repays = rng.random(samples) < pool.probs[idx]
    R = batch_utilities(pool.group_sizes[idx], approved, repays, utility)
    action_prob = np.where(approved, p, 1.0 - p)
    g = np.hstack([np.where(observed, X, 0.0), observed.astype(float)]) * (dl / n)[:, None]
    valid = action_prob > 0
    scale = np.where(valid, np.where(approved, 1.0, -1.0) * R / np.where(valid, action_prob, 1.0), 0.0)
    norms = np.linalg.norm(g * scale[:, None], axis=1)
    return 1.5 * float(norms.max()) if norms.size else 0.0


def _segment_gap(pool: ApplicantPool, z_segment: np.ndarray, cfg: LearnerConfig, utility: UtilityConfig,
                 missing_p: float, sample_size: int, rng: np.random.Generator) -> Tuple[float, float]:
    """Summed gap of a run of iterates against the best fixed z on `pool`, with its MC standard error."""
    sample = ValueSample.draw(pool, utility, sample_size, missing_p, rng)
    z_star = maximize_value(sample, cfg.link, cfg.box, z_segment.shape[1], x0=z_segment[-1])
    v_star = sample.per_sample(z_star, cfg.link)
    gaps = np.zeros(sample.reward.size)
    for z in z_segment:
        gaps += v_star - sample.per_sample(z, cfg.link)
    stderr = float(gaps.std(ddof=1) / math.sqrt(gaps.size)) if gaps.size > 1 else 0.0
    return float(gaps.mean()), stderr


def regret_diagnostic(pool: ApplicantPool, z_history: np.ndarray, cfg: LearnerConfig, utility: UtilityConfig,
                      missing_p: float, sample_size: int, rng: np.random.Generator,
                      G: Optional[float] = None, shifted: Optional[ApplicantPool] = None,
                      shift_period: Optional[int] = None) -> RegretDiagnostic:
    """Average optimality gap of z_1..z_T; with a shift, periods up to `shift_period` are scored on `pool`
    and the rest on `shifted`, each against its own best fixed z."""
    T, dim = z_history.shape
    if shifted is not None and shift_period is not None and 0 < shift_period < T:
        segments = [(pool, z_history[:shift_period]), (shifted, z_history[shift_period:])]
    elif shifted is not None and shift_period == 0:
        segments = [(shifted, z_history)]
    else:
        segments = [(pool, z_history)]
    total, variance = 0.0, 0.0
    for seg_pool, z_segment in segments:
        gap, stderr = _segment_gap(seg_pool, z_segment, cfg, utility, missing_p, sample_size, rng)
        total += gap
        variance += stderr ** 2
    D = cfg.box.diameter(dim)
    if G is None:
        G = max(estimate_gradient_bound(seg_pool, cfg, utility, missing_p, rng) for seg_pool, _ in segments)
    return RegretDiagnostic(D, G, T, regret_bound(D, max(G, 1e-300), T), total / T, math.sqrt(variance) / T)


# ---------------------------------------------------------------------------
# Scenario execution
# ---------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    config: ScenarioConfig
    series: Dict[str, List[MetricSeries]]
    pool_info: Dict[str, Any] = field(default_factory=dict)
    runtime_s: float = 0.0
    notes: List[str] = field(default_factory=list)

    def all_series(self) -> List[MetricSeries]:
        return [s for name in self.config.algorithms for s in self.series[name]]


def build_rules(cfg: ScenarioConfig, n: int, stream: ApplicantStream, replication: int) -> Dict[str, DecisionRule]:
    sampler = lambda k, r, t: stream.draw(k, r, t)  # noqa: E731
    learner_cfg = replace(cfg.learner, seed=cfg.seed)
    rules: Dict[str, DecisionRule] = {}
    for name in cfg.algorithms:
        if name in LEARNERS:
            lc = learner_cfg if name == "learner" else learner_cfg.with_link(name[-1])
            rules[name] = PolicyGradientRule(lc, cfg.utility, n, sampler=sampler, replication=replication, name=name)
        elif name == "perfect":
            rules[name] = PerfectRule(cfg.utility)
        elif name == "extrapolation":
            rules[name] = ExtrapolationRule(cfg.utility)
        elif name == "perceptron":
            rules[name] = PerceptronRule(n)
        elif name == "logistic":
            rules[name] = LogisticRule(cfg.utility, n, learning_rate=cfg.logistic_learning_rate)
        else:
            rules[name] = ApproveAllRule()
    return rules


def build_pools(cfg: ScenarioConfig) -> Tuple[ApplicantPool, Optional[ApplicantPool]]:
    """The scenario's pool (and shifted pool); replications share them."""
    def make(name: str, salt: int) -> ApplicantPool:
        rng = np.random.default_rng([cfg.seed, salt])
        pool = resolve_pool(name, cfg.pool_size, rng, seed=cfg.seed, n_features=cfg.n_features,
                            interest_rate=cfg.utility.interest_rate, mc_samples=cfg.group_mc_samples)
        _metrics['pools_built'] += 1
        return pool

    pool = make(cfg.pool, 0)
    if pool.size == 0:
        raise ConfigurationError(f"pool {cfg.pool!r} is empty")
    shifted = make(cfg.shifted_pool, 1) if cfg.shifted_pool else None
    return pool, shifted


def run_replication(cfg: ScenarioConfig, replication: int, pool: ApplicantPool,
                    shifted: Optional[ApplicantPool] = None) -> Dict[str, MetricSeries]:
    """One replication: every algorithm sees the same applicants, masks and repayment draws."""
    if cfg.T == 0:
        return {name: MetricSeries.empty(name, replication) for name in cfg.algorithms}

    stream = ApplicantStream(pool, cfg.missing_p)
    rng = np.random.default_rng([cfg.seed, replication, 1])
    rules = build_rules(cfg, pool.n, stream, replication)
    stats: Dict[str, List[PeriodStats]] = {name: [] for name in cfg.algorithms}
    z_hist: Dict[str, List[np.ndarray]] = {name: [] for name in cfg.algorithms if name in LEARNERS}
    timing = {name: 0.0 for name in cfg.algorithms}

    for t in range(1, cfg.T + 1):
        if shifted is not None and t == cfg.shift_period + 1:
            stream.swap(shifted)
        batch = stream.draw(cfg.N_t, rng, t)
        observed = batch.observed()
        for name, rule in rules.items():
            started = time.perf_counter()
            if name in z_hist:
                z_hist[name].append(rule.state_vector())
            oracle = batch.probs if rule.oracle_access else None
            decision = rule.decide(observed, oracle)
            utilities = batch_utilities(batch.group_sizes, decision.approved, batch.repays, cfg.utility)
            feedback = Feedback(batch.repays & decision.approved, utilities)
            rule.observe(observed, decision, feedback, oracle)
            timing[name] += time.perf_counter() - started
            approved = int(decision.approved.sum())
            stats[name].append(PeriodStats(len(batch), approved,
                                           int((decision.approved & ~batch.repays).sum()),
                                           float(utilities.sum())))

    out = {}
    for name in cfg.algorithms:
        series = compute_metrics(stats[name], name, replication,
                                 cfg.shift_period if shifted is not None else None)
        series.wall_time_s = timing[name]
        if name in z_hist:
            series.z = np.vstack(z_hist[name])
            if cfg.regret_sample > 0:
                diag_rng = np.random.default_rng([cfg.seed, replication, 2])
                series.regret = regret_diagnostic(pool, series.z, rules[name].cfg, cfg.utility, cfg.missing_p,
                                                  cfg.regret_sample, diag_rng, shifted=shifted,
                                                  shift_period=cfg.shift_period)
        out[name] = series
    return out


def apply_normalization(result: ScenarioResult) -> None:
    """Per-scenario normalization: lowest mean converged utility across algorithms → −1, perfect → +1."""
    if "perfect" not in result.series or result.config.T == 0:
        return
    means = {name: float(np.mean([s.converged_utility for s in series])) for name, series in result.series.items()}
    lowest, perfect = min(means.values()), means["perfect"]
    try:
        normalized_utility(perfect, lowest, perfect)
    except DegenerateNormalizationError as e:
        logger.warning(f"{result.config.name}: normalized utility left blank ({e})")
        result.notes.append(f"normalization degenerate: {e}")
        return
    for series in result.series.values():
        for s in series:
            s.normalized_utility = normalized_utility(s.converged_utility, lowest, perfect)


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> ScenarioResult:
    started = time.perf_counter()
    logger.info(f"Scenario {cfg.name}: pool={cfg.pool}, algorithms={list(cfg.algorithms)}, T={cfg.T}, "
                f"N_t={cfg.N_t}, replications={cfg.replications}, missing_p={cfg.missing_p}, seed={cfg.seed}")
    pool, shifted = build_pools(cfg)

    if jobs == 1:
        per_rep = [run_replication(cfg, rep, pool, shifted) for rep in range(cfg.replications)]
    else:
        per_rep = Parallel(n_jobs=jobs)(delayed(run_replication)(cfg, rep, pool, shifted)
                                        for rep in range(cfg.replications))

    series = {name: [rep[name] for rep in per_rep] for name in cfg.algorithms}
    runtime = time.perf_counter() - started
    result = ScenarioResult(cfg, series, pool_info=dict(pool.provenance), runtime_s=runtime)
    if cfg.T > 0 and any(s.default_rate.size and np.any(s.approval_rate == 0) for s in result.all_series()):
        result.notes.append("default rate reported as 0 in periods without approvals")
    apply_normalization(result)

    _metrics['scenarios_run'] += 1
    _metrics['replications_run'] += cfg.replications
    _metrics['periods_simulated'] += cfg.replications * cfg.T * len(cfg.algorithms)
    _metrics['last_runtime_s'] = round(runtime, 3)
    logger.info(f"Scenario {cfg.name} finished in {runtime:.2f}s")
    return result
