"""
Comparison decision rules.

PerfectRule and ExtrapolationRule get oracle access to true return
probabilities (the latter only as training targets); PerceptronRule and
LogisticRule learn from the outcomes of loans they approve. Offline rules
train during their first ten periods and re-enter training when a
ShiftMonitor sees their utility collapse.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Tuple

import numpy as np
import scipy.linalg as la
from scipy.special import expit

from .core import (
    Action,
    ContractViolation,
    Decision,
    DecisionRule,
    DegenerateFitError,
    Feedback,
    FeatureVector,
    ObservedBatch,
    UtilityConfig,
)

logger = logging.getLogger(__name__)

TRAINING_PERIODS = 10


def perfect_decide(p_return: float, cfg: UtilityConfig) -> Action:
    if not 0.0 <= p_return <= 1.0:
        raise ContractViolation(f"return probability {p_return} outside [0, 1]")
    return Action.APPROVED if p_return >= cfg.approval_threshold else Action.REJECTED


# ---------------------------------------------------------------------------
# Gaussian extrapolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianFit:
    """p ≈ a_g·exp(−((q_g − b_g)/c_g)²)."""

    a_g: float
    b_g: float
    c_g: float
    residual: float = 0.0

    def __post_init__(self):
        if self.c_g == 0:
            raise DegenerateFitError("gaussian width must be non-zero")

    def raw(self, q):
        return self.a_g * np.exp(-((np.asarray(q, dtype=float) - self.b_g) / self.c_g) ** 2)

    def predict(self, q):
        """Prediction clamped to [0, 1]."""
        out = np.clip(self.raw(q), 0.0, 1.0)
        return float(out) if np.ndim(out) == 0 else out


def _gaussian_residual(params: np.ndarray, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    a, b, c = params
    return a * np.exp(-((q - b) / c) ** 2) - p


def _rms(r: np.ndarray) -> float:
    return float(np.sqrt(np.mean(r * r)))


def gauss_newton(q: np.ndarray, p: np.ndarray, start: Tuple[float, float, float],
                 max_iter: int = 200, tol: float = 1e-14) -> Tuple[np.ndarray, List[float]]:
    """Gauss–Newton with step halving; returns final params and the RMS residual after each accepted step."""
    est = np.array(start, dtype=float)
    r = _gaussian_residual(est, q, p)
    history = [_rms(r)]
    jac = np.empty((q.size, 3))
    for _ in range(max_iter):
        a, b, c = est
        e = np.exp(-((q - b) / c) ** 2)
        jac[:, 0] = e
        jac[:, 1] = a * e * 2.0 * (q - b) / c ** 2
        jac[:, 2] = a * e * 2.0 * (q - b) ** 2 / c ** 3
        dlambda, _, _, _ = la.lstsq(jac, r)

        step = 1.0
        accepted = False
        while step > 1e-10:
            trial = est - step * dlambda
            if trial[2] != 0 and np.all(np.isfinite(trial)):
                r_trial = _gaussian_residual(trial, q, p)
                if np.all(np.isfinite(r_trial)) and _rms(r_trial) <= history[-1]:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        improvement = history[-1] - _rms(r_trial)
        est, r = trial, r_trial
        history.append(_rms(r))
        if improvement <= tol * max(history[-2], 1e-300) or history[-1] == 0.0:
            break
    return est, history


def gaussian_fit(samples) -> GaussianFit:
    """Least-squares Gaussian through (q_g, p_true) pairs; lowest residual over a grid of starts."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[0] < 3:
        raise DegenerateFitError(f"gaussian fit needs at least 3 samples, got {len(data)}")
    q, p = data[:, 0], data[:, 1]
    q_lo, q_hi = float(q.min()), float(q.max())
    span = q_hi - q_lo
    if span == 0:
        raise DegenerateFitError("all q_g values are identical")

    a0 = float(p.max()) or 1e-3
    starts = [(a0, b, span * w) for b in np.linspace(q_lo, q_hi, 4) for w in (0.25, 0.5, 1.0, 2.0)]
    # flat-limit start for (near) constant targets
    starts.append((float(p.mean()) or 1e-3, float(q.mean()), span * 1e4))

    best_params, best_res = None, math.inf
    for start in starts:
        params, history = gauss_newton(q, p, start)
        if history[-1] < best_res:
            best_params, best_res = params, history[-1]
    a, b, c = best_params
    return GaussianFit(float(a), float(b), abs(float(c)), best_res)


def mean_available(features: np.ndarray) -> np.ndarray:
    """q_g per row: mean over observed entries, NaN when none are observed."""
    features = np.atleast_2d(features)
    observed = ~np.isnan(features)
    counts = observed.sum(axis=1)
    sums = np.where(observed, features, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def extrapolation_decide(fit: GaussianFit, features, cfg: UtilityConfig) -> Action:
    entries = features.entries if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
    q_g = mean_available(entries)[0]
    if np.isnan(q_g):
        return Action.REJECTED
    return Action.APPROVED if fit.predict(q_g) >= cfg.approval_threshold else Action.REJECTED


# ---------------------------------------------------------------------------
# Perceptron and online logistic regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerceptronState:
    weights: np.ndarray
    bias: float = 0.0

    @classmethod
    def zeros(cls, n: int, bias: float = 0.0) -> "PerceptronState":
        return cls(np.zeros(n), bias)

    def activation(self, features: np.ndarray) -> np.ndarray:
        return np.nan_to_num(np.atleast_2d(features)) @ self.weights + self.bias


def perceptron_step(state: PerceptronState, features, returned: Optional[bool] = None
                    ) -> Tuple[Action, PerceptronState]:
    """Approve iff P_A > 0; on an approved loan with a wrong sign, move toward the label."""
    s = np.nan_to_num(features.entries if isinstance(features, FeatureVector) else np.asarray(features, float))
    activation = float(s @ state.weights + state.bias)
    action = Action.APPROVED if activation > 0 else Action.REJECTED
    if action is Action.REJECTED or returned is None:
        return action, state
    return action, perceptron_update(state, s, returned)


def perceptron_update(state: PerceptronState, features, returned: bool) -> PerceptronState:
    """Mistake-driven update for one labelled (approved) application."""
    s = np.nan_to_num(np.asarray(features, dtype=float))
    y = 1.0 if returned else -1.0
    if y * float(s @ state.weights + state.bias) <= 0:
        return PerceptronState(state.weights + y * s, state.bias + y)
    return state


@dataclass(frozen=True)
class LogisticState:
    weights: np.ndarray
    bias: float = 0.0
    learning_rate: float = 0.1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractViolation(f"learning rate must be > 0, got {self.learning_rate}")

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 0.1) -> "LogisticState":
        return cls(np.zeros(n), 0.0, learning_rate)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return expit(np.nan_to_num(np.atleast_2d(features)) @ self.weights + self.bias)


def logistic_baseline_step(state: LogisticState, features, cfg: UtilityConfig,
                           returned: Optional[bool] = None, force_approve: bool = False
                           ) -> Tuple[Action, LogisticState]:
    s = np.nan_to_num(features.entries if isinstance(features, FeatureVector) else np.asarray(features, float))
    p_hat = float(expit(s @ state.weights + state.bias))
    approve = force_approve or p_hat >= cfg.approval_threshold
    action = Action.APPROVED if approve else Action.REJECTED
    if not approve or returned is None:
        return action, state
    err = (1.0 if returned else 0.0) - p_hat
    eta = state.learning_rate
    return action, LogisticState(state.weights + eta * err * s, state.bias + eta * err, eta)


# ---------------------------------------------------------------------------
# Decision rules
# ---------------------------------------------------------------------------

def _deterministic(approved: np.ndarray) -> Decision:
    approved = np.asarray(approved, dtype=bool)
    return Decision(approved, approved.astype(float))


class ApproveAllRule(DecisionRule):
    name = "approve_all"

    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        return _deterministic(np.ones(len(batch), dtype=bool))


class PerfectRule(DecisionRule):
    name = "perfect"
    oracle_access = True

    def __init__(self, utility: UtilityConfig):
        self.utility = utility

    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        if oracle_probs is None:
            raise ContractViolation("the perfect rule needs true return probabilities")
        return _deterministic(np.asarray(oracle_probs) >= self.utility.approval_threshold)


@dataclass
class ShiftMonitor:
    """Flags a drop of the trailing mean utility by more than `drop` of the previous plateau."""

    window: int = 10
    drop: float = 0.5
    history: List[float] = field(default_factory=list)

    def reset(self) -> None:
        self.history = []

    def update(self, mean_utility: float) -> bool:
        self.history.append(float(mean_utility))
        if len(self.history) < 2 * self.window:
            return False
        current = float(np.mean(self.history[-self.window:]))
        plateau = float(np.mean(self.history[-2 * self.window:-self.window]))
        if plateau != 0 and current < plateau - self.drop * abs(plateau):
            self.reset()
            return True
        return False


class _TrainedRule(DecisionRule):
    """Approve-all in the first period of a training phase, learn through period 10, then freeze."""

    def __init__(self, utility: UtilityConfig, training_periods: int = TRAINING_PERIODS,
                 monitor: Optional[ShiftMonitor] = None):
        self.utility = utility
        self.training_periods = training_periods
        self.monitor = monitor if monitor is not None else ShiftMonitor()
        self.phase_period = 0
        self.retrainings = 0
        self._collected: Deque[Tuple[ObservedBatch, Decision, Feedback, Optional[np.ndarray]]] = \
            deque(maxlen=self.monitor.window)

    @property
    def training(self) -> bool:
        return self.phase_period <= self.training_periods

    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        self.phase_period += 1
        if self.phase_period == 1:
            return _deterministic(np.ones(len(batch), dtype=bool))
        return _deterministic(self._approve(batch))

    def observe(self, batch: ObservedBatch, decision: Decision, feedback: Feedback,
                oracle_probs: Optional[np.ndarray] = None) -> None:
        if self.training:
            self._train(batch, decision, feedback, oracle_probs)
            return
        # frozen periods are still stored; a restart retrains on the latest monitor window
        self._collected.append((batch, decision, feedback, oracle_probs))
        if feedback.utilities.size and self.monitor.update(float(feedback.utilities.mean())):
            self.retrainings += 1
            logger.warning(f"{self.name}: utility drop detected at period {batch.period}, "
                           f"retraining on {len(self._collected)} collected periods")
            self._restart()
            for collected in self._collected:
                self._train(*collected)
            self._collected.clear()
            self.phase_period = 0

    def _approve(self, batch: ObservedBatch) -> np.ndarray:
        raise NotImplementedError

    def _train(self, batch, decision, feedback, oracle_probs) -> None:
        raise NotImplementedError

    def _restart(self) -> None:
        pass


class ExtrapolationRule(_TrainedRule):
    name = "extrapolation"
    oracle_access = True

    def __init__(self, utility: UtilityConfig, **kwargs):
        super().__init__(utility, **kwargs)
        self.fit: Optional[GaussianFit] = None
        self._q: List[np.ndarray] = []
        self._p: List[np.ndarray] = []

    def _approve(self, batch: ObservedBatch) -> np.ndarray:
        q_g = mean_available(batch.features)
        if self.fit is None:
            return np.ones(len(batch), dtype=bool)
        pred = self.fit.predict(np.nan_to_num(q_g))
        return ~np.isnan(q_g) & (np.atleast_1d(pred) >= self.utility.approval_threshold)

    def _train(self, batch, decision, feedback, oracle_probs) -> None:
        if oracle_probs is None:
            raise ContractViolation("extrapolation training needs true return probabilities")
        q_g = mean_available(batch.features)
        keep = ~np.isnan(q_g)
        self._q.append(q_g[keep])
        self._p.append(np.asarray(oracle_probs)[keep])
        q, p = np.concatenate(self._q), np.concatenate(self._p)
        try:
            self.fit = gaussian_fit(np.column_stack([q, p]))
        except DegenerateFitError as e:
            logger.debug(f"extrapolation fit postponed at period {batch.period}: {e}")

    def _restart(self) -> None:
        self._q, self._p = [], []
        self.fit = None


class LogisticRule(_TrainedRule):
    name = "logistic"

    def __init__(self, utility: UtilityConfig, n: int, learning_rate: float = 0.1, **kwargs):
        super().__init__(utility, **kwargs)
        self.state = LogisticState.zeros(n, learning_rate)

    def _approve(self, batch: ObservedBatch) -> np.ndarray:
        return self.state.predict(batch.features) >= self.utility.approval_threshold

    def _train(self, batch, decision, feedback, oracle_probs) -> None:
        for i in np.flatnonzero(decision.approved):
            _, self.state = logistic_baseline_step(self.state, batch.features[i], self.utility,
                                                   returned=bool(feedback.returned[i]), force_approve=True)


class PerceptronRule(DecisionRule):
    name = "perceptron"

    def __init__(self, n: int, bias: float = 1.0):
        self.state = PerceptronState.zeros(n, bias)

    def decide(self, batch: ObservedBatch, oracle_probs: Optional[np.ndarray] = None) -> Decision:
        return _deterministic(self.state.activation(batch.features) > 0)

    def observe(self, batch: ObservedBatch, decision: Decision, feedback: Feedback,
                oracle_probs: Optional[np.ndarray] = None) -> None:
        for i in np.flatnonzero(decision.approved):
            self.state = perceptron_update(self.state, batch.features[i], bool(feedback.returned[i]))

    def state_vector(self) -> np.ndarray:
        return np.append(self.state.weights, self.state.bias)
