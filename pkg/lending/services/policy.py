"""
Stochastic approval policy π_z.

The preference score is q = (1/n) Σ_{j ∈ U(ŝ)} (φ[j]·ŝ[j] + ε[j]), the
approval probability is L(q) for a concave increasing link L, and the
derivatives below are the exact gradient of that composition (including the
1/n chain-rule factor).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import (
    Action,
    ContractViolation,
    DomainError,
    FeatureVector,
    PolicyParams,
)


class LinkKind(str, enum.Enum):
    CASE_A = "A"  # L(q) = 1 - exp(-q)
    CASE_B = "B"  # L(q) = 2 exp(q) / (1 + exp(q)) - 1

    @classmethod
    def parse(cls, value) -> "LinkKind":
        if isinstance(value, LinkKind):
            return value
        text = str(value).strip().upper()
        if text.startswith("CASE"):
            text = text[4:].lstrip("_ ")
        try:
            return cls(text)
        except ValueError:
            raise DomainError(f"unknown link kind {value!r}; expected A or B")


@dataclass(frozen=True)
class PolicyEvaluation:
    q: float
    p: float
    grad_p: np.ndarray


def _check_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(np.isnan(q)):
        raise DomainError(f"link functions are defined for q >= 0, got {q.min() if q.size else q}")
    return q


def link_value(kind: LinkKind, q):
    """L(q); scalar in, float out, array in, array out."""
    qa = _check_q(q)
    if kind is LinkKind.CASE_A:
        out = -np.expm1(-qa)
    else:
        # 2e^q/(1+e^q) - 1 == tanh(q/2), stable for large q
        out = np.tanh(qa / 2.0)
    return float(out) if out.ndim == 0 else out


def link_derivative(kind: LinkKind, q):
    """L'(q); strictly positive on [0, inf)."""
    qa = _check_q(q)
    if kind is LinkKind.CASE_A:
        out = np.exp(-qa)
    else:
        # 2e^q/(1+e^q)^2 == 0.5 * (1 - tanh^2(q/2)), no overflow for large q
        out = 0.5 * (1.0 - np.tanh(qa / 2.0) ** 2)
    return float(out) if out.ndim == 0 else out


def preference_q(z: PolicyParams, features: FeatureVector) -> float:
    if features.n != z.n:
        raise ContractViolation(f"feature dimension {features.n} does not match policy dimension {z.n}")
    return float(preference_batch(z.vector, features.entries[None, :])[0])


def preference_batch(z: np.ndarray, features: np.ndarray) -> np.ndarray:
    """q for every row of a (N, n) matrix whose NaN entries are missing."""
    n = features.shape[1]
    phi, eps = z[:n], z[n:]
    observed = ~np.isnan(features)
    terms = np.where(observed, phi * np.nan_to_num(features) + eps, 0.0)
    return terms.sum(axis=1) / n


def feature_gradient(features: FeatureVector, k: int) -> float:
    """g(ŝ, k) for 1-based k in 1..2n."""
    n = features.n
    if not 1 <= k <= 2 * n:
        raise ContractViolation(f"gradient index {k} outside 1..{2 * n}")
    j = k if k <= n else k - n
    if features.is_missing(j):
        return 0.0
    return float(features.entries[j - 1]) if k <= n else 1.0


def feature_gradient_batch(features: np.ndarray) -> np.ndarray:
    """(N, 2n) matrix of g(ŝ_i, k)."""
    observed = ~np.isnan(features)
    return np.hstack([np.where(observed, features, 0.0), observed.astype(float)])


def approval_gradient_batch(z: np.ndarray, features: np.ndarray, kind: LinkKind):
    """Return (q, p, ∂π(ŝ,1)/∂z) for every row."""
    n = features.shape[1]
    q = preference_batch(z, features)
    p = link_value(kind, q)
    dl = link_derivative(kind, q)
    grad = feature_gradient_batch(features) * (np.asarray(dl)[:, None] / n)
    return q, np.asarray(p), grad


def evaluate_policy(z: PolicyParams, features: FeatureVector, kind: LinkKind) -> PolicyEvaluation:
    if features.n != z.n:
        raise ContractViolation(f"feature dimension {features.n} does not match policy dimension {z.n}")
    q, p, grad = approval_gradient_batch(z.vector, features.entries[None, :], kind)
    return PolicyEvaluation(q=float(q[0]), p=float(p[0]), grad_p=grad[0])


def policy_derivative(z: PolicyParams, features: FeatureVector, kind: LinkKind, action: Action) -> np.ndarray:
    """∂π_z(ŝ, a)/∂z[k] for k = 1..2n (returned 0-based)."""
    grad = evaluate_policy(z, features, kind).grad_p
    return grad if action is Action.APPROVED else -grad


def sample_decision(p: float, rng: np.random.Generator) -> Action:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"approval probability {p} outside [0, 1]")
    return Action.APPROVED if rng.random() < p else Action.REJECTED


def sample_decisions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Vectorised sample_decision; True means approved."""
    probs = np.asarray(probs, dtype=float)
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ContractViolation("approval probabilities must lie in [0, 1]")
    return rng.random(probs.shape) < probs
