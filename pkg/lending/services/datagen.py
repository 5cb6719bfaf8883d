"""
Applicant pool construction.

Pools are immutable arrays of underlying features S, true return
probabilities P(B=1|S) and group sizes. Individual pools come from a feature
distribution plus a repayment form; group pools compute the probability that
the members' nonnegative gains cover n(1+r) by Monte Carlo. Pools can also be
ingested from a pre-encoded CSV table and augmented through a fitted logistic
model.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from .core import (
    ConfigurationError,
    ContractViolation,
    DegenerateFitError,
    DomainError,
    FeatureVector,
    ObservedBatch,
    Outcome,
    ParseError,
    ResultsIOError,
)

logger = logging.getLogger(__name__)

FEATURE_MAX = 4.0
PROB_TOLERANCE = 1e-12
GROUP_MU_GRID = 101

FEATURE_KINDS = ("binned", "gaussian", "abs_gaussian", "log_gaussian")
REPAYMENT_FORMS = ("linear", "quadratic", "sigmoid")


# ---------------------------------------------------------------------------
# Feature distributions
# ---------------------------------------------------------------------------

def feature_pmf(a_s: float, b_s: int, l: int) -> float:
    """Mass of bin l (1-based) of the linear-trend binned distribution."""
    if b_s < 2:
        raise ConfigurationError(f"binned distribution needs at least 2 bins, got {b_s}")
    if not 1 <= l <= b_s:
        raise ContractViolation(f"bin index {l} outside 1..{b_s}")
    slope = (2.0 - 2.0 * a_s * b_s) / (b_s * (b_s - 1))
    mass = a_s + slope * (l - 1)
    if mass < -PROB_TOLERANCE:
        raise ConfigurationError(f"a_S={a_s}, b_S={b_s} gives negative mass {mass} in bin {l}")
    return max(mass, 0.0)


def feature_pmf_vector(a_s: float, b_s: int) -> np.ndarray:
    pmf = np.array([feature_pmf(a_s, b_s, l) for l in range(1, b_s + 1)])
    # guard against rounding in the last digit before handing to Generator.choice
    return pmf / pmf.sum()


@dataclass(frozen=True)
class FeatureDistSpec:
    kind: str = "binned"
    n: int = 100
    a_s: float = 0.0
    b_s: int = 100
    mean: float = 0.0
    sd: float = 1.0
    reflect: bool = False

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"unknown feature distribution kind {self.kind!r}")
        if self.n < 1:
            raise ConfigurationError(f"feature dimension must be positive, got {self.n}")
        if self.kind == "binned":
            # validates every bin's mass
            feature_pmf_vector(self.a_s, self.b_s)
        elif self.sd <= 0:
            raise ConfigurationError(f"{self.kind} feature distribution needs sd > 0, got {self.sd}")

    @property
    def bounded(self) -> bool:
        return self.kind == "binned"

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        shape = (size, self.n)
        if self.kind == "binned":
            bins = rng.choice(self.b_s, size=shape, p=feature_pmf_vector(self.a_s, self.b_s))
            return FEATURE_MAX * bins / (self.b_s - 1)
        if self.kind == "gaussian":
            draws = rng.normal(self.mean, self.sd, shape)
            if self.reflect:
                draws = 2.0 * self.mean - draws
            return np.clip(draws, 0.0, None)
        if self.kind == "abs_gaussian":
            return np.abs(rng.normal(0.0, self.sd, shape))
        return np.exp(rng.normal(0.0, self.sd, shape))


# ---------------------------------------------------------------------------
# Repayment probability families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightRule:
    """How w_B is laid out over the n features."""

    kind: str = "constant"  # constant | ramp | v_shape | normal
    value: float = 1.0
    span: float = 0.0
    sd: float = 0.0

    def resolve(self, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        j = np.arange(1, n + 1, dtype=float)
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "ramp":
            step = self.span / (n - 1) if n > 1 else 0.0
            return self.value + step * (j - 1)
        if self.kind == "v_shape":
            step = 1.4 / (n - 1) if n > 1 else 0.0
            half = n / 2.0
            return np.where(j <= half, 1.5 - step * (j - 1), 0.1 + step * (j - half - 1))
        if self.kind == "normal":
            if rng is None:
                raise ConfigurationError("random feature weights need a generator to be frozen")
            return rng.normal(self.value, self.sd, n)
        raise ConfigurationError(f"unknown weight rule {self.kind!r}")


@dataclass(frozen=True)
class RepaymentSpec:
    """q_B = (1/n) Σ w_B[j] s[j] + c_B followed by a post-map.

    linear and quadratic post-maps are a2·q² + a1·q + a0; sigmoid is e^q/(1+e^q).
    """

    form: str = "linear"
    weight_rule: WeightRule = field(default_factory=WeightRule)
    offset: float = 0.0
    coefficients: Tuple[float, float, float] = (0.0, 0.25, 0.0)
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.form not in REPAYMENT_FORMS:
            raise ConfigurationError(f"unknown repayment form {self.form!r}")

    def resolve(self, n: int, rng: Optional[np.random.Generator] = None) -> "RepaymentSpec":
        """Freeze the weight vector (random rules draw from `rng`)."""
        if self.weights is not None:
            if len(self.weights) != n:
                raise ConfigurationError(f"repayment weights have length {len(self.weights)}, expected {n}")
            return self
        return replace(self, weights=tuple(self.weight_rule.resolve(n, rng).tolist()))

    def score(self, s: np.ndarray) -> np.ndarray:
        if self.weights is None:
            raise ConfigurationError("repayment weights are not resolved")
        w = np.asarray(self.weights)
        if s.shape[1] != w.size:
            raise ContractViolation(f"feature dimension {s.shape[1]} does not match weights {w.size}")
        return s @ w / w.size + self.offset

    def post_map(self, q: np.ndarray) -> np.ndarray:
        if self.form == "sigmoid":
            return expit(q)
        a2, a1, a0 = self.coefficients
        return a2 * q * q + a1 * q + a0


def repayment_batch(spec: RepaymentSpec, s: np.ndarray) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if np.isnan(s).any():
        raise DomainError("repayment probability needs fully observed features")
    p = spec.post_map(spec.score(s))
    if p.size and (p.min() < -PROB_TOLERANCE or p.max() > 1.0 + PROB_TOLERANCE):
        raise DomainError(f"features outside the support of the {spec.form} repayment form "
                          f"(P in [{p.min():.6g}, {p.max():.6g}])")
    return np.clip(p, 0.0, 1.0)


def repayment_probability(spec: RepaymentSpec, s: FeatureVector) -> float:
    spec = spec.resolve(s.n) if spec.weights is None and spec.weight_rule.kind != "normal" else spec
    return float(repayment_batch(spec, s.entries[None, :])[0])


# ---------------------------------------------------------------------------
# Group lending
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupSpec:
    mode: str = "basic"
    max_group_size: int = 100
    gain_mean: float = 1.42
    gain_sd: float = 0.5
    interest_rate: float = 0.35
    features: Optional[FeatureDistSpec] = None
    repayment: Optional[RepaymentSpec] = None
    mc_samples: int = 10_000

    def __post_init__(self):
        if self.mode not in ("basic", "advanced"):
            raise ConfigurationError(f"unknown group mode {self.mode!r}")
        if self.gain_sd <= 0:
            raise ConfigurationError(f"member gain sd must be > 0, got {self.gain_sd}")
        if self.max_group_size < 1:
            raise ConfigurationError(f"max group size must be positive, got {self.max_group_size}")
        if self.mode == "advanced" and (self.features is None or self.repayment is None):
            raise ConfigurationError("advanced group lending needs member features and a gain form")

    @property
    def delta(self) -> float:
        return 0.5 + self.interest_rate

    def mean_gain(self, s_bar: Optional[np.ndarray] = None) -> np.ndarray:
        """μ for basic pools, δ + f(q_B(s̄)) row-wise for advanced ones."""
        if self.mode == "basic":
            return np.asarray(self.gain_mean, dtype=float)
        if s_bar is None:
            raise ContractViolation("advanced group lending needs member features s̄")
        s_bar = np.atleast_2d(np.asarray(s_bar, dtype=float))
        repayment = self.repayment.resolve(s_bar.shape[1])
        return self.delta + repayment.post_map(repayment.score(s_bar))


def group_return_probability(spec: GroupSpec, group_size: int, s_bar: Optional[np.ndarray] = None,
                             mc_samples: Optional[int] = None,
                             rng: Optional[np.random.Generator] = None) -> float:
    """Monte-Carlo P(Σ_m max(g_m, 0) >= n(1+r)), g_m ~ Normal(μ, σ²)."""
    if group_size < 1:
        raise ContractViolation(f"group size must be positive, got {group_size}")
    samples = mc_samples or spec.mc_samples
    rng = rng or np.random.default_rng(0)
    mu = float(np.ravel(spec.mean_gain(s_bar))[0])
    gains = rng.normal(mu, spec.gain_sd, (samples, group_size))
    held = np.maximum(gains, 0.0).sum(axis=1)
    return float(np.mean(held >= group_size * (1.0 + spec.interest_rate)))


def group_return_table(mu_values: np.ndarray, max_group_size: int, sigma: float, interest_rate: float,
                       mc_samples: int, rng: np.random.Generator) -> np.ndarray:
    """P(return) for every (μ, n) pair, n = 1..max_group_size, with common random numbers."""
    mu_values = np.atleast_1d(np.asarray(mu_values, dtype=float))
    z = rng.standard_normal((mc_samples, max_group_size))
    sizes = np.arange(1, max_group_size + 1)
    thresholds = sizes * (1.0 + interest_rate)
    table = np.empty((mu_values.size, max_group_size))
    for row, mu in enumerate(mu_values):
        held = np.cumsum(np.maximum(mu + sigma * z, 0.0), axis=1)
        table[row] = np.mean(held >= thresholds, axis=0)
    return table


# ---------------------------------------------------------------------------
# Pools
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoolSpec:
    name: str
    features: Optional[FeatureDistSpec] = None
    repayment: Optional[RepaymentSpec] = None
    group: Optional[GroupSpec] = None

    def __post_init__(self):
        if self.group is None and (self.features is None or self.repayment is None):
            raise ConfigurationError(f"pool {self.name!r} needs a feature distribution and a repayment form")

    @property
    def n(self) -> int:
        if self.group is not None:
            return 1 if self.group.mode == "basic" else 1 + self.group.features.n
        return self.features.n


@dataclass(frozen=True)
class ApplicantPool:
    features: np.ndarray
    probs: np.ndarray
    group_sizes: np.ndarray
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        features = np.array(self.features, dtype=float, ndmin=2, copy=True)
        probs = np.array(self.probs, dtype=float, copy=True).ravel()
        sizes = np.array(self.group_sizes, dtype=np.int64, copy=True).ravel()
        if features.shape[0] != probs.size or probs.size != sizes.size:
            raise ConfigurationError("pool arrays have mismatched lengths")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise ConfigurationError("pool return probabilities must lie in [0, 1]")
        if sizes.size and sizes.min() < 1:
            raise ConfigurationError("group sizes must be positive")
        for arr in (features, probs, sizes):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "group_sizes", sizes)

    @property
    def size(self) -> int:
        return int(self.probs.size)

    @property
    def n(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return self.size


def _empty_pool(n: int, provenance: Dict[str, Any]) -> ApplicantPool:
    return ApplicantPool(np.empty((0, n)), np.empty(0), np.empty(0, dtype=np.int64), provenance)


def build_pool(spec: PoolSpec, size: int, rng: np.random.Generator,
               seed: Optional[int] = None) -> ApplicantPool:
    """Draw `size` applicants; deterministic given the generator state."""
    if size < 0:
        raise ConfigurationError(f"pool size must be >= 0, got {size}")
    provenance = {"spec": spec.name, "seed": seed, "size": int(size)}
    if size == 0:
        return _empty_pool(spec.n, provenance)

    if spec.group is None:
        repayment = spec.repayment.resolve(spec.features.n, rng)
        features = spec.features.sample(size, rng)
        probs = repayment_batch(repayment, features)
        pool = ApplicantPool(features, probs, np.ones(size, dtype=np.int64), provenance)
    else:
        pool = _build_group_pool(spec, size, rng, provenance)
    logger.info(f"Built pool {spec.name}: {size} samples, n={pool.n}, mean P={pool.probs.mean():.4f}")
    return pool


def _build_group_pool(spec: PoolSpec, size: int, rng: np.random.Generator,
                      provenance: Dict[str, Any]) -> ApplicantPool:
    group = spec.group
    sizes = rng.integers(1, group.max_group_size + 1, size)
    if group.mode == "basic":
        table = group_return_table(np.array([group.gain_mean]), group.max_group_size, group.gain_sd,
                                   group.interest_rate, group.mc_samples, rng)
        probs = table[0, sizes - 1]
        return ApplicantPool(sizes[:, None].astype(float), probs, sizes, provenance)

    resolved = replace(group, repayment=group.repayment.resolve(group.features.n, rng))
    s_bar = resolved.features.sample(size, rng)
    mu = resolved.mean_gain(s_bar)
    lo, hi = float(mu.min()), float(mu.max())
    grid = np.linspace(lo, hi if hi > lo else lo + 1e-9, GROUP_MU_GRID)
    table = group_return_table(grid, group.max_group_size, group.gain_sd, group.interest_rate,
                               group.mc_samples, rng)
    pos = (mu - grid[0]) / (grid[1] - grid[0])
    i0 = np.clip(np.floor(pos).astype(int), 0, GROUP_MU_GRID - 2)
    frac = np.clip(pos - i0, 0.0, 1.0)
    col = sizes - 1
    probs = (1.0 - frac) * table[i0, col] + frac * table[i0 + 1, col]
    features = np.hstack([sizes[:, None].astype(float), s_bar])
    return ApplicantPool(features, probs, sizes, provenance)


# ---------------------------------------------------------------------------
# Missing data and applicant streams
# ---------------------------------------------------------------------------

def _check_missing_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"missing probability {p} outside [0, 1]")


def mask_missing(features: FeatureVector, p: float, rng: np.random.Generator) -> FeatureVector:
    """Blank each entry independently with probability p."""
    _check_missing_p(p)
    return FeatureVector(mask_batch(features.entries[None, :], p, rng)[0])


def mask_batch(features: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    _check_missing_p(p)
    out = np.array(features, dtype=float, copy=True)
    out[rng.random(out.shape) < p] = np.nan
    return out


@dataclass(frozen=True)
class ApplicantBatch:
    """One period's applicants: what the lender may see plus the simulator's truth."""

    period: int
    true_features: np.ndarray
    features: np.ndarray
    probs: np.ndarray
    group_sizes: np.ndarray
    repays: np.ndarray

    def observed(self) -> ObservedBatch:
        return ObservedBatch(self.period, self.features, self.group_sizes)

    def __len__(self) -> int:
        return int(self.probs.size)


class ApplicantStream:
    """Draws masked applicant batches from a (swappable) pool."""

    def __init__(self, pool: ApplicantPool, missing_p: float = 0.0):
        _check_missing_p(missing_p)
        if pool.size == 0:
            raise ConfigurationError("cannot draw applicants from an empty pool")
        self.pool = pool
        self.missing_p = missing_p

    def swap(self, pool: ApplicantPool) -> None:
        if pool.size == 0:
            raise ConfigurationError("cannot draw applicants from an empty pool")
        if pool.n != self.pool.n:
            raise ConfigurationError(f"shifted pool has dimension {pool.n}, expected {self.pool.n}")
        self.pool = pool

    def draw(self, count: int, rng: np.random.Generator, period: int = 0) -> ApplicantBatch:
        idx = rng.integers(0, self.pool.size, count)
        true_features = self.pool.features[idx]
        probs = self.pool.probs[idx]
        features = mask_batch(true_features, self.missing_p, rng)
        repays = rng.random(count) < probs
        return ApplicantBatch(period, true_features, features, probs, self.pool.group_sizes[idx], repays)


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    label_column: str = "label"
    prob_column: str = "prob"
    group_column: str = "group_size"


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column].astype(str).str.strip()
    values = pd.to_numeric(raw.where(raw != "", None), errors="coerce")
    bad = values.isna() & (raw != "")
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2  # header is line 1
        raise ParseError(f"non-numeric value {raw[bad].iloc[0]!r} at row {row}, column {column!r}")
    return values.to_numpy(dtype=float)


def rescale_column(values: np.ndarray) -> np.ndarray:
    """Map a column into [0, 4] by 4s/max(s) when its maximum exceeds 4."""
    col_max = np.nanmax(values) if np.any(~np.isnan(values)) else 0.0
    if col_max > FEATURE_MAX:
        return values * FEATURE_MAX / col_max
    return values


def ingest_csv_pool(path, schema: CsvSchema = CsvSchema()) -> ApplicantPool:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise ResultsIOError(f"pool file not found: {path}")
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path}: missing header row")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"{path}: {e}")

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    if any(_looks_numeric(c) for c in columns):
        raise ParseError(f"{path}: missing header row (found numeric column name)")

    if schema.prob_column in columns:
        probs = _numeric_column(frame, schema.prob_column)
        target = schema.prob_column
        if np.isnan(probs).any() or probs.size and (probs.min() < 0 or probs.max() > 1):
            raise ParseError(f"{path}: column {target!r} must hold probabilities in [0, 1] in every row")
    elif schema.label_column in columns:
        probs = _numeric_column(frame, schema.label_column)
        target = schema.label_column
        if not np.isin(probs, (0.0, 1.0)).all():
            raise ParseError(f"{path}: column {target!r} must hold 0/1 labels in every row")
    else:
        raise ParseError(f"{path}: no {schema.label_column!r} or {schema.prob_column!r} column")

    reserved = {schema.label_column, schema.prob_column, schema.group_column}
    feature_columns = [c for c in columns if c not in reserved]
    if not feature_columns:
        raise ParseError(f"{path}: no feature columns")
    features = np.column_stack([rescale_column(_numeric_column(frame, c)) for c in feature_columns]) \
        if len(frame) else np.empty((0, len(feature_columns)))

    if schema.group_column in columns:
        sizes = _numeric_column(frame, schema.group_column)
        if np.isnan(sizes).any() or (sizes.size and (sizes.min() < 1 or np.any(sizes != np.round(sizes)))):
            raise ParseError(f"{path}: column {schema.group_column!r} must hold positive integers")
        sizes = sizes.astype(np.int64)
    else:
        sizes = np.ones(len(frame), dtype=np.int64)

    logger.info(f"Ingested {len(frame)} rows x {len(feature_columns)} features from {path} (target {target!r})")
    return ApplicantPool(features, probs, sizes, {"spec": f"csv:{path}", "seed": None, "size": int(len(frame)),
                                                  "feature_columns": feature_columns})


def _looks_numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def export_pool_csv(pool: ApplicantPool, path, feature_names: Optional[Sequence[str]] = None) -> Path:
    """Write `<path>` plus a `<path>.meta.json` sidecar."""
    path = Path(path)
    names = list(feature_names or pool.provenance.get("feature_columns") or
                 [f"s{j}" for j in range(1, pool.n + 1)])
    frame = pd.DataFrame(pool.features, columns=names)
    frame["group_size"] = pool.group_sizes
    frame["prob"] = pool.probs
    meta = {k: v for k, v in pool.provenance.items() if k != "feature_columns"}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.15g", na_rep="")
        with open(f"{path}.meta.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    except OSError as e:
        raise ResultsIOError(f"failed to write pool to {path}: {e}")
    logger.info(f"Wrote pool ({pool.size} rows) to {path}")
    return path


# ---------------------------------------------------------------------------
# Logistic model augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogisticModel:
    """P = 1/(1+e^{-x}), x = Σ_k α[k]ŝ[k] + β[k] over observed entries."""

    alpha: np.ndarray
    beta: np.ndarray
    iterations: int = 0
    grad_norm: float = 0.0

    def logits(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        observed = ~np.isnan(features)
        terms = np.where(observed, self.alpha * np.nan_to_num(features) + self.beta, 0.0)
        return terms.sum(axis=1)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return expit(self.logits(features))


def _as_label(outcome) -> float:
    if isinstance(outcome, Outcome):
        if outcome is Outcome.NOT_APPLICABLE:
            raise ContractViolation("logistic fitting needs observed outcomes")
        return 1.0 if outcome is Outcome.RETURNED else 0.0
    return float(outcome)


def fit_logistic_model(records: Iterable[Tuple[Any, Any]], max_iter: int = 10_000,
                       tol: float = 1e-6) -> LogisticModel:
    """Batch gradient ascent on the log-likelihood, step 0.1 / num_samples on the summed gradient."""
    rows, labels = [], []
    for features, outcome in records:
        entries = features.entries if isinstance(features, FeatureVector) else np.asarray(features, dtype=float)
        rows.append(entries)
        labels.append(_as_label(outcome))
    if not rows:
        raise DegenerateFitError("no records to fit")
    return fit_logistic_arrays(np.vstack(rows), np.asarray(labels), max_iter=max_iter, tol=tol)


def fit_logistic_arrays(features: np.ndarray, labels: np.ndarray, max_iter: int = 10_000,
                        tol: float = 1e-6) -> LogisticModel:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float)
    if np.unique(y).size < 2:
        raise DegenerateFitError("logistic fit needs at least two distinct outcome labels")
    m = y.size
    observed = (~np.isnan(features)).astype(float)
    values = np.nan_to_num(features)
    alpha = np.zeros(features.shape[1])
    beta = np.zeros(features.shape[1])
    step = 0.1 / m
    grad_norm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        residual = y - expit((values * alpha + observed * beta).sum(axis=1))
        g_alpha = residual @ values
        g_beta = residual @ observed
        grad_norm = float(np.sqrt(g_alpha @ g_alpha + g_beta @ g_beta)) / m
        if grad_norm <= tol:
            break
        alpha += step * g_alpha
        beta += step * g_beta
    logger.info(f"Logistic fit on {m} samples: {it} iterations, gradient norm {grad_norm:.3g}")
    return LogisticModel(alpha, beta, iterations=it, grad_norm=grad_norm)


def augment_pool_from_model(features: np.ndarray, model: LogisticModel, size: int,
                            rng: np.random.Generator) -> ApplicantPool:
    """Resample source rows with replacement; each sample gets the model's return probability."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] == 0 or features.size == 0:
        raise ConfigurationError("cannot augment from an empty feature set")
    idx = rng.integers(0, features.shape[0], size)
    rows = features[idx]
    provenance = {"spec": "logistic_augmented", "seed": None, "size": int(size)}
    return ApplicantPool(rows, model.predict(rows) if size else np.empty(0), np.ones(size, dtype=np.int64),
                         provenance)


def resample_pool_by_label(pool: ApplicantPool, size: int, default_fraction: float,
                           rng: np.random.Generator) -> ApplicantPool:
    """Copy labelled rows, choosing a defaulted row with probability `default_fraction`."""
    if not 0.0 <= default_fraction <= 1.0:
        raise ConfigurationError(f"default fraction {default_fraction} outside [0, 1]")
    if not np.isin(pool.probs, (0.0, 1.0)).all():
        raise ConfigurationError("label resampling needs a pool with 0/1 outcomes")
    defaulted = np.flatnonzero(pool.probs == 0.0)
    returned = np.flatnonzero(pool.probs == 1.0)
    if (default_fraction > 0 and defaulted.size == 0) or (default_fraction < 1 and returned.size == 0):
        raise ConfigurationError("pool lacks rows of the requested label")
    pick_default = rng.random(size) < default_fraction
    idx = np.where(pick_default,
                   defaulted[rng.integers(0, max(defaulted.size, 1), size)] if defaulted.size else 0,
                   returned[rng.integers(0, max(returned.size, 1), size)] if returned.size else 0)
    provenance = dict(pool.provenance, spec=f"{pool.provenance.get('spec')}:resampled", size=int(size),
                      default_fraction=default_fraction)
    return ApplicantPool(pool.features[idx], pool.probs[idx], pool.group_sizes[idx], provenance)
