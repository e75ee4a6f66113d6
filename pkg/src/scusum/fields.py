"""Conditional score fields and the information quantities built on them.

A score field models the gradient of a conditional log-density in its first
argument: ``score(y, x) ~ grad_y log p(y|x)`` together with its divergence
``divergence(y, x) ~ sum_i d(score_i)/dy_i``. On top of that capability this
module provides:

* the conditional Hyvarinen score  S_H(y, x) = 0.5*||score||^2 + divergence,
* the score difference s = S_H(.; p) - S_H(.; q) between two models,
* the conditional Fisher divergence  D_F = 0.5 * E||score_p - score_q||^2,
* empirical drift estimates of s over transition-pair streams.

Conventions: D_F carries the 1/2 factor so that the drift identity
E_p[s] = -D_F(p||q) holds exactly; all math is double precision. Estimators
return a mean together with its Monte-Carlo standard error. Whether a pair
stream is stationary is the caller's concern (see ``markov.simulate_path``
for burn-in handling).

Fields are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .exceptions import NumericsError

__all__ = [
    "TransitionPair",
    "PairBatch",
    "ScoreField",
    "GaussianScoreField",
    "MonteCarloEstimate",
    "hyvarinen_score",
    "hyvarinen_scores",
    "score_difference",
    "score_differences",
    "estimate_fisher_divergence",
    "estimate_drift",
    "check_divergence_consistency",
]


def as_state(x, dim: int | None = None) -> np.ndarray:
    """Validate one observation: 1-D, finite, optionally of dimension ``dim``."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"state must be a 1-D vector, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("state must have dimension >= 1")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state contains non-finite entries")
    if dim is not None and arr.size != dim:
        raise ValueError(f"state has dimension {arr.size}, expected {dim}")
    return arr


@dataclass(frozen=True)
class TransitionPair:
    """One observed transition (x_prev -> x_next) of the chain."""

    x_prev: np.ndarray
    x_next: np.ndarray

    def __post_init__(self):
        prev = as_state(self.x_prev)
        nxt = as_state(self.x_next, dim=prev.size)
        object.__setattr__(self, "x_prev", prev)
        object.__setattr__(self, "x_next", nxt)

    @property
    def dim(self) -> int:
        return self.x_prev.size


class PairBatch:
    """Column view of many transitions: two (n, d) arrays."""

    def __init__(self, x_prev, x_next):
        x_prev = np.atleast_2d(np.asarray(x_prev, dtype=np.float64))
        x_next = np.atleast_2d(np.asarray(x_next, dtype=np.float64))
        if x_prev.shape != x_next.shape:
            raise ValueError(
                f"pair arrays must share shape, got {x_prev.shape} vs {x_next.shape}"
            )
        self.x_prev = x_prev
        self.x_next = x_next

    def __len__(self) -> int:
        return self.x_prev.shape[0]

    @property
    def dim(self) -> int:
        return self.x_prev.shape[1]

    @classmethod
    def from_states(cls, states) -> "PairBatch":
        """Consecutive pairs (X_{n-1}, X_n) of a trajectory, n = 1..len-1."""
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 2:
            raise ValueError("need a (n >= 2, d) array of states")
        return cls(states[:-1], states[1:])

    @classmethod
    def coerce(cls, pairs) -> "PairBatch":
        if isinstance(pairs, cls):
            return pairs
        if isinstance(pairs, tuple) and len(pairs) == 2:
            return cls(pairs[0], pairs[1])
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty pair collection")
        if isinstance(pairs[0], TransitionPair):
            return cls(
                np.stack([p.x_prev for p in pairs]),
                np.stack([p.x_next for p in pairs]),
            )
        raise TypeError("expected PairBatch, (X_prev, X_next) arrays, or TransitionPair sequence")


class ScoreField(ABC):
    """Model of a conditional score grad_y log p(y|x) and its divergence.

    Implementations must be read-only after construction. Batch methods have
    looping defaults; override them when a vectorized form exists.
    """

    dim: int

    @abstractmethod
    def score(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Score vector at (y, x); shape (d,)."""

    @abstractmethod
    def divergence(self, y: np.ndarray, x: np.ndarray) -> float:
        """Trace of the Jacobian of the score with respect to y."""

    def score_batch(self, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
        return np.stack([self.score(y, x) for y, x in zip(Y, X)])

    def divergence_batch(self, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
        return np.array([self.divergence(y, x) for y, x in zip(Y, X)], dtype=np.float64)


class GaussianScoreField(ScoreField):
    """Exact score of a conditional Gaussian N(mean_fn(x), sigma^2 I).

    score(y, x) = -(y - mean_fn(x)) / sigma^2 and the divergence is the
    constant -d / sigma^2. ``mean_fn`` must map (d,) -> (d,) and, for the
    batch path, (n, d) -> (n, d) (elementwise maps qualify automatically).
    """

    def __init__(self, mean_fn, sigma: float, dim: int):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.mean_fn = mean_fn
        self.sigma = float(sigma)
        self.dim = int(dim)

    def score(self, y, x):
        y = as_state(y, self.dim)
        x = as_state(x, self.dim)
        return -(y - self.mean_fn(x)) / self.sigma**2

    def divergence(self, y, x):
        return -self.dim / self.sigma**2

    def score_batch(self, Y, X):
        return -(Y - self.mean_fn(X)) / self.sigma**2

    def divergence_batch(self, Y, X):
        return np.full(Y.shape[0], -self.dim / self.sigma**2)


@dataclass(frozen=True)
class MonteCarloEstimate:
    """Sample mean plus its standard error (sample std / sqrt(n))."""

    mean: float
    std_error: float
    count: int

    def __float__(self) -> float:
        return self.mean


def _check_field_dim(field: ScoreField, pair: TransitionPair) -> None:
    if pair.dim != field.dim:
        raise ValueError(f"pair dimension {pair.dim} does not match field dimension {field.dim}")


def hyvarinen_score(field: ScoreField, pair: TransitionPair) -> float:
    """0.5*||score(x_next, x_prev)||^2 + divergence(x_next, x_prev)."""
    if not isinstance(pair, TransitionPair):
        pair = TransitionPair(*pair)
    _check_field_dim(field, pair)
    s = np.asarray(field.score(pair.x_next, pair.x_prev), dtype=np.float64)
    if s.shape != (field.dim,):
        raise ValueError(f"score returned shape {s.shape}, expected ({field.dim},)")
    if not np.all(np.isfinite(s)):
        raise NumericsError("non-finite score term in Hyvarinen score")
    div = float(field.divergence(pair.x_next, pair.x_prev))
    if not np.isfinite(div):
        raise NumericsError("non-finite divergence term in Hyvarinen score")
    return 0.5 * float(s @ s) + div


def hyvarinen_scores(field: ScoreField, pairs) -> np.ndarray:
    """Vectorized Hyvarinen scores over a pair stream; shape (n,)."""
    batch = PairBatch.coerce(pairs)
    if batch.dim != field.dim:
        raise ValueError(f"pair dimension {batch.dim} does not match field dimension {field.dim}")
    s = field.score_batch(batch.x_next, batch.x_prev)
    if not np.all(np.isfinite(s)):
        raise NumericsError("non-finite score term in Hyvarinen score")
    div = field.divergence_batch(batch.x_next, batch.x_prev)
    if not np.all(np.isfinite(div)):
        raise NumericsError("non-finite divergence term in Hyvarinen score")
    return 0.5 * np.einsum("ij,ij->i", s, s) + div


def score_difference(field_p: ScoreField, field_q: ScoreField, pair) -> float:
    """S_H(pair; p) - S_H(pair; q); negative drift under p, positive under q."""
    return hyvarinen_score(field_p, pair) - hyvarinen_score(field_q, pair)


def score_differences(field_p: ScoreField, field_q: ScoreField, pairs) -> np.ndarray:
    return hyvarinen_scores(field_p, pairs) - hyvarinen_scores(field_q, pairs)


def _mc_estimate(values: np.ndarray) -> MonteCarloEstimate:
    n = values.size
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MonteCarloEstimate(mean=float(np.mean(values)), std_error=se, count=n)


def estimate_fisher_divergence(field_p: ScoreField, field_q: ScoreField, samples) -> MonteCarloEstimate:
    """Monte-Carlo D_F = 0.5 * E||score_p - score_q||^2 over given pairs.

    The estimate targets D_F(p||q | .) averaged over the x_prev law only when
    the caller supplies pairs with x_next ~ p(.|x_prev).
    """
    batch = PairBatch.coerce(samples)
    if len(batch) == 0:
        raise ValueError("empty sample set")
    diff = field_p.score_batch(batch.x_next, batch.x_prev) - field_q.score_batch(
        batch.x_next, batch.x_prev
    )
    values = 0.5 * np.einsum("ij,ij->i", diff, diff)
    return _mc_estimate(values)


def estimate_drift(field_p: ScoreField, field_q: ScoreField, pairs) -> MonteCarloEstimate:
    """Empirical mean of the score difference over a pair stream.

    Under stationary pairs from p this estimates -D_F(p||q) (negative); under
    q it estimates +D_F(q||p) (positive).
    """
    batch = PairBatch.coerce(pairs)
    if len(batch) == 0:
        raise ValueError("empty pair stream")
    return _mc_estimate(score_differences(field_p, field_q, batch))


def check_divergence_consistency(
    field: ScoreField,
    probes: Iterable[tuple[np.ndarray, np.ndarray]],
    h: float = 1e-4,
) -> float:
    """Max relative error of divergence vs a central finite-difference sum.

    For each probe (y, x) compares field.divergence(y, x) against
    sum_i [score_i(y + h e_i, x) - score_i(y - h e_i, x)] / (2h).
    """
    worst = 0.0
    for y, x in probes:
        y = as_state(y, field.dim)
        x = as_state(x, field.dim)
        fd = 0.0
        for i in range(field.dim):
            e = np.zeros(field.dim)
            e[i] = h
            fd += (field.score(y + e, x)[i] - field.score(y - e, x)[i]) / (2 * h)
        exact = field.divergence(y, x)
        denom = max(1.0, abs(exact))
        worst = max(worst, abs(fd - exact) / denom)
    return worst
