"""Synthetic Markov process with a nonlinear Gaussian transition kernel.

One step of the chain is

    X_{n+1} = X_n - alpha * X_n + shift * tanh(X_n) + sigma * Z_n,
    Z_n ~ N(0, I),

i.e. a Gaussian kernel whose mean mu(x) = x - alpha*x + shift*tanh(x) is a
nonlinear contraction for 0 < alpha < 2 (the tanh drift is bounded, the
linear part pulls toward the origin). The conditional score is available in
closed form, which makes this process the oracle test bed for score learning
and for the exact likelihood-ratio CUSUM baseline.

Randomness: trajectories draw from numpy's PCG64 bit generator
(``np.random.default_rng(seed)``) using ``standard_normal`` (ziggurat), all
noise drawn up front in one call. Given the same config and the same kernel
backend, paths are bitwise reproducible; across the numba and numpy backends
they agree to within a few ulps of tanh.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .fields import GaussianScoreField, PairBatch, TransitionPair, as_state

__all__ = [
    "GaussianKernelSpec",
    "TrajectoryConfig",
    "transition_mean",
    "step",
    "simulate_path",
    "stationary_pairs",
    "closed_form_score",
    "log_likelihood_ratio",
    "log_likelihood_ratios",
    "write_trajectory_csv",
]

INFINITE = math.inf


@dataclass(frozen=True)
class GaussianKernelSpec:
    """Parameters of one transition kernel."""

    dim: int
    alpha: float
    sigma: float
    shift: float = 0.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2) for the mean map to contract")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Full description of one trajectory, including the change point.

    ``change_point`` is the 1-based index of the first state generated by the
    post-change kernel; ``math.inf`` means the change never happens. States
    are emitted with indices 1..length; the transition into X_n uses the
    post-change kernel iff n >= change_point. The state is carried across the
    change (X_nu is drawn from X_{nu-1} under the post kernel).
    """

    pre: GaussianKernelSpec
    post: GaussianKernelSpec | None = None
    change_point: float = INFINITE
    length: int = 1
    seed: int = 0
    burn_in: int = 1000

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be nonnegative")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        cp = self.change_point
        if cp != INFINITE:
            if int(cp) != cp or cp < 1:
                raise ValueError("change_point must be a positive integer or infinity")
            if self.post is None:
                raise ValueError("finite change_point requires a post-change kernel")
            if cp > self.length:
                raise ValueError("change_point must be <= length")
        if self.post is not None and self.post.dim != self.pre.dim:
            raise ValueError("pre and post kernels must share dimension")


def transition_mean(spec: GaussianKernelSpec, x: np.ndarray) -> np.ndarray:
    """mu(x) = x - alpha*x + shift*tanh(x), elementwise; accepts (d,) or (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"state dimension {x.shape[-1]} does not match spec dim {spec.dim}")
    return x - spec.alpha * x + spec.shift * np.tanh(x)


def step(spec: GaussianKernelSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One transition: mu(x) + sigma * z with z ~ N(0, I) drawn from rng."""
    x = as_state(x, spec.dim)
    return transition_mean(spec, x) + spec.sigma * rng.standard_normal(spec.dim)


def simulate_path(config: TrajectoryConfig) -> np.ndarray:
    """Generate states X_1..X_length as a (length, d) array.

    Burn-in runs under the pre-change kernel from the zero vector and is
    discarded. All noise comes from one seeded PCG64 stream, so the path is
    reproducible from the config alone.
    """
    d = config.pre.dim
    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal((config.burn_in + config.length, d))

    x = np.zeros(d)
    if config.burn_in:
        warm = _kernels.chain_steps(
            x, noise[: config.burn_in], config.pre.alpha, config.pre.shift, config.pre.sigma
        )
        x = warm[-1]
    body = noise[config.burn_in :]

    if config.length == 0:
        return np.empty((0, d))

    n_pre = config.length if config.change_point == INFINITE else int(config.change_point) - 1
    parts = []
    if n_pre > 0:
        pre_states = _kernels.chain_steps(
            x, body[:n_pre], config.pre.alpha, config.pre.shift, config.pre.sigma
        )
        parts.append(pre_states)
        x = pre_states[-1]
    if n_pre < config.length:
        post = config.post
        post_states = _kernels.chain_steps(
            x, body[n_pre:], post.alpha, post.shift, post.sigma
        )
        parts.append(post_states)
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def stationary_pairs(
    spec: GaussianKernelSpec, n_pairs: int, seed: int, burn_in: int = 1000
) -> PairBatch:
    """Consecutive transition pairs from an (approximately) stationary path."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    config = TrajectoryConfig(pre=spec, length=n_pairs + 1, seed=seed, burn_in=burn_in)
    return PairBatch.from_states(simulate_path(config))


def closed_form_score(spec: GaussianKernelSpec) -> GaussianScoreField:
    """Exact conditional score field of the kernel.

    score(y, x) = -(y - mu(x)) / sigma^2, divergence = -dim / sigma^2.
    """
    return GaussianScoreField(
        mean_fn=lambda x: transition_mean(spec, x), sigma=spec.sigma, dim=spec.dim
    )


def _log_density_quadratics(spec: GaussianKernelSpec, Y, X):
    resid = Y - transition_mean(spec, X)
    return np.einsum("...i,...i->...", resid, resid) / spec.sigma**2


def log_likelihood_ratio(
    pre: GaussianKernelSpec, post: GaussianKernelSpec, pair: TransitionPair
) -> float:
    """log post(x_next|x_prev) - log pre(x_next|x_prev), in closed form."""
    if not isinstance(pair, TransitionPair):
        pair = TransitionPair(*pair)
    if pre.dim != post.dim or pair.dim != pre.dim:
        raise ValueError("kernel and pair dimensions must match")
    return float(
        log_likelihood_ratios(pre, post, PairBatch(pair.x_prev[None, :], pair.x_next[None, :]))[0]
    )


def log_likelihood_ratios(
    pre: GaussianKernelSpec, post: GaussianKernelSpec, pairs
) -> np.ndarray:
    """Vectorized exact log-likelihood-ratio increments over a pair stream."""
    batch = PairBatch.coerce(pairs)
    if pre.dim != post.dim or batch.dim != pre.dim:
        raise ValueError("kernel and pair dimensions must match")
    q_pre = _log_density_quadratics(pre, batch.x_next, batch.x_prev)
    q_post = _log_density_quadratics(post, batch.x_next, batch.x_prev)
    out = 0.5 * (q_pre - q_post) + pre.dim * math.log(pre.sigma / post.sigma)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite log-likelihood ratio")
    return out


def write_trajectory_csv(path, states: np.ndarray, regime: list[str] | None = None) -> None:
    """One row per step, columns x0..x{d-1}, optional trailing regime column."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2:
        raise ValueError("states must be a (n, d) array")
    header = [f"x{i}" for i in range(states.shape[1])]
    if regime is not None:
        if len(regime) != states.shape[0]:
            raise ValueError("regime labels must match the number of rows")
        header.append("regime")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, row in enumerate(states):
            out = [repr(float(v)) for v in row]
            if regime is not None:
                out.append(regime[i])
            writer.writerow(out)
