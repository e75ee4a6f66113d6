"""Fully-connected conditional score network trained by score matching.

The network psi(y, x; theta) maps the concatenated pair (y, x) in R^{2d} to a
score estimate in R^d through SiLU hidden layers and a linear output. It is
fit by minimizing the sample average of

    sum_i [ 0.5 * psi_i(y, x)^2 + d(psi_i)/dy_i ]

over observed transitions (x, y), the integration-by-parts surrogate of the
squared score-matching error. At the minimizer the objective equals
-0.5 * E||grad_y log p(y|x)||^2.

Everything here is plain numpy in double precision:

* the divergence sum_i d(psi_i)/dy_i is exact, computed with d forward-mode
  tangent passes seeded with the y-direction unit vectors (d <= ~100
  everywhere this package is used, so exactness is affordable);
* parameter gradients are exact as well, backpropagating through both the
  primal pass and the tangent passes;
* optimization is deterministic given the config seed (init and shuffling
  use separate PCG64 streams spawned from it).

Optionally a model carries per-dimension standardization statistics
(mean/scale of the raw state vectors, computed from the training data). Such
a model standardizes inputs internally and rescales outputs so that
``forward``/``divergence`` always speak raw coordinates; training happens in
standardized space, where score magnitudes are comparable across dimensions.

Model files: magic ``SCUSUMNET``, little-endian uint32 version and header
length, a JSON header (architecture, activation, standardization flag),
then the standardization vectors (if any) and the parameters in layer order
(W1, b1, W2, b2, ...) as little-endian float64. Loading validates shapes and
finiteness.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import NumericsError, TrainingError
from .fields import PairBatch, ScoreField, as_state, hyvarinen_scores

__all__ = [
    "MlpArchitecture",
    "MlpParameters",
    "MlpGradients",
    "TrainConfig",
    "AccuracyReport",
    "init_params",
    "forward",
    "forward_batch",
    "divergence",
    "divergence_batch",
    "surrogate_loss",
    "loss_gradient",
    "train",
    "evaluate_accuracy",
    "as_score_field",
    "save_model",
    "load_model",
]

_MAGIC = b"SCUSUMNET"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer sizes of the score network.

    ``input_dim`` must equal ``2 * output_dim`` (the conditional-pair
    encoding). ``hidden_widths`` may be empty, in which case the network
    degenerates to a single linear map -- useful for closed-form checks.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: str = "silu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")
        if self.input_dim != 2 * self.output_dim:
            raise ValueError("input_dim must equal 2 * output_dim")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        if self.activation != "silu":
            raise ValueError("only the silu activation is supported")

    @property
    def layer_sizes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_widths, self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


class MlpParameters:
    """Weights/biases of one network, plus optional standardization stats.

    Weights are stored (fan_in, fan_out); biases are vectors. When
    ``state_mean``/``state_scale`` are set the model consumes and produces
    raw coordinates, standardizing internally.
    """

    def __init__(self, arch: MlpArchitecture, weights, biases,
                 state_mean=None, state_scale=None):
        self.arch = arch
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        expected = arch.layer_sizes
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValueError("parameter count does not match architecture")
        for k, ((fin, fout), w, b) in enumerate(zip(expected, self.weights, self.biases)):
            if w.shape != (fin, fout):
                raise ValueError(f"layer {k} weight shape {w.shape}, expected {(fin, fout)}")
            if b.shape != (fout,):
                raise ValueError(f"layer {k} bias shape {b.shape}, expected {(fout,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} contains non-finite parameters")
        if (state_mean is None) != (state_scale is None):
            raise ValueError("state_mean and state_scale must be given together")
        if state_mean is not None:
            state_mean = np.asarray(state_mean, dtype=np.float64)
            state_scale = np.asarray(state_scale, dtype=np.float64)
            d = arch.output_dim
            if state_mean.shape != (d,) or state_scale.shape != (d,):
                raise ValueError("standardization vectors must have shape (output_dim,)")
            if np.any(state_scale <= 0):
                raise ValueError("standardization scales must be positive")
        self.state_mean = state_mean
        self.state_scale = state_scale

    @property
    def standardized(self) -> bool:
        return self.state_mean is not None

    def copy(self) -> "MlpParameters":
        return MlpParameters(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            None if self.state_mean is None else self.state_mean.copy(),
            None if self.state_scale is None else self.state_scale.copy(),
        )


@dataclass
class MlpGradients:
    """Gradient of the surrogate loss, shaped like the parameters."""

    weights: list
    biases: list


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass(frozen=True)
class AccuracyReport:
    """Score-recovery accuracy against an oracle field.

    ``rel_error = mse / var_scale`` with ``var_scale`` the mean squared norm
    of the oracle scores.
    """

    mse: float
    var_scale: float
    rel_error: float


def init_params(arch: MlpArchitecture, seed) -> MlpParameters:
    """Fan-in scaled uniform init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0.

    Per-entry weight variance is therefore 1 / (3 * fan_in).
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fin, fout in arch.layer_sizes:
        bound = 1.0 / np.sqrt(fin)
        weights.append(rng.uniform(-bound, bound, size=(fin, fout)))
        biases.append(np.zeros(fout))
    return MlpParameters(arch, weights, biases)


# ---------------------------------------------------------------------------
# activation
# ---------------------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(z):
    return z * _sigmoid(z)


def _silu_d1_d2(z):
    # silu' = g + z g(1-g), silu'' = 2g(1-g) + z g(1-g)(1-2g), g = sigmoid(z)
    g = _sigmoid(z)
    gp = g * (1.0 - g)
    return g + z * gp, 2.0 * gp + z * gp * (1.0 - 2.0 * g)


# ---------------------------------------------------------------------------
# fused primal + tangent forward pass
#
# A0:    (B, 2d) network inputs (already standardized when applicable)
# inv_s: (d,) output/tangent scaling (ones when not standardized)
#
# Tangents track d directional derivatives at once; the direction-i input
# tangent is inv_s[i] * e_i on the y half, so summing inv_s[i] * T_out[b,i,i]
# yields the divergence of the raw-coordinate model.
# ---------------------------------------------------------------------------

def _bmm(t, w):
    # (B, d, m) @ (m, h) as a single GEMM
    b_, d_, m_ = t.shape
    return (t.reshape(b_ * d_, m_) @ w).reshape(b_, d_, w.shape[1])


def _forward_tangent(params: MlpParameters, a0, inv_s, need_memory: bool):
    d = params.arch.output_dim
    n_hidden = len(params.arch.hidden_widths)
    t0 = np.zeros((d, params.arch.input_dim))
    t0[np.arange(d), np.arange(d)] = inv_s

    a = a0
    t = None  # (B, d, h) once batch-dependent; layer 0 tangent is shared
    acts, zs, d1s, d2s, pres, tangents = [a0], [], [], [], [], [t0]
    for l in range(n_hidden):
        w, b = params.weights[l], params.biases[l]
        z = a @ w + b
        d1, d2 = _silu_d1_d2(z)
        if t is None:
            p = (t0 @ w)[None, :, :] * np.ones((a0.shape[0], 1, 1))
        else:
            p = _bmm(t, w)
        t = p * d1[:, None, :]
        a = silu(z)
        if need_memory:
            zs.append(z)
            d1s.append(d1)
            d2s.append(d2)
            pres.append(p)
            acts.append(a)
            tangents.append(t)
    w, b = params.weights[-1], params.biases[-1]
    psi = a @ w + b
    t_out = (t0 @ w)[None, :, :] * np.ones((a0.shape[0], 1, 1)) if t is None else _bmm(t, w)
    if need_memory:
        return psi, t_out, (acts, zs, d1s, d2s, pres, tangents)
    return psi, t_out, None


def _net_inputs(params: MlpParameters, Y, X):
    if params.standardized:
        Y = (Y - params.state_mean) / params.state_scale
        X = (X - params.state_mean) / params.state_scale
    return np.concatenate([Y, X], axis=1)


def _inv_s(params: MlpParameters):
    if params.standardized:
        return 1.0 / params.state_scale
    return np.ones(params.arch.output_dim)


def forward_batch(params: MlpParameters, Y, X) -> np.ndarray:
    """Network outputs for (n, d) batches of y and x; raw coordinates."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    d = params.arch.output_dim
    if Y.shape[1] != d or X.shape[1] != d:
        raise ValueError(f"inputs must have dimension {d}")
    a = _net_inputs(params, Y, X)
    n_hidden = len(params.arch.hidden_widths)
    for l in range(n_hidden):
        a = silu(a @ params.weights[l] + params.biases[l])
    psi = a @ params.weights[-1] + params.biases[-1]
    return psi * _inv_s(params)


def forward(params: MlpParameters, y, x) -> np.ndarray:
    """psi(y, x; theta) for a single pair; shape (d,)."""
    d = params.arch.output_dim
    return forward_batch(params, as_state(y, d)[None, :], as_state(x, d)[None, :])[0]


_DIVERGENCE_CHUNK = 2048  # keeps the (chunk, d, width) tangent stacks in cache


def divergence_batch(params: MlpParameters, Y, X) -> np.ndarray:
    """Exact sum_i d(psi_i)/dy_i per row, via d tangent passes."""
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    a0 = _net_inputs(params, Y, X)
    inv_s = _inv_s(params)
    out = np.empty(a0.shape[0])
    for start in range(0, a0.shape[0], _DIVERGENCE_CHUNK):
        block = a0[start : start + _DIVERGENCE_CHUNK]
        _, t_out, _ = _forward_tangent(params, block, inv_s, need_memory=False)
        out[start : start + _DIVERGENCE_CHUNK] = np.einsum("i,bii->b", inv_s, t_out)
    return out


def divergence(params: MlpParameters, y, x) -> float:
    d = params.arch.output_dim
    return float(divergence_batch(params, as_state(y, d)[None, :], as_state(x, d)[None, :])[0])


def surrogate_loss(model, pairs) -> float:
    """Mean of sum_i [0.5 psi_i^2 + d(psi_i)/dy_i] over a pair batch.

    ``model`` may be MlpParameters or any ScoreField (a fixed field can be
    plugged in to evaluate the objective it would achieve).
    """
    batch = PairBatch.coerce(pairs)
    if len(batch) == 0:
        raise ValueError("empty batch")
    if isinstance(model, ScoreField):
        return float(np.mean(hyvarinen_scores(model, batch)))
    loss, _ = _loss_and_grads(model, batch.x_next, batch.x_prev, want_grads=False)
    return loss


def loss_gradient(model: MlpParameters, pairs) -> MlpGradients:
    """Exact gradient of ``surrogate_loss`` in every weight and bias."""
    batch = PairBatch.coerce(pairs)
    if len(batch) == 0:
        raise ValueError("empty batch")
    _, grads = _loss_and_grads(model, batch.x_next, batch.x_prev, want_grads=True)
    return grads


def _loss_and_grads(params: MlpParameters, Y, X, want_grads: bool):
    """Surrogate loss and (optionally) its exact parameter gradient.

    Backpropagates through the primal pass and through all d tangent passes;
    see the layer-local rules inline. Gradients are averaged over the batch.
    """
    B = Y.shape[0]
    a0 = _net_inputs(params, Y, X)
    inv_s = _inv_s(params)
    psi, t_out, memory = _forward_tangent(params, a0, inv_s, need_memory=want_grads)

    psi_scaled = psi * inv_s
    div = np.einsum("i,bii->b", inv_s, t_out)
    loss_terms = 0.5 * np.einsum("bj,bj->b", psi_scaled, psi_scaled) + div
    loss = float(np.mean(loss_terms))

    if not want_grads:
        if not np.isfinite(loss):
            raise NumericsError("non-finite surrogate loss")
        return loss, None

    acts, zs, d1s, d2s, pres, tangents = memory
    n_hidden = len(params.arch.hidden_widths)
    d = params.arch.output_dim

    g_w = [None] * (n_hidden + 1)
    g_b = [None] * (n_hidden + 1)

    # output layer: psi = a @ W + b, t_out = t @ W
    d_psi = psi_scaled * inv_s / B                      # (B, d)
    d_tout = np.zeros((B, d, d))
    idx = np.arange(d)
    d_tout[:, idx, idx] = inv_s / B

    a_prev = acts[-1]
    t_prev = tangents[-1]
    w_last = params.weights[-1]
    if n_hidden == 0:
        g_w[-1] = a_prev.T @ d_psi + t_prev.T @ d_tout.sum(axis=0)
    else:
        g_w[-1] = a_prev.T @ d_psi + (
            t_prev.reshape(B * d, -1).T @ d_tout.reshape(B * d, -1)
        )
    g_b[-1] = d_psi.sum(axis=0)
    d_a = d_psi @ w_last.T
    d_t = _bmm(d_tout, w_last.T)

    # hidden layers, last to first:
    #   z = a_prev @ W + b; a = silu(z); p = t_prev @ W; t = p * silu'(z)
    for l in range(n_hidden - 1, -1, -1):
        d1, d2, p, t_prev = d1s[l], d2s[l], pres[l], tangents[l]
        a_prev = acts[l]
        w = params.weights[l]
        d_p = d_t * d1[:, None, :]
        d_act_deriv = np.einsum("bih,bih->bh", d_t, p)
        d_z = d_a * d1 + d_act_deriv * d2
        if l == 0:
            g_w[l] = a_prev.T @ d_z + t_prev.T @ d_p.sum(axis=0)
        else:
            g_w[l] = a_prev.T @ d_z + (
                t_prev.reshape(B * d, -1).T @ d_p.reshape(B * d, -1)
            )
        g_b[l] = d_z.sum(axis=0)
        if l > 0:
            d_a = d_z @ w.T
            d_t = _bmm(d_p, w.T)

    for k, (gw, gb) in enumerate(zip(g_w, g_b)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericsError(f"non-finite gradient in layer {k}")
    return loss, MlpGradients(weights=g_w, biases=g_b)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _compute_standardization(pairs: PairBatch):
    states = np.concatenate([pairs.x_prev, pairs.x_next], axis=0)
    mean = states.mean(axis=0)
    scale = states.std(axis=0)
    scale[scale == 0.0] = 1.0  # keep degenerate dimensions, unit divisor
    return mean, scale


def train(
    arch: MlpArchitecture,
    dataset,
    config: TrainConfig,
    standardize: bool = False,
) -> tuple[MlpParameters, list[float]]:
    """Minibatch optimization of the surrogate loss.

    Returns the final parameters and the per-epoch mean training loss.
    Reproducible from ``config.seed``; raises TrainingError (with the epoch
    index) if the loss stops being finite.
    """
    batch = PairBatch.coerce(dataset)
    n = len(batch)
    if n < config.batch_size:
        raise ValueError(f"dataset size {n} smaller than batch_size {config.batch_size}")

    Y, X = batch.x_next, batch.x_prev
    mean = scale = None
    if standardize:
        mean, scale = _compute_standardization(batch)
        Y = (Y - mean) / scale
        X = (X - mean) / scale

    ss_init, ss_shuffle = np.random.SeedSequence(config.seed).spawn(2)
    params = init_params(arch, ss_init)
    shuffle_rng = np.random.default_rng(ss_shuffle)

    use_adam = config.optimizer == "adam"
    if use_adam:
        m_w = [np.zeros_like(w) for w in params.weights]
        v_w = [np.zeros_like(w) for w in params.weights]
        m_b = [np.zeros_like(b) for b in params.biases]
        v_b = [np.zeros_like(b) for b in params.biases]
        step_count = 0

    history = []
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            sel = order[start : start + config.batch_size]
            try:
                loss, grads = _loss_and_grads(params, Y[sel], X[sel], want_grads=True)
            except NumericsError as err:
                raise TrainingError(f"loss diverged at epoch {epoch}: {err}", epoch=epoch) from err
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
            total += loss * sel.size
            if config.learning_rate == 0.0:
                continue
            if use_adam:
                step_count += 1
                c1 = 1.0 - config.beta1**step_count
                c2 = 1.0 - config.beta2**step_count
                for k in range(len(params.weights)):
                    for g, p, m_, v_ in (
                        (grads.weights[k], params.weights[k], m_w[k], v_w[k]),
                        (grads.biases[k], params.biases[k], m_b[k], v_b[k]),
                    ):
                        m_ *= config.beta1
                        m_ += (1 - config.beta1) * g
                        v_ *= config.beta2
                        v_ += (1 - config.beta2) * g * g
                        p -= config.learning_rate * (m_ / c1) / (np.sqrt(v_ / c2) + config.eps)
            else:
                for k in range(len(params.weights)):
                    params.weights[k] -= config.learning_rate * grads.weights[k]
                    params.biases[k] -= config.learning_rate * grads.biases[k]
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)

    if standardize:
        params = MlpParameters(arch, params.weights, params.biases, mean, scale)
    return params, history


def evaluate_accuracy(model, oracle: ScoreField, eval_pairs) -> AccuracyReport:
    """MSE of the model scores against an oracle, normalized by score power."""
    batch = PairBatch.coerce(eval_pairs)
    if len(batch) == 0:
        raise ValueError("empty evaluation set")
    if isinstance(model, ScoreField):
        predicted = model.score_batch(batch.x_next, batch.x_prev)
    else:
        predicted = forward_batch(model, batch.x_next, batch.x_prev)
    truth = oracle.score_batch(batch.x_next, batch.x_prev)
    err = predicted - truth
    mse = float(np.mean(np.einsum("ij,ij->i", err, err)))
    var_scale = float(np.mean(np.einsum("ij,ij->i", truth, truth)))
    if var_scale == 0.0:
        raise ValueError("var_scale is zero; relative error undefined")
    return AccuracyReport(mse=mse, var_scale=var_scale, rel_error=mse / var_scale)


class MlpScoreField(ScoreField):
    """ScoreField adapter around trained parameters (frozen, thread-safe)."""

    def __init__(self, params: MlpParameters):
        self.params = params
        self.dim = params.arch.output_dim

    def score(self, y, x):
        return forward(self.params, y, x)

    def divergence(self, y, x):
        return divergence(self.params, y, x)

    def score_batch(self, Y, X):
        return forward_batch(self.params, Y, X)

    def divergence_batch(self, Y, X):
        return divergence_batch(self.params, Y, X)


def as_score_field(params: MlpParameters) -> MlpScoreField:
    """Expose (forward, divergence) through the ScoreField capability."""
    return MlpScoreField(params)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_model(params: MlpParameters, path) -> None:
    header = {
        "format": "scusum score network",
        "input_dim": params.arch.input_dim,
        "hidden_widths": list(params.arch.hidden_widths),
        "output_dim": params.arch.output_dim,
        "activation": params.arch.activation,
        "standardized": params.standardized,
    }
    blob = json.dumps(header).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(np.array(_FORMAT_VERSION, "<u4").tobytes())
    buf.write(np.array(len(blob), "<u4").tobytes())
    buf.write(blob)
    if params.standardized:
        buf.write(params.state_mean.astype("<f8").tobytes())
        buf.write(params.state_scale.astype("<f8").tobytes())
    for w, b in zip(params.weights, params.biases):
        buf.write(w.astype("<f8").tobytes())
        buf.write(b.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> MlpParameters:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a score-network model file")
    off = len(_MAGIC)
    version = int(np.frombuffer(data, "<u4", count=1, offset=off)[0])
    if version != _FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    off += 4
    hlen = int(np.frombuffer(data, "<u4", count=1, offset=off)[0])
    off += 4
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    arch = MlpArchitecture(
        input_dim=header["input_dim"],
        hidden_widths=tuple(header["hidden_widths"]),
        output_dim=header["output_dim"],
        activation=header.get("activation", "silu"),
    )

    def take(shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, "<f8", count=count, offset=off).reshape(shape).copy()
        off += count * 8
        return arr

    mean = scale = None
    if header.get("standardized"):
        mean = take((arch.output_dim,))
        scale = take((arch.output_dim,))
    weights, biases = [], []
    for fin, fout in arch.layer_sizes:
        weights.append(take((fin, fout)))
        biases.append(take((fout,)))
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes after parameters")
    return MlpParameters(arch, weights, biases, mean, scale)
