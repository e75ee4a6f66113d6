"""Hot inner loops: chain stepping, CUSUM traces, and run-length scans.

Every kernel exists twice: a numba ``@njit`` version (default) and a pure
numpy fallback. Setting the environment variable ``SCUSUM_DISABLE_NUMBA=1``
before import selects the fallback; ``USING_NUMBA`` reports which path is
live. ``benchmarks/bench_backends.py`` times the two side by side.

The CUSUM statistic follows the recursion

    W_n = phi(s_n) + max(0, W_{n-1}),      W_0 = 0,

which equals max_{1<=k<=n} sum_{i=k}^n phi(s_i). The numpy fallback uses the
algebraic identity W_n = S_n - min(0, S_1, ..., S_{n-1}) with S the running
sum of phi(s); over very long streams the cumulative sums lose a few low
bits relative to the sequential recursion, which is why parity tests compare
at 1e-9 rather than bitwise.

Truncation is encoded as a clip level ``m``; pass ``np.inf`` to disable it.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLE = os.environ.get("SCUSUM_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError("numba disabled via SCUSUM_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# chain stepping: x <- x - alpha*x + shift*tanh(x) + sigma*z
# ---------------------------------------------------------------------------

def _chain_steps_numpy(x0, noise, alpha, shift, sigma):
    n, d = noise.shape
    out = np.empty((n, d), dtype=np.float64)
    x = x0.astype(np.float64).copy()
    for t in range(n):
        x = x - alpha * x + shift * np.tanh(x) + sigma * noise[t]
        out[t] = x
    return out


def _chain_steps_impl(x0, noise, alpha, shift, sigma):
    n, d = noise.shape
    out = np.empty((n, d), dtype=np.float64)
    x = x0.copy()
    for t in range(n):
        for j in range(d):
            xj = x[j]
            x[j] = xj - alpha * xj + shift * math.tanh(xj) + sigma * noise[t, j]
            out[t, j] = x[j]
    return out


# ---------------------------------------------------------------------------
# CUSUM trace (no resets)
# ---------------------------------------------------------------------------

def _cusum_trace_numpy(increments, m):
    phi = np.clip(increments, -m, m)
    s = np.cumsum(phi)
    prev_min = np.minimum.accumulate(np.concatenate(([0.0], s[:-1])))
    return s - prev_min


def _cusum_trace_impl(increments, m):
    n = increments.shape[0]
    out = np.empty(n, dtype=np.float64)
    w = 0.0
    for i in range(n):
        s = increments[i]
        if s > m:
            s = m
        elif s < -m:
            s = -m
        carry = w if w > 0.0 else 0.0
        w = s + carry
        out[i] = w
    return out


# ---------------------------------------------------------------------------
# first alarm index (-1 when the statistic never reaches b)
# ---------------------------------------------------------------------------

def _first_alarm_numpy(increments, b, m):
    n = increments.shape[0]
    pos = 0
    carry = 0.0
    window = 1024
    while pos < n:
        end = min(n, pos + window)
        w = _trace_with_carry_numpy(increments[pos:end], m, carry)
        hits = np.nonzero(w >= b)[0]
        if hits.size:
            return pos + int(hits[0])
        carry = max(0.0, float(w[-1]))
        pos = end
        window = min(window * 4, 1 << 20)
    return -1


def _first_alarm_impl(increments, b, m):
    n = increments.shape[0]
    w = 0.0
    for i in range(n):
        s = increments[i]
        if s > m:
            s = m
        elif s < -m:
            s = -m
        carry = w if w > 0.0 else 0.0
        w = s + carry
        if w >= b:
            return i
    return -1


def _trace_with_carry_numpy(increments, m, carry):
    # carry = max(0, W_prev); prepending it as a virtual increment preserves
    # the recursion because W_0' = carry + max(0, 0) = carry.
    phi = np.clip(increments, -m, m)
    s = np.cumsum(np.concatenate(([carry], phi)))
    prev_min = np.minimum.accumulate(np.concatenate(([0.0], s[:-1])))
    return (s - prev_min)[1:]


# ---------------------------------------------------------------------------
# detect-and-reset scan: alarm intervals over a whole stream
# ---------------------------------------------------------------------------

def _run_lengths_numpy(increments, b, m):
    n = increments.shape[0]
    intervals = []
    pos = 0
    start = 0
    carry = 0.0
    window = 1024
    while pos < n:
        end = min(n, pos + window)
        w = _trace_with_carry_numpy(increments[pos:end], m, carry)
        hits = np.nonzero(w >= b)[0]
        if hits.size:
            alarm = pos + int(hits[0])
            intervals.append(alarm - start + 1)
            start = alarm + 1
            pos = alarm + 1
            carry = 0.0
            window = 1024
        else:
            carry = max(0.0, float(w[-1]))
            pos = end
            window = min(window * 4, 1 << 20)
    residual = n - start
    return np.asarray(intervals, dtype=np.int64), residual


def _run_lengths_impl(increments, b, m):
    n = increments.shape[0]
    intervals = np.empty(n, dtype=np.int64)
    count = 0
    w = 0.0
    start = 0
    for i in range(n):
        s = increments[i]
        if s > m:
            s = m
        elif s < -m:
            s = -m
        carry = w if w > 0.0 else 0.0
        w = s + carry
        if w >= b:
            intervals[count] = i - start + 1
            count += 1
            start = i + 1
            w = 0.0
    return intervals[:count].copy(), n - start


if HAVE_NUMBA:
    _chain_steps_numba = njit(cache=True)(_chain_steps_impl)
    _cusum_trace_numba = njit(cache=True)(_cusum_trace_impl)
    _first_alarm_numba = njit(cache=True)(_first_alarm_impl)
    _run_lengths_numba = njit(cache=True)(_run_lengths_impl)

USING_NUMBA = HAVE_NUMBA


def backend() -> str:
    return "numba" if USING_NUMBA else "numpy"


def _as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def chain_steps(x0, noise, alpha: float, shift: float, sigma: float) -> np.ndarray:
    """Iterate the transition map over pre-drawn noise rows; returns (n, d)."""
    x0 = _as_f64(x0)
    noise = _as_f64(noise)
    if USING_NUMBA:
        return _chain_steps_numba(x0, noise, alpha, shift, sigma)
    return _chain_steps_numpy(x0, noise, alpha, shift, sigma)


def cusum_trace(increments, m: float = np.inf) -> np.ndarray:
    """Per-step CUSUM statistic W_n, no resets."""
    increments = _as_f64(increments)
    if USING_NUMBA:
        return _cusum_trace_numba(increments, m)
    return _cusum_trace_numpy(increments, m)


def first_alarm(increments, b: float, m: float = np.inf) -> int:
    """0-based index of the first n with W_n >= b, or -1."""
    increments = _as_f64(increments)
    if USING_NUMBA:
        return int(_first_alarm_numba(increments, b, m))
    return int(_first_alarm_numpy(increments, b, m))


def run_lengths(increments, b: float, m: float = np.inf):
    """Detect-and-reset scan; returns (intervals array, residual steps)."""
    increments = _as_f64(increments)
    if USING_NUMBA:
        intervals, residual = _run_lengths_numba(increments, b, m)
    else:
        intervals, residual = _run_lengths_numpy(increments, b, m)
    return intervals, int(residual)
