"""Backend parity and brute-force equivalence for the hot kernels."""

import numpy as np
import pytest

from scusum import _kernels


def brute_force_trace(increments, m):
    phi = np.clip(increments, -m, m)
    n = len(phi)
    return np.array([max(phi[k : i + 1].sum() for k in range(i + 1)) for i in range(n)])


@pytest.mark.parametrize("m", [np.inf, 0.5, 5.0])
def test_trace_matches_brute_force(m):
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(1, 200))
        s = rng.uniform(-10, 10, size=n)
        expected = brute_force_trace(s, m)
        assert np.max(np.abs(_kernels.cusum_trace(s, m) - expected)) <= 1e-9
        assert np.max(np.abs(_kernels._cusum_trace_numpy(s, m) - expected)) <= 1e-9


def test_trace_with_carry_matches_sequential():
    rng = np.random.default_rng(4)
    s = rng.uniform(-5, 5, size=500)
    full = _kernels._cusum_trace_numpy(s, np.inf)
    # split anywhere; carrying max(0, W) across the cut reproduces the tail
    for cut in (1, 137, 250, 499):
        carry = max(0.0, full[cut - 1])
        tail = _kernels._trace_with_carry_numpy(s[cut:], np.inf, carry)
        assert np.allclose(tail, full[cut:], atol=1e-9)


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba backend unavailable")
class TestBackendParity:
    def test_chain_steps(self):
        rng = np.random.default_rng(0)
        x0 = rng.standard_normal(10)
        noise = rng.standard_normal((20000, 10))
        a = _kernels._chain_steps_numpy(x0, noise, 0.3, 0.2, 0.3)
        b = _kernels._chain_steps_numba(x0, noise, 0.3, 0.2, 0.3)
        # backends may differ by ~1 ulp of tanh per step; the map contracts,
        # so the gap stays at rounding level
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    def test_cusum_trace(self):
        rng = np.random.default_rng(1)
        s = rng.uniform(-10, 10, size=5000)
        for m in (np.inf, 2.5):
            assert np.allclose(
                _kernels._cusum_trace_numpy(s, m), _kernels._cusum_trace_numba(s, m), atol=1e-9
            )

    def test_run_lengths(self):
        rng = np.random.default_rng(2)
        for trial in range(10):
            s = rng.uniform(-3, 5, size=int(rng.integers(10, 20000)))
            b = float(rng.uniform(0.5, 50))
            m = float(rng.choice([np.inf, 1.0, 4.0]))
            i_nb, r_nb = _kernels._run_lengths_numba(s, b, m)
            i_np, r_np = _kernels._run_lengths_numpy(s, b, m)
            assert np.array_equal(i_nb, i_np)
            assert r_nb == r_np

    def test_first_alarm(self):
        rng = np.random.default_rng(5)
        s = rng.uniform(-2, 2, size=10000)
        for b in (0.5, 10.0, 1e9):
            assert _kernels._first_alarm_numba(s, b, np.inf) == _kernels._first_alarm_numpy(
                s, b, np.inf
            )


def test_run_lengths_against_reference():
    # detect-and-reset scan equals a literal one-step reference loop
    rng = np.random.default_rng(6)
    s = rng.uniform(-3, 4, size=2000)
    b, m = 7.0, 2.5
    intervals, residual = _kernels.run_lengths(s, b, m)

    ref_intervals = []
    w = 0.0
    start = 0
    for i, inc in enumerate(s):
        phi = min(max(inc, -m), m)
        w = phi + max(0.0, w)
        if w >= b:
            ref_intervals.append(i - start + 1)
            start = i + 1
            w = 0.0
    assert list(intervals) == ref_intervals
    assert residual == len(s) - start


def test_chain_steps_zero_noise_fixed_point():
    # with alpha=1, shift=0 the mean map sends everything to 0
    x0 = np.array([3.0, -2.0])
    noise = np.zeros((4, 2))
    out = _kernels.chain_steps(x0, noise, 1.0, 0.0, 1.0)
    assert np.allclose(out, 0.0)
