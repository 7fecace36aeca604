"""Parity between the njit kernels and their pure-numpy fallbacks."""

import os
import subprocess
import sys

import numpy as np
import pytest

from causalprune import _kernels
from causalprune._accel import NUMBA_ENABLED

rng = np.random.default_rng(42)


def test_corr_matrix_parity():
    for _ in range(10):
        data = np.ascontiguousarray(rng.normal(size=(rng.integers(10, 200), rng.integers(2, 7))))
        a = _kernels.corr_matrix(data)
        b = _kernels.corr_matrix_np(data)
        assert np.abs(a - b).max() < 1e-12


def test_corr_matrix_constant_column():
    data = np.ascontiguousarray(rng.normal(size=(50, 3)))
    data[:, 1] = 2.5
    c = _kernels.corr_matrix(data)
    assert c[1, 1] == 1.0
    assert c[0, 1] == 0.0 and c[2, 1] == 0.0


def test_pcorr_from_corr_parity_and_residual_equivalence():
    for _ in range(20):
        data = np.ascontiguousarray(rng.normal(size=(120, 5)))
        data[:, 1] += 0.5 * data[:, 0]
        corr = _kernels.corr_matrix(data)
        cond = np.array([2, 3], dtype=np.int64)
        fast = _kernels.pcorr_from_corr(corr, 0, 1, cond)
        slow = _kernels.pcorr_from_corr_np(corr, 0, 1, cond)
        resid = _kernels.parcorr_resid(
            np.ascontiguousarray(data[:, 0]), np.ascontiguousarray(data[:, 1]),
            np.ascontiguousarray(data[:, [2, 3]]))
        assert abs(fast - slow) < 1e-10
        assert abs(fast - resid) < 1e-10


def test_parcorr_resid_parity():
    for k in (0, 1, 3):
        x = np.ascontiguousarray(rng.normal(size=80))
        y = np.ascontiguousarray(rng.normal(size=80))
        z = np.ascontiguousarray(rng.normal(size=(80, k)))
        assert abs(_kernels.parcorr_resid(x, y, z)
                   - _kernels.parcorr_resid_np(x, y, z)) < 1e-12


def test_hist_entropy_parity():
    for _ in range(10):
        x = np.ascontiguousarray(rng.normal(size=500))
        assert abs(_kernels.hist_entropy(x, 16)
                   - _kernels.hist_entropy_np(x, 16)) < 1e-12


def test_channel_stats_parity():
    vals = np.ascontiguousarray(rng.normal(size=(50, 4)))
    a = _kernels.channel_stats(vals, 16)
    b = _kernels.channel_stats_np(vals, 16)
    assert np.abs(np.asarray(a) - b).max() < 1e-12


@pytest.mark.skipif(not NUMBA_ENABLED, reason="already running the fallback")
def test_numpy_fallback_env_flag():
    code = (
        "import causalprune._accel as a, causalprune._kernels as k, numpy as np\n"
        "assert not a.NUMBA_ENABLED\n"
        "assert k.corr_matrix is k.corr_matrix_np\n"
        "x = np.ascontiguousarray(np.random.default_rng(0).normal(size=(30, 3)))\n"
        "assert abs(k.corr_matrix(x)[0, 0] - 1.0) < 1e-12\n"
    )
    env = dict(os.environ, CAUSALPRUNE_NUMBA="0")
    subprocess.run([sys.executable, "-c", code], check=True, env=env)
