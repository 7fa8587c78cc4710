import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dehazekit import kernels
from dehazekit.kernels import _numba, _numpy
from oracles import conv2d_loops, min_filter_loops

CONV_IMPLS = [
    ("numpy", _numpy.conv2d_forward, _numpy.conv2d_backward),
    ("numba-dispatch", _numba.conv2d_forward, _numba.conv2d_backward),
    ("numba-loops", _numba.conv2d_forward_loops, _numba.conv2d_backward_loops),
]


def test_backend_flag_selects_a_known_backend():
    assert kernels.BACKEND in ("numba", "numpy")
    assert kernels.get_backend("numpy") is _numpy
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("name,fwd,_bwd", CONV_IMPLS)
@pytest.mark.parametrize("k,groups,stride,pad", [(1, 1, 1, 0), (3, 1, 1, 1), (3, 4, 2, 1), (5, 2, 1, 2), (7, 4, 1, 3)])
def test_conv_forward_matches_loops(name, fwd, _bwd, k, groups, stride, pad):
    r = np.random.default_rng(k * 10 + groups)
    x = r.normal(size=(2, 4, 9, 8)).astype(np.float32)
    w = r.normal(size=(8, 4 // groups, k, k)).astype(np.float32)
    got = fwd(x, w, stride, pad, groups)
    np.testing.assert_allclose(got, conv2d_loops(x, w, None, stride, pad, groups), atol=1e-9)


@pytest.mark.parametrize("name,_fwd,bwd", CONV_IMPLS)
def test_conv_backward_matches_adjoint(name, _fwd, bwd):
    # <conv(x), g> is bilinear, so its gradients are exact adjoints of the forward
    r = np.random.default_rng(1)
    for k, groups, stride, pad in [(3, 1, 1, 1), (3, 3, 2, 1), (1, 1, 1, 0), (5, 3, 1, 2)]:
        x = r.normal(size=(1, 3, 7, 6))
        w = r.normal(size=(6, 3 // groups, k, k))
        y = conv2d_loops(x, w, None, stride, pad, groups)
        g = r.normal(size=y.shape)
        gx, gw = bwd(x, w, g, stride, pad, groups)
        eps = 1e-6
        for idx in [(0, 0, 0, 0), (0, 2, 3, 4), (0, 1, 6, 5)]:
            xp = x.copy()
            xp[idx] += eps
            num = (np.sum(conv2d_loops(xp, w, None, stride, pad, groups) * g) - np.sum(y * g)) / eps
            assert abs(num - gx[idx]) < 1e-4
        for idx in [(0, 0, 0, 0), (5, 0, k - 1, k // 2)]:
            wp = w.copy()
            wp[idx] += eps
            num = (np.sum(conv2d_loops(x, wp, None, stride, pad, groups) * g) - np.sum(y * g)) / eps
            assert abs(num - gw[idx]) < 1e-4


@pytest.mark.parametrize("backend", ["numpy", "numba"])
@given(h=st.integers(1, 12), w=st.integers(1, 12), r=st.integers(0, 4), seed=st.integers(0, 10_000))
def test_min_filter_matches_loops(backend, h, w, r, seed):
    a = np.random.default_rng(seed).uniform(size=(h, w))
    np.testing.assert_array_equal(kernels.get_backend(backend).min_filter(a, r), min_filter_loops(a, r))


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_kmeans_backends_agree(backend):
    r = np.random.default_rng(3)
    v = np.concatenate([r.normal(60, 10, 300), r.normal(135, 10, 300), r.normal(200, 10, 300)])
    c, it, counts = kernels.get_backend(backend).kmeans1d(v, np.array([50.0, 120.0, 210.0]), 100, 1e-6)
    ref, _, _ = _numpy.kmeans1d(v, np.array([50.0, 120.0, 210.0]), 100, 1e-6)
    np.testing.assert_allclose(c, ref, atol=1e-9)
    assert int(np.sum(counts)) == v.size and 1 <= it <= 100


@pytest.mark.parametrize("value,expect", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_env_flag_forces_backend(value, expect):
    env = dict(os.environ, DEHAZEKIT_NUMBA=value)
    out = subprocess.run([sys.executable, "-c", "from dehazekit import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == expect
