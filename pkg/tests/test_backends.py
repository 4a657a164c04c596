import os
import subprocess
import sys

import numpy as np
import pytest

from homogenize._core import BACKEND, _pykernels, available_backends

backends = available_backends()
needs_c = pytest.mark.skipif("cython" not in backends, reason="compiled core not built")


def _noise(rng, M, n):
    return rng.integers(0, 2**63, size=(M, (n + 63) // 64 + 1), dtype=np.uint64)


@needs_c
def test_doubling_bit_identical():
    c = backends["cython"]
    rng = np.random.default_rng(0)
    s = rng.integers(0, 2**53, size=7, dtype=np.uint64)
    noise = _noise(rng, 7, 5000)
    s1, s2 = s.copy(), s.copy()
    a = c.doubling_orbit(s1, noise, 5000, True)
    b = _pykernels.doubling_orbit(s2, noise, 5000, True)
    assert np.array_equal(a, b) and np.array_equal(s1, s2)


@needs_c
def test_cat_bit_identical():
    c = backends["cython"]
    s = np.random.default_rng(1).integers(0, 2**53, size=(5, 2), dtype=np.uint64)
    s1, s2 = s.copy(), s.copy()
    assert np.array_equal(c.cat_orbit(s1, 4000, True), _pykernels.cat_orbit(s2, 4000, True))
    assert np.array_equal(s1, s2)


@needs_c
def test_pm_close():
    c = backends["cython"]
    rng = np.random.default_rng(2)
    x = rng.random(4)
    noise = _noise(rng, 4, 200)
    a = c.pm_orbit(x.copy(), noise, 200, 0.3, True)
    b = _pykernels.pm_orbit(x.copy(), noise, 200, 0.3, True)
    # libm and numpy pow may differ in the last ulp; chaos amplifies it slowly
    assert np.abs(a[:20] - b[:20]).max() <= 1e-9


@needs_c
def test_lorenz_matches():
    c = backends["cython"]
    st = np.array([[1.0, 1.0, 20.0], [-3.0, 2.0, 25.0]])
    s1, s2 = st.copy(), st.copy()
    a, bad_a = c.lorenz_orbit(s1, 0.005, 2, 500, 10.0, 28.0, 8 / 3, True)
    b, bad_b = _pykernels.lorenz_orbit(s2, 0.005, 2, 500, 10.0, 28.0, 8 / 3, True)
    assert bad_a == bad_b == -1
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_fallback_selected_by_env():
    code = "from homogenize._core import BACKEND; print(BACKEND)"
    env = {**os.environ, "HOMOGENIZE_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
    assert BACKEND in backends
