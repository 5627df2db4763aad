import subprocess
import sys

import numpy as np
import pytest

from flora import _backend, _fallback
from flora.matcore import GaussStream, mix64

kernels = pytest.importorskip("flora._kernels")


@pytest.mark.parametrize("count", [0, 1, 2, 7, 4096, 100_001])
@pytest.mark.parametrize("counter", [0, 3, 2**63 + 5])
def test_compiled_kernel_matches_fallback_bits(count, counter):
    key = mix64(0xDEADBEEF)
    a = np.empty(count)
    b = np.empty(count)
    used_a = _fallback.gauss_fill(key, counter, a)
    used_b = kernels.gauss_fill(key, counter, b)
    assert used_a == used_b == count + (count & 1)
    assert a.view(np.uint64).tobytes() == b.view(np.uint64).tobytes()


def test_samples_are_finite_and_bounded():
    z = np.empty(200_000)
    _fallback.gauss_fill(mix64(1), 0, z)
    # u1 in (0, 1] keeps sqrt(-2 ln u1) <= sqrt(2 * 53 ln 2)
    assert np.isfinite(z).all()
    assert np.abs(z).max() <= np.sqrt(2 * 53 * np.log(2)) + 1e-12


def test_pure_python_switch_selects_fallback():
    code = "import flora._backend as b; print(b.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"FLORA_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True
    )
    assert out.stdout.strip() == "python"


def test_backend_choice_does_not_change_streams():
    expected = np.empty(1001)
    _fallback.gauss_fill(mix64(42), 0, expected)
    assert np.array_equal(GaussStream(42).next(1001), expected)
    assert _backend.BACKEND in ("python", "cython")
