import numpy as np
import pytest

from chromaflow import _kernels


@pytest.fixture(scope="module")
def impls():
    numpy_impl = _kernels.get_impl("numpy")
    try:
        native_impl = _kernels.get_impl("native")
    except Exception:
        pytest.skip("native kernels unavailable")
    return numpy_impl, native_impl


def test_backend_selected():
    assert _kernels.BACKEND in ("native", "numpy")


def test_block_search_backends_identical(impls, rng):
    numpy_impl, native_impl = impls
    ref = rng.uniform(0, 1, (32, 40))
    mov = np.roll(ref, shift=(3, -2), axis=(0, 1))
    gy = np.array([0, 8, 16, 24], dtype=np.int64)
    gx = np.array([0, 8, 16, 24, 32], dtype=np.int64)
    base = np.zeros((4, 5), dtype=np.int64)
    offs = np.array(
        [(du, dv) for du in range(-4, 5) for dv in range(-4, 5)], dtype=np.int64
    )
    u1, v1 = numpy_impl.block_search(ref, mov, base, base, offs, 8, gy, gx)
    u2, v2 = native_impl.block_search(ref, mov, base, base, offs, 8, gy, gx)
    assert np.array_equal(u1, u2) and np.array_equal(v1, v2)


def test_block_search_flat_region_ties_to_zero(impls):
    numpy_impl, native_impl = impls
    flat = np.full((16, 16), 0.5)
    gy = gx = np.array([0, 8], dtype=np.int64)
    base = np.zeros((2, 2), dtype=np.int64)
    offs = np.array([(du, dv) for du in range(-2, 3) for dv in range(-2, 3)], dtype=np.int64)
    for impl in (numpy_impl, native_impl):
        u, v = impl.block_search(flat, flat, base, base, offs, 8, gy, gx)
        assert np.all(u == 0) and np.all(v == 0)


def test_splat_backends_identical(impls, rng):
    numpy_impl, native_impl = impls
    gray = rng.uniform(0, 1, (21, 17))
    a = rng.uniform(-1, 1, (21, 17))
    b = rng.uniform(-1, 1, (21, 17))
    g1 = numpy_impl.splat_hist(gray, a, b, 4, 4, 8, 8)
    g2 = native_impl.splat_hist(gray, a, b, 4, 4, 8, 8)
    assert np.abs(g1 - g2).max() < 1e-12
    assert abs(g1.sum() - 21 * 17) < 1e-9


def test_pure_env_flag_selects_numpy(monkeypatch):
    import importlib
    import subprocess
    import sys

    code = (
        "import os; os.environ['CHROMAFLOW_PURE']='1';"
        "from chromaflow import _kernels; print(_kernels.BACKEND)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"
