"""Backend parity: the compiled kernels against the numpy fallback."""
import numpy as np
import pytest

from sptlab.kernels import HAVE_COMPILED, backend_name, get_backend
from sptlab.markets import (
    SimGrid,
    atlas_spec,
    fkk_diverse_spec,
    hybrid_atlas_spec,
    simulate_paths,
    vsm_spec,
)

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernels unavailable")


def test_backend_selection():
    assert backend_name("python") == "python"
    assert backend_name("auto") in ("python", "compiled")
    if HAVE_COMPILED:
        assert backend_name("compiled") == "compiled"
    with pytest.raises(ValueError, match="unknown backend"):
        get_backend("fortran")


def _caps(paths):
    return np.stack([p.caps for p in paths])


@needs_compiled
@pytest.mark.parametrize(
    "spec",
    [
        vsm_spec(8, alpha=0.5),
        atlas_spec(8, g=0.2),
        hybrid_atlas_spec(
            0.05,
            np.linspace(-0.1, 0.1, 8),
            np.linspace(0.3, -0.3, 8),
            np.linspace(1.0, 1.4, 8),
        ),
        fkk_diverse_spec(8, 0.6, 0.35 * np.eye(8), np.zeros(8), big_m=1.0),
    ],
    ids=lambda s: s.label.split("(")[0],
)
def test_backends_agree(spec):
    grid = SimGrid(horizon=0.5, steps=500)
    py = simulate_paths(spec, grid, n_paths=6, seed=77, backend="python")
    cc = simulate_paths(spec, grid, n_paths=6, seed=77, backend="compiled")
    np.testing.assert_allclose(_caps(cc), _caps(py), rtol=1e-8, atol=0.0)
    for a, b in zip(py, cc):
        assert a.diagnostics == b.diagnostics


@needs_compiled
def test_atlas_rank_ties_resolve_identically():
    # exact tie: the lower index takes the better (larger-cap) rank
    logx0 = np.log(np.array([[2.0, 2.0, 1.0]]))
    dw = np.zeros((1, 1, 3))
    gs = np.array([-0.3, 0.0, 0.3])
    sigmas = np.ones(3)
    args = (logx0, dw, 0.5, 0.0, np.zeros(3), gs, sigmas, None)
    out_py = get_backend("python").hybrid_atlas_paths(*args)
    out_cc = get_backend("compiled").hybrid_atlas_paths(*args)
    np.testing.assert_array_equal(out_py, out_cc)
    inc = out_py[0, 1] - out_py[0, 0]
    np.testing.assert_allclose(inc, [-0.15, 0.0, 0.15], atol=1e-15)


@needs_compiled
def test_vsm_floor_events_match():
    grid = SimGrid(horizon=1.0, steps=800)
    spec = vsm_spec(10, alpha=0.0)
    py = simulate_paths(spec, grid, n_paths=10, seed=13, backend="python")
    cc = simulate_paths(spec, grid, n_paths=10, seed=13, backend="compiled")
    clamps_py = [p.diagnostics.get("mu_clamps", 0) for p in py]
    clamps_cc = [p.diagnostics.get("mu_clamps", 0) for p in cc]
    assert clamps_py == clamps_cc
    assert sum(clamps_py) > 0  # drift-free weights do reach the floor


@needs_compiled
def test_nonfinite_step_raises_in_both_backends():
    logx0 = np.zeros((1, 2))
    dw = np.full((1, 1, 2), 1.7e308)  # sqrt(2) * dw overflows the update
    for name in ("python", "compiled"):
        backend = get_backend(name)
        with pytest.raises(FloatingPointError, match="non-finite log cap"):
            backend.gen_vsm_paths(logx0, dw, 1.0, np.zeros(2), 1.0, 0.5, 1.0, 1e-12)


def test_python_backend_is_float64_contiguous():
    backend = get_backend("python")
    logx0 = np.zeros((2, 3))
    dw = np.random.default_rng(0).normal(size=(2, 4, 3)) * 0.01
    out, clamps = backend.gen_vsm_paths(logx0, dw, 0.01, np.zeros(3), 1.0, 0.5, 1.0, 1e-12)
    assert out.shape == (2, 5, 3)
    assert out.dtype == np.float64
    assert clamps.shape == (2,)
