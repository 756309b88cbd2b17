"""Shared helpers: finite-difference checks and random simplex rows."""
import numpy as np
import pytest

FD_H = 1e-6


def fd_grad(f, x, h: float = FD_H) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def fd_jacobian(g, x, h: float = FD_H) -> np.ndarray:
    """Central-difference Jacobian of a vector map; column i differentiates x_i."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        hi = np.asarray(g(x + e), dtype=float)
        lo = np.asarray(g(x - e), dtype=float)
        cols.append((hi - lo) / (2.0 * h))
    return np.stack(cols, axis=1)


def rel_err(approx, exact) -> float:
    """Max absolute error scaled by max(1, largest exact magnitude)."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = max(1.0, float(np.max(np.abs(exact))) if exact.size else 0.0)
    return float(np.max(np.abs(approx - exact))) / scale


def interior_rows(rng, n: int, count: int, floor: float = 1e-3) -> np.ndarray:
    """Random weight rows bounded away from the boundary (safe for FD probes)."""
    raw = rng.dirichlet(np.full(n, 2.0), size=count)
    rows = (1.0 - n * floor) * raw + floor
    return rows / rows.sum(axis=1, keepdims=True)


def sorted_interior_rows(rng, n: int, count: int, gap: float = 1e-3) -> np.ndarray:
    """Interior rows sorted descending with adjacent gaps of at least ~gap.

    Mixing in a fixed geometric row keeps every rank strictly separated, so
    rank-based formulas stay on one smooth branch under FD perturbations.
    """
    geo = 0.6 ** np.arange(n)
    geo = geo / geo.sum()
    min_geo_gap = float(np.min(geo[:-1] - geo[1:]))
    lam = min(0.5, gap / min_geo_gap) if gap > 0 else 0.0
    base = interior_rows(rng, n, count)
    base.sort(axis=1)
    rows = (1.0 - lam) * base[:, ::-1] + lam * geo
    return rows / rows.sum(axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)
