"""Shared helpers for weight rows on the unit simplex."""
from __future__ import annotations

import numpy as np

# Tolerance for "sums to one" checks on externally supplied rows.
ROW_SUM_TOL = 1e-9


def as_weight_row(mu, allow_zero: bool = True) -> np.ndarray:
    """Validate and return a market-weight row (nonnegative, sums to 1)."""
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size < 1:
        raise ValueError("weight row must be a non-empty 1-d vector")
    if not np.all(np.isfinite(mu)):
        raise ValueError("weight row contains non-finite entries")
    if np.any(mu < 0):
        raise ValueError("weight row contains negative entries")
    if abs(mu.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"weight row sums to {mu.sum():.12g}, expected 1")
    if not allow_zero and np.any(mu == 0):
        raise ValueError("weight row has zero entries where strictly positive weights are required")
    return mu


def as_portfolio_row(pi) -> np.ndarray:
    """Validate a portfolio row: finite, sums to 1; entries may be negative (shorting)."""
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 1:
        raise ValueError("portfolio row must be a non-empty 1-d vector")
    if not np.all(np.isfinite(pi)):
        raise ValueError("portfolio row contains non-finite entries")
    if abs(pi.sum() - 1.0) > ROW_SUM_TOL:
        raise ValueError(f"portfolio row sums to {pi.sum():.12g}, expected 1")
    return pi


def rank_permutation(mu: np.ndarray) -> np.ndarray:
    """Indices sorted by weight descending; ties broken by lower index first.

    perm[k] is the name holding rank k+1 (rank 1 = largest weight).
    """
    return np.argsort(-np.asarray(mu, dtype=float), kind="stable")


def ranked_view(mu: np.ndarray):
    """Return (u, perm) with u the weights sorted descending and perm the rank map."""
    perm = rank_permutation(mu)
    return np.asarray(mu, dtype=float)[perm], perm


def normalize(w: np.ndarray) -> np.ndarray:
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("cannot normalize a row with non-positive total")
    return w / total
