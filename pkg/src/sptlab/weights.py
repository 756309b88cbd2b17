"""Weight maps turning market weights into portfolio rows.

Every map returns a row summing to one.  Closed-form maps (dwp, ewp, ...)
are kept separate from the generic generator-driven map so they stay usable
on boundary rows where the generic gradient formula degenerates.
"""
from __future__ import annotations

import numpy as np

from .generators import Generator
from .simplex import as_weight_row, normalize, ranked_view

# Residual budget for the algebraic row-sum identity of the generator map.
_IDENTITY_TOL = 1e-12


def fgp_weights(gen: Generator, mu) -> np.ndarray:
    """Portfolio row generated by ``gen`` at market weights ``mu``.

    pi_i = mu_i * (D_i log G + 1 - sum_j mu_j D_j log G).  The row sums to one
    algebraically; it is re-normalised only to absorb floating-point residue
    below 1e-12, anything larger raises.
    """
    if gen.ranked:
        raise ValueError(f"{gen.name} is rank-based; use rank_fgp_weights")
    mu = as_weight_row(mu)
    zero = mu == 0.0
    if zero.any() and not gen.boundary_ok:
        raise ValueError(
            f"{gen.name} does not extend to the simplex boundary but mu has zero entries"
        )
    val = gen.value(mu)
    if not np.isfinite(val) or val <= 0:
        raise ValueError(f"{gen.name} must be positive at mu, got {val!r}")
    with np.errstate(all="ignore"):
        t = mu * gen.grad(mu) / val
    t = np.where(zero, 0.0, t)
    if not np.all(np.isfinite(t)):
        bad = int(np.flatnonzero(~np.isfinite(t))[0])
        raise FloatingPointError(f"{gen.name}: non-finite log-gradient term at stock {bad + 1}")
    pi = t + mu * (1.0 - t.sum())
    total = pi.sum()
    if abs(total - 1.0) > _IDENTITY_TOL:
        raise FloatingPointError(
            f"{gen.name}: weight identity residue {total - 1.0:.3e} exceeds {_IDENTITY_TOL:g}"
        )
    return pi / total


def rank_fgp_weights(gen: Generator, mu) -> np.ndarray:
    """Portfolio row generated by a rank-based generator.

    The generator is evaluated on the ranked row u (descending); weights are
    computed in rank coordinates and mapped back through the rank permutation.
    Exact ties at a rank boundary the generator is sensitive to are rejected.
    """
    if not gen.ranked:
        raise ValueError(f"{gen.name} is name-based; use fgp_weights")
    mu = as_weight_row(mu)
    u, perm = ranked_view(mu)
    n = u.size
    boundaries = gen.sensitive_boundaries
    if boundaries is None:
        boundaries = tuple(range(1, n))
    for k in boundaries:
        if 1 <= k < n and u[k - 1] == u[k]:
            raise ValueError(
                f"{gen.name}: exact tie across ranks {k} and {k + 1} makes the weights ill-defined"
            )
    zero = u == 0.0
    if zero.any() and not gen.boundary_ok:
        raise ValueError(
            f"{gen.name} does not extend to the simplex boundary but mu has zero entries"
        )
    val = gen.value(u)
    if not np.isfinite(val) or val <= 0:
        raise ValueError(f"{gen.name} must be positive at the ranked row, got {val!r}")
    with np.errstate(all="ignore"):
        t = u * gen.grad(u) / val
    t = np.where(zero, 0.0, t)
    if not np.all(np.isfinite(t)):
        bad = int(np.flatnonzero(~np.isfinite(t))[0])
        raise FloatingPointError(f"{gen.name}: non-finite log-gradient term at rank {bad + 1}")
    pi_ranked = t + u * (1.0 - t.sum())
    total = pi_ranked.sum()
    if abs(total - 1.0) > _IDENTITY_TOL:
        raise FloatingPointError(
            f"{gen.name}: weight identity residue {total - 1.0:.3e} exceeds {_IDENTITY_TOL:g}"
        )
    pi = np.empty_like(pi_ranked)
    pi[perm] = pi_ranked / total
    return pi


def dwp_weights(mu, p: float) -> np.ndarray:
    """Diversity-weighted portfolio pi_i = mu_i^p / sum_j mu_j^p.

    p = 0 gives the equally weighted row; p = 1 gives the market.  Rows with
    zero entries are only accepted for p > 0 (zero weight stays zero).
    """
    mu = as_weight_row(mu, allow_zero=p > 0)
    if p == 0:
        return np.full(mu.size, 1.0 / mu.size)
    with np.errstate(divide="ignore"):
        w = mu**p
    w = np.where(mu == 0.0, 0.0, w)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError(f"dwp weights overflow at p={p:g}")
    return normalize(w)


def ewp_weights(mu, c: float) -> np.ndarray:
    """Entropy-weighted portfolio pi_i proportional to mu_i (c - log mu_i), c > 0."""
    if c <= 0:
        raise ValueError(f"ewp_weights requires c > 0, got {c}")
    mu = as_weight_row(mu, allow_zero=True)
    w = np.where(mu > 0, mu * (c - np.log(np.where(mu > 0, mu, 1.0))), 0.0)
    return normalize(w)


def q_mirror(pi, mu, q: float) -> np.ndarray:
    """Mirror image q*pi + (1-q)*mu of a portfolio with respect to the market."""
    pi = np.asarray(pi, dtype=float)
    mu = as_weight_row(mu)
    if pi.shape != mu.shape:
        raise ValueError("pi and mu must have the same length")
    return q * pi + (1.0 - q) * mu


def fk05_mirror_dwp(mu, p: float) -> np.ndarray:
    """p-mirror of the diversity-weighted portfolio: p*dwp(mu, p) + (1-p)*mu, p in (0, 1)."""
    if not 0 < p < 1:
        raise ValueError(f"fk05_mirror_dwp requires p in (0, 1), got {p}")
    return q_mirror(dwp_weights(mu, p), mu, p)


def gamma_shape_weights(mu, k: float, theta: float) -> np.ndarray:
    """Weights proportional to the Gamma(k, theta) density mu_i^(k-1) exp(-mu_i/theta).

    Computed in log space so tiny theta does not underflow the whole row.
    Requires k > 1 (zero weights then stay zero) and theta > 0.
    """
    if k <= 1:
        raise ValueError(f"gamma_shape_weights requires k > 1, got {k}")
    if theta <= 0:
        raise ValueError(f"gamma_shape_weights requires theta > 0, got {theta}")
    mu = as_weight_row(mu, allow_zero=True)
    with np.errstate(divide="ignore"):
        logw = np.where(mu > 0, (k - 1.0) * np.log(np.where(mu > 0, mu, 1.0)) - mu / theta, -np.inf)
    m = logw.max()
    if not np.isfinite(m):
        raise ValueError("gamma_shape_weights: all weights vanish")
    return normalize(np.exp(logw - m))


def rank_dwp_weights(mu, r: float, m: int, side: str = "top") -> np.ndarray:
    """Rank diversity-weighted portfolio over the top m or bottom n-m+1 stocks.

    side="top": pi over ranks 1..m proportional to mu_(k)^r.
    side="bottom": pi over ranks m..n proportional to mu_(k)^r.
    An exact tie at the selection boundary is rejected.
    """
    if r == 0:
        raise ValueError("rank_dwp_weights requires r != 0")
    if side not in ("top", "bottom"):
        raise ValueError(f"side must be 'top' or 'bottom', got {side!r}")
    mu = as_weight_row(mu, allow_zero=r > 0)
    n = mu.size
    if not 1 <= m <= n:
        raise ValueError(f"rank cutoff m={m} out of range 1..{n}")
    u, perm = ranked_view(mu)
    boundary = m if side == "top" else m - 1
    if 1 <= boundary < n and u[boundary - 1] == u[boundary]:
        raise ValueError(
            f"exact tie across ranks {boundary} and {boundary + 1} makes the selection ill-defined"
        )
    sel = slice(0, m) if side == "top" else slice(m - 1, n)
    usel = u[sel]
    if r <= 0 and np.any(usel == 0.0):
        raise ValueError("selected ranks contain zero weights, undefined for r <= 0")
    with np.errstate(divide="ignore"):
        w = np.where(usel > 0, usel**r, 0.0)
    pi = np.zeros(n)
    pi[perm[sel]] = w
    return normalize(pi)
