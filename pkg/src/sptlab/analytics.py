"""Pathwise analytics: covariation estimates, wealth decompositions, local times.

All decompositions work on the discrete grid of an observed path.  The
left-hand side is always the exact discrete log relative wealth of the
self-financing portfolio, so the reported residual measures pure
discretization error of the continuous-time identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .generators import Generator
from .markets import MarketPath
from .simplex import as_portfolio_row, as_weight_row, ranked_view
from .weights import fgp_weights, rank_fgp_weights

# Max deviation allowed between a supplied portfolio path and the generator's
# own weight map before the decomposition refuses to proceed.
_PI_MATCH_TOL = 1e-9


# ---------------------------------------------------------------------------
# covariance and growth identities


def relative_covariance(a, pi) -> np.ndarray:
    """tau^pi_ij = (pi - e_i)' a (pi - e_j) for a covariance matrix a."""
    a = np.asarray(a, dtype=float)
    pi = np.asarray(pi, dtype=float)
    apx = a @ pi
    paq = pi @ apx
    return a - apx[:, None] - apx[None, :] + paq


def excess_growth_rate(pi, a) -> float:
    """gamma*_pi = 1/2 (sum_i pi_i a_ii - pi' a pi)."""
    a = np.asarray(a, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return 0.5 * float(pi @ np.diag(a) - pi @ a @ pi)


def excess_growth_from_relative(pi, tau) -> float:
    """gamma*_pi computed from any numeraire's relative covariance tau^rho.

    Equals 1/2 (sum_i pi_i tau_ii - pi' tau pi); invariant in rho.
    """
    tau = np.asarray(tau, dtype=float)
    pi = np.asarray(pi, dtype=float)
    return 0.5 * float(pi @ np.diag(tau) - pi @ tau @ pi)


@dataclass
class CovEstimate:
    """Rolling realized covariance of the log caps.

    matrices[k] estimates a(t) over the window ending at times[k].  Estimates
    are projected to the PSD cone by eigenvalue clipping; the clipped mass
    (Frobenius norm of the adjustment) is reported per window, as are stocks
    excluded because their cap hit zero inside the window.
    """

    times: np.ndarray
    matrices: np.ndarray
    psd_adjustments: np.ndarray
    excluded: list = field(default_factory=list)


def realized_covariance(path: MarketPath, window: int) -> CovEstimate:
    caps = path.caps
    times = path.times
    steps = caps.shape[0] - 1
    if not 1 <= window <= steps:
        raise ValueError(f"window must lie in 1..{steps}, got {window}")
    with np.errstate(divide="ignore"):
        logs = np.where(caps > 0, np.log(np.where(caps > 0, caps, 1.0)), -np.inf)
    dlog = logs[1:] - logs[:-1]
    dts = np.diff(times)
    out_times = times[window:]
    n = caps.shape[1]
    mats = np.empty((steps - window + 1, n, n))
    adjustments = np.zeros(steps - window + 1)
    excluded = []
    for k in range(window, steps + 1):
        sl = slice(k - window, k)
        inc = dlog[sl]
        span = float(times[k] - times[k - window])
        alive = np.all(np.isfinite(inc), axis=0)
        if not alive.all():
            for i in np.flatnonzero(~alive):
                excluded.append((float(times[k]), int(i + 1)))
        inc = np.where(alive[None, :], inc, 0.0)
        mat = inc.T @ inc / span
        vals, vecs = np.linalg.eigh(mat)
        if vals[0] < 0:
            clipped = np.minimum(vals, 0.0)
            adjustments[k - window] = math.sqrt(float(np.sum(clipped**2)))
            mat = (vecs * np.maximum(vals, 0.0)) @ vecs.T
            mat = 0.5 * (mat + mat.T)
        mats[k - window] = mat
        _ = dts  # grid spacing enters through `span`
    return CovEstimate(out_times, mats, adjustments, excluded)


def realized_market_diagnostics(path: MarketPath) -> dict:
    """Per-step realized market variance a_mumu and excess growth gamma*_mu.

    Both are estimated from log-cap increments against the left-point weights:
    a_mumu = (sum_i mu_i dlogX_i)^2 / dt,
    gamma*_mu = (sum_i mu_i dlogX_i^2 - (sum_i mu_i dlogX_i)^2) / (2 dt).
    """
    caps = path.caps
    if np.any(caps <= 0):
        raise ValueError("realized diagnostics require strictly positive caps")
    mu = path.weights()[:-1]
    dlog = np.diff(np.log(caps), axis=0)
    dts = np.diff(path.times)
    m1 = np.einsum("si,si->s", mu, dlog)
    m2 = np.einsum("si,si->s", mu, dlog**2)
    a_mumu = m1**2 / dts
    egr = 0.5 * (m2 - m1**2) / dts
    return {
        "a_mumu": a_mumu,
        "egr": egr,
        "a_mumu_mean": float(np.mean(a_mumu)),
        "egr_mean": float(np.mean(egr)),
    }


# ---------------------------------------------------------------------------
# wealth decompositions


def relative_log_wealth(pi_rows: np.ndarray, mu_rows: np.ndarray) -> np.ndarray:
    """Cumulative log(V^pi / V^mu) of the frictionless self-financing portfolio.

    Per step: log sum_i pi_i(t) mu_i(t+1) / mu_i(t); stocks at zero weight

    contribute nothing (their pi must be zero).
    """
    ratios = np.ones_like(mu_rows[1:])
    prev = mu_rows[:-1]
    np.divide(mu_rows[1:], prev, out=ratios, where=prev > 0)
    growth = np.einsum("si,si->s", pi_rows[:-1], ratios)
    if np.any(growth <= 0):
        s_bad = int(np.flatnonzero(growth <= 0)[0])
        raise ValueError(f"portfolio wealth hits zero over step {s_bad}")
    out = np.empty(mu_rows.shape[0])
    out[0] = 0.0
    out[1:] = np.cumsum(np.log(growth))
    return out


@dataclass
class DecompositionLedger:
    """Master-equation ledger: lhs = gterm + drift_integral + lt_term + residual."""

    times: np.ndarray
    lhs: np.ndarray
    gterm: np.ndarray
    drift_integral: np.ndarray
    lt_term: np.ndarray
    residual: np.ndarray
    generator: str
    pi_rows: np.ndarray
    drift_density: np.ndarray

    def terminal(self) -> dict:
        return {
            "lhs": float(self.lhs[-1]),
            "gterm": float(self.gterm[-1]),
            "drift_integral": float(self.drift_integral[-1]),
            "lt_term": float(self.lt_term[-1]),
            "residual": float(self.residual[-1]),
        }


def _check_supplied_pi(pi_path, computed, label):
    pi_path = np.asarray(pi_path, dtype=float)
    if pi_path.shape != computed.shape:
        raise ValueError(f"pi_path has shape {pi_path.shape}, expected {computed.shape}")
    err = float(np.max(np.abs(pi_path - computed)))
    if err > _PI_MATCH_TOL:
        raise ValueError(
            f"supplied portfolio path deviates from the {label} weight map "
            f"by {err:.3e} (tolerance {_PI_MATCH_TOL:g})"
        )


def master_decomposition(gen: Generator, path: MarketPath, pi_path=None) -> DecompositionLedger:
    """Pathwise decomposition log(V^pi/V^mu) = log(G(mu_T)/G(mu_0)) + int g dt + residual.

    The drift integrand is evaluated by left-point quadrature against the
    realized weight covariation: per step -1/(2 G(mu)) dmu' Hess G(mu) dmu.
    """
    if gen.ranked:
        raise ValueError(f"{gen.name} is rank-based; use rank_master_decomposition")
    mu = path.weights()
    pi = np.stack([fgp_weights(gen, row) for row in mu])
    if pi_path is not None:
        _check_supplied_pi(pi_path, pi, gen.name)
    lhs = relative_log_wealth(pi, mu)

    values = np.array([gen.value(row) for row in mu])
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError(f"{gen.name} must stay positive along the path")
    gterm = np.log(values) - math.log(values[0])

    steps = mu.shape[0] - 1
    dmu = np.diff(mu, axis=0)
    drift_inc = np.empty(steps)
    for s in range(steps):
        row = mu[s]
        active = row > 0
        d = dmu[s]
        with np.errstate(all="ignore"):
            hess = gen.hess(row)
        if active.all():
            quad = float(d @ hess @ d)
        else:
            sub = np.ix_(active, active)
            quad = float(d[active] @ hess[sub] @ d[active])
        drift_inc[s] = -0.5 * quad / values[s]
    drift_integral = np.concatenate([[0.0], np.cumsum(drift_inc)])

    lt = np.zeros_like(lhs)
    residual = lhs - gterm - drift_integral - lt
    dt = np.diff(path.times)
    return DecompositionLedger(
        times=path.times,
        lhs=lhs,
        gterm=gterm,
        drift_integral=drift_integral,
        lt_term=lt,
        residual=residual,
        generator=gen.name,
        pi_rows=pi,
        drift_density=drift_inc / dt,
    )


def rank_master_decomposition(gen: Generator, path: MarketPath, pi_path=None,
                              lt_method: str = "tanaka") -> DecompositionLedger:
    """Rank-based master equation with the boundary local-time term.

    lhs = log ratio of the ranked generator + left-point drift integral
        + 1/2 sum_k (pi_(k+1) - pi_(k)) dLambda_k + residual.
    """
    if not gen.ranked:
        raise ValueError(f"{gen.name} is name-based; use master_decomposition")
    mu = path.weights()
    rows = mu.shape[0]
    n = mu.shape[1]
    pi = np.empty_like(mu)
    perms = np.empty((rows, n), dtype=int)
    us = np.empty_like(mu)
    for t in range(rows):
        pi[t] = rank_fgp_weights(gen, mu[t])
        us[t], perms[t] = ranked_view(mu[t])
    if pi_path is not None:
        _check_supplied_pi(pi_path, pi, gen.name)
    lhs = relative_log_wealth(pi, mu)

    values = np.array([gen.value(u) for u in us])
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError(f"{gen.name} must stay positive along the path")
    gterm = np.log(values) - math.log(values[0])

    steps = rows - 1
    dmu = np.diff(mu, axis=0)
    drift_inc = np.empty(steps)
    for s in range(steps):
        u = us[s]
        v = dmu[s][perms[s]]  # name increments gathered into rank slots
        active = u > 0
        with np.errstate(all="ignore"):
            hess = gen.hess(u)
        if active.all():
            quad = float(v @ hess @ v)
        else:
            sub = np.ix_(active, active)
            quad = float(v[active] @ hess[sub] @ v[active])
        drift_inc[s] = -0.5 * quad / values[s]
    drift_integral = np.concatenate([[0.0], np.cumsum(drift_inc)])

    lt_inc = np.zeros(steps)
    for k in range(1, n):
        _, prof = local_time_profile(path, k, method=lt_method)
        dL = np.diff(prof)
        if not np.any(dL):
            continue
        pi_ranked_hi = pi[np.arange(steps), perms[:-1, k]]
        pi_ranked_lo = pi[np.arange(steps), perms[:-1, k - 1]]
        lt_inc += 0.5 * (pi_ranked_hi - pi_ranked_lo) * dL
    lt = np.concatenate([[0.0], np.cumsum(lt_inc)])

    residual = lhs - gterm - drift_integral - lt
    dt = np.diff(path.times)
    return DecompositionLedger(
        times=path.times,
        lhs=lhs,
        gterm=gterm,
        drift_integral=drift_integral,
        lt_term=lt,
        residual=residual,
        generator=gen.name,
        pi_rows=pi,
        drift_density=drift_inc / dt,
    )


# ---------------------------------------------------------------------------
# local time


def _gap_process(weights: np.ndarray, k: int) -> np.ndarray:
    n = weights.shape[1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"rank boundary k must lie in 1..{n - 1}, got {k}")
    u = -np.sort(-weights, axis=1)
    hi, lo = u[:, k - 1], u[:, k]
    if np.any(lo <= 0):
        raise ValueError(f"rank {k + 1} weight hits zero; the gap process is undefined")
    return np.log(hi / lo)


def local_time_profile(path, k: int, method: str = "tanaka"):
    """Cumulative local time of the rank gap Xi_k = log(mu_(k)/mu_(k+1)) at zero.

    tanaka: Meyer-Tanaka correction with boundary threshold of one grid
    increment; a step contributes dXi exactly when Xi sits strictly below
    |dXi|, which forces nonnegative contributions.

    fernholz: realized relative wealth of the top-k cap-weighted portfolio,
    dL = (2/zeta_(k)) dlog(G_top(mu) V^mu / V^zeta), evaluated with the exact
    discrete wealth propagation (zero off rank-crossing steps).

    Returns (times, L) with L nondecreasing and L[0] = 0.
    """
    if isinstance(path, MarketPath):
        weights = path.weights()
        times = path.times
    else:
        weights = np.asarray(path, dtype=float)
        times = np.arange(weights.shape[0], dtype=float)

    if method == "tanaka":
        xi = _gap_process(weights, k)
        dxi = np.diff(xi)
        at_boundary = xi[:-1] < np.abs(dxi)
        inc = np.where(at_boundary, dxi, 0.0)
    elif method == "fernholz":
        steps = weights.shape[0] - 1
        inc = np.empty(steps)
        for s in range(steps):
            u, perm = ranked_view(weights[s])
            top = perm[:k]
            g_now = float(u[:k].sum())
            zeta_min = u[k - 1] / g_now
            held = float(weights[s + 1][top].sum())
            g_next = float(np.sort(weights[s + 1])[::-1][:k].sum())
            if held <= 0:
                raise ValueError(f"top-{k} portfolio wealth vanishes over step {s}")
            inc[s] = (2.0 / zeta_min) * (math.log(g_next) - math.log(held))
    else:
        raise ValueError(f"unknown local time method {method!r}")

    out = np.empty(weights.shape[0])
    out[0] = 0.0
    np.cumsum(inc, out=out[1:])
    return times, out


# ---------------------------------------------------------------------------
# discrete free-energy (Pal-Wong) ledger


def _relative_entropy_strict(pi: np.ndarray, mu: np.ndarray) -> float:
    if np.any((pi > 0) & (mu <= 0)):
        raise ValueError("relative entropy undefined: pi puts mass where mu vanishes")
    pos = pi > 0
    return float(np.sum(pi[pos] * np.log(pi[pos] / mu[pos])))


@dataclass
class PalWongLedger:
    """Exact discrete ledger
    log(V^pi/V^mu)(T) = sum free_energy + H(pi_0|mu_0) - H(pi_T|mu_T) + sum cross.
    """

    times: np.ndarray
    lhs: np.ndarray
    free_energy: np.ndarray
    cross: np.ndarray
    entropy_initial: float
    entropy_terminal: float
    residual: float

    def terminal(self) -> dict:
        return {
            "lhs": float(self.lhs[-1]),
            "free_energy_total": float(self.free_energy.sum()),
            "cross_total": float(self.cross.sum()),
            "entropy_initial": self.entropy_initial,
            "entropy_terminal": self.entropy_terminal,
            "residual": self.residual,
        }


def palwong_decomposition(path, pi_rows) -> PalWongLedger:
    """Decompose the discrete relative wealth of a long-only portfolio sequence.

    free_energy(t) = log(sum pi_i r_i) - sum pi_i log r_i >= 0 with
    r_i = mu_i(t+1)/mu_i(t) (Jensen); cross(t) = H(pi_{t+1}|mu_{t+1}) - H(pi_t|mu_{t+1}).
    The identity is algebraic, so the reported residual is pure float noise.
    """
    if isinstance(path, MarketPath):
        mu = path.weights()
        times = path.times
    else:
        mu = np.asarray(path, dtype=float)
        times = np.arange(mu.shape[0], dtype=float)
    pi = np.asarray(pi_rows, dtype=float)
    if pi.shape != mu.shape:
        raise ValueError(f"pi_rows has shape {pi.shape}, expected {mu.shape}")
    if np.any(pi < 0):
        raise ValueError("the free-energy ledger requires long-only portfolio rows")
    if np.any(mu <= 0):
        raise ValueError("the free-energy ledger requires strictly positive weights")
    for t in range(mu.shape[0]):
        as_weight_row(mu[t])
        as_portfolio_row(pi[t])

    steps = mu.shape[0] - 1
    r = mu[1:] / mu[:-1]
    growth = np.einsum("si,si->s", pi[:-1], r)
    mean_log = np.array([
        float(np.sum(pi[s][pi[s] > 0] * np.log(r[s][pi[s] > 0]))) for s in range(steps)
    ])
    free_energy = np.log(growth) - mean_log
    cross = np.array([
        _relative_entropy_strict(pi[s + 1], mu[s + 1])
        - _relative_entropy_strict(pi[s], mu[s + 1])
        for s in range(steps)
    ])
    lhs = np.concatenate([[0.0], np.cumsum(np.log(growth))])
    h0 = _relative_entropy_strict(pi[0], mu[0])
    hT = _relative_entropy_strict(pi[-1], mu[-1])
    residual = float(lhs[-1] - (free_energy.sum() + h0 - hT + cross.sum()))
    return PalWongLedger(
        times=times,
        lhs=lhs,
        free_energy=free_energy,
        cross=cross,
        entropy_initial=h0,
        entropy_terminal=hT,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# scalar measures


def diversity_measure(row) -> tuple[float, bool]:
    """D(x) = (1/n) sum log x_i; returns (value, defined).

    Rows with zero entries return (0.0, False) by convention.
    """
    row = np.asarray(row, dtype=float)
    if np.any(row == 0):
        return 0.0, False
    return float(np.mean(np.log(row))), True


def shannon_entropy(row) -> float:
    row = np.asarray(row, dtype=float)
    pos = row > 0
    return float(-np.sum(row[pos] * np.log(row[pos])))


def relative_entropy(pi, mu) -> float:
    """H(pi|mu) = sum pi_i log(pi_i/mu_i); +inf if pi charges a zero of mu."""
    pi = np.asarray(pi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any((pi > 0) & (mu <= 0)):
        return math.inf
    pos = pi > 0
    return float(np.sum(pi[pos] * np.log(pi[pos] / mu[pos])))


def diversity_entropy_measures(row, other=None) -> dict:
    """Bundle of concentration measures for one weight row.

    With `other` given, also reports H_rel(row | other).
    """
    d, defined = diversity_measure(row)
    out = {
        "diversity": d,
        "diversity_defined": defined,
        "shannon_entropy": shannon_entropy(row),
    }
    if other is not None:
        out["relative_entropy"] = relative_entropy(row, other)
    return out


# ---------------------------------------------------------------------------
# regime checks and turnover


def _weights_and_times(path):
    if isinstance(path, MarketPath):
        return path.weights(), path.times
    w = np.asarray(path, dtype=float)
    return w, np.arange(w.shape[0], dtype=float)


def regime_checks(path, params: dict) -> dict:
    """Verify structural market conditions on an observed weight path.

    params maps condition names to their parameters:
      diverse: {delta}        mu_(1)(t) < 1 - delta for all t
      weak_diverse: {delta}   time average of mu_(1) < 1 - delta
      nofail: {delta}         mu_(n)(t) >= delta for all t
      fk05: {p, zeta}         int gamma*_{mu,p} dt >= n^(1-p)/p log n + zeta

    Each report carries a verdict, the margin, and (for the pointwise
    conditions) the first violation time.
    """
    weights, times = _weights_and_times(path)
    n = weights.shape[1]
    known = {"diverse", "weak_diverse", "nofail", "fk05"}
    unknown = set(params) - known
    if unknown:
        raise ValueError(f"unknown regime conditions: {sorted(unknown)}")
    mu_max = weights.max(axis=1)
    mu_min = weights.min(axis=1)
    report = {}

    if "diverse" in params:
        delta = float(params["diverse"]["delta"])
        bad = np.flatnonzero(mu_max >= 1.0 - delta)
        report["diverse"] = {
            "verdict": bad.size == 0,
            "margin": float((1.0 - delta) - mu_max.max()),
            "first_violation_time": float(times[bad[0]]) if bad.size else None,
        }
    if "weak_diverse" in params:
        delta = float(params["weak_diverse"]["delta"])
        dts = np.diff(times)
        avg = float(np.sum(mu_max[:-1] * dts) / (times[-1] - times[0]))
        report["weak_diverse"] = {
            "verdict": avg < 1.0 - delta,
            "margin": float((1.0 - delta) - avg),
            "time_average": avg,
        }
    if "nofail" in params:
        delta = float(params["nofail"]["delta"])
        bad = np.flatnonzero(mu_min < delta)
        report["nofail"] = {
            "verdict": bad.size == 0,
            "margin": float(mu_min.min() - delta),
            "first_violation_time": float(times[bad[0]]) if bad.size else None,
        }
    if "fk05" in params:
        p = float(params["fk05"]["p"])
        zeta = float(params["fk05"]["zeta"])
        if np.any(weights <= 0):
            raise ValueError("fk05 condition requires strictly positive weights")
        dmu = np.diff(weights, axis=0)
        mu_left = weights[:-1]
        # realized gamma*_{mu,p} dt = 1/2 sum_i mu_i^p (dmu_i / mu_i)^2
        integral = 0.5 * float(np.sum(mu_left ** (p - 2.0) * dmu**2))
        threshold = n ** (1.0 - p) / p * math.log(n) + zeta
        report["fk05"] = {
            "verdict": integral >= threshold,
            "margin": float(integral - threshold),
            "integral": integral,
            "threshold": threshold,
        }
    return report


def turnover_estimate(p: float, delta_band: float, egr_integral: float) -> float:
    """Long-run turnover proxy for the diversity-weighted portfolio under a
    no-trade band of half-width delta_band: (2/delta) (1-p)^2 int gamma*_pi dt."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if delta_band <= 0:
        raise ValueError(f"delta_band must be positive, got {delta_band}")
    if egr_integral < 0:
        raise ValueError(f"egr_integral must be nonnegative, got {egr_integral}")
    return (2.0 / delta_band) * (1.0 - p) ** 2 * egr_integral
