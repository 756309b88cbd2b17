"""Relative-arbitrage horizon bounds and pathwise verification.

Each bound kind computes the smallest horizon beyond which the corresponding
portfolio is guaranteed to beat the market under the stated regime
assumptions.  Kinds derived from arguments known to be flawed are shipped
with sound=False and are excluded from any pass/fail aggregation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

UNSOUND_KINDS = frozenset({"rank_dwp_case1", "rank_dwp_case1_small", "rank_dwp_case2"})


@dataclass
class HorizonBound:
    kind: str
    value: float  # horizon; +inf when the bound's positivity condition fails
    sound: bool
    params: dict
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value": None if math.isinf(self.value) else self.value,
            "sound": self.sound,
            "params": self.params,
            "details": self.details,
        }


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


def _diverse_dwp(n: int, p: float, eps: float, delta: float) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(0 < p < 1, f"p must lie in (0, 1), got {p}")
    _require(eps > 0, f"eps must be positive, got {eps}")
    _require(0 < delta < 1, f"delta must lie in (0, 1), got {delta}")
    return 2.0 * math.log(n) / (p * eps * delta), {}


def _entropy(n: int, zeta: float, c: Optional[float] = None, h0: Optional[float] = None):
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(zeta > 0, f"zeta must be positive, got {zeta}")
    if h0 is None:
        h0 = math.log(n)  # uniform start
    _require(h0 > 0, f"initial entropy must be positive, got {h0}")
    if c is None or math.isinf(c):
        return h0 / zeta, {"limit": True, "h0": h0}
    _require(c > 0, f"c must be positive, got {c}")
    value = (c + math.log(n)) * math.log((c + h0) / c) / zeta
    return value, {"limit": False, "h0": h0}


def _vsm_dwp_half(n: int) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    return 8.0 * math.log(n) / (n - 1.0), {}


def _fk05_general(n: int, p: float, gamma_table) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(0 < p < 1, f"p must lie in (0, 1), got {p}")
    ts = np.asarray(gamma_table[0], dtype=float)
    vals = np.asarray(gamma_table[1], dtype=float)
    _require(ts.ndim == 1 and ts.shape == vals.shape and ts.size >= 2,
             "gamma_table must be two equal-length 1-d arrays with >= 2 points")
    _require(np.all(np.diff(ts) > 0), "gamma_table times must be strictly increasing")
    _require(np.all(np.diff(vals) > 0), "gamma_table values must be strictly increasing")
    threshold = n ** (1.0 - p) / p * math.log(n)
    _require(vals[0] <= threshold <= vals[-1],
             f"threshold {threshold:.6g} outside the supplied table range "
             f"[{vals[0]:.6g}, {vals[-1]:.6g}]")
    # monotone piecewise-linear inversion
    value = float(np.interp(threshold, vals, ts))
    return value, {"threshold": threshold}


def _neg_p_dwp(n: int, p: float, eps: float, delta: float) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(eps > 0, f"eps must be positive, got {eps}")
    _require(0 < delta < 1.0 / n, f"delta must lie in (0, 1/n), got {delta}")
    p_lo = math.log(n) / math.log(n * delta)
    _require(p_lo < p < 0,
             f"p must lie in the validity range ({p_lo:.6g}, 0), got {p}")
    nd = n * delta
    value = -2.0 * n * math.log(nd) / (eps * (1.0 - p) * (n - nd**p))
    return value, {"p_validity_low": p_lo}


def _dwp_vs_dwp(n: int, delta: float, eps: float, kappa: float,
                p_minus: float, p_plus: float) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(eps > 0, f"eps must be positive, got {eps}")
    _require(kappa > 0, f"K must be positive, got {kappa}")
    _require(0 < delta < 1.0 / n, f"delta must lie in (0, 1/n), got {delta}")
    _require(0 < p_plus < 1, f"p_plus must lie in (0, 1), got {p_plus}")
    p_lo = math.log(n) / math.log(n * delta)
    _require(p_lo < p_minus < 0,
             f"p_minus must lie in the validity range ({p_lo:.6g}, 0), got {p_minus}")
    nd = n * delta
    growth = 0.5 * eps * (1.0 - nd**p_minus / n) * (1.0 - p_minus)
    drag = 2.0 * kappa * ((n - 1.0) / n) * (1.0 - p_plus)
    c = growth - drag
    # c > 0 iff p_plus clears this threshold
    p_plus_min = 1.0 - eps * (n - nd**p_minus) * (1.0 - p_minus) / (4.0 * kappa * (n - 1.0))
    details = {"c": c, "p_plus_threshold": p_plus_min}
    if c <= 0:
        return math.inf, details
    value = -math.log(delta * n ** (2.0 - 1.0 / p_plus)) / c
    return value, details


def _mixed_gen(n: int, eps: float, delta: float,
               p_plus: float, p_minus: float) -> tuple[float, dict]:
    _require(n >= 2, f"need n >= 2, got {n}")
    _require(eps > 0, f"eps must be positive, got {eps}")
    _require(0 < delta < 1, f"delta must lie in (0, 1), got {delta}")
    _require(0 < p_plus < 1, f"p_plus must lie in (0, 1), got {p_plus}")
    _require(p_minus < 0, f"p_minus must be negative, got {p_minus}")
    a_minus = n ** (1.0 / p_minus - 1.0)
    a_plus = n ** (1.0 / p_plus - 1.0)
    value = 2.0 * (1.0 + a_minus) * math.log(a_plus + a_minus) / (
        eps * (1.0 - p_plus) * (1.0 - delta)
    )
    return value, {}


def _rank_dwp_case1(n: int, m: int, r: float, eps: float, delta: float) -> tuple[float, dict]:
    _require(n >= 2 and 1 <= m < n, f"need 1 <= m < n, got m={m}, n={n}")
    _require(0 < r < 1, f"r must lie in (0, 1), got {r}")
    _require(eps > 0 and 0 < delta < 1, "need eps > 0 and delta in (0, 1)")
    rate = 0.5 * eps * delta * (1.0 - r) - 0.5 / m
    details = {"rate": rate}
    if rate <= 0:
        return math.inf, details
    value = ((1.0 - r) / r) * math.log(n) / rate
    return value, details


def _rank_dwp_case1_small(n: int, m: int, r: float, eps: float,
                          kappa: float) -> tuple[float, dict]:
    _require(n >= 2 and 2 <= m <= n, f"need 2 <= m <= n, got m={m}, n={n}")
    _require(0 < r < 1, f"r must lie in (0, 1), got {r}")
    _require(eps > 0 and 0 < kappa < 1, "need eps > 0 and kappa in (0, 1)")
    start = math.log(kappa**r / n ** (1.0 - r)) / r
    rate = 0.5 * eps * (m - 1.0) * kappa * (1.0 - r)
    details = {"rate": rate, "start": start}
    if start >= 0:
        return 0.0, details
    return -start / rate, details


def _rank_dwp_case2(n: int, m: int, r: float, eps: float, kappa: float) -> tuple[float, dict]:
    _require(n >= 2 and 1 <= m < n, f"need 1 <= m < n, got m={m}, n={n}")
    _require(r < 0, f"r must be negative, got {r}")
    _require(eps > 0 and kappa > 0 and m * kappa < 1,
             "need eps > 0, kappa > 0 and m kappa < 1")
    rate = (0.5 * eps * (m - 1.0) * (1.0 - r) - 0.5) / m
    details = {"rate": rate}
    if rate <= 0:
        return math.inf, details
    value = math.log(1.0 / (m * kappa)) / rate
    return value, details


_KINDS: dict[str, Callable] = {
    "diverse_dwp": _diverse_dwp,
    "entropy": _entropy,
    "vsm_dwp_half": _vsm_dwp_half,
    "fk05_general": _fk05_general,
    "neg_p_dwp": _neg_p_dwp,
    "dwp_vs_dwp": _dwp_vs_dwp,
    "mixed_gen": _mixed_gen,
    "rank_dwp_case1": _rank_dwp_case1,
    "rank_dwp_case1_small": _rank_dwp_case1_small,
    "rank_dwp_case2": _rank_dwp_case2,
}


def horizon_bound(kind: str, **params) -> HorizonBound:
    """Evaluate a horizon bound; parameters are echoed into the result."""
    if kind not in _KINDS:
        raise ValueError(f"unknown bound kind {kind!r}; known: {sorted(_KINDS)}")
    value, details = _KINDS[kind](**params)
    clean_params = {
        k: (v if np.isscalar(v) else [np.asarray(a).tolist() for a in v])
        for k, v in params.items()
    }
    return HorizonBound(
        kind=kind,
        value=float(value),
        sound=kind not in UNSOUND_KINDS,
        params=clean_params,
        details=details,
    )


def neg_p_floor(n: int, p: float, eps: float, delta: float) -> Callable[[float], float]:
    """Pathwise floor for the negative-p rule on no-failure markets:
    floor(t) = log(n delta) + (1-p) (eps/2) (1 - (n delta)^p / n) t."""
    nd = n * delta
    slope = (1.0 - p) * 0.5 * eps * (1.0 - nd**p / n)
    intercept = math.log(nd)

    def floor(t: float) -> float:
        return intercept + slope * t

    return floor


def pathwise_ra_check(decomp, floor, horizon: Optional[float] = None) -> dict:
    """Compare a decomposition's realized lhs against a theoretical floor.

    floor may be a scalar, an array aligned with the decomposition grid, or a
    callable of time.  Reports the satisfied fraction over the grid, the worst
    margin, and whether the terminal point clears the floor.
    """
    times = np.asarray(decomp.times, dtype=float)
    lhs = np.asarray(decomp.lhs, dtype=float)
    if horizon is not None and times[-1] < horizon - 1e-12:
        raise ValueError(
            f"path covers only t <= {times[-1]:g} but the bound needs horizon {horizon:g}"
        )
    if callable(floor):
        fl = np.array([floor(t) for t in times])
    elif np.isscalar(floor):
        fl = np.full_like(times, float(floor))
    else:
        fl = np.asarray(floor, dtype=float)
        if fl.shape != times.shape:
            raise ValueError(f"floor array has shape {fl.shape}, expected {times.shape}")
    margin = lhs - fl
    worst = int(np.argmin(margin))
    return {
        "fraction_satisfied": float(np.mean(margin >= 0)),
        "min_margin": float(margin[worst]),
        "argmin_time": float(times[worst]),
        "terminal_lhs": float(lhs[-1]),
        "terminal_floor": float(fl[-1]),
        "terminal_ok": bool(lhs[-1] > fl[-1]),
    }
