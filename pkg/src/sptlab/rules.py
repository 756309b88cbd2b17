"""Portfolio rules: weight processes driven by the observed weight history.

A rule is stateful: reset(), then step(t, mu_row) once per grid point in
order.  step always returns the row to hold over [t, t+1).  Stateless maps
are wrapped in StaticRule; latching rules (stopped_dwp, bf08, the short-term
mirror strategy) track frictionless component wealths internally, which only
needs the observed weight rows.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .gammafn import gamma_q
from .generators import generator_from_config, incomplete_gamma_generator
from .simplex import as_weight_row
from .weights import (
    dwp_weights,
    ewp_weights,
    fgp_weights,
    fk05_mirror_dwp,
    gamma_shape_weights,
    q_mirror,
    rank_dwp_weights,
    rank_fgp_weights,
)


class PortfolioRule:
    """Base class; subclasses implement _weights(t, mu) and may keep state."""

    name = "rule"
    zero_adjusted = False

    def reset(self) -> None:
        pass

    def step(self, t: float, mu_row) -> np.ndarray:
        mu = as_weight_row(mu_row)
        if self.zero_adjusted and np.any(mu == 0.0):
            pos = mu > 0
            sub = mu[pos] / mu[pos].sum()
            w_sub = self._weights(t, sub)
            out = np.zeros_like(mu)
            out[pos] = w_sub
            total = out.sum()
            if abs(total - 1.0) > 1e-9:
                raise FloatingPointError(f"{self.name}: zero-adjusted row sums to {total!r}")
            return out / total
        return self._weights(t, mu)

    def _weights(self, t: float, mu: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weights_path(self, times, mu_rows) -> np.ndarray:
        """Convenience: reset and run the rule over a whole weight path."""
        self.reset()
        times = np.asarray(times, dtype=float)
        mu_rows = np.asarray(mu_rows, dtype=float)
        return np.stack([self.step(times[k], mu_rows[k]) for k in range(times.size)])


class StaticRule(PortfolioRule):
    def __init__(self, name: str, fn: Callable[[np.ndarray], np.ndarray],
                 zero_adjusted: bool = False):
        self.name = name
        self._fn = fn
        self.zero_adjusted = zero_adjusted

    def _weights(self, t: float, mu: np.ndarray) -> np.ndarray:
        return self._fn(mu)


class MirrorRule(PortfolioRule):
    """q pi + (1-q) mu around a base rule's weights."""

    def __init__(self, base: PortfolioRule, q: float):
        self.base = base
        self.q = float(q)
        self.name = f"mirror(q={q:g},{base.name})"

    def reset(self):
        self.base.reset()

    def step(self, t: float, mu_row) -> np.ndarray:
        mu = as_weight_row(mu_row)
        return q_mirror(self.base.step(t, mu), mu, self.q)


class StoppedDwpRule(PortfolioRule):
    """Negative-p diversity-weighted rule stopped at the no-failure boundary.

    Holds dwp(mu, p) until the first time the smallest weight reaches delta.
    variant="hat" then switches to the market; variant="tilde" latches the
    blend (V^mu/V^pi)(tau) mu(t) + (1 - (V^mu/V^pi)(tau)) pi(t) with the
    wealth ratio frozen at the stopping time.
    """

    def __init__(self, p: float, delta: float, variant: str = "hat",
                 zero_adjusted: bool = False):
        if p >= 0:
            raise ValueError(f"stopped rule needs p < 0, got {p}")
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if variant not in ("hat", "tilde"):
            raise ValueError(f"variant must be 'hat' or 'tilde', got {variant!r}")
        self.p = float(p)
        self.delta = float(delta)
        self.variant = variant
        self.zero_adjusted = zero_adjusted
        self.name = f"stopped_dwp(p={p:g},delta={delta:g},{variant})"
        self.in_validity_range: Optional[bool] = None
        self.reset()

    def reset(self):
        self.latched = False
        self.stop_time: Optional[float] = None
        self._ratio = 1.0  # V^dwp / V^mu, frictionless
        self._mu_coeff = 1.0
        self._prev_mu: Optional[np.ndarray] = None
        self._prev_pi: Optional[np.ndarray] = None

    def _dwp(self, mu: np.ndarray) -> np.ndarray:
        if self.zero_adjusted and np.any(mu == 0.0):
            pos = mu > 0
            sub = mu[pos] / mu[pos].sum()
            out = np.zeros_like(mu)
            out[pos] = dwp_weights(sub, self.p)
            return out / out.sum()
        return dwp_weights(mu, self.p)

    def step(self, t: float, mu_row) -> np.ndarray:
        mu = as_weight_row(mu_row)
        n = mu.size
        if self.in_validity_range is None:
            if self.delta >= 1.0 / n:
                raise ValueError(
                    f"delta={self.delta:g} is unreachable: no valid start has "
                    f"min weight below 1/n = {1.0 / n:g}"
                )
            p_lo = math.log(n) / math.log(n * self.delta)
            self.in_validity_range = p_lo < self.p < 0
        if not self.latched:
            if self._prev_mu is not None:
                ratio_inc = float(np.sum(
                    self._prev_pi[self._prev_mu > 0]
                    * mu[self._prev_mu > 0] / self._prev_mu[self._prev_mu > 0]
                ))
                if ratio_inc <= 0:
                    raise ValueError(f"{self.name}: tracked wealth hit zero at t={t:g}")
                self._ratio *= ratio_inc
            if mu.min() <= self.delta:
                self.latched = True
                self.stop_time = float(t)
                self._mu_coeff = 1.0 / self._ratio
        if not self.latched:
            pi = self._dwp(mu)
            self._prev_mu = mu
            self._prev_pi = pi
            return pi
        if self.variant == "hat":
            return mu.copy()
        return self._mu_coeff * mu + (1.0 - self._mu_coeff) * self._dwp(mu)


class Bf08Rule(PortfolioRule):
    """Incomplete-gamma generated rule with its intrinsic stopping time.

    The generator is sum_i f(mu_i) with f(y) = Gamma(c+1, -log y) (regularized
    internally; the scale cancels everywhere).  Default shape parameter
    c = 8 (n-1)(1 + log n) / T.  From t = T/2 on, the rule stops the first
    time the smallest weight exceeds Y(t), the inverse of the monotone map
    T1(Y) = T/2 + int_Y^{1/n} S1'(r)/Theta1(r) dr, and holds the market
    thereafter.  The inversion is a bracketing bisection to relative
    tolerance 1e-8.
    """

    _BISECT_RTOL = 1e-8
    _R_MIN = 1e-240

    def __init__(self, horizon: float, c: Optional[float] = None):
        if horizon <= 0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        if c is not None and c <= 0:
            raise ValueError(f"c must be positive, got {c}")
        self.horizon = float(horizon)
        self._c_override = c
        self.name = f"bf08(T={horizon:g})"
        self.reset()

    def reset(self):
        self.n: Optional[int] = None
        self.c: Optional[float] = None
        self.gen = None
        self.latched = False
        self.stop_time: Optional[float] = None
        self._lg = None
        self._t1_cache: dict[float, float] = {}

    def _init(self, n: int):
        self.n = n
        if self._c_override is not None:
            self.c = float(self._c_override)
        else:
            self.c = 8.0 * (n - 1.0) * (1.0 + math.log(n)) / self.horizon
        self.gen = incomplete_gamma_generator(self.c)
        self._lg = math.lgamma(self.c + 1.0)

    # regularized f and derivatives; the common 1/Gamma(c+1) factor cancels
    # in every ratio below but keeps intermediates representable.
    def _f(self, y: float) -> float:
        return gamma_q(self.c + 1.0, -math.log(y))

    def _fp(self, y: float) -> float:
        return math.exp(self.c * math.log(-math.log(y)) - self._lg)

    def _fpp(self, y: float) -> float:
        return -(self.c / y) * math.exp((self.c - 1.0) * math.log(-math.log(y)) - self._lg)

    def _integrand(self, r: float) -> float:
        n = self.n
        other = 1.0 - (n - 1.0) * r
        s1_num = (n - 1.0) * (self._fp(r) - self._fp(other))
        s1_den = (n - 1.0) * self._f(r) + self._f(other)
        s1p = s1_num / s1_den
        theta = -r * self._fpp(r) / (4.0 * (self._f(r) + (n - 1.0) * self._f((1.0 - r) / (n - 1.0))))
        return s1p / theta

    def _t1(self, r: float) -> float:
        cached = self._t1_cache.get(r)
        if cached is not None:
            return cached
        hi = 1.0 / self.n
        if r >= hi:
            return self.horizon / 2.0
        val, _ = quad(self._integrand, r, hi, limit=200)
        out = self.horizon / 2.0 + val
        self._t1_cache[r] = out
        return out

    def stop_threshold(self, t: float) -> float:
        """Y(t): the ranked-weight level whose crossing stops the rule."""
        if t < self.horizon / 2.0:
            return 0.0
        hi = 1.0 / self.n
        if t <= self._t1(hi):
            return hi
        lo = hi
        # expand the bracket downward until T1(lo) >= t
        while self._t1(lo) < t:
            lo *= 0.25
            if lo < self._R_MIN:
                return 0.0
        hi_r, lo_r = lo * 4.0, lo  # T1(hi_r) < t <= T1(lo_r)
        while (hi_r - lo_r) > self._BISECT_RTOL * hi_r:
            mid = 0.5 * (hi_r + lo_r)
            if self._t1(mid) < t:
                hi_r = mid
            else:
                lo_r = mid
        return 0.5 * (hi_r + lo_r)

    def step(self, t: float, mu_row) -> np.ndarray:
        mu = as_weight_row(mu_row, allow_zero=False)
        if self.n is None:
            self._init(mu.size)
        if not self.latched and t >= self.horizon / 2.0:
            if float(mu.min()) > self.stop_threshold(t):
                self.latched = True
                self.stop_time = float(t)
        if self.latched:
            return mu.copy()
        return fgp_weights(self.gen, mu)


class ShortTermArbitrageRule(PortfolioRule):
    """Zero-cost seed strategy: long q/mu_k(0)^q dollars of the market, short
    one dollar of the mirror q e_k + (1-q) mu.  Emits the combined weights of
    the self-financing package; initial_capital is its (positive) setup value.
    """

    def __init__(self, q: float, stock: int = 1):
        if q <= 1:
            raise ValueError(f"the seed strategy needs q > 1, got {q}")
        if stock < 1:
            raise ValueError(f"stock index must be >= 1, got {stock}")
        self.q = float(q)
        self.stock = int(stock)
        self.name = f"short_term_arbitrage(q={q:g},stock={stock})"
        self.reset()

    def reset(self):
        self.initial_capital: Optional[float] = None
        self._long_scale: Optional[float] = None
        self._ratio = 1.0  # V^mirror / V^mu
        self._prev_mu: Optional[np.ndarray] = None
        self._prev_mirror: Optional[np.ndarray] = None

    def _mirror(self, mu: np.ndarray) -> np.ndarray:
        e = np.zeros_like(mu)
        e[self.stock - 1] = 1.0
        return self.q * e + (1.0 - self.q) * mu

    def step(self, t: float, mu_row) -> np.ndarray:
        mu = as_weight_row(mu_row, allow_zero=False)
        if self._long_scale is None:
            if self.stock > mu.size:
                raise ValueError(f"stock {self.stock} out of range for n={mu.size}")
            mu0 = float(mu[self.stock - 1])
            self._long_scale = self.q / mu0**self.q
            self.initial_capital = self._long_scale - 1.0
            if self.initial_capital <= 0:
                raise ValueError(
                    f"{self.name}: setup value {self.initial_capital:g} is not positive"
                )
        else:
            ratio_inc = float(np.sum(self._prev_mirror * mu / self._prev_mu))
            self._ratio *= ratio_inc
        mirror = self._mirror(mu)
        denom = self._long_scale - self._ratio
        if denom <= 0:
            raise ValueError(f"{self.name}: package wealth hit zero at t={t:g}")
        out = (self._long_scale * mu - self._ratio * mirror) / denom
        self._prev_mu = mu
        self._prev_mirror = mirror
        return out


def short_term_q(eps: float, delta: float, horizon: float, mu_stock_0: float) -> float:
    """Smallest mirror exponent with a guaranteed short-horizon excess:
    q = 1 + 2 log(1/mu_k(0)) / (eps delta^2 T)."""
    if eps <= 0 or delta <= 0 or horizon <= 0:
        raise ValueError("eps, delta and horizon must all be positive")
    if not 0 < mu_stock_0 < 1:
        raise ValueError(f"mu_stock_0 must lie in (0, 1), got {mu_stock_0}")
    return 1.0 + 2.0 * math.log(1.0 / mu_stock_0) / (eps * delta**2 * horizon)


class FgpRule(PortfolioRule):
    """Stateless rule from a generator config (name- or rank-based)."""

    def __init__(self, gen_cfg: dict, zero_adjusted: bool = False):
        self.gen = generator_from_config(gen_cfg)
        self.zero_adjusted = zero_adjusted
        self.name = f"fgp({self.gen.name})"

    def _weights(self, t: float, mu: np.ndarray) -> np.ndarray:
        if self.gen.ranked:
            return rank_fgp_weights(self.gen, mu)
        return fgp_weights(self.gen, mu)


def make_rule(config: dict) -> PortfolioRule:
    """Build a rule from a JSON-style config: {"rule": name, ...params}.

    Unknown keys are rejected.  All rules accept "zero_adjusted": true, which
    restricts the map to the positive support and renormalises.
    """
    if not isinstance(config, dict):
        raise ValueError(f"rule config must be an object, got {type(config).__name__}")
    cfg = dict(config)
    kind = cfg.pop("rule", None)
    if kind is None:
        raise ValueError("rule config needs a 'rule' key")
    zero_adjusted = bool(cfg.pop("zero_adjusted", False))

    def no_extras(*allowed):
        unknown = set(cfg) - set(allowed)
        if unknown:
            raise ValueError(f"unknown parameters for rule {kind!r}: {sorted(unknown)}")

    if kind == "market":
        no_extras()
        return StaticRule("market", lambda mu: mu.copy(), zero_adjusted)
    if kind == "equal":
        no_extras()
        return StaticRule("equal", lambda mu: dwp_weights(mu, 0.0), zero_adjusted)
    if kind == "dwp":
        no_extras("p")
        p = float(cfg["p"])
        return StaticRule(f"dwp(p={p:g})", lambda mu: dwp_weights(mu, p), zero_adjusted)
    if kind == "ewp":
        no_extras("c")
        c = float(cfg["c"])
        return StaticRule(f"ewp(c={c:g})", lambda mu: ewp_weights(mu, c), zero_adjusted)
    if kind == "fk05_mirror":
        no_extras("p")
        p = float(cfg["p"])
        return StaticRule(f"fk05_mirror(p={p:g})", lambda mu: fk05_mirror_dwp(mu, p),
                          zero_adjusted)
    if kind == "gamma_shape":
        no_extras("k", "theta")
        k, theta = float(cfg["k"]), float(cfg["theta"])
        return StaticRule(
            f"gamma_shape(k={k:g},theta={theta:g})",
            lambda mu: gamma_shape_weights(mu, k, theta), zero_adjusted,
        )
    if kind == "rank_dwp":
        no_extras("r", "m", "side")
        r, m = float(cfg["r"]), int(cfg["m"])
        side = cfg.get("side", "top")
        return StaticRule(
            f"rank_dwp(r={r:g},m={m},side={side})",
            lambda mu: rank_dwp_weights(mu, r, m, side), zero_adjusted,
        )
    if kind == "large_stock":
        no_extras("m")
        m = int(cfg["m"])
        return StaticRule(f"large_stock(m={m})",
                          lambda mu: rank_dwp_weights(mu, 1.0, m, "top"), zero_adjusted)
    if kind == "small_stock":
        no_extras("m")
        m = int(cfg["m"])
        return StaticRule(f"small_stock(m={m})",
                          lambda mu: rank_dwp_weights(mu, 1.0, m, "bottom"), zero_adjusted)
    if kind == "fgp":
        no_extras("generator")
        return FgpRule(cfg["generator"], zero_adjusted)
    if kind == "mirror":
        no_extras("q", "of")
        return MirrorRule(make_rule(cfg["of"]), float(cfg["q"]))
    if kind == "stopped_dwp":
        no_extras("p", "delta", "variant")
        return StoppedDwpRule(float(cfg["p"]), float(cfg["delta"]),
                              cfg.get("variant", "hat"), zero_adjusted)
    if kind == "bf08":
        no_extras("T", "c")
        return Bf08Rule(float(cfg["T"]), cfg.get("c"))
    if kind == "short_term_arbitrage":
        no_extras("q", "stock")
        return ShortTermArbitrageRule(float(cfg["q"]), int(cfg.get("stock", 1)))
    raise ValueError(f"unknown rule kind {kind!r}")
