"""Portfolio generating functions with exact gradient/Hessian calculus.

A generator is a positive C^2 function of the weight row.  Name-based
generators take the row in name order; rank-based generators (``ranked=True``)
take the row sorted descending and are consumed by the rank weight map and
the rank decomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gammafn import gamma_q


@dataclass(frozen=True)
class Generator:
    """Positive twice-differentiable function on (a neighbourhood of) the simplex.

    value/grad/hess are exact closed forms.  ``boundary_ok`` declares that the
    value extends continuously to rows with zero entries; gradient entries at
    zero coordinates are then unused by the weight maps (they mask them).
    ``sensitive_boundaries`` lists rank boundaries k where the gradient of a
    rank-based generator jumps across a tie u_(k) = u_(k+1); None means every
    boundary is treated as sensitive.
    """

    name: str
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    boundary_ok: bool = False
    ranked: bool = False
    sensitive_boundaries: Optional[tuple] = field(default=None)


def constant_generator(c: float) -> Generator:
    if c <= 0:
        raise ValueError(f"constant generator must be positive, got {c}")

    def value(x):
        return float(c)

    def grad(x):
        return np.zeros_like(np.asarray(x, float))

    def hess(x):
        n = np.asarray(x).size
        return np.zeros((n, n))

    return Generator(f"constant({c:g})", value, grad, hess, boundary_ok=True)


def power_generator(p: float) -> Generator:
    """G_p(x) = (sum x_i^p)^(1/p), the diversity-weighted generator.

    p may be negative; p = 0 is rejected (use entropy or a constant instead).
    Extends to the boundary only for p in (0, 1].
    """
    if p == 0:
        raise ValueError("power generator requires p != 0")

    def value(x):
        x = np.asarray(x, float)
        return float(np.sum(x**p) ** (1.0 / p))

    def grad(x):
        x = np.asarray(x, float)
        g = np.sum(x**p) ** (1.0 / p)
        return g ** (1.0 - p) * x ** (p - 1.0)

    def hess(x):
        x = np.asarray(x, float)
        g = np.sum(x**p) ** (1.0 / p)
        xp1 = x ** (p - 1.0)
        out = (1.0 - p) * g ** (1.0 - 2.0 * p) * np.outer(xp1, xp1)
        # diagonal picks up the second derivative of x_i^p itself
        out[np.diag_indices_from(out)] = (
            (1.0 - p) * g ** (1.0 - 2.0 * p) * x ** (p - 2.0) * (x**p - g**p)
        )
        return out

    return Generator(f"power(p={p:g})", value, grad, hess, boundary_ok=0 < p <= 1)


def entropy_generator(c: float) -> Generator:
    """H_c(x) = c - sum x_i log x_i, the shifted entropy generator."""
    if c < 0:
        raise ValueError(f"entropy generator requires c >= 0, got {c}")

    def value(x):
        x = np.asarray(x, float)
        pos = x > 0
        return float(c - np.sum(x[pos] * np.log(x[pos])))

    def grad(x):
        x = np.asarray(x, float)
        return -(1.0 + np.log(x))

    def hess(x):
        x = np.asarray(x, float)
        return np.diag(-1.0 / x)

    return Generator(f"entropy(c={c:g})", value, grad, hess, boundary_ok=True)


def incomplete_gamma_generator(c: float) -> Generator:
    """G(x) = sum_i Q(c+1, -log x_i) with Q the regularized upper incomplete gamma.

    Equals the sum-of-incomplete-gamma generator up to the constant factor
    1/Gamma(c+1), which changes neither the weight map nor the drift.  Defined
    for rows in (0, 1]^n; the value extends by 0 at zero coordinates.
    """
    if c <= 0:
        raise ValueError(f"incomplete gamma generator requires c > 0, got {c}")
    lg = math.lgamma(c + 1.0)

    def _f(y: float) -> float:
        if y <= 0.0:
            return 0.0
        if y >= 1.0:
            return 1.0
        return gamma_q(c + 1.0, -math.log(y))

    def _fprime(y: float) -> float:
        # f'(y) = (-log y)^c / Gamma(c+1)
        if y <= 0.0 or y >= 1.0:
            return 0.0 if y >= 1.0 else math.inf
        return math.exp(c * math.log(-math.log(y)) - lg)

    def _fsecond(y: float) -> float:
        # f''(y) = -(c/y) (-log y)^(c-1) / Gamma(c+1)
        if y <= 0.0 or y >= 1.0:
            return 0.0 if y >= 1.0 else -math.inf
        return -(c / y) * math.exp((c - 1.0) * math.log(-math.log(y)) - lg)

    def value(x):
        return float(sum(_f(float(v)) for v in np.asarray(x, float)))

    def grad(x):
        return np.array([_fprime(float(v)) for v in np.asarray(x, float)])

    def hess(x):
        return np.diag([_fsecond(float(v)) for v in np.asarray(x, float)])

    return Generator(
        f"incomplete_gamma(c={c:g})", value, grad, hess, boundary_ok=True
    )


def large_stock_generator(m: int) -> Generator:
    """Rank generator u -> u_(1) + ... + u_(m), the top-m cap share."""
    if m < 1:
        raise ValueError(f"large stock generator requires m >= 1, got {m}")

    def value(u):
        u = np.asarray(u, float)
        return float(np.sum(u[:m]))

    def grad(u):
        u = np.asarray(u, float)
        out = np.zeros_like(u)
        out[:m] = 1.0
        return out

    def hess(u):
        n = np.asarray(u).size
        return np.zeros((n, n))

    return Generator(
        f"large_stock(m={m})",
        value,
        grad,
        hess,
        boundary_ok=True,
        ranked=True,
        sensitive_boundaries=(m,),
    )


def rank_power_generator(r: float, m: int, side: str = "top") -> Generator:
    """Rank generator (sum over selected ranks of u_(k)^r)^(1/r).

    side="top" selects ranks 1..m, side="bottom" selects ranks m..n.
    """
    if r == 0:
        raise ValueError("rank power generator requires r != 0")
    if m < 1:
        raise ValueError(f"rank power generator requires m >= 1, got {m}")
    if side not in ("top", "bottom"):
        raise ValueError(f"side must be 'top' or 'bottom', got {side!r}")

    def _slice(n: int):
        return slice(0, m) if side == "top" else slice(m - 1, n)

    def value(u):
        u = np.asarray(u, float)
        sel = u[_slice(u.size)]
        return float(np.sum(sel**r) ** (1.0 / r))

    def grad(u):
        u = np.asarray(u, float)
        sl = _slice(u.size)
        g = np.sum(u[sl] ** r) ** (1.0 / r)
        out = np.zeros_like(u)
        out[sl] = g ** (1.0 - r) * u[sl] ** (r - 1.0)
        return out

    def hess(u):
        u = np.asarray(u, float)
        sl = _slice(u.size)
        g = np.sum(u[sl] ** r) ** (1.0 / r)
        out = np.zeros((u.size, u.size))
        xr1 = np.zeros_like(u)
        xr1[sl] = u[sl] ** (r - 1.0)
        out[:] = (1.0 - r) * g ** (1.0 - 2.0 * r) * np.outer(xr1, xr1)
        diag = np.zeros_like(u)
        diag[sl] = (1.0 - r) * g ** (1.0 - 2.0 * r) * u[sl] ** (r - 2.0) * (u[sl] ** r - g**r)
        mask = np.zeros_like(u)
        mask[sl] = 1.0
        out *= np.outer(mask, mask)
        out[np.diag_indices_from(out)] = diag
        return out

    boundaries = (m,) if side == "top" else ((m - 1,) if m > 1 else ())
    return Generator(
        f"rank_power(r={r:g},m={m},side={side})",
        value,
        grad,
        hess,
        boundary_ok=r > 0,
        ranked=True,
        sensitive_boundaries=boundaries,
    )


def _require_parts(kind: str, parts: Sequence[Generator], lo: int, hi: Optional[int]):
    if len(parts) < lo or (hi is not None and len(parts) > hi):
        want = f"exactly {lo}" if hi == lo else f"at least {lo}"
        raise ValueError(f"combinator {kind!r} takes {want} generator(s), got {len(parts)}")
    ranked = {g.ranked for g in parts}
    if len(ranked) > 1:
        raise ValueError("cannot combine rank-based and name-based generators")


def _merge_boundaries(parts: Sequence[Generator]):
    bs = set()
    for g in parts:
        if g.sensitive_boundaries is None:
            return None
        bs.update(g.sensitive_boundaries)
    return tuple(sorted(bs))


def combine_generators(kind: str, parts: Sequence[Generator], **params) -> Generator:
    """Compose generators: affine(a, b), power(q), exp, product, sum.

    The returned generator's value/grad/hess are the exact calculus of the
    composition; positivity of the composed value is checked at evaluation.
    """
    parts = list(parts)

    if kind == "affine":
        _require_parts(kind, parts, 1, 1)
        a = float(params.pop("a"))
        b = float(params.pop("b"))
        if params:
            raise ValueError(f"unknown parameters for affine: {sorted(params)}")
        (g,) = parts
        name = f"affine(a={a:g},b={b:g},{g.name})"

        def value(x):
            v = a + b * g.value(x)
            if v <= 0:
                raise ValueError(f"{name} is non-positive ({v:g}) at the evaluated row")
            return v

        def grad(x):
            return b * g.grad(x)

        def hess(x):
            return b * g.hess(x)

        return Generator(name, value, grad, hess, g.boundary_ok, g.ranked, g.sensitive_boundaries)

    if kind == "power":
        _require_parts(kind, parts, 1, 1)
        q = float(params.pop("q"))
        if params:
            raise ValueError(f"unknown parameters for power: {sorted(params)}")
        (g,) = parts
        name = f"power(q={q:g},{g.name})"

        def value(x):
            v = g.value(x)
            if v <= 0:
                raise ValueError(f"{name}: inner generator non-positive at the evaluated row")
            return v**q

        def grad(x):
            v = g.value(x)
            return q * v ** (q - 1.0) * g.grad(x)

        def hess(x):
            v = g.value(x)
            gr = g.grad(x)
            return q * (q - 1.0) * v ** (q - 2.0) * np.outer(gr, gr) + q * v ** (q - 1.0) * g.hess(x)

        return Generator(name, value, grad, hess, g.boundary_ok, g.ranked, g.sensitive_boundaries)

    if kind == "exp":
        _require_parts(kind, parts, 1, 1)
        if params:
            raise ValueError(f"unknown parameters for exp: {sorted(params)}")
        (g,) = parts
        name = f"exp({g.name})"

        def value(x):
            return math.exp(g.value(x))

        def grad(x):
            return math.exp(g.value(x)) * g.grad(x)

        def hess(x):
            gr = g.grad(x)
            return math.exp(g.value(x)) * (np.outer(gr, gr) + g.hess(x))

        return Generator(name, value, grad, hess, g.boundary_ok, g.ranked, g.sensitive_boundaries)

    if kind == "product":
        _require_parts(kind, parts, 2, None)
        if params:
            raise ValueError(f"unknown parameters for product: {sorted(params)}")
        name = "product(" + ",".join(g.name for g in parts) + ")"

        def value(x):
            v = 1.0
            for g in parts:
                vg = g.value(x)
                if vg <= 0:
                    raise ValueError(f"{name}: factor {g.name} non-positive at the evaluated row")
                v *= vg
            return v

        def grad(x):
            v = value(x)
            s = np.zeros(np.asarray(x).size)
            for g in parts:
                s += g.grad(x) / g.value(x)
            return v * s

        def hess(x):
            v = value(x)
            n = np.asarray(x).size
            s = np.zeros(n)
            h = np.zeros((n, n))
            for g in parts:
                lg = g.grad(x) / g.value(x)
                s += lg
                h += g.hess(x) / g.value(x) - np.outer(lg, lg)
            return v * (h + np.outer(s, s))

        return Generator(
            name, value, grad, hess,
            all(g.boundary_ok for g in parts), parts[0].ranked, _merge_boundaries(parts),
        )

    if kind == "sum":
        _require_parts(kind, parts, 2, None)
        if params:
            raise ValueError(f"unknown parameters for sum: {sorted(params)}")
        name = "sum(" + ",".join(g.name for g in parts) + ")"

        def value(x):
            v = sum(g.value(x) for g in parts)
            if v <= 0:
                raise ValueError(f"{name} is non-positive at the evaluated row")
            return v

        def grad(x):
            out = np.zeros(np.asarray(x).size)
            for g in parts:
                out += g.grad(x)
            return out

        def hess(x):
            n = np.asarray(x).size
            out = np.zeros((n, n))
            for g in parts:
                out += g.hess(x)
            return out

        return Generator(
            name, value, grad, hess,
            all(g.boundary_ok for g in parts), parts[0].ranked, _merge_boundaries(parts),
        )

    raise ValueError(f"unknown combinator kind {kind!r}")


def generator_from_config(cfg: dict) -> Generator:
    """Build a generator from a JSON-style config.

    Leaf kinds: {"generator": "constant"|"power"|"entropy"|"incomplete_gamma"
    |"large_stock"|"rank_power", ...params}.  Combinations:
    {"combine": "affine"|"power"|"exp"|"product"|"sum", "of": [subconfigs],
    ...params}.
    """
    if not isinstance(cfg, dict):
        raise ValueError(f"generator config must be an object, got {type(cfg).__name__}")
    cfg = dict(cfg)
    if "combine" in cfg:
        kind = cfg.pop("combine")
        subs = cfg.pop("of", None)
        if not isinstance(subs, list) or not subs:
            raise ValueError("combinator config needs a non-empty 'of' list")
        parts = [generator_from_config(sub) for sub in subs]
        return combine_generators(kind, parts, **cfg)
    kind = cfg.pop("generator", None)
    if kind is None:
        raise ValueError("generator config needs a 'generator' or 'combine' key")
    makers = {
        "constant": (constant_generator, {"c"}),
        "power": (power_generator, {"p"}),
        "entropy": (entropy_generator, {"c"}),
        "incomplete_gamma": (incomplete_gamma_generator, {"c"}),
        "large_stock": (large_stock_generator, {"m"}),
        "rank_power": (rank_power_generator, {"r", "m", "side"}),
    }
    if kind not in makers:
        raise ValueError(f"unknown generator kind {kind!r}; known: {sorted(makers)}")
    maker, allowed = makers[kind]
    unknown = set(cfg) - allowed
    if unknown:
        raise ValueError(f"unknown parameters for generator {kind!r}: {sorted(unknown)}")
    return maker(**cfg)
