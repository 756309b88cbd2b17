"""Market models and path simulation.

A market is n positive capitalization processes driven by d >= n Brownian
motions.  Coefficients are specified on the log scale: drift(t, X) returns the
log-drift rate vector (growth rates), vol(t, X) the (n, d) volatility matrix
of the log caps.  Stepping is Euler-Maruyama on log caps, which keeps caps
positive by construction; constant-coefficient specs may also use the exact
log-GBM scheme.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .kernels import get_backend

# Weight floor used inside volatility-stabilized coefficient evaluation.
MU_CLAMP_FLOOR = 1e-12
# Floor for log((1-delta)/mu) once a leader reaches the diversity boundary.
FKK_LOG_FLOOR = 1e-8

_SCHEMES = ("euler-log", "exact-log-gbm")
_BATCH = 128


@dataclass
class SimGrid:
    """Uniform time grid: horizon T > 0 split into `steps` Euler steps."""

    horizon: float
    steps: int
    scheme: str = "euler-log"

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {_SCHEMES}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass
class ItoMarketSpec:
    """Coefficient functions of an n-stock Ito market.

    drift(t, X) -> (n,) log-drift rates; vol(t, X) -> (n, d) log volatility.
    `kernel` tags specs whose stepping has a dedicated batched kernel;
    `constant` holds (gamma, sigma) when the coefficients are state-independent,
    enabling the exact log-GBM scheme.
    """

    n: int
    d: int
    x0: np.ndarray
    drift: Callable[[float, np.ndarray], np.ndarray]
    vol: Callable[[float, np.ndarray], np.ndarray]
    label: str
    kernel: Optional[tuple] = None
    constant: Optional[tuple] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 stocks, got n={self.n}")
        if self.d < self.n:
            raise ValueError(f"need d >= n Brownian factors, got d={self.d} < n={self.n}")
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.n,):
            raise ValueError(f"x0 must have shape ({self.n},), got {self.x0.shape}")
        if not np.all(np.isfinite(self.x0)) or np.any(self.x0 <= 0):
            raise ValueError("initial caps must be finite and strictly positive")


@dataclass
class MarketPath:
    """One realized cap trajectory on a strictly increasing time grid."""

    times: np.ndarray
    caps: np.ndarray
    spec_label: str = ""
    seed: Optional[int] = None
    path_index: int = 0
    scheme: str = "euler-log"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.caps = np.asarray(self.caps, dtype=float)
        if self.times.ndim != 1 or self.caps.ndim != 2 or self.caps.shape[0] != self.times.size:
            raise ValueError("caps must be (len(times), n)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(self.caps)) or np.any(self.caps < 0):
            raise ValueError("caps must be finite and nonnegative")
        if np.any(self.caps[0] <= 0):
            raise ValueError("initial caps must be strictly positive")
        dead = self.caps == 0.0
        if np.any(dead[:-1] & ~dead[1:]):
            t_bad, i_bad = np.argwhere(dead[:-1] & ~dead[1:])[0]
            raise ValueError(
                f"stock {i_bad + 1} returns from zero cap after t={self.times[t_bad]:g}; "
                "zero is absorbing"
            )

    @property
    def n(self) -> int:
        return self.caps.shape[1]

    def weights(self) -> np.ndarray:
        return market_weights(self)


def market_weights(path: MarketPath) -> np.ndarray:
    """Weight rows mu_i = X_i / sum_j X_j; each row sums to one exactly in the
    order-independent sense (math.fsum of a row returns 1.0).

    One entry per row absorbs the rounding residue: the largest entry not
    above one half, so the rest sums to at least 1/2 and the complement is
    computed without rounding.  Exact zeros (bankrupt stocks) are preserved.
    """
    totals = path.caps.sum(axis=1)
    if np.any(totals <= 0):
        t_bad = int(np.flatnonzero(totals <= 0)[0])
        raise ValueError(f"all caps are zero at t={path.times[t_bad]:g}; weights undefined")
    w = path.caps / totals[:, None]
    picks = np.argmax(np.where(w <= 0.5, w, -np.inf), axis=1)
    for r in range(w.shape[0]):
        row = w[r]
        j = int(picks[r])
        keep = row[j]
        row[j] = 0.0
        resid = 1.0 - math.fsum(row)
        if resid <= 0.0 and keep > 0.0:
            # degenerately skewed row; fall back to the dominant entry
            row[j] = keep
            j = int(np.argmax(row))
            row[j] = 0.0
            resid = 1.0 - math.fsum(row)
        row[j] = resid
    return w


# ---------------------------------------------------------------------------
# spec builders


def gbm_spec(gammas, sigma, x0, label: str = "") -> ItoMarketSpec:
    """Constant-coefficient market: dlogX = gamma dt + sigma dW."""
    gammas = np.asarray(gammas, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    n = gammas.size
    if sigma.ndim != 2 or sigma.shape[0] != n:
        raise ValueError(f"sigma must be (n, d) with n={n}, got {sigma.shape}")
    d = sigma.shape[1]
    if d < n:
        raise ValueError(f"need d >= n, got d={d} < n={n}")

    def drift(t, x):
        return gammas

    def vol(t, x):
        return sigma

    return ItoMarketSpec(
        n=n, d=d, x0=x0, drift=drift, vol=vol,
        label=label or f"gbm(n={n})",
        constant=(gammas, sigma),
    )


def gen_vsm_spec(
    n: int,
    alphas,
    sigma: float = 1.0,
    beta: float = 0.5,
    k: Optional[Callable | float] = None,
    x0=None,
    label: str = "",
) -> ItoMarketSpec:
    """Generalized volatility-stabilized market.

    dlogX_i = alpha_i K(X)^2 / (2 mu_i^(2 beta)) dt + sigma K(X) mu_i^(-beta) dW_i.
    `k` may be None (K identically 1), a positive constant, or a callable on the
    cap vector; only constant K admits the batched kernel.
    """
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (n,)).copy()
    if np.any(alphas < 0):
        raise ValueError("alphas must be nonnegative")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if x0 is None:
        x0 = np.ones(n)
    k_const: Optional[float]
    if k is None:
        k_const = 1.0
    elif isinstance(k, (int, float)):
        if k <= 0:
            raise ValueError(f"constant K must be positive, got {k}")
        k_const = float(k)
    else:
        k_const = None

    def _kval(x) -> float:
        if k_const is not None:
            return k_const
        val = float(k(x))
        if not (val > 0 and math.isfinite(val)):
            raise ValueError(f"K(X) must be positive and finite, got {val}")
        return val

    def _mu(x):
        mu = x / x.sum()
        return np.maximum(mu, MU_CLAMP_FLOOR)

    def drift(t, x):
        mu = _mu(x)
        kv = _kval(x)
        return alphas * kv * kv / (2.0 * mu ** (2.0 * beta))

    def vol(t, x):
        mu = _mu(x)
        return np.diag(sigma * _kval(x) * mu ** (-beta))

    kernel = None
    if k_const is not None:
        kernel = ("gen_vsm", {
            "alphas": alphas, "sigma": float(sigma), "beta": float(beta),
            "k_const": k_const, "mu_floor": MU_CLAMP_FLOOR,
        })
    return ItoMarketSpec(
        n=n, d=n, x0=x0, drift=drift, vol=vol,
        label=label or f"gen_vsm(n={n},sigma={sigma:g},beta={beta:g})",
        kernel=kernel,
    )


def vsm_spec(n: int, alpha: float, x0=None) -> ItoMarketSpec:
    """Volatility-stabilized market: dlogX_i = alpha/(2 mu_i) dt + mu_i^(-1/2) dW_i.

    The reduction of gen_vsm_spec at alpha_i = alpha, sigma = 1, beta = 1/2,
    K = 1; coefficients are shared with the general builder so the reduction
    is exact.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return gen_vsm_spec(
        n, np.full(n, float(alpha)), sigma=1.0, beta=0.5, k=None, x0=x0,
        label=f"vsm(n={n},alpha={alpha:g})",
    )


def hybrid_atlas_spec(gamma: float, gammas, gs, sigmas, rho=None, x0=None) -> ItoMarketSpec:
    """Rank-and-name based model on log caps Y_i = log X_i:

    dY_i = (gamma + gamma_i + g_(rank of i)) dt + sum_k rho_ik dW_k + sigma_(rank of i) dW_i.

    Rank 1 is the largest cap; exact ties rank the lower index first.  The
    classic single-leader special case is gammas = 0, rho = 0, gamma = g > 0,
    gs = (-g, ..., -g, (n-1) g).
    """
    gammas = np.asarray(gammas, dtype=float)
    gs = np.asarray(gs, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    n = gammas.size
    if gs.shape != (n,) or sigmas.shape != (n,):
        raise ValueError("gammas, gs and sigmas must all have length n")
    if np.any(sigmas <= 0):
        raise ValueError("rank volatilities must be strictly positive")
    if rho is not None:
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (n, n):
            raise ValueError(f"rho must be (n, n), got {rho.shape}")
    if x0 is None:
        x0 = np.ones(n)

    def _rank_of(x):
        order = np.argsort(-np.asarray(x, dtype=float), kind="stable")
        return np.argsort(order)

    def drift(t, x):
        return gamma + gammas + gs[_rank_of(x)]

    def vol(t, x):
        v = np.diag(sigmas[_rank_of(x)])
        if rho is not None:
            v = v + rho
        return v

    return ItoMarketSpec(
        n=n, d=n, x0=x0, drift=drift, vol=vol,
        label=f"hybrid_atlas(n={n})",
        kernel=("hybrid_atlas", {
            "gamma": float(gamma), "gammas": gammas, "gs": gs,
            "sigmas": sigmas, "rho": rho,
        }),
    )


def atlas_spec(n: int, g: float, sigma: float = 1.0, x0=None) -> ItoMarketSpec:
    """Single-leader special case of the hybrid model."""
    if g <= 0:
        raise ValueError(f"atlas growth must be positive, got {g}")
    gs = np.full(n, -g)
    gs[-1] = (n - 1) * g
    spec = hybrid_atlas_spec(g, np.zeros(n), gs, np.full(n, sigma), rho=None, x0=x0)
    spec.label = f"atlas(n={n},g={g:g})"
    return spec


def fkk_diverse_spec(n: int, delta: float, sigma, gs, big_m: float, x0=None) -> ItoMarketSpec:
    """Diverse market with a repelled leader.

    Non-leaders grow at g_i >= 0; every stock at the maximum cap gets drift
    -(M/delta) / log((1-delta) X_total / X_i).  Requires delta in (1/2, 1),
    nondegenerate constant sigma, and an initial state with mu_(1) < 1 - delta.
    """
    if not 0.5 < delta < 1.0:
        raise ValueError(f"delta must lie in (1/2, 1), got {delta}")
    if big_m <= 0:
        raise ValueError(f"M must be positive, got {big_m}")
    sigma = np.asarray(sigma, dtype=float)
    gs = np.asarray(gs, dtype=float)
    if sigma.shape != (n, n):
        raise ValueError(f"sigma must be (n, n), got {sigma.shape}")
    if gs.shape != (n,):
        raise ValueError(f"gs must have length {n}")
    if np.any(gs < 0):
        raise ValueError("non-leader growth rates must be nonnegative")
    eig_min = float(np.linalg.eigvalsh(sigma @ sigma.T).min())
    if eig_min <= 0:
        raise ValueError(
            f"sigma sigma' must be nondegenerate; smallest eigenvalue {eig_min:.3e}"
        )
    if x0 is None:
        x0 = np.ones(n)
    x0 = np.asarray(x0, dtype=float)
    mu_top = x0.max() / x0.sum()
    if mu_top >= 1.0 - delta:
        raise ValueError(
            f"initial top weight {mu_top:.6g} violates diversity (must be < {1 - delta:g})"
        )

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        top = x.max()
        mu = x / x.sum()
        lead = x == top
        lg = np.log((1.0 - delta) / np.where(mu > 0, mu, 1.0))
        lg = np.maximum(lg, FKK_LOG_FLOOR)
        return np.where(lead, -(big_m / delta) / lg, gs)

    def vol(t, x):
        return sigma

    return ItoMarketSpec(
        n=n, d=n, x0=x0, drift=drift, vol=vol,
        label=f"fkk_diverse(n={n},delta={delta:g})",
        kernel=("fkk", {
            "delta": float(delta), "lg_floor": FKK_LOG_FLOOR,
            "sigma": sigma, "gs": gs, "big_m": float(big_m),
        }),
    )


# ---------------------------------------------------------------------------
# simulation


def _path_increments(seed: int, path_index: int, steps: int, d: int, dt: float) -> np.ndarray:
    """Brownian increments for one path, derived only from (seed, path index)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path_index,)))
    return math.sqrt(dt) * rng.standard_normal((steps, d))


def _simulate_batch(spec: ItoMarketSpec, grid: SimGrid, indices, seed: int, backend):
    dt = grid.dt
    dw = np.stack([_path_increments(seed, k, grid.steps, spec.d, dt) for k in indices])
    logx0 = np.tile(np.log(spec.x0), (len(indices), 1))
    diagnostics = [dict() for _ in indices]

    if grid.scheme == "exact-log-gbm":
        gammas, sigma = spec.constant
        inc = gammas * dt + dw @ sigma.T
        logx = np.concatenate(
            [logx0[:, None, :], logx0[:, None, :] + np.cumsum(inc, axis=1)], axis=1
        )
    elif spec.kernel is not None:
        family, p = spec.kernel
        if family == "gen_vsm":
            # the scheme cannot resolve weights below ~dt (per-step log noise
            # sqrt(dt/mu) exceeds 1 there), so the weight floor scales with dt
            floor = max(p["mu_floor"], min(dt, 0.5 / spec.n))
            logx, clamps = backend.gen_vsm_paths(
                logx0, dw, dt, p["alphas"], p["sigma"], p["beta"],
                p["k_const"], floor,
            )
            for j, c in enumerate(clamps):
                if c:
                    diagnostics[j]["mu_clamps"] = int(c)
        elif family == "hybrid_atlas":
            logx = backend.hybrid_atlas_paths(
                logx0, dw, dt, p["gamma"], p["gammas"], p["gs"], p["sigmas"], p["rho"],
            )
        elif family == "fkk":
            # cap the leader repulsion so one step moves log caps by O(M/delta)
            lg_floor = max(p["lg_floor"], dt)
            logx, breaches = backend.fkk_paths(
                logx0, dw, dt, p["delta"], lg_floor, p["sigma"], p["gs"], p["big_m"],
            )
            for j, c in enumerate(breaches):
                if c:
                    diagnostics[j]["diversity_breaches"] = int(c)
        else:  # pragma: no cover
            raise ValueError(f"unknown kernel family {family!r}")
    else:
        # generic route: python-level coefficient callables, one path at a time
        logx = np.empty((len(indices), grid.steps + 1, spec.n))
        times = grid.times()
        for j in range(len(indices)):
            y = logx0[j].copy()
            logx[j, 0] = y
            for s in range(grid.steps):
                x = np.exp(y)
                gam = np.asarray(spec.drift(times[s], x), dtype=float)
                sig = np.asarray(spec.vol(times[s], x), dtype=float)
                y = y + gam * dt + sig @ dw[j, s]
                if not np.all(np.isfinite(y)):
                    i_bad = int(np.flatnonzero(~np.isfinite(y))[0])
                    raise FloatingPointError(
                        f"non-finite log cap at step {s + 1} (path {indices[j]}, "
                        f"stock {i_bad + 1}) for {spec.label}"
                    )
                logx[j, s + 1] = y
    return logx, diagnostics


def simulate_paths(
    spec: ItoMarketSpec,
    grid: SimGrid,
    n_paths: int,
    seed: int,
    backend: str = "auto",
) -> list[MarketPath]:
    """Simulate independent paths; path k depends only on (seed, k).

    Paths are stepped in batches.  SPT_THREADS > 1 runs batches on a thread
    pool (the compiled kernels release the GIL); the result order is by path
    index regardless.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if grid.scheme == "exact-log-gbm" and spec.constant is None:
        raise ValueError(
            f"{spec.label} has state-dependent coefficients; "
            "the exact-log-gbm scheme requires constant coefficients"
        )
    impl = get_backend(backend)
    times = grid.times()
    batches = [range(lo, min(lo + _BATCH, n_paths)) for lo in range(0, n_paths, _BATCH)]

    n_threads = int(os.environ.get("SPT_THREADS", "1") or "1")
    if n_threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(
                lambda ix: _simulate_batch(spec, grid, ix, seed, impl), batches
            ))
    else:
        results = [_simulate_batch(spec, grid, ix, seed, impl) for ix in batches]

    paths = []
    for indices, (logx, diags) in zip(batches, results):
        for j, k in enumerate(indices):
            paths.append(MarketPath(
                times=times.copy(),
                caps=np.exp(logx[j]),
                spec_label=spec.label,
                seed=seed,
                path_index=k,
                scheme=grid.scheme,
                diagnostics=diags[j],
            ))
    return paths


# ---------------------------------------------------------------------------
# serialization


def save_path_csv(path: MarketPath, csv_path) -> None:
    """Write `t,stock_1,...,stock_n` rows plus a JSON metadata sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"stock_{i + 1}" for i in range(path.n)])
        for t, row in zip(path.times, path.caps):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    sidecar = {
        "spec_label": path.spec_label,
        "seed": path.seed,
        "path_index": path.path_index,
        "n": path.n,
        "d": path.n,
        "scheme": path.scheme,
    }
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_path_csv(csv_path) -> MarketPath:
    """Read a path written by save_path_csv; the sidecar is optional."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{csv_path}: expected header starting with 't'")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    meta = {}
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        with open(sidecar) as fh:
            meta = json.load(fh)
    return MarketPath(
        times=data[:, 0],
        caps=data[:, 1:],
        spec_label=meta.get("spec_label", csv_path.stem),
        seed=meta.get("seed"),
        path_index=meta.get("path_index", 0),
        scheme=meta.get("scheme", "euler-log"),
    )
