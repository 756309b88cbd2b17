"""Pure numpy stepping kernels, the fallback backend.

Same call signatures and semantics as the compiled module `_kernels`: each
function advances a batch of paths on the log-cap scale and returns the full
log-cap array of shape (batch, steps + 1, n).  Brownian increments are taken
as input so both backends consume identical draws.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _step_finite_check(x: np.ndarray, step: int):
    if not np.all(np.isfinite(x)):
        b, i = np.argwhere(~np.isfinite(x))[0]
        raise FloatingPointError(
            f"non-finite log cap at step {step} (batch row {b}, stock {i + 1})"
        )


def _weights_from_logcaps(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    ex = np.exp(x - m)
    return ex / ex.sum(axis=1, keepdims=True)


def gen_vsm_paths(logx0, dw, dt, alphas, sigma, beta, k_const, mu_floor):
    """Volatility-stabilized family: dlogX_i = a_i K^2/(2 mu_i^(2b)) dt + s K mu_i^(-b) dW_i.

    Weights are kept at or above mu_floor by raising undershooting log caps
    back to the floor after each step (the continuous model keeps weights
    positive; the explicit scheme cannot track excursions below ~dt, where the
    per-step noise sqrt(dt/mu) exceeds one).  Floor events are counted per
    path.  Coefficients are evaluated at the floored weights, so the realized
    market statistics keep their state-independent values.
    """
    B, S, n = dw.shape
    out = np.empty((B, S + 1, n))
    out[:, 0] = logx0
    clamps = np.zeros(B, dtype=np.int64)
    x = np.array(logx0, dtype=float)
    kk = k_const * k_const
    sk = sigma * k_const
    log_floor = np.log(mu_floor)
    for s in range(S):
        mu = np.maximum(_weights_from_logcaps(x), mu_floor)
        powb = mu ** (-beta)
        x = x + (0.5 * kk * dt) * alphas * powb * powb + sk * powb * dw[:, s]
        _step_finite_check(x, s + 1)
        m = x.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
        low = x < lse + log_floor
        if low.any():
            clamps += low.sum(axis=1)
            x = np.where(low, lse + log_floor, x)
        out[:, s + 1] = x
    return out, clamps


def hybrid_atlas_paths(logx0, dw, dt, gamma, gammas, gs, sigmas, rho):
    """Rank-and-name drift model: dY_i = (g0 + g_i + g_(rank)) dt + sum_k rho_ik dW_k + s_(rank) dW_i.

    Rank 1 is the largest cap; exact ties give the lower index the better rank.
    """
    B, S, n = dw.shape
    out = np.empty((B, S + 1, n))
    out[:, 0] = logx0
    y = np.array(logx0, dtype=float)
    base = gamma + gammas
    has_rho = rho is not None and np.any(rho)
    for s in range(S):
        order = np.argsort(-y, axis=1, kind="stable")
        rank_of = np.argsort(order, axis=1)
        inc = (base + gs[rank_of]) * dt + sigmas[rank_of] * dw[:, s]
        if has_rho:
            inc = inc + dw[:, s] @ rho.T
        y = y + inc
        _step_finite_check(y, s + 1)
        out[:, s + 1] = y
    return out


def fkk_paths(logx0, dw, dt, delta, lg_floor, sigma, gs, M):
    """Diverse model: leaders are repelled with drift -(M/delta)/log((1-delta)/mu_i).

    Steps where a leader's weight reaches 1 - delta clamp the log argument at
    lg_floor and are counted per path as diversity breaches.
    """
    B, S, n = dw.shape
    out = np.empty((B, S + 1, n))
    out[:, 0] = logx0
    breaches = np.zeros(B, dtype=np.int64)
    x = np.array(logx0, dtype=float)
    for s in range(S):
        m = x.max(axis=1, keepdims=True)
        leader = x == m
        mu = _weights_from_logcaps(x)
        lg = np.log((1.0 - delta) / np.where(mu > 0, mu, 1.0))
        low = leader & (lg < lg_floor)
        if low.any():
            breaches += low.sum(axis=1)
            lg = np.where(low, lg_floor, lg)
        drift = np.where(leader, -(M / delta) / lg, gs)
        x = x + drift * dt + dw[:, s] @ sigma.T
        _step_finite_check(x, s + 1)
        out[:, s + 1] = x
    return out, breaches
