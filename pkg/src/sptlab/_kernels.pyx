# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels. Mirrors the API of `_kernels_py`."""
import numpy as np

from libc.math cimport exp, log, pow, sqrt, isfinite

BACKEND = "compiled"


cdef inline void _insertion_rank(double* y, Py_ssize_t* order, Py_ssize_t n) nogil:
    # descending by value, ties keep the lower index first
    cdef Py_ssize_t k, j, idx
    cdef double yk
    for k in range(n):
        order[k] = k
    for k in range(1, n):
        idx = order[k]
        yk = y[idx]
        j = k - 1
        while j >= 0 and y[order[j]] < yk:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = idx


def gen_vsm_paths(double[:, ::1] logx0, double[:, :, ::1] dw, double dt,
                  double[::1] alphas, double sigma, double beta,
                  double k_const, double mu_floor):
    # Post-step, weights below mu_floor are raised back to the floor (the
    # scheme cannot track excursions below ~dt); floor events are counted.
    cdef Py_ssize_t B = dw.shape[0], S = dw.shape[1], n = dw.shape[2]
    out_arr = np.empty((B, S + 1, n))
    clamps_arr = np.zeros(B, dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef long long[::1] clamps = clamps_arr
    ex_arr = np.empty(n)
    cdef double[::1] ex = ex_arr
    cdef Py_ssize_t b, s, i
    cdef double m, tot, mu, powb, val, lse
    cdef double kk = k_const * k_const, sk = sigma * k_const
    cdef double log_floor = log(mu_floor)
    cdef bint half = beta == 0.5
    cdef Py_ssize_t err_s = -1, err_i = -1
    with nogil:
        for b in range(B):
            if err_s >= 0:
                break
            for i in range(n):
                out[b, 0, i] = logx0[b, i]
            for s in range(S):
                if err_s >= 0:
                    break
                m = out[b, s, 0]
                for i in range(1, n):
                    if out[b, s, i] > m:
                        m = out[b, s, i]
                tot = 0.0
                for i in range(n):
                    ex[i] = exp(out[b, s, i] - m)
                    tot += ex[i]
                for i in range(n):
                    mu = ex[i] / tot
                    if mu < mu_floor:
                        mu = mu_floor
                    powb = 1.0 / sqrt(mu) if half else pow(mu, -beta)
                    val = out[b, s, i] + (0.5 * kk * dt) * alphas[i] * powb * powb \
                        + sk * powb * dw[b, s, i]
                    if not isfinite(val):
                        err_s = s + 1
                        err_i = i
                        break
                    out[b, s + 1, i] = val
                if err_s >= 0:
                    break
                m = out[b, s + 1, 0]
                for i in range(1, n):
                    if out[b, s + 1, i] > m:
                        m = out[b, s + 1, i]
                tot = 0.0
                for i in range(n):
                    tot += exp(out[b, s + 1, i] - m)
                lse = m + log(tot)
                for i in range(n):
                    if out[b, s + 1, i] < lse + log_floor:
                        out[b, s + 1, i] = lse + log_floor
                        clamps[b] += 1
    if err_s >= 0:
        raise FloatingPointError(
            f"non-finite log cap at step {err_s} (stock {err_i + 1})"
        )
    return out_arr, clamps_arr


def hybrid_atlas_paths(double[:, ::1] logx0, double[:, :, ::1] dw, double dt,
                       double gamma, double[::1] gammas, double[::1] gs,
                       double[::1] sigmas, rho):
    cdef Py_ssize_t B = dw.shape[0], S = dw.shape[1], n = dw.shape[2]
    out_arr = np.empty((B, S + 1, n))
    cdef double[:, :, ::1] out = out_arr
    cdef bint has_rho = rho is not None and np.any(rho)
    rho_arr = np.ascontiguousarray(rho, dtype=np.float64) if has_rho else np.zeros((1, 1))
    cdef double[:, ::1] rho_v = rho_arr
    order_arr = np.empty(n, dtype=np.intp)
    rank_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] order = order_arr
    cdef Py_ssize_t[::1] rank_of = rank_arr
    cdef Py_ssize_t b, s, i, k
    cdef double val, acc
    cdef Py_ssize_t err_s = -1, err_i = -1
    with nogil:
        for b in range(B):
            if err_s >= 0:
                break
            for i in range(n):
                out[b, 0, i] = logx0[b, i]
            for s in range(S):
                if err_s >= 0:
                    break
                _insertion_rank(&out[b, s, 0], &order[0], n)
                for k in range(n):
                    rank_of[order[k]] = k
                for i in range(n):
                    acc = (gamma + gammas[i] + gs[rank_of[i]]) * dt \
                        + sigmas[rank_of[i]] * dw[b, s, i]
                    if has_rho:
                        for k in range(n):
                            acc += rho_v[i, k] * dw[b, s, k]
                    val = out[b, s, i] + acc
                    if not isfinite(val):
                        err_s = s + 1
                        err_i = i
                        break
                    out[b, s + 1, i] = val
    if err_s >= 0:
        raise FloatingPointError(
            f"non-finite log cap at step {err_s} (stock {err_i + 1})"
        )
    return out_arr


def fkk_paths(double[:, ::1] logx0, double[:, :, ::1] dw, double dt,
              double delta, double lg_floor, double[:, ::1] sigma,
              double[::1] gs, double M):
    cdef Py_ssize_t B = dw.shape[0], S = dw.shape[1], n = dw.shape[2]
    out_arr = np.empty((B, S + 1, n))
    breaches_arr = np.zeros(B, dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef long long[::1] breaches = breaches_arr
    cdef Py_ssize_t b, s, i, k
    cdef double m, tot, mu, lg, drift, acc, val
    cdef Py_ssize_t err_s = -1, err_i = -1
    with nogil:
        for b in range(B):
            if err_s >= 0:
                break
            for i in range(n):
                out[b, 0, i] = logx0[b, i]
            for s in range(S):
                if err_s >= 0:
                    break
                m = out[b, s, 0]
                for i in range(1, n):
                    if out[b, s, i] > m:
                        m = out[b, s, i]
                tot = 0.0
                for i in range(n):
                    tot += exp(out[b, s, i] - m)
                for i in range(n):
                    if out[b, s, i] == m:
                        mu = exp(out[b, s, i] - m) / tot
                        lg = log((1.0 - delta) / mu)
                        if lg < lg_floor:
                            lg = lg_floor
                            breaches[b] += 1
                        drift = -(M / delta) / lg
                    else:
                        drift = gs[i]
                    acc = drift * dt
                    for k in range(n):
                        acc += sigma[i, k] * dw[b, s, k]
                    val = out[b, s, i] + acc
                    if not isfinite(val):
                        err_s = s + 1
                        err_i = i
                        break
                    out[b, s + 1, i] = val
    if err_s >= 0:
        raise FloatingPointError(
            f"non-finite log cap at step {err_s} (stock {err_i + 1})"
        )
    return out_arr, breaches_arr
