"""Compiled right-hand sides and fixed-step RK4 loops.

Everything here works on flat float arrays so numba can compile it. The
public wrappers live in :mod:`agcsim.system` and :mod:`agcsim.sim`.

State layout for the full model (N areas, G generators)::

    [angle(N), freq(N), freq_filt(N), ni_filt(N), p_gov(G), p_mech(G), eta(N)]

Area parameter columns: H, D, b, tau, T_f.
Generator parameter columns: 1/R, T_g, T_t, u_star, u_min, u_max, alpha.
Tie parameter columns: p_max, damping, sin of scheduled angle difference.
"""

import math

import numpy as np
from numba import njit

OMEGA_S = 2.0 * math.pi * 60.0

MODE_PRIMARY = 0
MODE_SIMPLIFIED = 1
MODE_TEXTBOOK = 2

STATUS_OK = 0
STATUS_NONFINITE = 1


@njit(cache=True)
def tie_flows(x, n_areas, tie_ij, tie_p, ni):
    """Accumulate net flow out of each area into ``ni`` (zeroed here)."""
    for k in range(n_areas):
        ni[k] = 0.0
    o_f = n_areas
    for t in range(tie_ij.shape[0]):
        a = tie_ij[t, 0]
        b = tie_ij[t, 1]
        flow = tie_p[t, 0] * (math.sin(x[a] - x[b]) - tie_p[t, 2])
        flow += tie_p[t, 1] * (x[o_f + a] - x[o_f + b])
        ni[a] += flow
        ni[b] -= flow


@njit(cache=True)
def full_rhs(x, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed, out):
    N = area_p.shape[0]
    G = gen_p.shape[0]
    o_f = N
    o_ff = 2 * N
    o_fn = 3 * N
    o_pg = 4 * N
    o_pm = 4 * N + G
    o_eta = 4 * N + 2 * G

    ni = np.empty(N)
    tie_flows(x, N, tie_ij, tie_p, ni)

    mech = np.zeros(N)
    slack = np.zeros(N)
    for i in range(G):
        k = gen_area[i]
        inv_r = gen_p[i, 0]
        u_star = gen_p[i, 3]
        if use_fixed:
            u = u_fixed[i]
        else:
            u = u_star + gen_p[i, 6] * x[o_eta + k]
            if u < gen_p[i, 4]:
                u = gen_p[i, 4]
            elif u > gen_p[i, 5]:
                u = gen_p[i, 5]
        df = x[o_f + k]
        out[o_pg + i] = (u - df * inv_r - x[o_pg + i]) / gen_p[i, 1]
        out[o_pm + i] = (x[o_pg + i] - x[o_pm + i]) / gen_p[i, 2]
        mech[k] += x[o_pm + i] - u_star
        # u - P from the governor statics
        slack[k] += df * inv_r

    for k in range(N):
        H = area_p[k, 0]
        D = area_p[k, 1]
        bias = area_p[k, 2]
        tau = area_p[k, 3]
        Tf = area_p[k, 4]
        df = x[o_f + k]
        out[k] = OMEGA_S * df
        out[o_f + k] = (mech[k] - D * df - dpl[k] - ni[k]) / (2.0 * H)
        if Tf > 0.0:
            out[o_ff + k] = (df - x[o_ff + k]) / Tf
            out[o_fn + k] = (ni[k] - x[o_fn + k]) / Tf
            f_meas = x[o_ff + k]
            ni_meas = x[o_fn + k]
        else:
            out[o_ff + k] = 0.0
            out[o_fn + k] = 0.0
            f_meas = df
            ni_meas = ni[k]
        ace = ni_meas + bias * f_meas
        if mode == MODE_SIMPLIFIED:
            out[o_eta + k] = -ace / tau
        elif mode == MODE_TEXTBOOK:
            out[o_eta + k] = (-ace - slack[k]) / tau
        else:
            out[o_eta + k] = 0.0


@njit(cache=True)
def _all_finite(x):
    for v in x:
        if not math.isfinite(v):
            return False
    return True


@njit(cache=True)
def _rk4_full_step(x, h, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed,
                   k1, k2, k3, k4, tmp):
    n = x.shape[0]
    full_rhs(x, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed, k1)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * h * k1[j]
    full_rhs(tmp, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed, k2)
    for j in range(n):
        tmp[j] = x[j] + 0.5 * h * k2[j]
    full_rhs(tmp, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed, k3)
    for j in range(n):
        tmp[j] = x[j] + h * k3[j]
    full_rhs(tmp, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p, u_fixed, use_fixed, k4)
    for j in range(n):
        x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def rk4_full_segment(x, t0, t1, dt, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p,
                     u_fixed, use_fixed, rec_times, rec_t, rec_x, rec_ptr):
    """Integrate ``x`` in place from t0 to t1.

    Samples are stored whenever the step time reaches the next entry of
    ``rec_times``. Returns (rec_ptr, status, time_of_failure).
    """
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    span = t1 - t0
    n_steps = int(math.floor(span / dt + 1e-9))
    tol = 1e-9 * dt
    t = t0
    s = 0
    while True:
        if s < n_steps:
            h = dt
            t_next = t0 + (s + 1) * dt
        else:
            t_next = t1
            h = t1 - t
            if h <= tol:
                break
        _rk4_full_step(x, h, dpl, mode, area_p, gen_area, gen_p, tie_ij, tie_p,
                       u_fixed, use_fixed, k1, k2, k3, k4, tmp)
        t = t_next
        s += 1
        if not _all_finite(x):
            return rec_ptr, STATUS_NONFINITE, t
        while rec_ptr < rec_times.shape[0] and rec_times[rec_ptr] <= t + tol:
            rec_t[rec_ptr] = t
            rec_x[rec_ptr, :] = x
            rec_ptr += 1
        if s > n_steps:
            break
    return rec_ptr, STATUS_OK, t


@njit(cache=True)
def phi_all(eta, gen_area, gen_p, out):
    for k in range(out.shape[0]):
        out[k] = 0.0
    for i in range(gen_p.shape[0]):
        k = gen_area[i]
        u_star = gen_p[i, 3]
        u = u_star + gen_p[i, 6] * eta[k]
        if u < gen_p[i, 4]:
            u = gen_p[i, 4]
        elif u > gen_p[i, 5]:
            u = gen_p[i, 5]
        out[k] += u - u_star


@njit(cache=True)
def reduced_rhs(eta, dpl, bmat, tau, gen_area, gen_p, out):
    N = eta.shape[0]
    phi = np.empty(N)
    phi_all(eta, gen_area, gen_p, phi)
    for k in range(N):
        phi[k] -= dpl[k]
    for k in range(N):
        acc = 0.0
        for j in range(N):
            acc += bmat[k, j] * phi[j]
        out[k] = -acc / tau[k]


@njit(cache=True)
def rk4_reduced_segment(x, t0, t1, dt, dpl, bmat, tau, gen_area, gen_p,
                        rec_times, rec_t, rec_x, rec_ptr):
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    span = t1 - t0
    n_steps = int(math.floor(span / dt + 1e-9))
    tol = 1e-9 * dt
    t = t0
    s = 0
    while True:
        if s < n_steps:
            h = dt
            t_next = t0 + (s + 1) * dt
        else:
            t_next = t1
            h = t1 - t
            if h <= tol:
                break
        reduced_rhs(x, dpl, bmat, tau, gen_area, gen_p, k1)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k1[j]
        reduced_rhs(tmp, dpl, bmat, tau, gen_area, gen_p, k2)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k2[j]
        reduced_rhs(tmp, dpl, bmat, tau, gen_area, gen_p, k3)
        for j in range(n):
            tmp[j] = x[j] + h * k3[j]
        reduced_rhs(tmp, dpl, bmat, tau, gen_area, gen_p, k4)
        for j in range(n):
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        t = t_next
        s += 1
        if not _all_finite(x):
            return rec_ptr, STATUS_NONFINITE, t
        while rec_ptr < rec_times.shape[0] and rec_times[rec_ptr] <= t + tol:
            rec_t[rec_ptr] = t
            rec_x[rec_ptr, :] = x
            rec_ptr += 1
        if s > n_steps:
            break
    return rec_ptr, STATUS_OK, t
