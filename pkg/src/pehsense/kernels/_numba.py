"""Compiled Dormand-Prince integrators (one event per loop iteration)."""
import warnings

import numpy as np
from numba import njit, prange
from numba.core.errors import NumbaWarning

# an outdated system TBB only means numba falls back to another threading layer
warnings.filterwarnings("ignore", message="The TBB threading layer requires", category=NumbaWarning)

from ._tableau import (
    A as _A_TAB,
    B as _B_TAB,
    C as _C_TAB,
    E as _E_TAB,
    MAX_FACTOR,
    MIN_FACTOR,
    KNOT_SNAP,
    MIN_STEP_FRACTION,
    MODE_LINEAR,
    MODE_SOURCE,
    P as _P_TAB,
    SAFETY,
)


@njit(cache=True, inline="always")
def _input_at(u, fs, t):
    n = u.shape[0]
    x = t * fs
    if x <= 0.0:
        return u[0]
    k = int(x)
    if k >= n - 1:
        return u[n - 1]
    w = x - k
    return u[k] + w * (u[k + 1] - u[k])


@njit(cache=True, inline="always")
def bridge_current(v, vc, vfd, ron):
    av = abs(v)
    if av > vc + vfd:
        return (av - vfd - vc) / ron
    return 0.0


@njit(cache=True)
def _rhs(t, y, sys_a, sys_b, u, fs, mode, elec, dy):
    nA = sys_a.shape[0]
    s = _input_at(u, fs, t)
    if mode == MODE_SOURCE:
        il = bridge_current(s, y[0], elec[2], elec[3])
        dy[0] = il / elec[1] if y[0] < elec[4] else 0.0
        return
    for i in range(nA):
        acc = sys_b[i] * s
        for j in range(nA):
            acc += sys_a[i, j] * y[j]
        dy[i] = acc
    if mode != MODE_LINEAR:
        v = y[nA - 1]
        vc = y[nA]
        il = bridge_current(v, vc, elec[2], elec[3])
        if v < 0.0:
            dy[nA - 1] += il / elec[0]
        else:
            dy[nA - 1] -= il / elec[0]
        dy[nA] = il / elec[1] if vc < elec[4] else 0.0


@njit(cache=True)
def integrate_one(sys_a, sys_b, u, fs, mode, elec, y0, out_idx, rtol, atol, hmax, out):
    """Integrate one event; fills ``out[k, :]`` with ``y[out_idx]`` at ``t = k / fs``.

    Returns ``(status, t_stop, saturated)``; status 1 means step-size underflow.
    """
    n = u.shape[0]
    ns = y0.shape[0]
    n_out = out_idx.shape[0]
    dt = 1.0 / fs
    hmin = MIN_STEP_FRACTION * dt
    vc_idx = sys_a.shape[0]  # capacitor state index for rectifier modes
    vr = elec[4]

    K = np.zeros((7, ns))
    y = y0.copy()
    y_new = np.empty(ns)
    y_tmp = np.empty(ns)
    for j in range(n_out):
        out[0, j] = y[out_idx[j]]
    _rhs(0.0, y, sys_a, sys_b, u, fs, mode, elec, K[0])

    t = 0.0
    h = hmax
    k_next = 1
    saturated = False
    while k_next < n:
        if h < hmin:
            return 1, t, saturated
        # never step across an input knot: the interpolated input is smooth inside a step
        k_knot = int(np.floor(t * fs + 1e-6)) + 1
        t_knot = k_knot * dt
        land = False
        if t + h >= t_knot - KNOT_SNAP * dt:
            h = t_knot - t
            land = True
        for s in range(1, 6):
            for i in range(ns):
                acc = 0.0
                for j in range(s):
                    acc += _A_TAB[s, j] * K[j, i]
                y_tmp[i] = y[i] + h * acc
            _rhs(t + _C_TAB[s] * h, y_tmp, sys_a, sys_b, u, fs, mode, elec, K[s])
        for i in range(ns):
            acc = 0.0
            for j in range(6):
                acc += _B_TAB[j] * K[j, i]
            y_new[i] = y[i] + h * acc
        t_new = t_knot if land else t + h
        _rhs(t_new, y_new, sys_a, sys_b, u, fs, mode, elec, K[6])

        err = 0.0
        for i in range(ns):
            e = 0.0
            for j in range(7):
                e += _E_TAB[j] * K[j, i]
            e *= h
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / sc) ** 2
        err = np.sqrt(err / ns)

        if err <= 1.0:
            while k_next < n:
                tk = k_next * dt
                if tk > t_new + 1e-9 * dt:
                    break
                theta = (tk - t) / h
                if theta > 1.0:
                    theta = 1.0
                th2 = theta * theta
                for jo in range(n_out):
                    i = out_idx[jo]
                    acc = 0.0
                    for j in range(7):
                        acc += K[j, i] * (
                            _P_TAB[j, 0] * theta
                            + _P_TAB[j, 1] * th2
                            + _P_TAB[j, 2] * th2 * theta
                            + _P_TAB[j, 3] * th2 * th2
                        )
                    val = y[i] + h * acc
                    if mode != MODE_LINEAR and i == vc_idx and val > vr:
                        val = vr
                    out[k_next, jo] = val
                k_next += 1
            t = t_new
            for i in range(ns):
                y[i] = y_new[i]
                K[0, i] = K[6, i]
            if mode != MODE_LINEAR and y[vc_idx] >= vr:
                if y[vc_idx] > vr:
                    y[vc_idx] = vr
                    _rhs(t, y, sys_a, sys_b, u, fs, mode, elec, K[0])
                saturated = True
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, SAFETY * err ** -0.2)
            h = min(h * factor, hmax)
        else:
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
    return 0, t, saturated


@njit(cache=True, parallel=True)
def integrate_batch(sys_a, sys_b, inputs, fs, mode, elec, y0, out_idx, rtol, atol, hmax):
    n_ev, n = inputs.shape
    out = np.empty((n_ev, n, out_idx.shape[0]))
    status = np.zeros(n_ev, dtype=np.int64)
    t_stop = np.zeros(n_ev)
    saturated = np.zeros(n_ev, dtype=np.bool_)
    for e in prange(n_ev):
        st, ts, sat = integrate_one(
            sys_a, sys_b, inputs[e], fs, mode, elec, y0[e], out_idx, rtol, atol, hmax, out[e]
        )
        status[e] = st
        t_stop[e] = ts
        saturated[e] = sat
    return out, status, t_stop, saturated
