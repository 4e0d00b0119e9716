"""Pure-numpy Dormand-Prince integrators, vectorized across events.

Each event keeps its own time and step size; one loop iteration advances
every unfinished event by one trial step.  The arithmetic mirrors the
compiled kernel so both backends agree to within the integration tolerance.
"""
import numpy as np

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


def bridge_current(v, vc, vfd, ron):
    av = np.abs(v)
    return np.where(av > vc + vfd, (av - vfd - vc) / ron, 0.0)


def _input_at(inputs, rows, fs, t):
    n = inputs.shape[1]
    x = t * fs
    k = np.clip(np.floor(x).astype(np.int64), 0, n - 2)
    w = np.clip(x - k, 0.0, 1.0)
    lo = inputs[rows, k]
    return lo + w * (inputs[rows, k + 1] - lo)


def _rhs(t, y, sys_a, sys_b, inputs, rows, fs, mode, elec):
    s = _input_at(inputs, rows, fs, t)
    cp, cap, vfd, ron, vr = elec
    if mode == MODE_SOURCE:
        il = bridge_current(s, y[:, 0], vfd, ron)
        return np.where(y[:, 0] < vr, il / cap, 0.0)[:, None]
    nA = sys_a.shape[0]
    dy = np.zeros_like(y)
    dy[:, :nA] = y[:, :nA] @ sys_a.T + s[:, None] * sys_b[None, :]
    if mode != MODE_LINEAR:
        v = y[:, nA - 1]
        vc = y[:, nA]
        il = bridge_current(v, vc, vfd, ron)
        dy[:, nA - 1] -= np.sign(v) * il / cp
        dy[:, nA] = np.where(vc < vr, il / cap, 0.0)
    return dy


def integrate_batch(sys_a, sys_b, inputs, fs, mode, elec, y0, out_idx, rtol, atol, hmax):
    n_ev, n = inputs.shape
    ns = y0.shape[1]
    dt = 1.0 / fs
    hmin = MIN_STEP_FRACTION * dt
    vc_idx = sys_a.shape[0]
    vr = elec[4]
    rect = mode != MODE_LINEAR

    out = np.empty((n_ev, n, out_idx.shape[0]))
    out[:, 0, :] = y0[:, out_idx]
    status = np.zeros(n_ev, dtype=np.int64)
    t_stop = np.zeros(n_ev)
    saturated = np.zeros(n_ev, dtype=bool)

    y = y0.astype(float).copy()
    t = np.zeros(n_ev)
    h = np.full(n_ev, float(hmax))
    k_next = np.ones(n_ev, dtype=np.int64)
    K = np.zeros((7, n_ev, ns))
    all_rows = np.arange(n_ev)
    K[0] = _rhs(t, y, sys_a, sys_b, inputs, all_rows, fs, mode, elec)
    active = k_next < n

    while active.any():
        rows = np.flatnonzero(active)
        hr = h[rows]
        under = hr < hmin
        if under.any():
            bad = rows[under]
            status[bad] = 1
            t_stop[bad] = t[bad]
            active[bad] = False
            rows = rows[~under]
            if rows.size == 0:
                break
            hr = h[rows]
        tr = t[rows]
        yr = y[rows]
        t_knot = (np.floor(tr * fs + 1e-6) + 1.0) * dt
        land = tr + hr >= t_knot - KNOT_SNAP * dt
        hr = np.where(land, t_knot - tr, hr)
        Kr = np.empty((7, rows.size, ns))
        Kr[0] = K[0, rows]
        for s in range(1, 6):
            incr = np.tensordot(_A_TAB[s, :s], Kr[:s], axes=(0, 0))
            Kr[s] = _rhs(
                tr + _C_TAB[s] * hr, yr + hr[:, None] * incr,
                sys_a, sys_b, inputs, rows, fs, mode, elec,
            )
        y_new = yr + hr[:, None] * np.tensordot(_B_TAB, Kr[:6], axes=(0, 0))
        t_new = np.where(land, t_knot, tr + hr)
        Kr[6] = _rhs(t_new, y_new, sys_a, sys_b, inputs, rows, fs, mode, elec)

        e = hr[:, None] * np.tensordot(_E_TAB, Kr, axes=(0, 0))
        sc = atol + rtol * np.maximum(np.abs(yr), np.abs(y_new))
        err = np.sqrt(np.mean((e / sc) ** 2, axis=1))
        ok = err <= 1.0

        # steps never cross a knot, so an accepted step emits at most one sample
        tk = k_next[rows] * dt
        emit = ok & (tk <= t_new + 1e-9 * dt)
        if emit.any():
            er = np.flatnonzero(emit)
            theta = np.minimum((tk[er] - tr[er]) / hr[er], 1.0)
            basis = np.stack([theta, theta**2, theta**3, theta**4], axis=1)
            weights = basis @ _P_TAB.T  # (events, 7)
            Ke = Kr[:, er][:, :, out_idx]  # (7, events, outputs)
            vals = yr[er][:, out_idx] + hr[er][:, None] * np.einsum("ej,jeo->eo", weights, Ke)
            if rect:
                col = np.flatnonzero(out_idx == vc_idx)
                if col.size:
                    vals[:, col] = np.minimum(vals[:, col], vr)
            out[rows[er], k_next[rows[er]], :] = vals
            k_next[rows[er]] += 1

        acc = np.flatnonzero(ok)
        if acc.size:
            ra = rows[acc]
            ya = y_new[acc]
            K0 = Kr[6, acc]
            if rect:
                over = ya[:, vc_idx] > vr
                hit = ya[:, vc_idx] >= vr
                saturated[ra[hit]] = True
                if over.any():
                    ya[over, vc_idx] = vr
                    K0[over] = _rhs(
                        t_new[acc][over], ya[over],
                        sys_a, sys_b, inputs, ra[over], fs, mode, elec,
                    )
            y[ra] = ya
            t[ra] = t_new[acc]
            K[0, ra] = K0
        with np.errstate(divide="ignore"):
            grow = np.where(err == 0.0, MAX_FACTOR, np.minimum(MAX_FACTOR, SAFETY * err**-0.2))
            shrink = np.maximum(MIN_FACTOR, SAFETY * err**-0.2)
        h[rows] = np.where(ok, np.minimum(hr * grow, hmax), hr * shrink)
        t_stop[rows] = t[rows]
        active[rows] = k_next[rows] < n

    return out, status, t_stop, saturated
