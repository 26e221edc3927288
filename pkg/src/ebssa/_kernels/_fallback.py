"""Pure-Python kernel implementations.

These are the import-time fallback when the compiled extension is missing.
The compiled core mirrors this code operation-for-operation (same float64
expression order, same libm calls), so both backends produce bit-identical
outputs; keep the two in sync when editing either.
"""

from __future__ import annotations

import math
import time

import numpy as np

# Rebase the cached exp(T/tau) grid when the stream time has advanced this
# many tau beyond the basis, keeping exp arguments in a safe range.
REBASE_SPAN = 300.0


def detect_events(
    t,
    x,
    y,
    width,
    height,
    tau,
    phi,
    min_active,
    radius,
    disc_dx,
    disc_dy,
    bar_flat,
    bar_start,
    penalty,
    n_templates,
    use_static,
    psi_static,
    w_factor,
    use_halfrange,
    delta,
    profile=False,
):
    """Full per-event detection cascade over a single-polarity stream.

    Returns (detection indices, q values, n_surface_pass, n_angular_pass,
    stage_ns) where stage_ns is a 3-tuple of per-stage nanoseconds when
    profiling, else None.
    """
    exp = math.exp
    t = [float(v) for v in t]
    xs = [int(v) for v in x]
    ys = [int(v) for v in y]
    ddx = [int(v) for v in disc_dx]
    ddy = [int(v) for v in disc_dy]
    bflat = [int(v) for v in bar_flat]
    bstart = [int(v) for v in bar_start]
    n_disc = len(ddx)
    n = n_templates
    half = n // 2
    c1 = 1.0 - penalty
    w_grid = width
    size = width * height

    T = [-math.inf] * size
    A = [0.0] * size
    base = 0.0
    span = REBASE_SPAN * tau

    v_loc = [0.0] * n_disc
    lam = [0.0] * n
    out_idx = []
    out_q = []
    n_surface = 0
    n_angular = 0
    ns_surface = 0
    ns_angular = 0
    ns_unimodal = 0
    clock = time.perf_counter_ns

    for i in range(len(t)):
        if profile:
            t0 = clock()
        et = t[i]
        ex = xs[i]
        ey = ys[i]
        if et - base > span:
            factor = exp((base - et) / tau)
            for j in range(size):
                A[j] *= factor
            base = et
        center = ey * w_grid + ex
        T[center] = et
        A[center] = exp((et - base) / tau)

        count = 0
        passed = False
        for j in range(n_disc):
            px = ex + ddx[j]
            py = ey + ddy[j]
            if 0 <= px < w_grid and 0 <= py < height:
                if et - T[py * w_grid + px] < phi:
                    count += 1
                    if count > min_active:
                        passed = True
                        break
        if profile:
            t1 = clock()
            ns_surface += t1 - t0
        if not passed:
            continue
        n_surface += 1

        # four-lane accumulation: same lane structure as the compiled core
        scale = exp((base - et) / tau)
        ta = [0.0, 0.0, 0.0, 0.0]
        for j in range(n_disc):
            px = ex + ddx[j]
            py = ey + ddy[j]
            if 0 <= px < w_grid and 0 <= py < height:
                val = A[py * w_grid + px] * scale
            else:
                val = 0.0
            v_loc[j] = val
            ta[j & 3] += val
        total = (ta[0] + ta[1]) + (ta[2] + ta[3])

        for k in range(n):
            bs0 = 0.0
            bs1 = 0.0
            bs2 = 0.0
            bs3 = 0.0
            b = bstart[k]
            b_end = bstart[k + 1]
            while b + 4 <= b_end:
                bs0 += v_loc[bflat[b]]
                bs1 += v_loc[bflat[b + 1]]
                bs2 += v_loc[bflat[b + 2]]
                bs3 += v_loc[bflat[b + 3]]
                b += 4
            if b < b_end:
                bs0 += v_loc[bflat[b]]
            if b + 1 < b_end:
                bs1 += v_loc[bflat[b + 1]]
            if b + 2 < b_end:
                bs2 += v_loc[bflat[b + 2]]
            bsum = (bs0 + bs1) + (bs2 + bs3)
            lam[k] = c1 * bsum + penalty * total

        maxv = lam[0]
        minv = lam[0]
        m0 = 0
        for k in range(1, n):
            lk = lam[k]
            if lk > maxv:
                maxv = lk
                m0 = k
            if lk < minv:
                minv = lk

        if use_static:
            psi = psi_static
        elif use_halfrange:
            psi = w_factor * (maxv - minv)
        else:
            psi = w_factor * (maxv + minv)

        g = 0
        sidx = 0.0
        sidx_sh = 0.0
        m_sh = n + 1
        for k in range(n):
            if lam[k] > psi:
                g += 1
                sidx += k + 1
                sidx_sh += (k + half) % n + 1
            if lam[k] == maxv:
                cand = (k + half) % n + 1
                if cand < m_sh:
                    m_sh = cand
        if profile:
            t2 = clock()
            ns_angular += t2 - t1
        if g == 0:
            continue
        n_angular += 1

        q = sidx / g
        zeta = abs((m0 + 1) - q)
        q_sh = sidx_sh / g
        zeta_sh = abs(m_sh - q_sh)
        if zeta <= zeta_sh:
            emit = zeta < delta
            q_emit = q
        else:
            emit = zeta_sh < delta
            qb = math.fmod(q_sh - 1.0 - half, n)
            if qb < 0.0:
                qb += n
            q_emit = qb + 1.0
        if profile:
            ns_unimodal += clock() - t2
        if emit:
            out_idx.append(i)
            out_q.append(q_emit)

    stage_ns = (ns_surface, ns_angular, ns_unimodal) if profile else None
    return (
        np.array(out_idx, dtype=np.int64),
        np.array(out_q, dtype=np.float64),
        n_surface,
        n_angular,
        stage_ns,
    )


def surface_pass_mask(t, x, y, width, height, phi, min_active, disc_dx, disc_dy):
    """Surface-activation front end only: per-event pass/fail mask."""
    t = [float(v) for v in t]
    xs = [int(v) for v in x]
    ys = [int(v) for v in y]
    ddx = [int(v) for v in disc_dx]
    ddy = [int(v) for v in disc_dy]
    n_disc = len(ddx)
    T = [-math.inf] * (width * height)
    mask = np.zeros(len(t), dtype=bool)
    for i in range(len(t)):
        et = t[i]
        ex = xs[i]
        ey = ys[i]
        T[ey * width + ex] = et
        count = 0
        for j in range(n_disc):
            px = ex + ddx[j]
            py = ey + ddy[j]
            if 0 <= px < width and 0 <= py < height:
                if et - T[py * width + px] < phi:
                    count += 1
                    if count > min_active:
                        mask[i] = True
                        break
    return mask


def track_events(t, x, y, theta, gamma, m_a, d_max, v_scale, k_window, emit_all):
    """Event-driven multi-hypothesis tracking over a detection stream.

    Delegates to the reference Tracker (the public pure-Python
    implementation); the compiled core mirrors that class.
    """
    from ..tracker import Tracker, TrackerConfig

    cfg = TrackerConfig(
        gamma=gamma,
        activation_threshold=m_a,
        d_max=d_max,
        angle_weight_scale=v_scale,
        window=k_window,
        emit_all=bool(emit_all),
    )
    tracker = Tracker(cfg)
    out_idx = []
    out_oid = []
    out_latched = []
    for i in range(len(t)):
        oid, latched = tracker.process(float(t[i]), float(x[i]), float(y[i]), float(theta[i]))
        if emit_all or latched:
            out_idx.append(i)
            out_oid.append(oid)
            out_latched.append(latched)
    return (
        np.array(out_idx, dtype=np.int64),
        np.array(out_oid, dtype=np.int64),
        np.array(out_latched, dtype=np.uint8),
        tracker.n_created,
    )
