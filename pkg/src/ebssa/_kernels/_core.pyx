# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core.

Exact mirror of ``_fallback.py`` (same float64 expression order, same libm
calls); both backends must produce bit-identical outputs. Keep in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, fabs, fmod, sqrt
from posix.time cimport CLOCK_MONOTONIC, clock_gettime, timespec

cnp.import_array()

DEF REBASE_SPAN = 300.0


cdef inline long long _now_ns() noexcept:
    cdef timespec ts
    clock_gettime(CLOCK_MONOTONIC, &ts)
    return <long long>ts.tv_sec * 1_000_000_000 + ts.tv_nsec


def detect_events(
    t_in,
    x_in,
    y_in,
    int width,
    int height,
    double tau,
    double phi,
    int min_active,
    int radius,
    disc_dx_in,
    disc_dy_in,
    bar_flat_in,
    bar_start_in,
    double penalty,
    int n_templates,
    int use_static,
    double psi_static,
    double w_factor,
    int use_halfrange,
    double delta,
    profile=False,
):
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef int[::1] xs = np.ascontiguousarray(x_in, dtype=np.int32)
    cdef int[::1] ys = np.ascontiguousarray(y_in, dtype=np.int32)
    cdef int[::1] ddx = np.ascontiguousarray(disc_dx_in, dtype=np.int32)
    cdef int[::1] ddy = np.ascontiguousarray(disc_dy_in, dtype=np.int32)
    cdef int[::1] bflat = np.ascontiguousarray(bar_flat_in, dtype=np.int32)
    cdef int[::1] bstart = np.ascontiguousarray(bar_start_in, dtype=np.int32)
    doff_arr = (
        np.asarray(disc_dy_in, dtype=np.int64) * width
        + np.asarray(disc_dx_in, dtype=np.int64)
    )
    cdef long long[::1] doff = np.ascontiguousarray(doff_arr)

    cdef Py_ssize_t n_events = t.shape[0]
    cdef int n_disc = <int>ddx.shape[0]
    cdef int n = n_templates
    cdef int half = n // 2
    cdef double c1 = 1.0 - penalty
    cdef int w_grid = width
    cdef Py_ssize_t size = <Py_ssize_t>width * height
    cdef double span = REBASE_SPAN * tau

    T_arr = np.full(size, -np.inf, dtype=np.float64)
    A_arr = np.zeros(size, dtype=np.float64)
    cdef double[::1] T = T_arr
    cdef double[::1] A = A_arr
    cdef double base = 0.0

    v_arr = np.zeros(n_disc, dtype=np.float64)
    lam_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] v_loc = v_arr
    cdef double[::1] lam = lam_arr

    out_idx_arr = np.empty(n_events, dtype=np.int64)
    out_q_arr = np.empty(n_events, dtype=np.float64)
    cdef long long[::1] out_idx = out_idx_arr
    cdef double[::1] out_q = out_q_arr
    cdef Py_ssize_t n_out = 0
    cdef long long n_surface = 0
    cdef long long n_angular = 0

    cdef bint do_profile = bool(profile)
    cdef long long ns_surface = 0, ns_angular = 0, ns_unimodal = 0
    cdef long long t0 = 0, t1 = 0, t2 = 0

    cdef Py_ssize_t i, j_off, coff
    cdef int ex, ey, j, k, b, b_end, px, py, count, m0, g, m_sh, cand, ph
    cdef bint passed, emit, interior
    cdef double et, factor, scale, total, val, bsum, maxv, minv, lk, psi
    cdef double ta0, ta1, ta2, ta3, bs0, bs1, bs2, bs3
    cdef double sidx, sidx_sh, q, zeta, q_sh, zeta_sh, q_emit, qb

    for i in range(n_events):
        if do_profile:
            t0 = _now_ns()
        et = t[i]
        ex = xs[i]
        ey = ys[i]
        if et - base > span:
            factor = exp((base - et) / tau)
            for j_off in range(size):
                A[j_off] *= factor
            base = et
        coff = ey * w_grid + ex
        T[coff] = et
        A[coff] = exp((et - base) / tau)
        interior = radius <= ex < w_grid - radius and radius <= ey < height - radius

        # branchless full count; identical decision to an early-exit scan
        count = 0
        if interior:
            for j in range(n_disc):
                count += et - T[coff + doff[j]] < phi
        else:
            for j in range(n_disc):
                px = ex + ddx[j]
                py = ey + ddy[j]
                if 0 <= px < w_grid and 0 <= py < height:
                    count += et - T[py * w_grid + px] < phi
        passed = count > min_active
        if do_profile:
            t1 = _now_ns()
            ns_surface += t1 - t0
        if not passed:
            continue
        n_surface += 1

        # four-lane accumulation keeps the FP add chains short; the fallback
        # mirrors the exact same lane structure
        scale = exp((base - et) / tau)
        ta0 = 0.0
        ta1 = 0.0
        ta2 = 0.0
        ta3 = 0.0
        if interior:
            for j in range(n_disc):
                val = A[coff + doff[j]] * scale
                v_loc[j] = val
                ph = j & 3
                if ph == 0:
                    ta0 += val
                elif ph == 1:
                    ta1 += val
                elif ph == 2:
                    ta2 += val
                else:
                    ta3 += val
        else:
            for j in range(n_disc):
                px = ex + ddx[j]
                py = ey + ddy[j]
                if 0 <= px < w_grid and 0 <= py < height:
                    val = A[py * w_grid + px] * scale
                else:
                    val = 0.0
                v_loc[j] = val
                ph = j & 3
                if ph == 0:
                    ta0 += val
                elif ph == 1:
                    ta1 += val
                elif ph == 2:
                    ta2 += val
                else:
                    ta3 += val
        total = (ta0 + ta1) + (ta2 + ta3)

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
        if do_profile:
            t2 = _now_ns()
            ns_angular += t2 - t1
        if g == 0:
            continue
        n_angular += 1

        q = sidx / g
        zeta = fabs((m0 + 1) - q)
        q_sh = sidx_sh / g
        zeta_sh = fabs(m_sh - q_sh)
        if zeta <= zeta_sh:
            emit = zeta < delta
            q_emit = q
        else:
            emit = zeta_sh < delta
            qb = fmod(q_sh - 1.0 - half, <double>n)
            if qb < 0.0:
                qb += n
            q_emit = qb + 1.0
        if do_profile:
            ns_unimodal += _now_ns() - t2
        if emit:
            out_idx[n_out] = i
            out_q[n_out] = q_emit
            n_out += 1

    stage_ns = (ns_surface, ns_angular, ns_unimodal) if do_profile else None
    return (
        out_idx_arr[:n_out].copy(),
        out_q_arr[:n_out].copy(),
        int(n_surface),
        int(n_angular),
        stage_ns,
    )


def surface_pass_mask(t_in, x_in, y_in, int width, int height, double phi,
                      int min_active, disc_dx_in, disc_dy_in):
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef int[::1] xs = np.ascontiguousarray(x_in, dtype=np.int32)
    cdef int[::1] ys = np.ascontiguousarray(y_in, dtype=np.int32)
    cdef int[::1] ddx = np.ascontiguousarray(disc_dx_in, dtype=np.int32)
    cdef int[::1] ddy = np.ascontiguousarray(disc_dy_in, dtype=np.int32)
    cdef Py_ssize_t n_events = t.shape[0]
    cdef int n_disc = <int>ddx.shape[0]
    T_arr = np.full(<Py_ssize_t>width * height, -np.inf, dtype=np.float64)
    cdef double[::1] T = T_arr
    mask_arr = np.zeros(n_events, dtype=np.uint8)
    cdef unsigned char[::1] mask = mask_arr

    cdef Py_ssize_t i
    cdef int ex, ey, j, px, py, count
    cdef double et
    for i in range(n_events):
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
                        mask[i] = 1
                        break
    return mask_arr.astype(bool)


# ---------------------------------------------------------------------------
# Tracker
# ---------------------------------------------------------------------------

cdef inline double _circ_diff(double a, double b) noexcept:
    cdef double d = fmod(a - b, 6.283185307179586476925286766559)
    if d <= -3.14159265358979323846264338328:
        d += 6.283185307179586476925286766559
    elif d > 3.14159265358979323846264338328:
        d -= 6.283185307179586476925286766559
    return d




def track_events(t_in, x_in, y_in, theta_in, double gamma, double m_a,
                 double d_max, double v_scale, int k_window, int emit_all):
    cdef double[::1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef double[::1] ths = np.ascontiguousarray(theta_in, dtype=np.float64)
    cdef Py_ssize_t n_det = t.shape[0]
    cdef int K = k_window

    # Slot-addressed hypothesis state:
    #   hot  = (t_m, m, t_obs, zx, bx, zy, by, pad)
    #   cold = (ref, zth, bth, last_lift)
    # The per-detection scan runs over contiguous live-compacted arrays
    # (scan_t, scan_m, shadow float32 kinematics, slot ids). The float32
    # prescreen only ever *excludes* hypotheses that are provably outside
    # the assignment radius (margin 2 px, with a magnitude guard for wild
    # velocity estimates), so selection matches the exact pure-Python scan.
    cdef Py_ssize_t cap = 64
    hot_a = np.zeros((cap, 8), dtype=np.float64)
    cold_a = np.zeros((cap, 4), dtype=np.float64)
    oid_a = np.zeros(cap, dtype=np.int64)
    latched_a = np.zeros(cap, dtype=np.uint8)
    head_a = np.zeros(cap, dtype=np.int32)
    wn_a = np.zeros(cap, dtype=np.int32)
    sums_a = np.zeros((cap, 8), dtype=np.float64)  # st,stt,sx,sxt,sy,syt,sth,stht
    ring_a = np.zeros((cap, 4, K), dtype=np.float64)  # wt,wx,wy,wth
    free_a = np.zeros(cap, dtype=np.int64)
    scan_t_a = np.zeros(cap, dtype=np.float64)
    scan_m_a = np.zeros(cap, dtype=np.float64)
    scan_f_a = np.zeros((cap, 5), dtype=np.float32)  # t_obs, zx, bx, zy, by
    scan_slot_a = np.zeros(cap, dtype=np.int64)
    cand_a = np.zeros(cap, dtype=np.int64)
    cand_m_a = np.zeros(cap, dtype=np.float64)

    cdef double[:, ::1] hot = hot_a
    cdef double[:, ::1] cold = cold_a
    cdef long long[::1] oid = oid_a
    cdef unsigned char[::1] latched = latched_a
    cdef int[::1] head = head_a
    cdef int[::1] wn = wn_a
    cdef double[:, ::1] sums = sums_a
    cdef double[:, :, ::1] ring = ring_a
    cdef long long[::1] free_slots = free_a
    cdef double[::1] scan_t = scan_t_a
    cdef double[::1] scan_m = scan_m_a
    cdef float[:, ::1] scan_f = scan_f_a
    cdef long long[::1] scan_slot = scan_slot_a
    cdef long long[::1] cand = cand_a
    cdef double[::1] cand_m = cand_m_a

    cdef Py_ssize_t n_live = 0
    cdef Py_ssize_t n_free = 0
    cdef Py_ssize_t n_slots = 0
    cdef long long n_created = 0

    out_idx_arr = np.empty(n_det, dtype=np.int64)
    out_oid_arr = np.empty(n_det, dtype=np.int64)
    out_lat_arr = np.empty(n_det, dtype=np.uint8)
    cdef long long[::1] out_idx = out_idx_arr
    cdef long long[::1] out_oid = out_oid_arr
    cdef unsigned char[::1] out_lat = out_lat_arr
    cdef Py_ssize_t n_out = 0

    cdef Py_ssize_t i, w, ii, c, ci, n_cand, best, best_live, r
    cdef int pos, tail
    cdef double tj, xj, yj, thj, m, dt, pth, speed, a, wgt, cd, dx, dy, d2, part
    cdef double best_d2, best_m, lift, o_ts, new_ref, dshift, fn, ts, vt, tb
    cdef float tjf, xjf, yjf, thr_f, dtf, dxf, dyf, driftx, drifty, partf
    cdef bint unsafe

    thr_f = <float>((d_max + 2.0) * (d_max + 2.0))

    for i in range(n_det):
        tj = t[i]
        xj = xs[i]
        yj = ys[i]
        thj = ths[i]
        tjf = <float>tj
        xjf = <float>xj
        yjf = <float>yj

        # phase 1: lazy membrane evaluation (drop the exhausted, keep
        # creation order) and conservative float32 spatial prescreen
        w = 0
        n_cand = 0
        for ii in range(n_live):
            m = scan_m[ii] - gamma * (tj - scan_t[ii])
            if m <= 0.0:
                free_slots[n_free] = scan_slot[ii]
                n_free += 1
                continue
            if w != ii:
                scan_t[w] = scan_t[ii]
                scan_m[w] = scan_m[ii]
                scan_f[w, 0] = scan_f[ii, 0]
                scan_f[w, 1] = scan_f[ii, 1]
                scan_f[w, 2] = scan_f[ii, 2]
                scan_f[w, 3] = scan_f[ii, 3]
                scan_f[w, 4] = scan_f[ii, 4]
                scan_slot[w] = scan_slot[ii]
            dtf = tjf - scan_f[w, 0]
            driftx = scan_f[w, 2] * dtf
            drifty = scan_f[w, 4] * dtf
            dxf = xjf - (scan_f[w, 1] + driftx)
            dyf = yjf - (scan_f[w, 3] + drifty)
            partf = dxf * dxf + dyf * dyf
            unsafe = (driftx > 3e4) or (driftx < -3e4) or (drifty > 3e4) or (drifty < -3e4)
            if partf < thr_f or unsafe:
                cand[n_cand] = w
                cand_m[n_cand] = m
                n_cand += 1
            w += 1
        n_live = w

        # phase 2: exact selection over the nearby candidates
        # (strict <, first candidate in creation order wins ties)
        best = -1
        best_live = -1
        best_d2 = d_max * d_max
        best_m = 0.0
        for ci in range(n_cand):
            ii = cand[ci]
            r = scan_slot[ii]
            m = cand_m[ci]
            dt = tj - hot[r, 2]
            dx = xj - (hot[r, 3] + hot[r, 4] * dt)
            dy = yj - (hot[r, 5] + hot[r, 6] * dt)
            part = dx * dx + dy * dy
            if part >= best_d2:
                continue
            pth = cold[r, 1] + cold[r, 2] * dt
            speed = sqrt(hot[r, 4] * hot[r, 4] + hot[r, 6] * hot[r, 6])
            if latched[r]:
                a = 1.0
            else:
                a = m / m_a
            wgt = v_scale * speed * a
            cd = _circ_diff(thj, pth)
            d2 = part + wgt * cd * cd
            if d2 < best_d2:
                best_d2 = d2
                best = r
                best_live = ii
                best_m = m

        if best < 0:
            if n_free > 0:
                n_free -= 1
                best = free_slots[n_free]
            else:
                if n_slots == cap:
                    cap *= 2
                    oid_a = np.resize(oid_a, cap)
                    latched_a = np.resize(latched_a, cap)
                    head_a = np.resize(head_a, cap)
                    wn_a = np.resize(wn_a, cap)
                    free_a = np.resize(free_a, cap)
                    scan_t_a = np.resize(scan_t_a, cap)
                    scan_m_a = np.resize(scan_m_a, cap)
                    scan_slot_a = np.resize(scan_slot_a, cap)
                    cand_a = np.resize(cand_a, cap)
                    cand_m_a = np.resize(cand_m_a, cap)
                    h_new = np.zeros((cap, 8), dtype=np.float64)
                    h_new[:n_slots] = hot_a[:n_slots]
                    hot_a = h_new
                    c_new = np.zeros((cap, 4), dtype=np.float64)
                    c_new[:n_slots] = cold_a[:n_slots]
                    cold_a = c_new
                    s_new = np.zeros((cap, 8), dtype=np.float64)
                    s_new[:n_slots] = sums_a[:n_slots]
                    sums_a = s_new
                    r_new = np.zeros((cap, 4, K), dtype=np.float64)
                    r_new[:n_slots] = ring_a[:n_slots]
                    ring_a = r_new
                    f_new = np.zeros((cap, 5), dtype=np.float32)
                    f_new[:n_live] = scan_f_a[:n_live]
                    scan_f_a = f_new
                    hot = hot_a
                    cold = cold_a
                    oid = oid_a
                    latched = latched_a
                    head = head_a
                    wn = wn_a
                    sums = sums_a
                    ring = ring_a
                    free_slots = free_a
                    scan_t = scan_t_a
                    scan_m = scan_m_a
                    scan_f = scan_f_a
                    scan_slot = scan_slot_a
                    cand = cand_a
                    cand_m = cand_m_a
                best = n_slots
                n_slots += 1
            best_live = n_live
            scan_slot[n_live] = best
            n_live += 1
            n_created += 1
            oid[best] = n_created
            hot[best, 1] = 1.0
            latched[best] = 1 if 1.0 >= m_a else 0
            hot[best, 0] = tj
            cold[best, 3] = thj
            lift = thj
            head[best] = 0
            wn[best] = 0
            for c in range(8):
                sums[best, c] = 0.0
        else:
            hot[best, 1] = best_m + 1.0
            hot[best, 0] = tj
            if not latched[best] and hot[best, 1] >= m_a:
                latched[best] = 1
            lift = cold[best, 3] + _circ_diff(thj, cold[best, 3])
            cold[best, 3] = lift

        # sequential least-squares window update
        if wn[best] == K:
            pos = head[best]
            o_ts = ring[best, 0, pos] - cold[best, 0]
            sums[best, 0] -= o_ts
            sums[best, 1] -= o_ts * o_ts
            sums[best, 2] -= ring[best, 1, pos]
            sums[best, 3] -= ring[best, 1, pos] * o_ts
            sums[best, 4] -= ring[best, 2, pos]
            sums[best, 5] -= ring[best, 2, pos] * o_ts
            sums[best, 6] -= ring[best, 3, pos]
            sums[best, 7] -= ring[best, 3, pos] * o_ts
            wn[best] -= 1
            head[best] = (head[best] + 1) % K
            new_ref = ring[best, 0, head[best]]
            dshift = new_ref - cold[best, 0]
            if dshift != 0.0:
                fn = <double>wn[best]
                sums[best, 1] = sums[best, 1] - 2.0 * dshift * sums[best, 0] + fn * dshift * dshift
                sums[best, 0] = sums[best, 0] - fn * dshift
                sums[best, 3] = sums[best, 3] - dshift * sums[best, 2]
                sums[best, 5] = sums[best, 5] - dshift * sums[best, 4]
                sums[best, 7] = sums[best, 7] - dshift * sums[best, 6]
                cold[best, 0] = new_ref
        if wn[best] == 0:
            cold[best, 0] = tj
            head[best] = 0
        tail = (head[best] + wn[best]) % K
        ts = tj - cold[best, 0]
        ring[best, 0, tail] = tj
        ring[best, 1, tail] = xj
        ring[best, 2, tail] = yj
        ring[best, 3, tail] = lift
        sums[best, 0] += ts
        sums[best, 1] += ts * ts
        sums[best, 2] += xj
        sums[best, 3] += xj * ts
        sums[best, 4] += yj
        sums[best, 5] += yj * ts
        sums[best, 6] += lift
        sums[best, 7] += lift * ts
        wn[best] += 1

        if wn[best] < 2:
            hot[best, 4] = 0.0
            hot[best, 6] = 0.0
            cold[best, 2] = 0.0
            hot[best, 3] = xj
            hot[best, 5] = yj
            cold[best, 1] = lift
        else:
            fn = <double>wn[best]
            vt = sums[best, 1] - sums[best, 0] * sums[best, 0] / fn
            if vt <= 0.0:
                hot[best, 4] = 0.0
                hot[best, 6] = 0.0
                cold[best, 2] = 0.0
                hot[best, 3] = xj
                hot[best, 5] = yj
                cold[best, 1] = lift
            else:
                hot[best, 4] = (sums[best, 3] - sums[best, 2] * sums[best, 0] / fn) / vt
                hot[best, 6] = (sums[best, 5] - sums[best, 4] * sums[best, 0] / fn) / vt
                cold[best, 2] = (sums[best, 7] - sums[best, 6] * sums[best, 0] / fn) / vt
                tb = ts - sums[best, 0] / fn
                hot[best, 3] = sums[best, 2] / fn + hot[best, 4] * tb
                hot[best, 5] = sums[best, 4] / fn + hot[best, 6] * tb
                cold[best, 1] = sums[best, 6] / fn + cold[best, 2] * tb
        hot[best, 2] = tj

        # refresh the live-scan shadows of the touched hypothesis
        scan_t[best_live] = tj
        scan_m[best_live] = hot[best, 1]
        scan_f[best_live, 0] = <float>hot[best, 2]
        scan_f[best_live, 1] = <float>hot[best, 3]
        scan_f[best_live, 2] = <float>hot[best, 4]
        scan_f[best_live, 3] = <float>hot[best, 5]
        scan_f[best_live, 4] = <float>hot[best, 6]

        if emit_all or latched[best]:
            out_idx[n_out] = i
            out_oid[n_out] = oid[best]
            out_lat[n_out] = latched[best]
            n_out += 1

    return (
        out_idx_arr[:n_out].copy(),
        out_oid_arr[:n_out].copy(),
        out_lat_arr[:n_out].copy(),
        int(n_created),
    )
