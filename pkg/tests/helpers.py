"""Independent oracles shared by the test modules.

These deliberately avoid the library's own fast paths: brute-force scans,
batch refits, and direct geometry, so the implementations are checked
against a second route.
"""

import math

import numpy as np

from ebssa.events import Event, EventStream
from ebssa.surface import TimeSurface, extract_roi, surface_activation_test
from ebssa.templates import above_threshold, angular_activation, dynamic_threshold, unimodality_test


def brute_force_activation(timestamps, radius, current_t, phi, min_active):
    """Count recent in-disc pixels by scanning the whole D x D patch."""
    d = 2 * radius + 1
    count = 0
    for row in range(d):
        for col in range(d):
            ux = col - radius
            uy = row - radius
            if ux * ux + uy * uy > radius * radius:
                continue
            if current_t - timestamps[row, col] < phi:
                count += 1
    return count > min_active


def reference_detect(stream: EventStream, cfg, bank):
    """Slow composition of the public per-event operations.

    Returns (detection indices, q values, n_surface, n_angular); used as the
    oracle for the fused kernel.
    """
    surface = TimeSurface(stream.geometry, int(stream.p[0]) if len(stream) else 1, cfg.tau)
    phi = cfg.phi_effective
    out_idx = []
    out_q = []
    n_surface = 0
    n_angular = 0
    t = stream.t
    for i in range(len(stream)):
        e = Event(int(stream.t_us[i]), int(stream.x[i]), int(stream.y[i]), int(stream.p[i]))
        et = float(t[i])
        surface.T[e.y, e.x] = et
        roi = extract_roi(surface, e, cfg.radius, et)
        if not surface_activation_test(roi, et, phi, cfg.min_active):
            continue
        n_surface += 1
        lam = angular_activation(roi, bank)
        if cfg.threshold_mode == "static":
            psi = cfg.psi_static
        else:
            psi = dynamic_threshold(lam, cfg.w_factor, cfg.threshold_formula)
        gamma, m = above_threshold(lam, psi)
        if gamma.size == 0:
            continue
        n_angular += 1
        passed, q = unimodality_test(lam, gamma, m, cfg.delta, cfg.n_templates)
        if passed:
            out_idx.append(i)
            out_q.append(q)
    return np.array(out_idx, np.int64), np.array(out_q, np.float64), n_surface, n_angular


def batch_slope_intercept(ts, zs):
    """Centered batch least squares over an explicit window."""
    ts = np.asarray(ts, dtype=np.float64)
    zs = np.asarray(zs, dtype=np.float64)
    tm = ts.mean()
    zm = zs.mean()
    vt = ((ts - tm) ** 2).sum()
    if len(ts) < 2 or vt == 0.0:
        return 0.0, zs[-1]
    slope = ((ts - tm) * (zs - zm)).sum() / vt
    return slope, zm - slope * tm


def point_segment_dist2(px, py, ax, ay, bx, by):
    """Squared distance from a point to a segment, scalar math only."""
    ex, ey = bx - ax, by - ay
    dx, dy = px - ax, py - ay
    ee = ex * ex + ey * ey
    if ee > 0.0:
        tt = min(1.0, max(0.0, (dx * ex + dy * ey) / ee))
        dx -= tt * ex
        dy -= tt * ey
    return dx * dx + dy * dy


def spearman(xs, ys):
    """Spearman rank correlation (no ties expected in use)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    rx = np.argsort(np.argsort(xs)).astype(np.float64)
    ry = np.argsort(np.argsort(ys)).astype(np.float64)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt((rx * rx).sum() * (ry * ry).sum())
    return float((rx * ry).sum() / denom) if denom else 0.0


def random_stream(rng, n, width, height, t_max_s=2.0, polarity=1, unique_t=True):
    """Random single-polarity noise stream for kernel tests.

    Unique timestamps by default: equal-timestamp pixels produce exact
    activation ties where different (all-correct) float summation orders
    may disagree, which is out of scope for cross-formulation equality
    tests. Parity tests pass unique_t=False to cover event dumps.
    """
    from ebssa.events import SensorGeometry

    span = int(t_max_s * 1e6)
    if unique_t:
        t_us = np.sort(rng.choice(span, size=n, replace=False)).astype(np.int64)
    else:
        t_us = np.sort(rng.integers(0, span, n)).astype(np.int64)
    return EventStream(
        t_us=t_us,
        x=rng.integers(0, width, n).astype(np.int32),
        y=rng.integers(0, height, n).astype(np.int32),
        p=np.full(n, polarity, dtype=np.int8),
        geometry=SensorGeometry(width, height),
    )


def detections_near_truth(det, labels, r=10.0):
    """Per-object flags: any detection within r of the interpolated position."""
    hits = [False] * len(labels.objects)
    for i in range(len(det)):
        t = det.t_us[i] * 1e-6
        for k, obj in enumerate(labels.objects):
            if hits[k]:
                continue
            p = obj.interpolate(t)
            if p is not None and (det.x[i] - p[0]) ** 2 + (det.y[i] - p[1]) ** 2 <= r * r:
                hits[k] = True
    return hits
