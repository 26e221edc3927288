"""Comparison detectors: global-maximum, Hough line, and the post-hoc combiner.

All baselines share the feature detector's front end (per-polarity time
surface plus the surface activation noise gate); only events passing the
gate reach the detector proper.

The GMD emits a detection whenever the current ROI activation sum exceeds
the exponentially decayed running maximum. The Hough detector votes each
passing event into a decaying (rho, phi) accumulator where a pixel's
re-fire refreshes rather than accumulates its vote; a bin crossing the line
threshold triggers endpoint extraction along the line, and the endpoint
with the lower 75th-percentile ROI activation (the trail) is discarded.
The combiner is an evaluation benchmark only: it needs ground truth and,
per 1 ms window, copies whichever detector scored the higher standalone
informedness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import ValidationError
from .events import EventStream, SensorGeometry
from .metrics import LabelSet, per_window_informedness
from .surface import disc_mask

# Hough trigger levels, calibrated on background-only streams so that a
# noise recording at real-sky rates produces no line detections.
DEFAULT_LINE_THRESHOLD = 68.0
DEFAULT_ENDPOINT_THRESHOLD = 0.5


@dataclass
class BaselineConfig:
    """Front end shared by the baseline detectors."""

    radius: int = 7
    tau: float = 0.4
    phi: Optional[float] = None   # recency window; defaults to tau
    min_active: int = 3

    def __post_init__(self):
        if self.tau <= 0:
            raise ValidationError("tau must be positive")

    @property
    def phi_effective(self) -> float:
        return self.tau if self.phi is None else self.phi


@dataclass
class HoughConfig(BaselineConfig):
    n_phi: int = 180              # pi/180 angular bins
    line_threshold: float = DEFAULT_LINE_THRESHOLD
    endpoint_threshold: float = DEFAULT_ENDPOINT_THRESHOLD


def _front_end_mask(stream: EventStream, cfg: BaselineConfig) -> np.ndarray:
    from . import _kernels

    r = cfg.radius
    u = np.arange(-r, r + 1)
    ux, uy = np.meshgrid(u, u, indexing="xy")
    keep = (ux * ux + uy * uy <= r * r).ravel()
    ddx = ux.ravel()[keep].astype(np.int32)
    ddy = uy.ravel()[keep].astype(np.int32)
    return _kernels.surface_pass_mask(
        stream.t, stream.x, stream.y,
        stream.geometry.width, stream.geometry.height,
        cfg.phi_effective, cfg.min_active, ddx, ddy,
    )


def _check_single_polarity(stream: EventStream) -> None:
    if len(np.unique(stream.p)) > 1:
        raise ValidationError("baseline detectors require a single-polarity stream")


def gmd_detect(stream: EventStream, cfg: Optional[BaselineConfig] = None) -> EventStream:
    """Event-based global maximum detector (orientation undefined, theta=0).

    The running maximum decays with the surface constant tau, so it is
    continually refreshed without scanning the whole surface.
    """
    cfg = cfg or BaselineConfig()
    _check_single_polarity(stream)
    passing = _front_end_mask(stream, cfg)
    w, h = stream.geometry.width, stream.geometry.height
    r = cfg.radius
    disc = disc_mask(r)
    T = np.full((h + 2 * r, w + 2 * r), -np.inf)  # padded; never-hit border
    g_max = 0.0
    t_g = 0.0
    t_arr = stream.t
    out = []
    for i in range(len(stream)):
        t = t_arr[i]
        x = int(stream.x[i])
        y = int(stream.y[i])
        T[y + r, x + r] = t
        if not passing[i]:
            continue
        window = T[y : y + 2 * r + 1, x : x + 2 * r + 1]
        roi_sum = float(np.exp((window[disc] - t) / cfg.tau).sum())
        if roi_sum > g_max * math.exp(-(t - t_g) / cfg.tau):
            g_max = roi_sum
            t_g = t
            out.append(i)
    idx = np.array(out, dtype=np.int64)
    det = stream.select(idx)
    det.theta = np.zeros(len(idx), dtype=np.float64)
    return det


def _vote(acc, t_bin, rho_bins, phi_idx, t, weight, tau):
    """Lazy-decay accumulator update for one event's line bins."""
    vals = acc[rho_bins, phi_idx] * np.exp((t_bin[rho_bins, phi_idx] - t) / tau) + weight
    acc[rho_bins, phi_idx] = vals
    t_bin[rho_bins, phi_idx] = t
    return vals


def hough_votes(stream: EventStream, cfg: Optional[HoughConfig] = None, gated: bool = True):
    """Accumulator state after voting the whole stream (no line extraction).

    Diagnostic/test aid: returns (acc, t_bin, diag) where values decayed to
    each bin's own last update time. ``gated=False`` votes every event,
    bypassing the surface-activation front end.
    """
    cfg = cfg or HoughConfig()
    if gated:
        passing = _front_end_mask(stream, cfg)
    else:
        passing = np.ones(len(stream), dtype=bool)
    w, h = stream.geometry.width, stream.geometry.height
    diag = int(math.ceil(math.hypot(w, h)))
    phis = np.pi * np.arange(cfg.n_phi) / cfg.n_phi
    cosp, sinp = np.cos(phis), np.sin(phis)
    acc = np.zeros((2 * diag + 1, cfg.n_phi))
    t_bin = np.zeros((2 * diag + 1, cfg.n_phi))
    T = np.full((h, w), -np.inf)
    phi_idx = np.arange(cfg.n_phi)
    t_arr = stream.t
    for i in range(len(stream)):
        t = t_arr[i]
        x = int(stream.x[i])
        y = int(stream.y[i])
        t_prev = T[y, x]
        T[y, x] = t
        if not passing[i]:
            continue
        weight = 1.0 if t_prev == -np.inf else 1.0 - math.exp((t_prev - t) / cfg.tau)
        rho_bins = np.rint(x * cosp + y * sinp).astype(np.int64) + diag
        _vote(acc, t_bin, rho_bins, phi_idx, t, weight, cfg.tau)
    return acc, t_bin, diag


def _line_profile(T, t, tau, rho, c, s, geometry, r_pad):
    """Surface activation along a line, projected on the x or y sensor edge.

    Returns (positions along the walk, pixel xs, pixel ys, activation),
    where activation is the 3-pixel transverse read-out sum.
    """
    w, h = geometry.width, geometry.height
    if abs(s) >= abs(c):
        xs = np.arange(w)
        ys = np.rint((rho - xs * c) / s).astype(np.int64)
        ok = (ys >= 0) & (ys < h)
        xs, ys = xs[ok], ys[ok]
        act = np.zeros(len(xs))
        for d in (-1, 0, 1):
            yy = ys + d
            act += np.where(
                (yy >= 0) & (yy < h),
                np.exp((T[yy + r_pad, xs + r_pad] - t) / tau),
                0.0,
            )
    else:
        ys = np.arange(h)
        xs = np.rint((rho - ys * s) / c).astype(np.int64)
        ok = (xs >= 0) & (xs < w)
        xs, ys = xs[ok], ys[ok]
        act = np.zeros(len(xs))
        for d in (-1, 0, 1):
            xx = xs + d
            act += np.where(
                (xx >= 0) & (xx < w),
                np.exp((T[ys + r_pad, xx + r_pad] - t) / tau),
                0.0,
            )
    return xs, ys, act


def _roi_percentile(T, t, tau, x, y, r, disc, q=75.0) -> float:
    """75th-percentile activation of the fired in-disc pixels at an endpoint.

    Never-hit pixels are excluded: the streak tip's disc reaches into
    virgin territory, and counting its zeros would invert the comparison
    (the tip is the end with the *more recent* events, not the fuller disc).
    """
    window = T[y : y + 2 * r + 1, x : x + 2 * r + 1]
    hit = window[disc]
    hit = hit[hit != -np.inf]
    if hit.size == 0:
        return 0.0
    vals = np.exp((hit - t) / tau)
    return float(np.percentile(vals, q))


def hough_detect(stream: EventStream, cfg: Optional[HoughConfig] = None) -> EventStream:
    """Event-based Hough line detector with streak-tip endpoint selection.

    Detections carry theta = the line's normal angle. After a line fires,
    its accumulator bin resets so the same line must re-accumulate before
    triggering again.
    """
    cfg = cfg or HoughConfig()
    _check_single_polarity(stream)
    passing = _front_end_mask(stream, cfg)
    geom = stream.geometry
    w, h = geom.width, geom.height
    r = cfg.radius
    disc = disc_mask(r)
    diag = int(math.ceil(math.hypot(w, h)))
    n_rho = 2 * diag + 1
    n_phi = cfg.n_phi
    phis = np.pi * np.arange(n_phi) / n_phi
    cosp = np.cos(phis)
    sinp = np.sin(phis)

    acc = np.zeros((n_rho, n_phi))
    t_bin = np.zeros((n_rho, n_phi))
    T = np.full((h + 2 * r, w + 2 * r), -np.inf)
    t_arr = stream.t
    phi_idx = np.arange(n_phi)

    out_idx = []
    out_x = []
    out_y = []
    out_theta = []
    for i in range(len(stream)):
        t = t_arr[i]
        x = int(stream.x[i])
        y = int(stream.y[i])
        t_prev = T[y + r, x + r]
        T[y + r, x + r] = t
        if not passing[i]:
            continue
        # refresh vote: the pixel's previous contribution is replaced
        weight = 1.0 if t_prev == -np.inf else 1.0 - math.exp((t_prev - t) / cfg.tau)
        rho_bins = np.rint(x * cosp + y * sinp).astype(np.int64) + diag
        vals = _vote(acc, t_bin, rho_bins, phi_idx, t, weight, cfg.tau)

        hot = np.flatnonzero(vals > cfg.line_threshold)
        for j in hot:
            rho = float(rho_bins[j] - diag)
            xs, ys, act = _line_profile(T, t, cfg.tau, rho, cosp[j], sinp[j], geom, r)
            acc[rho_bins[j], j] = 0.0
            if len(xs) == 0:
                continue
            peak = int(np.argmax(act))
            if act[peak] < cfg.endpoint_threshold:
                continue
            lo = peak
            while lo - 1 >= 0 and act[lo - 1] >= cfg.endpoint_threshold:
                lo -= 1
            hi = peak
            while hi + 1 < len(act) and act[hi + 1] >= cfg.endpoint_threshold:
                hi += 1
            p_lo = _roi_percentile(T, t, cfg.tau, int(xs[lo]), int(ys[lo]), r, disc)
            p_hi = _roi_percentile(T, t, cfg.tau, int(xs[hi]), int(ys[hi]), r, disc)
            tip = hi if p_hi >= p_lo else lo
            out_idx.append(i)
            out_x.append(int(xs[tip]))
            out_y.append(int(ys[tip]))
            out_theta.append(float(phis[j]))

    det = stream.select(np.array(out_idx, dtype=np.int64))
    det.x = np.array(out_x, dtype=np.int32)
    det.y = np.array(out_y, dtype=np.int32)
    det.theta = np.array(out_theta, dtype=np.float64)
    return det


def combine_post_hoc(
    gmd: EventStream,
    hough: EventStream,
    labels: LabelSet,
    geometry: SensorGeometry,
    window_s: float = 0.001,
    r: float = 10.0,
    duration_us: Optional[int] = None,
) -> EventStream:
    """Ground-truth-assisted best-of-both detection stream.

    For every window the detector with the higher standalone informedness
    wins and its detections are copied verbatim; ties go to the GMD. This
    peeks at the labels, so it is an evaluation benchmark, not a deployable
    detector.
    """
    if labels is None:
        raise ValidationError("the post-hoc combiner requires ground-truth labels")
    window_us = int(round(window_s * 1e6))
    streams = {"gmd": gmd, "hough": hough}
    inf = per_window_informedness(
        streams, labels, geometry, window_us, r=r, duration_us=duration_us
    )
    n_windows = len(inf["gmd"])
    bounds = window_us * np.arange(n_windows + 1, dtype=np.int64)
    g_at = np.searchsorted(gmd.t_us, bounds, side="left")
    h_at = np.searchsorted(hough.t_us, bounds, side="left")

    parts = []
    for k in range(n_windows):
        if inf["gmd"][k] >= inf["hough"][k]:
            parts.append(gmd.select(slice(g_at[k], g_at[k + 1])))
        else:
            parts.append(hough.select(slice(h_at[k], h_at[k + 1])))
    t_us = np.concatenate([p.t_us for p in parts]) if parts else np.empty(0, np.int64)
    return EventStream(
        t_us=t_us,
        x=np.concatenate([p.x for p in parts]) if parts else np.empty(0, np.int32),
        y=np.concatenate([p.y for p in parts]) if parts else np.empty(0, np.int32),
        p=np.concatenate([p.p for p in parts]) if parts else np.empty(0, np.int8),
        geometry=geometry,
        theta=np.concatenate([p.theta for p in parts]) if parts else np.empty(0, np.float64),
    )
