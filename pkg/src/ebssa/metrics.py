"""Label ingestion and event-density-activated volume statistics.

A recording is cut into fixed temporal slices (default 10 ms). Within each
slice, the pixels within the acceptance radius r of any labeled object's
interpolated trajectory form the True region (split into its connected
components); everything else is the single False region. A region counts as
*positive* when its local event density exceeds the recording's global
density, and region volumes (pixel area times slice duration) accumulate
into TP/FN/FP/TN according to (True/False x positive/negative). Sensitivity,
specificity and informedness follow from the mean volumes.

This scheme compares streams with wildly different event rates on one
scale: raw sensor output, detection streams and tracking streams all get
the same treatment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import ParseError, ValidationError
from .events import EventStream, SensorGeometry

OBJECT_KINDS = ("straight", "curved", "irregular")
_LABEL_STRUCTURE = np.ones((3, 3), dtype=bool)  # 8-connected regions


@dataclass
class LabeledObject:
    """One labeled object: typed keyframes linked by linear interpolation."""

    kind: str
    t_us: np.ndarray   # int64, strictly increasing
    xs: np.ndarray     # float64 pixels
    ys: np.ndarray     # float64 pixels

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=np.int64)
        self.xs = np.asarray(self.xs, dtype=np.float64)
        self.ys = np.asarray(self.ys, dtype=np.float64)
        if self.kind not in OBJECT_KINDS:
            raise ValidationError(f"unknown object kind {self.kind!r}")
        if len(self.t_us) == 0:
            raise ValidationError("object needs at least one keyframe")
        if np.any(np.diff(self.t_us) <= 0):
            raise ValidationError("keyframes must be strictly time-increasing")

    @property
    def t_in(self) -> float:
        """Presence start, seconds."""
        return float(self.t_us[0]) * 1e-6

    @property
    def t_out(self) -> float:
        """Presence end, seconds."""
        return float(self.t_us[-1]) * 1e-6

    def interpolate(self, t: float) -> Optional[Tuple[float, float]]:
        """Position at time t (seconds), or None outside [t_in, t_out]."""
        t_us = t * 1e6
        if t_us < self.t_us[0] or t_us > self.t_us[-1]:
            return None
        x = float(np.interp(t_us, self.t_us, self.xs))
        y = float(np.interp(t_us, self.t_us, self.ys))
        return x, y

    def polyline(self, t0_us: int, t1_us: int) -> Optional[np.ndarray]:
        """Trajectory vertices over [t0_us, t1_us] clipped to presence.

        Returns an (n, 2) array of (x, y) or None when absent for the whole
        interval. Interior keyframes are kept so the path stays piecewise
        linear within a slice.
        """
        lo = max(t0_us, int(self.t_us[0]))
        hi = min(t1_us, int(self.t_us[-1]))
        if lo > hi:
            return None
        inner = self.t_us[(self.t_us > lo) & (self.t_us < hi)]
        ts = np.concatenate(([lo], inner, [hi])).astype(np.float64)
        return np.column_stack(
            (np.interp(ts, self.t_us, self.xs), np.interp(ts, self.t_us, self.ys))
        )


def interpolate_label(obj: LabeledObject, t: float) -> Optional[Tuple[float, float]]:
    """Module-level alias for LabeledObject.interpolate."""
    return obj.interpolate(t)


@dataclass
class LabelSet:
    """All labeled objects of one recording."""

    objects: List[LabeledObject] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def t_max(self) -> float:
        """Latest presence end across objects, seconds (0 when empty)."""
        if not self.objects:
            return 0.0
        return max(o.t_out for o in self.objects)


def load_labels(path) -> LabelSet:
    """Read the label JSON: {"objects": [{"type", "keyframes": [[t_us,x,y],..]}]}."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON: {exc}", path=path) from exc
    if not isinstance(doc, dict) or "objects" not in doc:
        raise ParseError("label file must be an object with an 'objects' list", path=path)
    objects = []
    for i, entry in enumerate(doc["objects"]):
        try:
            kf = np.asarray(entry["keyframes"], dtype=np.float64)
            if kf.ndim != 2 or kf.shape[1] != 3:
                raise ValueError("keyframes must be [t_us, x, y] triples")
            objects.append(
                LabeledObject(
                    kind=entry["type"],
                    t_us=kf[:, 0].astype(np.int64),
                    xs=kf[:, 1],
                    ys=kf[:, 2],
                )
            )
        except (KeyError, ValueError, ValidationError) as exc:
            raise ParseError(f"object {i}: {exc}", path=path) from exc
    return LabelSet(objects=objects)


def save_labels(labels: LabelSet, path) -> None:
    doc = {
        "objects": [
            {
                "type": o.kind,
                "keyframes": [
                    [int(t), float(x), float(y)]
                    for t, x, y in zip(o.t_us, o.xs, o.ys)
                ],
            }
            for o in labels.objects
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


@dataclass
class EvalConfig:
    """Volume-metric parameters."""

    r: float = 10.0        # acceptance radius, pixels
    slice_s: float = 0.010 # temporal slice length, seconds

    def __post_init__(self):
        if self.r < 1:
            raise ValidationError("acceptance radius must be >= 1 pixel")
        if self.slice_s <= 0:
            raise ValidationError("slice length must be positive")

    @property
    def slice_us(self) -> int:
        return int(round(self.slice_s * 1e6))


@dataclass
class VolumeStats:
    """Mean classified volumes (pixel^2 * s) and the derived statistics."""

    tp: float
    tn: float
    fp: float
    fn: float
    sensitivity: float
    specificity: float
    informedness: float
    n_events: int

    @staticmethod
    def from_volumes(tp: float, tn: float, fp: float, fn: float, n_slices: int, n_events: int) -> "VolumeStats":
        ns = max(n_slices, 1)
        tp, tn, fp, fn = float(tp) / ns, float(tn) / ns, float(fp) / ns, float(fn) / ns
        sens = tp / (tp + fn) if tp + fn > 0 else 0.0
        spec = tn / (tn + fp) if tn + fp > 0 else 1.0
        return VolumeStats(
            tp=tp, tn=tn, fp=fp, fn=fn,
            sensitivity=sens, specificity=spec,
            informedness=sens + spec - 1.0,
            n_events=n_events,
        )


def _segment_mask(mask: np.ndarray, p0, p1, r: float) -> None:
    """OR into ``mask`` the pixels whose center is within r of segment p0-p1."""
    h, w = mask.shape
    x0m, x1m = min(p0[0], p1[0]) - r, max(p0[0], p1[0]) + r
    y0m, y1m = min(p0[1], p1[1]) - r, max(p0[1], p1[1]) + r
    cx0, cx1 = max(0, int(math.floor(x0m))), min(w - 1, int(math.ceil(x1m)))
    cy0, cy1 = max(0, int(math.floor(y0m))), min(h - 1, int(math.ceil(y1m)))
    if cx0 > cx1 or cy0 > cy1:
        return
    xs = np.arange(cx0, cx1 + 1, dtype=np.float64)
    ys = np.arange(cy0, cy1 + 1, dtype=np.float64)
    px, py = np.meshgrid(xs, ys, indexing="xy")
    ex, ey = p1[0] - p0[0], p1[1] - p0[1]
    dx, dy = px - p0[0], py - p0[1]
    ee = ex * ex + ey * ey
    if ee > 0.0:
        tt = np.clip((dx * ex + dy * ey) / ee, 0.0, 1.0)
        dx = dx - tt * ex
        dy = dy - tt * ey
    mask[cy0 : cy1 + 1, cx0 : cx1 + 1] |= dx * dx + dy * dy <= r * r


def slice_true_mask(
    labels: LabelSet, t0_us: int, t1_us: int, geometry: SensorGeometry, r: float
) -> np.ndarray:
    """True-region pixel mask for one slice: swept discs around trajectories."""
    mask = np.zeros((geometry.height, geometry.width), dtype=bool)
    for obj in labels.objects:
        pts = obj.polyline(t0_us, t1_us)
        if pts is None:
            continue
        if len(pts) == 1:
            _segment_mask(mask, pts[0], pts[0], r)
        for a, b in zip(pts[:-1], pts[1:]):
            _segment_mask(mask, a, b, r)
    return mask


class _SlicePack:
    """Connected True-region components of one slice, plus their areas."""

    __slots__ = ("comp", "n_comp", "comp_areas", "true_area", "false_area")

    def __init__(self, labels: LabelSet, t0_us: int, t1_us: int, geometry: SensorGeometry, r: float):
        mask = slice_true_mask(labels, t0_us, t1_us, geometry, r)
        self.true_area = int(np.count_nonzero(mask))
        self.false_area = geometry.n_pixels - self.true_area
        if self.true_area:
            self.comp, self.n_comp = ndimage.label(mask, structure=_LABEL_STRUCTURE)
            self.comp_areas = np.bincount(self.comp.ravel())[1:]
        else:
            self.comp, self.n_comp, self.comp_areas = None, 0, None

    def classify(self, xs, ys, slice_s_vol: float, rho: float):
        """(tp, tn, fp, fn) volume contributions of one slice of one stream."""
        tp = tn = fp = fn = 0.0
        n_true = 0
        if self.true_area:
            if len(xs):
                ids = self.comp[ys, xs]
                comp_counts = np.bincount(ids, minlength=self.n_comp + 1)
                n_true = int(comp_counts[1:].sum())
            else:
                comp_counts = np.zeros(self.n_comp + 1, dtype=np.int64)
            for c in range(1, self.n_comp + 1):
                vol = self.comp_areas[c - 1] * slice_s_vol
                dens = comp_counts[c] / vol
                if dens > rho:
                    tp += vol
                else:
                    fn += vol
        if self.false_area:
            n_false = len(xs) - n_true
            vol = self.false_area * slice_s_vol
            dens = n_false / vol
            if dens > rho:
                fp += vol
            else:
                tn += vol
        return tp, tn, fp, fn


def _resolve_duration(streams, labels, t_start_us, duration_us):
    if duration_us is None:
        last = max(
            [int(s.t_us[-1]) + 1 - t_start_us for s in streams.values() if len(s)],
            default=0,
        )
        duration_us = max(last, int(math.ceil(labels.t_max * 1e6)) - t_start_us)
    if duration_us <= 0:
        raise ValidationError("cannot evaluate a zero-duration recording")
    return duration_us


def evaluate_many(
    streams: Dict[str, EventStream],
    labels: LabelSet,
    geometry: SensorGeometry,
    cfg: Optional[EvalConfig] = None,
    t_start_us: int = 0,
    duration_us: Optional[int] = None,
) -> Dict[str, VolumeStats]:
    """Evaluate several streams against one label set.

    The True-region geometry depends only on the labels, so it is computed
    once per slice and shared across streams. Each stream is evaluated as a
    pure function of its own events (its own global density).
    """
    cfg = cfg or EvalConfig()
    names = list(streams)
    duration_us = _resolve_duration(streams, labels, t_start_us, duration_us)
    slice_us = cfg.slice_us
    n_slices = (duration_us + slice_us - 1) // slice_us
    slice_s_vol = slice_us * 1e-6
    area_total = geometry.n_pixels
    duration_s = duration_us * 1e-6

    rho_g = {}
    slice_starts = {}
    for name in names:
        s = streams[name]
        if len(s) and s.geometry != geometry:
            raise ValidationError(f"stream {name!r} geometry does not match")
        n = len(s)
        rho_g[name] = n / (area_total * duration_s) if n else 0.0
        bounds = t_start_us + slice_us * np.arange(n_slices + 1, dtype=np.int64)
        slice_starts[name] = np.searchsorted(s.t_us, bounds, side="left")

    vols = {name: np.zeros(4) for name in names}  # tp, tn, fp, fn

    for k in range(n_slices):
        t0 = t_start_us + k * slice_us
        pack = _SlicePack(labels, t0, t0 + slice_us, geometry, cfg.r)
        for name in names:
            s = streams[name]
            lo, hi = slice_starts[name][k], slice_starts[name][k + 1]
            vols[name] += pack.classify(s.x[lo:hi], s.y[lo:hi], slice_s_vol, rho_g[name])

    return {
        name: VolumeStats.from_volumes(*vols[name], n_slices=n_slices, n_events=len(streams[name]))
        for name in names
    }


def per_window_informedness(
    streams: Dict[str, EventStream],
    labels: LabelSet,
    geometry: SensorGeometry,
    window_us: int,
    r: float = 10.0,
    t_start_us: int = 0,
    duration_us: Optional[int] = None,
) -> Dict[str, np.ndarray]:
    """Standalone informedness of every window of every stream.

    Each window is scored as a one-slice mini recording: the window's own
    event count sets its global density, so the result depends only on the
    events inside the window (and the labels). Used by the post-hoc
    detector combiner.
    """
    names = list(streams)
    duration_us = _resolve_duration(streams, labels, t_start_us, duration_us)
    n_windows = (duration_us + window_us - 1) // window_us
    window_s = window_us * 1e-6
    area_total = geometry.n_pixels

    starts = {}
    for name in names:
        bounds = t_start_us + window_us * np.arange(n_windows + 1, dtype=np.int64)
        starts[name] = np.searchsorted(streams[name].t_us, bounds, side="left")

    out = {name: np.zeros(n_windows) for name in names}
    for k in range(n_windows):
        t0 = t_start_us + k * window_us
        pack = _SlicePack(labels, t0, t0 + window_us, geometry, r)
        for name in names:
            s = streams[name]
            lo, hi = starts[name][k], starts[name][k + 1]
            rho = (hi - lo) / (area_total * window_s) if hi > lo else 0.0
            tp, tn, fp, fn = pack.classify(s.x[lo:hi], s.y[lo:hi], window_s, rho)
            stats = VolumeStats.from_volumes(tp, tn, fp, fn, n_slices=1, n_events=hi - lo)
            out[name][k] = stats.informedness
    return out


def evaluate(
    stream: EventStream,
    labels: LabelSet,
    geometry: SensorGeometry,
    cfg: Optional[EvalConfig] = None,
    t_start_us: int = 0,
    duration_us: Optional[int] = None,
) -> VolumeStats:
    """Volume statistics of one event stream against one label set."""
    return evaluate_many({"stream": stream}, labels, geometry, cfg, t_start_us, duration_us)["stream"]


def sweep_r(
    streams: Dict[str, EventStream],
    labels: LabelSet,
    geometry: SensorGeometry,
    r_values: Sequence[float],
    slice_s: float = 0.010,
) -> List[dict]:
    """Evaluate the streams across acceptance radii; returns table rows."""
    rows = []
    for r in r_values:
        if r < 1:
            raise ValidationError("acceptance radius must be >= 1 pixel")
        stats = evaluate_many(streams, labels, geometry, EvalConfig(r=float(r), slice_s=slice_s))
        for name, st in stats.items():
            rows.append(
                {
                    "r": float(r),
                    "stream": name,
                    "sensitivity": st.sensitivity,
                    "specificity": st.specificity,
                    "informedness": st.informedness,
                    "n_events": st.n_events,
                }
            )
    return rows


def sweep_tau(
    events: EventStream,
    labels: LabelSet,
    geometry: SensorGeometry,
    taus: Sequence[float],
    det_cfg=None,
    trk_cfg=None,
    eval_cfg: Optional[EvalConfig] = None,
) -> List[dict]:
    """Full-pipeline informedness per surface decay constant.

    Re-runs detection and tracking for every tau (the recency window
    follows tau unless pinned in det_cfg) and evaluates raw, detection and
    tracking streams; returns table rows.
    """
    from dataclasses import replace

    from .detector import DetectorConfig, run_detector
    from .tracker import TrackerConfig, run_tracker

    det_cfg = det_cfg or DetectorConfig()
    trk_cfg = trk_cfg or TrackerConfig()
    rows = []
    for tau in taus:
        cfg = replace(det_cfg, tau=float(tau))
        det, _ = run_detector(events, cfg)
        trk, _ = run_tracker(det, trk_cfg)
        stats = evaluate_many(
            {"raw": events, "detect": det, "track": trk}, labels, geometry, eval_cfg
        )
        for name, st in stats.items():
            rows.append(
                {
                    "tau": float(tau),
                    "stream": name,
                    "sensitivity": st.sensitivity,
                    "specificity": st.specificity,
                    "informedness": st.informedness,
                    "n_events": st.n_events,
                }
            )
    return rows


def write_stats_csv(rows: Iterable[dict], path) -> None:
    """Write stats rows in the canonical column order of their dict keys."""
    rows = list(rows)
    if not rows:
        raise ValidationError("no stats rows to write")
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
