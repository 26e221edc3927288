"""Event-based multi-hypothesis tracker.

Each hypothesis is a leaky integrate-and-fire unit: its membrane potential
decays linearly over time, is bumped by every detection assigned to it, and
the hypothesis dies the moment the potential reaches zero. Once the
potential has ever reached the activation threshold the hypothesis latches
active and stays active for the rest of its life.

Velocity is estimated by sequential least squares over a rolling window of
the last K observations (running sums with eviction, no refits). The
orientation coordinate is regressed on an unwrapped lift: each incoming
angle is mapped to the representative nearest the previously lifted one, so
covariances are computed on plain reals and estimates are wrapped only on
output.

The compiled kernel mirrors ``Tracker.process`` (and the small operation
functions it calls) expression-for-expression; edits here must be carried
over to ``_kernels/_core.pyx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import ValidationError
from .events import EventStream

TWO_PI = 2.0 * math.pi


def circular_difference(a: float, b: float) -> float:
    """Signed circular difference a - b wrapped into (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d <= -math.pi:
        d += TWO_PI
    elif d > math.pi:
        d -= TWO_PI
    return d


@dataclass
class TrackerConfig:
    """Tracker parameters. Defaults suit a ~10 Hz per-object detection rate."""

    gamma: float = 2.0                 # membrane decay, 1/s
    activation_threshold: float = 5.0  # potential needed to latch active
    d_max: float = 15.0                # assignment radius, pixels
    angle_weight_scale: float = 0.1    # V: angular weight per unit speed
    window: int = 30                   # K: rolling observation window
    emit_all: bool = False             # diagnostics: emit unactivated tracks too

    def __post_init__(self):
        if self.gamma <= 0 or self.activation_threshold <= 0 or self.d_max <= 0:
            raise ValidationError("tracker rates and thresholds must be positive")
        if self.angle_weight_scale < 0 or self.window < 1:
            raise ValidationError("bad angle weight or window length")


class Hypothesis:
    """One tracked-object hypothesis (see module docstring for the model)."""

    __slots__ = (
        "oid", "m", "latched", "t_m", "t_obs", "ref",
        "zx", "zy", "zth", "bx", "by", "bth", "last_lift",
        "wt", "wx", "wy", "wth", "head", "wn",
        "st", "stt", "sx", "sxt", "sy", "syt", "sth", "stht",
    )

    def __init__(self, oid: int, k_window: int):
        self.oid = oid
        self.m = 0.0
        self.latched = False
        self.t_m = 0.0
        self.t_obs = 0.0
        self.ref = 0.0
        self.zx = 0.0
        self.zy = 0.0
        self.zth = 0.0
        self.bx = 0.0
        self.by = 0.0
        self.bth = 0.0
        self.last_lift = 0.0
        self.wt = [0.0] * k_window
        self.wx = [0.0] * k_window
        self.wy = [0.0] * k_window
        self.wth = [0.0] * k_window
        self.head = 0
        self.wn = 0
        self.st = 0.0
        self.stt = 0.0
        self.sx = 0.0
        self.sxt = 0.0
        self.sy = 0.0
        self.syt = 0.0
        self.sth = 0.0
        self.stht = 0.0

    def activation(self, m_a: float) -> float:
        """Activation level in [0, 1]; 1 permanently once latched."""
        return 1.0 if self.latched else self.m / m_a


def predict(h: Hypothesis, t: float) -> Tuple[float, float, float]:
    """Linear extrapolation of the hypothesis state to time t.

    The returned orientation is wrapped into [0, 2*pi).
    """
    dt = t - h.t_obs
    th = math.fmod(h.zth + h.bth * dt, TWO_PI)
    if th < 0.0:
        th += TWO_PI
    return h.zx + h.bx * dt, h.zy + h.by * dt, th


def membrane_level(h: Hypothesis, t: float, cfg: TrackerConfig) -> float:
    """Membrane potential decayed to time t (pure; no state change).

    The potential is a linear function of the time since the hypothesis was
    last touched, so it can be evaluated lazily at any detection timestamp.
    """
    return h.m - cfg.gamma * (t - h.t_m)


def weighted_distance(h: Hypothesis, x: float, y: float, theta: float, t: float, cfg: TrackerConfig) -> float:
    """Distance from a detection to the predicted state.

    The angular term is weighted by V * speed * activation, so a fresh or
    stationary hypothesis ignores orientation entirely.
    """
    dt = t - h.t_obs
    px = h.zx + h.bx * dt
    py = h.zy + h.by * dt
    pth = h.zth + h.bth * dt
    speed = math.sqrt(h.bx * h.bx + h.by * h.by)
    a = 1.0 if h.latched else membrane_level(h, t, cfg) / cfg.activation_threshold
    w = cfg.angle_weight_scale * speed * a
    cd = circular_difference(theta, pth)
    dx = x - px
    dy = y - py
    return math.sqrt(dx * dx + dy * dy + w * cd * cd)


def assign(
    x: float, y: float, theta: float, t: float,
    hypotheses: List[Hypothesis], cfg: TrackerConfig,
) -> Optional[int]:
    """Index of the nearest hypothesis strictly inside d_max, else None.

    Ties resolve to the lowest object id (hypotheses are kept in creation
    order and the comparison is strict). The comparison runs in squared
    space; the spatial part alone already ruling a hypothesis out skips the
    angular term, which cannot change the winner since its weight is
    non-negative.
    """
    best = None
    best_d2 = cfg.d_max * cfg.d_max
    for idx, h in enumerate(hypotheses):
        dt = t - h.t_obs
        dx = x - (h.zx + h.bx * dt)
        dy = y - (h.zy + h.by * dt)
        part = dx * dx + dy * dy
        if part >= best_d2:
            continue
        pth = h.zth + h.bth * dt
        speed = math.sqrt(h.bx * h.bx + h.by * h.by)
        a = 1.0 if h.latched else membrane_level(h, t, cfg) / cfg.activation_threshold
        w = cfg.angle_weight_scale * speed * a
        cd = circular_difference(theta, pth)
        d2 = part + w * cd * cd
        if d2 < best_d2:
            best_d2 = d2
            best = idx
    return best


def membrane_update(h: Hypothesis, assigned: bool, t: float, cfg: TrackerConfig) -> bool:
    """Decay the membrane to time t, then bump it if a detection was assigned.

    Returns False (and clamps to zero) when the potential has decayed away,
    which deletes the hypothesis. An assigned bump that carries the
    potential past the activation threshold latches the hypothesis active
    for good.
    """
    m = membrane_level(h, t, cfg)
    h.t_m = t
    if m <= 0.0:
        h.m = 0.0
        return False
    if assigned:
        m = m + 1.0
    h.m = m
    if assigned and not h.latched and h.m >= cfg.activation_threshold:
        h.latched = True
    return True


def sls_update(h: Hypothesis, t: float, x: float, y: float, theta_lift: float, k_window: int) -> None:
    """Push an observation and refresh the sequential least-squares estimate.

    ``theta_lift`` must already be unwrapped. Sums are kept relative to the
    oldest window timestamp to avoid cancellation; on eviction the reference
    shifts forward and the sums are re-based in O(1).
    """
    if h.wn == k_window:
        pos = h.head
        o_ts = h.wt[pos] - h.ref
        h.st -= o_ts
        h.stt -= o_ts * o_ts
        h.sx -= h.wx[pos]
        h.sxt -= h.wx[pos] * o_ts
        h.sy -= h.wy[pos]
        h.syt -= h.wy[pos] * o_ts
        h.sth -= h.wth[pos]
        h.stht -= h.wth[pos] * o_ts
        h.wn -= 1
        h.head = (h.head + 1) % k_window
        new_ref = h.wt[h.head]
        dshift = new_ref - h.ref
        if dshift != 0.0:
            fn = float(h.wn)
            h.stt = h.stt - 2.0 * dshift * h.st + fn * dshift * dshift
            h.st = h.st - fn * dshift
            h.sxt = h.sxt - dshift * h.sx
            h.syt = h.syt - dshift * h.sy
            h.stht = h.stht - dshift * h.sth
            h.ref = new_ref
    if h.wn == 0:
        h.ref = t
        h.head = 0
    tail = (h.head + h.wn) % k_window
    ts = t - h.ref
    h.wt[tail] = t
    h.wx[tail] = x
    h.wy[tail] = y
    h.wth[tail] = theta_lift
    h.st += ts
    h.stt += ts * ts
    h.sx += x
    h.sxt += x * ts
    h.sy += y
    h.syt += y * ts
    h.sth += theta_lift
    h.stht += theta_lift * ts
    h.wn += 1

    if h.wn < 2:
        h.bx = 0.0
        h.by = 0.0
        h.bth = 0.0
        h.zx = x
        h.zy = y
        h.zth = theta_lift
    else:
        fn = float(h.wn)
        vt = h.stt - h.st * h.st / fn
        if vt <= 0.0:
            h.bx = 0.0
            h.by = 0.0
            h.bth = 0.0
            h.zx = x
            h.zy = y
            h.zth = theta_lift
        else:
            h.bx = (h.sxt - h.sx * h.st / fn) / vt
            h.by = (h.syt - h.sy * h.st / fn) / vt
            h.bth = (h.stht - h.sth * h.st / fn) / vt
            tb = ts - h.st / fn
            h.zx = h.sx / fn + h.bx * tb
            h.zy = h.sy / fn + h.by * tb
            h.zth = h.sth / fn + h.bth * tb
    h.t_obs = t


class Tracker:
    """Sequential per-stream tracker; one instance per detection stream."""

    def __init__(self, cfg: TrackerConfig):
        self.cfg = cfg
        self.hypotheses: List[Hypothesis] = []
        self.n_created = 0

    def process(self, t: float, x: float, y: float, theta: float) -> Tuple[int, bool]:
        """Consume one detection; returns (object id, hypothesis latched).

        Membranes are evaluated lazily: the potential at t follows from the
        hypothesis's last touch, so only the receiving hypothesis is written.
        """
        cfg = self.cfg
        self.hypotheses = [h for h in self.hypotheses if membrane_level(h, t, cfg) > 0.0]

        idx = assign(x, y, theta, t, self.hypotheses, cfg)
        if idx is None:
            self.n_created += 1
            h = Hypothesis(self.n_created, cfg.window)
            h.m = 1.0
            h.latched = h.m >= cfg.activation_threshold
            h.t_m = t
            h.last_lift = theta
            lift = theta
            self.hypotheses.append(h)
        else:
            h = self.hypotheses[idx]
            membrane_update(h, True, t, cfg)
            lift = h.last_lift + circular_difference(theta, h.last_lift)
            h.last_lift = lift
        sls_update(h, t, x, y, lift, cfg.window)
        return h.oid, h.latched

    def run(self, detections: EventStream) -> Tuple[EventStream, int]:
        """Track a whole detection stream; returns (track stream, n created)."""
        out_idx = []
        out_oid = []
        t = detections.t
        for i in range(len(detections)):
            oid, latched = self.process(
                float(t[i]), float(detections.x[i]), float(detections.y[i]),
                float(detections.theta[i]),
            )
            if self.cfg.emit_all or latched:
                out_idx.append(i)
                out_oid.append(oid)
        stream = detections.select(np.array(out_idx, dtype=np.int64))
        stream.object_id = np.array(out_oid, dtype=np.int64)
        return stream, self.n_created


def run_tracker(detections: EventStream, cfg: Optional[TrackerConfig] = None) -> Tuple[EventStream, int]:
    """Track a time-ordered single-polarity detection stream (fast path).

    Returns the tracking stream (detections of activated objects, tagged
    with their object id) and the total number of hypotheses created.
    """
    from . import _kernels

    cfg = cfg or TrackerConfig()
    if detections.theta is None:
        raise ValidationError("tracking requires a detection stream with theta")
    emit_idx, oids, _latched, n_created = _kernels.track_events(
        detections.t,
        detections.x.astype(np.float64),
        detections.y.astype(np.float64),
        detections.theta,
        cfg.gamma,
        cfg.activation_threshold,
        cfg.d_max,
        cfg.angle_weight_scale,
        cfg.window,
        1 if cfg.emit_all else 0,
    )
    stream = detections.select(emit_idx)
    stream.object_id = oids
    return stream, n_created


def track(detections: EventStream, cfg: Optional[TrackerConfig] = None) -> EventStream:
    """Tracking stream only (see run_tracker)."""
    return run_tracker(detections, cfg)[0]
