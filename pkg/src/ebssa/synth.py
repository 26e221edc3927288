"""Analytic artificial recordings: parametric trajectories plus Poisson events.

Three standard objects per recording: a slow linear drifter, a circular
mover, and an absolute-value-folded circle whose folds produce jerk-like
velocity discontinuities. Pixels within the signal radius of any on-sensor
object fire as a Poisson process at rate lambda1; every other pixel fires
at the background rate lambda0. Ground-truth labels are sampled from the
same trajectory equations at 10 ms keyframes, split into on-sensor runs.

Object positions are held constant within 1 ms simulation slices; event
timestamps are uniform integer microseconds within their slice. Everything
is driven by one seeded generator, so a fixed seed reproduces the recording
byte-for-byte.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ValidationError
from .events import DEFAULT_GEOMETRY, EventStream, SensorGeometry, write_events_binary
from .metrics import LabelSet, LabeledObject, save_labels

SLICE_US = 1000
LABEL_STEP_US = 10_000

_KIND_TO_LABEL = {
    "linear": "straight",
    "constant": "straight",
    "circle": "curved",
    "folded_circle": "irregular",
}


@dataclass(frozen=True)
class Trajectory:
    """One parametric object; times in seconds, positions in pixels."""

    kind: str
    beta: Tuple[float, float]
    alpha: Tuple[float, float] = (0.0, 0.0)
    omega: float = 0.0
    phase: float = 0.0
    t_max: float = 10.0
    rate: Optional[float] = None   # per-object signal rate override
    t_on: float = 0.0
    t_off: Optional[float] = None  # defaults to t_max

    def position(self, t: np.ndarray) -> np.ndarray:
        """(n, 2) array of positions at times t."""
        t = np.asarray(t, dtype=np.float64)
        bx, by = self.beta
        if self.kind == "linear":
            ax, ay = self.alpha
            return np.column_stack((bx + ax * t / self.t_max, by + ay * t / self.t_max))
        if self.kind == "constant":
            return np.column_stack((np.full_like(t, bx), np.full_like(t, by)))
        ph = self.omega * t / self.t_max + self.phase
        a = self.alpha[0]
        x = bx + a * np.cos(ph)
        y = by + a * np.sin(ph)
        if self.kind == "circle":
            return np.column_stack((x, y))
        if self.kind == "folded_circle":
            return np.column_stack((np.abs(x), np.abs(y)))
        raise ValidationError(f"unknown trajectory kind {self.kind!r}")

    def present(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        off = self.t_max if self.t_off is None else self.t_off
        return (t >= self.t_on) & (t <= off)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "beta": list(self.beta),
            "alpha": list(self.alpha),
            "omega": self.omega,
            "phase": self.phase,
            "t_on": self.t_on,
            "t_off": self.t_max if self.t_off is None else self.t_off,
            "rate": self.rate,
        }


@dataclass
class SynthConfig:
    """Standard three-object recording parameters."""

    seed: int = 0
    geometry: SensorGeometry = field(default=DEFAULT_GEOMETRY)
    t_max: float = 10.0
    lambda1: float = 10.0       # signal rate, events/pixel/s
    lambda0: float = 0.01       # background rate, events/pixel/s
    signal_radius: float = 3.0
    alpha_from_interval: bool = False  # draw linear velocity from [-20,20] instead of {-20,20}

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda0 < 0:
            raise ValidationError("lambda1 must be positive and lambda0 non-negative")
        if self.t_max <= 0:
            raise ValidationError("t_max must be positive")


@dataclass
class SynthRecording:
    events: EventStream
    labels: LabelSet
    truth: dict


def draw_standard_objects(rng: np.random.Generator, cfg: SynthConfig) -> List[Trajectory]:
    """Draw the slow drifter, the circular mover and the folded circle."""
    if cfg.alpha_from_interval:
        a1 = (rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0))
    else:
        a1 = (float(rng.choice([-20.0, 20.0])), float(rng.choice([-20.0, 20.0])))
    b1 = (rng.uniform(50.0, 150.0), rng.uniform(50.0, 150.0))
    b2 = (rng.uniform(50.0, 150.0), rng.uniform(50.0, 150.0))
    w2 = float(rng.choice([-3.0 * math.pi, 3.0 * math.pi]))
    p2 = rng.uniform(0.0, 2.0 * math.pi)
    b3 = (rng.uniform(50.0, 150.0), rng.uniform(50.0, 150.0))
    w3 = float(rng.choice([-2.0 * math.pi, 2.0 * math.pi]))
    p3 = rng.uniform(0.0, 2.0 * math.pi)
    t = cfg.t_max
    return [
        Trajectory(kind="linear", beta=b1, alpha=a1, t_max=t),
        Trajectory(kind="circle", beta=b2, alpha=(100.0, 100.0), omega=w2, phase=p2, t_max=t),
        Trajectory(kind="folded_circle", beta=b3, alpha=(100.0, 100.0), omega=w3, phase=p3, t_max=t),
    ]


def _on_sensor(pos: np.ndarray, geometry: SensorGeometry) -> np.ndarray:
    return (
        (pos[:, 0] >= 0.0)
        & (pos[:, 0] < geometry.width)
        & (pos[:, 1] >= 0.0)
        & (pos[:, 1] < geometry.height)
    )


def generate_events(
    objects: Sequence[Trajectory],
    geometry: SensorGeometry,
    t_max: float,
    lambda1: float,
    lambda0: float,
    signal_radius: float,
    rng: np.random.Generator,
) -> EventStream:
    """Poisson event stream for the given objects over [0, t_max)."""
    w, h = geometry.width, geometry.height
    t_max_us = int(round(t_max * 1e6))
    n_slices = t_max_us // SLICE_US
    centers = (np.arange(n_slices, dtype=np.float64) + 0.5) * (SLICE_US * 1e-6)

    span = int(math.floor(signal_radius)) + 1
    offs = np.arange(-span, span + 1)
    odx, ody = np.meshgrid(offs, offs, indexing="xy")
    odx = odx.ravel()
    ody = ody.ravel()

    # (slice, pixel, rate) triplets of every active signal pixel
    all_keys = []
    all_rates = []
    obj_pos = []
    obj_active = []
    for obj in objects:
        pos = obj.position(centers)
        active = obj.present(centers) & _on_sensor(pos, geometry)
        obj_pos.append(pos)
        obj_active.append(active)
        idx = np.flatnonzero(active)
        if idx.size == 0:
            continue
        cx = pos[idx, 0]
        cy = pos[idx, 1]
        px = np.floor(cx)[:, None] + odx[None, :]
        py = np.floor(cy)[:, None] + ody[None, :]
        dist2 = (px - cx[:, None]) ** 2 + (py - cy[:, None]) ** 2
        ok = (
            (dist2 <= signal_radius * signal_radius)
            & (px >= 0) & (px < w) & (py >= 0) & (py < h)
        )
        s_idx, o_idx = np.nonzero(ok)
        keys = (
            idx[s_idx].astype(np.int64) * (w * h)
            + py[s_idx, o_idx].astype(np.int64) * w
            + px[s_idx, o_idx].astype(np.int64)
        )
        all_keys.append(keys)
        rate = lambda1 if obj.rate is None else obj.rate
        all_rates.append(np.full(keys.shape, rate))

    if all_keys:
        keys = np.concatenate(all_keys)
        rates = np.concatenate(all_rates)
        # overlapping objects: a pixel fires at the max of the claimed rates
        order = np.lexsort((-rates, keys))
        keys = keys[order]
        rates = rates[order]
        _, first = np.unique(keys, return_index=True)
        keys = keys[first]
        rates = rates[first]
        counts = rng.poisson(rates * (SLICE_US * 1e-6))
        nz = np.flatnonzero(counts)
        rep = counts[nz]
        k_rep = np.repeat(keys[nz], rep)
        sig_slice = k_rep // (w * h)
        sig_pix = k_rep % (w * h)
        sig_t = sig_slice * SLICE_US + rng.integers(0, SLICE_US, k_rep.size)
        sig_x = (sig_pix % w).astype(np.int32)
        sig_y = (sig_pix // w).astype(np.int32)
    else:
        sig_t = np.empty(0, dtype=np.int64)
        sig_x = np.empty(0, dtype=np.int32)
        sig_y = np.empty(0, dtype=np.int32)

    # Background: full-plane Poisson thinned by the signal-region predicate,
    # which leaves exactly rate lambda0 on the complement.
    n_noise = rng.poisson(lambda0 * w * h * t_max)
    nx = rng.integers(0, w, n_noise).astype(np.int32)
    ny = rng.integers(0, h, n_noise).astype(np.int32)
    nt = rng.integers(0, t_max_us, n_noise)
    n_slice = nt // SLICE_US
    keep = np.ones(n_noise, dtype=bool)
    for pos, active in zip(obj_pos, obj_active):
        act = active[n_slice]
        dx = nx - pos[n_slice, 0]
        dy = ny - pos[n_slice, 1]
        keep &= ~(act & (dx * dx + dy * dy <= signal_radius * signal_radius))

    t_us = np.concatenate([sig_t, nt[keep]])
    xs = np.concatenate([sig_x, nx[keep]])
    ys = np.concatenate([sig_y, ny[keep]])
    order = np.argsort(t_us, kind="stable")
    return EventStream(
        t_us=t_us[order],
        x=xs[order],
        y=ys[order],
        p=np.ones(order.size, dtype=np.int8),
        geometry=geometry,
    )


def make_labels(objects: Sequence[Trajectory], geometry: SensorGeometry, t_max: float) -> LabelSet:
    """Keyframe labels at 10 ms steps, split into contiguous on-sensor runs."""
    t_max_us = int(round(t_max * 1e6))
    kts = np.arange(0, t_max_us + 1, LABEL_STEP_US, dtype=np.int64)
    out = []
    for obj in objects:
        pos = obj.position(kts * 1e-6)
        good = obj.present(kts * 1e-6) & _on_sensor(pos, geometry)
        if not good.any():
            continue
        padded = np.concatenate(([False], good, [False]))
        flips = np.diff(padded.astype(np.int8))
        run_starts = np.flatnonzero(flips == 1)
        run_ends = np.flatnonzero(flips == -1)  # exclusive
        for s, e in zip(run_starts, run_ends):
            out.append(
                LabeledObject(
                    kind=_KIND_TO_LABEL[obj.kind],
                    t_us=kts[s:e],
                    xs=pos[s:e, 0],
                    ys=pos[s:e, 1],
                )
            )
    return LabelSet(objects=out)


def generate(cfg: SynthConfig) -> SynthRecording:
    """Standard three-object artificial recording."""
    rng = np.random.default_rng(cfg.seed)
    objects = draw_standard_objects(rng, cfg)
    return generate_scene(objects, cfg, rng=rng)


def generate_scene(
    objects: Sequence[Trajectory],
    cfg: SynthConfig,
    rng: Optional[np.random.Generator] = None,
) -> SynthRecording:
    """Recording for an explicit object list (custom scenes, benchmarks)."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    events = generate_events(
        objects, cfg.geometry, cfg.t_max, cfg.lambda1, cfg.lambda0, cfg.signal_radius, rng
    )
    labels = make_labels(objects, cfg.geometry, cfg.t_max)
    truth = {
        "seed": cfg.seed,
        "geometry": [cfg.geometry.width, cfg.geometry.height],
        "t_max": cfg.t_max,
        "lambda1": cfg.lambda1,
        "lambda0": cfg.lambda0,
        "signal_radius": cfg.signal_radius,
        "objects": [o.describe() for o in objects],
    }
    return SynthRecording(events=events, labels=labels, truth=truth)


DEFAULT_GRID_LAMBDA1 = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GRID_LAMBDA0 = (1e-4, 1e-2, 1.0)


def sweep_grid(
    out_dir,
    lambda1s: Sequence[float] = DEFAULT_GRID_LAMBDA1,
    lambda0s: Sequence[float] = DEFAULT_GRID_LAMBDA0,
    trials: int = 20,
    base_seed: int = 1000,
    base_cfg: Optional[SynthConfig] = None,
    max_bytes: Optional[int] = None,
) -> List[dict]:
    """Generate the rate-grid recordings to disk; returns the manifest rows.

    ``max_bytes`` aborts with ValidationError if the written volume would
    exceed the guard.
    """
    base_cfg = base_cfg or SynthConfig()
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    written = 0
    index = 0
    for l1 in lambda1s:
        for l0 in lambda0s:
            for trial in range(trials):
                cfg = replace(base_cfg, seed=base_seed + index, lambda1=l1, lambda0=l0)
                rec = generate(cfg)
                stem = f"rec_l1_{l1:g}_l0_{l0:g}_t{trial:02d}"
                ev_path = os.path.join(out_dir, stem + ".ebs")
                write_events_binary(rec.events, ev_path)
                save_labels(rec.labels, os.path.join(out_dir, stem + ".labels.json"))
                with open(os.path.join(out_dir, stem + ".truth.json"), "w", encoding="utf-8") as fh:
                    json.dump(rec.truth, fh, indent=1)
                written += os.path.getsize(ev_path)
                if max_bytes is not None and written > max_bytes:
                    raise ValidationError(f"sweep_grid exceeded disk guard of {max_bytes} bytes")
                rows.append(
                    {
                        "lambda1": l1,
                        "lambda0": l0,
                        "trial": trial,
                        "seed": cfg.seed,
                        "events": stem + ".ebs",
                        "labels": stem + ".labels.json",
                        "truth": stem + ".truth.json",
                        "n_events": len(rec.events),
                    }
                )
                index += 1
    return rows
