"""Orientation-invariant streak-tip feature detector.

Per event, in order: time-surface update, disc ROI extraction, surface
activation test (noise gate), angular activation against the template bank,
static or adaptive thresholding, and the shifted non-circular unimodality
test. Survivors become detection events carrying the orientation
theta = 2*pi*(q-1)/N derived from the mean above-threshold template index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ValidationError
from .events import EventStream
from .templates import DEFAULT_PENALTY, TemplateBank, build_templates


@dataclass
class DetectorConfig:
    """Feature detector parameters (times in seconds, lengths in pixels)."""

    radius: int = 7                    # R: ROI radius; D = 2R+1
    n_templates: int = 36              # N: angular resolution of the bank
    penalty: float = DEFAULT_PENALTY   # s: off-bar in-disc template weight
    tau: float = 0.4                   # surface decay constant
    phi: Optional[float] = None        # recency window; defaults to tau
    min_active: int = 3                # L: activation test needs > L recent pixels
    w_factor: float = 0.5              # W: dynamic threshold scale
    psi_static: Optional[float] = None # static threshold (static mode only)
    delta: float = 2.0                 # unimodality distance bound, index units
    threshold_mode: str = "dynamic"    # "dynamic" or "static"
    threshold_formula: str = "midrange"  # dynamic variant: midrange|halfrange

    def __post_init__(self):
        if self.threshold_mode not in ("dynamic", "static"):
            raise ValidationError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.threshold_mode == "static" and self.psi_static is None:
            raise ValidationError("static threshold mode requires psi_static")
        if self.threshold_formula not in ("midrange", "halfrange"):
            raise ValidationError(f"unknown threshold formula {self.threshold_formula!r}")
        if self.w_factor <= 0:
            raise ValidationError("w_factor must be positive")
        if self.delta < 0:
            raise ValidationError("delta must be non-negative")
        if self.tau <= 0 or (self.phi is not None and self.phi <= 0):
            raise ValidationError("tau and phi must be positive")
        if self.min_active < 0:
            raise ValidationError("min_active must be non-negative")

    @property
    def phi_effective(self) -> float:
        return self.tau if self.phi is None else self.phi

    def make_bank(self) -> TemplateBank:
        return build_templates(self.n_templates, self.radius, self.penalty)


@dataclass
class CascadeCounts:
    """Per-stage event counts through one detector run."""

    n_input: int
    n_surface_pass: int
    n_angular_pass: int
    n_detections: int
    stage_ns: Optional[Tuple[int, int, int]] = field(default=None)


def run_detector(
    stream: EventStream,
    cfg: Optional[DetectorConfig] = None,
    bank: Optional[TemplateBank] = None,
    profile: bool = False,
) -> Tuple[EventStream, CascadeCounts]:
    """Detect streak tips over a time-ordered single-polarity stream.

    Returns the detection stream (same rows augmented with theta) plus the
    cascade counts for stage accounting.
    """
    from . import _kernels

    cfg = cfg or DetectorConfig()
    if len(np.unique(stream.p)) > 1:
        raise ValidationError("detector requires a single-polarity stream")
    if bank is None:
        bank = cfg.make_bank()
    elif bank.radius != cfg.radius or bank.n_templates != cfg.n_templates:
        raise ValidationError("template bank does not match detector config")

    idx, q, n_surface, n_angular, stage_ns = _kernels.detect_events(
        stream.t,
        stream.x,
        stream.y,
        stream.geometry.width,
        stream.geometry.height,
        cfg.tau,
        cfg.phi_effective,
        cfg.min_active,
        cfg.radius,
        bank.disc_dx,
        bank.disc_dy,
        bank.bar_flat,
        bank.bar_start,
        cfg.penalty,
        cfg.n_templates,
        1 if cfg.threshold_mode == "static" else 0,
        cfg.psi_static if cfg.psi_static is not None else 0.0,
        cfg.w_factor,
        1 if cfg.threshold_formula == "halfrange" else 0,
        cfg.delta,
        profile=profile,
    )
    detections = stream.select(idx)
    detections.theta = 2.0 * np.pi * (q - 1.0) / cfg.n_templates
    counts = CascadeCounts(
        n_input=len(stream),
        n_surface_pass=n_surface,
        n_angular_pass=n_angular,
        n_detections=len(detections),
        stage_ns=stage_ns,
    )
    return detections, counts


def detect(
    stream: EventStream,
    cfg: Optional[DetectorConfig] = None,
    bank: Optional[TemplateBank] = None,
) -> EventStream:
    """Detection stream only (see run_detector)."""
    return run_detector(stream, cfg, bank)[0]
