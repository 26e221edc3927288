"""Per-polarity exponentially decaying time surfaces and disc ROIs.

The surface stores the last-event timestamp per pixel (float seconds,
-inf = never hit). The read-out at query time t is exp((T - t) / tau),
so a never-hit pixel reads exactly 0 and a just-updated pixel reads 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .events import Event, SensorGeometry
from .errors import ValidationError

NEVER = -np.inf


@lru_cache(maxsize=32)
def disc_mask(radius: int) -> np.ndarray:
    """Boolean (D, D) mask of pixels within ``radius`` of the center, D=2R+1."""
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r, indexing="xy")
    m = dx * dx + dy * dy <= radius * radius
    m.setflags(write=False)
    return m


class TimeSurface:
    """Last-event-timestamp grid for a single polarity.

    Single-writer: events of one stream must be applied sequentially.
    """

    def __init__(self, geometry: SensorGeometry, polarity: int, tau: float):
        if polarity not in (-1, 1):
            raise ValidationError(f"polarity must be -1 or +1, got {polarity}")
        if tau <= 0:
            raise ValidationError("tau must be positive")
        self.geometry = geometry
        self.polarity = polarity
        self.tau = tau
        self.T = np.full((geometry.height, geometry.width), NEVER, dtype=np.float64)

    def update(self, event: Event) -> None:
        """Record ``event`` on the surface (polarity and bounds are enforced)."""
        if event.p != self.polarity:
            raise ValidationError(
                f"event polarity {event.p} does not match surface polarity {self.polarity}"
            )
        if not self.geometry.contains(event.x, event.y):
            raise ValidationError(f"event at ({event.x},{event.y}) outside sensor")
        self.T[event.y, event.x] = event.t

    def value_at(self, x: int, y: int, query_t: float) -> float:
        """Decayed read-out of one pixel at ``query_t`` (0 if never hit)."""
        return float(np.exp((self.T[y, x] - query_t) / self.tau))

    def readout(self, query_t: float) -> np.ndarray:
        """Decayed read-out of the whole surface at ``query_t``."""
        return np.exp((self.T - query_t) / self.tau)


@dataclass
class Roi:
    """Disc-shaped patch of a time surface around one event.

    ``values`` are decayed read-outs zeroed outside the inscribed disc;
    ``timestamps`` are raw last-event times (-inf for never hit or
    out-of-sensor pixels). Both are (D, D) with D = 2*radius + 1.
    """

    center_x: int
    center_y: int
    radius: int
    values: np.ndarray
    timestamps: np.ndarray

    @property
    def d(self) -> int:
        return 2 * self.radius + 1


def extract_roi(surface: TimeSurface, event: Event, radius: int, query_t: float) -> Roi:
    """Extract the disc ROI around ``event`` read out at ``query_t``.

    Out-of-sensor pixels are treated as never hit (value 0), so events at
    the sensor edge produce zero-padded ROIs rather than being skipped.
    """
    d = 2 * radius + 1
    ts = np.full((d, d), NEVER, dtype=np.float64)
    x0 = event.x - radius
    y0 = event.y - radius
    sx0, sx1 = max(0, x0), min(surface.geometry.width, x0 + d)
    sy0, sy1 = max(0, y0), min(surface.geometry.height, y0 + d)
    if sx0 < sx1 and sy0 < sy1:
        ts[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = surface.T[sy0:sy1, sx0:sx1]
    values = np.exp((ts - query_t) / surface.tau)
    values[~disc_mask(radius)] = 0.0
    return Roi(center_x=event.x, center_y=event.y, radius=radius, values=values, timestamps=ts)


def surface_activation_test(roi: Roi, current_t: float, phi: float, min_active: int) -> bool:
    """Recency-count noise filter.

    True iff strictly more than ``min_active`` in-disc pixels received an
    event within ``phi`` seconds of ``current_t``. Both comparisons are
    strict; never-hit pixels never count.
    """
    recent = (current_t - roi.timestamps) < phi
    count = int(np.count_nonzero(recent & disc_mask(roi.radius)))
    return count > min_active
