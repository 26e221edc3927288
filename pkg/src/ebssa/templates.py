"""Rotated half-bar template bank and the angular activation tests.

Each template is a half-bar of length R+1 and width 3 pixels (weight +1)
anchored at the ROI center and pointing outward at angle 2*pi*(k-1)/N for
template k; every other in-disc pixel carries the penalty weight s and
out-of-disc entries are 0. The N templates are flattened row-wise into an
(N, D^2) lookup table so one vector-matrix multiply yields the angular
activation vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import ValidationError
from .surface import Roi, disc_mask

DEFAULT_PENALTY = -0.2
BAR_HALF_WIDTH = 1.5  # bar is 3 pixels wide


def _rasterize_bar(radius: int, angle: float) -> np.ndarray:
    """Pixel-center point-in-rectangle test for one half-bar direction."""
    d = 2 * radius + 1
    c, s = math.cos(angle), math.sin(angle)
    u = np.arange(-radius, radius + 1)
    ux, uy = np.meshgrid(u, u, indexing="xy")
    along = ux * c + uy * s
    across = -ux * s + uy * c
    bar = (along >= 0.0) & (along <= radius + 1.0) & (np.abs(across) <= BAR_HALF_WIDTH)
    return bar & disc_mask(radius)


@dataclass(frozen=True)
class TemplateBank:
    """Immutable template bank; shareable between detector instances."""

    n_templates: int
    radius: int
    penalty: float
    templates: np.ndarray  # (N, D, D) float64
    lut: np.ndarray        # (N, D*D) float64, row k = templates[k].ravel()
    # Flattened disc geometry for the per-event kernels: in-disc offsets in
    # row-major order, and per-template positions (into that ordering) of the
    # +1 bar pixels.
    disc_dx: np.ndarray = field(repr=False, default=None)
    disc_dy: np.ndarray = field(repr=False, default=None)
    bar_flat: np.ndarray = field(repr=False, default=None)
    bar_start: np.ndarray = field(repr=False, default=None)

    @property
    def d(self) -> int:
        return 2 * self.radius + 1

    def angles(self) -> np.ndarray:
        """Template pointing directions, radians."""
        return 2.0 * np.pi * np.arange(self.n_templates) / self.n_templates


def build_templates(n_templates: int, radius: int, penalty: float = DEFAULT_PENALTY) -> TemplateBank:
    """Build the rotated half-bar bank.

    When N is a multiple of 4 only the first quadrant is rasterized and the
    rest are exact 90-degree grid rotations of it, which makes the bank
    exactly covariant under quarter-turn rotations of the ROI.
    """
    if n_templates < 4:
        raise ValidationError("need at least 4 templates")
    if radius < 2:
        raise ValidationError("template radius must be at least 2")
    n, r = n_templates, radius
    d = 2 * r + 1
    disc = disc_mask(r)
    bars = np.zeros((n, d, d), dtype=bool)
    if n % 4 == 0:
        quarter = n // 4
        for k in range(quarter):
            bars[k] = _rasterize_bar(r, 2.0 * math.pi * k / n)
        for m in range(1, 4):
            for k in range(quarter):
                bars[m * quarter + k] = np.rot90(bars[(m - 1) * quarter + k], k=-1)
    else:
        for k in range(n):
            bars[k] = _rasterize_bar(r, 2.0 * math.pi * k / n)

    templates = np.where(bars, 1.0, np.where(disc, penalty, 0.0))
    lut = templates.reshape(n, d * d).copy()

    in_disc = disc.ravel()
    u = np.arange(-r, r + 1)
    ux, uy = np.meshgrid(u, u, indexing="xy")
    disc_dx = ux.ravel()[in_disc].astype(np.int32)
    disc_dy = uy.ravel()[in_disc].astype(np.int32)
    bar_lists = [np.flatnonzero(bars[k].ravel()[in_disc]).astype(np.int32) for k in range(n)]
    bar_start = np.zeros(n + 1, dtype=np.int32)
    bar_start[1:] = np.cumsum([len(b) for b in bar_lists])
    bar_flat = np.concatenate(bar_lists).astype(np.int32)

    templates.setflags(write=False)
    lut.setflags(write=False)
    return TemplateBank(
        n_templates=n,
        radius=r,
        penalty=penalty,
        templates=templates,
        lut=lut,
        disc_dx=disc_dx,
        disc_dy=disc_dy,
        bar_flat=bar_flat,
        bar_start=bar_start,
    )


def angular_activation(roi: Roi, bank: TemplateBank) -> np.ndarray:
    """Angular activation vector: LUT times the flattened ROI.

    einsum with a fixed reduction order keeps the result bit-identical to a
    per-template 2-D correlation.
    """
    if roi.radius != bank.radius:
        raise ValidationError(
            f"ROI radius {roi.radius} does not match bank radius {bank.radius}"
        )
    return np.einsum("nd,d->n", bank.lut, roi.values.ravel(), optimize=False)


def dynamic_threshold(lam: np.ndarray, w: float, formula: str = "midrange") -> float:
    """Adaptive angular threshold from the activation extremes.

    ``midrange`` is w*(max+min); ``halfrange`` (w*(max-min)) is kept as a
    config alternative.
    """
    lam = np.asarray(lam)
    if lam.size == 0:
        raise ValidationError("empty activation vector")
    lo = float(lam.min())
    hi = float(lam.max())
    if formula == "midrange":
        return w * (hi + lo)
    if formula == "halfrange":
        return w * (hi - lo)
    raise ValidationError(f"unknown threshold formula {formula!r}")


def above_threshold(lam: np.ndarray, psi: float) -> Tuple[np.ndarray, int]:
    """1-based indices of elements strictly above psi, and the 1-based argmax.

    Ties in the maximum resolve to the lowest index.
    """
    gamma = np.flatnonzero(lam > psi) + 1
    m = int(np.argmax(lam)) + 1
    return gamma, m


def unimodality_test(
    lam: np.ndarray, gamma: np.ndarray, m: int, delta: float, n_templates: int
) -> Tuple[bool, float]:
    """Shifted non-circular unimodality test.

    Computes the plain (non-circular) mean q of the 1-based indices in gamma
    and the distance zeta = |m - q|; repeats after circularly shifting the
    index space by N/2, and passes iff the smaller distance is strictly below
    delta. The returned q comes from whichever shift achieved the minimum
    (ties prefer the unshifted mean) and is mapped back to the unshifted
    index space, so q is real-valued in [1, N+1).
    """
    g = np.asarray(gamma, dtype=np.float64)
    if g.size == 0:
        raise ValidationError("gamma must be nonempty")
    n = n_templates
    half = n // 2
    q = float(g.mean())
    zeta = abs(m - q)

    g_sh = np.mod(g - 1 + half, n) + 1
    q_sh = float(g_sh.mean())
    # The shifted maximum index: among max ties of lam, the lowest shifted index.
    lam = np.asarray(lam)
    ties = np.flatnonzero(lam == lam.max()) + 1
    m_sh = int(np.min(np.mod(ties - 1 + half, n) + 1))
    zeta_sh = abs(m_sh - q_sh)

    if zeta <= zeta_sh:
        return zeta < delta, q
    q_back = float(np.mod(q_sh - 1 - half, n) + 1)
    return zeta_sh < delta, q_back
