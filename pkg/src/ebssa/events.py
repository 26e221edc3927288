"""Event stream containers and file I/O.

Streams hold microsecond integer timestamps as the canonical time; surface
math runs on derived float seconds (t_us * 1e-6). Polarity is stored in
memory as -1/+1 and on disk as 0/1.

Two interchange formats:

* CSV with header ``t_us,x,y,p`` (detections add ``theta_rad``, tracks add
  ``object_id``), UTF-8, LF line endings.
* Binary ``.ebs``: 16-byte header (magic ``EBS1``, u16 width, u16 height,
  u64 record count) followed by little-endian 16-byte records
  (u64 t_us, u16 x, u16 y, u8 p, 3 zero pad bytes).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .errors import InvalidPolarity, ParseError, ValidationError

US_PER_S = 1_000_000

BINARY_MAGIC = b"EBS1"
_RECORD_DTYPE = np.dtype(
    [("t_us", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("_pad", "V3")]
)


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor pixel array size."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"degenerate sensor geometry {self.width}x{self.height}")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def contains(self, x, y) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


DEFAULT_GEOMETRY = SensorGeometry(240, 180)


class Event(NamedTuple):
    """A single sensor event. ``p`` is -1 (OFF) or +1 (ON)."""

    t_us: int
    x: int
    y: int
    p: int

    @property
    def t(self) -> float:
        """Timestamp in seconds."""
        return self.t_us * 1e-6


@dataclass
class EventStream:
    """Column-oriented event stream, time-sorted (non-decreasing t_us).

    ``theta`` (radians) is present for detection and tracking streams;
    ``object_id`` only for tracking streams.
    """

    t_us: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    geometry: SensorGeometry = field(default=DEFAULT_GEOMETRY)
    theta: Optional[np.ndarray] = None
    object_id: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int32)
        self.y = np.asarray(self.y, dtype=np.int32)
        self.p = np.asarray(self.p, dtype=np.int8)
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.object_id is not None:
            self.object_id = np.asarray(self.object_id, dtype=np.int64)

    def __len__(self) -> int:
        return self.t_us.shape[0]

    @property
    def t(self) -> np.ndarray:
        """Timestamps in float seconds."""
        return self.t_us.astype(np.float64) * 1e-6

    @property
    def duration(self) -> float:
        """Span from t=0 to just past the last event, in seconds."""
        if len(self) == 0:
            return 0.0
        return float(self.t_us[-1] + 1) * 1e-6

    def validate(self) -> "EventStream":
        """Check stream invariants, raising ValidationError on the first hit."""
        if len(self) and np.any(np.diff(self.t_us) < 0):
            raise ValidationError("timestamps are not non-decreasing")
        if np.any(self.t_us < 0):
            raise ValidationError("negative timestamp")
        bad = ~((self.p == 1) | (self.p == -1))
        if np.any(bad):
            raise ValidationError(f"in-memory polarity must be -1/+1, got {self.p[bad][0]}")
        if np.any((self.x < 0) | (self.x >= self.geometry.width)):
            raise ValidationError("x coordinate outside sensor")
        if np.any((self.y < 0) | (self.y >= self.geometry.height)):
            raise ValidationError("y coordinate outside sensor")
        return self

    def select(self, index) -> "EventStream":
        """New stream with rows picked by a boolean mask or index array."""
        return replace(
            self,
            t_us=self.t_us[index],
            x=self.x[index],
            y=self.y[index],
            p=self.p[index],
            theta=None if self.theta is None else self.theta[index],
            object_id=None if self.object_id is None else self.object_id[index],
        )

    def with_polarity(self, polarity: int) -> "EventStream":
        """Events of one polarity only (-1 or +1)."""
        if polarity not in (-1, 1):
            raise ValidationError(f"polarity must be -1 or +1, got {polarity}")
        return self.select(self.p == polarity)

    def iter_events(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield Event(int(self.t_us[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    @staticmethod
    def empty(geometry: SensorGeometry = DEFAULT_GEOMETRY, theta=False, object_id=False):
        return EventStream(
            t_us=np.empty(0, np.int64),
            x=np.empty(0, np.int32),
            y=np.empty(0, np.int32),
            p=np.empty(0, np.int8),
            geometry=geometry,
            theta=np.empty(0, np.float64) if theta else None,
            object_id=np.empty(0, np.int64) if object_id else None,
        )


def _disk_polarity(p: np.ndarray) -> np.ndarray:
    return ((p.astype(np.int16) + 1) // 2).astype(np.uint8)


def _memory_polarity(p_disk: np.ndarray) -> np.ndarray:
    return (p_disk.astype(np.int16) * 2 - 1).astype(np.int8)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

_CSV_HEADERS = {
    "t_us,x,y,p": (False, False),
    "t_us,x,y,p,theta_rad": (True, False),
    "t_us,x,y,p,theta_rad,object_id": (True, True),
}


def write_events_csv(stream: EventStream, path) -> None:
    """Write a stream in the CSV interchange format (columns per presence)."""
    cols = ["t_us", "x", "y", "p"]
    if stream.theta is not None:
        cols.append("theta_rad")
    if stream.object_id is not None:
        if stream.theta is None:
            raise ValidationError("track CSV requires theta")
        cols.append("object_id")
    p_disk = _disk_polarity(stream.p)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(stream)):
            row = f"{stream.t_us[i]},{stream.x[i]},{stream.y[i]},{p_disk[i]}"
            if stream.theta is not None:
                row += f",{float(stream.theta[i])!r}"
            if stream.object_id is not None:
                row += f",{stream.object_id[i]}"
            fh.write(row + "\n")


def read_events_csv(path, geometry: Optional[SensorGeometry] = None) -> EventStream:
    """Read any of the three CSV stream formats.

    Bounds are validated only when ``geometry`` is given; the stream then
    carries that geometry (otherwise the default sensor size).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = fh.readline().strip()
        if header not in _CSV_HEADERS:
            raise ParseError(f"unknown CSV header {header!r}", path=path)
        has_theta, has_oid = _CSV_HEADERS[header]
        n_cols = 4 + has_theta + has_oid
        t_us, xs, ys, ps = [], [], [], []
        thetas, oids = [], []
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_cols:
                raise ParseError(f"expected {n_cols} fields, got {len(parts)}", record=i, path=path)
            try:
                t = int(parts[0])
                x = int(parts[1])
                y = int(parts[2])
                p = int(parts[3])
                if has_theta:
                    thetas.append(float(parts[4]))
                if has_oid:
                    oids.append(int(parts[5]))
            except ValueError as exc:
                raise ParseError(str(exc), record=i, path=path) from exc
            if p not in (0, 1):
                raise InvalidPolarity(f"on-disk polarity must be 0 or 1, got {p}", record=i, path=path)
            if t < 0:
                raise ParseError(f"negative timestamp {t}", record=i, path=path)
            t_us.append(t)
            xs.append(x)
            ys.append(y)
            ps.append(p)
    stream = EventStream(
        t_us=np.array(t_us, np.int64),
        x=np.array(xs, np.int32),
        y=np.array(ys, np.int32),
        p=_memory_polarity(np.array(ps, np.uint8)),
        geometry=geometry or DEFAULT_GEOMETRY,
        theta=np.array(thetas, np.float64) if has_theta else None,
        object_id=np.array(oids, np.int64) if has_oid else None,
    )
    if geometry is not None:
        stream.validate()
    return stream


# ---------------------------------------------------------------------------
# Binary
# ---------------------------------------------------------------------------


def write_events_binary(stream: EventStream, path) -> None:
    """Write the 16-byte-record binary format (events only, no theta)."""
    if np.any(stream.x < 0) or np.any(stream.y < 0):
        raise ValidationError("binary format requires non-negative coordinates")
    header = (
        BINARY_MAGIC
        + np.uint16(stream.geometry.width).tobytes()
        + np.uint16(stream.geometry.height).tobytes()
        + np.uint64(len(stream)).tobytes()
    )
    records = np.zeros(len(stream), dtype=_RECORD_DTYPE)
    records["t_us"] = stream.t_us.astype(np.uint64)
    records["x"] = stream.x.astype(np.uint16)
    records["y"] = stream.y.astype(np.uint16)
    records["p"] = _disk_polarity(stream.p)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_events_binary(path) -> EventStream:
    """Read the binary format; geometry comes from the file header."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != BINARY_MAGIC:
            raise ParseError("bad magic or truncated header", path=path)
        width = int(np.frombuffer(header, "<u2", 1, 4)[0])
        height = int(np.frombuffer(header, "<u2", 1, 6)[0])
        count = int(np.frombuffer(header, "<u8", 1, 8)[0])
        if size != 16 + 16 * count:
            raise ParseError(
                f"file size {size} does not match record count {count}", path=path
            )
        raw = np.frombuffer(fh.read(), dtype=_RECORD_DTYPE)
    geometry = SensorGeometry(width, height)
    p_disk = raw["p"]
    bad = np.flatnonzero(p_disk > 1)
    if bad.size:
        raise InvalidPolarity(
            f"on-disk polarity must be 0 or 1, got {int(p_disk[bad[0]])}",
            record=int(bad[0]),
            path=path,
        )
    stream = EventStream(
        t_us=raw["t_us"].astype(np.int64),
        x=raw["x"].astype(np.int32),
        y=raw["y"].astype(np.int32),
        p=_memory_polarity(p_disk),
        geometry=geometry,
    )
    try:
        stream.validate()
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    return stream


def read_events(path, fmt: Optional[str] = None, geometry: Optional[SensorGeometry] = None) -> EventStream:
    """Read a stream, inferring csv/binary from the extension unless forced."""
    if fmt is None:
        fmt = "binary" if str(path).endswith((".ebs", ".bin")) else "csv"
    if fmt == "binary":
        return read_events_binary(path)
    if fmt == "csv":
        return read_events_csv(path, geometry=geometry)
    raise ValidationError(f"unknown event format {fmt!r}")


def write_events(stream: EventStream, path, fmt: Optional[str] = None) -> None:
    if fmt is None:
        fmt = "binary" if str(path).endswith((".ebs", ".bin")) else "csv"
    if fmt == "binary":
        write_events_binary(stream, path)
    elif fmt == "csv":
        write_events_csv(stream, path)
    else:
        raise ValidationError(f"unknown event format {fmt!r}")


def merge_streams(a: EventStream, b: EventStream) -> EventStream:
    """Merge two time-sorted streams into one (stable time sort)."""
    if a.geometry != b.geometry:
        raise ValidationError("cannot merge streams with different geometry")
    t = np.concatenate([a.t_us, b.t_us])
    order = np.argsort(t, kind="stable")
    both_theta = a.theta is not None and b.theta is not None
    both_oid = a.object_id is not None and b.object_id is not None
    return EventStream(
        t_us=t[order],
        x=np.concatenate([a.x, b.x])[order],
        y=np.concatenate([a.y, b.y])[order],
        p=np.concatenate([a.p, b.p])[order],
        geometry=a.geometry,
        theta=np.concatenate([a.theta, b.theta])[order] if both_theta else None,
        object_id=np.concatenate([a.object_id, b.object_id])[order] if both_oid else None,
    )
