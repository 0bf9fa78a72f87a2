"""Geometric primitives and the track/window data model.

Boxes are stored as centroid + size (cx, cy, w, h) in pixels, the
parameterization every downstream quantity (velocity, size deltas, decoder
residuals) is defined on. Corner form is derived on demand for overlap
computations. All geometry is double precision; coordinates are never
quantized to integer pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

# Canonical protocol lengths: 1 s of observation, 2 s of forecast at 30 Hz.
OBSERVED_LEN = 30
FUTURE_LEN = 60

# Frames needed by the 5-frame velocity rule used throughout.
VELOCITY_SPAN = 5

METADATA_FIELDS = ("city", "weather", "time_of_day")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: centroid (cx, cy), width w, height h, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            v = float(getattr(self, name))  # numpy scalars become plain floats
            if not math.isfinite(v):
                raise ValueError(f"BBox.{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box: w={self.w!r}, h={self.h!r} (must be > 0)")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) corner form."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return (self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh)

    @property
    def area(self) -> float:
        return self.w * self.h


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two axis-aligned boxes, in [0, 1].

    Areas are computed from the same corner arithmetic as the intersection,
    which makes iou(a, a) == 1.0 exact and keeps the result <= 1 under
    floating-point rounding.
    """
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def centroid_distance(a: BBox, b: BBox) -> float:
    """Euclidean distance between the two box centroids, in pixels."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


@dataclass(frozen=True)
class Track:
    """One object's consecutive per-frame boxes with identity and metadata.

    Box i sits at frame ``start_frame + i`` (30 Hz). ``metadata`` holds the
    clip annotations (city, weather, time_of_day) when known.
    """

    video_id: str
    track_id: int
    start_frame: int
    boxes: tuple[BBox, ...]
    metadata: Mapping[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise ValueError(f"track ({self.video_id}, {self.track_id}) has no boxes")

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.boxes) - 1

    def frame_of(self, offset: int) -> int:
        return self.start_frame + offset

    @property
    def key(self) -> tuple[str, int]:
        return (self.video_id, self.track_id)


@dataclass(frozen=True)
class WindowSource:
    """Identifies where a window was cut from: track identity + anchor frame."""

    video_id: str
    track_id: int
    anchor_frame: int


@dataclass(frozen=True)
class ObservationWindow:
    """The sample unit: observed boxes up to an anchor, future boxes after it.

    ``observed`` covers frames anchor-(p-1) .. anchor, ``future`` covers
    anchor+1 .. anchor+q. The canonical protocol is p=30, q=60. An optional
    precomputed flow feature vector may be attached for flow-aware models.
    """

    source: WindowSource
    observed: tuple[BBox, ...]
    future: tuple[BBox, ...]
    flow_feature: np.ndarray | None = None
    metadata: Mapping[str, str] | None = None

    def __post_init__(self):
        object.__setattr__(self, "observed", tuple(self.observed))
        object.__setattr__(self, "future", tuple(self.future))
        if len(self.observed) < VELOCITY_SPAN:
            raise ValueError(
                f"window needs at least {VELOCITY_SPAN} observed boxes, got {len(self.observed)}"
            )
        if not self.future:
            raise ValueError("window has no future boxes")
        if self.flow_feature is not None:
            flow = np.asarray(self.flow_feature, dtype=np.float64)
            if flow.ndim != 1:
                raise ValueError(f"flow feature must be 1-D, got shape {flow.shape}")
            if not np.all(np.isfinite(flow)):
                raise ValueError(f"flow feature for {self.source} has non-finite entries")
            flow.setflags(write=False)
            object.__setattr__(self, "flow_feature", flow)

    @property
    def horizon(self) -> int:
        return len(self.future)

    def observed_array(self) -> np.ndarray:
        """(p, 4) float64 array of observed boxes as [cx, cy, w, h] rows."""
        return boxes_to_array(self.observed)

    def future_array(self) -> np.ndarray:
        """(q, 4) float64 array of ground-truth future boxes."""
        return boxes_to_array(self.future)


@dataclass(frozen=True)
class Forecast:
    """Predicted future boxes for one window, tagged with the producing model."""

    source: WindowSource
    boxes: tuple[BBox, ...]
    model_id: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise ValueError("forecast has no boxes")


def boxes_to_array(boxes: Sequence[BBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float64 array of [cx, cy, w, h] rows."""
    out = np.empty((len(boxes), 4), dtype=np.float64)
    for i, b in enumerate(boxes):
        out[i, 0] = b.cx
        out[i, 1] = b.cy
        out[i, 2] = b.w
        out[i, 3] = b.h
    return out


def array_to_boxes(arr: np.ndarray) -> tuple[BBox, ...]:
    """Inverse of :func:`boxes_to_array`; validates each row."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (N, 4) array, got shape {arr.shape}")
    return tuple(BBox(float(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in arr)
