"""Track filtering, window extraction, and motion-based clip selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import FUTURE_LEN, OBSERVED_LEN, ObservationWindow, Track, WindowSource

# 3 seconds at 30 Hz: shorter tracks cannot yield a single window.
MIN_TRACK_FRAMES = 90

# 20-second clips at 30 Hz.
CLIP_FRAMES = 600
FLOW_MAGNITUDE_THRESHOLD = 1.5


def filter_short_tracks(tracks: Sequence[Track], min_frames: int = MIN_TRACK_FRAMES) -> list[Track]:
    """Keep only tracks with at least ``min_frames`` boxes, order preserved."""
    if min_frames < 1:
        raise ValueError(f"min_frames must be >= 1, got {min_frames}")
    return [t for t in tracks if len(t) >= min_frames]


def extract_windows(
    track: Track,
    p: int = OBSERVED_LEN,
    q: int = FUTURE_LEN,
    stride: int = 1,
) -> list[ObservationWindow]:
    """Cut observation windows from one track.

    One window per anchor offset t (advancing by ``stride``) such that the p
    observed frames t-p+1..t and the q future frames t+1..t+q all lie inside
    the track. A track shorter than p+q yields no windows. Windows inherit
    the track's metadata.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = len(track)
    windows = []
    for t in range(p - 1, n - q, stride):
        source = WindowSource(track.video_id, track.track_id, track.frame_of(t))
        windows.append(
            ObservationWindow(
                source=source,
                observed=track.boxes[t - p + 1 : t + 1],
                future=track.boxes[t + 1 : t + q + 1],
                metadata=track.metadata,
            )
        )
    return windows


@dataclass(frozen=True)
class ClipInterval:
    """Inclusive frame range of one selected clip."""

    start_frame: int
    end_frame: int

    def __len__(self) -> int:
        return self.end_frame - self.start_frame + 1


def motion_filter_clips(
    flow_magnitudes: Sequence[float] | np.ndarray,
    threshold: float = FLOW_MAGNITUDE_THRESHOLD,
    clip_frames: int = CLIP_FRAMES,
) -> list[ClipInterval]:
    """Select fixed-length clips whose frames all stay at or below ``threshold``.

    Greedy left-to-right selection of non-overlapping intervals of exactly
    ``clip_frames`` consecutive frames containing no frame whose mean flow
    magnitude exceeds the threshold; for fixed-length intervals the greedy
    scan is maximal-count.
    """
    mags = np.asarray(flow_magnitudes, dtype=np.float64)
    if mags.ndim != 1:
        raise ValueError(f"flow magnitudes must be 1-D, got shape {mags.shape}")
    if mags.size and (not np.all(np.isfinite(mags)) or np.any(mags < 0)):
        raise ValueError("flow magnitudes must be finite and non-negative")
    if clip_frames < 1:
        raise ValueError(f"clip_frames must be >= 1, got {clip_frames}")

    bad = np.flatnonzero(mags > threshold)
    intervals = []
    i = 0
    n = mags.size
    j = 0  # index into bad of the first bad frame >= i
    while i + clip_frames <= n:
        while j < bad.size and bad[j] < i:
            j += 1
        if j < bad.size and bad[j] < i + clip_frames:
            i = int(bad[j]) + 1  # skip past the spike; no clip can cover it
        else:
            intervals.append(ClipInterval(i, i + clip_frames - 1))
            i += clip_frames
    return intervals
