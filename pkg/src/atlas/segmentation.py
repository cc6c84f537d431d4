"""Overlapping clip decomposition of a video timeline.

All times are exact rationals quantized to milliseconds, so start timestamps
never drift no matter how long the video is. Clip i (1-based) starts at
(i - 1) * (clip_len - overlap); the final window is clamped to the video end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import BadRequestError

Seconds = Fraction


def to_seconds(value: int | float | str | Fraction) -> Seconds:
    """Quantize a seconds value to millisecond granularity."""
    if isinstance(value, Fraction):
        frac = value
    elif isinstance(value, int):
        return Fraction(value)
    elif isinstance(value, (float, str)):
        frac = Fraction(value)
    else:
        raise BadRequestError(f"cannot interpret {value!r} as seconds")
    return Fraction(round(frac * 1000), 1000)


def seconds_float(value: Seconds) -> float:
    return float(value)


@dataclass(frozen=True)
class SegmentationParams:
    clip_len_s: Seconds = Fraction(30)
    overlap_s: Seconds = Fraction(5)

    def __post_init__(self):
        object.__setattr__(self, "clip_len_s", to_seconds(self.clip_len_s))
        object.__setattr__(self, "overlap_s", to_seconds(self.overlap_s))
        if self.clip_len_s <= 0:
            raise BadRequestError("clip length must be positive")
        if not (0 <= self.overlap_s < self.clip_len_s):
            raise BadRequestError("overlap must satisfy 0 <= overlap < clip length")

    @property
    def stride_s(self) -> Seconds:
        return self.clip_len_s - self.overlap_s


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    duration_s: Seconds
    fps: float
    source_uri: str = ""

    def __post_init__(self):
        object.__setattr__(self, "duration_s", to_seconds(self.duration_s))
        if self.duration_s <= 0:
            raise BadRequestError(f"video {self.video_id!r}: duration must be positive")
        if self.fps <= 0:
            raise BadRequestError(f"video {self.video_id!r}: fps must be positive")


@dataclass(frozen=True)
class ClipWindow:
    video_id: str
    index: int  # 1-based
    start_s: Seconds
    length_s: Seconds

    @property
    def end_s(self) -> Seconds:
        return self.start_s + self.length_s


def clip_count(duration_s, params: SegmentationParams) -> int:
    duration = to_seconds(duration_s)
    if duration <= 0:
        raise BadRequestError("duration must be positive")
    if duration <= params.clip_len_s:
        return 1
    return math.ceil((duration - params.clip_len_s) / params.stride_s) + 1


def clip_start(index: int, params: SegmentationParams) -> Seconds:
    if index < 1:
        raise BadRequestError("clip index is 1-based")
    return (index - 1) * params.stride_s


def segment(video: VideoMeta, params: SegmentationParams) -> list[ClipWindow]:
    """Emit the full ordered window list for one video."""
    count = clip_count(video.duration_s, params)
    windows = []
    for index in range(1, count + 1):
        start = clip_start(index, params)
        end = min(start + params.clip_len_s, video.duration_s)
        windows.append(
            ClipWindow(
                video_id=video.video_id,
                index=index,
                start_s=start,
                length_s=end - start,
            )
        )
    return windows
