import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlas.errors import BadRequestError
from atlas.segmentation import (
    ClipWindow,
    SegmentationParams,
    VideoMeta,
    clip_count,
    clip_start,
    segment,
    to_seconds,
)

DEFAULT = SegmentationParams()  # tau=30, omega=5


def test_default_params():
    assert DEFAULT.clip_len_s == 30
    assert DEFAULT.overlap_s == 5
    assert DEFAULT.stride_s == 25


@pytest.mark.parametrize(
    "duration,expected",
    [(30, 1), (80, 3), (300, 12), (20, 1), (31, 2), (55, 2)],
)
def test_clip_count_examples(duration, expected):
    assert clip_count(duration, DEFAULT) == expected


@pytest.mark.parametrize("index,expected", [(1, 0), (3, 50), (12, 275)])
def test_clip_start_examples(index, expected):
    assert clip_start(index, DEFAULT) == expected


def test_clip_count_rejects_non_positive_duration():
    with pytest.raises(BadRequestError):
        clip_count(0, DEFAULT)
    with pytest.raises(BadRequestError):
        clip_count(-5, DEFAULT)


def test_clip_start_rejects_index_below_one():
    with pytest.raises(BadRequestError):
        clip_start(0, DEFAULT)


def test_invalid_params_rejected():
    with pytest.raises(BadRequestError):
        SegmentationParams(clip_len_s=30, overlap_s=30)
    with pytest.raises(BadRequestError):
        SegmentationParams(clip_len_s=30, overlap_s=-1)
    with pytest.raises(BadRequestError):
        SegmentationParams(clip_len_s=0, overlap_s=0)


def test_segment_duration_80():
    video = VideoMeta(video_id="v", duration_s=80, fps=30.0)
    windows = segment(video, DEFAULT)
    assert [(w.start_s, w.end_s) for w in windows] == [(0, 30), (25, 55), (50, 80)]
    assert [w.index for w in windows] == [1, 2, 3]


def test_segment_short_video_single_clamped_window():
    video = VideoMeta(video_id="v", duration_s=20, fps=30.0)
    assert segment(video, DEFAULT) == [
        ClipWindow(video_id="v", index=1, start_s=Fraction(0), length_s=Fraction(20))
    ]


def test_segment_exact_fit():
    video = VideoMeta(video_id="v", duration_s=30, fps=30.0)
    windows = segment(video, DEFAULT)
    assert len(windows) == 1
    assert windows[0].end_s == 30


def test_millisecond_quantization():
    assert to_seconds(0.1) == Fraction(1, 10)
    assert to_seconds("2.5") == Fraction(5, 2)
    assert to_seconds(1.0004) == Fraction(1)


@settings(max_examples=200)
@given(duration=st.integers(min_value=1, max_value=36000))
def test_properties_default_params(duration):
    _check_video(duration, DEFAULT)


@settings(max_examples=200, deadline=None)
@given(
    duration=st.integers(min_value=1, max_value=36000),
    tau=st.integers(min_value=1, max_value=600),
    omega=st.integers(min_value=0, max_value=599),
)
def test_properties_random_params(duration, tau, omega):
    if omega >= tau:
        omega = tau - 1
    _check_video(duration, SegmentationParams(clip_len_s=tau, overlap_s=omega))


def _check_video(duration, params):
    video = VideoMeta(video_id="v", duration_s=duration, fps=30.0)
    windows = segment(video, params)

    # count consistency
    assert len(windows) == clip_count(duration, params)

    # start formula and monotonicity
    for w in windows:
        assert w.start_s == (w.index - 1) * params.stride_s
    starts = [w.start_s for w in windows]
    assert all(a < b for a, b in zip(starts, starts[1:]))

    # coverage of [0, duration] with no gaps
    assert windows[0].start_s == 0
    assert windows[-1].end_s == duration
    for prev, nxt in zip(windows, windows[1:]):
        assert nxt.start_s <= prev.end_s

    # every window except possibly the last has length tau; last is clamped
    for w in windows[:-1]:
        assert w.length_s == params.clip_len_s
    assert windows[-1].length_s <= params.clip_len_s
    assert all(w.start_s + w.length_s <= duration for w in windows)

    # unclamped neighbors overlap by exactly omega
    for prev, nxt in zip(windows, windows[1:]):
        if nxt.length_s == params.clip_len_s:
            assert prev.end_s - nxt.start_s == params.overlap_s

    # the count matches the ceiling formula exactly
    if duration > params.clip_len_s:
        expected = (
            math.ceil(
                Fraction(duration - params.clip_len_s) / params.stride_s
            )
            + 1
        )
        assert len(windows) == expected
    else:
        assert len(windows) == 1
