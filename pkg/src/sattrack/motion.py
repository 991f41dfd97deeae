"""Confidence-gated online refinement of raw tracker outputs.

The quality of a response map is measured by its peak-to-sidelobe ratio
(PSR); dividing by the running per-sequence maximum turns that into a
normalized score in [0, 1].  Each frame the refinement keeps, blends or
overrides the raw model box:

* warm-up: for the first ``n1`` frames the model box passes through
  untouched while history accumulates;
* low confidence (normalized PSR below ``theta``): the model box is
  ignored and the new box is extrapolated from a least-squares linear fit
  of the recent center and size history;
* high confidence: the model displacement is blended with the mean
  historical velocity, weighted by the squared normalized PSR, and the
  size follows an exponential moving average.

All positions are pixel units, center-format boxes.  The per-frame step is
a real-time hot path, so the tracker state carries its history both as a
deque of boxes (the inspection surface) and as flat arrays the math reads
directly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox

PSR_EPS = 1e-6
MIN_SIZE = 1.0

WARMUP = "warmup"
LOW_CONFIDENCE = "low"
HIGH_CONFIDENCE = "high"


@dataclass(frozen=True)
class MotionParams:
    """Refinement settings.

    n1         -- history length and warm-up duration, in frames
    n2         -- velocity window; the mean velocity uses the last 2*n2 centers
    theta      -- normalized-PSR threshold separating the two branches
    lambda_ema -- weight of the newest size in the size moving average
    """

    n1: int = 50
    n2: int = 10
    theta: float = 0.5
    lambda_ema: float = 0.7

    def __post_init__(self):
        if self.n2 < 1:
            raise ValueError(f"n2 must be >= 1, got {self.n2}")
        if self.n1 <= 2 * self.n2:
            raise ValueError(
                f"n1 must exceed 2*n2 so the velocity window fits the history, "
                f"got n1={self.n1}, n2={self.n2}"
            )
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not (0.0 <= self.lambda_ema <= 1.0):
            raise ValueError(f"lambda_ema must lie in [0, 1], got {self.lambda_ema}")


class TrackerState:
    """Mutable per-sequence state: a bounded box history (chronological,
    oldest evicted first), the running PSR maximum and the current frame
    index.  The last scored PSR, normalized PSR and branch label are kept
    for tracing.

    Between :func:`refine_step` calls treat the state as owned by the
    refinement; mutating ``history`` by hand desynchronizes the cached
    history arrays.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"history capacity must be >= 1, got {capacity}")
        self.history: deque[BoundingBox] = deque(maxlen=capacity)
        self.psr_max = 0.0
        self.frame_index = 0
        self.last_psr = 0.0
        self.last_npsr = 0.0
        self.last_branch = ""
        self._centers = np.zeros((capacity, 2))
        self._sizes = np.zeros((capacity, 2))
        self._count = 0

    def _push(self, box: BoundingBox):
        capacity = self.history.maxlen
        if self._count == capacity:
            self._centers[:-1] = self._centers[1:]
            self._sizes[:-1] = self._sizes[1:]
        else:
            self._count += 1
        self._centers[self._count - 1] = (box.cx, box.cy)
        self._sizes[self._count - 1] = (box.w, box.h)
        self.history.append(box)


def _check_response(response) -> np.ndarray:
    response = np.asarray(response, dtype=float)
    if response.ndim != 2:
        raise ValueError(f"response map must be 2-D, got shape {response.shape}")
    if response.shape[0] < 3 or response.shape[1] < 3:
        raise ValueError(f"response map must be at least 3x3, got {response.shape}")
    if not np.all(np.isfinite(response)):
        raise ValueError("response map must be finite")
    return response


def psr(response) -> float:
    """Peak-to-sidelobe ratio of a response map.

    The sidelobe is every cell outside the 3x3 block around the global peak
    (ties resolved to the first peak in row-major order; the block is clipped
    at the borders).  Returns (peak - mean) / (std + eps) with the population
    standard deviation of the sidelobe, so a constant map scores 0.
    """
    response = _check_response(response)
    height, width = response.shape
    pi, pj = divmod(int(np.argmax(response)), width)
    i0, i1 = max(pi - 1, 0), min(pi + 2, height)
    j0, j1 = max(pj - 1, 0), min(pj + 2, width)
    block = response[i0:i1, j0:j1]
    sidelobe_count = response.size - block.size
    if sidelobe_count == 0:
        raise ValueError(f"map {response.shape} has no sidelobe outside the peak block")
    if response[pi, pj] == response.min():
        return 0.0  # flat map: peak equals the sidelobe mean exactly
    # Sidelobe statistics without gathering: whole-map sums minus the block.
    mean = (response.sum() - block.sum()) / sidelobe_count
    centered = response - mean
    square_sum = (centered * centered).sum() - (centered[i0:i1, j0:j1] ** 2).sum()
    std = math.sqrt(max(square_sum / sidelobe_count, 0.0))
    return float((response[pi, pj] - mean) / (std + PSR_EPS))


def normalized_psr(response, state: TrackerState) -> float:
    """PSR divided by the running per-sequence maximum.

    The maximum is raised first, so the result always lies in [0, 1]; while
    the maximum is still zero the score is defined as 0.
    """
    value = psr(response)
    state.psr_max = max(state.psr_max, value)
    if state.psr_max <= 0.0:
        return 0.0
    return value / state.psr_max


# Centered index vectors keyed by series length; the refinement hits the
# same length every frame, so building them once matters on the hot path.
_FIT_INDEX_CACHE: dict[int, tuple[np.ndarray, float, float]] = {}


def _fit_indices(count: int) -> tuple[np.ndarray, float, float]:
    cached = _FIT_INDEX_CACHE.get(count)
    if cached is None:
        mid = 0.5 * (count - 1)
        centered = np.arange(count, dtype=float) - mid
        cached = (centered, float(centered @ centered), mid)
        if len(_FIT_INDEX_CACHE) > 16:
            _FIT_INDEX_CACHE.clear()
        _FIT_INDEX_CACHE[count] = cached
    return cached


def linear_fit(series) -> tuple[np.ndarray, np.ndarray]:
    """Ordinary least-squares line through a (K, d) series sampled at
    0, 1, ..., K-1.  Returns (slope, intercept), each shape (d,)."""
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    count = series.shape[0]
    if count < 2:
        raise ValueError(f"linear fit needs at least 2 samples, got {count}")
    centered, norm, mid = _fit_indices(count)
    slope = (centered @ series) / norm
    intercept = series.sum(axis=0) / count - slope * mid
    return slope, intercept


def fit_value(slope: np.ndarray, intercept: np.ndarray, index: float) -> np.ndarray:
    """Evaluate a fitted line at the given sample index."""
    return intercept + slope * index


def instantaneous_velocity(centers, n2: int) -> np.ndarray:
    """Mean per-frame velocity over the last 2*n2 center positions.

    Averages the n2 displacements between the older and newer halves of the
    window, each spanning n2 frames, hence the 1/n2**2 normalization.
    """
    centers = np.asarray(centers, dtype=float)
    if n2 < 1:
        raise ValueError(f"n2 must be >= 1, got {n2}")
    if centers.ndim != 2 or centers.shape[0] < 2 * n2:
        raise ValueError(f"need at least {2 * n2} centers, got shape {centers.shape}")
    newer = centers[-n2:].sum(axis=0)
    older = centers[-2 * n2 : -n2].sum(axis=0)
    return (newer - older) / float(n2 * n2)


def refine_step(
    state: TrackerState,
    model_box: BoundingBox,
    response,
    params: MotionParams,
) -> BoundingBox:
    """Advance the tracker by one frame and return the refined box.

    Scores the response map, advances the frame counter, picks the branch
    described in the module docstring and appends the result to the history.
    Past warm-up the history must hold exactly ``n1`` boxes; a shorter one
    means the state was fed inconsistently and is reported as an error.
    """
    if state.history.maxlen != params.n1:
        raise ValueError(
            f"state history capacity {state.history.maxlen} does not match n1={params.n1}"
        )
    value = psr(response)
    state.psr_max = max(state.psr_max, value)
    npsr = value / state.psr_max if state.psr_max > 0.0 else 0.0
    state.frame_index += 1

    if state.frame_index <= params.n1:
        refined = model_box
        branch = WARMUP
    else:
        if len(state.history) < params.n1:
            raise ValueError(
                f"frame {state.frame_index} is past warm-up but history holds "
                f"{len(state.history)} boxes instead of {params.n1}"
            )
        lam = params.lambda_ema
        prev_cx, prev_cy = state._centers[params.n1 - 1]
        prev_w, prev_h = state._sizes[params.n1 - 1]
        if npsr < params.theta:
            slope_c, intercept_c = linear_fit(state._centers)
            slope_s, intercept_s = linear_fit(state._sizes)
            cx, cy = fit_value(slope_c, intercept_c, params.n1)
            fit_w, fit_h = fit_value(slope_s, intercept_s, params.n1)
            w = lam * fit_w + (1.0 - lam) * prev_w
            h = lam * fit_h + (1.0 - lam) * prev_h
            branch = LOW_CONFIDENCE
        else:
            vx, vy = instantaneous_velocity(state._centers, params.n2)
            alpha = npsr * npsr
            cx = prev_cx + alpha * (model_box.cx - prev_cx) + (1.0 - alpha) * vx
            cy = prev_cy + alpha * (model_box.cy - prev_cy) + (1.0 - alpha) * vy
            w = lam * model_box.w + (1.0 - lam) * prev_w
            h = lam * model_box.h + (1.0 - lam) * prev_h
            branch = HIGH_CONFIDENCE
        refined = BoundingBox(
            float(cx), float(cy), max(float(w), MIN_SIZE), max(float(h), MIN_SIZE)
        )

    state._push(refined)
    state.last_psr = value
    state.last_npsr = npsr
    state.last_branch = branch
    return refined


def peak_to_box(response, scale: float, prev_size: tuple[float, float]) -> BoundingBox:
    """Convert the response peak cell to an image-space box.

    Cell (i, j) maps to pixel (floor(scale/2) + j*scale, floor(scale/2) +
    i*scale); the box keeps the previous size.
    """
    response = _check_response(response)
    if not (math.isfinite(scale) and scale > 0):
        raise ValueError(f"scale must be positive, got {scale}")
    pi, pj = np.unravel_index(int(np.argmax(response)), response.shape)
    offset = math.floor(scale / 2.0)
    return BoundingBox(
        float(offset + pj * scale),
        float(offset + pi * scale),
        prev_size[0],
        prev_size[1],
    )
