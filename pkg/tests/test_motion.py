"""Confidence scoring and online refinement tests."""

import math

import numpy as np
import pytest

from sattrack import (
    BoundingBox,
    MotionParams,
    TrackerState,
    fit_value,
    instantaneous_velocity,
    linear_fit,
    normalized_psr,
    peak_to_box,
    psr,
    refine_step,
)
from sattrack.motion import HIGH_CONFIDENCE, LOW_CONFIDENCE, WARMUP


def brute_psr(grid):
    """Scalar reimplementation of the confidence score for cross-checking.

    Walks the cells one by one instead of using array reductions.
    """
    rows, cols = grid.shape
    best = (0, 0)
    for i in range(rows):
        for j in range(cols):
            if grid[i, j] > grid[best]:
                best = (i, j)
    pi, pj = best
    sidelobe = [
        float(grid[i, j])
        for i in range(rows)
        for j in range(cols)
        if abs(i - pi) > 1 or abs(j - pj) > 1
    ]
    mean = sum(sidelobe) / len(sidelobe)
    var = sum((cell - mean) ** 2 for cell in sidelobe) / len(sidelobe)
    return (float(grid[pi, pj]) - mean) / (math.sqrt(var) + 1e-6)


def reference_map(peak_value):
    """11x11 map whose sidelobe is exactly half 0.0 and half 0.2.

    The 112 sidelobe cells have mean 0.1 and population std 0.1, so the
    score is (peak - 0.1) / (0.1 + 1e-6): picking the peak sets the score.
    """
    grid = np.zeros((11, 11))
    sidelobe = [
        (i, j)
        for i in range(11)
        for j in range(11)
        if not (4 <= i <= 6 and 4 <= j <= 6)
    ]
    for index, (i, j) in enumerate(sidelobe):
        grid[i, j] = 0.2 if index % 2 else 0.0
    grid[4:7, 4:7] = 0.15
    grid[5, 5] = peak_value
    return grid


def map_with_score(target):
    return reference_map(0.1 + target * (0.1 + 1e-6))


class TestPsr:
    def test_constant_map_scores_zero(self):
        assert psr(np.full((5, 5), 0.3)) == 0.0

    def test_reference_fixture(self):
        grid = reference_map(1.0)
        value = psr(grid)
        assert value == pytest.approx(0.9 / (0.1 + 1e-6), abs=1e-4)
        assert value == pytest.approx(9.0, abs=1e-4)
        assert value == pytest.approx(brute_psr(grid), abs=1e-12)

    def test_matches_brute_force_on_random_maps(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            grid = rng.uniform(0.0, 1.0, size=(rng.integers(3, 12), rng.integers(3, 12)))
            assert psr(grid) == pytest.approx(brute_psr(grid), abs=1e-10)

    def test_shift_invariance(self):
        rng = np.random.default_rng(32)
        grid = rng.uniform(0.0, 1.0, size=(9, 9))
        assert abs(psr(grid) - psr(grid + 5.0)) < 1e-9

    def test_edge_peak_clips_exclusion(self):
        grid = np.zeros((5, 5))
        grid[0, 0] = 1.0
        # exclusion block is the 2x2 corner; 21 sidelobe cells, all zero
        assert psr(grid) == pytest.approx(1.0 / 1e-6, rel=1e-9)
        assert psr(grid) == pytest.approx(brute_psr(grid))

    def test_tie_broken_row_major(self):
        grid = np.zeros((7, 7))
        grid[2, 3] = 1.0
        grid[5, 1] = 1.0
        # the earlier row-major peak wins, so (5,1) stays in the sidelobe
        sidelobe = [
            grid[i, j]
            for i in range(7)
            for j in range(7)
            if abs(i - 2) > 1 or abs(j - 3) > 1
        ]
        mean = np.mean(sidelobe)
        std = np.std(sidelobe)
        assert psr(grid) == pytest.approx((1.0 - mean) / (std + 1e-6))

    def test_too_small_map_rejected(self):
        with pytest.raises(ValueError, match="3"):
            psr(np.zeros((2, 5)))

    def test_non_finite_rejected(self):
        grid = np.zeros((5, 5))
        grid[1, 1] = np.nan
        with pytest.raises(ValueError):
            psr(grid)


class TestNormalizedPsr:
    def test_first_frame_is_one(self):
        state = TrackerState(50)
        assert normalized_psr(map_with_score(4.0), state) == 1.0

    def test_running_max_sequence(self):
        state = TrackerState(50)
        values = [normalized_psr(map_with_score(s), state) for s in (4.0, 8.0, 2.0)]
        assert values[0] == pytest.approx(1.0)
        assert values[1] == pytest.approx(1.0)
        assert values[2] == pytest.approx(0.25, abs=1e-9)

    def test_repeated_map_stays_one(self):
        state = TrackerState(50)
        grid = map_with_score(5.0)
        for _ in range(5):
            assert normalized_psr(grid, state) == 1.0

    def test_degenerate_run_returns_zero(self):
        state = TrackerState(50)
        assert normalized_psr(np.full((5, 5), 0.2), state) == 0.0
        assert state.psr_max == 0.0

    def test_max_monotone_and_range(self):
        rng = np.random.default_rng(33)
        state = TrackerState(50)
        previous_max = 0.0
        for _ in range(200):
            grid = rng.uniform(0.0, 1.0, size=(7, 7))
            value = normalized_psr(grid, state)
            assert 0.0 < value <= 1.0
            assert state.psr_max >= previous_max
            previous_max = state.psr_max


class TestLinearFit:
    def test_exact_line(self):
        series = np.array([[2.0 * k, 3.0 * k] for k in range(50)])
        slope, intercept = linear_fit(series)
        assert np.allclose(slope, [2.0, 3.0], atol=1e-9)
        assert np.allclose(intercept, [0.0, 0.0], atol=1e-9)
        assert np.allclose(fit_value(slope, intercept, 50), [100.0, 150.0], atol=1e-9)

    def test_constant_series(self):
        series = np.full((12, 2), 7.5)
        slope, intercept = linear_fit(series)
        assert np.allclose(slope, 0.0, atol=1e-12)
        assert np.allclose(intercept, 7.5, atol=1e-12)

    def test_alternating_noise_slope(self):
        noise = [0.5 if k % 2 == 0 else -0.5 for k in range(10)]
        series = np.array([[k + noise[k]] for k in range(10)])
        slope, intercept = linear_fit(series)
        assert abs(slope[0] - 1.0) <= 0.12
        # closed-form check computed from scratch
        xs = [k - 4.5 for k in range(10)]
        expected = sum(x * (k + noise[k]) for k, x in enumerate(xs)) / sum(x * x for x in xs)
        assert slope[0] == pytest.approx(expected, abs=1e-12)
        assert intercept[0] == pytest.approx(
            sum(k + noise[k] for k in range(10)) / 10 - expected * 4.5, abs=1e-12
        )

    def test_matches_lstsq_oracle(self):
        rng = np.random.default_rng(34)
        series = rng.normal(size=(23, 2))
        slope, intercept = linear_fit(series)
        design = np.column_stack([np.arange(23.0), np.ones(23)])
        coeffs, *_ = np.linalg.lstsq(design, series, rcond=None)
        assert np.allclose(slope, coeffs[0], atol=1e-10)
        assert np.allclose(intercept, coeffs[1], atol=1e-10)

    def test_too_short_series_rejected(self):
        with pytest.raises(ValueError, match="2"):
            linear_fit(np.zeros((1, 2)))


class TestInstantaneousVelocity:
    def test_constant_velocity_exact(self):
        centers = np.array([[1.5 * k, -0.5 * k] for k in range(20)])
        assert np.allclose(instantaneous_velocity(centers, 10), [1.5, -0.5], atol=1e-12)

    def test_stationary(self):
        centers = np.full((8, 2), 3.0)
        assert np.array_equal(instantaneous_velocity(centers, 4), [0.0, 0.0])

    def test_hand_evaluated_step_pattern(self):
        # centers (max(0, k-2), 0) for k=0..3 with n2=2:
        # ((C2-C0) + (C3-C1)) / 4 = ((0,0) + (1,0)) / 4
        centers = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
        assert np.allclose(instantaneous_velocity(centers, 2), [0.25, 0.0])

    def test_uses_most_recent_window(self):
        # old garbage followed by a clean constant-velocity tail
        head = np.full((5, 2), 99.0)
        tail = np.array([[2.0 * k, 0.0] for k in range(8)])
        centers = np.vstack([head, tail])
        assert np.allclose(instantaneous_velocity(centers, 4), [2.0, 0.0])

    def test_insufficient_history_rejected(self):
        with pytest.raises(ValueError, match="2"):
            instantaneous_velocity(np.zeros((7, 2)), 4)


class TestParams:
    def test_defaults(self):
        params = MotionParams()
        assert (params.n1, params.n2, params.theta, params.lambda_ema) == (50, 10, 0.5, 0.7)

    def test_window_constraint(self):
        with pytest.raises(ValueError, match="n1"):
            MotionParams(n1=20, n2=10)
        MotionParams(n1=21, n2=10)  # smallest legal margin

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            MotionParams(theta=0.0)
        with pytest.raises(ValueError):
            MotionParams(theta=1.0)

    def test_ema_range(self):
        with pytest.raises(ValueError):
            MotionParams(lambda_ema=1.5)
        MotionParams(lambda_ema=0.0)
        MotionParams(lambda_ema=1.0)


def warmed_state(params, boxes, grid):
    """Run the warm-up phase on a fixed response map, asserting pass-through."""
    state = TrackerState(params.n1)
    for box in boxes:
        out = refine_step(state, box, grid, params)
        assert out == box
        assert state.last_branch == WARMUP
    return state


class TestRefineStep:
    def test_warmup_is_identity_and_appends(self):
        params = MotionParams(n1=10, n2=4)
        boxes = [BoundingBox(float(k), 2.0 * k, 5.0, 5.0) for k in range(10)]
        state = warmed_state(params, boxes, map_with_score(8.0))
        assert state.frame_index == 10
        assert len(state.history) == 10
        assert list(state.history) == boxes

    def test_high_confidence_stationary_equals_model(self):
        params = MotionParams()
        grid = map_with_score(8.0)
        boxes = [BoundingBox(10.0, 10.0, 5.0, 5.0)] * params.n1
        state = warmed_state(params, boxes, grid)
        refined = refine_step(state, BoundingBox(10.0, 10.0, 7.0, 9.0), grid, params)
        assert state.last_branch == HIGH_CONFIDENCE
        assert abs(refined.cx - 10.0) < 1e-9
        assert abs(refined.cy - 10.0) < 1e-9
        assert refined.w == pytest.approx(0.7 * 7.0 + 0.3 * 5.0)
        assert refined.h == pytest.approx(0.7 * 9.0 + 0.3 * 5.0)

    def test_new_psr_max_tracks_model_center_exactly(self):
        # at a fresh running maximum the blend weight is exactly 1, so the
        # refined center must land on the model center even mid-motion
        params = MotionParams()
        boxes = [BoundingBox(2.0 * k, 3.0 * k, 6.0, 6.0) for k in range(params.n1)]
        state = warmed_state(params, boxes, map_with_score(5.0))
        refined = refine_step(state, BoundingBox(30.0, 40.0, 6.0, 6.0), map_with_score(9.0), params)
        assert state.last_branch == HIGH_CONFIDENCE
        assert abs(refined.cx - 30.0) < 1e-9
        assert abs(refined.cy - 40.0) < 1e-9

    def test_mid_confidence_blends_velocity(self):
        params = MotionParams()
        boxes = [BoundingBox(2.0 * k, 3.0 * k, 6.0, 6.0) for k in range(params.n1)]
        state = warmed_state(params, boxes, map_with_score(8.0))
        low_grid = map_with_score(6.0)
        expected_npsr = brute_psr(low_grid) / brute_psr(map_with_score(8.0))
        model = BoundingBox(110.0, 160.0, 6.0, 6.0)
        refined = refine_step(state, model, low_grid, params)
        assert state.last_branch == HIGH_CONFIDENCE
        alpha = expected_npsr**2
        # instantaneous velocity over the exact line is (2, 3) per frame
        expected_cx = 98.0 + alpha * (110.0 - 98.0) + (1 - alpha) * 2.0
        expected_cy = 147.0 + alpha * (160.0 - 147.0) + (1 - alpha) * 3.0
        assert refined.cx == pytest.approx(expected_cx, abs=1e-6)
        assert refined.cy == pytest.approx(expected_cy, abs=1e-6)

    def test_low_confidence_extrapolates_line(self):
        params = MotionParams()
        boxes = [BoundingBox(2.0 * k, 3.0 * k, 20.0, 14.0) for k in range(params.n1)]
        state = warmed_state(params, boxes, map_with_score(8.0))
        model = BoundingBox(500.0, 500.0, 9.0, 9.0)  # must be discarded
        refined = refine_step(state, model, map_with_score(2.0), params)
        assert state.last_branch == LOW_CONFIDENCE
        assert abs(refined.cx - 2.0 * params.n1) < 1e-9
        assert abs(refined.cy - 3.0 * params.n1) < 1e-9
        assert refined.w == pytest.approx(20.0, abs=1e-9)
        assert refined.h == pytest.approx(14.0, abs=1e-9)

    def test_refined_box_joins_history(self):
        params = MotionParams(n1=10, n2=4)
        grid = map_with_score(8.0)
        boxes = [BoundingBox(1.0 * k, 1.0 * k, 5.0, 5.0) for k in range(10)]
        state = warmed_state(params, boxes, grid)
        refined = refine_step(state, BoundingBox(11.0, 11.0, 5.0, 5.0), grid, params)
        assert state.history[-1] == refined
        assert len(state.history) == 10  # capacity bound: oldest evicted
        assert state.history[0] == boxes[1]
        assert state.frame_index == 11

    def test_size_floor(self):
        params = MotionParams(n1=10, n2=4)
        grid = map_with_score(8.0)
        boxes = [BoundingBox(5.0, 5.0, 1.2, 1.2)] * 10
        state = warmed_state(params, boxes, grid)
        refined = refine_step(state, BoundingBox(5.0, 5.0, 0.01, 0.01), grid, params)
        assert refined.w >= 1.0 and refined.h >= 1.0

    def test_capacity_mismatch_rejected(self):
        state = TrackerState(20)
        with pytest.raises(ValueError, match="capacity"):
            refine_step(
                state,
                BoundingBox(0.0, 0.0, 2.0, 2.0),
                map_with_score(5.0),
                MotionParams(n1=50),
            )

    def test_trace_fields_populated(self):
        params = MotionParams(n1=5, n2=2)
        state = TrackerState(5)
        grid = map_with_score(4.0)
        refine_step(state, BoundingBox(0.0, 0.0, 2.0, 2.0), grid, params)
        assert state.last_psr == pytest.approx(4.0, abs=1e-6)
        assert state.last_npsr == 1.0
        assert state.last_branch == WARMUP


class TestPeakToBox:
    def test_interior_peak(self):
        grid = np.zeros((25, 25))
        grid[3, 4] = 1.0
        box = peak_to_box(grid, 8.0, (10.0, 12.0))
        assert (box.cx, box.cy) == (36.0, 28.0)
        assert (box.w, box.h) == (10.0, 12.0)

    def test_uniform_map_tie_break(self):
        box = peak_to_box(np.zeros((25, 25)), 8.0, (5.0, 5.0))
        assert (box.cx, box.cy) == (4.0, 4.0)

    def test_last_cell(self):
        grid = np.zeros((25, 25))
        grid[24, 24] = 2.0
        box = peak_to_box(grid, 8.0, (5.0, 5.0))
        assert (box.cx, box.cy) == (196.0, 196.0)
