"""Aspect-ratio-aware centerness targets and the training losses built on them.

Grid points inside the ground-truth box are positive samples and receive a
centerness score in [0, 1] that decays from the box center outward.  For the
classic score the decay is isotropic, which starves elongated, low-resolution
targets (vehicles seen from orbit are a few pixels wide but many long) of
usable positives along their long axis.  The constrained variant flattens the
decay along the principal axis by raising each side ratio to an exponent
derived from the box aspect ratio, so supervision follows the object shape.

The losses consume these targets: a soft-label cross entropy for the
classification head, a centerness-weighted log-IoU loss for the regression
head, and a plain binary cross entropy for the centerness head.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .boxes import BoundingBox

# Predictions are clamped to [LOG_EPS, 1 - LOG_EPS] before any logarithm.
LOG_EPS = 1e-7


@dataclass(frozen=True)
class RegressionTarget:
    """Distances from a grid point to the left/right/top/bottom box sides."""

    l: float
    r: float
    t: float
    b: float

    def __post_init__(self):
        sides = (self.l, self.r, self.t, self.b)
        if not all(math.isfinite(s) for s in sides):
            raise ValueError("regression target sides must be finite")
        if min(sides) < 0:
            raise ValueError(f"regression target sides must be >= 0, got {sides}")

    @property
    def is_positive(self) -> bool:
        """True when the point lies strictly inside the box."""
        return min(self.l, self.r, self.t, self.b) > 0


@dataclass(frozen=True)
class AspectRatioParams:
    """Tuning of the aspect-ratio constraint.

    ``gamma`` controls how fast the side-ratio exponents react to elongation:
    the exponent applied to the horizontal side ratio is min(1, (1/rho)**gamma)
    and the vertical one min(1, rho**gamma), where rho = w / h.  Exponents
    below one flatten the decay along that axis.
    """

    gamma: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class GridGeometry:
    """Dense prediction grid: height x width cells, one point every `stride` px.

    Cell (i, j) maps to image location (stride//2 + j*stride,
    stride//2 + i*stride); the defaults describe a 25x25 head over a 255x255
    search crop.
    """

    stride: int = 8
    height: int = 25
    width: int = 25

    def __post_init__(self):
        if self.stride <= 0 or self.height <= 0 or self.width <= 0:
            raise ValueError("grid stride and shape must be positive")

    def point_xs(self) -> np.ndarray:
        """Image x coordinate of every grid column."""
        return self.stride // 2 + np.arange(self.width, dtype=float) * self.stride

    def point_ys(self) -> np.ndarray:
        """Image y coordinate of every grid row."""
        return self.stride // 2 + np.arange(self.height, dtype=float) * self.stride


@dataclass(frozen=True)
class LabelMaps:
    """Per-cell training targets for one ground-truth box.

    centerness -- (H, W) float64 scores in [0, 1], zero outside the box
    labels     -- (H, W) uint8, 1 where the cell is a positive sample
    grid       -- geometry the maps were built on
    """

    centerness: np.ndarray
    labels: np.ndarray
    grid: GridGeometry

    @property
    def positive_count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the three training loss terms."""

    lambda_cls: float = 1.0
    lambda_reg: float = 2.0
    lambda_cen: float = 1.0

    def __post_init__(self):
        for name in ("lambda_cls", "lambda_reg", "lambda_cen"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


def _check_nondegenerate(target: RegressionTarget):
    if target.l + target.r <= 0 or target.t + target.b <= 0:
        raise ValueError(
            "degenerate box: l+r and t+b must both be positive, "
            f"got l+r={target.l + target.r}, t+b={target.t + target.b}"
        )


def classic_centerness(target: RegressionTarget) -> float:
    """Isotropic centerness: sqrt of the product of the two side ratios.

    Equals 1 at the box center and falls to 0 on the boundary at the same
    rate in both axes, regardless of the box shape.
    """
    _check_nondegenerate(target)
    ratio_h = min(target.l, target.r) / max(target.l, target.r)
    ratio_v = min(target.t, target.b) / max(target.t, target.b)
    return math.sqrt(ratio_h * ratio_v)


def modulation_factor(rho: float, gamma: float) -> float:
    """Exponent min(1, rho**gamma) applied to a side ratio.

    Values below 1 slow the centerness decay along the corresponding axis;
    the factor saturates at 1 so compact axes keep the classic behaviour.
    """
    if not (math.isfinite(rho) and rho > 0):
        raise ValueError(f"rho must be finite and > 0, got {rho}")
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError(f"gamma must be finite and > 0, got {gamma}")
    return min(1.0, rho**gamma)


def constrained_centerness(target: RegressionTarget, params: AspectRatioParams) -> float:
    """Centerness with the decay flattened along the box principal axis.

    The aspect ratio rho = (l+r)/(t+b) selects the exponents: a wide box
    (rho > 1) gets a horizontal exponent below one, so moving off-center
    along the width costs less score; the perpendicular axis keeps the
    classic decay.  For square boxes both exponents are 1 and the score
    equals :func:`classic_centerness`.
    """
    _check_nondegenerate(target)
    rho = (target.l + target.r) / (target.t + target.b)
    exp_h = modulation_factor(1.0 / rho, params.gamma)
    exp_v = modulation_factor(rho, params.gamma)
    ratio_h = min(target.l, target.r) / max(target.l, target.r)
    ratio_v = min(target.t, target.b) / max(target.t, target.b)
    return math.sqrt(ratio_h**exp_h * ratio_v**exp_v)


def build_label_maps(
    gt_box: BoundingBox,
    grid: GridGeometry = GridGeometry(),
    params: AspectRatioParams | None = AspectRatioParams(),
) -> LabelMaps:
    """Label every grid cell against one ground-truth box.

    Cells strictly inside the box are positive and scored with
    :func:`constrained_centerness` (or :func:`classic_centerness` when
    ``params`` is None); everything else is zero.  A box that covers no grid
    point yields all-negative maps and a warning.
    """
    xs = grid.point_xs()
    ys = grid.point_ys()
    x_grid, y_grid = np.meshgrid(xs, ys)
    x0, y0, x1, y1 = gt_box.corners
    left = x_grid - x0
    right = x1 - x_grid
    top = y_grid - y0
    bottom = y1 - y_grid
    positive = (left > 0) & (right > 0) & (top > 0) & (bottom > 0)

    centerness = np.zeros((grid.height, grid.width), dtype=float)
    if not positive.any():
        warnings.warn(
            "ground-truth box covers no grid point; all cells are negative",
            stacklevel=2,
        )
        return LabelMaps(centerness, positive.astype(np.uint8), grid)

    if params is None:
        exp_h = exp_v = 1.0
    else:
        rho = gt_box.w / gt_box.h
        exp_h = modulation_factor(1.0 / rho, params.gamma)
        exp_v = modulation_factor(rho, params.gamma)
    ratio_h = np.minimum(left, right)[positive] / np.maximum(left, right)[positive]
    ratio_v = np.minimum(top, bottom)[positive] / np.maximum(top, bottom)[positive]
    centerness[positive] = np.sqrt(ratio_h**exp_h * ratio_v**exp_v)
    return LabelMaps(centerness, positive.astype(np.uint8), grid)


def soft_cls_target(c_target: float, c_pred: float, label: int) -> float:
    """Soft classification label from centerness agreement.

    Negative samples stay 0.  A positive sample is labelled by the ratio
    min/max of the target and predicted centerness, so the classification
    head is rewarded in proportion to how consistent the two heads are.
    Two exact zeros count as perfect agreement.
    """
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    for name, value in (("c_target", c_target), ("c_pred", c_pred)):
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ValueError(f"{name} must lie in [0, 1], got {value}")
    if label == 0:
        return 0.0
    if c_target == c_pred:
        return 1.0
    return min(c_target, c_pred) / max(c_target, c_pred)


def _soft_binary_cross_entropy(preds, targets) -> float:
    preds = np.asarray(preds, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if preds.size == 0:
        raise ValueError("loss inputs must be non-empty")
    if preds.shape != targets.shape:
        raise ValueError(f"shape mismatch: {preds.shape} vs {targets.shape}")
    for name, arr in (("predictions", preds), ("targets", targets)):
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    p = np.clip(preds, LOG_EPS, 1.0 - LOG_EPS)
    terms = targets * np.log(p) + (1.0 - targets) * np.log1p(-p)
    return float(-terms.mean())


def cls_loss(preds, soft_targets) -> float:
    """Mean binary cross entropy of classification scores against soft labels."""
    return _soft_binary_cross_entropy(preds, soft_targets)


def centerness_loss(c_pred, c_target) -> float:
    """Mean binary cross entropy of predicted centerness against targets."""
    return _soft_binary_cross_entropy(c_pred, c_target)


def regression_loss(pred_boxes, gt_boxes, centerness_weights) -> float:
    """Centerness-weighted log-IoU regression loss.

    Boxes are (N, 4) arrays in center format.  Each sample contributes
    -log((intersection + 1) / (union + 1)), the +1 smoothing keeping the
    term finite for disjoint boxes; contributions are averaged with the
    given non-negative weights, which must not all be zero.
    """
    pred = np.asarray(pred_boxes, dtype=float)
    gt = np.asarray(gt_boxes, dtype=float)
    weights = np.asarray(centerness_weights, dtype=float).ravel()
    if pred.ndim != 2 or pred.shape[1] != 4 or pred.shape != gt.shape:
        raise ValueError(
            f"boxes must be matching (N, 4) arrays, got {pred.shape} and {gt.shape}"
        )
    if pred.shape[0] == 0:
        raise ValueError("loss inputs must be non-empty")
    if weights.shape[0] != pred.shape[0]:
        raise ValueError(
            f"expected {pred.shape[0]} weights, got {weights.shape[0]}"
        )
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(gt)) and np.all(np.isfinite(weights))):
        raise ValueError("loss inputs must be finite")
    if np.any(pred[:, 2:] <= 0) or np.any(gt[:, 2:] <= 0):
        raise ValueError("box sizes must be positive")
    if weights.min() < 0:
        raise ValueError("centerness weights must be >= 0")
    total_weight = weights.sum()
    if total_weight <= 0:
        raise ValueError("centerness weights must not all be zero")

    def corners(boxes):
        half = boxes[:, 2:] / 2.0
        return boxes[:, :2] - half, boxes[:, :2] + half

    pred_lo, pred_hi = corners(pred)
    gt_lo, gt_hi = corners(gt)
    overlap = np.clip(
        np.minimum(pred_hi, gt_hi) - np.maximum(pred_lo, gt_lo), 0.0, None
    )
    intersection = overlap[:, 0] * overlap[:, 1]
    # areas from the same corner differences as the intersection, so an
    # exact prediction gives intersection == union and a loss of exactly 0
    pred_sides = pred_hi - pred_lo
    gt_sides = gt_hi - gt_lo
    union = (
        pred_sides[:, 0] * pred_sides[:, 1]
        + gt_sides[:, 0] * gt_sides[:, 1]
        - intersection
    )
    per_sample = -np.log((intersection + 1.0) / (union + 1.0))
    return float((weights * per_sample).sum() / total_weight)


def total_loss(
    cls_value: float,
    reg_value: float,
    cen_value: float,
    weights: LossWeights = LossWeights(),
) -> float:
    """Weighted sum of the three loss terms."""
    for name, value in (("cls", cls_value), ("reg", reg_value), ("cen", cen_value)):
        if not math.isfinite(value):
            raise ValueError(f"{name} loss must be finite, got {value}")
    return (
        weights.lambda_cls * cls_value
        + weights.lambda_reg * reg_value
        + weights.lambda_cen * cen_value
    )
