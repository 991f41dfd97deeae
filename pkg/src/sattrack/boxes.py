"""Axis-aligned bounding boxes in center format (cx, cy, w, h), pixel units."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundingBox:
    """Box given by its center point and a strictly positive width/height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box field {name} must be finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corner(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        """Build from top-left corner format (x, y, w, h)."""
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    def to_corner(self) -> tuple[float, float, float, float]:
        """Return (x, y, w, h) with (x, y) the top-left corner."""
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """Edge coordinates (x0, y0, x1, y1)."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def size(self) -> tuple[float, float]:
        return (self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h
