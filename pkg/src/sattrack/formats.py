"""File formats and atomic output handling.

Every writer here goes through a temp-file-plus-rename so a crash mid-write
never leaves a truncated artifact behind.  Floats in CSV output use Python's
shortest round-trip representation: files are byte-stable across runs and
parse back to the exact values that were written.

Formats:

* trajectory CSV -- header ``frame,cx,cy,w,h``, center-format boxes; the
  reader also accepts the common headerless benchmark layout ``x,y,w,h``
  (top-left corner, comma or tab separated)
* grid CSV -- one response/label map row per line
* PGM (binary P5) -- grayscale heatmap export, value*255 rounded
* feature tensor -- 12-byte header of C, H, W as little-endian uint32,
  then C*H*W float32 values, row-major per channel
* key = value config files -- ``#`` and ``;`` start comments; parse errors
  name the offending key and line
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .attention import ProjectionWeights
from .boxes import BoundingBox
from .metrics import (
    NORM_PRECISION_THRESHOLDS,
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    EvalResult,
)
from .motion import MotionParams
from .scenario import ScenarioConfig, TraceRow


class ConfigError(ValueError):
    """A configuration file could not be parsed or validated."""


def _atomic_write(path, writer: Callable[[Path], None]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_bytes(path, data: bytes):
    _atomic_write(path, lambda tmp: tmp.write_bytes(data))


def atomic_write_text(path, text: str):
    _atomic_write(path, lambda tmp: tmp.write_text(text))


def _fmt(value) -> str:
    """Shortest exact decimal form of a float (integers stay integers)."""
    return repr(float(value))


# ---------------------------------------------------------------------------
# trajectories

TRAJECTORY_HEADER = "frame,cx,cy,w,h"


def write_trajectory(path, boxes: Sequence[BoundingBox]):
    lines = [TRAJECTORY_HEADER]
    for index, box in enumerate(boxes, start=1):
        lines.append(
            f"{index},{_fmt(box.cx)},{_fmt(box.cy)},{_fmt(box.w)},{_fmt(box.h)}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def _split_row(line: str) -> list[str]:
    line = line.replace("\t", ",")
    return [part.strip() for part in line.split(",") if part.strip()]


def read_trajectory(path) -> list[BoundingBox]:
    """Read boxes from our trajectory CSV or a headerless x,y,w,h file."""
    path = Path(path)
    rows = [
        (number, raw)
        for number, raw in enumerate(path.read_text().splitlines(), start=1)
        if raw.strip() and not raw.strip().startswith("#")
    ]
    if not rows:
        raise ConfigError(f"{path}: no box rows found")
    center_format = rows[0][1].strip().lower().startswith("frame")
    if center_format:
        rows = rows[1:]
        if not rows:
            raise ConfigError(f"{path}: header but no box rows")
    boxes = []
    for number, raw in rows:
        parts = _split_row(raw)
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"{path}:{number}: non-numeric box field") from exc
        if center_format:
            if len(values) != 5:
                raise ConfigError(
                    f"{path}:{number}: expected frame,cx,cy,w,h, got {len(values)} fields"
                )
            boxes.append(BoundingBox(*values[1:]))
        else:
            if len(values) != 4:
                raise ConfigError(
                    f"{path}:{number}: expected x,y,w,h, got {len(values)} fields"
                )
            boxes.append(BoundingBox.from_corner(*values))
    return boxes


def write_trace(path, trace: Sequence[TraceRow]):
    lines = ["frame,psr,npsr,branch"]
    for row in trace:
        lines.append(f"{row.frame},{_fmt(row.psr)},{_fmt(row.npsr)},{row.branch}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# grids, heatmaps, tensors


def write_grid_csv(path, grid: np.ndarray):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError(f"grid must be 2-D, got shape {grid.shape}")
    lines = [",".join(_fmt(v) for v in row) for row in grid]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_grid_csv(path) -> np.ndarray:
    rows = [
        [float(part) for part in _split_row(line)]
        for line in Path(path).read_text().splitlines()
        if line.strip()
    ]
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise ConfigError(f"{path}: ragged or empty grid")
    return np.array(rows)


def write_pgm(path, grid: np.ndarray):
    """Binary P5 heatmap of a [0, 1] map, one byte per cell."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {grid.shape}")
    pixels = np.clip(np.rint(grid * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + pixels.tobytes())


def write_feature_map(path, tensor: np.ndarray):
    """C, H, W as little-endian uint32, then float32 data row-major per channel."""
    tensor = np.asarray(tensor)
    if tensor.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {tensor.shape}")
    header = struct.pack("<3I", *tensor.shape)
    atomic_write_bytes(path, header + tensor.astype("<f4").tobytes())


def read_feature_map(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ConfigError(f"{path}: missing feature-map header")
    c, h, w = struct.unpack("<3I", data[:12])
    expected = 12 + 4 * c * h * w
    if c < 1 or h < 1 or w < 1 or len(data) != expected:
        raise ConfigError(
            f"{path}: header says {c}x{h}x{w} ({expected} bytes), file has {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=12)
    return values.reshape(c, h, w).astype(float)


def write_projection_weights(path, weights: ProjectionWeights):
    arrays = {
        "w_q": weights.w_q,
        "w_k": weights.w_k,
        "w_v": weights.w_v,
        "gamma": np.array(weights.gamma),
    }
    for name in ("b_q", "b_k", "b_v"):
        bias = getattr(weights, name)
        if bias is not None:
            arrays[name] = bias

    def save(tmp: Path):
        # savez appends ".npz" to bare paths; an open handle is used as-is.
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)

    _atomic_write(path, save)


def read_projection_weights(path) -> ProjectionWeights:
    with np.load(path, allow_pickle=False) as bundle:
        return ProjectionWeights(
            w_q=bundle["w_q"],
            w_k=bundle["w_k"],
            w_v=bundle["w_v"],
            gamma=float(bundle["gamma"]),
            b_q=bundle["b_q"] if "b_q" in bundle else None,
            b_k=bundle["b_k"] if "b_k" in bundle else None,
            b_v=bundle["b_v"] if "b_v" in bundle else None,
        )


# ---------------------------------------------------------------------------
# key = value configuration files


def read_kv_file(path) -> list[tuple[int, str, str]]:
    """Parse a key = value file into (line, key, value) entries."""
    path = Path(path)
    entries = []
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw!r}")
        entries.append((number, key, value))
    return entries


def _parse(path, number, key, value, kind):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            result = float(value)
            if not math.isfinite(result):
                raise ValueError
            return result
        raise AssertionError(kind)
    except ValueError as exc:
        raise ConfigError(
            f"{path}:{number}: key {key!r} needs a {kind.__name__}, got {value!r}"
        ) from exc


def _parse_numbers(path, number, key, value, kinds):
    parts = value.replace(",", " ").split()
    if len(parts) != len(kinds):
        raise ConfigError(
            f"{path}:{number}: key {key!r} needs {len(kinds)} values, got {len(parts)}"
        )
    return tuple(
        _parse(path, number, key, part, kind) for part, kind in zip(parts, kinds)
    )


_SCENARIO_SCALARS = {
    "frame_count": int,
    "peak_sharpness": float,
    "distractor_count": int,
    "noise_sigma": float,
    "cell_scale": float,
    "seed": int,
}


def scenario_from_file(path) -> ScenarioConfig:
    """Build a scenario from a key = value file.

    ``waypoint = frame cx cy`` and ``occlusion = start end`` may repeat;
    everything else appears at most once.  Required: frame_count, waypoint,
    target_size.
    """
    path = Path(path)
    fields: dict = {}
    waypoints = []
    occlusions = []
    for number, key, value in read_kv_file(path):
        if key == "waypoint":
            waypoints.append(_parse_numbers(path, number, key, value, (int, float, float)))
        elif key == "occlusion":
            occlusions.append(_parse_numbers(path, number, key, value, (int, int)))
        elif key in ("target_size", "map_size"):
            kinds = (float, float) if key == "target_size" else (int, int)
            if key in fields:
                raise ConfigError(f"{path}:{number}: duplicate key {key!r}")
            fields[key] = _parse_numbers(path, number, key, value, kinds)
        elif key in _SCENARIO_SCALARS:
            if key in fields:
                raise ConfigError(f"{path}:{number}: duplicate key {key!r}")
            fields[key] = _parse(path, number, key, value, _SCENARIO_SCALARS[key])
        else:
            raise ConfigError(f"{path}:{number}: unknown scenario key {key!r}")
    for required in ("frame_count", "target_size"):
        if required not in fields:
            raise ConfigError(f"{path}: missing required key {required!r}")
    if not waypoints:
        raise ConfigError(f"{path}: at least one 'waypoint' entry is required")
    try:
        return ScenarioConfig(
            waypoints=tuple(waypoints), occlusions=tuple(occlusions), **fields
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_MOTION_KEYS = {"n1": int, "n2": int, "theta": float, "lambda_ema": float}


def motion_params_from_file(path) -> MotionParams:
    """Load refinement settings from a key = value file."""
    path = Path(path)
    fields: dict = {}
    for number, key, value in read_kv_file(path):
        if key not in _MOTION_KEYS:
            raise ConfigError(f"{path}:{number}: unknown motion key {key!r}")
        if key in fields:
            raise ConfigError(f"{path}:{number}: duplicate key {key!r}")
        fields[key] = _parse(path, number, key, value, _MOTION_KEYS[key])
    try:
        return MotionParams(**fields)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def read_attribute_groups(path) -> dict[str, list[str]]:
    """Read ``group = id id ...`` lines mapping group names to sequence ids."""
    path = Path(path)
    groups: dict[str, list[str]] = {}
    for number, key, value in read_kv_file(path):
        if key in groups:
            raise ConfigError(f"{path}:{number}: duplicate group {key!r}")
        members = value.replace(",", " ").split()
        if not members:
            raise ConfigError(f"{path}:{number}: group {key!r} has no members")
        groups[key] = members
    return groups


# ---------------------------------------------------------------------------
# evaluation output


def write_json(path, payload: dict):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_curves_csv(path, result: EvalResult):
    lines = ["curve,threshold,value"]
    for name, thresholds, values in (
        ("precision", PRECISION_THRESHOLDS, result.precision),
        ("norm_precision", NORM_PRECISION_THRESHOLDS, result.norm_precision),
        ("success", SUCCESS_THRESHOLDS, result.success),
    ):
        for tau, value in zip(thresholds, values):
            lines.append(f"{name},{_fmt(tau)},{_fmt(value)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def result_summary(result: EvalResult) -> dict:
    return {
        "p5": result.p5,
        "p20": result.p20,
        "np05": result.np05,
        "success_auc": result.success_auc,
        "frame_count": result.frame_count,
    }
