"""Command-line front end.

Subcommands cover the main workflows: exporting centerness label maps,
simulating scenarios, running the refinement over a simulated sequence,
scoring trajectories, and a small attention demo.  The shared numeric flags
can also be set through environment variables named SATTRACK_<FLAG>
(SATTRACK_GAMMA, SATTRACK_N1, SATTRACK_N2, SATTRACK_THETA,
SATTRACK_LAMBDA_EMA, SATTRACK_SEED, SATTRACK_OMMR, SATTRACK_OUTPUT);
explicit flags win over the environment.

All outputs are written atomically (temp file, then rename), so an aborted
run never leaves partial files; the exit code is 0 only when every output
was fully written, 1 on runtime or configuration errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .attention import enhance_features, init_projection_weights, project_qkv, attention_weights, template_saliency
from .boxes import BoundingBox
from .formats import ConfigError
from .geometry import AspectRatioParams, GridGeometry, build_label_maps
from .metrics import aggregate_results, evaluate
from .motion import MotionParams, psr
from .scenario import generate_scenario, run_tracking


def _env(name: str) -> str | None:
    return os.environ.get("SATTRACK_" + name)


def _resolve(flag_value, env_name: str, parse, fallback):
    """Flag beats environment beats fallback."""
    if flag_value is not None:
        return flag_value
    raw = _env(env_name)
    if raw is not None:
        try:
            return parse(raw)
        except ValueError as exc:
            raise ConfigError(f"invalid SATTRACK_{env_name}={raw!r}") from exc
    return fallback


def _parse_numbers(text: str, count: int, flag: str, kind=float):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != count:
        raise ConfigError(f"{flag} needs {count} comma-separated values, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"{flag} has a non-numeric value in {text!r}") from exc


def _parse_ommr(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered not in ("on", "off"):
        raise ValueError(text)
    return lowered == "on"


def _output_dir(args) -> Path:
    output = _resolve(args.output, "OUTPUT", str, None)
    if output is None:
        raise ConfigError("no output directory: pass --output or set SATTRACK_OUTPUT")
    path = Path(output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _motion_params(args) -> MotionParams:
    base = (
        formats.motion_params_from_file(args.params)
        if getattr(args, "params", None)
        else MotionParams()
    )
    overrides = {}
    for field, env_name, kind in (
        ("n1", "N1", int),
        ("n2", "N2", int),
        ("theta", "THETA", float),
        ("lambda_ema", "LAMBDA_EMA", float),
    ):
        value = _resolve(getattr(args, field), env_name, kind, None)
        if value is not None:
            overrides[field] = value
    return replace(base, **overrides) if overrides else base


def _scenario_config(args):
    config = formats.scenario_from_file(args.scenario)
    seed = _resolve(args.seed, "SEED", int, None)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


# ---------------------------------------------------------------------------
# subcommands


def cmd_centerness_map(args):
    cx, cy, w, h = _parse_numbers(args.box, 4, "--box")
    grid_h, grid_w, stride = _parse_numbers(args.grid, 3, "--grid", int)
    gamma = _resolve(args.gamma, "GAMMA", float, 0.5)
    box = BoundingBox(cx, cy, w, h)
    grid = GridGeometry(stride=stride, height=grid_h, width=grid_w)
    constrained = build_label_maps(box, grid, AspectRatioParams(gamma=gamma))
    classic = build_label_maps(box, grid, None)

    out = _output_dir(args)
    formats.write_grid_csv(out / "constrained.csv", constrained.centerness)
    formats.write_grid_csv(out / "classic.csv", classic.centerness)
    formats.write_grid_csv(out / "labels.csv", constrained.labels)
    formats.write_pgm(out / "constrained.pgm", constrained.centerness)
    formats.write_pgm(out / "classic.pgm", classic.centerness)
    print(f"wrote label maps for {box} to {out} ({constrained.positive_count} positives)")


def cmd_simulate(args):
    config = _scenario_config(args)
    observations = generate_scenario(config)
    summary_lines = ["frame,occluded,peak_row,peak_col,peak_value,psr"]
    for obs in observations:
        peak = np.unravel_index(int(np.argmax(obs.response)), obs.response.shape)
        summary_lines.append(
            f"{obs.frame},{int(obs.occluded)},{peak[0]},{peak[1]},"
            f"{obs.response[peak]!r},{psr(obs.response)!r}"
        )

    out = _output_dir(args)
    formats.write_trajectory(out / "ground_truth.csv", [o.gt_box for o in observations])
    formats.write_trajectory(out / "raw_model.csv", [o.raw_model_box for o in observations])
    formats.atomic_write_text(out / "response_summary.csv", "\n".join(summary_lines) + "\n")
    print(f"simulated {len(observations)} frames (seed {config.seed}) into {out}")


def cmd_track(args):
    config = _scenario_config(args)
    params = _motion_params(args)
    refine_text = _resolve(args.ommr, "OMMR", str, "on")
    try:
        refine = _parse_ommr(refine_text)
    except ValueError:
        raise ConfigError(
            f"--ommr/SATTRACK_OMMR must be 'on' or 'off', got {refine_text!r}"
        ) from None
    if refine and params.n1 >= config.frame_count:
        raise ConfigError(
            f"n1 ({params.n1}) must be below frame_count ({config.frame_count}) "
            f"for refinement to activate; lower --n1 or use --ommr off"
        )
    observations = generate_scenario(config)
    trajectory, trace = run_tracking(observations, params, refine, return_trace=True)

    out = _output_dir(args)
    formats.write_trajectory(out / "trajectory.csv", trajectory)
    formats.write_trajectory(out / "ground_truth.csv", [o.gt_box for o in observations])
    formats.write_trace(out / "trace.csv", trace)
    mode = "refined" if refine else "raw"
    print(f"tracked {len(trajectory)} frames ({mode}, seed {config.seed}) into {out}")


def _discover_sequences(pred_dir: Path, gt_dir: Path) -> list[tuple[str, Path, Path]]:
    sequences = []
    pred_files = sorted(
        p for p in pred_dir.iterdir() if p.suffix in (".csv", ".txt")
    )
    if not pred_files:
        raise ConfigError(f"{pred_dir}: no .csv or .txt trajectories found")
    for pred_file in pred_files:
        for suffix in (".csv", ".txt"):
            candidate = gt_dir / (pred_file.stem + suffix)
            if candidate.exists():
                sequences.append((pred_file.stem, pred_file, candidate))
                break
        else:
            raise ConfigError(f"no ground truth for sequence {pred_file.stem!r} in {gt_dir}")
    return sequences


def cmd_evaluate(args):
    pred_path = Path(args.pred)
    gt_path = Path(args.gt)
    out = _output_dir(args)
    if pred_path.is_dir() != gt_path.is_dir():
        raise ConfigError("--pred and --gt must both be files or both be directories")

    if not pred_path.is_dir():
        result = evaluate(formats.read_trajectory(pred_path), formats.read_trajectory(gt_path))
        formats.write_json(out / "summary.json", formats.result_summary(result))
        formats.write_curves_csv(out / "curves.csv", result)
        print(
            f"p5={result.p5:.4f} p20={result.p20:.4f} np05={result.np05:.4f} "
            f"auc={result.success_auc:.4f} ({result.frame_count} frames)"
        )
        return

    results = {}
    for name, pred_file, gt_file in _discover_sequences(pred_path, gt_path):
        try:
            results[name] = evaluate(
                formats.read_trajectory(pred_file), formats.read_trajectory(gt_file)
            )
        except ValueError as exc:
            raise ConfigError(f"sequence {name!r}: {exc}") from exc
    groups = {"overall": list(results)}
    if args.attributes:
        groups.update(formats.read_attribute_groups(args.attributes))
    aggregated = aggregate_results(results, groups)

    formats.write_json(
        out / "summary.json",
        {
            "sequences": {k: formats.result_summary(r) for k, r in results.items()},
            "groups": {k: formats.result_summary(r) for k, r in aggregated.items()},
        },
    )
    for name, result in aggregated.items():
        formats.write_curves_csv(out / f"curves_{name}.csv", result)
    overall = aggregated["overall"]
    print(
        f"{len(results)} sequences: p20={overall.p20:.4f} "
        f"np05={overall.np05:.4f} auc={overall.success_auc:.4f}"
    )


def cmd_attention_demo(args):
    seed = _resolve(args.seed, "SEED", int, 0)
    gamma = _resolve(args.gamma, "GAMMA", float, 0.0)
    rng = np.random.Generator(np.random.PCG64(seed))
    if args.search:
        search = formats.read_feature_map(args.search)
    else:
        c, h, w = _parse_numbers(args.search_size, 3, "--search-size", int)
        search = rng.standard_normal((c, h, w))
    if args.template:
        template = formats.read_feature_map(args.template)
    else:
        h, w = _parse_numbers(args.template_size, 2, "--template-size", int)
        template = rng.standard_normal((search.shape[0], h, w))

    if args.weights:
        weights = formats.read_projection_weights(args.weights)
        if args.gamma is not None or _env("GAMMA") is not None:
            weights = replace(weights, gamma=gamma)
    else:
        weights = init_projection_weights(search.shape[0], seed=seed, gamma=gamma)

    enhanced = enhance_features(search, template, weights)
    q, k, _ = project_qkv(search, template, weights)
    attn = attention_weights(q, k)
    if args.mask:
        top, left, mask_h, mask_w = _parse_numbers(args.mask, 4, "--mask", int)
        rows = np.arange(top, top + mask_h)
        cols = np.arange(left, left + mask_w)
        if (rows.min() < 0 or rows.max() >= search.shape[1]
                or cols.min() < 0 or cols.max() >= search.shape[2]):
            raise ConfigError(f"--mask {args.mask} outside search grid {search.shape[1:]}")
        mask = (rows[:, None] * search.shape[2] + cols[None, :]).ravel()
    else:
        mask = np.arange(search.shape[1] * search.shape[2])
    saliency = template_saliency(attn, mask).reshape(template.shape[1:])

    out = _output_dir(args)
    formats.write_feature_map(out / "enhanced.bin", enhanced)
    formats.write_grid_csv(out / "saliency.csv", saliency)
    peak = saliency.max()
    formats.write_pgm(out / "saliency.pgm", saliency / peak if peak > 0 else saliency)
    print(
        f"enhanced {search.shape} search features (gamma={weights.gamma}) into {out}"
    )


# ---------------------------------------------------------------------------
# parser


def _add_output(parser):
    parser.add_argument("--output", help="output directory (or SATTRACK_OUTPUT)")


def _add_seed(parser):
    parser.add_argument("--seed", type=int, help="random seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sattrack",
        description="satellite-video tracking toolkit: label maps, simulation, "
        "refinement, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("centerness-map", help="export centerness label maps for a box")
    p.add_argument("--box", required=True, help="ground-truth box as CX,CY,W,H")
    p.add_argument("--grid", default="25,25,8", help="grid as HEIGHT,WIDTH,STRIDE")
    p.add_argument("--gamma", type=float, help="aspect-ratio exponent tuning")
    _add_output(p)
    p.set_defaults(handler=cmd_centerness_map)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--scenario", required=True, help="scenario config file")
    _add_seed(p)
    _add_output(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("track", help="run (or skip) refinement over a scenario")
    p.add_argument("--scenario", required=True, help="scenario config file")
    p.add_argument("--params", help="motion parameter config file")
    p.add_argument("--ommr", help="refinement on|off (default on)")
    p.add_argument("--n1", type=int, help="history/warm-up length")
    p.add_argument("--n2", type=int, help="velocity half-window")
    p.add_argument("--theta", type=float, help="confidence threshold")
    p.add_argument("--lambda-ema", dest="lambda_ema", type=float, help="size blend weight")
    _add_seed(p)
    _add_output(p)
    p.set_defaults(handler=cmd_track)

    p = sub.add_parser("evaluate", help="score trajectories against ground truth")
    p.add_argument("--pred", required=True, help="trajectory file or directory")
    p.add_argument("--gt", required=True, help="ground-truth file or directory")
    p.add_argument("--attributes", help="attribute groups file (directory mode)")
    _add_output(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("attention-demo", help="run cross-frame attention once")
    p.add_argument("--search", help="search feature map (.bin)")
    p.add_argument("--template", help="template feature map (.bin)")
    p.add_argument("--search-size", default="8,25,25", help="random search C,H,W")
    p.add_argument("--template-size", default="5,5", help="random template H,W")
    p.add_argument("--weights", help="projection weights (.npz)")
    p.add_argument("--gamma", type=float, help="residual gate value")
    p.add_argument("--mask", help="saliency mask TOP,LEFT,HEIGHT,WIDTH in search cells")
    _add_seed(p)
    _add_output(p)
    p.set_defaults(handler=cmd_attention_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
