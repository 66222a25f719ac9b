"""Command-line interface: train, colorize, evaluate, ablate, synth.

Every failure path exits non-zero with a single machine-parsable line on
stderr: ``error code=<code> msg=<message>``.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .ablation import COMPONENT_FLAGS, CONNECTIONS, run_ablation
from .checkpoint import load_checkpoint
from .colorspace import lab_frames_to_rgb, lab_frames_to_rgb_u8, normalize_lab, rgb_to_lab
from .config import RunConfig
from .data import list_video_frames, read_frame_rgb, write_frame_rgb
from .errors import ChromaflowError, UsageError
from .histogram import build_hist_grid, load_grid
from .metrics import MetricsReport, evaluate_video, plot_video_metrics
from .motion import estimate_flow, load_flo, save_flo
from .network import ColorizationNet, colorize_video
from .synthetic import parse_scene, render_scene, scene_to_text
from .train import train


def _config_from_args(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    if getattr(args, "steps", None) is not None:
        overrides["steps"] = args.steps
    if getattr(args, "flow_dir", None) is not None:
        overrides["flow_dir"] = args.flow_dir
        overrides["flow_source"] = "dir"
    if args.config is None:
        raise UsageError("--config <file> is required")
    return RunConfig.from_file(args.config, overrides)


def _load_gray_frames(directory):
    paths = list_video_frames(directory)
    grays = []
    for p in paths:
        g, _ = normalize_lab(rgb_to_lab(read_frame_rgb(p)))
        grays.append(g.astype(np.float32))
    return np.stack(grays), paths


def _reference_grid(args, cfg):
    if getattr(args, "hist_grid", None):
        return load_grid(args.hist_grid)
    if getattr(args, "hist_ref", None):
        rgb = read_frame_rgb(args.hist_ref)
        gray, ab = normalize_lab(rgb_to_lab(rgb))
        return build_hist_grid(
            gray,
            ab,
            cells=cfg.hist_cells,
            l_bins=cfg.hist_l_bins,
            a_bins=cfg.hist_a_bins,
            b_bins=cfg.hist_b_bins,
        )
    return None


def cmd_train(args):
    cfg = _config_from_args(args)
    result = train(cfg, quiet=not args.verbose)
    print(
        f"trained {cfg.steps} steps: total {result.initial_total:.6f} -> "
        f"{result.final_total:.6f}; checkpoint at {result.checkpoint}"
    )
    return 0


def _flow_fn_from_dir(flow_dir, video=None):
    base = Path(flow_dir) if video is None else Path(flow_dir) / video

    def flow_fn(src, dst):
        path = base / f"flow_{src:05d}_{dst:05d}.flo"
        if not path.exists():
            raise UsageError(f"missing precomputed flow {path}")
        return load_flo(path).uv

    return flow_fn


def cmd_colorize(args):
    state, cfg_dict, _step = load_checkpoint(args.checkpoint)
    cfg = RunConfig.from_dict(cfg_dict)
    model = ColorizationNet(cfg.network_config())
    load_checkpoint(args.checkpoint, model)  # manifest-verified load

    grid = _reference_grid(args, cfg)
    if cfg.use_histogram and grid is None:
        raise UsageError("a reference is required: pass --hist-ref <image.png> or --hist-grid <file.hg>")

    gray, paths = _load_gray_frames(args.input)
    flow_fn = _flow_fn_from_dir(args.flow_dir) if args.flow_dir else None
    pred_ab = colorize_video(torch.from_numpy(gray), grid, model, flow_fn=flow_fn)

    out_dir = Path(args.out or "colorized")
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = lab_frames_to_rgb_u8(gray, pred_ab.numpy())
    for frame, src in zip(frames, paths):
        write_frame_rgb(out_dir / src.name, frame)
    print(f"wrote {len(frames)} colorized frames to {out_dir}")
    return 0


def _video_dirs(root):
    root = Path(root)
    if not root.exists():
        raise UsageError(f"directory not found: {root}")
    if list(root.glob("*.png")):
        return [(root.name, root)]
    subs = sorted(d for d in root.iterdir() if d.is_dir() and list(d.glob("*.png")))
    if not subs:
        raise UsageError(f"no PNG frames or video subdirectories under {root}")
    return [(d.name, d) for d in subs]


def _rgb_sequence(directory):
    return np.stack([read_frame_rgb(p) for p in list_video_frames(directory)])


def cmd_evaluate(args):
    preds = _video_dirs(args.pred)
    gts = dict(_video_dirs(args.gt))
    records = []
    for name, pred_dir in preds:
        if name not in gts and len(preds) == 1 and len(gts) == 1:
            name = next(iter(gts))  # single unnamed pair
            gt_dir = gts[name]
        elif name in gts:
            gt_dir = gts[name]
        else:
            raise UsageError(f"no ground-truth video matching {name!r}")
        pred = _rgb_sequence(pred_dir)
        gt = _rgb_sequence(gt_dir)
        if pred.shape != gt.shape:
            raise UsageError(
                f"video {name!r}: prediction {pred.shape} and ground truth {gt.shape} disagree"
            )
        gray = np.stack([normalize_lab(rgb_to_lab(f))[0][0] for f in gt])
        if args.flow_dir:
            ffn = _flow_fn_from_dir(args.flow_dir, name if len(preds) > 1 else None)
            fwd = [ffn(t + 1, t) for t in range(len(gt) - 1)]
            bwd = [ffn(t, t + 1) for t in range(len(gt) - 1)]
        else:
            fwd = [estimate_flow(gray[t + 1], gray[t]).uv for t in range(len(gt) - 1)]
            bwd = [estimate_flow(gray[t], gray[t + 1]).uv for t in range(len(gt) - 1)]
        records.append(evaluate_video(name, pred, gt, fwd, bwd))

    report = MetricsReport(videos=records, metadata={"pred": str(args.pred), "gt": str(args.gt)})
    out = Path(args.out or "metrics_report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write(out)
    if args.plots:
        for rec in records:
            plot_video_metrics(rec, out.parent / f"metrics_{rec.name}.png")
    agg = report.aggregate()
    print(
        f"evaluated {len(records)} video(s): psnr={agg['psnr']:.2f} ssim={agg['ssim']:.4f} "
        f"warp_error={agg['warp_error']:.5f} l2_error={agg['l2_error']:.2f}; report at {out}"
    )
    return 0


def cmd_ablate(args):
    cfg = _config_from_args(args)
    flags = args.without if args.without else list(COMPONENT_FLAGS)
    for f in flags:
        if f not in COMPONENT_FLAGS:
            raise UsageError(f"unknown ablation flag {f!r}; choose from {COMPONENT_FLAGS}")
    connections = args.connection if args.connection else list(CONNECTIONS)
    for c in connections:
        if c not in CONNECTIONS:
            raise UsageError(f"unknown connection schema {c!r}; choose from {CONNECTIONS}")
    report = run_ablation(cfg, flags=flags, connections=connections, quiet=not args.verbose)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(report.to_json() + "\n")
    (out_dir / "ablation.txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    return 0


def cmd_synth(args):
    scene = parse_scene(args.scene)
    render = render_scene(scene)
    out_dir = Path(args.out or "synthetic")
    frames_dir = out_dir / "frames"
    flows_dir = out_dir / "flows"
    frames_dir.mkdir(parents=True, exist_ok=True)
    flows_dir.mkdir(parents=True, exist_ok=True)

    frames = lab_frames_to_rgb_u8(render.gray, render.ab)
    for t, frame in enumerate(frames):
        write_frame_rgb(frames_dir / f"{t:05d}.png", frame)
    for t in range(scene.frames - 1):
        save_flo(render.flow_pair(t + 1, t), flows_dir / f"flow_{t + 1:05d}_{t:05d}.flo")
        save_flo(render.flow_pair(t, t + 1), flows_dir / f"flow_{t:05d}_{t + 1:05d}.flo")
    (out_dir / "scene.txt").write_text(scene_to_text(scene))
    print(f"wrote {scene.frames} frames and {2 * (scene.frames - 1)} flow files to {out_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chromaflow",
        description="Flow- and histogram-guided video colorization toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--steps", type=int)
    p.add_argument("--flow-dir", dest="flow_dir")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("colorize", help="colorize a grayscale PNG sequence")
    p.add_argument("--input", required=True, help="directory of PNG frames")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--hist-ref", dest="hist_ref", help="reference color image")
    p.add_argument("--hist-grid", dest="hist_grid", help="serialized histogram grid (.hg)")
    p.add_argument("--flow-dir", dest="flow_dir", help="precomputed .flo directory")
    p.add_argument("--out")
    p.set_defaults(func=cmd_colorize)

    p = sub.add_parser("evaluate", help="PSNR/SSIM/warp/L2 report for predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--flow-dir", dest="flow_dir")
    p.add_argument("--out")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train/evaluate component and connection variants")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--steps", type=int)
    p.add_argument(
        "--without",
        action="append",
        metavar="|".join(COMPONENT_FLAGS),
        help="component to ablate (repeatable; default: all four)",
    )
    p.add_argument(
        "--connection",
        action="append",
        metavar="|".join(CONNECTIONS),
        help="input connection schema to sweep (repeatable; default: all three)",
    )
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="render a synthetic scene to frames + ground-truth flow")
    p.add_argument("--scene", required=True, help="scene config file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ChromaflowError as exc:
        msg = " ; ".join(str(exc).splitlines())
        print(f"error code={exc.code} msg={msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
