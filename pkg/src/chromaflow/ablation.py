"""Ablation harness: component switches and input-connection schemas.

Each variant trains under an identical budget, seed and data, then gets
evaluated on a held-out synthetic clip (same geometry, fresh textures and
shape colors, reference built from its own center frame). The emitted
table lists the four metrics, the parameter count, and PSNR drop rates
relative to the full model.
"""

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .colorspace import lab_frames_to_rgb
from .errors import UsageError
from .metrics import l2_error, psnr, ssim, warp_error
from .synthetic import parse_scene, render_scene
from .train import prepare_bundle, render_lookup, train

COMPONENT_FLAGS = ("histogram", "flow", "spatial-attn", "temporal-attn")
CONNECTIONS = ("plain", "concat", "multiply")
_FLAG_ATTRS = {
    "histogram": "use_histogram",
    "flow": "use_flow",
    "spatial-attn": "use_spatial_attn",
    "temporal-attn": "use_temporal_attn",
}


def derive_holdout_scene(scene, seed_offset=101):
    """A held-out sibling: same geometry/motion, new textures and colors."""
    rng = np.random.default_rng(scene.seed + seed_offset)
    shapes = []
    for s in scene.shapes:
        color = tuple(np.round(rng.uniform(-0.6, 0.6, 2), 3))
        shapes.append(dataclasses.replace(s, color=color))
    return dataclasses.replace(scene, shapes=shapes, seed=scene.seed + seed_offset)


def evaluate_model_on_clip(model, cfg, render, start=0):
    """Four-metric evaluation of a model on one clip of a rendered scene."""
    span = 2 * cfg.tau + 1
    clip = render.clip(start, span)
    bundle = prepare_bundle(clip, cfg, render_lookup(render, start))
    model.eval()
    with torch.no_grad():
        pred = model(bundle.assembled, bundle.hist_levels, bundle.flows_to_center)
    pred_rgb = lab_frames_to_rgb(clip.gray.numpy(), pred.numpy())
    gt_rgb = lab_frames_to_rgb(clip.gray.numpy(), clip.target_ab.numpy())
    fwd = [render.flow_pair(start + t + 1, start + t) for t in range(span - 1)]
    bwd = [render.flow_pair(start + t, start + t + 1) for t in range(span - 1)]
    return {
        "psnr": float(np.mean([psnr(p * 255, g * 255) for p, g in zip(pred_rgb, gt_rgb)])),
        "ssim": float(np.mean([ssim(p * 255, g * 255) for p, g in zip(pred_rgb, gt_rgb)])),
        "l2_error": float(np.mean([l2_error(p * 255, g * 255) for p, g in zip(pred_rgb, gt_rgb)])),
        "warp_error": warp_error(pred_rgb, fwd, bwd),
    }


@dataclass
class AblationRow:
    name: str
    parameters: int
    psnr: float
    ssim: float
    warp_error: float
    l2_error: float


@dataclass
class AblationReport:
    baseline: AblationRow
    rows: list

    def psnr_drop(self, row):
        if self.baseline.psnr == 0:
            return 0.0
        return 100.0 * (self.baseline.psnr - row.psnr) / self.baseline.psnr

    def to_text(self):
        header = f"{'variant':<22} {'params':>9} {'psnr':>7} {'ssim':>7} {'warp_err':>9} {'l2_err':>7} {'psnr_drop':>9}"
        lines = [header, "-" * len(header)]
        for row in [self.baseline, *self.rows]:
            drop = "-" if row is self.baseline else f"{self.psnr_drop(row):.2f}%"
            lines.append(
                f"{row.name:<22} {row.parameters:>9} {row.psnr:>7.2f} {row.ssim:>7.4f} "
                f"{row.warp_error:>9.5f} {row.l2_error:>7.2f} {drop:>9}"
            )
        return "\n".join(lines)

    def to_json(self):
        def rowdict(row):
            d = dataclasses.asdict(row)
            if row is not self.baseline:
                d["psnr_drop_pct"] = self.psnr_drop(row)
            return d

        return json.dumps(
            {"baseline": rowdict(self.baseline), "variants": [rowdict(r) for r in self.rows]},
            indent=2,
            sort_keys=True,
        )

    def row(self, name):
        for r in [self.baseline, *self.rows]:
            if r.name == name:
                return r
        raise KeyError(name)


def run_ablation(cfg, flags=COMPONENT_FLAGS, connections=CONNECTIONS, quiet=True):
    """Train and evaluate the requested variants; returns an AblationReport."""
    if not cfg.scene:
        raise UsageError("the ablation harness needs a synthetic scene (scene= in the config)")
    scene = parse_scene(cfg.scene)
    span = 2 * cfg.tau + 1
    if scene.frames < span:
        raise UsageError(f"scene too short for {span}-frame clips")
    holdout = render_scene(derive_holdout_scene(scene))

    def run_variant(variant_cfg, name):
        variant_cfg = dataclasses.replace(variant_cfg, out=str(Path(cfg.out) / name))
        result = train(variant_cfg, quiet=quiet)
        metrics = evaluate_model_on_clip(result.model, variant_cfg, holdout)
        n_params = sum(p.numel() for p in result.model.parameters())
        return AblationRow(name=name, parameters=n_params, **metrics)

    baseline = run_variant(cfg, "full")
    rows = []
    for flag in flags:
        variant = dataclasses.replace(cfg, **{_FLAG_ATTRS[flag]: False})
        rows.append(run_variant(variant, f"no-{flag}"))
    for conn in connections:
        if conn == cfg.connection:
            rows.append(dataclasses.replace(baseline, name=f"connection-{conn}"))
        else:
            rows.append(run_variant(dataclasses.replace(cfg, connection=conn), f"connection-{conn}"))
    return AblationReport(baseline=baseline, rows=rows)
