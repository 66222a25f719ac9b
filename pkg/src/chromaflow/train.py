"""Training: clip bundles (inputs, flows, histogram pyramid) and the Adam loop.

Everything a clip contributes to a training step is deterministic given
the run config, so bundles are precomputed once; with a fixed seed two
runs produce identical loss curves.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .data import load_clips, read_manifest
from .errors import ConfigError, DivergenceError, UsageError
from .histogram import build_hist_grid
from .losses import charbonnier_loss, smooth_loss, total_loss, warp_loss
from .metrics import psnr
from .motion import estimate_flow, load_flo, prepare_clip_inputs
from .network import ColorizationNet, hist_levels_for_clip
from .synthetic import parse_scene, render_scene

CHECKPOINT_NAME = "checkpoint.pt"


def frame_number(source_id):
    """Frame index encoded in a source id like 'video/00012.png'."""
    stem = Path(str(source_id)).stem
    digits = "".join(ch for ch in stem if ch.isdigit())
    if not digits:
        raise UsageError(f"cannot derive a frame number from {source_id!r}")
    return int(digits)


def estimator_lookup(gray):
    """Flow lookup backed by the internal block-matching estimator."""
    cache = {}

    def lookup(j, i):
        if (j, i) not in cache:
            cache[(j, i)] = estimate_flow(gray[j], gray[i], src_index=j, dst_index=i).uv
        return cache[(j, i)]

    return lookup


def render_lookup(render, window_start=0):
    """Exact ground-truth flow lookup for clips cut from a rendered scene."""

    def lookup(j, i):
        return render.flow_pair(window_start + j, window_start + i)

    return lookup


def flo_dir_lookup(flow_dir, clip):
    """Precomputed-flow lookup: <flow_dir>/flow_<src>_<dst>.flo (frame numbers)."""
    flow_dir = Path(flow_dir)
    numbers = [frame_number(s) for s in clip.source_ids]

    def lookup(j, i):
        path = flow_dir / f"flow_{numbers[j]:05d}_{numbers[i]:05d}.flo"
        if not path.exists():
            raise UsageError(f"missing precomputed flow {path}")
        return load_flo(path).uv

    return lookup


@dataclass
class ClipBundle:
    """Precomputed per-clip training inputs."""

    clip: object
    assembled: torch.Tensor
    flows_to_center: torch.Tensor
    loss_flows: dict
    hist_levels: dict | None = None
    meta: dict = field(default_factory=dict)


def prepare_bundle(clip, cfg, flow_lookup=None):
    """Assemble network inputs, loss flows and histogram levels for a clip."""
    if flow_lookup is None:
        flow_lookup = estimator_lookup(clip.gray)
    assembled, flows = prepare_clip_inputs(
        clip.gray, flow_lookup, theta=cfg.theta, connection=cfg.connection
    )
    t = clip.gray.shape[0]
    loss_flows = {}
    for d in cfg.d_set:
        for t0 in range(t - d):
            loss_flows[(t0, d)] = torch.as_tensor(
                np.asarray(flow_lookup(t0 + d, t0), dtype=np.float32)
            )
    hist_levels = None
    if cfg.use_histogram:
        if clip.target_ab is None:
            raise UsageError("training clips need color targets to build the reference")
        center = clip.center_index
        grid = build_hist_grid(
            clip.gray[center, 0].numpy(),
            clip.target_ab[center].numpy(),
            cells=cfg.hist_cells,
            l_bins=cfg.hist_l_bins,
            a_bins=cfg.hist_a_bins,
            b_bins=cfg.hist_b_bins,
        )
        hist_levels = hist_levels_for_clip(grid, clip.gray[center, 0].numpy())
    return ClipBundle(
        clip=clip,
        assembled=assembled,
        flows_to_center=flows,
        loss_flows=loss_flows,
        hist_levels=hist_levels,
    )


def bundles_from_config(cfg):
    """Build the training set described by a RunConfig."""
    if cfg.scene:
        scene = parse_scene(cfg.scene)
        if scene.size != (cfg.height, cfg.width):
            raise ConfigError(
                f"scene size {scene.size} disagrees with config {cfg.height}x{cfg.width}"
            )
        render = render_scene(scene)
        span = 2 * cfg.tau + 1
        bundles = []
        for start in range(0, scene.frames - span + 1, cfg.stride):
            clip = render.clip(start, span)
            use_gt = cfg.flow_source in ("auto", "gt")
            lookup = render_lookup(render, start) if use_gt else estimator_lookup(clip.gray)
            bundles.append(prepare_bundle(clip, cfg, lookup))
        return bundles
    if cfg.train_manifest:
        manifest = read_manifest(
            cfg.train_manifest, tau=cfg.tau, stride=cfg.stride, resize=(cfg.height, cfg.width)
        )
        bundles = []
        for clip in load_clips(manifest):
            if cfg.flow_source == "dir":
                lookup = flo_dir_lookup(cfg.flow_dir, clip)
            elif cfg.flow_source == "gt":
                raise ConfigError("flow_source=gt needs a synthetic scene, not a manifest")
            else:
                lookup = estimator_lookup(clip.gray)
            bundles.append(prepare_bundle(clip, cfg, lookup))
        return bundles
    raise ConfigError("config needs either scene= or train_manifest=")


def ab_psnr(pred_ab, target_ab):
    """Chroma reconstruction PSNR, mapped onto the usual 0..255 scale."""
    p = (np.asarray(pred_ab.detach() if torch.is_tensor(pred_ab) else pred_ab) + 1.0) * 127.5
    g = (np.asarray(target_ab.detach() if torch.is_tensor(target_ab) else target_ab) + 1.0) * 127.5
    return psnr(p, g)


@dataclass
class TrainResult:
    history: list
    model: object
    checkpoint: Path | None
    config: object

    @property
    def initial_total(self):
        return self.history[0]["total"]

    @property
    def final_total(self):
        return self.history[-1]["total"]


def train(cfg, bundles=None, quiet=True):
    """Run the optimization described by a RunConfig.

    Returns a TrainResult with the per-step loss history and the trained
    model; writes a per-step log and checkpoint(+manifest) under cfg.out.
    Raises DivergenceError on non-finite losses (periodic checkpoints from
    before the failure are retained).
    """
    torch.manual_seed(cfg.seed)
    if bundles is None:
        bundles = bundles_from_config(cfg)
    if not bundles:
        raise UsageError("no training clips were produced; check the data configuration")

    model = ColorizationNet(cfg.network_config())
    loss_cfg = cfg.loss_config()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.txt"
    history = []
    ckpt = None
    with open(log_path, "w") as log:
        for step in range(cfg.steps):
            bundle = bundles[step % len(bundles)]
            model.train()
            pred = model(bundle.assembled, bundle.hist_levels, bundle.flows_to_center)
            target = bundle.clip.target_ab
            lw = warp_loss(pred, target, bundle.loss_flows, loss_cfg)
            lc = charbonnier_loss(pred, target, loss_cfg.epsilon)
            ls = smooth_loss(pred)
            try:
                lt = total_loss(lw, lc, ls, loss_cfg)
            except DivergenceError:
                log.write(f"step={step} diverged warp={lw} charbonnier={lc} smooth={ls}\n")
                raise
            opt.zero_grad()
            lt.backward()
            opt.step()

            entry = {
                "step": step,
                "warp": lw.item(),
                "charbonnier": lc.item(),
                "smooth": ls.item(),
                "total": lt.item(),
            }
            history.append(entry)
            line = (
                f"step={step} warp={entry['warp']:.6f} charbonnier={entry['charbonnier']:.6f} "
                f"smooth={entry['smooth']:.6f} total={entry['total']:.6f}"
            )
            log.write(line + "\n")
            if not quiet:
                print(line)
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                ckpt = save_checkpoint(
                    model, cfg.to_dict(), step + 1, out_dir / CHECKPOINT_NAME
                )
    ckpt = save_checkpoint(model, cfg.to_dict(), cfg.steps, out_dir / CHECKPOINT_NAME)
    return TrainResult(history=history, model=model, checkpoint=ckpt, config=cfg)
