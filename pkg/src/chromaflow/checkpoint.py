"""Checkpoint binary + mandatory text manifest.

The manifest lists every parameter's name, shape and content hash, plus a
snapshot of the run configuration and the step count. Loading verifies
that the constructed model exposes exactly the manifest's parameter set
and shapes, and reports every difference on mismatch.
"""

import hashlib
from pathlib import Path

import numpy as np
import torch

from .errors import FormatError, UsageError


def _tensor_hash(t):
    data = np.ascontiguousarray(t.detach().cpu().numpy())
    return hashlib.sha256(data.tobytes()).hexdigest()


def parameter_manifest(model):
    """(name, shape tuple, sha256) for every parameter and buffer."""
    rows = []
    for name, p in model.state_dict().items():
        rows.append((name, tuple(p.shape), _tensor_hash(p)))
    return rows


def manifest_path(ckpt_path):
    return Path(str(ckpt_path) + ".manifest.txt")


def save_checkpoint(model, config_dict, step, path):
    """Write the weights binary and its manifest; returns the binary path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": model.state_dict(), "config": config_dict, "step": step}, path)

    lines = [f"step={step}"]
    for k, v in sorted(config_dict.items()):
        lines.append(f"config.{k}={v}")
    for name, shape, digest in parameter_manifest(model):
        dims = "x".join(str(d) for d in shape) or "scalar"
        lines.append(f"param {name} {dims} {digest}")
    manifest_path(path).write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint manifest not found: {path}")
    step = None
    config = {}
    params = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("step="):
            step = int(line.split("=", 1)[1])
        elif line.startswith("config."):
            k, v = line[len("config.") :].split("=", 1)
            config[k] = v
        elif line.startswith("param "):
            try:
                _, name, dims, digest = line.split(" ")
            except ValueError:
                raise FormatError(f"{path}:{lineno}: malformed param line") from None
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            params[name] = (shape, digest)
        else:
            raise FormatError(f"{path}:{lineno}: unrecognized manifest line {line!r}")
    if step is None:
        raise FormatError(f"{path}: manifest is missing the step count")
    return step, config, params


def verify_manifest(model, params):
    """Check the model's parameter set against manifest entries."""
    model_rows = {name: shape for name, shape, _ in parameter_manifest(model)}
    problems = []
    for name, (shape, _) in params.items():
        if name not in model_rows:
            problems.append(f"missing in model: {name} {shape}")
        elif model_rows[name] != shape:
            problems.append(f"shape mismatch: {name} manifest {shape} vs model {model_rows[name]}")
    for name in model_rows:
        if name not in params:
            problems.append(f"not in manifest: {name} {model_rows[name]}")
    if problems:
        raise UsageError(
            "checkpoint does not match the constructed model:\n  " + "\n  ".join(sorted(problems))
        )


def load_checkpoint(path, model=None):
    """Load a checkpoint; verifies the manifest when a model is given.

    Returns (state_dict, config_dict, step). The state is loaded into
    ``model`` in place when provided.
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    step, config, params = read_manifest(manifest_path(path))
    if model is not None:
        verify_manifest(model, params)
        model.load_state_dict(blob["state_dict"])
    return blob["state_dict"], blob.get("config", config), step
