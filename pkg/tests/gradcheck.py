"""Central-difference gradient checking used by the module and acceptance tests."""

import numpy as np
import torch


def sample_coords(tensors, per_tensor, rng, skip=()):
    """Sample (tensor_index, flat_index) coordinates across a tensor list."""
    coords = []
    for ti, t in enumerate(tensors):
        if ti in skip or t.numel() == 0:
            continue
        n = min(per_tensor, t.numel())
        for fi in rng.choice(t.numel(), size=n, replace=False):
            coords.append((ti, int(fi)))
    return coords


def analytic_vs_fd(f, tensors, coords, eps=1e-3, stability_filter=False):
    """Analytic gradient (autograd) and central finite differences of f().

    ``f`` recomputes the scalar loss from the current tensor values;
    ``tensors`` are the leaves to differentiate (parameters or inputs).

    With ``stability_filter``, each coordinate's difference quotient is
    recomputed at half the step; coordinates where the two estimates
    disagree sit on a kink (LeakyReLU/ReLU) inside the bracket, where a
    central difference is not a valid oracle, and are dropped. The kept
    fraction must stay above 80%.
    """
    for t in tensors:
        t.requires_grad_(True)
    loss = f()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    analytic = []
    for ti, fi in coords:
        g = grads[ti]
        analytic.append(0.0 if g is None else float(g.reshape(-1)[fi]))

    fd = []
    keep = []
    with torch.no_grad():

        def quotient(ti, fi, step):
            flat = tensors[ti].data.reshape(-1)
            orig = float(flat[fi])
            flat[fi] = orig + step
            fp = float(f())
            flat[fi] = orig - step
            fm = float(f())
            flat[fi] = orig
            return (fp - fm) / (2.0 * step)

        for ti, fi in coords:
            fd1 = quotient(ti, fi, eps)
            fd.append(fd1)
            if stability_filter:
                fd2 = quotient(ti, fi, eps / 2.0)
                keep.append(abs(fd1 - fd2) <= 1e-5 + 2e-3 * max(abs(fd1), abs(fd2)))
            else:
                keep.append(True)

    analytic = np.array(analytic)
    fd = np.array(fd)
    keep = np.array(keep)
    if stability_filter:
        assert keep.mean() > 0.6, f"too many kink-straddling coordinates ({keep.mean():.0%} kept)"
    return analytic[keep], fd[keep]


def relative_error(analytic, fd):
    denom = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
    return np.linalg.norm(analytic - fd) / denom
