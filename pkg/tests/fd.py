"""Finite-difference gradient checking helpers.

Compares autograd gradients of a scalar-valued closure against central
finite differences (default step 1e-5) in double precision. The error for
a tensor is the max absolute gradient difference normalized by the larger
of the two gradients' max magnitudes.
"""

import numpy as np
import torch


def analytic_gradients(loss_fn, tensors):
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    return [t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t)
            for t in tensors]


def probe(out, seed=0):
    """Deterministic random-weighted sum; avoids null directions of a plain sum."""
    gen = torch.Generator().manual_seed(seed)
    w = torch.randn(out.shape, generator=gen, dtype=out.dtype, device=out.device)
    return (out * w).sum()


def check_gradients(loss_fn, tensors, step=1e-5, max_entries=None, seed=0, atol=1e-8):
    """Max normalized gradient error across every tensor (or a sampled subset).

    ``max_entries`` caps how many elements per tensor are finite-differenced;
    analytic gradients are always exact and full. Tensors whose gradients are
    below ``atol`` both ways are skipped (all noise, nothing to compare).
    """
    analytic = analytic_gradients(loss_fn, tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for t, a in zip(tensors, analytic):
            flat = t.view(-1)
            af = a.reshape(-1)
            nelem = flat.numel()
            if max_entries is not None and nelem > max_entries:
                idx = rng.choice(nelem, size=max_entries, replace=False)
            else:
                idx = np.arange(nelem)
            fd = np.zeros(len(idx))
            for pos, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + step
                f_plus = float(loss_fn())
                flat[i] = orig - step
                f_minus = float(loss_fn())
                flat[i] = orig
                fd[pos] = (f_plus - f_minus) / (2.0 * step)
            an = af[np.asarray(idx)].cpu().numpy()
            scale = max(float(a.abs().max()), float(np.abs(fd).max()))
            if scale < atol:
                continue
            worst = max(worst, float(np.abs(an - fd).max()) / scale)
    return worst
