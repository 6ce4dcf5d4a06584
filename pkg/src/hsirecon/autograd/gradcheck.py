"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, params, eps=1e-5, max_coords=64, seed=0, floor=1e-8):
    """Largest relative error between backprop and central differences.

    ``fn`` takes no arguments and rebuilds a scalar graph from ``params`` (a
    list of leaf tensors). Every coordinate is probed when there are at most
    ``max_coords`` in total; otherwise a seeded random subset of
    ``max_coords`` coordinates is probed, with at least one per tensor. The
    relative error of a coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params = list(params)
    for p in params:
        p.requires_grad = True
        p.grad = None
    out = fn()
    if not isinstance(out, Tensor) or out.size != 1:
        raise ValueError("grad_check needs a function returning a scalar tensor")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    probes = _choose_probes([p.size for p in params], max_coords, np.random.default_rng(seed))
    worst = 0.0
    for p, grad, coords in zip(params, analytic, probes):
        flat = p.data.reshape(-1)  # view: edits below perturb the parameter in place
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = fn().item()
            flat[i] = orig - eps
            down = fn().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = grad.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return float(worst)


def _choose_probes(sizes, budget, rng):
    total = sum(sizes)
    if budget is None or total <= budget:
        return [np.arange(n) for n in sizes]
    offsets = np.cumsum([0] + list(sizes))
    picked = set(rng.choice(total, size=budget, replace=False).tolist())
    picked |= {int(o + rng.integers(n)) for o, n in zip(offsets[:-1], sizes)}
    ordered = np.array(sorted(picked))
    return [ordered[(ordered >= lo) & (ordered < hi)] - lo for lo, hi in zip(offsets[:-1], offsets[1:])]


def nudge_from_zero(values, margin=1e-3):
    """Push entries within ``margin`` of zero out to ``±margin``.

    Keeps finite-difference probes of ReLU/abs away from their kinks.
    """
    values = np.array(values, dtype=np.float64)
    near = np.abs(values) < margin
    values[near] = np.where(values[near] < 0, -margin, margin)
    return values
