"""Finite-difference verification of analytic gradients.

The graph under test is rebuilt at float64 and differentiated two ways: once
through the tape, once by central differences on every input element. Errors
are reported as |a - n| / max(|a|, |n|, floor) per component; the floor keeps
finite-difference noise on near-zero components from masquerading as a
gradient bug.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad

DEFAULT_EPS = 1e-5
DEFAULT_FLOOR = 1e-3


def analytic_gradients(build: Callable[[list[Tensor]], Tensor],
                       arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Run `build` on float64 leaf tensors and return tape gradients."""
    leaves = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in arrays]
    loss = build(leaves)
    loss.backward()
    return [np.zeros_like(l.data) if l.grad is None else l.grad.copy() for l in leaves]


def numeric_gradients(build: Callable[[list[Tensor]], Tensor],
                      arrays: Sequence[np.ndarray],
                      eps: float = DEFAULT_EPS) -> list[np.ndarray]:
    """Central differences of the scalar loss wrt every element of every input."""
    base = [np.asarray(a, dtype=np.float64).copy() for a in arrays]

    def evaluate() -> float:
        with no_grad():
            return build([Tensor(a) for a in base]).item()

    grads = []
    for k, arr in enumerate(base):
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = evaluate()
            flat[i] = orig - eps
            lo = evaluate()
            flat[i] = orig
            gf[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic: Sequence[np.ndarray],
                       numeric: Sequence[np.ndarray],
                       floor: float = DEFAULT_FLOOR) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = np.abs(a - n) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst


def check_gradients(build: Callable[[list[Tensor]], Tensor],
                    arrays: Sequence[np.ndarray],
                    eps: float = DEFAULT_EPS,
                    floor: float = DEFAULT_FLOOR) -> float:
    """Convenience wrapper: returns the worst per-component relative error."""
    ana = analytic_gradients(build, arrays)
    num = numeric_gradients(build, arrays, eps=eps)
    return max_relative_error(ana, num, floor=floor)


def check_gradients_inplace(loss_fn: Callable[[], Tensor],
                            params: Sequence[Tensor],
                            eps: float = DEFAULT_EPS,
                            floor: float = DEFAULT_FLOOR) -> float:
    """Gradient check against live parameters, perturbed in place.

    `loss_fn` rebuilds the scalar loss from the params' current values, so a
    whole network can be checked without re-plumbing its parameters. Build
    the network at float64 for this; float32 forward noise swamps eps.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    ana = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def evaluate() -> float:
        with no_grad():
            return loss_fn().item()

    worst = 0.0
    for p, a in zip(params, ana):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = evaluate()
            flat[i] = orig - eps
            lo = evaluate()
            flat[i] = orig
            n = (hi - lo) / (2.0 * eps)
            af = a.reshape(-1)[i]
            worst = max(worst, abs(af - n) / max(abs(af), abs(n), floor))
    return worst
