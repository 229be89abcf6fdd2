"""Central finite-difference gradient checking."""

from __future__ import annotations

import math

import numpy as np

from .optim import ParamStore


def grad_check(loss_fn, store: ParamStore, h: float = 1e-4) -> float:
    """Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

    ``loss_fn(store, backward)`` returns the scalar loss and, when ``backward``
    is true, accumulates analytic gradients into ``store.grads``.
    """
    store.zero_grad()
    loss = loss_fn(store, True)
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}")
    analytic = {name: g.copy() for name, g in store.grads.items()}
    store.zero_grad()

    worst = 0.0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(store, False)
            flat[i] = orig - h
            down = loss_fn(store, False)
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while perturbing {name}[{i}]")
            numeric = (up - down) / (2.0 * h)
            a = float(a_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
