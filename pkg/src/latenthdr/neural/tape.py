"""A linear tape for reverse-mode gradients over the primitives in ``ops``.

Operations are recorded in execution order, which is already a topological
order, so ``backward`` just replays the recorded closures in reverse.
"""

from __future__ import annotations

import numpy as np

from . import ops


class Var:
    __slots__ = ("value", "grad", "param")

    def __init__(self, value: np.ndarray, param: str | None = None):
        self.value = value
        self.grad = None
        self.param = param

    @property
    def shape(self):
        return self.value.shape

    def accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g


class Tape:
    """Records differentiable ops; ``debug`` checks every output for NaN/inf."""

    def __init__(self, store=None, debug: bool = False):
        self.store = store
        self.debug = debug
        self._backward = []
        self._params: dict[str, Var] = {}

    def param(self, name: str) -> Var:
        var = self._params.get(name)
        if var is None:
            var = Var(self.store.params[name], param=name)
            self._params[name] = var
        return var

    def _out(self, value, inputs, bwd, cache):
        if self.debug and not np.all(np.isfinite(value)):
            raise FloatingPointError("non-finite value produced during forward pass")
        out = Var(value)

        def step():
            if out.grad is None:
                return
            grads = bwd(out.grad, cache)
            for var, g in zip(inputs, grads):
                if var is not None:
                    var.accumulate(g)

        self._backward.append(step)
        return out

    def conv2d(self, x: Var, w: Var, b: Var, stride: int = 1) -> Var:
        value, cache = ops.conv2d_fwd(x.value, w.value, b.value, stride)
        return self._out(value, (x, w, b), ops.conv2d_bwd, cache)

    def groupnorm(self, x: Var, gamma: Var, beta: Var, groups: int) -> Var:
        value, cache = ops.groupnorm_fwd(x.value, gamma.value, beta.value, groups)
        return self._out(value, (x, gamma, beta), ops.groupnorm_bwd, cache)

    def silu(self, x: Var) -> Var:
        value, cache = ops.silu_fwd(x.value)
        return self._out(value, (x,), ops.silu_bwd, cache)

    def upsample2x(self, x: Var) -> Var:
        value, cache = ops.upsample_nearest2x_fwd(x.value)
        return self._out(value, (x,), ops.upsample_nearest2x_bwd, cache)

    def concat(self, a: Var, b: Var) -> Var:
        value, cache = ops.concat_fwd(a.value, b.value)
        return self._out(value, (a, b), ops.concat_bwd, cache)

    def linear(self, x: Var, w: Var, b: Var) -> Var:
        value, cache = ops.linear_fwd(x.value, w.value, b.value)
        return self._out(value, (x, w, b), ops.linear_bwd, cache)

    def film(self, x: Var, gamma: Var, beta: Var) -> Var:
        value, cache = ops.film_fwd(x.value, gamma.value, beta.value)
        return self._out(value, (x, gamma, beta), ops.film_bwd, cache)

    def add(self, a: Var, b: Var) -> Var:
        return self._out(a.value + b.value, (a, b), lambda g, _: (g, g), None)

    def add_const(self, a: Var, c) -> Var:
        return self._out(a.value + c, (a,), lambda g, _: (g,), None)

    def slice(self, x: Var, start: int, stop: int) -> Var:
        """Leading-axis slice x[start:stop]."""
        shape = x.value.shape

        def bwd(g, _):
            full = np.zeros(shape)
            full[start:stop] = g
            return (full,)

        return self._out(x.value[start:stop], (x,), bwd, None)

    def sq_error(self, pred: Var, target: np.ndarray) -> Var:
        """Summed squared error against a constant target."""
        diff = pred.value - target
        return self._out(np.array(np.sum(diff * diff)), (pred,), lambda g, d: (2.0 * g * d,), diff)

    def scale(self, x: Var, c: float) -> Var:
        return self._out(x.value * c, (x,), lambda g, _: (g * c,), None)

    def backward(self, out: Var) -> None:
        """Seed d(out)=1, run the tape in reverse, and add parameter grads to the store."""
        out.grad = np.ones_like(out.value)
        for step in reversed(self._backward):
            step()
        if self.store is not None:
            for name, var in self._params.items():
                if var.grad is not None:
                    self.store.grads[name] += var.grad
