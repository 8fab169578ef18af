"""Small fully-connected network stack with hand-rolled reverse mode.

Everything is float64 and operates on flat parameter vectors so that the
optimizer, gradient clipping, and finite-difference checking all see one
contiguous array.  Layout per layer: weights (row-major, out x in), then
biases.  Hidden activations are ReLU, the output layer is linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericalError, ShapeError, TapeError

__all__ = [
    "AdamState",
    "GradTape",
    "Mlp",
    "adam_step",
    "clip_by_global_norm",
    "clip_by_value",
    "grad_check",
    "log_softmax_rows",
    "logsumexp",
    "logsumexp_rows",
]


def logsumexp(v) -> float:
    """log(sum(exp(v))) with the maximum shifted out for stability."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"logsumexp expects a vector, got shape {v.shape}")
    if v.size == 0:
        raise ValueError("logsumexp of an empty vector")
    m = np.max(v)
    if not np.isfinite(m):
        # all -inf collapses to -inf; +inf or nan propagates
        return float(m + 0.0) if m == -np.inf else float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def logsumexp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise logsumexp for a 2-D array."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"logsumexp_rows expects a matrix, got shape {a.shape}")
    m = np.max(a, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True)))[:, 0]


def log_softmax_rows(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) - logsumexp_rows(a)[:, None]


def _layer_slices(sizes: tuple[int, ...]) -> list[tuple[slice, slice, int, int]]:
    out = []
    off = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = slice(off, off + n_in * n_out)
        off += n_in * n_out
        b = slice(off, off + n_out)
        off += n_out
        out.append((w, b, n_in, n_out))
    return out


def param_count(sizes: tuple[int, ...]) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass
class GradTape:
    """Activations cached by a forward pass, consumed by one backward pass."""

    version: int
    single: bool
    inputs: list[np.ndarray]    # input to each layer, shape (B, n_in)
    preacts: list[np.ndarray]   # pre-activation of each layer, shape (B, n_out)


class Mlp:
    """Feedforward net over a flat float64 parameter vector.

    Mutating ``params`` through the property setter invalidates any tape
    produced earlier, which turns use-after-update bugs into TapeError
    instead of silently wrong gradients.
    """

    def __init__(self, sizes, params: np.ndarray | None = None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"need at least in/out layer sizes >= 1, got {sizes}")
        self.sizes = sizes
        n = param_count(sizes)
        if params is None:
            params = np.zeros(n, dtype=np.float64)
        else:
            params = np.asarray(params, dtype=np.float64).copy()
            if params.shape != (n,):
                raise ShapeError(f"expected {n} parameters for sizes {sizes}, got shape {params.shape}")
        self._params = params
        self._version = 0
        self._slices = _layer_slices(sizes)

    @classmethod
    def init(cls, sizes, rng: np.random.Generator) -> "Mlp":
        """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
        net = cls(sizes)
        p = net._params
        for w, b, n_in, _ in net._slices:
            bound = 1.0 / np.sqrt(n_in)
            p[w] = rng.uniform(-bound, bound, size=w.stop - w.start)
            p[b] = 0.0
        return net

    @property
    def params(self) -> np.ndarray:
        return self._params

    @params.setter
    def params(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params.shape:
            raise ShapeError(f"parameter vector must keep shape {self._params.shape}, got {value.shape}")
        self._params = value.copy()
        self._version += 1

    @property
    def n_params(self) -> int:
        return self._params.size

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(self.sizes, self._params)

    def weights(self, layer: int) -> np.ndarray:
        w, _, n_in, n_out = self._slices[layer]
        return self._params[w].reshape(n_out, n_in)

    def biases(self, layer: int) -> np.ndarray:
        _, b, _, _ = self._slices[layer]
        return self._params[b]

    def forward(self, x) -> tuple[np.ndarray, GradTape]:
        """Run the net on a vector or a batch of row vectors.

        Returns (output, tape); output has the same leading shape as ``x``.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.sizes[0]:
            raise ShapeError(f"input must have trailing dim {self.sizes[0]}, got shape {x.shape}")
        inputs, preacts = [], []
        h = x
        last = len(self._slices) - 1
        for i, (w, b, n_in, n_out) in enumerate(self._slices):
            inputs.append(h)
            z = h @ self._params[w].reshape(n_out, n_in).T + self._params[b]
            preacts.append(z)
            h = z if i == last else np.maximum(z, 0.0)
        tape = GradTape(version=self._version, single=single, inputs=inputs, preacts=preacts)
        return (h[0] if single else h), tape

    def backward(self, tape: GradTape, dy) -> np.ndarray:
        """Accumulate d(sum of dy . y)/d(params) into a flat gradient.

        For a batch, gradients are summed over rows.  The tape must come
        from a forward pass at the current parameters.
        """
        if tape.version != self._version:
            raise TapeError("tape is stale: parameters changed since the forward pass")
        dy = np.asarray(dy, dtype=np.float64)
        if tape.single:
            if dy.shape != (self.sizes[-1],):
                raise ShapeError(f"dy must have shape ({self.sizes[-1]},), got {dy.shape}")
            dy = dy[None, :]
        elif dy.shape != tape.preacts[-1].shape:
            raise ShapeError(f"dy must have shape {tape.preacts[-1].shape}, got {dy.shape}")
        grad = np.zeros_like(self._params)
        delta = dy
        for i in range(len(self._slices) - 1, -1, -1):
            w, b, n_in, n_out = self._slices[i]
            grad[w] = (delta.T @ tape.inputs[i]).ravel()
            grad[b] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self._params[w].reshape(n_out, n_in)) * (tape.preacts[i - 1] > 0.0)
        return grad


@dataclass
class AdamState:
    """First/second moment accumulators; step count t is 0 before any update."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: np.ndarray, **kw) -> "AdamState":
        n = np.asarray(params).size
        return cls(m=np.zeros(n, dtype=np.float64), v=np.zeros(n, dtype=np.float64), **kw)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float):
    """One Adam update with bias correction; returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.shape or state.m.shape != params.shape:
        raise ShapeError(f"params/grads/state shapes disagree: {params.shape} vs {grads.shape} vs {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite entries in gradient")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = replace(state, m=m, v=v, t=t)
    return new_params, new_state


def clip_by_global_norm(grads: np.ndarray, threshold: float) -> np.ndarray:
    """Scale the whole gradient down so its 2-norm is at most threshold."""
    if threshold <= 0.0:
        raise ValueError("clip threshold must be positive")
    grads = np.asarray(grads, dtype=np.float64)
    norm = float(np.linalg.norm(grads))
    if norm > threshold:
        return grads * (threshold / norm)
    return grads.copy()


def clip_by_value(grads: np.ndarray, threshold: float) -> np.ndarray:
    """Clamp each gradient entry into [-threshold, +threshold]."""
    if threshold <= 0.0:
        raise ValueError("clip threshold must be positive")
    return np.clip(np.asarray(grads, dtype=np.float64), -threshold, threshold)


def grad_check(f, params: np.ndarray, h: float = 1e-5) -> float:
    """Compare an analytic gradient against central differences.

    ``f(params) -> (value, grad)``.  Returns the worst relative error
    max_i |g_i - fd_i| / max(1e-12, |g_i| + |fd_i|).
    """
    params = np.asarray(params, dtype=np.float64)
    _, grad = f(params)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape:
        raise ShapeError(f"analytic gradient shape {grad.shape} does not match params {params.shape}")
    worst = 0.0
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up, _ = f(bumped)
        bumped[i] = params[i] - h
        down, _ = f(bumped)
        fd = (up - down) / (2.0 * h)
        err = abs(grad[i] - fd) / max(1e-12, abs(grad[i]) + abs(fd))
        worst = max(worst, err)
    return worst
