"""Minimal reverse-mode autodiff over dense float64 tensors.

Graphs are built dynamically per forward pass (micrograd-style) on top of
numpy buffers.  Parameters are persistent leaves holding value, gradient and
Adam state; every primitive checks its output for non-finite values and
raises naming the producing op.

The RNG is a splitmix64 generator defined here so streams are reproducible
across platforms and languages: the state advances by the 64-bit odd constant
0x9E3779B97F4A7C15 and the output is the finalizing mix
z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB; z ^= z>>31.
"""

from __future__ import annotations

import math

import numpy as np

from .activations import DEFAULT_EPS, DEFAULT_SOFTPLUS_THRESHOLD

__all__ = [
    "NonFiniteError",
    "Tensor",
    "Parameter",
    "backward",
    "adam_step",
    "SplitMix64",
    "kaiming_uniform_init",
    "affine",
    "lora_affine",
    "elementwise_relu",
    "sigmoid",
    "softplus",
    "elementwise_ctu",
    "mse_loss",
    "bce_with_logits_loss",
]

_MASK64 = (1 << 64) - 1


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN/Inf; carries the op name."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by primitive '{op}'")
        self.op = op


def _check_finite(data: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    return data


class Parameter:
    """Persistent trainable leaf: value, accumulated grad, Adam moments."""

    def __init__(self, value, trainable: bool = True):
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.adam_step_count = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def reset_adam(self):
        self.adam_m[...] = 0.0
        self.adam_v[...] = 0.0
        self.adam_step_count = 0

    def copy(self) -> "Parameter":
        p = Parameter(self.value.copy(), trainable=self.trainable)
        p.adam_m = self.adam_m.copy()
        p.adam_v = self.adam_v.copy()
        p.adam_step_count = self.adam_step_count
        return p


class Tensor:
    """Graph node: numpy buffer plus the backward closure that built it."""

    __slots__ = ("data", "grad", "_parents", "_backward", "op", "param", "_backward_done")

    def __init__(self, data, parents=(), backward_fn=None, op="leaf", param=None):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, op)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward_fn
        self.op = op
        self.param = param
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    # -- operator sugar over the primitives below ---------------------------
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), _as_tensor(-1.0)))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, _as_tensor(-1.0)))

    def __truediv__(self, other):
        return mul(self, reciprocal(_as_tensor(other)))

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def item(self) -> float:
        return float(self.data)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64), op="const")


def leaf(p: Parameter) -> Tensor:
    """Wrap a Parameter as a graph leaf; backward deposits into p.grad."""
    return Tensor(p.value, op="param", param=p)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the parent's shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitives -------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    # overflow surfaces as NonFiniteError from the Tensor constructor
    with np.errstate(over="ignore"):
        out_data = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out_data, (a, b), bwd, op="add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(out_data, (a, b), bwd, op="mul")


def reciprocal(a: Tensor) -> Tensor:
    # division by zero surfaces as NonFiniteError from the Tensor constructor
    with np.errstate(divide="ignore"):
        out_data = 1.0 / a.data

    def bwd(g):
        return (-g * out_data * out_data,)

    return Tensor(out_data, (a,), bwd, op="reciprocal")


def scale(a: Tensor, k: float) -> Tensor:
    out_data = a.data * k

    def bwd(g):
        return (g * k,)

    return Tensor(out_data, (a,), bwd, op="scale")


def tsum(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum())

    def bwd(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out_data, (a,), bwd, op="sum")


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.asarray(a.data.mean())

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return Tensor(out_data, (a,), bwd, op="mean")


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """x @ W.T + b for x of shape (N, in), W (out, in), b (out,)."""
    if x.data.ndim != 2 or W.data.ndim != 2 or x.data.shape[1] != W.data.shape[1]:
        raise ValueError(f"affine shape mismatch: x {x.shape}, W {W.shape}")
    out_data = x.data @ W.data.T + b.data

    def bwd(g):
        return g @ W.data, g.T @ x.data, g.sum(axis=0)

    return Tensor(out_data, (x, W, b), bwd, op="affine")


def lora_affine(x: Tensor, B: Tensor, A: Tensor, alpha: float, r: int) -> Tensor:
    """(alpha/r) * x @ (B @ A).T, the low-rank adapter path."""
    s = alpha / r
    xa = x.data @ A.data.T          # (N, r)
    out_data = s * (xa @ B.data.T)  # (N, out)

    def bwd(g):
        gx = s * (g @ B.data) @ A.data
        gB = s * g.T @ xa
        gA = s * (g @ B.data).T @ x.data
        return gx, gB, gA

    return Tensor(out_data, (x, B, A), bwd, op="lora_affine")


def elementwise_relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    out_data = np.where(mask, x.data, 0.0)

    def bwd(g):
        return (g * mask,)

    return Tensor(out_data, (x,), bwd, op="relu")


def sigmoid(x: Tensor) -> Tensor:
    out_data = _sigmoid_np(x.data)

    def bwd(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor(out_data, (x,), bwd, op="sigmoid")


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    pos = z >= 0.0
    out = np.empty_like(z, dtype=np.float64)
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus_np(u: np.ndarray, threshold: float) -> np.ndarray:
    # same drop convention as activations.softplus_core
    out = np.zeros_like(u, dtype=np.float64)
    mid = np.abs(u) <= threshold
    out[mid] = np.log1p(np.exp(u[mid]))
    hi = u > threshold
    out[hi] = u[hi]
    return out


def softplus(x: Tensor, threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> Tensor:
    out_data = _softplus_np(x.data, threshold)

    def bwd(g):
        return (g * _sigmoid_np(x.data),)

    return Tensor(out_data, (x,), bwd, op="softplus")


def elementwise_ctu(x: Tensor, beta: Tensor, coeff: Tensor,
                    eps: float = DEFAULT_EPS,
                    threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> Tensor:
    """Blended smooth unit, composed from primitives so gradients flow into
    beta/coeff when those are themselves graph nodes (trainable slots)."""
    omb = add(mul(beta, _as_tensor(-1.0)), _as_tensor(1.0 + eps))   # 1 - beta + eps
    xs = mul(x, reciprocal(omb))
    silu_part = mul(mul(sigmoid(mul(beta, xs)), x), coeff)
    sp_part = mul(mul(softplus(xs, threshold), omb),
                  add(_as_tensor(1.0), mul(coeff, _as_tensor(-1.0))))
    return add(silu_part, sp_part)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    diff = pred.data - target
    out_data = np.asarray(np.mean(diff * diff))

    def bwd(g):
        return (g * 2.0 * diff / diff.size,)

    return Tensor(out_data, (pred,), bwd, op="mse_loss")


def bce_with_logits_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean of softplus(z) - y*z, computed stably."""
    y = np.asarray(labels, dtype=np.float64)
    z = logits.data
    per = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray(per.mean())

    def bwd(g):
        return (g * (_sigmoid_np(z) - y) / z.size,)

    return Tensor(out_data, (logits,), bwd, op="bce_with_logits_loss")


# -- backward pass ----------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Reverse-accumulate gradients from a scalar loss into Parameters."""
    if loss.data.size != 1:
        raise ValueError("backward requires a scalar loss")
    if loss._backward_done:
        raise RuntimeError("backward already called on this graph; rebuild the forward pass")
    loss._backward_done = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if node.param is not None and node.param.trainable:
            node.param.grad += g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None:
                continue
            acc = grads.get(id(p))
            if acc is None:
                grads[id(p)] = np.array(pg, dtype=np.float64)
            else:
                acc += pg


# -- optimizer --------------------------------------------------------------

def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Standard bias-corrected Adam update over trainable params with grads."""
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for p in params:
        if not p.trainable:
            continue
        p.adam_step_count += 1
        t = p.adam_step_count
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * p.grad
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * (p.grad * p.grad)
        m_hat = p.adam_m / (1.0 - beta1 ** t)
        v_hat = p.adam_v / (1.0 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


# -- reproducible RNG -------------------------------------------------------

class SplitMix64:
    """Counter-style 64-bit generator with a documented transition function."""

    GOLDEN = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + self.GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53 high bits give a uniform double in [0, 1)
        u = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        return lo + (hi - lo) * u

    def uniforms(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return np.array([self.uniform(lo, hi) for _ in range(n)])

    def normal(self) -> float:
        # Box-Muller; draws two uniforms per call, no caching (determinism)
        u1 = self.uniform()
        u2 = self.uniform()
        u1 = max(u1, 1e-300)
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def spawn(self) -> "SplitMix64":
        return SplitMix64(self.next_u64())


def seeded_rng(seed: int) -> SplitMix64:
    return SplitMix64(seed)


def kaiming_uniform_init(shape, a: float, rng: SplitMix64) -> np.ndarray:
    """Uniform(-bound, bound) with bound = sqrt(6 / ((1 + a^2) * fan_in)).

    fan_in is the trailing extent of the (out, in) weight shape.
    """
    fan_in = shape[-1]
    bound = math.sqrt(6.0 / ((1.0 + a * a) * fan_in))
    flat = rng.uniforms(int(np.prod(shape)), -bound, bound)
    return flat.reshape(shape)
