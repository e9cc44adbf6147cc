"""Max-affine spline evaluation and its smoothing schemes.

A max-affine spline is max_r <A_r, x> + b_r.  Region selection can be hard
(argmax one-hot), entropy-regularized soft (a temperature softmax), or the
max itself can be smoothed into a log-sum-exp.  Blending the two smoothed
paths with weight c, instantiated on the ReLU spline, reproduces the ctu
activation exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaxAffineSpline",
    "SelectionVector",
    "mas_eval",
    "hard_select",
    "affine_compute",
    "soft_select",
    "entropy",
    "vq_objective",
    "lse_smooth",
    "blended_eval",
    "relu_spline",
]

_SIMPLEX_TOL = 1e-9
_LSE_DROP_THRESHOLD = 20.0


@dataclass(frozen=True)
class MaxAffineSpline:
    """Slopes A (R x D) and offsets b (length R)."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent spline shapes {A.shape}, {b.shape}")
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise ValueError("need R >= 1 and D >= 1")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite spline coefficients")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def R(self) -> int:
        return self.A.shape[0]

    @property
    def D(self) -> int:
        return self.A.shape[1]

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.D,):
            raise ValueError(f"input shape {x.shape} does not match D={self.D}")
        return self.A @ x + self.b


@dataclass(frozen=True)
class SelectionVector:
    """Point on the probability simplex over the R regions."""

    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        if t.ndim != 1:
            raise ValueError("selection must be a vector")
        if np.any(t < 0.0) or abs(float(t.sum()) - 1.0) > 1e-12:
            raise ValueError("selection must lie on the probability simplex")
        object.__setattr__(self, "t", t)

    @property
    def is_hard(self) -> bool:
        return bool(np.any(self.t == 1.0)) and float(np.count_nonzero(self.t)) == 1.0


def relu_spline() -> MaxAffineSpline:
    """ReLU as a two-piece max-affine spline on scalars."""
    return MaxAffineSpline(A=np.array([[0.0], [1.0]]), b=np.array([0.0, 0.0]))


def mas_eval(s: MaxAffineSpline, x) -> float:
    return float(np.max(s.logits(x)))


def hard_select(s: MaxAffineSpline, x) -> SelectionVector:
    """One-hot at the argmax region; ties break to the lowest index."""
    z = s.logits(x)
    t = np.zeros(s.R)
    t[int(np.argmax(z))] = 1.0
    return SelectionVector(t)


def affine_compute(s: MaxAffineSpline, x, t: SelectionVector) -> float:
    tv = t.t
    if tv.shape != (s.R,):
        raise ValueError(f"selection length {tv.shape[0]} != R={s.R}")
    if abs(float(tv.sum()) - 1.0) > _SIMPLEX_TOL or np.any(tv < -_SIMPLEX_TOL):
        raise ValueError("selection is off the simplex")
    z = s.logits(x)
    return float(np.dot(tv, z))


def soft_select(s: MaxAffineSpline, x, beta: float, eps: float = 0.0) -> SelectionVector:
    """Closed-form maximizer of the entropy-regularized selection objective.

    t_r proportional to exp(beta * z_r / (1 - beta)), via max-subtraction.
    beta=1 falls back to the hard argmax, beta=0 to the uniform vector.
    """
    if beta >= 1.0 and eps == 0.0:
        return hard_select(s, x)
    if beta == 0.0:
        return SelectionVector(np.full(s.R, 1.0 / s.R))
    z = s.logits(x)
    u = beta * z / (1.0 - beta + eps)
    u = u - np.max(u)
    w = np.exp(u)
    return SelectionVector(w / w.sum())


def entropy(t: SelectionVector) -> float:
    """Shannon entropy in nats, with 0*ln(0) = 0."""
    tv = t.t
    nz = tv[tv > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def vq_objective(s: MaxAffineSpline, x, t: SelectionVector, beta: float) -> float:
    """beta * <t, z> + (1 - beta) * H(t), the regularized selection objective."""
    return beta * affine_compute(s, x, t) + (1.0 - beta) * entropy(t)


def lse_smooth(s: MaxAffineSpline, x, beta: float, eps: float = 0.0) -> float:
    """(1 - beta) * ln sum_r exp(z_r / (1 - beta)), with max-subtraction.

    Shifted terms below exp(-20) are dropped, matching the drop convention of
    softplus_core so the two smoothing routes agree to rounding on the ReLU
    spline.
    """
    z = s.logits(x)
    inv_temp = 1.0 / (1.0 - beta + eps)
    u = z * inv_temp
    m = float(np.max(u))
    d = u - m
    keep = d >= -_LSE_DROP_THRESHOLD
    log_sum = math.log1p(float(np.sum(np.exp(d[keep]))) - 1.0)
    return (m + log_sum) / inv_temp


def blended_eval(s: MaxAffineSpline, x, beta: float, c: float, eps: float = 0.0) -> float:
    """c-weighted blend of the soft-selection path and the log-sum-exp path."""
    soft = affine_compute(s, x, soft_select(s, x, beta, eps))
    lse = lse_smooth(s, x, beta, eps)
    return c * soft + (1.0 - c) * lse
