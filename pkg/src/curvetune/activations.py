"""Scalar activation family: ReLU, reparameterized SiLU/Softplus, and their blend.

The blended unit ("CTU") interpolates between a temperature-reparameterized
SiLU and Softplus with a mixing coefficient c.  With the stabilizer eps > 0
the unit stays well defined over the whole closed range beta in [0, 1]:

    eta   = beta / (1 - beta + eps)
    gamma = 1 / (1 - beta + eps)
    ctu(x) = c * sigmoid(eta*x) * x + (1-c) * (1/gamma) * ln(1 + exp(gamma*x))

beta -> 1 recovers ReLU, beta -> 0 makes the unit (affine-)linear for c=1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "CtuParams",
    "RawCtuParams",
    "logistic",
    "relu",
    "silu_eta",
    "softplus_gamma",
    "ctu",
    "ctu_derivative",
    "hbar_bound",
    "gelu_reference",
]

DEFAULT_EPS = 1e-6
DEFAULT_SOFTPLUS_THRESHOLD = 20.0


def logistic(x: float) -> float:
    """Numerically stable sigmoid; branches on sign to avoid exp overflow."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class CtuParams:
    """Immutable (beta, c) pair plus numeric knobs.

    eps keeps eta/gamma finite at beta=1; tests may set eps=0 and keep beta
    strictly inside (0, 1).
    """

    beta: float
    c: float
    eps: float = DEFAULT_EPS
    softplus_threshold: float = DEFAULT_SOFTPLUS_THRESHOLD

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not (0.0 <= self.c <= 1.0):
            raise ValueError(f"c must be in [0, 1], got {self.c}")
        if self.eps < 0.0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.eps == 0.0 and self.beta == 1.0:
            raise ValueError("beta=1 requires eps > 0 (eta/gamma diverge)")

    @property
    def eta(self) -> float:
        return self.beta / (1.0 - self.beta + self.eps)

    @property
    def gamma(self) -> float:
        return 1.0 / (1.0 - self.beta + self.eps)


@dataclass(frozen=True)
class RawCtuParams:
    """Unconstrained encoding of (beta, c); decoded through the logistic."""

    raw_beta: float
    raw_coeff: float

    def decode(self, eps: float = DEFAULT_EPS,
               softplus_threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> CtuParams:
        return CtuParams(
            beta=logistic(self.raw_beta),
            c=logistic(self.raw_coeff),
            eps=eps,
            softplus_threshold=softplus_threshold,
        )


def relu(x: float) -> float:
    return x if x > 0.0 else 0.0


def silu_eta(x: float, beta: float, eps: float = DEFAULT_EPS) -> float:
    """sigmoid(eta*x) * x with eta = beta / (1 - beta + eps)."""
    eta = beta / (1.0 - beta + eps)
    return logistic(eta * x) * x


def softplus_core(u: float, threshold: float) -> float:
    """ln(1 + exp(u)) with a symmetric drop convention: exactly u above the
    threshold and exactly 0 below -threshold.  The log-sum-exp smoothing path
    uses the same convention so both smoothing routes agree to rounding."""
    if u > threshold:
        return u
    if u < -threshold:
        return 0.0
    return math.log1p(math.exp(u))


def softplus_gamma(x: float, beta: float, eps: float = DEFAULT_EPS,
                   threshold: float = DEFAULT_SOFTPLUS_THRESHOLD) -> float:
    """(1/gamma) * ln(1 + exp(gamma*x)); returns x exactly when gamma*x > threshold."""
    gamma = 1.0 / (1.0 - beta + eps)
    u = gamma * x
    if u > threshold:
        return x
    return softplus_core(u, threshold) / gamma


def ctu(x: float, p: CtuParams) -> float:
    """c-weighted blend of the reparameterized SiLU and Softplus."""
    return (p.c * silu_eta(x, p.beta, p.eps)
            + (1.0 - p.c) * softplus_gamma(x, p.beta, p.eps, p.softplus_threshold))


def ctu_derivative(x: float, p: CtuParams) -> float:
    """Closed-form derivative of the blend.

    With b = eta (equal to beta/(1-beta) at eps=0):

        c * (sigmoid(b x) + b x sigmoid(b x)(1 - sigmoid(b x))) + (1-c) * sigmoid(gamma x)

    Rejects the degenerate endpoints beta in {0, 1} at eps=0; callers hold
    eps-stabilized params there.
    """
    if p.eps == 0.0 and (p.beta == 0.0 or p.beta == 1.0):
        raise ValueError("ctu_derivative undefined at exact beta in {0, 1} with eps=0")
    b = p.eta
    s = logistic(b * x)
    silu_term = s + b * x * s * (1.0 - s)
    softplus_term = logistic(p.gamma * x)
    return p.c * silu_term + (1.0 - p.c) * softplus_term


def _hbar_objective(y: float) -> float:
    s = logistic(y)
    return y * s * (1.0 - s)


@lru_cache(maxsize=1)
def hbar_bound() -> float:
    """Global max of y*sigmoid(y)*(1-sigmoid(y)) over y >= 0 (~0.2239).

    Dense grid bracketing followed by golden-section refinement to 1e-10.
    The value does not depend on the slope reparameterization.
    """
    grid = [0.01 * i for i in range(0, 1001)]  # the max sits near y ~ 2.4
    k = max(range(len(grid)), key=lambda i: _hbar_objective(grid[i]))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = _hbar_objective(c1), _hbar_objective(c2)
    while b - a > 1e-12:
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = _hbar_objective(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = _hbar_objective(c1)
    return _hbar_objective((a + b) / 2.0)


def gelu_reference(x: float) -> float:
    """Exact GELU x * Phi(x) via the error function."""
    return x * 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))
