"""Numerical curvature diagnostics: finite-difference gradients and Hessians,
discrete Sobolev semi-norm terms, activation-pattern / per-region affine-map
extraction for ReLU networks, 2-D decision-boundary contours, and the analytic
layer-product bound on the gradient norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .activations import hbar_bound
from .network import Network, SharedCtuSlot

__all__ = [
    "CurvatureReport",
    "ActivationPattern",
    "fd_gradient",
    "hessian_spectral_norm",
    "fd_hessian",
    "sobolev_seminorm",
    "activation_pattern",
    "region_affine",
    "stencil_in_one_region",
    "decision_boundary_2d",
    "polyline_turning_angle",
    "spectral_norm",
    "jacobian_bound",
    "curvature_report",
]

GRAD_STEP = 1e-5
HESS_STEP = 1e-3


@dataclass(frozen=True)
class ActivationPattern:
    """Sign bits of all hidden pre-activations, layer by layer."""

    bits: tuple

    def __eq__(self, other):
        return isinstance(other, ActivationPattern) and self.bits == other.bits

    def __hash__(self):
        return hash(self.bits)


@dataclass
class CurvatureReport:
    points: np.ndarray
    grad_norms: np.ndarray
    hessian_norms: np.ndarray   # nan where excluded
    sobolev_first: float
    sobolev_second: float
    excluded: np.ndarray

    def summary(self) -> dict:
        inc = ~self.excluded
        return {
            "n_points": int(len(self.points)),
            "n_excluded": int(self.excluded.sum()),
            "grad_norm_max": float(self.grad_norms.max()),
            "grad_norm_mean": float(self.grad_norms.mean()),
            "hessian_norm_max": float(np.max(self.hessian_norms[inc])) if inc.any() else float("nan"),
            "sobolev_first": self.sobolev_first,
            "sobolev_second": self.sobolev_second,
        }


def fd_gradient(f, x, h: float = GRAD_STEP) -> np.ndarray:
    """Central-difference gradient, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp = f(x + e)
        fm = f(x - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError("non-finite function value in fd_gradient")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def fd_hessian(f, x, h: float = HESS_STEP) -> np.ndarray:
    """Symmetrized central-difference Hessian matrix."""
    x = np.asarray(x, dtype=np.float64)
    d = x.size
    H = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / (h * h)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej)
                                 - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h)
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite values in fd_hessian")
    return 0.5 * (H + H.T)


def _power_iteration(M: np.ndarray, iters: int, tol: float, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = M @ v
        n = np.linalg.norm(w)
        if n == 0.0:
            return 0.0
        v_new = w / n
        lam_new = float(abs(v_new @ (M @ v_new)))
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return lam_new
        lam, v = lam_new, v_new
    return lam


def hessian_spectral_norm(f, x, h: float = HESS_STEP, power_iters: int = 50,
                          tol: float = 1e-8) -> float:
    """Largest |eigenvalue| of the symmetrized finite-difference Hessian."""
    H = fd_hessian(f, x, h)
    # power iteration on H @ H avoids sign flip issues for indefinite H
    lam2 = _power_iteration(H @ H, power_iters, tol)
    return math.sqrt(max(lam2, 0.0))


def spectral_norm(W: np.ndarray, iters: int = 100, seed: int = 7) -> float:
    """Largest singular value via power iteration on W^T W, fixed-seed start."""
    lam2 = _power_iteration(W.T @ W, iters, 0.0, seed=seed)
    return math.sqrt(max(lam2, 0.0))


# -- ReLU-network region analysis -------------------------------------------

def _relu_preactivations(net: Network, x: np.ndarray) -> list:
    if not net.is_pure_relu():
        raise ValueError("activation-pattern analysis requires a pure-ReLU network")
    zs = []
    h = np.asarray(x, dtype=np.float64).reshape(1, -1)
    for layer, _slot in zip(net.layers, net.slots):
        z = h @ layer.W.value.T + layer.b.value
        if layer.lora is not None:
            z = z + (layer.lora.alpha / layer.lora.r) * (h @ (layer.lora.B.value @ layer.lora.A.value).T)
        zs.append(z.reshape(-1))
        h = np.maximum(z, 0.0)
    return zs


def activation_pattern(net: Network, x) -> ActivationPattern:
    bits = []
    for z in _relu_preactivations(net, x):
        bits.extend(bool(v > 0.0) for v in z)
    return ActivationPattern(bits=tuple(bits))


def region_affine(net: Network, x) -> tuple[np.ndarray, float]:
    """Exact (a, b0) with f(y) = <a, y> + b0 on x's affine region (ReLU nets).

    Composes the masked affine layers: the mask of layer l zeroes the rows of
    the running map where the pre-activation is negative.
    """
    zs = _relu_preactivations(net, x)
    cur_M = np.eye(net.d_in)
    cur_v = np.zeros(net.d_in)
    for layer, z in zip(net.layers, zs):
        W = layer.W.value
        if layer.lora is not None:
            W = W + (layer.lora.alpha / layer.lora.r) * (layer.lora.B.value @ layer.lora.A.value)
        cur_M = W @ cur_M
        cur_v = W @ cur_v + layer.b.value
        mask = (z > 0.0).astype(np.float64)
        cur_M = cur_M * mask[:, None]
        cur_v = cur_v * mask
    last = net.layers[-1]
    W = last.W.value
    if last.lora is not None:
        W = W + (last.lora.alpha / last.lora.r) * (last.lora.B.value @ last.lora.A.value)
    cur_M = W @ cur_M
    cur_v = W @ cur_v + last.b.value
    return cur_M[0], float(cur_v[0])


def stencil_in_one_region(net: Network, x, h: float) -> bool:
    """True when all Hessian-stencil points share x's activation pattern."""
    x = np.asarray(x, dtype=np.float64)
    ref = activation_pattern(net, x)
    d = x.size
    offsets = [np.zeros(d)]
    for i in range(d):
        for si in (-1.0, 1.0):
            e = np.zeros(d)
            e[i] = si * h
            offsets.append(e)
        for j in range(i + 1, d):
            for si in (-1.0, 1.0):
                for sj in (-1.0, 1.0):
                    e = np.zeros(d)
                    e[i] = si * h
                    e[j] = sj * h
                    offsets.append(e)
    return all(activation_pattern(net, x + off) == ref for off in offsets)


def sobolev_seminorm(f, dataset, q: int = 2, p: int = 2,
                     exclude=None) -> tuple[float, float]:
    """Discrete Sobolev semi-norm terms over a finite point set.

    Returns (mean ||grad f||^2, mean ||hess f||^2); points flagged by the
    optional exclude mask contribute to neither term.
    """
    if q != 2 or p != 2:
        raise NotImplementedError("only the (q=2, p=2) semi-norm is supported")
    pts = np.asarray(dataset, dtype=np.float64)
    if exclude is None:
        exclude = np.zeros(len(pts), dtype=bool)
    keep = ~np.asarray(exclude, dtype=bool)
    if not keep.any():
        raise ValueError("all points excluded from Sobolev semi-norm")
    first = []
    second = []
    for x in pts[keep]:
        first.append(float(np.sum(fd_gradient(f, x) ** 2)))
        second.append(hessian_spectral_norm(f, x) ** 2)
    return float(np.mean(first)), float(np.mean(second))


def curvature_report(net: Network, points, relu_reference: Network | None = None) -> CurvatureReport:
    """Per-point gradient/Hessian diagnostics for a (possibly smoothed) net.

    Stencil exclusion uses the ReLU reference network when given (a smoothed
    net has no regions); otherwise the net itself must be pure ReLU.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    f = net.scalar_fn()
    pattern_net = relu_reference if relu_reference is not None else net
    use_patterns = pattern_net.is_pure_relu()
    grad_norms = np.empty(len(pts))
    hess_norms = np.full(len(pts), np.nan)
    excluded = np.zeros(len(pts), dtype=bool)
    for i, x in enumerate(pts):
        grad_norms[i] = float(np.linalg.norm(fd_gradient(f, x)))
        if use_patterns and not stencil_in_one_region(pattern_net, x, HESS_STEP):
            excluded[i] = True
            continue
        hess_norms[i] = hessian_spectral_norm(f, x)
    keep = ~excluded
    first = float(np.mean(grad_norms[keep] ** 2))
    second = float(np.mean(hess_norms[keep] ** 2))
    return CurvatureReport(points=pts, grad_norms=grad_norms,
                           hessian_norms=hess_norms, sobolev_first=first,
                           sobolev_second=second, excluded=excluded)


# -- decision boundary extraction -------------------------------------------

def _interp(p1, p2, v1, v2):
    t = v1 / (v1 - v2)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


def decision_boundary_2d(f, bbox, resolution: int = 200) -> list:
    """Marching-squares zero-contour of a scalar field over a 2-D box.

    bbox = (x_lo, x_hi, y_lo, y_hi).  Returns a list of polylines, each an
    (m, 2) array of vertices ordered along the contour.
    """
    x_lo, x_hi, y_lo, y_hi = bbox
    if not (x_hi > x_lo and y_hi > y_lo) or resolution < 2:
        raise ValueError("degenerate bounding box or resolution")
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    vals = np.empty((resolution, resolution))
    for i, xv in enumerate(xs):
        for j, yv in enumerate(ys):
            vals[i, j] = f(np.array([xv, yv]))
    segments = []
    for i in range(resolution - 1):
        for j in range(resolution - 1):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            pts = [(xs[a], ys[b]) for a, b in corners]
            vs = [vals[a, b] for a, b in corners]
            crossings = []
            for k in range(4):
                v1, v2 = vs[k], vs[(k + 1) % 4]
                if (v1 > 0.0) != (v2 > 0.0):
                    crossings.append(_interp(pts[k], pts[(k + 1) % 4], v1, v2))
            if len(crossings) == 2:
                segments.append((crossings[0], crossings[1]))
            elif len(crossings) == 4:
                # ambiguous saddle; resolve by center sign
                center = 0.25 * sum(vs)
                if (center > 0.0) == (vs[0] > 0.0):
                    segments.append((crossings[0], crossings[3]))
                    segments.append((crossings[1], crossings[2]))
                else:
                    segments.append((crossings[0], crossings[1]))
                    segments.append((crossings[2], crossings[3]))
    return _chain_segments(segments)


def _chain_segments(segments, tol: float = 1e-9) -> list:
    """Join loose segments into ordered polylines by matching endpoints."""
    def key(p):
        return (round(p[0] / tol), round(p[1] / tol))

    adj: dict = {}
    for si, (a, b) in enumerate(segments):
        adj.setdefault(key(a), []).append((si, a, b))
        adj.setdefault(key(b), []).append((si, b, a))
    used = [False] * len(segments)
    polylines = []
    for si in range(len(segments)):
        if used[si]:
            continue
        used[si] = True
        a, b = segments[si]
        chain = [a, b]
        # extend forward then backward
        for endpoint_idx in (1, 0):
            while True:
                end = chain[-1] if endpoint_idx == 1 else chain[0]
                nxt = None
                for sj, p, q in adj.get(key(end), []):
                    if not used[sj]:
                        nxt = (sj, q)
                        break
                if nxt is None:
                    break
                used[nxt[0]] = True
                if endpoint_idx == 1:
                    chain.append(nxt[1])
                else:
                    chain.insert(0, nxt[1])
        polylines.append(np.array(chain))
    return polylines


def polyline_turning_angle(polyline: np.ndarray) -> float:
    """Sum of absolute turning angles along a polyline (radians)."""
    pts = np.asarray(polyline, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    d = np.diff(pts, axis=0)
    lens = np.linalg.norm(d, axis=1)
    keep = lens > 1e-12
    d = d[keep]
    total = 0.0
    for k in range(len(d) - 1):
        cross = d[k, 0] * d[k + 1, 1] - d[k, 1] * d[k + 1, 0]
        dot = float(d[k] @ d[k + 1])
        total += abs(math.atan2(cross, dot))
    return total


def jacobian_bound(net: Network, beta: float | None = None, c: float | None = None) -> float:
    """Analytic product bound on ||grad f||:

        ||W_L|| * prod_l sqrt(d_l) * (1 + c * hbar) * ||W_l||

    beta/c default to the network's shared slot parameters; c=1 is assumed for
    ReLU slots (their derivative bound is 1, so 1 + c*hbar stays valid).
    """
    if c is None:
        cs = [s.params.c for s in net.slots if isinstance(s, SharedCtuSlot)]
        c = max(cs) if cs else 1.0
    hbar = hbar_bound()
    bound = spectral_norm(net.layers[-1].W.value)
    for layer, _slot in zip(net.layers, net.slots):
        d_l = layer.W.value.shape[0]
        bound *= math.sqrt(d_l) * (1.0 + c * hbar) * spectral_norm(layer.W.value)
    return bound
