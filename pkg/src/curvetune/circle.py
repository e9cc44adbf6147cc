"""Exact closed-form line-integral error of a ReLU network against the unit
circle, plus a Simpson quadrature oracle that also covers smoothed networks.

The boundary error is e = integral over the unit circle of |f|, written with
gamma(t) = (cos 2*pi*t, sin 2*pi*t) as

    e = 2*pi * integral_0^1 |f(gamma(t))| dt.

For a piecewise-affine f the circle decomposes into segments with a fixed
region affine map (a, b0); on each segment the integrand is
|h(t)| = |a1 cos 2*pi*t + a2 sin 2*pi*t + b0| and the antiderivative of h is
g(t) = a1 sin(2*pi*t)/(2*pi) - a2 cos(2*pi*t)/(2*pi) + b0*t, giving a closed
form per segment once the sign-flip point of h is located.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import activation_pattern, region_affine
from .network import Network

__all__ = [
    "BreakpointSet",
    "SegmentError",
    "pullback_breakpoints",
    "flip_point",
    "segment_error",
    "total_error_closed",
    "total_error_quadrature",
]

TWO_PI = 2.0 * math.pi


def _gamma(t: float) -> np.ndarray:
    return np.array([math.cos(TWO_PI * t), math.sin(TWO_PI * t)])


@dataclass(frozen=True)
class BreakpointSet:
    """Sorted knots on [0, 1] plus the per-segment region affine maps."""

    knots: np.ndarray              # includes 0 and 1
    region_affines: list           # len(knots) - 1 pairs (a, b0)

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=np.float64)
        if k[0] != 0.0 or k[-1] != 1.0 or np.any(np.diff(k) < 0.0):
            raise ValueError("knots must be sorted and span [0, 1]")
        if len(self.region_affines) != len(k) - 1:
            raise ValueError("need one affine map per segment")
        object.__setattr__(self, "knots", k)


@dataclass(frozen=True)
class SegmentError:
    t_lo: float
    t_hi: float
    flip: float | None
    contribution: float  # integral of |h| over the segment (no 2*pi factor)

    def __post_init__(self):
        if self.contribution < -1e-12:
            raise ValueError(f"negative segment contribution {self.contribution}")


def pullback_breakpoints(net: Network, n_scan: int = 4096,
                         refine_tol: float = 1e-12) -> BreakpointSet:
    """Scan t on a uniform grid for activation-pattern changes and refine each
    change point by bisection; the per-segment affine map is read at the
    segment midpoint."""
    if net.d_in != 2:
        raise ValueError("circle pullback requires a 2-D input network")
    ts = np.linspace(0.0, 1.0, n_scan + 1)
    patterns = [activation_pattern(net, _gamma(t)) for t in ts]
    knots = [0.0]
    for i in range(n_scan):
        if patterns[i] != patterns[i + 1]:
            lo, hi = ts[i], ts[i + 1]
            p_lo = patterns[i]
            while hi - lo > refine_tol:
                mid = 0.5 * (lo + hi)
                if activation_pattern(net, _gamma(mid)) == p_lo:
                    lo = mid
                else:
                    hi = mid
            knots.append(0.5 * (lo + hi))
    knots.append(1.0)
    knots = np.array(sorted(set(knots)))
    affines = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (lo + hi)
        affines.append(region_affine(net, _gamma(mid)))
    return BreakpointSet(knots=knots, region_affines=affines)


def _h(a, b0, t):
    return a[0] * math.cos(TWO_PI * t) + a[1] * math.sin(TWO_PI * t) + b0


def _g(a, b0, t):
    return (a[0] * math.sin(TWO_PI * t) / TWO_PI
            - a[1] * math.cos(TWO_PI * t) / TWO_PI + b0 * t)


def _critical_points(a, t_lo: float, t_hi: float) -> list:
    """Interior extrema of h: solutions of -a1 sin + a2 cos = 0."""
    if a[0] == 0.0 and a[1] == 0.0:
        return []
    t0 = math.atan2(a[1], a[0]) / TWO_PI  # h'(t0) = 0
    out = []
    k = math.floor((t_lo - t0) * 2.0) - 1
    while True:
        t = t0 + 0.5 * k
        if t > t_hi:
            break
        if t_lo < t < t_hi:
            out.append(t)
        k += 1
    return sorted(out)


def _bisect_root(a, b0, lo: float, hi: float, tol: float = 1e-12) -> float:
    f_lo = _h(a, b0, lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = _h(a, b0, mid)
        if (f_lo < 0.0) == (f_mid < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def flip_point(a, b0, t_lo: float, t_hi: float) -> float | None:
    """Unique sign-change point of h on (t_lo, t_hi), or None.

    The interval is first subdivided at interior extrema of the sinusoid so
    every bisection bracket is monotone.
    """
    a = np.asarray(a, dtype=np.float64)
    pieces = [t_lo] + _critical_points(a, t_lo, t_hi) + [t_hi]
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        if (_h(a, b0, lo) < 0.0) != (_h(a, b0, hi) < 0.0):
            return _bisect_root(a, b0, lo, hi)
    return None


def segment_error(a, b0, t_lo: float, t_hi: float, s: float | None) -> SegmentError:
    """Closed-form integral of |h| over [t_lo, t_hi] with one flip at s.

    The sign of each sub-bracket is read at its midpoint, which equals the
    endpoint-sign convention (-1)^z while staying robust when h vanishes at a
    knot.
    """
    a = np.asarray(a, dtype=np.float64)
    if s is None:
        s = t_lo
    contribution = 0.0
    flip = None if s == t_lo else s
    for lo, hi in ((t_lo, s), (s, t_hi)):
        if hi <= lo:
            continue
        sign = 1.0 if _h(a, b0, 0.5 * (lo + hi)) >= 0.0 else -1.0
        contribution += sign * (_g(a, b0, hi) - _g(a, b0, lo))
    return SegmentError(t_lo=t_lo, t_hi=t_hi, flip=flip, contribution=contribution)


def total_error_closed(net: Network, n_scan: int = 4096) -> float:
    """2*pi times the sum of closed-form segment contributions.

    Only valid for piecewise-affine (pure ReLU) networks; segments are
    additionally split at interior extrema of their h so each piece holds at
    most one sign flip.
    """
    if not net.is_pure_relu():
        raise ValueError("closed-form circle error requires a pure-ReLU network; "
                         "use total_error_quadrature for smoothed networks")
    bps = pullback_breakpoints(net, n_scan=n_scan)
    total = 0.0
    for (t_lo, t_hi), (a, b0) in zip(zip(bps.knots[:-1], bps.knots[1:]),
                                     bps.region_affines):
        pieces = [t_lo] + _critical_points(np.asarray(a), t_lo, t_hi) + [t_hi]
        for lo, hi in zip(pieces[:-1], pieces[1:]):
            s = flip_point(a, b0, lo, hi)
            total += segment_error(a, b0, lo, hi, s).contribution
    return TWO_PI * total


def total_error_quadrature(f, n_panels: int = 8192) -> float:
    """Composite Simpson of |f(gamma(t))| * 2*pi over uniform panels.

    f maps a 2-vector to a scalar; any continuous network output works.
    """
    n = 2 * n_panels
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = np.stack([np.cos(TWO_PI * ts), np.sin(TWO_PI * ts)], axis=1)
    try:  # batched evaluation when f accepts an (N, 2) array
        out = np.asarray(f(pts), dtype=np.float64).reshape(-1)
        vals = np.abs(out) if out.shape == (n + 1,) else None
    except Exception:
        vals = None
    if vals is None:
        vals = np.array([abs(float(f(p))) for p in pts])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite boundary values in quadrature")
    h = 1.0 / n
    simpson = vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-1:2].sum()
    return TWO_PI * simpson * h / 3.0
