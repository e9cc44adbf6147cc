"""Synthetic toy datasets: the two-ring (annulus) classification task whose
optimal decision boundary is the unit circle, and a 1-D sine regression task.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import SplitMix64

__all__ = ["Dataset", "CircleTask", "gen_annulus", "gen_regression_1d"]


@dataclass(frozen=True)
class CircleTask:
    """Geometry of the classification toy: class 0 inside radius 1/2, class 1
    in the ring [3/2, 2]; target boundary is the unit circle."""

    r0_lo: float = 0.0
    r0_hi: float = 0.5
    r1_lo: float = 1.5
    r1_hi: float = 2.0

    @staticmethod
    def gamma(t):
        """Unit-circle curve (cos 2*pi*t, sin 2*pi*t)."""
        t = np.asarray(t, dtype=np.float64)
        return np.stack([np.cos(2.0 * np.pi * t), np.sin(2.0 * np.pi * t)], axis=-1)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray   # (N, D)
    targets: np.ndarray  # (N,)
    split: np.ndarray    # (N,) strings in {train, val, test}

    def subset(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        m = self.split == tag
        return self.inputs[m], self.targets[m]

    @property
    def train(self):
        return self.subset("train")

    @property
    def val(self):
        return self.subset("val")

    @property
    def test(self):
        return self.subset("test")


def _split_tags(n: int, fractions=(0.7, 0.15, 0.15)) -> np.ndarray:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    tags = np.array(["train"] * n_train + ["val"] * n_val
                    + ["test"] * (n - n_train - n_val))
    return tags


def _ring_points(rng: SplitMix64, n: int, r_lo: float, r_hi: float) -> np.ndarray:
    # uniform in area: radius^2 uniform on [r_lo^2, r_hi^2]
    pts = np.empty((n, 2))
    for i in range(n):
        r = math.sqrt(rng.uniform(r_lo * r_lo, r_hi * r_hi))
        theta = rng.uniform(0.0, 2.0 * math.pi)
        pts[i] = (r * math.cos(theta), r * math.sin(theta))
    return pts


def gen_annulus(n: int, seed: int, task: CircleTask = CircleTask()) -> Dataset:
    """n/2 points per class, uniform in area; splits stratified per class."""
    if n % 2 != 0:
        raise ValueError("n must be even for exact class balance")
    rng = SplitMix64(seed)
    half = n // 2
    inner = _ring_points(rng, half, task.r0_lo, task.r0_hi)
    outer = _ring_points(rng, half, task.r1_lo, task.r1_hi)
    tags0 = _split_tags(half)
    tags1 = _split_tags(half)
    inputs = np.concatenate([inner, outer])
    targets = np.concatenate([np.zeros(half), np.ones(half)])
    split = np.concatenate([tags0, tags1])
    return Dataset(inputs=inputs, targets=targets, split=split)


def gen_regression_1d(n: int, seed: int) -> Dataset:
    """x uniform on [-1, 1], y = sin(2*pi*x)."""
    rng = SplitMix64(seed)
    x = rng.uniforms(n, -1.0, 1.0)
    y = np.sin(2.0 * np.pi * x)
    return Dataset(inputs=x.reshape(-1, 1), targets=y, split=_split_tags(n))
