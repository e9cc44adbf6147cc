"""Artifact emission: delimited CSV, canonical JSON, minimal SVG renderings of
boundary polylines, matplotlib figures, and the run manifest.

CSV and JSON bodies are byte-reproducible for a fixed (seed, config): floats
are formatted with repr (shortest round-trip form) and JSON keys are sorted.
PNG figures are renderings only; the polyline vertices always live in a CSV.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "fmt_float",
    "write_csv",
    "write_json",
    "write_boundary_svg",
    "plot_boundary_png",
    "plot_sweep_png",
    "plot_fit_png",
    "RunManifestWriter",
]

SCHEMA_VERSION = 1


def fmt_float(v) -> str:
    v = float(v)
    if v != v:
        return "nan"
    return repr(v)


def write_csv(path, header: list, rows) -> None:
    def cell(v):
        if isinstance(v, bool):
            return str(v)
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return fmt_float(v)
        return str(v)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _bbox_of(polylines) -> tuple:
    pts = np.concatenate([np.asarray(p) for p in polylines]) if polylines else np.zeros((1, 2))
    x_lo, y_lo = pts.min(axis=0)
    x_hi, y_hi = pts.max(axis=0)
    dx = max(x_hi - x_lo, 1e-9)
    dy = max(y_hi - y_lo, 1e-9)
    return (x_lo - 0.05 * dx, y_lo - 0.05 * dy, dx * 1.1, dy * 1.1)


def write_boundary_svg(path, polylines) -> None:
    """Hand-rolled SVG: one <polyline> per contour piece, viewBox = data bbox
    with a 5% margin mapped onto 1000x1000 units."""
    x0, y0, w, h = _bbox_of(polylines)
    scale = 1000.0 / max(w, h)
    parts = ['<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1000 1000">']
    for poly in polylines:
        pts = " ".join(
            f"{fmt_float((px - x0) * scale)},{fmt_float(1000.0 - (py - y0) * scale)}"
            for px, py in np.asarray(poly))
        parts.append(f'<polyline fill="none" stroke="black" stroke-width="2" points="{pts}"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def plot_boundary_png(path, polylines, data=None, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    if data is not None:
        X, y = data
        ax.scatter(X[y < 0.5, 0], X[y < 0.5, 1], s=6, c="tab:blue", alpha=0.5, label="class 0")
        ax.scatter(X[y > 0.5, 0], X[y > 0.5, 1], s=6, c="tab:orange", alpha=0.5, label="class 1")
    theta = np.linspace(0.0, 2.0 * np.pi, 256)
    ax.plot(np.cos(theta), np.sin(theta), "g--", lw=1, label="unit circle")
    for poly in polylines:
        p = np.asarray(poly)
        ax.plot(p[:, 0], p[:, 1], "k-", lw=1.5)
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep_png(path, betas, metrics, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(betas, metrics, "o-", ms=3)
    ax.set_xlabel("beta")
    ax.set_ylabel("validation metric")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fit_png(path, x_grid, preds_by_beta, targets=None, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if targets is not None:
        ax.plot(x_grid, targets, "k--", lw=1, label="target")
    for beta, pred in preds_by_beta:
        ax.plot(x_grid, pred, lw=1, label=f"beta={beta:g}")
    ax.set_xlabel("x")
    ax.legend(fontsize=6, ncol=2)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


class RunManifestWriter:
    """Collects emitted files for a run and writes manifest.json last.

    The manifest carries the command, config snapshot, seed, a sha256 of the
    config, the output list with per-file hashes, and wall-clock (the only
    non-reproducible field).
    """

    def __init__(self, out_dir, command: str, config: dict, seed: int):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.seed = seed
        self.outputs: list = []
        self._t0 = time.monotonic()

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(name)
        return p

    def finalize(self) -> Path:
        config_blob = json.dumps(self.config, sort_keys=True).encode()
        files = []
        for name in sorted(set(self.outputs)):
            digest = hashlib.sha256((self.out_dir / name).read_bytes()).hexdigest()
            files.append({"name": name, "sha256": digest})
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "config_sha256": hashlib.sha256(config_blob).hexdigest(),
            "outputs": files,
            "wall_clock_s": round(time.monotonic() - self._t0, 3),
        }
        p = self.out_dir / "manifest.json"
        write_json(p, manifest)
        return p
