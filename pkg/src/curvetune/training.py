"""Training procedures: base pretraining, steering grid search, trainable-unit
finetuning, linear probing, and LoRA finetuning.  All trainers run full batch
and are deterministic given (seed, config, data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .network import (Network, TrainableCtuSlot, replace_relu_shared)

__all__ = [
    "TrainConfig",
    "GridSearchResult",
    "TrainResult",
    "evaluate",
    "train_base",
    "sct_grid_search",
    "train_tct",
    "train_linear_probe",
    "train_lora",
]


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 4000
    lr_main: float = 1e-3
    lr_ct: float = 1e-1      # raw (beta, c) parameters
    lr_head: float = 1e-3    # final linear layer
    lr_lora: float = 1e-4
    loss: str = "bce_logits"  # or "mse"
    seed: int = 0
    eval_every: int = 100
    train_head: bool = True   # whether finetuners also update the head

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        for name in ("lr_main", "lr_ct", "lr_head", "lr_lora"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.loss not in ("bce_logits", "mse"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class TrainResult:
    net: Network
    losses: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


@dataclass
class GridSearchResult:
    betas: np.ndarray
    metrics: np.ndarray
    best_beta: float
    best_metric: float
    baseline_metric: float


def _loss_tensor(net: Network, X, y, kind: str):
    out = net.forward(X)
    if kind == "bce_logits":
        return ad.bce_with_logits_loss(out, y.reshape(-1, 1))
    return ad.mse_loss(out, y.reshape(-1, 1))


def evaluate(net: Network, X, y, loss: str) -> float:
    """Validation metric: accuracy for classification, negative MSE otherwise."""
    pred = net.predict(X)
    if loss == "bce_logits":
        return float(np.mean((pred.reshape(-1) > 0.0) == (y > 0.5)))
    return -float(np.mean((pred.reshape(-1) - y) ** 2))


def _run_adam(net: Network, X, y, cfg: TrainConfig, groups) -> list:
    """groups: list of (params, lr); returns eval-loss curve."""
    losses = []
    for step in range(cfg.steps):
        net.zero_grads()
        loss = _loss_tensor(net, X, y, cfg.loss)
        ad.backward(loss)
        for params, lr in groups:
            ad.adam_step(params, lr)
        if (step + 1) % cfg.eval_every == 0 or step == cfg.steps - 1:
            losses.append(loss.item())
    return losses


def train_base(net: Network, data, cfg: TrainConfig) -> TrainResult:
    """Full-batch Adam on all parameters of a fresh (ReLU) network."""
    X, y = data.train
    losses = _run_adam(net, X, y, cfg, [(net.all_params(), cfg.lr_main)])
    return TrainResult(net=net, losses=losses)


def _beta_grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 10)


def sct_grid_search(net: Network, val_data, beta_lo: float = 0.7,
                    beta_hi: float = 1.0, step: float = 0.01, c: float = 0.5,
                    mode: str = "direct",
                    cfg: TrainConfig | None = None) -> GridSearchResult:
    """Sweep the shared beta over an inclusive grid; never mutates the input.

    mode="direct" evaluates each steered clone as-is; mode="reprobe" retrains
    the head at each beta first (cfg required).  Ties in the argmax break to
    the larger beta.
    """
    Xv, yv = val_data
    if len(Xv) == 0:
        raise ValueError("empty validation set")
    if mode not in ("direct", "reprobe"):
        raise ValueError(f"unknown grid-search mode {mode!r}")
    loss_kind = cfg.loss if cfg is not None else "bce_logits"
    betas = _beta_grid(beta_lo, beta_hi, step)
    metrics = np.empty(len(betas))
    for i, beta in enumerate(betas):
        candidate = replace_relu_shared(net, beta=float(beta), c=c)
        if mode == "reprobe":
            train_linear_probe(candidate, val_data, cfg)
        metrics[i] = evaluate(candidate, Xv, yv, loss_kind)
    baseline = evaluate(net, Xv, yv, loss_kind)
    best_i = 0
    for i in range(1, len(betas)):
        if metrics[i] >= metrics[best_i]:
            best_i = i
    return GridSearchResult(betas=betas, metrics=metrics,
                            best_beta=float(betas[best_i]),
                            best_metric=float(metrics[best_i]),
                            baseline_metric=baseline)


def _decoded_summary(net: Network) -> dict:
    betas, cs = [], []
    for slot in net.slots:
        if isinstance(slot, TrainableCtuSlot):
            b, c = slot.decoded()
            betas.append(b)
            cs.append(c)
    betas = np.concatenate(betas)
    cs = np.concatenate(cs)
    hist_b, edges = np.histogram(betas, bins=10, range=(0.0, 1.0))
    hist_c, _ = np.histogram(cs, bins=10, range=(0.0, 1.0))
    return {
        "beta_mean": float(betas.mean()), "beta_std": float(betas.std()),
        "c_mean": float(cs.mean()), "c_std": float(cs.std()),
        "beta_hist": hist_b.tolist(), "c_hist": hist_c.tolist(),
        "hist_edges": edges.tolist(),
    }


def train_tct(net: Network, data, cfg: TrainConfig) -> TrainResult:
    """Optimize raw (beta, c) pairs (and optionally the head); backbone frozen."""
    ct_params = net.ct_params()
    if not ct_params:
        raise ValueError("network has no trainable activation parameters")
    net.set_dense_trainable(False)
    groups = [(ct_params, cfg.lr_ct)]
    if cfg.train_head:
        net.set_head_trainable(True)
        groups.append(([net.layers[-1].W, net.layers[-1].b], cfg.lr_head))
    X, y = data.train
    losses = _run_adam(net, X, y, cfg, groups)
    return TrainResult(net=net, losses=losses, summary=_decoded_summary(net))


def train_linear_probe(net: Network, data, cfg: TrainConfig) -> TrainResult:
    """Retrain only the final dense layer on frozen features."""
    for p in net.all_params():
        p.trainable = False
    net.set_head_trainable(True)
    X, y = data if isinstance(data, tuple) else data.train
    losses = _run_adam(net, X, y, cfg,
                       [([net.layers[-1].W, net.layers[-1].b], cfg.lr_head)])
    return TrainResult(net=net, losses=losses)


def train_lora(net: Network, data, cfg: TrainConfig) -> TrainResult:
    """Update only adapter factors (and optionally the head); base frozen."""
    lora_params = net.lora_params()
    if not lora_params:
        raise ValueError("network has no adapters attached")
    net.set_dense_trainable(False)
    groups = [(lora_params, cfg.lr_lora)]
    if cfg.train_head:
        net.set_head_trainable(True)
        groups.append(([net.layers[-1].W, net.layers[-1].b], cfg.lr_lora))
    X, y = data.train
    losses = _run_adam(net, X, y, cfg, groups)
    return TrainResult(net=net, losses=losses)
