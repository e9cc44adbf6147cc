"""End-to-end toy experiments: the pretrain/finetune comparison (frozen vs
LoRA vs trainable smoothing) and the beta sweep over classification and
regression models.  Each pipeline is a pure function of (seed, config) and
emits CSV/JSON/SVG artifacts plus PNG renderings through a manifest writer.
"""

from __future__ import annotations

import numpy as np

from . import reports
from .circle import total_error_closed, total_error_quadrature
from .curvature import curvature_report, decision_boundary_2d, polyline_turning_angle
from .data import gen_annulus, gen_regression_1d
from .network import (MlpSpec, attach_lora, build_mlp, param_count,
                      replace_relu_shared, replace_relu_trainable,
                      save_checkpoint)
from .training import (TrainConfig, evaluate, train_base, train_lora, train_tct)

__all__ = ["FIG2_WIDTHS", "FIG1_CLS_WIDTHS", "FIG1_REG_WIDTHS",
           "run_fig2_pipeline", "run_fig1_sweep"]

FIG2_WIDTHS = (2, 7, 1)
FIG1_CLS_WIDTHS = (2, 20, 20, 1)
FIG1_REG_WIDTHS = (1,) + (64,) * 8 + (1,)

BBOX = (-2.2, 2.2, -2.2, 2.2)

SWEEP_HEADER = ["beta[dimensionless]", "metric[accuracy_or_neg_mse]",
                "circle_error[length]"]
BOUNDARY_HEADER = ["polyline_id[index]", "x1[input_units]", "x2[input_units]"]
CURVATURE_HEADER = ["x1[input_units]", "x2[input_units]", "grad_norm[output_per_input]",
                    "hessian_norm[output_per_input_sq]", "excluded[flag]"]


def _emit_boundary(man, stem: str, polylines, data=None, title: str = ""):
    rows = []
    for pid, poly in enumerate(polylines):
        for x1, x2 in np.asarray(poly):
            rows.append((pid, x1, x2))
    reports.write_csv(man.path(f"{stem}_boundary.csv"), BOUNDARY_HEADER, rows)
    reports.write_boundary_svg(man.path(f"{stem}_boundary.svg"), polylines)
    reports.plot_boundary_png(man.path(f"{stem}_boundary.png"), polylines,
                              data=data, title=title)


def _emit_curvature(man, stem: str, report):
    rows = []
    for i, (x1, x2) in enumerate(report.points):
        rows.append((x1, x2, report.grad_norms[i], report.hessian_norms[i],
                     int(report.excluded[i])))
    reports.write_csv(man.path(f"{stem}_curvature.csv"), CURVATURE_HEADER, rows)
    reports.write_json(man.path(f"{stem}_curvature.json"), report.summary())


def _diag_points(seed: int, n: int = 24) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-2.0, 2.0, size=(n, 2))


def run_fig2_pipeline(cfg: dict, man: reports.RunManifestWriter) -> dict:
    """Pretrain a small classifier on the two-ring task, then branch into a
    frozen baseline, a rank-1 LoRA finetune, and trainable activation
    smoothing; reports circle-boundary errors and curvature for each."""
    seed = int(cfg.get("seed", 42))
    n = int(cfg.get("n", 512))
    steps_pre = int(cfg.get("steps_pretrain", 4000))
    steps_ft = int(cfg.get("steps_finetune", 4000))
    resolution = int(cfg.get("boundary_resolution", 200))

    data = gen_annulus(n, seed)
    base = build_mlp(MlpSpec(widths=FIG2_WIDTHS, seed=seed))
    pre_cfg = TrainConfig(steps=steps_pre, loss="bce_logits", seed=seed)
    train_base(base, data, pre_cfg)
    save_checkpoint(base, man.path("baseline.ckpt.json"))

    Xv, yv = data.val
    diag_pts = _diag_points(seed)
    summary: dict = {"seed": seed, "branches": {}}

    # frozen baseline
    e_closed = total_error_closed(base)
    e_quad = total_error_quadrature(base.predict)
    polys = decision_boundary_2d(base.scalar_fn(), BBOX, resolution)
    _emit_boundary(man, "baseline", polys, data=data.train, title="frozen baseline")
    _emit_curvature(man, "baseline", curvature_report(base, diag_pts))
    summary["branches"]["baseline"] = {
        "circle_error_closed": e_closed,
        "circle_error_quadrature": e_quad,
        "relative_gap": abs(e_closed - e_quad) / max(e_quad, 1e-12),
        "val_accuracy": evaluate(base, Xv, yv, "bce_logits"),
        "trainable_params": 0,
        "turning_angle": sum(polyline_turning_angle(p) for p in polys),
    }

    # LoRA branch: geometry stays piecewise affine
    lora_net = attach_lora(base, r=int(cfg.get("lora_r", 1)),
                           alpha=float(cfg.get("lora_alpha", 1.0)), seed=seed)
    ft_cfg = TrainConfig(steps=steps_ft, loss="bce_logits", seed=seed,
                         train_head=False)
    train_lora(lora_net, data, ft_cfg)
    save_checkpoint(lora_net, man.path("lora.ckpt.json"))
    e_closed_l = total_error_closed(lora_net)
    e_quad_l = total_error_quadrature(lora_net.predict)
    polys_l = decision_boundary_2d(lora_net.scalar_fn(), BBOX, resolution)
    _emit_boundary(man, "lora", polys_l, data=data.train, title="LoRA finetune")
    _emit_curvature(man, "lora", curvature_report(lora_net, diag_pts))
    summary["branches"]["lora"] = {
        "circle_error_closed": e_closed_l,
        "circle_error_quadrature": e_quad_l,
        "val_accuracy": evaluate(lora_net, Xv, yv, "bce_logits"),
        "trainable_params": param_count(lora_net, "lora"),
        "turning_angle": sum(polyline_turning_angle(p) for p in polys_l),
    }

    # trainable smoothing branch
    tct_net = replace_relu_trainable(base)
    tct_res = train_tct(tct_net, data, TrainConfig(steps=steps_ft,
                                                   loss="bce_logits", seed=seed))
    save_checkpoint(tct_net, man.path("tct.ckpt.json"))
    e_quad_t = total_error_quadrature(tct_net.predict)
    polys_t = decision_boundary_2d(tct_net.scalar_fn(), BBOX, resolution)
    _emit_boundary(man, "tct", polys_t, data=data.train, title="trainable smoothing")
    _emit_curvature(man, "tct", curvature_report(tct_net, diag_pts,
                                                 relu_reference=base))
    summary["branches"]["tct"] = {
        "circle_error_quadrature": e_quad_t,
        "val_accuracy": evaluate(tct_net, Xv, yv, "bce_logits"),
        "trainable_params": param_count(tct_net, "ct"),
        "decoded": tct_res.summary,
        "turning_angle": sum(polyline_turning_angle(p) for p in polys_t),
    }

    reports.write_json(man.path("fig2_summary.json"), summary)
    return summary


def run_fig1_sweep(cfg: dict, man: reports.RunManifestWriter) -> dict:
    """Train a classifier and a regressor, then sweep the shared beta from 1
    to 0 and record how the decision boundary / fit deforms."""
    seed = int(cfg.get("seed", 42))
    c = float(cfg.get("c", 1.0))
    betas = np.round(np.linspace(1.0, 0.0, 11), 10)
    resolution = int(cfg.get("boundary_resolution", 200))
    summary: dict = {"seed": seed, "c": c, "betas": betas.tolist()}

    # classification sweep
    cls_data = gen_annulus(int(cfg.get("n_cls", 512)), seed)
    cls_net = build_mlp(MlpSpec(widths=FIG1_CLS_WIDTHS, seed=seed))
    train_base(cls_net, cls_data,
               TrainConfig(steps=int(cfg.get("steps_cls", 2000)),
                           loss="bce_logits", seed=seed))
    save_checkpoint(cls_net, man.path("fig1_cls.ckpt.json"))
    Xv, yv = cls_data.val
    rows = []
    cls_frames = {}
    for beta in betas:
        steered = replace_relu_shared(cls_net, beta=float(beta), c=c)
        metric = evaluate(steered, Xv, yv, "bce_logits")
        err = total_error_quadrature(steered.predict)
        polys = decision_boundary_2d(steered.scalar_fn(), BBOX, resolution)
        stem = f"fig1_cls_beta_{beta:.1f}"
        _emit_boundary(man, stem, polys, data=cls_data.train,
                       title=f"beta={beta:.1f}")
        rows.append((beta, metric, err))
        cls_frames[f"{beta:.1f}"] = {
            "metric": metric, "circle_error": err,
            "turning_angle": sum(polyline_turning_angle(p) for p in polys),
        }
    reports.write_csv(man.path("fig1_cls_sweep.csv"), SWEEP_HEADER, rows)
    reports.plot_sweep_png(man.path("fig1_cls_sweep.png"),
                           [r[0] for r in rows], [r[1] for r in rows],
                           title="classification beta sweep")
    summary["classification"] = cls_frames

    # regression sweep
    reg_data = gen_regression_1d(int(cfg.get("n_reg", 256)), seed)
    reg_net = build_mlp(MlpSpec(widths=FIG1_REG_WIDTHS, seed=seed))
    train_base(reg_net, reg_data,
               TrainConfig(steps=int(cfg.get("steps_reg", 20000)),
                           loss="mse", seed=seed))
    save_checkpoint(reg_net, man.path("fig1_reg.ckpt.json"))
    Xv, yv = reg_data.val
    x_grid = np.linspace(-1.0, 1.0, 201).reshape(-1, 1)
    rows = []
    fit_curves = []
    reg_frames = {}
    for beta in betas:
        steered = replace_relu_shared(reg_net, beta=float(beta), c=c)
        metric = evaluate(steered, Xv, yv, "mse")
        pred = steered.predict(x_grid).reshape(-1)
        fit_rows = [(x, p) for x, p in zip(x_grid.reshape(-1), pred)]
        reports.write_csv(man.path(f"fig1_reg_beta_{beta:.1f}_fit.csv"),
                          ["x[input_units]", "prediction[output_units]"], fit_rows)
        rows.append((beta, metric, float("nan")))
        fit_curves.append((float(beta), pred))
        reg_frames[f"{beta:.1f}"] = {"metric": metric}
    reports.write_csv(man.path("fig1_reg_sweep.csv"), SWEEP_HEADER, rows)
    reports.plot_fit_png(man.path("fig1_reg_fit.png"), x_grid.reshape(-1),
                         fit_curves, targets=np.sin(2.0 * np.pi * x_grid.reshape(-1)),
                         title="regression beta sweep")
    summary["regression"] = reg_frames

    reports.write_json(man.path("fig1_summary.json"), summary)
    return summary
