"""Experiment command line.

Every subcommand reads flags plus an optional key=value config file
(--config; '#' starts a comment; flags override file values with a warning),
writes its artifacts plus a manifest.json under --out, and exits nonzero with
a one-line machine-parseable reason on any error.  CTKIT_SEED overrides the
default seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import reports
from .circle import total_error_closed, total_error_quadrature
from .curvature import curvature_report
from .data import Dataset, gen_annulus, gen_regression_1d
from .network import (MlpSpec, attach_lora, build_mlp, load_checkpoint,
                      param_count, replace_relu_trainable, save_checkpoint)
from .pipelines import run_fig1_sweep, run_fig2_pipeline, _diag_points, _emit_curvature
from .training import (TrainConfig, train_base, train_linear_probe, train_lora,
                       sct_grid_search, train_tct)

DATA_HEADER_2D = ["x1[input_units]", "x2[input_units]", "target[label_or_value]",
                  "split[tag]"]
DATA_HEADER_1D = ["x1[input_units]", "target[label_or_value]", "split[tag]"]


class CliError(Exception):
    pass


def _default_seed() -> int:
    env = os.environ.get("CTKIT_SEED")
    return int(env) if env else 42


def _load_config_file(path: str) -> dict:
    cfg = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"config_parse_error:{path}:{lineno}")
                k, v = line.split("=", 1)
                cfg[k.strip()] = v.strip()
    except OSError:
        raise CliError(f"missing_input_file:{path}")
    return cfg


def _merge_config(args: argparse.Namespace, argv: list) -> dict:
    """File values fill in defaults; explicitly passed flags win (warning)."""
    cfg = {}
    if getattr(args, "config", None):
        cfg = _load_config_file(args.config)
    merged = {}
    for k, v in vars(args).items():
        if k in ("config", "func", "command"):
            continue
        merged[k.replace("_", "-")] = v
    passed = {a.split("=", 1)[0].replace("--", "").replace("-", "_")
              for a in argv if a.startswith("--")}
    for k, v in cfg.items():
        dest = k.replace("-", "_")
        if dest in passed:
            print(f"warning: flag --{k} overrides config file value", file=sys.stderr)
            continue
        merged[k] = v
    return merged


def _dataset_to_csv(data: Dataset, path):
    rows = []
    for x, t, s in zip(data.inputs, data.targets, data.split):
        rows.append(tuple(x) + (t, s))
    header = DATA_HEADER_2D if data.inputs.shape[1] == 2 else DATA_HEADER_1D
    reports.write_csv(path, header, rows)


def _dataset_from_csv(path) -> Dataset:
    try:
        lines = open(path).read().strip().split("\n")
    except OSError:
        raise CliError(f"missing_input_file:{path}")
    body = [ln.split(",") for ln in lines[1:]]
    d = len(body[0]) - 2
    inputs = np.array([[float(v) for v in row[:d]] for row in body])
    targets = np.array([float(row[d]) for row in body])
    split = np.array([row[d + 1] for row in body])
    return Dataset(inputs=inputs, targets=targets, split=split)


def _require_net(path):
    try:
        return load_checkpoint(path)
    except OSError:
        raise CliError(f"missing_input_file:{path}")


def _train_cfg(args, loss: str) -> TrainConfig:
    return TrainConfig(steps=int(args.steps), lr_main=float(args.lr),
                       lr_ct=float(getattr(args, "lr_ct", 0.1)),
                       lr_head=float(getattr(args, "lr_head", 1e-3)),
                       lr_lora=float(getattr(args, "lr_lora", 1e-4)),
                       loss=loss, seed=int(args.seed))


# -- subcommand bodies ------------------------------------------------------

def cmd_gen_data(args, man):
    if args.task == "annulus":
        data = gen_annulus(int(args.n), int(args.seed))
    elif args.task == "sine":
        data = gen_regression_1d(int(args.n), int(args.seed))
    else:
        raise CliError(f"unknown_task:{args.task}")
    _dataset_to_csv(data, man.path("data.csv"))


def cmd_train(args, man):
    widths = tuple(int(w) for w in args.widths.split(","))
    data = _dataset_from_csv(args.data)
    net = build_mlp(MlpSpec(widths=widths, seed=int(args.seed)))
    res = train_base(net, data, _train_cfg(args, args.loss))
    save_checkpoint(net, man.path("model.ckpt.json"))
    reports.write_csv(man.path("loss_curve.csv"), ["step[count]", "loss[nats_or_sq]"],
                      [((i + 1) * _train_cfg(args, args.loss).eval_every, v)
                       for i, v in enumerate(res.losses)])


def cmd_steer(args, man):
    net = _require_net(args.net)
    data = _dataset_from_csv(args.data)
    cfg = _train_cfg(args, args.loss) if args.mode == "reprobe" else None
    result = sct_grid_search(net, data.val, beta_lo=float(args.beta_lo),
                             beta_hi=float(args.beta_hi), step=float(args.step),
                             c=float(args.c), mode=args.mode, cfg=cfg)
    rows = [(b, m, float("nan")) for b, m in zip(result.betas, result.metrics)]
    reports.write_csv(man.path("sweep.csv"),
                      ["beta[dimensionless]", "metric[accuracy_or_neg_mse]",
                       "circle_error[length]"], rows)
    reports.write_json(man.path("steer_result.json"), {
        "best_beta": result.best_beta, "best_metric": result.best_metric,
        "baseline_metric": result.baseline_metric,
    })


def cmd_finetune_tct(args, man):
    net = replace_relu_trainable(_require_net(args.net))
    data = _dataset_from_csv(args.data)
    res = train_tct(net, data, _train_cfg(args, args.loss))
    save_checkpoint(net, man.path("model.ckpt.json"))
    reports.write_json(man.path("tct_summary.json"),
                       {"decoded": res.summary,
                        "trainable_params": param_count(net, "ct")})


def cmd_finetune_lora(args, man):
    net = attach_lora(_require_net(args.net), r=int(args.r),
                      alpha=float(args.alpha), seed=int(args.seed))
    data = _dataset_from_csv(args.data)
    train_lora(net, data, _train_cfg(args, args.loss))
    save_checkpoint(net, man.path("model.ckpt.json"))
    reports.write_json(man.path("lora_summary.json"),
                       {"trainable_params": param_count(net, "lora")})


def cmd_probe(args, man):
    net = _require_net(args.net)
    data = _dataset_from_csv(args.data)
    train_linear_probe(net, data, _train_cfg(args, args.loss))
    save_checkpoint(net, man.path("model.ckpt.json"))


def cmd_circle_error(args, man):
    net = _require_net(args.net)
    quad = total_error_quadrature(net.predict)
    out = {"total_quadrature": quad}
    if net.is_pure_relu():
        from .circle import pullback_breakpoints
        closed = total_error_closed(net)
        bps = pullback_breakpoints(net)
        out.update({
            "total_closed": closed,
            "knots": bps.knots.tolist(),
            "relative_gap": abs(closed - quad) / max(quad, 1e-12),
        })
    reports.write_json(man.path("circle_error.json"), out)


def cmd_diagnose(args, man):
    net = _require_net(args.net)
    pts = _diag_points(int(args.seed), n=int(args.n_points))
    relu_ref = _require_net(args.relu_reference) if args.relu_reference else None
    report = curvature_report(net, pts, relu_reference=relu_ref)
    _emit_curvature(man, "diagnose", report)


def cmd_fig1(args, man):
    cfg = {"seed": int(args.seed), "c": float(args.c),
           "steps_cls": int(args.steps_cls), "steps_reg": int(args.steps_reg),
           "n_cls": int(args.n_cls), "n_reg": int(args.n_reg),
           "boundary_resolution": int(args.boundary_resolution)}
    run_fig1_sweep(cfg, man)


def cmd_fig2(args, man):
    cfg = {"seed": int(args.seed), "n": int(args.n),
           "steps_pretrain": int(args.steps_pretrain),
           "steps_finetune": int(args.steps_finetune),
           "lora_r": int(args.lora_r), "lora_alpha": float(args.lora_alpha),
           "boundary_resolution": int(args.boundary_resolution)}
    run_fig2_pipeline(cfg, man)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curvetune",
                                description="curvature-steering toy experiment suite")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=False, net=False, training=False):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=_default_seed())
        sp.add_argument("--config", help="key=value config file")
        if data:
            sp.add_argument("--data", required=True, help="dataset CSV")
        if net:
            sp.add_argument("--net", required=True, help="checkpoint JSON")
        if training:
            sp.add_argument("--steps", type=int, default=4000)
            sp.add_argument("--lr", type=float, default=1e-3)
            sp.add_argument("--lr-ct", type=float, default=0.1, dest="lr_ct")
            sp.add_argument("--lr-head", type=float, default=1e-3, dest="lr_head")
            sp.add_argument("--lr-lora", type=float, default=1e-4, dest="lr_lora")
            sp.add_argument("--loss", choices=["bce_logits", "mse"],
                            default="bce_logits")

    sp = sub.add_parser("gen-data")
    common(sp)
    sp.add_argument("--task", choices=["annulus", "sine"], default="annulus")
    sp.add_argument("--n", type=int, default=512)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train")
    common(sp, data=True, training=True)
    sp.add_argument("--widths", default="2,7,1")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("steer")
    common(sp, data=True, net=True, training=True)
    sp.add_argument("--beta-lo", type=float, default=0.7, dest="beta_lo")
    sp.add_argument("--beta-hi", type=float, default=1.0, dest="beta_hi")
    sp.add_argument("--step", type=float, default=0.01)
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--mode", choices=["direct", "reprobe"], default="direct")
    sp.set_defaults(func=cmd_steer)

    sp = sub.add_parser("finetune-tct")
    common(sp, data=True, net=True, training=True)
    sp.set_defaults(func=cmd_finetune_tct)

    sp = sub.add_parser("finetune-lora")
    common(sp, data=True, net=True, training=True)
    sp.add_argument("--r", type=int, default=1)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.set_defaults(func=cmd_finetune_lora)

    sp = sub.add_parser("probe")
    common(sp, data=True, net=True, training=True)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("circle-error")
    common(sp, net=True)
    sp.set_defaults(func=cmd_circle_error)

    sp = sub.add_parser("diagnose")
    common(sp, net=True)
    sp.add_argument("--n-points", type=int, default=24, dest="n_points")
    sp.add_argument("--relu-reference", dest="relu_reference",
                    help="pure-ReLU checkpoint used for stencil exclusion")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("fig1")
    common(sp)
    sp.add_argument("--c", type=float, default=1.0)
    sp.add_argument("--steps-cls", type=int, default=2000, dest="steps_cls")
    sp.add_argument("--steps-reg", type=int, default=20000, dest="steps_reg")
    sp.add_argument("--n-cls", type=int, default=512, dest="n_cls")
    sp.add_argument("--n-reg", type=int, default=256, dest="n_reg")
    sp.add_argument("--boundary-resolution", type=int, default=200,
                    dest="boundary_resolution")
    sp.set_defaults(func=cmd_fig1)

    sp = sub.add_parser("fig2")
    common(sp)
    sp.add_argument("--n", type=int, default=512)
    sp.add_argument("--steps-pretrain", type=int, default=4000, dest="steps_pretrain")
    sp.add_argument("--steps-finetune", type=int, default=4000, dest="steps_finetune")
    sp.add_argument("--lora-r", type=int, default=1, dest="lora_r")
    sp.add_argument("--lora-alpha", type=float, default=1.0, dest="lora_alpha")
    sp.add_argument("--boundary-resolution", type=int, default=200,
                    dest="boundary_resolution")
    sp.set_defaults(func=cmd_fig2)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        merged = _merge_config(args, argv)
        # config-file values backfill argparse defaults for simple flags
        for k, v in merged.items():
            dest = str(k).replace("-", "_")
            if hasattr(args, dest) and not isinstance(v, (dict, list)):
                cur = getattr(args, dest)
                if cur is None or isinstance(cur, (int, float, str, bool)):
                    if isinstance(cur, bool):
                        v = str(v).lower() in ("1", "true", "yes")
                    elif isinstance(cur, int):
                        v = int(v)
                    elif isinstance(cur, float):
                        v = float(v)
                    setattr(args, dest, v)
        man = reports.RunManifestWriter(args.out, args.command,
                                        {k: v for k, v in merged.items()
                                         if k != "out"}, int(args.seed))
        args.func(args, man)
        man.finalize()
        return 0
    except CliError as e:
        print(f"error:{e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - single-line machine-parseable reason
        print(f"error:{type(e).__name__}:{e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
