"""Command-line interface.

Subcommands: gen-data, train, sweep, analyze, reparam-verify, report.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="pathlin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (.npz)")
    p.add_argument("--kind", required=True,
                   choices=("gaussian-mixture", "spirals", "hierarchical-xor"))
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .npz path")

    p = sub.add_parser("train", help="base-train the ReLU network per config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="train only this seed (default: every config seed)")
    p.add_argument("--out", default=None, help="override config output_dir")

    p = sub.add_parser("sweep", help="run the full experiment (base + sweeps)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override config output_dir")
    p.add_argument("--omega", default=None,
                   help="comma-separated omega list overriding the config grid")
    p.add_argument("--granularity", choices=("channel", "layer"), default=None,
                   help="run a single granularity instead of the config list")
    p.add_argument("--seed", type=int, default=None,
                   help="run a single seed instead of the config list")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("analyze", help="path metrics of a checkpoint, as JSON")
    p.add_argument("checkpoint")

    p = sub.add_parser("reparam-verify",
                       help="build and numerically verify block reparametrizations")
    p.add_argument("--construction", choices=("local-linear", "relu"),
                   default="local-linear")
    p.add_argument("--activation", default="tanh",
                   choices=("tanh", "sigmoid", "softplus"),
                   help="activation for the local-linear construction")
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="rebuild curves.csv/histograms/summary")
    p.add_argument("result_dir")
    return parser


def _cmd_gen_data(args):
    from .data import generate_synthetic, save_dataset

    ds = generate_synthetic(args.kind, args.size, args.classes, args.noise, args.seed)
    save_dataset(ds, args.out)
    print(
        f"wrote {args.out}: {ds.features.shape[0]} samples, "
        f"{ds.features.shape[1]} features, {ds.n_classes} classes "
        f"({ds.train_idx.size} train / {ds.test_idx.size} test)"
    )
    return 0


def _load_config(args):
    from .config import read_config

    cfg = read_config(args.config)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, output_dir=args.out)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def _cmd_train(args):
    from . import checkpoint
    from .harness import base_train, dataset_from_config

    cfg = _load_config(args)
    data = dataset_from_config(cfg.dataset)
    spec = cfg.network.to_spec()
    out = Path(cfg.output_dir) / "base"
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        net, meta = base_train(spec, data, cfg.train, seed)
        path = out / f"seed{seed}.ckpt"
        checkpoint.save(net, path, metadata=meta)
        print(
            f"{path}: train={meta['train_accuracy']:.4f} "
            f"test={meta['test_accuracy']:.4f}"
        )
    return 0


def _cmd_sweep(args):
    from .harness import run_experiment

    cfg = _load_config(args)
    if args.omega:
        grid = tuple(float(w) for w in args.omega.split(","))
        cfg = dataclasses.replace(cfg, omega_grid=grid)
    if args.granularity:
        cfg = dataclasses.replace(cfg, granularities=(args.granularity,))
    out = run_experiment(cfg, jobs=args.jobs, log=sys.stderr)
    print(out)
    return 0


def _cmd_analyze(args):
    from . import checkpoint, pathmetrics

    net, meta = checkpoint.load(args.checkpoint)
    profile = pathmetrics.profile_of(net)
    dist = pathmetrics.path_length_distribution(profile)
    out = {
        "checkpoint": args.checkpoint,
        "metadata": meta,
        "napl": pathmetrics.napl(profile),
        "histogram": dist.to_json(),
    }
    if net.has_prelu():
        out["average_slope"] = pathmetrics.average_slope(net)
        out["proportion_disabled"] = pathmetrics.proportion_disabled(net)
    print(json.dumps(out, indent=1, sort_keys=True))
    return 0


def _cmd_reparam_verify(args):
    from .reparam import (
        ACTIVATIONS,
        RELU,
        ResidualBlockParams,
        noninjectivity_witness,
        reparam_local_linear,
        reparam_relu,
        verify_reparam,
    )

    rng = np.random.default_rng(args.seed)
    n = args.dim
    block = ResidualBlockParams(rng.normal(size=(n, n)), rng.normal(size=n))
    samples = rng.normal(size=(args.samples, n))
    samples /= np.maximum(1.0, np.linalg.norm(samples, axis=1, keepdims=True))
    samples *= args.radius

    if args.construction == "relu":
        act = RELU
        lower_bound = float(samples.min())
        ff = reparam_relu(block, lower_bound)
        extra = {"lower_bound": lower_bound}
    else:
        act = ACTIVATIONS[args.activation]
        ff = reparam_local_linear(block, act, args.epsilon)
        extra = {"epsilon": args.epsilon, "activation": act.name}

    result = verify_reparam(block, ff, act, samples)
    witness = noninjectivity_witness(block.weight, block.bias)
    print(
        json.dumps(
            {
                "construction": args.construction,
                **extra,
                "dim": n,
                "sample_count": args.samples,
                "radius": args.radius,
                "seed": args.seed,
                "max_deviation": result.max_deviation,
                "argmax_sample": result.to_json()["argmax_sample"],
                "witness": witness.to_json(),
            },
            indent=1,
            sort_keys=True,
        )
    )
    return 0


def _cmd_report(args):
    from .harness import report

    report(args.result_dir)
    print(args.result_dir)
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "sweep": _cmd_sweep,
    "analyze": _cmd_analyze,
    "reparam-verify": _cmd_reparam_verify,
    "report": _cmd_report,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"pathlin {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
