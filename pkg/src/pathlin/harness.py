"""Experiment orchestration: base training, sweeps, result persistence.

A result directory contains the exact config that produced it, one base
checkpoint per seed, one JSON record and checkpoint per (granularity,
omega, seed) unit, and the merged report (curves.csv, histograms.json,
summary.json).  Everything is deterministic in the config: records are
keyed and merged in sorted order, so worker parallelism cannot change any
output byte.
"""

import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint, linearize
from .config import read_config, write_config
from .data import generate_synthetic, load_idx
from .linearize import PostTrainConfig, SweepRecord
from .network import build
from .optim import SGDConfig

SUMMARY_BIN_COUNT = 10


def dataset_from_config(dcfg):
    if dcfg.kind == "idx":
        return load_idx(dcfg.images, dcfg.labels, seed=dcfg.seed)
    return generate_synthetic(dcfg.kind, dcfg.size, dcfg.classes, dcfg.noise, dcfg.seed)


def base_train(spec, data, train_cfg, seed):
    """Train the plain ReLU base network; returns (network, metadata)."""
    net = build(spec, seed)
    sgd_cfg = SGDConfig(
        lr=train_cfg.lr,
        momentum=train_cfg.momentum,
        weight_decay=train_cfg.weight_decay,
        milestones=train_cfg.milestones,
        gamma=train_cfg.gamma,
    )
    if train_cfg.epochs > 0:
        linearize._fit(
            net, data, sgd_cfg, train_cfg.epochs, train_cfg.batch_size, seed
        )
    meta = {
        "phase": "base",
        "seed": seed,
        "epochs": train_cfg.epochs,
        "train_accuracy": linearize.accuracy(net, data.train_features, data.train_labels),
        "test_accuracy": linearize.accuracy(net, data.test_features, data.test_labels),
    }
    return net, meta


def _unit_name(granularity, omega_index, seed):
    return f"{granularity}_w{omega_index:02d}_s{seed}"


def _run_one_unit(args):
    base_path, data, omega, omega_index, ptcfg, granularity, ckpt_dir = args
    base, _ = checkpoint.load(base_path)
    record, net = linearize.run_unit(base, data, omega, ptcfg, granularity)
    if net is not None and ckpt_dir is not None:
        name = _unit_name(granularity, omega_index, ptcfg.seed) + ".ckpt"
        path = Path(ckpt_dir) / name
        checkpoint.save(
            net,
            path,
            metadata={
                "phase": "post-train",
                "omega": omega,
                "granularity": granularity,
                "seed": ptcfg.seed,
                "epochs": ptcfg.epochs,
            },
        )
        record = SweepRecord(**{**record.to_json(), "checkpoint": f"checkpoints/{name}"})
    return record


def run_experiment(cfg, jobs=1, log=None):
    """Run the full experiment described by an ExperimentConfig.

    Base-trains once per seed, then post-trains every (granularity, omega,
    seed) unit independently, writes one record per unit under runs/, and
    merges the report.  Returns the result directory path.
    """
    out = Path(cfg.output_dir)
    (out / "base").mkdir(parents=True, exist_ok=True)
    (out / "runs").mkdir(exist_ok=True)
    (out / "checkpoints").mkdir(exist_ok=True)
    write_config(cfg, out / "config.txt")
    data = dataset_from_config(cfg.dataset)
    spec = cfg.network.to_spec()

    base_paths = {}
    for seed in cfg.seeds:
        net, meta = base_train(spec, data, cfg.train, seed)
        path = out / "base" / f"seed{seed}.ckpt"
        checkpoint.save(net, path, metadata=meta)
        base_paths[seed] = path
        if log:
            print(
                f"base seed={seed}: train={meta['train_accuracy']:.4f} "
                f"test={meta['test_accuracy']:.4f}",
                file=log,
            )

    p = cfg.posttrain
    tasks = []
    for granularity in cfg.granularities:
        for omega_index, omega in enumerate(cfg.omega_grid):
            for seed in cfg.seeds:
                ptcfg = PostTrainConfig(
                    omega=omega,
                    epochs=p.epochs,
                    lr=p.lr,
                    momentum=p.momentum,
                    weight_decay=p.weight_decay,
                    milestones=p.milestones,
                    gamma=p.gamma,
                    freeze_threshold=p.freeze_threshold,
                    batch_size=p.batch_size,
                    seed=seed,
                )
                tasks.append(
                    (
                        base_paths[seed],
                        data,
                        omega,
                        omega_index,
                        ptcfg,
                        granularity,
                        out / "checkpoints",
                    )
                )

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one_unit, tasks))
    else:
        records = [_run_one_unit(t) for t in tasks]

    for task, record in zip(tasks, records):
        name = _unit_name(record.granularity, task[3], record.seed)
        with open(out / "runs" / f"{name}.json", "w", encoding="utf-8") as fh:
            json.dump(record.to_json(), fh, indent=1, sort_keys=True)
        if log:
            status = (
                f"napl={record.napl:.3f} test={record.test_accuracy:.4f}"
                if record.error is None
                else f"FAILED {record.error}"
            )
            print(f"{name}: omega={record.omega:g} {status}", file=log)

    report(out)
    return out


def _load_records(result_dir):
    records = []
    for path in sorted(Path(result_dir, "runs").glob("*.json")):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                records.append(SweepRecord.from_json(json.load(fh)))
        except (json.JSONDecodeError, TypeError, KeyError, UnicodeDecodeError) as exc:
            print(f"warning: skipping corrupt record {path}: {exc}", file=sys.stderr)
    return sorted(records, key=lambda r: (r.granularity, r.omega, r.seed))


def _pooled_std(a, b):
    na, nb = len(a), len(b)
    if na + nb <= 2:
        return None
    var = (
        (na - 1) * np.var(a, ddof=1) if na > 1 else 0.0
    ) + ((nb - 1) * np.var(b, ddof=1) if nb > 1 else 0.0)
    return float(np.sqrt(var / (na + nb - 2)))


def summarize(records, napl_max, bin_count=SUMMARY_BIN_COUNT):
    """Per-NAPL-bin channel-vs-layer test-accuracy gaps.

    Bins partition [0, napl_max] into equal widths; the gap in a bin is the
    channel mean minus the layer mean, reported with the pooled standard
    deviation of the two groups (None where either side is empty).
    """
    ok = [r for r in records if r.error is None]
    edges = np.linspace(0.0, napl_max, bin_count + 1)
    bins = []
    for k in range(bin_count):
        lo, hi = float(edges[k]), float(edges[k + 1])
        top = hi if k < bin_count - 1 else hi + 1e-9
        groups = {}
        for gran in ("channel", "layer"):
            accs = [
                r.test_accuracy
                for r in ok
                if r.granularity == gran and lo <= r.napl < top
            ]
            groups[gran] = {
                "mean": float(np.mean(accs)) if accs else None,
                "std": float(np.std(accs, ddof=1)) if len(accs) > 1 else None,
                "n": len(accs),
            }
        both = groups["channel"]["n"] > 0 and groups["layer"]["n"] > 0
        c_accs = [r.test_accuracy for r in ok
                  if r.granularity == "channel" and lo <= r.napl < top]
        l_accs = [r.test_accuracy for r in ok
                  if r.granularity == "layer" and lo <= r.napl < top]
        bins.append(
            {
                "lo": lo,
                "hi": hi,
                "channel": groups["channel"],
                "layer": groups["layer"],
                "gap": groups["channel"]["mean"] - groups["layer"]["mean"]
                if both
                else None,
                "pooled_std": _pooled_std(c_accs, l_accs) if both else None,
            }
        )
    return {"napl_max": float(napl_max), "bin_count": bin_count, "bins": bins}


def report(result_dir):
    """Merge run records into curves.csv, histograms.json and summary.json.

    Deterministic and idempotent: records are sorted by (granularity,
    omega, seed) regardless of arrival order; corrupt record files are
    skipped with a warning.
    """
    result_dir = Path(result_dir)
    records = _load_records(result_dir)
    ok = [r for r in records if r.error is None]

    columns = (
        "granularity", "omega", "seed", "napl", "avg_slope",
        "prop_disabled", "train_acc", "test_acc",
    )
    lines = [",".join(columns)]
    for r in ok:
        lines.append(
            ",".join(
                [
                    r.granularity,
                    repr(r.omega),
                    str(r.seed),
                    repr(r.napl),
                    repr(r.average_slope),
                    repr(r.proportion_disabled),
                    repr(r.train_accuracy),
                    repr(r.test_accuracy),
                ]
            )
        )
    (result_dir / "curves.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    histograms = {
        "runs": [
            {
                "granularity": r.granularity,
                "omega": r.omega,
                "seed": r.seed,
                "napl": r.napl,
                "histogram": r.histogram,
            }
            for r in ok
        ]
    }
    with open(result_dir / "histograms.json", "w", encoding="utf-8") as fh:
        json.dump(histograms, fh, indent=1, sort_keys=True)

    napl_max = max((r.napl for r in ok), default=0.0)
    cfg_path = result_dir / "config.txt"
    if cfg_path.exists():
        cfg = read_config(cfg_path)
        spec = cfg.network.to_spec()
        napl_max = float(
            sum(1 for l in spec.layers if l.activation != "identity")
        )
    summary = summarize(records, napl_max)
    failed = [
        {"granularity": r.granularity, "omega": r.omega, "seed": r.seed,
         "error": r.error}
        for r in records
        if r.error is not None
    ]
    summary["failed_runs"] = failed
    with open(result_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return result_dir
