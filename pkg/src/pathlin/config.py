"""Experiment configuration and its key-value text format.

The on-disk format is one ``key = value`` assignment per line with ``#``
comments; list values are comma-separated and an empty value is the empty
list.  Parsing is strict: every known key must be present and unknown keys
are rejected, so a written config file is fully explicit.
"""

from dataclasses import dataclass

from .network import LayerSpec, NetworkSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    size: int
    classes: int
    noise: float
    seed: int
    images: str = ""
    labels: str = ""


@dataclass(frozen=True)
class NetworkConfig:
    input_width: int
    hidden_widths: tuple
    output_width: int
    activation: str
    residual_spans: tuple

    def to_spec(self):
        widths = [self.input_width, *self.hidden_widths]
        layers = [
            LayerSpec(widths[i], widths[i + 1], self.activation)
            for i in range(len(widths) - 1)
        ]
        layers.append(LayerSpec(widths[-1], self.output_width, "identity"))
        return NetworkSpec(layers=tuple(layers), spans=self.residual_spans)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    lr: float
    momentum: float
    weight_decay: float
    milestones: tuple
    gamma: float
    batch_size: int


@dataclass(frozen=True)
class PostTrainSettings:
    epochs: int
    lr: float
    momentum: float
    weight_decay: float
    milestones: tuple
    gamma: float
    freeze_threshold: float
    batch_size: int


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    network: NetworkConfig
    train: TrainSettings
    posttrain: PostTrainSettings
    omega_grid: tuple
    granularities: tuple
    seeds: tuple
    output_dir: str


def _fmt(value):
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_config(cfg):
    d, n, t, p = cfg.dataset, cfg.network, cfg.train, cfg.posttrain
    spans = ",".join(f"{s}-{e}" for s, e in n.residual_spans)
    lines = [
        "# pathlin experiment configuration",
        f"output_dir = {cfg.output_dir}",
        f"seeds = {_fmt(cfg.seeds)}",
        f"granularities = {_fmt(cfg.granularities)}",
        f"omega_grid = {_fmt(cfg.omega_grid)}",
        "",
        f"dataset.kind = {d.kind}",
        f"dataset.size = {d.size}",
        f"dataset.classes = {d.classes}",
        f"dataset.noise = {_fmt(d.noise)}",
        f"dataset.seed = {d.seed}",
        f"dataset.images = {d.images}",
        f"dataset.labels = {d.labels}",
        "",
        f"network.input_width = {n.input_width}",
        f"network.hidden_widths = {_fmt(n.hidden_widths)}",
        f"network.output_width = {n.output_width}",
        f"network.activation = {n.activation}",
        f"network.residual_spans = {spans}",
        "",
        f"train.epochs = {t.epochs}",
        f"train.lr = {_fmt(t.lr)}",
        f"train.momentum = {_fmt(t.momentum)}",
        f"train.weight_decay = {_fmt(t.weight_decay)}",
        f"train.milestones = {_fmt(t.milestones)}",
        f"train.gamma = {_fmt(t.gamma)}",
        f"train.batch_size = {t.batch_size}",
        "",
        f"posttrain.epochs = {p.epochs}",
        f"posttrain.lr = {_fmt(p.lr)}",
        f"posttrain.momentum = {_fmt(p.momentum)}",
        f"posttrain.weight_decay = {_fmt(p.weight_decay)}",
        f"posttrain.milestones = {_fmt(p.milestones)}",
        f"posttrain.gamma = {_fmt(p.gamma)}",
        f"posttrain.freeze_threshold = {_fmt(p.freeze_threshold)}",
        f"posttrain.batch_size = {p.batch_size}",
    ]
    return "\n".join(lines) + "\n"


def _split(value):
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def _ints(value):
    return tuple(int(v) for v in _split(value))


def _floats(value):
    return tuple(float(v) for v in _split(value))


def _spans(value):
    out = []
    for item in _split(value):
        try:
            s, e = item.split("-")
            out.append((int(s), int(e)))
        except ValueError as exc:
            raise ConfigError(f"bad residual span {item!r}, expected start-end") from exc
    return tuple(out)


_KEYS = {
    "output_dir": str,
    "seeds": _ints,
    "granularities": lambda v: tuple(_split(v)),
    "omega_grid": _floats,
    "dataset.kind": str,
    "dataset.size": int,
    "dataset.classes": int,
    "dataset.noise": float,
    "dataset.seed": int,
    "dataset.images": str,
    "dataset.labels": str,
    "network.input_width": int,
    "network.hidden_widths": _ints,
    "network.output_width": int,
    "network.activation": str,
    "network.residual_spans": _spans,
    "train.epochs": int,
    "train.lr": float,
    "train.momentum": float,
    "train.weight_decay": float,
    "train.milestones": _ints,
    "train.gamma": float,
    "train.batch_size": int,
    "posttrain.epochs": int,
    "posttrain.lr": float,
    "posttrain.momentum": float,
    "posttrain.weight_decay": float,
    "posttrain.milestones": _ints,
    "posttrain.gamma": float,
    "posttrain.freeze_threshold": float,
    "posttrain.batch_size": int,
}


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _KEYS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    missing = sorted(set(_KEYS) - set(values))
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")

    for g in values["granularities"]:
        if g not in ("channel", "layer"):
            raise ConfigError(f"unknown granularity {g!r}")
    return ExperimentConfig(
        dataset=DatasetConfig(
            kind=values["dataset.kind"],
            size=values["dataset.size"],
            classes=values["dataset.classes"],
            noise=values["dataset.noise"],
            seed=values["dataset.seed"],
            images=values["dataset.images"],
            labels=values["dataset.labels"],
        ),
        network=NetworkConfig(
            input_width=values["network.input_width"],
            hidden_widths=values["network.hidden_widths"],
            output_width=values["network.output_width"],
            activation=values["network.activation"],
            residual_spans=values["network.residual_spans"],
        ),
        train=TrainSettings(
            epochs=values["train.epochs"],
            lr=values["train.lr"],
            momentum=values["train.momentum"],
            weight_decay=values["train.weight_decay"],
            milestones=values["train.milestones"],
            gamma=values["train.gamma"],
            batch_size=values["train.batch_size"],
        ),
        posttrain=PostTrainSettings(
            epochs=values["posttrain.epochs"],
            lr=values["posttrain.lr"],
            momentum=values["posttrain.momentum"],
            weight_decay=values["posttrain.weight_decay"],
            milestones=values["posttrain.milestones"],
            gamma=values["posttrain.gamma"],
            freeze_threshold=values["posttrain.freeze_threshold"],
            batch_size=values["posttrain.batch_size"],
        ),
        omega_grid=values["omega_grid"],
        granularities=values["granularities"],
        seeds=values["seeds"],
        output_dir=values["output_dir"],
    )


def read_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def write_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))


def reference_config(output_dir="out"):
    """The desk-scale reference experiment.

    hierarchical-xor with 8 features and 4 classes, 10k samples split
    80/20; a width-32, depth-8 base network (7 nonlinear layers); training
    and post-training recipes scaled down from the full-scale tables.  The
    omega grid was produced by ``linearize.choose_omega_grid`` on this task
    and frozen here so the experiment file is fully explicit.
    """
    return ExperimentConfig(
        dataset=DatasetConfig(
            kind="hierarchical-xor", size=10000, classes=4, noise=0.3, seed=7
        ),
        network=NetworkConfig(
            input_width=8,
            hidden_widths=(32,) * 7,
            output_width=4,
            activation="relu",
            residual_spans=(),
        ),
        train=TrainSettings(
            epochs=60,
            lr=0.1,
            momentum=0.9,
            weight_decay=1e-4,
            milestones=(30, 45),
            gamma=0.1,
            batch_size=256,
        ),
        posttrain=PostTrainSettings(
            epochs=30,
            lr=0.01,
            momentum=0.9,
            weight_decay=1e-4,
            milestones=(20, 25),
            gamma=0.1,
            freeze_threshold=0.01,
            batch_size=256,
        ),
        omega_grid=(0.0005, 0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064,
                    0.128, 0.256),
        granularities=("channel", "layer"),
        seeds=(0, 1, 2, 3, 4),
        output_dir=output_dir,
    )
