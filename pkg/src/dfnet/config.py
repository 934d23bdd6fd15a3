"""Run configuration and its on-disk form.

The file format is flat UTF-8 ``key = value`` lines. ``#`` starts a
comment line, blank lines are ignored, nested fields use dotted paths
(``model.growth_rate = 8``), and list values are comma-separated. A
rendered config parses back to an equal RunConfig, so a run is
reproducible from its config file alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .model import LOSS_KINDS, ModelConfig
from .rfb import RFBSpec
from .synthdata import SceneSpec

WEIGHT_MODES = ("dynamic", "uniform", "global")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    iterations: int = 2000
    batch_size: int = 4
    loss: str = "weighted_ce"
    weight_mode: str = "dynamic"
    beta: float = 0.1
    alpha: float = 5.0
    lr: float = 0.05
    momentum: float = 0.9
    model: ModelConfig = field(default_factory=ModelConfig)
    data: SceneSpec = field(default_factory=SceneSpec)
    num_scenes: int = 64
    data_dir: str = ""
    splits: tuple = (0.6, 0.3, 0.1)
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigError(f"weight_mode must be one of {WEIGHT_MODES}, got {self.weight_mode!r}")
        if not 0 < self.beta < self.alpha:
            raise ConfigError(f"need 0 < beta < alpha, got beta={self.beta}, alpha={self.alpha}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.num_scenes < 1:
            raise ConfigError(f"num_scenes must be >= 1, got {self.num_scenes}")
        if len(self.splits) != 3 or any(f < 0 for f in self.splits):
            raise ConfigError(f"splits needs three non-negative fractions, got {self.splits}")
        if abs(sum(self.splits) - 1.0) > 1e-9:
            raise ConfigError(f"splits must sum to 1, got {self.splits}")
        if self.model.input_size != self.data.size:
            raise ConfigError(
                f"model.input_size {self.model.input_size} must equal data.size {self.data.size}"
            )
        if not self.out_dir:
            raise ConfigError("out_dir must not be empty")


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def render_config(cfg):
    m, d = cfg.model, cfg.data
    rfb = m.rfb.structure if m.rfb is not None else "none"
    rfb_act = m.rfb.path_activation if m.rfb is not None else "clamp"
    lines = [
        f"seed = {cfg.seed}",
        f"iterations = {cfg.iterations}",
        f"batch_size = {cfg.batch_size}",
        f"loss = {cfg.loss}",
        f"weights.mode = {cfg.weight_mode}",
        f"weights.beta = {_fmt(cfg.beta)}",
        f"weights.alpha = {_fmt(cfg.alpha)}",
        f"optimizer.lr = {_fmt(cfg.lr)}",
        f"optimizer.momentum = {_fmt(cfg.momentum)}",
        f"model.class_count = {m.class_count}",
        f"model.growth_rate = {m.growth_rate}",
        f"model.layers_per_block = {_fmt(m.layers_per_block)}",
        f"model.pyramid_bins = {_fmt(m.pyramid_bins)}",
        f"model.rfb = {rfb}",
        f"model.rfb_activation = {rfb_act}",
        f"model.aux_tap = {m.aux_tap}",
        f"model.aux_weight = {_fmt(m.aux_weight)}",
        f"data.size = {_fmt(d.size)}",
        f"data.line_width = {d.line_width}",
        f"data.dash_period = {d.dash_period}",
        f"data.dash_duty = {_fmt(d.dash_duty)}",
        f"data.lines_per_class = {_fmt(d.lines_per_class)}",
        f"data.noise_std = {_fmt(d.noise_std)}",
        f"data.seed = {d.seed}",
        f"data.absent_classes = {_fmt(d.absent_classes)}",
        f"data.num_scenes = {cfg.num_scenes}",
        f"data.dir = {cfg.data_dir}",
        f"splits = {_fmt(cfg.splits)}",
        f"out_dir = {cfg.out_dir}",
    ]
    return "\n".join(lines) + "\n"


def write_config(path, cfg):
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_config(cfg))


def _int(s):
    return int(s, 10)


def _float(s):
    return float(s)


def _int_tuple(s):
    return tuple(_int(p.strip()) for p in s.split(",") if p.strip())


def _float_tuple(s):
    return tuple(_float(p.strip()) for p in s.split(",") if p.strip())


_PARSERS = {
    "seed": _int,
    "iterations": _int,
    "batch_size": _int,
    "loss": str,
    "weights.mode": str,
    "weights.beta": _float,
    "weights.alpha": _float,
    "optimizer.lr": _float,
    "optimizer.momentum": _float,
    "model.class_count": _int,
    "model.growth_rate": _int,
    "model.layers_per_block": _int_tuple,
    "model.pyramid_bins": _int_tuple,
    "model.rfb": str,
    "model.rfb_activation": str,
    "model.aux_tap": str,
    "model.aux_weight": _float,
    "data.size": _int_tuple,
    "data.line_width": _int,
    "data.dash_period": _int,
    "data.dash_duty": _float,
    "data.lines_per_class": _int_tuple,
    "data.noise_std": _float,
    "data.seed": _int,
    "data.absent_classes": _int_tuple,
    "data.num_scenes": _int,
    "data.dir": str,
    "splits": _float_tuple,
    "out_dir": str,
}


def parse_config(text):
    """Config text -> RunConfig; unknown or duplicate keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}") from None

    defaults = RunConfig()

    def get(key, fallback):
        return values.get(key, fallback)

    data = SceneSpec(
        size=get("data.size", defaults.data.size),
        line_width=get("data.line_width", defaults.data.line_width),
        dash_period=get("data.dash_period", defaults.data.dash_period),
        dash_duty=get("data.dash_duty", defaults.data.dash_duty),
        lines_per_class=get("data.lines_per_class", defaults.data.lines_per_class),
        noise_std=get("data.noise_std", defaults.data.noise_std),
        seed=get("data.seed", defaults.data.seed),
        absent_classes=get("data.absent_classes", defaults.data.absent_classes),
    )
    rfb_token = get("model.rfb", "none")
    rfb = None if rfb_token == "none" else RFBSpec(rfb_token, get("model.rfb_activation", "clamp"))
    model = ModelConfig(
        class_count=get("model.class_count", defaults.model.class_count),
        growth_rate=get("model.growth_rate", defaults.model.growth_rate),
        layers_per_block=get("model.layers_per_block", defaults.model.layers_per_block),
        pyramid_bins=get("model.pyramid_bins", defaults.model.pyramid_bins),
        rfb=rfb,
        aux_tap=get("model.aux_tap", defaults.model.aux_tap),
        aux_weight=get("model.aux_weight", defaults.model.aux_weight),
        input_size=data.size,
    )
    return RunConfig(
        seed=get("seed", defaults.seed),
        iterations=get("iterations", defaults.iterations),
        batch_size=get("batch_size", defaults.batch_size),
        loss=get("loss", defaults.loss),
        weight_mode=get("weights.mode", defaults.weight_mode),
        beta=get("weights.beta", defaults.beta),
        alpha=get("weights.alpha", defaults.alpha),
        lr=get("optimizer.lr", defaults.lr),
        momentum=get("optimizer.momentum", defaults.momentum),
        model=model,
        data=data,
        num_scenes=get("data.num_scenes", defaults.num_scenes),
        data_dir=get("data.dir", defaults.data_dir),
        splits=get("splits", defaults.splits),
        out_dir=get("out_dir", defaults.out_dir),
    )


def read_config(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text)


def with_size(cfg, size):
    """Resize data and model together so the pair stays consistent."""
    return replace(cfg, data=replace(cfg.data, size=size), model=replace(cfg.model, input_size=size))
