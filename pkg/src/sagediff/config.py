"""Experiment configuration: one flat key = value file (TOML-compatible
scalars), command-line overrides, a stable hash stamped into every artifact,
and the stream layout that keeps the pipeline deterministic end to end."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

# Stream domains: each pipeline stage owns a disjoint block of stream ids
# under the one master seed. Sampling uses one stream per group above its
# base, so domains are spaced far apart.
STREAM_WORLD = 1 << 32
STREAM_RECORDS = 2 << 32
STREAM_TRAIN = 3 << 32
STREAM_SAMPLE = 4 << 32
STREAM_PROMPTS = 5 << 32

# Fields that name filesystem locations; excluded from the config hash so
# moving an experiment directory does not change artifact lineage.
PATH_FIELDS = ("out_dir",)


@dataclass
class ExperimentConfig:
    """Every knob of the pipeline, flat so it round-trips a key = value file."""

    seed: int = 20240601
    out_dir: str = "runs/default"
    # world
    n_meta: int = 200
    children_per_meta: int = 3
    embed_dim: int = 16
    data_dim: int = 2
    spread: float = 0.15
    meta_scale: float = 3.0
    coupling: float = 1.0
    records_per_concept: int = 8
    tau_min: float = 0.6
    tau_max: float = 0.9
    target_groups: int = 5000
    # schedule
    t_train: int = 1000
    schedule_kind: str = "linear"
    # model
    hidden_width: int = 64
    hidden_layers: int = 2
    activation: str = "silu"
    # training
    loss: str = "sage"
    lambda1: float = 1.0
    lambda2: float = 1.0
    beta: float = 0.3
    cfg_dropout: float = 0.1
    soft_target_flow: bool = False
    lr: float = 1e-3
    weight_decay: float = 0.0
    train_steps: int = 20000
    batch_groups: int = 4
    checkpoint_every: int = 5000
    # sampling / evaluation
    n_steps: int = 30
    omega: float = 1.25
    threshold: float = 0.6
    sample_metas: int = 100

    def hidden_widths(self) -> tuple[int, ...]:
        return (self.hidden_width,) * self.hidden_layers

    def to_text(self) -> str:
        """Canonical serialization: declaration order, repr floats."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, str):
                rendered = f'"{value}"'
            else:
                rendered = repr(value)
            lines.append(f"{f.name} = {rendered}")
        return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """12-hex digest over all non-path fields; stamped into artifacts."""
    lines = [line for line in config.to_text().splitlines()
             if line.split(" = ")[0] not in PATH_FIELDS]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def _parse_scalar(field_type: type, raw: str, key: str):
    raw = raw.strip()
    if field_type is bool:
        if raw in ("true", "True"):
            return True
        if raw in ("false", "False"):
            return False
        raise ValueError(f"{key}: expected true/false, got {raw!r}")
    if field_type is int:
        return int(raw)
    if field_type is float:
        return float(raw)
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    return raw


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse `key = value` lines (comments with #, blank lines allowed) on
    top of defaults or a given base config."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    type_of = {name: type(getattr(ExperimentConfig(), name)) for name in known}
    config = ExperimentConfig(**vars(base)) if base else ExperimentConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        setattr(config, key, _parse_scalar(type_of[key], raw, key))
    return config


def load_config(path, overrides: list[str] | None = None,
                env_seed: str | None = None) -> ExperimentConfig:
    """Config file plus `key=value` override strings; overrides win, and the
    SAGE_SEED environment value (when set) wins over both."""
    if path is None:
        config = ExperimentConfig()
    else:
        with open(path) as fh:
            config = parse_config_text(fh.read())
    if overrides:
        config = parse_config_text("\n".join(o.replace("=", " = ", 1) for o in overrides),
                                   base=config)
    if env_seed:
        config.seed = int(env_seed)
    return config
