"""Flat key=value configuration with strict key checking.

The format is one `key = value` per line, `#` comments, blank lines
ignored. Every key has a documented default; unknown keys are an error
with the offending line number, so a typo can never silently fall back
to a default. The canonical resolved listing (defaults plus overrides)
is what gets hashed into checkpoints and echoed into run logs.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


STAGES = ("bidi_sp", "bidi_mp", "causal_mp", "self_forcing")

# (default, type) per key; order here is the canonical echo order
SCHEMA: "OrderedDict[str, tuple]" = OrderedDict(
    [
        ("data.dir", ("data", str)),
        ("data.holdout", (0.1, float)),
        ("model.dim", (128, int)),
        ("model.layers", (4, int)),
        ("model.heads", (4, int)),
        ("model.mlp_ratio", (2, int)),
        ("model.window", (6, int)),
        ("model.t_train", (8, int)),
        ("train.skip_pretrain", (False, bool)),
        ("bidi_sp.lr", (1e-4, float)),
        ("bidi_sp.batch", (8, int)),
        ("bidi_sp.steps", (2000, int)),
        ("bidi_sp.beta1", (0.9, float)),
        ("bidi_sp.beta2", (0.95, float)),
        ("bidi_sp.weight_decay", (0.0, float)),
        ("bidi_sp.seed", (0, int)),
        ("bidi_sp.data", ("", str)),
        ("bidi_mp.lr", (1e-4, float)),
        ("bidi_mp.batch", (4, int)),
        ("bidi_mp.steps", (2000, int)),
        ("bidi_mp.beta1", (0.9, float)),
        ("bidi_mp.beta2", (0.95, float)),
        ("bidi_mp.weight_decay", (0.0, float)),
        ("bidi_mp.seed", (0, int)),
        ("bidi_mp.data", ("", str)),
        ("bidi_mp.branch_step", (0, int)),
        ("causal_mp.lr", (1e-4, float)),
        ("causal_mp.batch", (4, int)),
        ("causal_mp.steps", (1000, int)),
        ("causal_mp.beta1", (0.9, float)),
        ("causal_mp.beta2", (0.95, float)),
        ("causal_mp.weight_decay", (0.0, float)),
        ("causal_mp.seed", (0, int)),
        ("causal_mp.data", ("", str)),
        ("self_forcing.lr", (3e-6, float)),
        ("self_forcing.batch", (2, int)),
        ("self_forcing.steps", (240, int)),
        ("self_forcing.beta1", (0.9, float)),
        ("self_forcing.beta2", (0.95, float)),
        ("self_forcing.weight_decay", (0.0, float)),
        ("self_forcing.seed", (0, int)),
        ("self_forcing.data", ("", str)),
        ("self_forcing.critic_lr", (3e-7, float)),
        ("self_forcing.critic_updates", (5, int)),
        ("self_forcing.loss", ("teacher_regression", str)),
        ("self_forcing.rollout_frames", (8, int)),
        ("self_forcing.kv_backprop", (False, bool)),
        ("self_forcing.ode_reg", (False, bool)),
        ("self_forcing.pre_dmd", (False, bool)),
    ]
)

# recognized for compatibility, deliberately unsupported when enabled
_UNSUPPORTED = ("self_forcing.ode_reg", "self_forcing.pre_dmd")


@dataclass
class StageConfig:
    stage: str
    lr: float
    batch: int
    steps: int
    beta1: float
    beta2: float
    weight_decay: float
    seed: int
    data: str
    branch_step: int | None = None
    critic_lr: float | None = None
    critic_updates: int | None = None
    loss: str | None = None
    rollout_frames: int | None = None
    kv_backprop: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"{self.stage}.steps must be >= 1")
        if self.lr <= 0:
            raise ConfigError(f"{self.stage}.lr must be > 0")


@dataclass
class PipelineConfig:
    values: "OrderedDict[str, object]"
    stages: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def lines(self) -> list:
        """Canonical `key = value` echo, one line per schema entry."""
        return [f"{k} = {_fmt(v)}" for k, v in self.values.items()]

    @property
    def config_hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.lines()).encode()).hexdigest()
        return digest[:16]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse_value(key: str, raw: str, lineno: int):
    _, typ = SCHEMA[key]
    raw = raw.strip()
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"line {lineno}: {key} expects a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(
            f"line {lineno}: {key} expects {typ.__name__}, got {raw!r}"
        ) from None


def _stage_config(values, name: str) -> StageConfig:
    def get(field_name):
        return values[f"{name}.{field_name}"]

    kwargs = dict(
        stage=name,
        lr=get("lr"),
        batch=get("batch"),
        steps=get("steps"),
        beta1=get("beta1"),
        beta2=get("beta2"),
        weight_decay=get("weight_decay"),
        seed=get("seed"),
        data=get("data") or values["data.dir"],
    )
    if name == "bidi_mp":
        branch = values["bidi_mp.branch_step"]
        kwargs["branch_step"] = branch if branch > 0 else None
    if name == "self_forcing":
        kwargs.update(
            critic_lr=values["self_forcing.critic_lr"],
            critic_updates=values["self_forcing.critic_updates"],
            loss=values["self_forcing.loss"],
            rollout_frames=values["self_forcing.rollout_frames"],
            kv_backprop=values["self_forcing.kv_backprop"],
        )
    return StageConfig(**kwargs)


def load_config(path: str | None = None) -> PipelineConfig:
    """Parse a config file into the full resolved StageConfig set.

    path=None yields pure defaults. Raises ConfigError with the line
    number for unknown keys and malformed values.
    """
    values = OrderedDict((k, default) for k, (default, _) in SCHEMA.items())
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.strip()
                if not text or text.startswith("#"):
                    continue
                if "=" not in text:
                    raise ConfigError(f"line {lineno}: expected `key = value`, got {text!r}")
                key, raw = text.split("=", 1)
                key = key.strip()
                if key not in SCHEMA:
                    raise ConfigError(f"line {lineno}: unknown config key {key!r}")
                values[key] = _parse_value(key, raw, lineno)

    for key in _UNSUPPORTED:
        if values[key]:
            raise NotImplementedError(f"{key}: not implemented")

    cfg = PipelineConfig(values=values)
    cfg.stages = {name: _stage_config(values, name) for name in STAGES}
    return cfg
