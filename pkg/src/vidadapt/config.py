"""Pipeline-wide configuration and the key=value config-file format.

Defaults are the published operating point of the method: thresholds
(0.75, 0.8), window/update period 30, memory capacities 10 and 5, fusion
bonus 0.02, and SGD at lr 0.001, momentum 0.9, weight decay 0.0005.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigurationError
from .model import TrainConfig
from .selection import SelectionThresholds


@dataclass
class PipelineConfig:
    t_o: float = 0.75
    t_b: float = 0.8
    tau_b: int = 30
    tau_l: int = 10
    tau_s: int = 5
    epsilon: float = 0.02
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    iterations: int | None = None
    pixel_subsample: int = 4096
    weak_labels: tuple[str, ...] = ()
    unsupervised: bool = False
    flow_source: str = "builtin"
    morph_radius: int = 0
    model_source: str = "reference"  # "reference" or "external"
    external_dir: str | None = None
    external_timeout: float = 120.0
    poll_interval: float = 0.05
    seed: int = 0
    flush_tail: bool = False
    shuffle: bool = False
    # Preprocessing metadata forwarded to external segmenters only; the
    # in-process reference model consumes frames at native resolution.
    resize_long_side: int = 500
    pad_to: tuple[int, int] = (900, 900)

    def validate(self) -> None:
        SelectionThresholds(self.t_o, self.t_b)  # range checks
        for name in ("tau_b", "tau_l", "tau_s"):
            if getattr(self, name) < 1:
                raise ConfigurationError("%s must be >= 1" % name)
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be >= 0")
        if self.morph_radius < 0:
            raise ConfigurationError("morph_radius must be >= 0")
        if self.model_source not in ("reference", "external"):
            raise ConfigurationError(
                "model_source must be `reference` or `external`, got %r"
                % self.model_source
            )
        if self.model_source == "external" and not self.external_dir:
            raise ConfigurationError("model_source=external requires external_dir")
        self.train_config()  # range checks

    def thresholds(self) -> SelectionThresholds:
        return SelectionThresholds(self.t_o, self.t_b)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            iterations=self.iterations,
            pixel_subsample=self.pixel_subsample,
            seed=self.seed,
            shuffle=self.shuffle,
        )


_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _parse_value(name: str, text: str, target_type) -> object:
    text = text.strip()
    if target_type is bool:
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigurationError("config key %s expects a boolean, got %r" % (name, text))
    if target_type is int:
        return int(text)
    if target_type is float:
        return float(text)
    if target_type == tuple:
        return tuple(part.strip() for part in text.split(",") if part.strip())
    return text


def load_config_file(path) -> dict:
    """Parse a plain-text key=value file into PipelineConfig overrides."""
    known = {f.name: f for f in fields(PipelineConfig)}
    out: dict = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigurationError("cannot read config file %s: %s" % (path, exc)) from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                "%s:%d: expected key=value, got %r" % (path, lineno, raw.strip())
            )
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigurationError("%s:%d: unknown config key %r" % (path, lineno, key))
        fld = known[key]
        if key == "weak_labels":
            out[key] = _parse_value(key, value, tuple)
        elif key == "iterations":
            text = value.strip()
            out[key] = None if text.lower() in ("", "none", "auto") else int(text)
        elif key == "pad_to":
            parts = [int(p) for p in value.split(",")]
            if len(parts) != 2:
                raise ConfigurationError("%s:%d: pad_to expects two integers" % (path, lineno))
            out[key] = tuple(parts)
        elif key == "external_dir":
            out[key] = value.strip() or None
        else:
            out[key] = _parse_value(key, value, type(getattr(PipelineConfig(), key)))
    return out


def make_config(file_path=None, **overrides) -> PipelineConfig:
    """Build a config from defaults, then a config file, then overrides."""
    values: dict = {}
    if file_path:
        values.update(load_config_file(file_path))
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    config = PipelineConfig(**values)
    config.validate()
    return config
