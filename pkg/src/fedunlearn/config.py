"""Flat key/value experiment configuration.

The on-disk format is documented plain text: one ``key = value`` pair per
line, ``#`` comments, integer list values comma-separated.  The schema is
versioned through the mandatory ``schema_version`` key; unknown keys are
rejected so typos fail fast.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "format_config"]

SCHEMA_VERSION = 1

SCENARIOS = ("honest", "tamper", "key-exposure", "no-unlearn-baseline", "retrain-from-scratch")


class ConfigError(ValueError):
    """Malformed, unknown or out-of-range configuration input."""


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    scenario: str = "honest"
    seed: int = 0

    # federated training
    clients: int = 10
    rounds: int = 20
    local_epochs: int = 5
    batch_size: int = 16
    learning_rate: float = 0.1
    weight_mode: str = "size"          # size | uniform

    # model
    model: str = "mlp"                 # logreg | mlp
    hidden_units: int = 16
    activation: str = "tanh"           # tanh | relu (mlp only)

    # data
    dataset: str = "blobs"             # blobs | idx | delimited
    features: int = 2
    classes: int = 3
    samples_per_client: int = 120
    target_samples: int = 600          # target-shard size; 0 = samples_per_client
    test_samples: int = 400
    target_holdout: int = 120
    noise_sigma: float = 0.5
    class_radius: float = 3.0
    target_shift: float = 1.4
    idx_images: str = ""
    idx_labels: str = ""
    idx_limit: int = 0
    data_path: str = ""

    # unlearning
    targets: tuple = (0,)              # client indices
    calibration_ratio: float = 0.5
    delta_t: float = 1.0
    alpha: float = 1.0
    max_rounds: int = 0                # 0 = no cap beyond the training budget
    strict_calibration: bool = True
    tamper_round: int = 3              # calibration step hit by the tamper scenario
    time_interval: int = 0             # commit cadence in calibration epochs; 0 = end-of-round only

    # chain
    lambda_bits: int = 64
    consensus: str = "dpos"            # dpos | pow
    validator_count: int = 3
    pow_difficulty: int = 12
    replacement_scale: float = 1.0

    # simulated-time cost model (milliseconds)
    contract_latency_ms: float = 500.0
    seal_ms: float = 100.0
    pow_attempt_ms: float = 0.05
    train_ms_per_batch: float = 20.0
    agg_ms_per_update: float = 5.0
    lv_ms_per_entry: float = 5.0
    lr_ms_per_entry: float = 5.0

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.clients < 2:
            raise ConfigError("clients must be at least 2")
        if self.rounds < 1:
            raise ConfigError("rounds must be at least 1")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.weight_mode not in ("size", "uniform"):
            raise ConfigError("weight_mode must be size or uniform")
        if self.model not in ("logreg", "mlp"):
            raise ConfigError("model must be logreg or mlp")
        if self.model == "mlp" and self.hidden_units < 1:
            raise ConfigError("hidden_units must be positive for mlp")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError("activation must be tanh or relu")
        if self.dataset not in ("blobs", "idx", "delimited"):
            raise ConfigError("dataset must be blobs, idx or delimited")
        if self.classes < 2:
            raise ConfigError("classes must be at least 2")
        if self.dataset == "blobs" and self.features < 2:
            raise ConfigError("blob data needs at least 2 features")
        if self.target_samples < 0:
            raise ConfigError("target_samples must be 0 (same as others) or positive")
        if not self.targets:
            raise ConfigError("targets must name at least one client index")
        if any(not 0 <= t < self.clients for t in self.targets):
            raise ConfigError("targets must be valid client indices")
        if len(set(self.targets)) >= self.clients:
            raise ConfigError("at least one client must be retained")
        if not 0 < self.calibration_ratio <= 1:
            raise ConfigError("calibration_ratio must lie in (0, 1]")
        if not 0 < self.delta_t <= 1:
            raise ConfigError("delta_t must lie in (0, 1]")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if self.max_rounds < 0:
            raise ConfigError("max_rounds must be non-negative")
        if self.tamper_round < 0:
            raise ConfigError("tamper_round must be non-negative")
        if self.time_interval < 0:
            raise ConfigError("time_interval must be non-negative")
        if not 4 <= self.lambda_bits <= 512:
            raise ConfigError("lambda_bits must lie in [4, 512]")
        if self.consensus not in ("dpos", "pow"):
            raise ConfigError("consensus must be dpos or pow")
        if not 1 <= self.validator_count <= self.clients:
            raise ConfigError("validator_count must lie in [1, clients]")
        if not 1 <= self.pow_difficulty <= 48:
            raise ConfigError("pow_difficulty must lie in [1, 48]")
        if not self.replacement_scale > 0:
            raise ConfigError("replacement_scale must be positive")
        for name in (
            "contract_latency_ms",
            "seal_ms",
            "pow_attempt_ms",
            "train_ms_per_batch",
            "agg_ms_per_update",
            "lv_ms_per_entry",
            "lr_ms_per_entry",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        return self


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELDS[name].type
    raw = raw.strip()
    try:
        if name == "targets":
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(int(p) for p in parts)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str, overrides=None) -> ExperimentConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw)
    if values and "schema_version" not in values:
        raise ConfigError("missing schema_version")
    for key, raw in (overrides or {}).items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown override key {key!r}")
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    return ExperimentConfig(**values).validate()


def load_config(path, overrides=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if f.name == "targets":
            rendered = ",".join(str(t) for t in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"
