"""Run configuration: a flat key=value file plus command-line overrides.

One config file drives every command. Keys are namespaced by section
prefix (data., train., finetune., select., feature., run., eval.,
report., plus the bare "backend"), and every key can be overridden on the
command line by a flag of the same name. finetune.* keys default to the
resolved train.* values.

Training defaults depend on the backend. The native linear classifier
trains well with plain SGD and a large step; external neural backends get
the conventional small-step Adam recipe. Either set can be overridden
key by key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .classifier import Optimizer, TrainConfig
from .errors import ConfigError
from .features import DEFAULT_DIM, FeatureConfig
from .selftrain import RankingScore, SelectionConfig
from .wire import NATIVE_BACKEND, parse_backend

NATIVE_TRAIN_DEFAULTS = {
    "optimizer": "sgd",
    "learning_rate": 0.1,
    "max_input_length": 256,
    "batch_size": 8,
    "epochs": 10,
    "l2_penalty": 1e-6,
}

EXTERNAL_TRAIN_DEFAULTS = {
    "optimizer": "adam",
    "learning_rate": 1e-5,
    "max_input_length": 256,
    "batch_size": 8,
    "epochs": 3,
    "l2_penalty": 0.0,
}

_TRAIN_KEYS = tuple(NATIVE_TRAIN_DEFAULTS)

KNOWN_KEYS = (
    "data.train",
    "data.dev",
    "data.test",
    "data.unlabeled",
    "data.format",
    *(f"train.{k}" for k in _TRAIN_KEYS),
    *(f"finetune.{k}" for k in _TRAIN_KEYS),
    "select.k_per_class",
    "select.ranking_score",
    "feature.dim",
    "feature.ngram_orders",
    "run.seed",
    "run.seeds",
    "run.out",
    "run.rounds",
    "backend",
    "eval.split",
    "eval.model",
    "report.top_n",
)


def parse_config_file(path: Union[str, Path]) -> dict[str, str]:
    """key = value lines; blank lines and full-line # comments ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _as_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: expected an integer, got {raw!r}") from None


def _as_float(key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: expected a number, got {raw!r}") from None


def _as_int_list(key: str, raw: str) -> list[int]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"config key {key}: expected a comma-separated list")
    return [_as_int(key, p) for p in parts]


@dataclass
class RunConfig:
    """Merged view of config-file values and command-line overrides."""

    values: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_sources(
        cls,
        config_path: Optional[Union[str, Path]],
        overrides: Optional[dict[str, str]] = None,
    ) -> "RunConfig":
        values = parse_config_file(config_path) if config_path else {}
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = value
        rc = cls(values)
        rc.validate()
        return rc

    def validate(self) -> None:
        for key in self.values:
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown config key: {key}")
        # exercise every typed accessor so bad values fail before any work
        native = self.backend_argv() is None
        self.train_config(native=native)
        self.finetune_config(native=native)
        self.selection_config()
        self.feature_config()
        self.seed()
        self.seeds()
        self.rounds()
        self.data_format()
        self.eval_split()
        self.eval_model()
        self.report_top_n()

    def get(self, key: str) -> Optional[str]:
        return self.values.get(key)

    # -- backend ----------------------------------------------------------

    def backend_spec(self) -> str:
        return self.values.get("backend", NATIVE_BACKEND)

    def backend_argv(self) -> Optional[list[str]]:
        return parse_backend(self.backend_spec())

    # -- training ---------------------------------------------------------

    def _train_values(self, prefix: str, native: bool) -> dict:
        base = dict(NATIVE_TRAIN_DEFAULTS if native else EXTERNAL_TRAIN_DEFAULTS)
        if prefix == "finetune":
            # finetune inherits explicit train.* settings before its own
            for name in _TRAIN_KEYS:
                raw = self.values.get(f"train.{name}")
                if raw is not None:
                    base[name] = raw
        for name in _TRAIN_KEYS:
            raw = self.values.get(f"{prefix}.{name}")
            if raw is not None:
                base[name] = raw
        return base

    def _build_train_config(self, prefix: str, native: bool, seed: int) -> TrainConfig:
        raw = self._train_values(prefix, native)
        optimizer = str(raw["optimizer"]).lower()
        allowed = [o.value for o in Optimizer]
        if optimizer not in allowed:
            raise ConfigError(
                f"config key {prefix}.optimizer: expected one of "
                f"{', '.join(allowed)}, got {raw['optimizer']!r}"
            )

        def num(name: str, conv) -> float:
            value = raw[name]
            return conv(f"{prefix}.{name}", value) if isinstance(value, str) else value

        return TrainConfig(
            optimizer=Optimizer(optimizer),
            learning_rate=float(num("learning_rate", _as_float)),
            max_input_length=int(num("max_input_length", _as_int)),
            batch_size=int(num("batch_size", _as_int)),
            epochs=int(num("epochs", _as_int)),
            l2_penalty=float(num("l2_penalty", _as_float)),
            seed=seed,
        )

    def train_config(self, native: bool = True, seed: int = 0) -> TrainConfig:
        return self._build_train_config("train", native, seed)

    def finetune_config(self, native: bool = True, seed: int = 0) -> TrainConfig:
        return self._build_train_config("finetune", native, seed)

    # -- selection and features --------------------------------------------

    def selection_config(self) -> SelectionConfig:
        k = _as_int("select.k_per_class", self.values.get("select.k_per_class", "30000"))
        raw_score = self.values.get("select.ranking_score", "raw_logit")
        allowed = [r.value for r in RankingScore]
        if raw_score not in allowed:
            raise ConfigError(
                f"config key select.ranking_score: expected one of "
                f"{', '.join(allowed)}, got {raw_score!r}"
            )
        return SelectionConfig(k_per_class=k, ranking_score=RankingScore(raw_score))

    def feature_config(self) -> Optional[FeatureConfig]:
        dim_raw = self.values.get("feature.dim")
        orders_raw = self.values.get("feature.ngram_orders")
        if dim_raw is None and orders_raw is None:
            return None
        dim = _as_int("feature.dim", dim_raw) if dim_raw is not None else DEFAULT_DIM
        orders = (
            tuple(_as_int_list("feature.ngram_orders", orders_raw))
            if orders_raw is not None
            else (1, 2)
        )
        max_tokens = self.train_config().max_input_length
        return FeatureConfig(ngram_orders=orders, dim=dim, max_tokens=max_tokens)

    # -- run control --------------------------------------------------------

    def seed(self) -> int:
        return _as_int("run.seed", self.values.get("run.seed", "0"))

    def seeds(self) -> list[int]:
        raw = self.values.get("run.seeds")
        if raw is None:
            return [self.seed()]
        seeds = _as_int_list("run.seeds", raw)
        if len(set(seeds)) != len(seeds):
            raise ConfigError("config key run.seeds: seeds must be distinct")
        return seeds

    def out_dir(self) -> Path:
        raw = self.values.get("run.out")
        if not raw:
            raise ConfigError("run.out (or --out) is required for this command")
        return Path(raw)

    def rounds(self) -> int:
        rounds = _as_int("run.rounds", self.values.get("run.rounds", "1"))
        if rounds < 1:
            raise ConfigError("config key run.rounds: must be >= 1")
        return rounds

    # -- data ---------------------------------------------------------------

    def data_path(self, split: str) -> Optional[str]:
        return self.values.get(f"data.{split}")

    def require_data_path(self, split: str) -> Path:
        raw = self.data_path(split)
        if not raw:
            raise ConfigError(f"data.{split} (or --{split}) is required for this command")
        return Path(raw)

    def data_format(self) -> str:
        fmt = self.values.get("data.format", "auto")
        if fmt not in ("auto", "jsonl", "csv", "tsv"):
            raise ConfigError(
                f"config key data.format: expected auto, jsonl, csv or tsv, got {fmt!r}"
            )
        return fmt

    # -- eval and report ------------------------------------------------------

    def eval_split(self) -> str:
        split = self.values.get("eval.split", "dev")
        if split not in ("dev", "test"):
            raise ConfigError(
                f"config key eval.split: expected dev or test, got {split!r}"
            )
        return split

    def eval_model(self) -> str:
        model = self.values.get("eval.model", "final")
        if model not in ("final", "student", "teacher"):
            raise ConfigError(
                f"config key eval.model: expected final, student or teacher, "
                f"got {model!r}"
            )
        return model

    def report_top_n(self) -> int:
        top_n = _as_int("report.top_n", self.values.get("report.top_n", "5"))
        if top_n < 1:
            raise ConfigError("config key report.top_n: must be >= 1")
        return top_n
