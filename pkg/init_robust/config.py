#!/usr/bin/env python3
"""
Configuration management utilities for init-robust
"""

import math
import os
from collections import ChainMap
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import toml
from dotenv import load_dotenv

from .attacks import AttackKind, NormScope
from .bounds import Variant
from .errors import ConfigError, ContractError
from .initializers import InitScheme, MeanReading, scheme_from_config
from .nn import Activation, Arch

# .envファイルから環境変数を読み込む
load_dotenv()

# 設定ファイルのパスを定義
CONFIG_FILE = Path("config.toml")

# INIT_ROBUST_<SECTION>__<KEY> で設定を上書きできる
ENV_PREFIX = "INIT_ROBUST_"

SECTIONS = ("dataset", "model", "init", "train", "attack", "bounds", "experiment", "logging")
ATTACK_TARGETS = ("train", "val", "test")


def _get_default_config():
    """デフォルト設定を返す"""
    return {
        "dataset": {
            "source": "sbm",
            "path": "",
            "num_classes": 0,
            "n": 200,
            "classes": 4,
            "p_in": 0.1,
            "p_out": 0.01,
            "feat_dim": 16,
            "num_samples": 2000,
            "center_scale": 3.0,
            "seed": 0,
        },
        "model": {
            "arch": "gcn",
            "hidden": 16,
            "layers": 2,
            "activation": "tanh",
            "self_loops": False,
        },
        "init": {
            "scheme": "gaussian",
            "mu": 0.0,
            "sigma": 1.0,
            "beta": 1.0,
            "value": 0.0,
        },
        "train": {
            "eta": 1e-2,
            "epochs": 300,
            "eval_every": 10,
            "grad_tol": 1e-3,
            "smoothness_inflation": 1.5,
        },
        "attack": {
            "kinds": ["structure_pgd", "dice", "random_flip"],
            "feature_budgets": [0.1, 0.5, 1.0],
            "structure_budgets": [0.1, 0.2, 0.3, 0.4],
            "steps": 100,
            "step_size": 0.1,
            "trials": 1,
            "norm_scope": "auto",
            "target": "test",
        },
        "bounds": {
            "variants": ["pow2", "sharpened"],
            "x_norm": "spectral",
            "mean_reading": "vectorized",
        },
        "experiment": {
            "repeats": 10,
            "base_seed": 0,
            "output_dir": "results",
            "threads": 1,
            "sigma_grid": [0.1, 0.5, 1.0, 2.0],
            "beta_grid": [0.5, 1.0, 2.0, 4.0],
        },
        "logging": {
            "log_level": "INFO",
            "log_file": "",
        },
    }


def _load_user_config(config_path):
    """ユーザー設定ファイルを読み込む（存在しなければ空、壊れていればConfigError）"""
    try:
        return toml.load(config_path)
    except FileNotFoundError:
        return {}
    except toml.TomlDecodeError as e:
        raise ConfigError(f"{config_path}: {e}") from None


def _merge_configs(default_config, user_config):
    """デフォルト設定とユーザー設定をマージ"""
    merged = {}
    for key in default_config:
        if key in user_config:
            if isinstance(default_config[key], dict) and isinstance(
                user_config[key], dict
            ):
                merged[key] = dict(ChainMap(user_config[key], default_config[key]))
            else:
                merged[key] = user_config[key]
        else:
            merged[key] = default_config[key]

    # ユーザー設定にのみ存在するキーも追加
    for key in user_config:
        if key not in merged:
            merged[key] = user_config[key]

    return merged


def _parse_env_value(raw):
    """環境変数の値をTOMLスカラーとして解釈（失敗時は文字列のまま）"""
    try:
        return toml.loads(f"value = {raw}")["value"]
    except toml.TomlDecodeError:
        return raw


def _env_overrides(environ=None):
    """INIT_ROBUST_<SECTION>__<KEY> 形式の環境変数を設定辞書に変換"""
    environ = os.environ if environ is None else environ
    overrides = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, _, key = name[len(ENV_PREFIX):].partition("__")
        section, key = section.lower(), key.lower()
        if section in SECTIONS and key:
            overrides.setdefault(section, {})[key] = _parse_env_value(raw)
    return overrides


def load_config(path=None, environ=None):
    """設定ファイル (config.toml) を読み込み、環境変数で上書きする"""
    default_config = _get_default_config()
    user_config = _load_user_config(Path(path) if path else CONFIG_FILE)
    merged = _merge_configs(default_config, user_config)
    return _merge_configs(merged, _env_overrides(environ))


def save_config(config, path=None):
    """設定をTOMLで保存"""
    path = Path(path) if path else CONFIG_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        toml.dump(config, f)
    return path


# ---------------------------------------------------------------------------
# 検証済みの実験設定
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "sbm"
    path: str = ""
    num_classes: Optional[int] = None
    n: int = 200
    classes: int = 4
    p_in: float = 0.1
    p_out: float = 0.01
    feat_dim: int = 16
    num_samples: int = 2000
    center_scale: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class ModelSpec:
    arch: Arch = Arch.GCN
    hidden: int = 16
    layers: int = 2
    activation: Activation = Activation.TANH
    self_loops: bool = False


@dataclass(frozen=True)
class TrainSpec:
    eta: float = 1e-2
    epochs: int = 300
    eval_every: int = 10
    grad_tol: float = 1e-3
    smoothness_inflation: float = 1.5

    def checkpoints(self) -> Tuple[int, ...]:
        """評価するエポック（eval_every=0 なら最終エポックのみ）"""
        if self.eval_every == 0 or self.epochs == 0:
            return (self.epochs,)
        return tuple(range(self.eval_every, self.epochs + 1, self.eval_every))


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind
    budgets: Tuple[float, ...]
    steps: int = 100
    step_size: float = 0.1
    trials: int = 1
    norm_scope: NormScope = NormScope.GLOBAL
    # 勾配攻撃が損失を測るノード集合（評価は常にテストノード）
    target: str = "test"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    model: ModelSpec
    init: InitScheme
    train: TrainSpec
    attacks: Tuple[AttackSpec, ...] = ()
    repeats: int = 1
    base_seed: int = 0
    bound_variants: Tuple[Variant, ...] = (Variant.POW2, Variant.SHARPENED)
    x_norm: str = "spectral"
    mean_reading: MeanReading = MeanReading.VECTORIZED
    output_dir: str = "results"
    threads: int = 1
    sigma_grid: Tuple[float, ...] = field(default=(0.1, 0.5, 1.0, 2.0))
    beta_grid: Tuple[float, ...] = field(default=(0.5, 1.0, 2.0, 4.0))

    def with_init(self, scheme: InitScheme) -> "ExperimentConfig":
        return replace(self, init=scheme)

    def with_epochs(self, epochs: int) -> "ExperimentConfig":
        eval_every = self.train.eval_every
        if eval_every and epochs % eval_every:
            eval_every = 0
        return replace(self, train=replace(self.train, epochs=epochs, eval_every=eval_every))


def _as_tuple(section, key, kind=float):
    value = section.get(key, [])
    if not isinstance(value, (list, tuple)):
        value = [value]
    try:
        return tuple(kind(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a list of {kind.__name__}, got {value!r}") from None


def _sorted_grid(name, values):
    if list(values) != sorted(values):
        raise ConfigError(f"{name} must be sorted ascending, got {list(values)}")
    return values


def _enum(enum_cls, value, name):
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(member.value for member in enum_cls)
        raise ConfigError(f"{name}: unknown value {value!r} (choose from {choices})") from None


def _attack_specs(section, arch):
    kinds = [_enum(AttackKind, kind, "attack.kinds") for kind in section.get("kinds", [])]
    feature_budgets = _sorted_grid("attack.feature_budgets", _as_tuple(section, "feature_budgets"))
    structure_budgets = _sorted_grid("attack.structure_budgets", _as_tuple(section, "structure_budgets"))
    scope = section.get("norm_scope", "auto")
    if scope == "auto":
        scope = NormScope.PER_ROW if arch is Arch.MLP else NormScope.GLOBAL
    scope = _enum(NormScope, scope, "attack.norm_scope")
    target = section.get("target", "test")
    if target not in ATTACK_TARGETS:
        raise ConfigError(f"attack.target: unknown value {target!r} (choose from {', '.join(ATTACK_TARGETS)})")

    specs = []
    for kind in kinds:
        if kind.structural and arch is Arch.MLP:
            raise ConfigError(f"{kind.value} perturbs edges; an mlp has none to attack")
        budgets = structure_budgets if kind.structural else feature_budgets
        if any(b < 0 for b in budgets) or (kind.structural and any(b > 1 for b in budgets)):
            raise ConfigError(f"{kind.value}: budgets out of range {list(budgets)}")
        specs.append(
            AttackSpec(
                kind=kind,
                budgets=budgets,
                steps=int(section.get("steps", 100)),
                step_size=float(section.get("step_size", 0.1)),
                trials=int(section.get("trials", 1)),
                norm_scope=scope,
                target=target,
            )
        )
        if specs[-1].steps < 1 or specs[-1].step_size <= 0 or specs[-1].trials < 1:
            raise ConfigError("attack.steps, attack.step_size and attack.trials must be positive")
    return tuple(specs)


def experiment_config_from_dict(config) -> ExperimentConfig:
    """マージ済み設定辞書から検証済みの ExperimentConfig を作る"""
    sections = _merge_configs(_get_default_config(), config)
    dataset = sections["dataset"]
    model = sections["model"]
    train = sections["train"]
    bounds = sections["bounds"]
    experiment = sections["experiment"]

    if dataset.get("source") not in ("sbm", "path", "blobs"):
        raise ConfigError(f"dataset.source must be sbm, path or blobs, got {dataset.get('source')!r}")
    if dataset.get("source") == "path" and not dataset.get("path"):
        raise ConfigError("dataset.path is required when dataset.source = 'path'")

    try:
        dataset_spec = DatasetSpec(
            source=dataset["source"],
            path=str(dataset.get("path", "")),
            num_classes=int(dataset.get("num_classes", 0)) or None,
            n=int(dataset["n"]),
            classes=int(dataset["classes"]),
            p_in=float(dataset["p_in"]),
            p_out=float(dataset["p_out"]),
            feat_dim=int(dataset["feat_dim"]),
            num_samples=int(dataset["num_samples"]),
            center_scale=float(dataset["center_scale"]),
            seed=int(dataset["seed"]),
        )
        model_spec = ModelSpec(
            arch=_enum(Arch, model["arch"], "model.arch"),
            hidden=int(model["hidden"]),
            layers=int(model["layers"]),
            activation=_enum(Activation, model["activation"], "model.activation"),
            self_loops=bool(model["self_loops"]),
        )
        train_spec = TrainSpec(
            eta=float(train["eta"]),
            epochs=int(train["epochs"]),
            eval_every=int(train["eval_every"]),
            grad_tol=float(train["grad_tol"]),
            smoothness_inflation=float(train["smoothness_inflation"]),
        )
        scheme = scheme_from_config(sections["init"])
    except (KeyError, TypeError, ValueError, ContractError) as e:
        raise ConfigError(f"invalid configuration: {e}") from None

    if model_spec.layers < 1 or model_spec.hidden < 1:
        raise ConfigError("model.layers and model.hidden must be >= 1")
    if train_spec.eta <= 0 or not math.isfinite(train_spec.eta):
        raise ConfigError(f"train.eta must be positive, got {train_spec.eta}")
    if train_spec.epochs < 0 or train_spec.eval_every < 0:
        raise ConfigError("train.epochs and train.eval_every must be >= 0")
    if train_spec.eval_every and train_spec.epochs % train_spec.eval_every:
        raise ConfigError(
            f"train.eval_every ({train_spec.eval_every}) must divide train.epochs ({train_spec.epochs}) or be 0"
        )

    repeats = int(experiment["repeats"])
    if repeats < 1:
        raise ConfigError(f"experiment.repeats must be >= 1, got {repeats}")
    threads = int(experiment.get("threads", 1))
    if threads < 1:
        raise ConfigError(f"experiment.threads must be >= 1, got {threads}")
    x_norm = bounds.get("x_norm", "spectral")
    if x_norm not in ("spectral", "frobenius"):
        raise ConfigError(f"bounds.x_norm must be spectral or frobenius, got {x_norm!r}")

    return ExperimentConfig(
        dataset=dataset_spec,
        model=model_spec,
        init=scheme,
        train=train_spec,
        attacks=_attack_specs(sections["attack"], model_spec.arch),
        repeats=repeats,
        base_seed=int(experiment["base_seed"]),
        bound_variants=tuple(_enum(Variant, v, "bounds.variants") for v in bounds.get("variants", [])),
        x_norm=x_norm,
        mean_reading=_enum(MeanReading, bounds.get("mean_reading", "vectorized"), "bounds.mean_reading"),
        output_dir=str(experiment["output_dir"]),
        threads=threads,
        sigma_grid=_sorted_grid("experiment.sigma_grid", _as_tuple(experiment, "sigma_grid")),
        beta_grid=_sorted_grid("experiment.beta_grid", _as_tuple(experiment, "beta_grid")),
    )
