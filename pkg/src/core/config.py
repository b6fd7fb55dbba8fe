"""
config.py
---------

This module centralizes the configuration management for the project using Pydantic.

It defines a `RunConfig` settings class that holds every key the command-line
subcommands understand, each with its documented default. Values are layered
(lowest to highest priority):

1. defaults declared on the class,
2. environment variables prefixed with `GAHNE_`,
3. a flat `key=value` config file (read with python-dotenv),
4. command-line flags.

Narrower views (`ModelConfig`, `TrainConfig`, `SynthConfig`) are plain Pydantic
models built from a `RunConfig` and handed to the model, trainer and generator.

Usage (in other modules):
-------------------------
from core.config import load_run_config

config = load_run_config("experiment.cfg", {"learning_rate": 0.005})
model_config = config.to_model_config()
"""

from pathlib import Path
from typing import Annotated, Any, Literal

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict

from core.exceptions import ConfigError

AggregatorName = Literal["attention", "gated", "pooling", "mean", "single"]
FeatureMode = Literal["auto", "provided", "onehot-id", "onehot-type"]
SweepParam = Literal["hidden_dim", "attention_dim", "num_layers", "conv_order"]

DATA_FILE_NAMES = {
    "nodes_path": "nodes.tsv",
    "edges_path": "edges.tsv",
    "features_path": "features.tsv",
    "labels_path": "labels.tsv",
}


def _split_csv(value: Any) -> Any:
    """Accepts `"0.2,0.4"` style text for list-valued keys."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class ModelConfig(BaseModel):
    """Architecture of one GAHNE model, including the ablation switches."""

    num_layers: int = Field(2, ge=1)
    conv_order: int = Field(1, ge=1)
    hidden_dims: list[int] = Field(default_factory=lambda: [64, 64])
    aggregator: AggregatorName = "attention"
    single_channel: int = Field(0, ge=0)
    attention_dim: int = Field(128, ge=1)
    share_attention: bool = False
    fusion_enabled: bool = True
    channels_enabled: bool = True
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if len(self.hidden_dims) != self.num_layers:
            raise ValueError(
                f"hidden_dims has {len(self.hidden_dims)} entries but num_layers is {self.num_layers}"
            )
        if any(dim < 1 for dim in self.hidden_dims):
            raise ValueError("every hidden dimension must be >= 1")
        if self.share_attention and len(set(self.hidden_dims)) > 1:
            raise ValueError("share_attention requires equal hidden dimensions across layers")
        return self

    @property
    def output_dim(self) -> int:
        return self.hidden_dims[-1]


class TrainConfig(BaseModel):
    """Optimizer and schedule settings for one training run; the dropout rate lives on ModelConfig."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(0.01, ge=0.0)
    weight_decay: float = Field(0.0005, ge=0.0)
    max_epochs: int = Field(200, ge=1)
    patience: int = Field(30, ge=0)
    batch_size: int = Field(0, ge=0)  # 0 means full batch
    loss_reduction: Literal["sum", "mean"] = "sum"
    seed: int = 0

    @model_validator(mode="after")
    def _check_patience(self) -> "TrainConfig":
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        return self


class SynthConfig(BaseModel):
    """Parameters of the planted-partition heterogeneous graph generator."""

    num_classes: int = Field(3, ge=1)
    nodes_per_class: int = Field(200, ge=1)
    num_aux_types: int = Field(2, ge=1)
    aux_per_class: int | None = Field(None, ge=1)
    intra_edge_prob: float = Field(0.05, ge=0.0, le=1.0)
    inter_edge_prob: float = Field(0.005, ge=0.0, le=1.0)
    seed: int = 0


class RunConfig(BaseSettings):
    """
    A Pydantic BaseSettings class holding every key of every subcommand.
    Defaults follow the published experimental setup where one exists.
    """

    model_config = SettingsConfigDict(env_prefix="GAHNE_", extra="ignore")

    # --- Data ---
    data_dir: Path | None = Field(None, description="directory holding nodes/edges/features/labels .tsv files")
    nodes_path: Path | None = Field(None, description="nodes file (<id>\\t<type>)")
    edges_path: Path | None = Field(None, description="edges file (<src>\\t<dst>\\t<type>)")
    features_path: Path | None = Field(None, description="optional features file")
    labels_path: Path | None = Field(None, description="labels file (<id>\\t<class>)")
    feature_mode: FeatureMode = Field("auto", description="input features: auto, provided, onehot-id, onehot-type")
    onehot_id_max_nodes: int = Field(5000, ge=1, description="largest graph for which auto picks onehot-id")

    # --- Run ---
    out: Path = Field(Path("runs"), description="output directory")
    seed: int = Field(0, description="root seed for every random stream")
    checkpoint: Path | None = Field(None, description="checkpoint file for eval/embed")

    # --- Model ---
    num_layers: int = Field(2, ge=1, description="convolution layers m")
    conv_order: int = Field(1, ge=1, description="polynomial order K")
    hidden_dim: int = Field(64, ge=1, description="embedding dimension used for every layer")
    hidden_dims: Annotated[list[int] | None, NoDecode] = Field(None, description="per-layer dimensions, overrides hidden_dim")
    aggregator: AggregatorName = Field("attention", description="attention, gated, pooling, mean or single")
    single_channel: int = Field(0, ge=0, description="channel kept by the single aggregator")
    attention_dim: int = Field(128, ge=1, description="attention vector dimension d_q")
    share_attention: bool = Field(False, description="reuse one attention parameter set in every layer")
    fusion_enabled: bool = Field(True, description="fuse the whole-graph branch into the embeddings")
    channels_enabled: bool = Field(True, description="use per-relation channels (false: two whole-graph branches)")
    dropout: float = Field(0.5, ge=0.0, lt=1.0, description="dropout rate")

    # --- Training ---
    learning_rate: float = Field(0.01, ge=0.0, description="Adam learning rate")
    weight_decay: float = Field(0.0005, ge=0.0, description="L2 penalty on weight matrices")
    max_epochs: int = Field(200, ge=1, description="epoch limit")
    patience: int = Field(30, ge=0, description="early stopping patience (epochs)")
    batch_size: int = Field(0, ge=0, description="labeled minibatch size, 0 for full batch")
    loss_reduction: Literal["sum", "mean"] = Field("sum", description="cross-entropy reduction over labeled nodes")
    n_train: int | None = Field(None, ge=0, description="training nodes (overrides train_ratio)")
    n_val: int | None = Field(None, ge=0, description="validation nodes (overrides val_ratio)")
    train_ratio: float = Field(0.1, ge=0.0, le=1.0, description="share of labeled nodes used for training")
    val_ratio: float = Field(0.05, ge=0.0, le=1.0, description="share of labeled nodes used for validation")

    # --- Evaluation ---
    eval_fractions: Annotated[list[float], NoDecode] = Field([0.2, 0.4, 0.6, 0.8], description="KNN reference fractions of the test set")
    repeats: int = Field(10, ge=1, description="trials per evaluation protocol")
    knn_k: int = Field(5, ge=1, description="neighbours in the KNN classifier")
    kmeans_max_iters: int = Field(300, ge=1, description="Lloyd iteration limit")

    # --- Synthetic graphs ---
    synth_classes: int = Field(3, ge=1, description="planted classes")
    synth_nodes_per_class: int = Field(200, ge=1, description="target nodes per class")
    synth_aux_types: int = Field(2, ge=0, description="auxiliary node types (one edge type each)")
    synth_aux_per_class: int | None = Field(None, ge=1, description="auxiliary nodes per class and type")
    synth_intra_prob: float = Field(0.05, ge=0.0, le=1.0, description="edge probability, matching classes")
    synth_inter_prob: float = Field(0.005, ge=0.0, le=1.0, description="edge probability, other classes")

    # --- Gradient check / sweeps ---
    gradcheck_eps: float = Field(1e-5, gt=0.0, description="central difference step")
    gradcheck_tolerance: float = Field(1e-4, gt=0.0, description="largest accepted relative error")
    sweep_param: SweepParam = Field("hidden_dim", description="key varied by the sweep subcommand")
    sweep_values: Annotated[list[int], NoDecode] = Field([16, 32, 64, 128], description="values tried by the sweep subcommand")

    @field_validator("hidden_dims", "eval_fractions", "sweep_values", mode="before")
    @classmethod
    def _parse_lists(cls, value: Any) -> Any:
        return _split_csv(value)

    @field_validator("eval_fractions")
    @classmethod
    def _check_fractions(cls, value: list[float]) -> list[float]:
        if any(not 0.0 < fraction < 1.0 for fraction in value):
            raise ValueError("eval_fractions must lie strictly between 0 and 1")
        return value

    def data_paths(self) -> dict[str, Path | None]:
        """Explicit paths win; otherwise files are looked up in `data_dir`."""
        paths: dict[str, Path | None] = {}
        for key, file_name in DATA_FILE_NAMES.items():
            explicit = getattr(self, key)
            if explicit is not None:
                paths[key] = explicit
            elif self.data_dir is not None:
                candidate = self.data_dir / file_name
                # features are optional, the rest must be reported if missing
                paths[key] = candidate if key != "features_path" or candidate.exists() else None
            else:
                paths[key] = None
        return paths

    def to_model_config(self) -> ModelConfig:
        dims = self.hidden_dims if self.hidden_dims else [self.hidden_dim] * self.num_layers
        return _build(
            ModelConfig,
            num_layers=self.num_layers,
            conv_order=self.conv_order,
            hidden_dims=dims,
            aggregator=self.aggregator,
            single_channel=self.single_channel,
            attention_dim=self.attention_dim,
            share_attention=self.share_attention,
            fusion_enabled=self.fusion_enabled,
            channels_enabled=self.channels_enabled,
            dropout_rate=self.dropout,
        )

    def to_train_config(self) -> TrainConfig:
        return _build(
            TrainConfig,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            loss_reduction=self.loss_reduction,
            seed=self.seed,
        )

    def to_synth_config(self) -> SynthConfig:
        if self.synth_aux_types < 1:
            raise ConfigError("synth_aux_types must be >= 1: a graph needs more than one node and edge type")
        return _build(
            SynthConfig,
            num_classes=self.synth_classes,
            nodes_per_class=self.synth_nodes_per_class,
            num_aux_types=self.synth_aux_types,
            aux_per_class=self.synth_aux_per_class,
            intra_edge_prob=self.synth_intra_prob,
            inter_edge_prob=self.synth_inter_prob,
            seed=self.seed,
        )

    def snapshot(self) -> dict[str, str]:
        """Flat string view of every key, used for report headers and manifests."""
        snapshot = {}
        for key, value in self.model_dump().items():
            if isinstance(value, list):
                value = ",".join(str(item) for item in value)
            snapshot[key] = "" if value is None else str(value)
        return snapshot


def _build(model_cls: type[BaseModel], **values: Any) -> Any:
    try:
        return model_cls(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid {model_cls.__name__}: {e}") from e


def load_run_config(config_path: Path | str | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Builds a RunConfig from an optional key=value file plus CLI overrides.
    Keys are matched case-insensitively against RunConfig fields; unknown keys
    are rejected so that typos do not silently fall back to defaults.
    """
    values: dict[str, Any] = {}
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        for key, value in dotenv_values(config_path).items():
            field = key.strip().lower().replace("-", "_")
            if field not in RunConfig.model_fields:
                raise ConfigError(f"{config_path}: unknown config key '{key}'")
            if value is not None and value != "":
                values[field] = value
    values.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
