"""Configuration dataclasses shared by the model, training loop and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, fields


@dataclass
class ModelConfig:
    """Architecture dimensions. Defaults follow the reference hyperparameters:
    300-d word embeddings, 50-d tag/position/entity embeddings, a one-layer
    Bi-LSTM with 220 units per direction, three GCN layers, 300 attention
    hidden units and a 200-unit trigger transform."""

    word_dim: int = 300
    feat_dim: int = 50
    lstm_units: int = 220
    gcn_hidden: int = 220
    gcn_layers: int = 3
    attention_hidden: int = 300
    transform_hidden: int = 200
    max_len: int = 50
    dropout: float = 0.5

    def __post_init__(self):
        for f in fields(self):
            if f.name == "dropout":
                continue
            v = getattr(self, f.name)
            if f.name == "gcn_layers":
                if v < 0:
                    raise ValueError("gcn_layers must be >= 0")
            elif v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def embed_dim(self) -> int:
        return self.word_dim + 3 * self.feat_dim

    @property
    def lstm_out_dim(self) -> int:
        return 2 * self.lstm_units

    @property
    def rep_dim(self) -> int:
        return self.gcn_hidden if self.gcn_layers > 0 else self.lstm_out_dim


@dataclass
class LossConfig:
    """Joint loss weights: alpha up-weights non-O trigger tokens, beta scales
    the argument term. alpha = 1 switches the trigger bias off entirely."""

    alpha: float = 5.0
    beta: float = 2.0

    def __post_init__(self):
        if self.alpha < 1.0:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.beta <= 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta}")


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    l2: float = 1e-8
    seed: int = 0
    patience: int = 10
    rho: float = 0.95
    eps: float = 1e-6
    inject_gold_candidates: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.l2 < 0 or self.patience < 0:
            raise ValueError("invalid training configuration")
        if not 0.0 < self.rho < 1.0 or self.eps <= 0:
            raise ValueError("invalid optimizer constants")
