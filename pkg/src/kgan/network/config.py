"""Model configuration and parameter initialization."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError

BRANCHES = ("context", "syntax", "knowledge")
FUSIONS = ("hierarchical", "concat", "sum", "attention", "voting")


@dataclass
class KganConfig:
    d_w: int = 300
    d_k: int = 100
    hidden: int = 300          # per-direction BiLSTM size; d_r = 2 * hidden
    n_classes: int = 3
    gcn_layers: int = 2
    dropout: float = 0.5
    branches: tuple[str, ...] = BRANCHES
    fusion: str = "hierarchical"
    symmetrize: bool = True
    position: bool = True
    seed: int | None = None
    dtype: str = "float32"

    def __post_init__(self):
        self.branches = tuple(b for b in BRANCHES if b in self.branches)
        self.validate()

    def validate(self):
        if not self.branches:
            raise ConfigError("at least one branch must be active")
        unknown = set(self.branches) - set(BRANCHES)
        if unknown:
            raise ConfigError(f"unknown branches {sorted(unknown)}")
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.fusion == "hierarchical" and set(self.branches) != set(BRANCHES):
            raise ConfigError("hierarchical fusion requires all three branches")
        if self.gcn_layers != 2:
            raise ConfigError("the syntax branch uses exactly two graph-convolution layers")
        if self.n_classes != 3:
            raise ConfigError("three-way polarity classification only")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.hidden < 1 or self.d_w < 1 or self.d_k < 1:
            raise ConfigError("hidden, d_w and d_k must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def d_r(self) -> int:
        return 2 * self.hidden

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branches"] = list(self.branches)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KganConfig":
        d = dict(d)
        if "branches" in d:
            d["branches"] = tuple(d["branches"])
        return cls(**d)


def _xavier(rng, shape, dtype):
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(config: KganConfig, word_matrix: np.ndarray | None = None,
                vocab_size: int | None = None, seed: int | None = None) -> dict[str, np.ndarray]:
    """Create all trainable tensors for the configured architecture.

    The word embedding matrix is taken from ``word_matrix`` when given
    (typically pretrained vectors) or initialized uniform(-0.1, 0.1); its PAD
    row is always zeroed.
    """
    if seed is None:
        seed = config.seed if config.seed is not None else 0
    rng = np.random.default_rng(seed)
    dt = config.np_dtype
    d_r, d_k, d_w = config.d_r, config.d_k, config.d_w

    params: dict[str, np.ndarray] = {}
    if word_matrix is not None:
        if word_matrix.shape[1] != d_w:
            raise ConfigError(f"word matrix dim {word_matrix.shape[1]} != configured d_w {d_w}")
        emb = word_matrix.astype(dt).copy()
    else:
        if vocab_size is None:
            raise ConfigError("init_params needs word_matrix or vocab_size")
        emb = rng.uniform(-0.1, 0.1, size=(vocab_size, d_w)).astype(dt)
    emb[0] = 0.0
    params["emb"] = emb

    def lstm(prefix):
        for direction in ("fwd", "bwd"):
            params[f"{prefix}_{direction}_Wx"] = _xavier(rng, (d_w, 4 * config.hidden), dt)
            params[f"{prefix}_{direction}_Wh"] = _xavier(rng, (config.hidden, 4 * config.hidden), dt)
            params[f"{prefix}_{direction}_b"] = np.zeros(4 * config.hidden, dtype=dt)

    lstm("lstm_s")
    need_aspect_encoder = "context" in config.branches or "knowledge" in config.branches
    if need_aspect_encoder:
        lstm("lstm_t")

    if "context" in config.branches:
        params["ctx_Wa"] = _xavier(rng, (d_r, d_r), dt)
    if "syntax" in config.branches:
        for layer in range(config.gcn_layers):
            params[f"gcn_W{layer}"] = _xavier(rng, (d_r, d_r), dt)
            params[f"gcn_b{layer}"] = np.zeros(d_r, dtype=dt)
    if "knowledge" in config.branches:
        params["kn_Wk"] = _xavier(rng, (d_r + d_k, d_r + d_k), dt)
        params["kn_Wp"] = _xavier(rng, (d_r + d_k, d_r), dt)
        params["kn_bp"] = np.zeros(d_r, dtype=dt)

    nb = len(config.branches)
    if config.fusion == "hierarchical":
        for pair in ("cs", "ck", "sk"):
            params[f"fus_{pair}_W"] = _xavier(rng, (2 * d_r, 3), dt)
            params[f"fus_{pair}_b"] = np.zeros(3, dtype=dt)
        params["fus_conv_K"] = _xavier(rng, (3, 3, 3), dt)  # (out channel, row, col)
        params["fus_conv_b"] = np.zeros(3, dtype=dt)
    elif config.fusion == "concat":
        params["fus_cat_W"] = _xavier(rng, (nb * d_r, 3), dt)
        params["fus_cat_b"] = np.zeros(3, dtype=dt)
    elif config.fusion == "sum":
        for b in config.branches:
            params[f"fus_sum_{b}_W"] = _xavier(rng, (d_r, 3), dt)
            params[f"fus_sum_{b}_b"] = np.zeros(3, dtype=dt)
    elif config.fusion == "attention":
        params["fus_att_W"] = _xavier(rng, (d_r, 3), dt)
        params["fus_att_b"] = np.zeros(3, dtype=dt)
    elif config.fusion == "voting":
        for b in config.branches:
            params[f"fus_vote_{b}_W"] = _xavier(rng, (d_r, 3), dt)
            params[f"fus_vote_{b}_b"] = np.zeros(3, dtype=dt)
    return params


def count_parameters(params: dict[str, np.ndarray]) -> int:
    return int(sum(p.size for p in params.values()))
