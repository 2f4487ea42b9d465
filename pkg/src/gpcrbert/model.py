"""Post-LN transformer encoder with a three-layer position-wise prediction head."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .tensorcore import Tensor
from .tokenizer import IGNORE, MaskedExample, VOCAB_SIZE


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    n_heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    max_len: int = 372
    vocab_size: int = VOCAB_SIZE
    head_dims: tuple[int, int] = (1024, 256)
    dropout: float = 0.25
    encoder_dropout: float = 0.0
    layer_norm_eps: float = 1e-12
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "head_dims", tuple(int(h) for h in self.head_dims))
        if min(self.n_heads, self.d_model, self.d_ff, self.max_len) < 1:
            raise ConfigError("head/width/length settings must be positive")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be >= 0")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.vocab_size != VOCAB_SIZE:
            raise ConfigError(f"vocab_size must be {VOCAB_SIZE}")
        if len(self.head_dims) != 2 or min(self.head_dims) < 1:
            raise ConfigError("head_dims must be two positive widths")
        for p in (self.dropout, self.encoder_dropout):
            if not 0 <= p < 1:
                raise ConfigError(f"dropout {p} outside [0, 1)")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def tiny(cls, **overrides) -> "ModelConfig":
        base = dict(n_layers=2, n_heads=2, d_model=16, d_ff=32, max_len=12, head_dims=(32, 16))
        return cls(**{**base, **overrides})

    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        base = dict(n_layers=30, n_heads=16, d_model=1024, d_ff=4096, max_len=372, encoder_dropout=0.1)
        return cls(**{**base, **overrides})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**d)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.d_model, config.d_ff
    shapes: dict[str, tuple[int, ...]] = {
        "embeddings.token": (config.vocab_size, d),
        "embeddings.position": (config.max_len, d),
    }
    for i in range(config.n_layers):
        p = f"layers.{i}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{proj}"] = (d, d)
            shapes[p + f"attn.b{proj}"] = (d,)
        shapes[p + "ln1.gain"] = (d,)
        shapes[p + "ln1.bias"] = (d,)
        shapes[p + "ff.w1"] = (d, f)
        shapes[p + "ff.b1"] = (f,)
        shapes[p + "ff.w2"] = (f, d)
        shapes[p + "ff.b2"] = (d,)
        shapes[p + "ln2.gain"] = (d,)
        shapes[p + "ln2.bias"] = (d,)
    widths = (d, *config.head_dims, config.vocab_size)
    for j in range(3):
        shapes[f"head.{j}.weight"] = (widths[j], widths[j + 1])
        shapes[f"head.{j}.bias"] = (widths[j + 1],)
    return shapes


def init_parameters(config: ModelConfig, seed=0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    dtype = tc.get_default_dtype()
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, config.init_std, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return params


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]

    @classmethod
    def create(cls, config: ModelConfig, seed=0) -> "Model":
        return cls(config, init_parameters(config, seed))

    def check(self) -> None:
        expected = parameter_shapes(self.config)
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ConfigError(f"parameter set mismatch (missing={missing[:3]}, unexpected={extra[:3]})")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ConfigError(f"{name}: shape {self.params[name].shape}, config implies {shape}")

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def copy(self) -> "Model":
        return Model(self.config, {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k) for k, v in self.params.items()})


# ---------------------------------------------------------------- batches


@dataclass
class Batch:
    input_ids: np.ndarray  # [B, S]
    attention_mask: np.ndarray  # [B, S]
    label_ids: np.ndarray  # [B, S]

    @property
    def shape(self) -> tuple[int, int]:
        return self.input_ids.shape


def collate(examples: Sequence[MaskedExample], trim: bool = True) -> Batch:
    """Stack examples; with ``trim`` drop trailing columns that are padding for every row."""
    if not examples:
        raise ValueError("empty batch")
    ids = np.stack([e.input_ids for e in examples])
    att = np.stack([e.attention_mask for e in examples])
    lab = np.stack([e.label_ids for e in examples])
    if trim:
        width = int(att.sum(axis=1).max())
        ids, att, lab = ids[:, :width], att[:, :width], lab[:, :width]
    return Batch(ids, att, lab)


def _as_batch(data) -> Batch:
    if isinstance(data, Batch):
        return data
    if isinstance(data, MaskedExample):
        return collate([data], trim=False)
    return collate(list(data))


# ---------------------------------------------------------------- forward


@dataclass
class AttentionStack:
    """Attention of one example: ``weights[layer, head, query, key]``."""

    weights: np.ndarray
    attention_mask: np.ndarray

    @property
    def n_layers(self) -> int:
        return self.weights.shape[0]

    @property
    def n_heads(self) -> int:
        return self.weights.shape[1]

    def layer(self, index: int = -1) -> np.ndarray:
        return self.weights[index]


@dataclass
class EncoderOutput:
    hidden: list[Tensor]  # embeddings output followed by each layer's output
    attention: np.ndarray | None = None  # [L, B, H, S, S]
    attention_mask: np.ndarray | None = None

    @property
    def final(self) -> Tensor:
        return self.hidden[-1]

    def stack(self, index: int = 0) -> AttentionStack:
        if self.attention is None:
            raise ValueError("attention was not captured")
        return AttentionStack(self.attention[:, index], self.attention_mask[index])


def encoder_forward(model: Model, data, training: bool = False, capture_attention: bool = False, rng=None) -> EncoderOutput:
    cfg, p = model.config, model.params
    batch = _as_batch(data)
    bsz, seq = batch.shape
    if seq > cfg.max_len:
        raise ConfigError(f"sequence width {seq} exceeds max_len={cfg.max_len}")
    rng = np.random.default_rng(rng) if training else None
    key_mask = batch.attention_mask[:, None, None, :]
    h, dh = cfg.n_heads, cfg.d_head
    scale = 1.0 / math.sqrt(dh)

    x = tc.embedding(p["embeddings.token"], batch.input_ids) + tc.embedding(p["embeddings.position"], np.arange(seq))
    hidden = [x]
    captured = []
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."

        def heads(t: Tensor) -> Tensor:
            return t.reshape(bsz, seq, h, dh).transpose(0, 2, 1, 3)

        q = heads(tc.linear(x, p[pre + "attn.wq"], p[pre + "attn.bq"]))
        k = heads(tc.linear(x, p[pre + "attn.wk"], p[pre + "attn.bk"]))
        v = heads(tc.linear(x, p[pre + "attn.wv"], p[pre + "attn.bv"]))
        scores = tc.matmul(q, k.transpose(0, 1, 3, 2)) * scale
        attn = tc.softmax_rows(scores, key_mask)
        if capture_attention:
            captured.append(attn.data.copy())
        ctx = tc.matmul(attn, v).transpose(0, 2, 1, 3).reshape(bsz, seq, cfg.d_model)
        out = tc.linear(ctx, p[pre + "attn.wo"], p[pre + "attn.bo"])
        out = tc.dropout(out, cfg.encoder_dropout, training, rng)
        x = tc.layer_norm(x + out, p[pre + "ln1.gain"], p[pre + "ln1.bias"], cfg.layer_norm_eps)
        ff = tc.relu(tc.linear(x, p[pre + "ff.w1"], p[pre + "ff.b1"]))
        ff = tc.linear(ff, p[pre + "ff.w2"], p[pre + "ff.b2"])
        ff = tc.dropout(ff, cfg.encoder_dropout, training, rng)
        x = tc.layer_norm(x + ff, p[pre + "ln2.gain"], p[pre + "ln2.bias"], cfg.layer_norm_eps)
        hidden.append(x)
    attention = np.stack(captured) if capture_attention and captured else None
    return EncoderOutput(hidden, attention, batch.attention_mask)


def head_forward(model: Model, hidden: Tensor, training: bool = False, rng=None) -> Tensor:
    cfg, p = model.config, model.params
    if hidden.shape[-1] != p["head.0.weight"].shape[0]:
        raise ConfigError(f"head expects width {p['head.0.weight'].shape[0]}, got {hidden.shape[-1]}")
    rng = np.random.default_rng(rng) if training else None
    z = tc.relu(tc.linear(hidden, p["head.0.weight"], p["head.0.bias"]))
    z = tc.dropout(z, cfg.dropout, training, rng)
    z = tc.relu(tc.linear(z, p["head.1.weight"], p["head.1.bias"]))
    z = tc.dropout(z, cfg.dropout, training, rng)
    return tc.linear(z, p["head.2.weight"], p["head.2.bias"])


@dataclass
class ForwardResult:
    logits: Tensor
    labels: np.ndarray
    encoder: EncoderOutput


def forward(model: Model, data, training: bool = False, rng=None, supervised_only: bool = False, capture_attention: bool = False) -> ForwardResult:
    """Encoder plus head.

    With ``supervised_only`` the head runs on the non-IGNORE positions only and
    ``logits`` has shape ``[n_supervised, vocab]``; otherwise ``[B, S, vocab]``.
    """
    batch = _as_batch(data)
    rng = np.random.default_rng(rng) if training else None
    enc = encoder_forward(model, batch, training, capture_attention, rng)
    final = enc.final
    labels = batch.label_ids
    if supervised_only:
        where = np.nonzero(labels != IGNORE)
        final = tc.gather(final, where)
        labels = labels[where]
    return ForwardResult(head_forward(model, final, training, rng), labels, enc)


def masked_cross_entropy(logits: Tensor, label_ids) -> tuple[Tensor, int]:
    return tc.cross_entropy(logits, label_ids, IGNORE)


def masked_accuracy(logits, label_ids) -> float:
    scores = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.asarray(label_ids)
    sel = labels != IGNORE
    if not sel.any():
        raise ValueError("no supervised positions: every label is IGNORE")
    pred = scores.argmax(axis=-1)
    return float((pred[sel] == labels[sel]).mean())


def count_correct(logits, label_ids) -> tuple[int, int]:
    scores = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.asarray(label_ids)
    sel = labels != IGNORE
    return int((scores.argmax(axis=-1)[sel] == labels[sel]).sum()), int(sel.sum())
