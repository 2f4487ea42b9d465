"""Adam + reduce-on-plateau training of the masked-residue task."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensorcore as tc
from .corpus import split_dataset
from .model import Model, ModelConfig, collate, count_correct, forward, masked_cross_entropy
from .tensorcore import Tensor
from .tokenizer import MaskedExample

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 8
    epochs: int = 30
    factor: float = 0.2
    patience: int = 10
    threshold: float = 1e-4
    monitor: str = "train_loss"
    split_ratio: float = 0.75
    seed: int = 0
    n_runs: int = 3
    freeze_encoder: bool = False

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not 0 < self.factor < 1:
            raise ValueError(f"scheduler factor must lie in (0, 1), got {self.factor}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1 or self.n_runs < 1 or self.patience < 1:
            raise ValueError("batch_size, n_runs and patience must be >= 1")
        if self.monitor not in ("train_loss", "test_loss"):
            raise ValueError(f"monitor must be train_loss or test_loss, got {self.monitor!r}")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {', '.join(sorted(unknown))}")
        return cls(**d)


# ---------------------------------------------------------------- optimiser


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, in place on ``params``; parameters without a gradient are skipped."""
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        elif m.shape != p.shape:
            raise ValueError(f"{name}: optimiser state shape {m.shape} does not match parameter {p.shape}")
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return state


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    lr: float
    factor: float = 0.2
    patience: int = 10
    threshold: float = 1e-4
    best: float = math.inf
    bad_epochs: int = 0

    def step(self, loss: float) -> float:
        if loss < self.best - self.threshold:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr *= self.factor
                self.bad_epochs = 0
        return self.lr


def plateau_step(scheduler: PlateauScheduler, epoch_loss: float) -> float:
    return scheduler.step(epoch_loss)


# ---------------------------------------------------------------- metrics


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    lr: float


@dataclass
class RunMetrics:
    run: int
    seed: int
    history: list[EpochMetrics]
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float


SUMMARY_FIELDS = ("train_loss", "test_loss", "train_acc", "test_acc")


@dataclass
class TrainResult:
    models: list[Model]
    runs: list[RunMetrics]
    n_train: int
    n_test: int

    @property
    def model(self) -> Model:
        return self.models[0]

    def summary(self) -> dict[str, tuple[float, float]]:
        """Mean and sample standard deviation (n - 1) of each final metric across runs."""
        out = {}
        for key in SUMMARY_FIELDS:
            values = np.array([getattr(r, key) for r in self.runs], dtype=np.float64)
            std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            out[key] = (float(values.mean()), std)
        return out

    def metrics_csv(self) -> str:
        rows = ["run,epoch,train_loss,train_acc"]
        for r in self.runs:
            rows += [f"{r.run},{e.epoch},{e.train_loss!r},{e.train_acc!r}" for e in r.history]
        return "\n".join(rows) + "\n"

    def summary_text(self) -> str:
        lines = [f"{k} {{mean: {m:.6f}, std: {s:.6f}}}" for k, (m, s) in self.summary().items()]
        lines.append(f"runs {len(self.runs)}, train {self.n_train}, test {self.n_test}")
        return "\n".join(lines) + "\n"


def evaluate(model: Model, examples: Sequence[MaskedExample], batch_size: int = 16) -> tuple[float, float]:
    """Token-weighted masked loss and accuracy, eval mode, no graph."""
    if not examples:
        raise ValueError("cannot evaluate on an empty dataset")
    total_loss = 0.0
    correct = 0
    total = 0
    with tc.no_grad():
        for i in range(0, len(examples), batch_size):
            out = forward(model, collate(examples[i : i + batch_size]), training=False, supervised_only=True)
            if out.labels.size == 0:
                continue
            loss, n = masked_cross_entropy(out.logits, out.labels)
            c, _ = count_correct(out.logits, out.labels)
            total_loss += float(loss.data) * n
            correct += c
            total += n
    if total == 0:
        raise ValueError("dataset has no supervised positions")
    return total_loss / total, correct / total


def _run_seeds(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init, train = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(train)


def train_run(model_config: ModelConfig, config: TrainConfig, train_set: Sequence[MaskedExample],
              test_set: Sequence[MaskedExample], run: int = 0,
              on_epoch: Callable[[int, EpochMetrics], None] | None = None) -> tuple[Model, RunMetrics]:
    seed = config.seed + run
    init_rng, rng = _run_seeds(seed)
    model = Model.create(model_config, init_rng)
    trainable = {k: p for k, p in model.params.items() if not (config.freeze_encoder and not k.startswith("head."))}
    state = AdamState()
    sched = PlateauScheduler(config.lr, config.factor, config.patience, config.threshold)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        correct = 0
        total = 0
        lr = sched.lr
        for start in range(0, len(order), config.batch_size):
            batch = collate([train_set[i] for i in order[start : start + config.batch_size]])
            out = forward(model, batch, training=True, rng=rng, supervised_only=True)
            if out.labels.size == 0:
                continue
            loss, n = masked_cross_entropy(out.logits, out.labels)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"run {run}, epoch {epoch}: loss is {value}")
            c, _ = count_correct(out.logits, out.labels)
            model.zero_grad()
            tc.backward(loss)
            grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
            adam_step(trainable, grads, state, lr, config.betas, config.eps)
            loss_sum += value * n
            correct += c
            total += n
        epoch_loss = loss_sum / max(total, 1)
        metrics = EpochMetrics(epoch, epoch_loss, correct / max(total, 1), lr)
        history.append(metrics)
        monitored = epoch_loss if config.monitor == "train_loss" else evaluate(model, test_set)[0]
        sched.step(monitored)
        log.debug("run %d epoch %d loss %.4f acc %.4f lr %.2e", run, epoch, epoch_loss, metrics.train_acc, lr)
        if on_epoch is not None:
            on_epoch(run, metrics)
    train_loss, train_acc = evaluate(model, train_set)
    test_loss, test_acc = evaluate(model, test_set)
    return model, RunMetrics(run, seed, history, train_loss, train_acc, test_loss, test_acc)


def train(model_config: ModelConfig, config: TrainConfig, dataset: Sequence[MaskedExample],
          on_epoch: Callable[[int, EpochMetrics], None] | None = None) -> TrainResult:
    """Split once with ``config.seed`` and train ``n_runs`` replicas seeded ``seed``, ``seed + 1``, ..."""
    train_set, test_set = split_dataset(list(dataset), config.split_ratio, config.seed)
    if not train_set or not test_set:
        raise ValueError(f"split of {len(dataset)} examples leaves an empty train or test set")
    models, runs = [], []
    for run in range(config.n_runs):
        model, metrics = train_run(model_config, config, train_set, test_set, run, on_epoch)
        log.info("run %d: train acc %.4f, test acc %.4f", run, metrics.train_acc, metrics.test_acc)
        models.append(model)
        runs.append(metrics)
    return TrainResult(models, runs, len(train_set), len(test_set))
