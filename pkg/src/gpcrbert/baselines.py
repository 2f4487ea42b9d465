"""One-vs-rest linear SVM on one-hot token features, trained with Pegasos."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .tokenizer import TOKENS, VOCAB_SIZE, MaskedExample


def featurize(example: MaskedExample) -> np.ndarray:
    """Concatenated one-hot of every input id, ``VOCAB_SIZE`` slots per position."""
    ids = np.asarray(example.input_ids)
    x = np.zeros((ids.size, VOCAB_SIZE))
    x[np.arange(ids.size), ids] = 1.0
    return x.reshape(-1)


def svm_instances(examples: Sequence[MaskedExample], max_len: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One instance per masked position.

    The token features are followed by a one-hot tag of the target position,
    so the two NPxxY masks of a sequence become distinguishable instances.
    """
    if not examples:
        raise ValueError("no examples")
    max_len = max_len or len(examples[0].input_ids)
    rows, labels = [], []
    for ex in examples:
        if len(ex.input_ids) != max_len:
            raise ValueError(f"{ex.source_id}: encoded length {len(ex.input_ids)} != {max_len}")
        base = featurize(ex)
        for pos in ex.mask_positions:
            tag = np.zeros(max_len)
            tag[pos] = 1.0
            rows.append(np.concatenate([base, tag]))
            labels.append(int(ex.label_ids[pos]))
    return np.stack(rows), np.asarray(labels, dtype=np.int64)


@dataclass
class SvmModel:
    classes: np.ndarray  # sorted vocab ids, one row of ``weights`` each
    weights: np.ndarray  # [n_classes, n_features]
    bias: np.ndarray  # [n_classes]
    lam: float
    objective: list[tuple[int, float]] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"feature length {X.shape[1]} does not match the model's {self.n_features}")
        return X @ self.weights.T + self.bias


def svm_objective(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    """Per-class ``lam/2 |(w, b)|^2 + mean hinge``; ``Y`` is [n_classes, n] in {-1, +1}."""
    margins = Y * (W @ X.T + b[:, None])
    hinge = np.maximum(0.0, 1.0 - margins).mean(axis=1)
    return 0.5 * lam * ((W * W).sum(axis=1) + b * b) + hinge


def svm_train(X, y, lam: float = 1e-4, steps: int = 20000, seed: int = 0, batch_size: int | None = 1,
              project: bool = True, track_every: int = 1000) -> SvmModel:
    """Pegasos: step ``t`` moves along the subgradient of a sampled batch with rate ``1/(lam t)``.

    The bias is an extra, regularised, constant-1 feature.  ``batch_size=None``
    uses the whole set every step, which makes the run deterministic in the
    objective alone.  Every class sees the same sample sequence.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"features {X.shape} and labels {y.shape} do not line up")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("SVM training needs at least two distinct labels")
    if lam <= 0 or steps < 1:
        raise ValueError("lam must be positive and steps >= 1")
    n = len(X)
    Xa = np.hstack([X, np.ones((n, 1))])
    Y = np.where(y[None, :] == classes[:, None], 1.0, -1.0)
    # W = scale[:, None] * V, with |V_c|^2 tracked incrementally, so a step
    # only touches the columns where the sampled rows are nonzero.
    V = np.zeros((classes.size, Xa.shape[1]))
    scale = np.ones(classes.size)
    sq_norm = np.zeros(classes.size)
    rng = np.random.default_rng(seed)
    radius_sq = 1.0 / lam
    trace = []
    for t in range(1, steps + 1):
        idx = np.arange(n) if batch_size is None else rng.integers(n, size=batch_size)
        Xb, Yb = Xa[idx], Y[:, idx]
        cols = np.flatnonzero(Xb.any(axis=0))
        Xs = Xb[:, cols]
        VX = V[:, cols] @ Xs.T
        violated = (Yb * scale[:, None] * VX) < 1.0
        eta = 1.0 / (lam * t)
        shrink = 1.0 - eta * lam
        if shrink == 0.0:  # first step at t = 1: W restarts from the subgradient alone
            V[:] = 0.0
            sq_norm[:] = 0.0
            VX[:] = 0.0
            scale[:] = 1.0
        else:
            scale *= shrink
        B = (eta / len(idx)) * (violated * Yb) / scale[:, None]
        sq_norm += 2.0 * (B * VX).sum(axis=1) + np.einsum("ci,ij,cj->c", B, Xs @ Xs.T, B)
        V[:, cols] += B @ Xs
        if project:
            w_sq = scale**2 * np.maximum(sq_norm, 0.0)
            scale *= np.where(w_sq > radius_sq, np.sqrt(radius_sq / np.maximum(w_sq, 1e-300)), 1.0)
        if scale.min() < 1e-100:  # fold the scale back in before it underflows
            V *= scale[:, None]
            sq_norm *= scale**2
            scale[:] = 1.0
        if track_every and t % track_every == 0:
            W = scale[:, None] * V
            trace.append((t, float(svm_objective(W[:, :-1], W[:, -1], X, Y, lam).sum())))
    W = scale[:, None] * V
    return SvmModel(classes, W[:, :-1].copy(), W[:, -1].copy(), lam, trace)


def svm_predict(model: SvmModel, X) -> np.ndarray:
    """Highest-scoring class per row; ties go to the lower vocab id."""
    return model.classes[model.scores(X).argmax(axis=1)]


def majority_baseline(train_labels, test_labels) -> tuple[int, float]:
    """Most frequent training label (lowest id on ties) and its accuracy on ``test_labels``."""
    values, counts = np.unique(np.asarray(train_labels), return_counts=True)
    majority = int(values[counts.argmax()])
    return majority, float((np.asarray(test_labels) == majority).mean())


def save_svm(model: SvmModel, path) -> None:
    config = {"lam": model.lam, "classes": [int(c) for c in model.classes],
              "class_tokens": [TOKENS[c] for c in model.classes]}
    write_checkpoint({"svm.weights": model.weights, "svm.bias": model.bias}, config, path, kind="svm")


def load_svm(path) -> SvmModel:
    ckpt = read_checkpoint(path)
    if ckpt.kind != "svm":
        raise CheckpointError(f"{path}: holds a {ckpt.kind!r} container, not an SVM")
    return SvmModel(np.asarray(ckpt.config["classes"], dtype=np.int64),
                    ckpt.tensors["svm.weights"].astype(np.float64),
                    ckpt.tensors["svm.bias"].astype(np.float64),
                    float(ckpt.config["lam"]))
