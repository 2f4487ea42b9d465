"""Central finite-difference verification of the tape gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensorcore as tc
from .model import Model, ModelConfig, forward, masked_cross_entropy
from .tensorcore import Tensor
from .tokenizer import CLS_ID, IGNORE, MASK_ID, MaskedExample, VOCAB_SIZE


@dataclass
class ParamCheck:
    name: str
    size: int
    rel_error: float
    abs_error: float
    grad_norm: float
    kinks: int = 0  # elements skipped because a ReLU switched inside [x - h, x + h]
    below_floor: bool = False


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    dtype: str
    checks: list[ParamCheck] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        op = "<" if self.passed else ">="
        kinks = sum(c.kinks for c in self.checks)
        floor = sum(c.below_floor for c in self.checks)
        return (f"{verdict}, max rel err {self.max_rel_error:.3e} {op} tol {self.tolerance:g} "
                f"({len(self.checks)} tensors, {floor} below noise floor, {kinks} kink elements skipped, "
                f"{self.dtype}, h={self.step:g}, {self.seconds:.1f}s)")

    def csv(self) -> str:
        rows = ["name,size,rel_error,abs_error,grad_norm,kinks,below_floor"]
        rows += [f"{c.name},{c.size},{c.rel_error:.6e},{c.abs_error:.6e},{c.grad_norm:.6e},{c.kinks},{int(c.below_floor)}"
                 for c in self.checks]
        return "\n".join(rows) + "\n"


def noise_floor(size: int, loss: float, step: float, dtype, tolerance: float) -> float:
    """Smallest gradient norm that central differences resolve to ``tolerance``.

    Rounding perturbs each difference quotient by about ``eps * |loss| / h``.
    A tensor whose analytic and numeric norms both sit below the floor is
    compared against the floor instead, so an exactly-zero gradient (the key
    bias, for one) reads as a pass rather than as noise over zero.
    """
    return np.sqrt(size) * np.finfo(dtype).eps * max(abs(loss), 1.0) / (step * tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> float:
    """``|a - n| / max(|a|, |n|, floor)`` in the 2-norm over one tensor."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], step: float, tolerance: float) -> GradCheckReport:
    """Compare ``backward`` against central differences for every element of every tensor.

    Elements whose +h and -h evaluations see different ReLU on/off patterns
    straddle a kink, where the derivative does not exist; they are counted and
    left out of the comparison.
    """
    start = time.perf_counter()
    dtype = tc.get_default_dtype()
    report = GradCheckReport(tolerance, step, str(np.dtype(dtype)))
    if not params:
        return report
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    base_loss = float(loss.data)
    tc.backward(loss)
    for name, p in params.items():
        analytic = np.zeros(p.size) if p.grad is None else p.grad.astype(np.float64).reshape(-1)
        numeric = np.zeros(p.size)
        smooth = np.ones(p.size, dtype=bool)
        flat = p.data.reshape(-1)
        with tc.no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                with tc.record_relu_patterns() as up_pattern:
                    up = float(loss_fn().data)
                flat[i] = orig - step
                with tc.record_relu_patterns() as down_pattern:
                    down = float(loss_fn().data)
                flat[i] = orig
                numeric[i] = (up - down) / (2 * step)
                smooth[i] = all(np.array_equal(a, b) for a, b in zip(up_pattern, down_pattern))
        a, n = analytic[smooth], numeric[smooth]
        floor = noise_floor(max(int(smooth.sum()), 1), base_loss, step, dtype, tolerance)
        norm = max(np.linalg.norm(a), np.linalg.norm(n)) if a.size else 0.0
        report.checks.append(ParamCheck(
            name, p.size,
            relative_error(a, n, floor) if a.size else 0.0,
            float(np.abs(a - n).max()) if a.size else 0.0,
            float(norm),
            int((~smooth).sum()),
            bool(norm < floor),
        ))
    report.seconds = time.perf_counter() - start
    return report


def _random_examples(config: ModelConfig, rng: np.random.Generator, n: int = 2) -> list[MaskedExample]:
    examples = []
    for j in range(n):
        length = config.max_len - 1 - j * 2 if config.max_len > 4 else config.max_len - 1
        length = max(length, 2)
        ids = np.zeros(config.max_len, dtype=np.int64)
        ids[0] = CLS_ID
        ids[1 : length + 1] = rng.integers(5, VOCAB_SIZE, size=length)
        labels = np.full(config.max_len, IGNORE, dtype=np.int64)
        masked = rng.choice(np.arange(1, length + 1), size=min(2, length), replace=False)
        labels[masked] = ids[masked]
        ids[masked] = MASK_ID
        att = np.zeros(config.max_len, dtype=np.int8)
        att[: length + 1] = 1
        examples.append(MaskedExample(ids, labels, att, tuple(sorted(int(m) for m in masked)), f"gc{j}"))
    return examples


def grad_check(config: ModelConfig | None = None, tolerance: float | None = None, dtype=np.float32,
               seed: int = 0, step: float | None = None) -> GradCheckReport:
    """Finite-difference check of every parameter of a freshly initialised model.

    Dropout stays active, with the same mask on every evaluation.
    """
    config = config or ModelConfig.tiny()
    double = np.dtype(dtype) == np.float64
    if tolerance is None:
        tolerance = 1e-4 if double else 1e-2
    if step is None:
        step = 1e-5 if double else 1e-3
    with tc.default_dtype(dtype):
        # Larger init than training so that every sublayer carries signal.
        model = Model.create(config, seed)
        rng = np.random.default_rng(seed + 1)
        for name, p in model.params.items():
            if name.endswith(("bias", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
                p.data[...] = rng.normal(0, 0.1, p.shape)
            elif not name.endswith(".gain"):
                p.data[...] = rng.normal(0, 0.3, p.shape)
        examples = _random_examples(config, rng)

        def loss_fn() -> Tensor:
            out = forward(model, examples, training=True, rng=seed + 2, supervised_only=True)
            return masked_cross_entropy(out.logits, out.labels)[0]

        return check_gradients(loss_fn, model.params, step, tolerance)
