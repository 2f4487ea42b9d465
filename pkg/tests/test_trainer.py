import math

import numpy as np
import pytest

from gpcrbert.model import ModelConfig
from gpcrbert.tensorcore import Tensor
from gpcrbert.trainer import (
    AdamState,
    PlateauScheduler,
    TrainConfig,
    adam_step,
    evaluate,
    plateau_step,
    train,
    train_run,
)

TINY = ModelConfig.tiny(max_len=52)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(factor=1.0)
    with pytest.raises(ValueError):
        TrainConfig(monitor="val")
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 1})
    cfg = TrainConfig(batch_size=4, betas=(0.8, 0.9))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- Adam


def test_adam_first_step_magnitude_is_lr():
    p = {"w": Tensor(np.array([1.0, -2.0]), dtype=np.float64)}
    adam_step(p, {"w": np.array([3.0, -3.0])}, AdamState(), lr=1e-3)
    np.testing.assert_allclose(p["w"].data, [1.0 - 1e-3, -2.0 + 1e-3], rtol=1e-9)


def test_adam_zero_gradient_is_no_move():
    p = {"w": Tensor(np.array([0.5]), dtype=np.float64)}
    state = adam_step(p, {"w": np.zeros(1)}, AdamState(), lr=1e-2)
    assert p["w"].data[0] == 0.5
    assert state.t == 1


def test_adam_decreases_quadratic():
    theta = Tensor(np.array([1.0]), dtype=np.float64)
    state = AdamState()
    values = [1.0]
    for _ in range(10):
        adam_step({"t": theta}, {"t": 2 * theta.data}, state, lr=0.05)
        values.append(float(theta.data[0] ** 2))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": Tensor(np.zeros(2))}, {"w": np.zeros(3)}, AdamState(), lr=1e-3)


# ---------------------------------------------------------------- scheduler


def test_plateau_single_decay():
    s = PlateauScheduler(1e-3, patience=3)
    lrs = [plateau_step(s, 1.0) for _ in range(4)]
    assert lrs[:3] == [1e-3] * 3
    assert lrs[3] == pytest.approx(2e-4)


def test_plateau_decreasing_losses_never_decay():
    s = PlateauScheduler(1e-3, patience=3)
    assert {s.step(1.0 - 0.01 * i) for i in range(50)} == {1e-3}


def test_plateau_two_plateaus_compose():
    s = PlateauScheduler(1e-3, patience=3)
    for _ in range(7):
        s.step(1.0)
    assert s.lr == pytest.approx(4e-5)


def test_plateau_threshold_is_absolute():
    s = PlateauScheduler(1.0, patience=1, threshold=1e-4)
    s.step(1.0)
    s.step(1.0 - 5e-5)  # below threshold: not an improvement
    assert s.lr == pytest.approx(0.2)


# ---------------------------------------------------------------- loop


def test_epochs_zero_gives_untrained_model(npxxy_examples):
    cfg = TrainConfig(epochs=0, n_runs=1)
    model, metrics = train_run(TINY, cfg, npxxy_examples[:8], npxxy_examples[8:])
    assert metrics.history == []
    assert 0 <= metrics.test_acc <= 1


def test_training_is_deterministic(npxxy_examples):
    cfg = TrainConfig(epochs=3, n_runs=2, batch_size=4)
    a = train(TINY, cfg, npxxy_examples)
    b = train(TINY, cfg, npxxy_examples)
    assert a.metrics_csv() == b.metrics_csv()
    for k in a.model.params:
        np.testing.assert_array_equal(a.model.params[k].data, b.model.params[k].data)


def test_runs_use_consecutive_seeds(npxxy_examples):
    result = train(TINY, TrainConfig(epochs=1, n_runs=3, seed=5), npxxy_examples)
    assert [r.seed for r in result.runs] == [5, 6, 7]
    assert result.n_train == 12 and result.n_test == 4


def test_test_split_never_updated(npxxy_examples):
    before = [ex.input_ids.copy() for ex in npxxy_examples]
    train(TINY, TrainConfig(epochs=1, n_runs=1), npxxy_examples)
    assert all(np.array_equal(a, ex.input_ids) for a, ex in zip(before, npxxy_examples))


def test_summary_uses_sample_std(npxxy_examples):
    result = train(TINY, TrainConfig(epochs=1, n_runs=3), npxxy_examples)
    accs = np.array([r.test_acc for r in result.runs])
    mean, std = result.summary()["test_acc"]
    assert mean == pytest.approx(accs.mean())
    assert std == pytest.approx(accs.std(ddof=1))
    assert "test_acc {mean:" in result.summary_text()


def test_metrics_csv_layout(npxxy_examples):
    result = train(TINY, TrainConfig(epochs=2, n_runs=2), npxxy_examples)
    lines = result.metrics_csv().splitlines()
    assert lines[0] == "run,epoch,train_loss,train_acc"
    assert len(lines) == 1 + 2 * 2
    assert lines[1].startswith("0,1,")


def test_evaluate_zero_head_is_log30(npxxy_examples):
    from gpcrbert.model import Model

    model = Model.create(TINY, 0)
    for k, p in model.params.items():
        if k.startswith("head."):
            p.data[...] = 0
    loss, _ = evaluate(model, npxxy_examples)
    assert loss == pytest.approx(math.log(30), abs=1e-5)
    assert evaluate(model, npxxy_examples) == evaluate(model, npxxy_examples)


def test_evaluate_empty_errors():
    from gpcrbert.model import Model

    with pytest.raises(ValueError):
        evaluate(Model.create(TINY, 0), [])


def test_lr_trace_non_increasing_by_factor(npxxy_examples):
    cfg = TrainConfig(epochs=12, n_runs=1, patience=1, lr=1e-3)
    _, metrics = train_run(TINY, cfg, npxxy_examples, npxxy_examples)
    lrs = [e.lr for e in metrics.history]
    for a, b in zip(lrs, lrs[1:]):
        assert b == a or b == pytest.approx(a * 0.2)
