import numpy as np
import pytest
from geotrack.core import AdamState, Module, Parameter, adam_step, global_grad_norm, parameter_norm
from geotrack.errors import DataError, ShapeError


class TwoLayer(Module):
    def __init__(self):
        super().__init__()
        self.first = Parameter(np.ones((2, 3)))
        self.blocks = [Parameter(np.zeros(3)), Parameter(np.full(3, 2.0))]
        self.register_buffer("running", np.zeros(3))


def test_adam_first_step_moves_by_lr():
    p = Parameter(np.array([1.0]))
    state = AdamState(lr=0.1)
    adam_step({"p": p}, state, {"p": np.array([1.0])})
    np.testing.assert_allclose(p.data, [0.9], atol=1e-6)
    assert state.step == 1


def test_adam_constant_gradient_keeps_step_size():
    p = Parameter(np.array([0.0]))
    state = AdamState(lr=0.01)
    for _ in range(5):
        adam_step({"p": p}, state, {"p": np.array([2.0])})
    np.testing.assert_allclose(p.data, [-0.05], atol=1e-5)


def test_adam_skips_frozen_and_missing_gradients():
    live, frozen, idle = Parameter([1.0]), Parameter([1.0]), Parameter([1.0])
    frozen.requires_grad = False
    frozen.grad = np.array([1.0], dtype=np.float32)
    live.grad = np.array([1.0], dtype=np.float32)
    adam_step({"live": live, "frozen": frozen, "idle": idle}, AdamState(lr=0.5))
    assert live.data[0] < 1.0
    assert frozen.data[0] == 1.0
    assert idle.data[0] == 1.0


def test_adam_rejects_mismatched_gradient():
    p = Parameter(np.zeros(3))
    with pytest.raises(ShapeError):
        adam_step({"p": p}, AdamState(), {"p": np.zeros(2)})


def test_adam_state_round_trip():
    p = Parameter(np.zeros(2))
    state = AdamState()
    adam_step({"p": p}, state, {"p": np.array([1.0, -1.0])})
    restored = AdamState()
    restored.load_state_dict(state.state_dict(), state.step)
    assert restored.step == 1
    np.testing.assert_array_equal(restored.m["p"], state.m["p"])
    np.testing.assert_array_equal(restored.v["p"], state.v["p"])


def test_global_grad_norm():
    a, b = Parameter(np.zeros(2)), Parameter(np.zeros(1))
    a.grad = np.array([3.0, 0.0], dtype=np.float32)
    b.grad = np.array([4.0], dtype=np.float32)
    assert global_grad_norm({"a": a, "b": b}) == pytest.approx(5.0)


def test_named_parameters_walk_lists():
    names = [name for name, _ in TwoLayer().named_parameters()]
    assert names == ["first", "blocks.0", "blocks.1"]


def test_freeze_and_unfreeze():
    model = TwoLayer()
    model.first.grad = np.ones((2, 3), dtype=np.float32)
    assert model.freeze().frozen
    assert model.first.grad is None
    assert not model.unfreeze().frozen


def test_train_eval_propagates():
    model = TwoLayer()
    model.eval()
    assert all(not m.training for _, m in model.named_modules())
    model.train()
    assert model.training


def test_state_dict_round_trip_includes_buffers():
    model = TwoLayer()
    model.running[:] = 7.0
    state = model.state_dict()
    assert set(state) == {"first", "blocks.0", "blocks.1", "running"}
    other = TwoLayer()
    assert other.load_state_dict(state) == []
    np.testing.assert_array_equal(other.running, np.full(3, 7.0))


def test_load_state_dict_strict_and_lenient():
    state = TwoLayer().state_dict()
    del state["blocks.1"]
    with pytest.raises(DataError):
        TwoLayer().load_state_dict(state)
    assert TwoLayer().load_state_dict(state, strict=False) == ["blocks.1"]


def test_load_state_dict_rejects_wrong_shape():
    state = TwoLayer().state_dict()
    state["first"] = np.zeros((3, 2))
    with pytest.raises(ShapeError):
        TwoLayer().load_state_dict(state)


def test_parameter_norm_filters_by_name():
    model = TwoLayer()
    assert parameter_norm(model, include="blocks") == pytest.approx(np.sqrt(12.0))
    assert parameter_norm(None) == 0.0
