import numpy as np
import pytest
from hypothesis import given, strategies as st

from smre import tensor as T
from smre.errors import ContractError
from smre.optim import AdamState, adam_step, clip_global_norm
from smre.params import ModelParams


def _params(*values):
    return ModelParams({f"p{i}": T.Tensor(np.array(v, dtype=np.float64), requires_grad=True)
                        for i, v in enumerate(values)})


def test_zero_gradient_leaves_params():
    p = _params([1.0, -2.0])
    state = AdamState.zeros(p)
    adam_step(p, {"p0": np.zeros(2)}, state, lr=1e-2)
    np.testing.assert_array_equal(p["p0"].data, [1.0, -2.0])


@given(st.floats(1e-6, 1e3) | st.floats(-1e3, -1e-6), st.floats(1e-5, 1e-1))
def test_first_step_is_sign_step(g, lr):
    # m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps)
    p = _params([0.5])
    adam_step(p, {"p0": np.array([g])}, AdamState.zeros(p), lr=lr)
    expected = 0.5 - lr * g / (abs(g) + 1e-8)
    assert p["p0"].data[0] == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_constant_gradient_moves_monotonically():
    p = _params([0.0])
    state = AdamState.zeros(p)
    xs = [0.0]
    for _ in range(3):
        adam_step(p, {"p0": np.array([2.0])}, state, lr=0.1)
        xs.append(float(p["p0"].data[0]))
    assert all(b < a for a, b in zip(xs, xs[1:]))


def test_zero_lr_still_advances_moments():
    p = _params([1.0])
    state = AdamState.zeros(p)
    adam_step(p, {"p0": np.array([3.0])}, state, lr=0.0)
    assert p["p0"].data[0] == 1.0 and state.step == 1 and state.m["p0"][0] != 0


def test_shape_mismatch():
    p = _params([1.0, 2.0])
    state = AdamState({"p0": np.zeros(3)}, {"p0": np.zeros(3)})
    with pytest.raises(ContractError, match="p0"):
        adam_step(p, {"p0": np.zeros(2)}, state, lr=0.1)


def test_negative_lr():
    p = _params([1.0])
    with pytest.raises(ContractError):
        adam_step(p, {"p0": np.zeros(1)}, AdamState.zeros(p), lr=-1.0)


class TestClip:
    def test_under_threshold_untouched(self):
        g = {"a": np.array([3.0, 4.0])}
        out, norm = clip_global_norm(g, 10.0)
        assert norm == 5.0 and out is g

    def test_joint_rescale(self):
        out, norm = clip_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        assert norm == 5.0
        joint = np.sqrt(sum((v ** 2).sum() for v in out.values()))
        assert joint == pytest.approx(1.0, rel=1e-5)
        assert out["a"][0] / out["b"][0] == pytest.approx(0.75)

    def test_disabled(self):
        g = {"a": np.array([300.0])}
        assert clip_global_norm(g, 0)[0] is g
