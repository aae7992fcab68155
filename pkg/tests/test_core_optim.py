import numpy as np
import pytest

from app.core import tensor as T
from app.core.errors import StateError
from app.core.optim import Adam, AdamState, adam_step
from app.core.tensor import Tensor


def test_zero_gradient_leaves_parameter_unchanged():
    param = Tensor([1.5, -2.0], requires_grad=True)
    param.grad = np.zeros(2)
    adam_step([param], [AdamState.for_shape(param.shape, 0.1)])
    np.testing.assert_array_equal(param.data, [1.5, -2.0])


def test_first_step_moves_by_learning_rate():
    param = Tensor([0.0], requires_grad=True)
    param.grad = np.ones(1)
    state = AdamState.for_shape(param.shape, 0.1)
    adam_step([param], [state])
    assert param.data[0] == pytest.approx(-0.1, rel=1e-6)
    assert state.step == 1
    assert param.grad is None


def test_missing_gradient_is_state_error():
    param = Tensor([1.0], requires_grad=True)
    with pytest.raises(StateError):
        adam_step([param], [AdamState.for_shape(param.shape)])


def test_state_rejects_bad_hyperparameters():
    with pytest.raises(ValueError):
        AdamState.for_shape((2,), beta1=1.0)
    with pytest.raises(ValueError):
        AdamState.for_shape((2,), epsilon=0.0)


def test_quadratic_converges():
    w = Tensor([0.0], requires_grad=True)
    optimizer = Adam([w], learning_rate=0.05)
    for _ in range(2000):
        T.sum(T.square(w - 3.0)).backward()
        optimizer.step()
    assert abs(w.data[0] - 3.0) < 0.01


def test_per_row_learning_rate():
    state = AdamState.for_shape((2, 1), learning_rate=np.array([[0.1], [0.0]]))
    step = state.direction(np.ones((2, 1)))
    assert step[0, 0] == pytest.approx(0.1, rel=1e-6)
    assert step[1, 0] == 0.0


def test_rejected_rows_keep_their_moments():
    state = AdamState.for_shape((2, 1), 0.1, step=np.zeros((2, 1), dtype=np.int64))
    update, advanced = state.propose(np.ones((2, 1)))
    np.testing.assert_allclose(update, 0.1, rtol=1e-6)
    np.testing.assert_array_equal(state.first_moment, 0.0)

    state.accept(advanced, np.array([True, False]))
    np.testing.assert_array_equal(state.step.ravel(), [1, 0])
    assert state.first_moment[1, 0] == 0.0
    assert state.first_moment[0, 0] == pytest.approx(0.1)

    # The rejected row re-proposes a full first step
    update, _ = state.propose(np.ones((2, 1)))
    assert update[1, 0] == pytest.approx(0.1, rel=1e-6)


def test_row_acceptance_needs_row_steps():
    state = AdamState.for_shape((2, 1), 0.1)
    _, advanced = state.propose(np.ones((2, 1)))
    with pytest.raises(StateError):
        state.accept(advanced, np.array([True, False]))
