# tests/test_learners.py
import numpy as np
import pytest

from labelteach.errors import ConfigError, ConstraintError, DimensionError
from labelteach.learners import (
    Learner,
    LearnerKind,
    LearnerParams,
    StepSchedule,
    augment,
    check_simplex,
    lr_grad,
    lr_loss,
    lsr_grad,
    lsr_loss,
    sgd_step,
)
from labelteach.numerics import SeededRng, finite_diff_grad, relative_error


def _label(learner: Learner, rng: SeededRng):
    if learner.kind == LearnerKind.LSR:
        return np.array([rng.normal()])
    if learner.kind == LearnerKind.LR:
        return np.array([1.0 if rng.uniform() > 0.5 else -1.0])
    # any real vector: teachers feed non-simplex labels too
    return rng.normal(size=learner.n_classes)


def _learners():
    return [
        Learner(LearnerKind.LSR, 4, lam=1e-2, bias=True),
        Learner(LearnerKind.LR, 4, lam=1e-2),
        Learner(LearnerKind.MULTICLASS, 4, n_classes=3, lam=1e-2, bias=True),
        Learner(LearnerKind.MLP2, 4, n_classes=3, hidden=6, lam=1e-2),
        Learner(LearnerKind.MLP2, 4, n_classes=2, hidden=3, lam=1e-2, activation="relu", reg_mlp=False),
    ]


@pytest.mark.parametrize("learner", _learners(), ids=lambda l: f"{l.kind.value}-{l.activation}")
def test_example_gradient_matches_finite_differences(learner):
    rng = SeededRng(11)
    tol = 1e-5 if learner.kind != LearnerKind.MLP2 else 1e-4
    for _ in range(20):
        w = rng.normal(size=learner.n_params)
        x = rng.normal(size=learner.dim)
        y = _label(learner, rng)
        numeric = finite_diff_grad(lambda v: learner.loss(v, x, y), w)
        assert relative_error(learner.grad(w, x, y), numeric) < tol


@pytest.mark.parametrize("learner", _learners(), ids=lambda l: f"{l.kind.value}-{l.activation}")
def test_grad_batch_rows_are_per_example_gradients(learner):
    rng = SeededRng(5)
    w = rng.normal(size=learner.n_params)
    X = rng.normal(size=(6, learner.dim))
    Y = np.vstack([_label(learner, rng) for _ in range(6)])
    if learner.is_scalar:
        Y = Y.ravel()
    G = learner.grad_batch(w, X, Y)
    for i in range(6):
        assert np.allclose(G[i], learner.grad(w, X[i], Y[i]), atol=1e-12)


@pytest.mark.parametrize("learner", _learners(), ids=lambda l: f"{l.kind.value}-{l.activation}")
def test_objective_grad_matches_finite_differences(learner):
    rng = SeededRng(8)
    w = rng.normal(size=learner.n_params, scale=0.5)
    X = rng.normal(size=(10, learner.dim))
    if learner.is_scalar:
        Y = np.where(rng.uniform(size=10) > 0.5, 1.0, -1.0)
    else:
        Y = np.eye(learner.n_classes)[rng.integers(learner.n_classes, size=10)]
    numeric = finite_diff_grad(lambda v: learner.objective(v, X, Y), w)
    assert relative_error(learner.objective_grad(w, X, Y), numeric) < 1e-5


def test_scalar_losses_closed_form():
    x, w = np.array([1.0, 2.0]), np.array([0.5, 0.5])
    assert lsr_loss(x, 1.0, w) == pytest.approx(0.125)
    assert lsr_grad(x, 1.0, w).tolist() == [0.5, 1.0]
    assert lr_loss(x, 1.0, np.zeros(2)) == pytest.approx(np.log(2.0))
    assert lr_grad(x, 1.0, np.zeros(2)) == pytest.approx([-0.5, -1.0])


def test_bias_coordinate_is_not_regularized():
    learner = Learner(LearnerKind.LSR, 3, lam=1.0, bias=True)
    assert learner.reg_mask.tolist() == [1.0, 1.0, 0.0]
    mc = Learner(LearnerKind.MULTICLASS, 3, n_classes=2, lam=1.0, bias=True)
    assert mc.reg_mask.reshape(3, 2)[-1].tolist() == [0.0, 0.0]


def test_augment_appends_one():
    assert augment([2.0, 3.0]).tolist() == [2.0, 3.0, 1.0]
    assert augment(np.zeros((2, 1))).tolist() == [[0.0, 1.0], [0.0, 1.0]]


def test_sgd_step_flat_and_blocks():
    p = LearnerParams(LearnerKind.LSR, w=np.array([1.0, 1.0]))
    assert sgd_step(p, np.array([2.0, 4.0]), 0.5).w.tolist() == [0.0, -1.0]

    V, W = np.ones((2, 3)), np.ones((3, 2))
    m = LearnerParams(LearnerKind.MLP2, V=V, W=W)
    flat = np.concatenate([np.full(6, 1.0), np.full(6, 2.0)])
    out = sgd_step(m, flat, 0.25)
    assert np.allclose(out.V, 0.75) and np.allclose(out.W, 0.5)
    assert np.array_equal(out.flat(), sgd_step(m, (np.full((2, 3), 1.0), np.full((3, 2), 2.0)), 0.25).flat())


def test_sgd_step_rejects_bad_input():
    p = LearnerParams(LearnerKind.LSR, w=np.zeros(2))
    with pytest.raises(ConfigError):
        sgd_step(p, np.zeros(2), 0.0)
    with pytest.raises(DimensionError):
        sgd_step(p, [np.zeros(3)], 0.1)


def test_step_matches_manual_update(mlp_learner):
    rng = SeededRng(2)
    w = rng.normal(size=mlp_learner.n_params)
    x, y = rng.normal(size=4), np.array([0.0, 1.0, 0.0])
    assert np.array_equal(mlp_learner.step(w, x, y, 0.1), w - 0.1 * mlp_learner.grad(w, x, y))
    params = sgd_step(mlp_learner.to_params(w), mlp_learner.grad(w, x, y), 0.1)
    assert np.allclose(params.flat(), mlp_learner.step(w, x, y, 0.1))


def test_step_schedule():
    assert StepSchedule("constant", 0.1).rate(50) == 0.1
    assert StepSchedule("inverse", 0.1, 1.0).rate(1) == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        StepSchedule("cosine", 0.1)
    with pytest.raises(ConfigError):
        StepSchedule("constant", -1.0)


def test_learner_validation():
    with pytest.raises(ConfigError):
        Learner(LearnerKind.MLP2, 3, n_classes=2, hidden=0)
    with pytest.raises(ConfigError):
        Learner(LearnerKind.MULTICLASS, 3, n_classes=1)
    with pytest.raises(ConfigError):
        Learner(LearnerKind.LSR, 3, lam=-1.0)
    with pytest.raises(DimensionError):
        Learner(LearnerKind.LSR, 3).split(np.zeros(4))


def test_check_simplex():
    check_simplex([0.25, 0.75])
    with pytest.raises(ConstraintError) as exc:
        check_simplex([1.5, -0.5])
    assert isinstance(exc.value, ValueError)
    with pytest.raises(ConstraintError):
        check_simplex([0.3, 0.3])


def test_accuracy_and_prediction(lr_learner, binary_pool):
    w = np.zeros(lr_learner.n_params)
    assert lr_learner.predict(w, binary_pool.X[0]) == pytest.approx(0.5)
    # P(+1) = 0.5 is predicted as +1 everywhere
    assert lr_learner.accuracy(w, binary_pool.X, binary_pool.Y) == pytest.approx(0.5)
