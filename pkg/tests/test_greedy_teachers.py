# tests/test_greedy_teachers.py
import numpy as np
import pytest
from scipy.special import expit

from labelteach.errors import (
    ConfigError,
    ConstraintError,
    DataFormatError,
    DegenerateError,
    SingularHessianError,
)
from labelteach.greedy_teachers import (
    CallableObjective,
    LabelConstraint,
    LsrPoolObjective,
    armijo_condition,
    armijo_teacher,
    discrepancy_G,
    et_gain_teacher,
    g_scalar,
    g_vector,
    gain_label,
    imt_select,
    magnitude_radius_from_labels,
    mixed_teach_step,
    mlp_label_objective,
    mlp_quadratic,
    multiclass_quadratic,
    newton_last_teacher,
    synth_label,
    synth_label_lr,
    synth_label_lsr,
    synth_label_mlp,
    synth_label_vector,
)
from labelteach.data import gen_linreg
from labelteach.learners import Learner, LearnerKind, lr_grad, lsr_grad
from labelteach.numerics import SeededRng

ETA = 1e-3


def _G(learner, x, y, w, w_star, eta=ETA) -> float:
    return discrepancy_G(x, y, w, w_star, eta, learner).G


# ---------------------------
# discrepancy
# ---------------------------

def test_discrepancy_split(lsr_learner):
    rng = SeededRng(0)
    x, w, ws = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
    G, T1, T2 = discrepancy_G(x, 0.7, w, ws, 0.1, lsr_learner)
    d = w - ws
    assert G == pytest.approx(float(d @ d) + 0.01 * T1 - 0.2 * T2, rel=1e-12)


# ---------------------------
# scalar labels
# ---------------------------

def test_closed_form_lsr_label_minimizes_discrepancy():
    rng = SeededRng(1)
    learner = Learner(LearnerKind.LSR, 4, lam=5e-5, bias=True)
    h = 1.0 / ETA
    for _ in range(1000):
        x, w, ws = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        y = synth_label_lsr(x, w, ws, ETA, learner.lam, learner.reg_mask)
        g0 = _G(learner, x, y, w, ws)
        up, down = _G(learner, x, y + h, w, ws) - g0, _G(learner, x, y - h, w, ws) - g0
        # G is a parabola in y: equal rises on both sides of the vertex
        assert up > 0 and down > 0
        assert up == pytest.approx(down, rel=1e-6)


def _grid_argmin(phi, lo, hi, step=1e-4, points=2001):
    """Zooming grid search for a convex phi evaluated on whole grids."""
    while True:
        grid = np.linspace(lo, hi, points)
        values = phi(grid)
        k = int(np.argmin(values))
        if grid[1] - grid[0] <= step:
            return float(grid[k]), float(values[k])
        lo, hi = grid[max(k - 2, 0)], grid[min(k + 2, points - 1)]


def test_closed_form_lsr_label_matches_a_grid_search():
    rng = SeededRng(11)
    learner = Learner(LearnerKind.LSR, 4, lam=5e-5, bias=True)
    mask = learner.reg_mask
    for _ in range(1000):
        x, w, ws = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)

        def G(ys):
            steps = w[None, :] - ETA * (np.outer(x @ w - ys, x) + learner.lam * mask * w)
            return np.sum((steps - ws) ** 2, axis=1)

        y = synth_label_lsr(x, w, ws, ETA, learner.lam, mask)
        assert float(G(np.array([y]))[0]) == pytest.approx(_G(learner, x, y, w, ws), rel=1e-12)
        y_grid, g_grid = _grid_argmin(G, -1e7, 1e7)
        g_closed = float(G(np.array([y]))[0])
        assert g_closed <= g_grid + 1e-12 * (1.0 + g_grid)
        assert abs(g_closed - g_grid) <= 1e-5
        assert abs(y - y_grid) <= 1e-3 * max(1.0, abs(y))


def test_lsr_label_degenerate_feature():
    with pytest.raises(DegenerateError):
        synth_label_lsr(np.zeros(3), np.ones(3), np.zeros(3), ETA)


def test_lsr_magnitude_label_is_clipped_around_prediction(lsr_learner):
    rng = SeededRng(2)
    c = LabelConstraint.magnitude(0.25)
    for _ in range(50):
        x, w, ws = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
        y = float(synth_label(x, 0.0, w, ws, ETA, lsr_learner, c)[0])
        free = synth_label_lsr(x, w, ws, ETA, lsr_learner.lam, lsr_learner.reg_mask)
        m = float(x @ w)
        assert abs(y - m) <= 0.25 + 1e-12
        assert y == pytest.approx(float(np.clip(free, m - 0.25, m + 0.25)))


def test_lsr_rejects_classification_constraints(lsr_learner):
    x = np.ones(4)
    with pytest.raises(ConstraintError):
        synth_label(x, 0.0, np.zeros(4), np.ones(4), ETA, lsr_learner, LabelConstraint.onehot())


def test_magnitude_radius_from_labels():
    assert magnitude_radius_from_labels(np.eye(2), [1.0, -3.0], np.zeros(2)) == 3.0
    with pytest.raises(DataFormatError):
        magnitude_radius_from_labels(np.zeros((0, 2)), np.zeros(0), np.zeros(2))


def test_lr_labels_under_every_constraint(lr_learner):
    rng = SeededRng(3)
    lam, mask = lr_learner.lam, lr_learner.reg_mask
    for _ in range(30):
        x, w, ws = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
        yt = 1.0 if rng.uniform() > 0.5 else -1.0

        def G(y):
            return _G(lr_learner, x, y, w, ws)

        y_nc = synth_label_lr(x, w, ws, ETA, None, yt, lam, mask)
        assert G(y_nc) <= G(yt) + 1e-12

        y_oh = synth_label_lr(x, w, ws, ETA, LabelConstraint.onehot(), yt, lam, mask)
        assert y_oh in (1.0, -1.0)
        assert G(y_oh) <= min(G(1.0), G(-1.0)) + 1e-12

        y_sx = synth_label_lr(x, w, ws, ETA, LabelConstraint.simplex(), yt, lam, mask)
        assert -1.0 <= y_sx <= 1.0
        assert G(y_sx) <= G(yt) + 1e-12

        y_mg = synth_label_lr(x, w, ws, ETA, LabelConstraint.magnitude(0.3), yt, lam, mask)
        center = 2.0 * float(expit(x @ w)) - 1.0
        assert abs(y_mg - center) <= 0.3 + 1e-9


def test_ground_truth_anchor_needs_the_label(lr_learner):
    c = LabelConstraint.magnitude(0.5, anchor="ground_truth")
    with pytest.raises(ConstraintError):
        synth_label_lr(np.ones(3), np.zeros(3), np.ones(3), ETA, c, None)


# ---------------------------
# vector labels
# ---------------------------

def _mc(K=3):
    return Learner(LearnerKind.MULTICLASS, 3, n_classes=K, lam=1e-2, bias=True)


def test_multiclass_quadratic_matches_direct_discrepancy():
    learner = _mc()
    rng = SeededRng(4)
    for _ in range(20):
        w, ws, x = rng.normal(size=9), rng.normal(size=9), rng.normal(size=3)
        (W,), (Ws,) = learner.split(w), learner.split(ws)
        quad = multiclass_quadratic(x, W, Ws, 0.1, learner.lam, learner.reg_mask.reshape(W.shape))
        y = rng.normal(size=3)
        assert quad.value(y) == pytest.approx(_G(learner, x, y, w, ws, 0.1), rel=1e-10)


def test_mlp_quadratic_matches_direct_objective():
    rng = SeededRng(5)
    for _ in range(20):
        V, W = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        Vs, Ws = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        x, y = rng.normal(size=4), rng.normal(size=3)
        quad = mlp_quadratic(x, V, W, Vs, Ws, 0.05, beta=0.7, lam=1e-2)
        direct = mlp_label_objective(y, x, V, W, Vs, Ws, 0.05, beta=0.7, lam=1e-2)
        assert quad.value(y) == pytest.approx(direct, rel=1e-10)


def test_onehot_label_equals_enumeration():
    learner = _mc()
    rng = SeededRng(6)
    eye = np.eye(3)
    for _ in range(200):
        w, ws, x = rng.normal(size=9), rng.normal(size=9), rng.normal(size=3)
        y = synth_label_vector(x, w, ws, 0.1, learner, LabelConstraint.onehot())
        best = int(np.argmin([_G(learner, x, eye[k], w, ws, 0.1) for k in range(3)]))
        assert np.array_equal(y, eye[best])


def test_mlp_onehot_label_equals_enumeration():
    rng = SeededRng(7)
    eye = np.eye(3)
    for _ in range(50):
        V, W = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        Vs, Ws = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
        x = rng.normal(size=4)
        y = synth_label_mlp(x, V, W, Vs, Ws, 0.1, beta=1.0, constraint=LabelConstraint.onehot())
        values = [mlp_label_objective(eye[k], x, V, W, Vs, Ws, 0.1, beta=1.0) for k in range(3)]
        assert np.array_equal(y, eye[int(np.argmin(values))])


def test_mlp_dispatch_matches_the_two_layer_solver():
    learner = Learner(LearnerKind.MLP2, 4, n_classes=3, hidden=5, lam=1e-2)
    rng = SeededRng(17)
    w, ws, x = rng.normal(size=learner.n_params), rng.normal(size=learner.n_params), rng.normal(size=4)
    V, W = learner.split(w)
    Vs, Ws = learner.split(ws)
    for beta in (0.0, 1.0, 50.0):
        y = synth_label(x, np.eye(3)[0], w, ws, 0.1, learner, beta=beta)
        ref = synth_label_mlp(x, V, W, Vs, Ws, 0.1, beta=beta, lam=1e-2)
        assert np.allclose(y, ref)
    assert not np.allclose(synth_label(x, np.eye(3)[0], w, ws, 0.1, learner, beta=0.0),
                           synth_label(x, np.eye(3)[0], w, ws, 0.1, learner, beta=50.0))


def test_simplex_label_is_feasible_and_beats_ground_truth():
    learner = _mc()
    rng = SeededRng(8)
    for _ in range(1000):
        w, ws, x = rng.normal(size=9), rng.normal(size=9), rng.normal(size=3)
        yt = np.eye(3)[rng.integers(3)]
        y = synth_label_vector(x, w, ws, 0.1, learner, LabelConstraint.simplex(), yt)
        assert y.sum() == pytest.approx(1.0, abs=1e-9)
        assert y.min() >= -1e-12
        assert _G(learner, x, y, w, ws, 0.1) <= _G(learner, x, yt, w, ws, 0.1) + 1e-10


def test_magnitude_label_stays_in_ball():
    learner = _mc()
    rng = SeededRng(9)
    for p in (1.0, 2.0, np.inf):
        c = LabelConstraint.magnitude(2.0, p=p)
        for _ in range(30):
            w, ws, x = rng.normal(size=9), rng.normal(size=9), rng.normal(size=3)
            yt = np.eye(3)[rng.integers(3)]
            y = synth_label_vector(x, w, ws, 0.1, learner, c, yt)
            probs = learner.predict(w, x)
            assert np.linalg.norm(y - probs, ord=p) <= 2.0 + 1e-9
            if c.in_ball(yt, probs):
                assert _G(learner, x, y, w, ws, 0.1) <= _G(learner, x, yt, w, ws, 0.1) + 1e-10


def test_unconstrained_vector_label_is_the_global_minimizer():
    learner = _mc()
    rng = SeededRng(10)
    w, ws, x = rng.normal(size=9), rng.normal(size=9), rng.normal(size=3)
    y = synth_label_vector(x, w, ws, 0.1, learner)
    g = _G(learner, x, y, w, ws, 0.1)
    for _ in range(50):
        assert g <= _G(learner, x, rng.normal(size=3, scale=3.0), w, ws, 0.1) + 1e-10


def test_vector_labels_need_softmax_learner(lsr_learner):
    with pytest.raises(ConfigError):
        synth_label_vector(np.ones(4), np.zeros(4), np.ones(4), ETA, lsr_learner)


# ---------------------------
# selection / mixed
# ---------------------------

def test_imt_select_picks_lowest_discrepancy(lsr_pool, lsr_learner):
    rng = SeededRng(11)
    w, ws = rng.normal(size=4), rng.normal(size=4)
    i, g = imt_select(lsr_pool, w, ws, 0.05, lsr_learner)
    Gs = [_G(lsr_learner, lsr_pool.X[j], lsr_pool.Y[j], w, ws, 0.05) for j in range(len(lsr_pool))]
    assert Gs[i] == pytest.approx(min(Gs), rel=1e-12)
    assert g == pytest.approx(min(Gs), rel=1e-12)


def test_imt_subsample_needs_rng(lsr_pool, lsr_learner):
    w, ws = np.zeros(4), np.ones(4)
    with pytest.raises(ConfigError):
        imt_select(lsr_pool, w, ws, ETA, lsr_learner, subsample=10)
    i, _ = imt_select(lsr_pool, w, ws, ETA, lsr_learner, subsample=10, rng=SeededRng(0))
    assert 0 <= i < len(lsr_pool)


def test_mixed_step_improves_on_selected_example(lsr_pool, lsr_learner):
    rng = SeededRng(12)
    w, ws = rng.normal(size=4), rng.normal(size=4)
    i, y = mixed_teach_step(lsr_pool, w, ws, ETA, lsr_learner)
    x, yt = lsr_pool.X[i], lsr_pool.Y[i]
    assert _G(lsr_learner, x, y, w, ws) <= _G(lsr_learner, x, yt, w, ws) + 1e-12


# ---------------------------
# gradient rescaling
# ---------------------------

def test_g_scalar_rescales_ground_truth_gradient():
    rng = SeededRng(13)
    lsr = Learner(LearnerKind.LSR, 3, lam=0.0)
    lr = Learner(LearnerKind.LR, 3, lam=0.0)
    for _ in range(20):
        x, w = rng.normal(size=3), rng.normal(size=3)
        y, yt = rng.normal(), 1.0
        assert np.allclose(lsr_grad(x, y, w), g_scalar(y, x, yt, w, lsr) * lsr_grad(x, yt, w), atol=1e-10)
        assert np.allclose(lr_grad(x, y, w), g_scalar(y, x, yt, w, lr) * lr_grad(x, yt, w), atol=1e-10)


def test_g_scalar_degenerate_when_prediction_is_exact():
    lsr = Learner(LearnerKind.LSR, 2, lam=0.0)
    with pytest.raises(DegenerateError):
        g_scalar(1.0, np.array([1.0, 0.0]), 2.0, np.array([2.0, 5.0]), lsr)


def test_g_vector_rescales_each_column():
    rng = SeededRng(14)
    x, W = rng.normal(size=3), rng.normal(size=(3, 2))
    y, yt = rng.normal(size=2), rng.normal(size=2)
    pred = x @ W
    g = g_vector(y, x, yt, W)
    assert np.allclose(np.outer(x, pred - y), np.outer(x, pred - yt) * g[None, :])


def test_gain_label_realizes_factor_for_lsr():
    lsr = Learner(LearnerKind.LSR, 3, lam=0.0)
    x, w = np.array([1.0, 2.0, 0.5]), np.array([0.1, -0.3, 0.8])
    y = gain_label(2.5, x, 1.0, w, np.zeros(3), ETA, lsr)
    assert g_scalar(y, x, 1.0, w, lsr) == pytest.approx(2.5)


# ---------------------------
# theory-driven teachers
# ---------------------------

def test_et_gain_teacher_formula(lsr_learner):
    x, w, ws = np.array([1.0, 0.0, 2.0, 1.0]), np.ones(4), np.zeros(4)
    out = et_gain_teacher(x, 0.5, w, ws, 0.1, 2.0, lsr_learner)
    expected = w - 0.1 * 2.0 * 2.0 * lsr_learner.grad(w, x, 0.5)
    assert np.allclose(out, expected)
    with pytest.raises(ConfigError):
        et_gain_teacher(x, 0.5, w, ws, 0.1, 0.0, lsr_learner)


def test_armijo_accepted_steps_satisfy_condition(lsr_learner):
    rng = SeededRng(15)
    for _ in range(100):
        x, w = rng.normal(size=4), rng.normal(size=4)
        y = rng.normal()
        st = armijo_teacher(x, y, w, ETA, lsr_learner, c2=0.5)
        assert st.satisfied
        assert armijo_condition(lsr_learner, x, y, w, ETA, st.g, 0.5)
        assert st.g == pytest.approx(1e4 * 0.5 ** (st.trials - 1))


def test_armijo_effective_step_is_capped_on_quadratics():
    pool = gen_linreg(200, 4, noise_sd=0.0, seed=3)
    learner = Learner(LearnerKind.LSR, 4, lam=0.0)
    Y = np.ravel(pool.Y)
    rng = SeededRng(16)
    for c2 in (0.5, 0.8):
        for _ in range(200):
            i = int(rng.integers(len(pool)))
            x = pool.X[i]
            w = rng.normal(size=4, scale=3.0)
            st = armijo_teacher(x, Y[i], w, ETA, learner, c2=c2, g_max=1e12)
            assert st.satisfied
            cap = 2.0 * (1.0 - c2) / float(x @ x)
            assert ETA * st.g <= cap * (1.0 + 1e-9)
            assert ETA * st.g > 0.5 * cap * (1.0 - 1e-9)


def test_armijo_fallback_uses_minimum_rate(lsr_learner):
    x, w = np.array([1.0, 1.0, 1.0, 1.0]), np.zeros(4)
    st = armijo_teacher(x, 1.0, w, ETA, lsr_learner, g_max=1e8, k_max=1)
    assert not st.satisfied
    assert st.g * ETA == pytest.approx(1e-6)
    assert np.allclose(st.w, w - 1e-6 * lsr_learner.grad(w, x, 1.0))


def test_armijo_zero_gradient_is_degenerate():
    lsr = Learner(LearnerKind.LSR, 2, lam=0.0)
    with pytest.raises(DegenerateError):
        armijo_teacher(np.array([1.0, 1.0]), 2.0, np.array([1.0, 1.0]), ETA, lsr)


def test_newton_step_lands_on_ridge_solution(lsr_pool, lsr_learner):
    X, Y = lsr_pool.X, lsr_pool.Y
    n = len(lsr_pool)
    ridge = np.linalg.solve(X.T @ X / n + lsr_learner.lam * np.eye(4), X.T @ Y / n)
    f = LsrPoolObjective(X, Y, lsr_learner.lam, lsr_learner.reg_mask)
    rng = SeededRng(16)
    for alpha in (0.0, 0.5, 1.0):
        w1 = newton_last_teacher(f, rng.normal(size=4, scale=5.0), ridge, ETA, alpha)
        assert np.linalg.norm(w1 - ridge) < 1e-9


def test_newton_on_a_quadratic_test_function():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    c = np.array([1.0, -1.0])
    f = CallableObjective(lambda w: A @ (w - c), lambda w: A)
    assert np.allclose(newton_last_teacher(f, np.array([10.0, 4.0]), c, 0.5, 0.3), c)


def _logistic_pool_objective(X, Y, lam):
    """Summed regularized logistic loss with a hand-written Hessian."""
    n, d = X.shape

    def grad(w):
        m = Y * (X @ w)
        return X.T @ (-Y * expit(-m)) + n * lam * w

    def hess(w):
        m = Y * (X @ w)
        s = expit(m) * expit(-m)
        return (X * s[:, None]).T @ X + n * lam * np.eye(d)

    return CallableObjective(grad, hess)


def test_newton_step_on_regularized_logistic_loss(binary_pool, lr_learner):
    X, Y = binary_pool.X, np.ravel(binary_pool.Y)
    f = _logistic_pool_objective(X, Y, lr_learner.lam)
    rng = SeededRng(21)
    w = rng.normal(size=3, scale=0.5)
    w_star = rng.normal(size=3, scale=0.5)

    assert np.allclose(f.grad(w) / len(Y), lr_learner.objective_grad(w, X, binary_pool.Y))
    h = 1e-6
    fd = np.column_stack([(f.grad(w + h * e) - f.grad(w - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(f.hess(w), fd, rtol=1e-5, atol=1e-6)

    expected = w - np.linalg.solve(f.hess(w), f.grad(w))
    assert np.allclose(newton_last_teacher(f, w, w_star, ETA, alpha=0.0), expected, atol=1e-10)
    at_target = w - np.linalg.solve(f.hess(w_star), f.grad(w))
    assert np.allclose(newton_last_teacher(f, w, w_star, ETA, alpha=1.0), at_target, atol=1e-10)


def test_newton_teacher_converges_quadratically_on_logistic_loss(binary_pool, lr_learner):
    X, Y = binary_pool.X, np.ravel(binary_pool.Y)
    f = _logistic_pool_objective(X, Y, lr_learner.lam)
    w = np.zeros(3)
    for _ in range(25):
        w = newton_last_teacher(f, w, w, ETA)
    w_star = w
    w = w_star + SeededRng(22).normal(size=3, scale=0.1)
    gaps = []
    for _ in range(4):
        w = newton_last_teacher(f, w, w_star, ETA)
        gaps.append(float(np.linalg.norm(w - w_star)))
    assert gaps[-1] < 1e-10
    assert gaps[1] < gaps[0]


def test_newton_rank_deficient_hessian():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    f = LsrPoolObjective(X, np.ones(3))
    with pytest.raises(SingularHessianError):
        newton_last_teacher(f, np.zeros(2), np.zeros(2), ETA)


def test_constraint_validation():
    with pytest.raises(ConstraintError):
        LabelConstraint.magnitude(0.0)
    with pytest.raises(ConstraintError):
        LabelConstraint.magnitude(1.0, p=3.0)
