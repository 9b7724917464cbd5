# tests/test_param_teachers.py
import math

import numpy as np
import pytest

from labelteach.errors import ConfigError, DimensionError
from labelteach.learners import Learner, LearnerKind
from labelteach.numerics import SeededRng, finite_diff_grad, relative_error
from labelteach.param_teachers import (
    ActionPolicy,
    ActionSpace,
    EpisodeConfig,
    EvalTrace,
    IdentityPolicy,
    MuPolicy,
    NetLabelPolicy,
    UnrollDraws,
    blast_pg,
    blast_unrolled,
    build_state_omniscient,
    build_state_pg,
    discounted_returns,
    draw_unroll,
    evaluate_policy,
    init_students,
    omniscient_layout,
    pg_layout,
    policy_gradient_estimate,
    train_pg_omniscient,
    train_unrolled_omniscient,
    unrolled_objective,
)
from labelteach.teacher_net import TeacherNet


@pytest.fixture
def small_cfg():
    return EpisodeConfig(horizon=3, n_students=2, unroll=2, episodes=2, eta=0.05, eval_every=1,
                         eval_steps=5, assess_batch=4, batch_size=2)


def _w_star(learner, seed=0):
    return SeededRng(seed).normal(size=learner.n_params)


# ---------------------------
# action spaces / config
# ---------------------------

def test_action_spaces():
    aug = ActionSpace.augmented_binary()
    sx = ActionSpace.simplex_binary()
    assert len(aug) == 10 and len(sx) == 5
    assert np.allclose(sx.values.sum(axis=1), 1.0)
    mu = ActionSpace.mu_grid()
    assert mu.kind == "mu" and mu.values[0] == 0.5 and mu.values[-1] == 1.0 and len(mu) == 6


def test_mu_candidates_mix_truth_and_source():
    mu = ActionSpace(np.array([1.0, 0.5]), kind="mu")
    cands = mu.candidate_labels([1.0, 0.0], [0.5, 0.5])
    assert cands.tolist() == [[1.0, 0.0], [0.75, 0.25]]


def test_action_space_validation():
    with pytest.raises(DimensionError):
        ActionSpace(np.ones(3))
    with pytest.raises(ConfigError):
        ActionSpace.mu_grid(0.8, 0.2)


def test_episode_config_validation():
    assert EpisodeConfig(n_students=10, reset_rate=0.2).n_reset == 2
    with pytest.raises(ConfigError):
        EpisodeConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        EpisodeConfig(reward_mode="loss")


# ---------------------------
# states
# ---------------------------

def test_state_layouts(mc_learner):
    lay = omniscient_layout(3, 2, mc_learner.n_params)
    assert lay.size == 3 + 2 + 6 + 6 + 2
    assert omniscient_layout(3, 2, 6, with_target=False).size == 3 + 2 + 6 + 2
    s = build_state_omniscient(np.ones(3), [1.0, 0.0], np.zeros(6), np.full(6, 2.0), [0.5, 0.5])
    parts = lay.split(s)
    assert parts["w_star"].tolist() == [2.0] * 6 and parts["prediction"].tolist() == [0.5, 0.5]


def test_pg_state_alignment(mc_learner):
    rng = SeededRng(0)
    w, ws, x = rng.normal(size=6), rng.normal(size=6), rng.normal(size=3)
    actions = ActionSpace.augmented_binary()
    s = build_state_pg(w, ws, x, [1.0, 0.0], 0.1, actions, mc_learner)
    assert s.shape == (pg_layout(6, 10).size,)
    for m, a in enumerate(actions.values):
        expected = -0.1 * float(mc_learner.grad(w, x, a) @ (ws - w))
        assert s[6 + m] == pytest.approx(expected, rel=1e-10, abs=1e-14)


# ---------------------------
# policy gradient
# ---------------------------

def test_discounted_returns():
    G = discounted_returns([1.0, 1.0], 0.5)
    assert G.tolist() == [0.75, 0.25]
    assert discounted_returns([0.0], 1.0, baseline=-0.1).tolist() == [pytest.approx(0.1)]


def test_policy_gradient_estimate_matches_finite_differences():
    net = TeacherNet((3, 4, 2), head="action")
    rng = SeededRng(1)
    theta = net.init_theta(rng)
    S = rng.normal(size=(5, 3))
    acts = np.array([0, 1, 1, 0, 1])
    weights = rng.normal(size=5)

    def J(th):
        p = net.probs(th, S)
        return float(np.sum(weights * np.log(p[np.arange(5), acts]))) / 2.0

    est = policy_gradient_estimate(net, theta, S, acts, weights, n_traj=2)
    assert relative_error(est, finite_diff_grad(J, theta)) < 1e-5


def test_policy_gradient_monte_carlo_agrees_with_enumeration():
    net = TeacherNet((2, 2), head="action")
    theta = np.array([0.3, -0.2, 0.1, 0.4, 0.0, 0.2])
    s = np.array([1.0, -0.5])
    reward = np.array([1.0, -2.0])
    pi = net.probs(theta, s)

    def score(a):
        e = np.eye(2)[a] - pi
        return np.concatenate([np.outer(s, e).ravel(), e])

    exact = sum(pi[a] * reward[a] * score(a) for a in range(2))
    second = sum(pi[a] * (reward[a] * score(a)) ** 2 for a in range(2))
    N = 20000
    rng = SeededRng(7)
    acts = np.array([rng.categorical(pi) for _ in range(N)])
    est = policy_gradient_estimate(net, theta, np.tile(s, (N, 1)), acts, reward[acts], n_traj=N)
    se = np.sqrt((second - exact ** 2) / N)
    assert np.all(np.abs(est - exact) <= 5.0 * se + 1e-12)


# ---------------------------
# evaluation
# ---------------------------

def test_identity_policy_is_plain_sgd(onehot_pool, mc_learner):
    w0 = _w_star(mc_learner)
    tr = evaluate_policy(IdentityPolicy(), mc_learner, onehot_pool, w0, 0.1, steps=10, batch_size=3, seed=4,
                         w_star=np.zeros(6), holdout=onehot_pool)
    rng = SeededRng(4)
    w = w0.copy()
    for _ in range(10):
        idx = rng.integers(len(onehot_pool), size=3)
        w = w - 0.1 * mc_learner.grad_batch(w, onehot_pool.X[idx], onehot_pool.Y[idx]).mean(axis=0)
    assert np.array_equal(tr.final_w, w)
    assert len(tr.dist) == 11 and tr.dist[0] == pytest.approx(np.linalg.norm(w0))
    assert tr.final("holdout_acc") == mc_learner.accuracy(w, onehot_pool.X, onehot_pool.Y)


def test_full_residual_weight_reproduces_sgd_exactly(onehot_pool, mc_learner):
    d, K, n = mc_learner.dim, 2, mc_learner.n_params
    net = TeacherNet.build(omniscient_layout(d, K, n, with_target=False).size, (8,), K, head="residual")
    theta = net.init_theta(SeededRng(0))
    w0 = _w_star(mc_learner)
    sgd = evaluate_policy(IdentityPolicy(), mc_learner, onehot_pool, w0, 0.2, 20, 4, 1, holdout=onehot_pool)
    res = evaluate_policy(NetLabelPolicy(net, theta, mc_learner, None, alpha=1.0), mc_learner, onehot_pool,
                          w0, 0.2, 20, 4, 1, holdout=onehot_pool)
    mu = evaluate_policy(MuPolicy(mc_learner, ActionSpace.mu_grid(), fixed_mu=1.0), mc_learner, onehot_pool,
                         w0, 0.2, 20, 4, 1, holdout=onehot_pool)
    assert np.array_equal(res.holdout_loss, sgd.holdout_loss)
    assert np.array_equal(mu.holdout_loss, sgd.holdout_loss)
    assert np.array_equal(res.final_w, sgd.final_w)


def test_action_policy_emits_action_labels(onehot_pool, mc_learner):
    actions = ActionSpace.simplex_binary()
    net = TeacherNet.build(pg_layout(6, 5).size, (4,), 5, head="action")
    policy = ActionPolicy(net, net.init_theta(SeededRng(0)), mc_learner, _w_star(mc_learner), actions, 0.1)
    L = policy.labels(onehot_pool.X[:3], onehot_pool.Y[:3], np.zeros(6))
    assert all(any(np.array_equal(row, a) for a in actions.values) for row in L)


# ---------------------------
# unrolling
# ---------------------------

def _unroll_setup(learner, blackbox=False):
    d, K, n = learner.dim, learner.n_classes, learner.n_params
    head = "residual" if blackbox else "label"
    net = TeacherNet.build(omniscient_layout(d, K, n, with_target=not blackbox).size, (6,), K,
                           head=head, activation="leaky_relu")
    return net, net.init_theta(SeededRng(3))


@pytest.mark.parametrize("kind", [LearnerKind.MULTICLASS, LearnerKind.MLP2])
def test_unrolled_gradient_matches_finite_differences(onehot_pool, kind):
    learner = Learner(kind, 3, n_classes=2, hidden=4 if kind == LearnerKind.MLP2 else 0, lam=1e-2)
    net, theta = _unroll_setup(learner)
    cfg = EpisodeConfig(unroll=3, n_students=2, batch_size=2, eta=0.5, decay=0.9)
    ws = _w_star(learner)
    students = init_students(ws, 2, 0.3, SeededRng(5).spawn(2))
    draws = draw_unroll(SeededRng(6).spawn(2), len(onehot_pool), cfg)
    out = unrolled_objective(net, theta, learner, onehot_pool, students, draws, cfg, w_star=ws)

    def f(th):
        return unrolled_objective(net, th, learner, onehot_pool, students, draws, cfg, w_star=ws).loss

    assert relative_error(out.grad, finite_diff_grad(f, theta)) < 1e-4
    assert len(out.students) == 2 and out.students[0].shape == ws.shape


def test_blackbox_unrolled_gradient_matches_finite_differences(onehot_pool, mc_learner):
    net, theta = _unroll_setup(mc_learner, blackbox=True)
    cfg = EpisodeConfig(unroll=2, n_students=1, batch_size=1, eta=0.5, assess_batch=5)
    students = init_students(np.zeros(6), 1, 0.3, [SeededRng(1)])
    draws = draw_unroll([SeededRng(2)], len(onehot_pool), cfg, assess_size=len(onehot_pool))

    def f(th):
        return unrolled_objective(net, th, mc_learner, onehot_pool, students, draws, cfg,
                                  assess=onehot_pool, alpha=0.5).loss

    out = unrolled_objective(net, theta, mc_learner, onehot_pool, students, draws, cfg,
                             assess=onehot_pool, alpha=0.5)
    assert relative_error(out.grad, finite_diff_grad(f, theta)) < 1e-4


def test_blackbox_unrolling_needs_assessment(onehot_pool, mc_learner):
    net, theta = _unroll_setup(mc_learner, blackbox=True)
    cfg = EpisodeConfig(unroll=1, n_students=1)
    draws = UnrollDraws(np.zeros((1, 1, 1), dtype=np.int64))
    with pytest.raises(ConfigError):
        unrolled_objective(net, theta, mc_learner, onehot_pool, [np.zeros(6)], draws, cfg)


# ---------------------------
# short training runs
# ---------------------------

def test_train_unrolled_omniscient_keeps_best(onehot_pool, mc_learner, small_cfg):
    net, theta = _unroll_setup(mc_learner)
    ws = _w_star(mc_learner)
    seen = []
    res = train_unrolled_omniscient(net, theta, mc_learner, onehot_pool, ws, small_cfg, SeededRng(0),
                                    on_episode=seen.append)
    assert [r["episode"] for r in seen] == [1, 2]
    assert all(math.isfinite(r["eval_metric"]) for r in res.log)
    assert res.best_score <= min(r["eval_metric"] for r in res.log)
    assert res.adam.t == 2


def test_train_pg_omniscient_runs(onehot_pool, mc_learner, small_cfg):
    actions = ActionSpace.augmented_binary()
    net = TeacherNet.build(pg_layout(mc_learner.n_params, len(actions)).size, (8,), len(actions), head="action")
    res = train_pg_omniscient(net, net.init_theta(SeededRng(0)), mc_learner, onehot_pool, _w_star(mc_learner),
                              actions, small_cfg, SeededRng(1))
    assert len(res.log) == 2
    assert all(r["objective"] <= 0.0 for r in res.log)
    assert res.best_score <= res.log[-1]["eval_metric"]


def test_blast_unrolled_runs(onehot_pool, mc_learner, small_cfg):
    net, theta = _unroll_setup(mc_learner, blackbox=True)
    res = blast_unrolled(net, theta, mc_learner, onehot_pool, onehot_pool, small_cfg, SeededRng(0),
                         np.zeros(mc_learner.n_params), 0.5)
    assert len(res.log) == 2 and math.isfinite(res.best_score)


def test_blast_pg_runs_with_both_rewards(onehot_pool, mc_learner, small_cfg):
    actions = ActionSpace.mu_grid()
    d, K, n = mc_learner.dim, 2, mc_learner.n_params
    net = TeacherNet.build(omniscient_layout(d, K, n, with_target=False).size, (8,), len(actions), head="mu")
    res = blast_pg(net, net.init_theta(SeededRng(0)), mc_learner, onehot_pool, onehot_pool, actions, small_cfg,
                   SeededRng(1), np.zeros(n))
    assert all(0.0 <= r["objective"] <= 1.0 for r in res.log)
    iters = EpisodeConfig(horizon=3, n_students=2, episodes=1, eval_steps=3, reward_mode="iterations", zeta=0.99)
    res = blast_pg(net, net.init_theta(SeededRng(0)), mc_learner, onehot_pool, onehot_pool, actions, iters,
                   SeededRng(1), np.zeros(n))
    assert -3.0 <= res.log[0]["objective"] <= -1.0
    assert res.best_score in (-1.0, -2.0, -3.0)
    assert res.log[0]["eval_metric"] in (-1.0, -2.0, -3.0)


def test_terminal_reward_follows_the_reward_mode():
    acc = np.array([0.95, 0.5, 0.7, 0.92, 0.8])
    trace = EvalTrace(None, None, acc, np.zeros(2))
    assert trace.terminal_reward("accuracy") == 0.8
    assert trace.terminal_reward("iterations", zeta=0.9) == -3.0
    assert trace.terminal_reward("iterations", zeta=0.99) == -4.0
    with pytest.raises(ConfigError):
        trace.terminal_reward("speed")
    with pytest.raises(ConfigError):
        EvalTrace(np.zeros(5), None, None, np.zeros(2)).terminal_reward("iterations")


def test_parameterized_teachers_need_softmax_learners(lsr_pool, lsr_learner, small_cfg):
    net = TeacherNet((5, 1))
    with pytest.raises(ConfigError):
        train_unrolled_omniscient(net, net.init_theta(SeededRng(0)), lsr_learner, lsr_pool, np.zeros(4),
                                  small_cfg, SeededRng(0))
