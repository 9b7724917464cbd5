# tests/conftest.py
import pytest

from labelteach import console
from labelteach.data import gen_gaussian_clusters, gen_linreg
from labelteach.learners import Learner, LearnerKind
from labelteach.numerics import SeededRng


@pytest.fixture(autouse=True)
def quiet_console():
    console.set_quiet(True)
    yield
    console.set_quiet(False)


@pytest.fixture
def rng():
    return SeededRng(0)


@pytest.fixture
def lsr_pool():
    return gen_linreg(200, 4, seed=0)


@pytest.fixture
def binary_pool():
    return gen_gaussian_clusters(60, 3, offset=0.5, seed=1)


@pytest.fixture
def onehot_pool(binary_pool):
    return binary_pool.as_onehot()


@pytest.fixture
def lsr_learner():
    return Learner(LearnerKind.LSR, 4, lam=5e-5)


@pytest.fixture
def lr_learner():
    return Learner(LearnerKind.LR, 3, lam=1e-3)


@pytest.fixture
def mc_learner():
    return Learner(LearnerKind.MULTICLASS, 3, n_classes=2, lam=1e-3)


@pytest.fixture
def mlp_learner():
    return Learner(LearnerKind.MLP2, 4, n_classes=3, hidden=5, lam=1e-3)

