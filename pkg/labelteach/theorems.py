# labelteach/theorems.py
"""
Executable convergence guarantees for the theory-driven teachers.

  et            rescaling by c1 * ||w - w*||: the measured log-distance slope
                stays below 1/2 log(1 - c1 eta mu_bar + c1^2 eta^2 L_max^2),
                with mu_bar and L_max fixed per run from the pool
  armijo        every accepted step satisfies the Armijo inequality on replay,
                the effective step eta * g stays within 2 (1 - c2) / L_i even
                from a huge g_max, and log-distance falls linearly
  super_et      one Newton-preconditioned step lands on w*
  monotonicity  greedy label synthesis is never slower than plain SGD on
                paired seeds
  cost          per-iteration teacher time: pool scan grows with the pool,
                label synthesis does not

The et / armijo suites use noiseless realizable least-squares pools, so every
per-example loss is minimized at w* (interpolation).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from labelteach.config import ExperimentConfig
from labelteach.console import log
from labelteach.data import gen_linreg
from labelteach.errors import ConfigError
from labelteach.greedy_teachers import (
    ARMIJO_G_MAX,
    LsrPoolObjective,
    armijo_condition,
    armijo_teacher,
    et_gain_teacher,
    newton_last_teacher,
)
from labelteach.harness import aggregate, compare, compute_wstar, measure_teacher_cost, run_teaching
from labelteach.learners import Learner, LearnerKind
from labelteach.numerics import SeededRng
from labelteach.reporting import print_table

# =====================================================
# CONFIG
# =====================================================

SUITES = ("et", "armijo", "super_et", "monotonicity", "cost")

POOL_N = 800
POOL_D = 4
ETA = 1e-3

ET_RUNS = 100
ET_STEPS = 60
ET_BURN_IN = 10
ET_SHELL = 0.5              # constants hold while ||w - w*|| >= shell * ||w0 - w*||
ET_C1_FRACTION = 0.9        # c1 * eta = fraction * mu_bar / L_max^2
ET_PASS_RATE = 0.95

ARMIJO_RUNS = 400
ARMIJO_MAX_STEPS = 2000
ARMIJO_STOP = 1e-10
ARMIJO_MIN_R2 = 0.95
ARMIJO_STEP_TOL = 1e-9

SUPER_ET_RUNS = 100
SUPER_ET_ALPHAS = (0.0, 0.5, 1.0)
SUPER_ET_TOL = 1e-9
SUPER_ET_START_SD = 5.0

MONO_SEEDS = 50
MONO_STEPS = 1000
MONO_FROM_T = 10
MONO_P = 0.01

COST_SIZES = (100, 1000, 10000)
COST_ITERS = 200
COST_MIN_R2 = 0.9
COST_FLAT_SHARE = 0.25      # LAST slope * largest pool < share * mean LAST time


@dataclass
class SuiteReport:
    kind: str
    passed: bool
    measured: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def render(self) -> None:
        status = "PASS" if self.passed else "FAIL"
        print_table(f"{status} {self.kind}", ("quantity", "value"), sorted(self.measured.items()))
        for note in self.notes:
            log("SUITE", note)


def _realizable_lsr(seed: int):
    pool = gen_linreg(POOL_N, POOL_D, noise_sd=0.0, seed=seed)
    learner = Learner(LearnerKind.LSR, POOL_D, lam=0.0)
    return pool, learner, compute_wstar(pool, learner)


# =====================================================
# EXPONENTIAL TEACHABILITY
# =====================================================

def et_constants(X, r_lo: float, r_hi: float) -> Tuple[float, float]:
    """
    Fixed (mu_bar, L_max) for l_i = 1/2 <x_i, w - w*>^2 on the shell
    r_lo <= ||w - w*|| <= r_hi: mean order-1 strong convexity
    lambda_min(X^T X / n) * r_lo and Lipschitz constant max_i ||x_i||^2 * r_hi.
    """
    X = np.asarray(X, dtype=np.float64)
    lam_min = float(np.linalg.eigvalsh(X.T @ X / X.shape[0])[0])
    sq_max = float(np.max(np.einsum("ij,ij->i", X, X)))
    return lam_min * r_lo, sq_max * r_hi


def suite_et(runs: int = ET_RUNS, seed: int = 0) -> SuiteReport:
    pool, learner, w_star = _realizable_lsr(seed)
    X, Y = pool.X, pool.Y
    ok, measured, bounds, c1etas = 0, [], [], []
    notes = []
    for r in range(runs):
        rng = SeededRng(seed + 1 + r)
        w = w_star + rng.normal(size=POOL_D)
        r0 = float(np.linalg.norm(w - w_star))
        r_lo = ET_SHELL * r0
        mu_bar, L_max = et_constants(X, r_lo, r0)
        c1 = ET_C1_FRACTION * mu_bar / (ETA * L_max ** 2)
        bound = 0.5 * math.log(1.0 - c1 * ETA * mu_bar + (c1 * ETA * L_max) ** 2)
        logs = [math.log(r0)]
        for _ in range(ET_STEPS):
            i = int(rng.integers(len(pool)))
            w = et_gain_teacher(X[i], Y[i], w, w_star, ETA, c1, learner)
            logs.append(math.log(float(np.linalg.norm(w - w_star))))
        if min(logs) < math.log(r_lo) or max(logs) > logs[0] + 1e-12:
            notes.append(f"run {r}: iterate left the shell the constants were computed on")
            continue
        slope = (logs[-1] - logs[ET_BURN_IN]) / (ET_STEPS - ET_BURN_IN)
        measured.append(slope)
        bounds.append(bound)
        c1etas.append(c1 * ETA)
        ok += int(slope <= bound)
    rate = ok / runs
    return SuiteReport(
        "et",
        rate >= ET_PASS_RATE and not notes,
        {
            "runs": float(runs),
            "pass_rate": rate,
            "mean_measured_slope": float(np.mean(measured)) if measured else math.nan,
            "mean_bound_slope": float(np.mean(bounds)) if bounds else math.nan,
            "mean_c1_eta": float(np.mean(c1etas)) if c1etas else math.nan,
        },
        notes,
    )


# =====================================================
# ARMIJO TEACHER
# =====================================================

def suite_armijo(
    runs: int = ARMIJO_RUNS, seed: int = 0, c2: float = 0.5, g_max: float = ARMIJO_G_MAX
) -> SuiteReport:
    pool, learner, w_star = _realizable_lsr(seed)
    X, Y = pool.X, pool.Y
    steps = violations = fallbacks = 0
    step_ratio = 0.0
    r2s, slopes = [], []
    for r in range(runs):
        rng = SeededRng(seed + 1 + r)
        w = w_star + rng.normal(size=POOL_D)
        dists = [float(np.linalg.norm(w - w_star))]
        for _ in range(ARMIJO_MAX_STEPS):
            if dists[-1] < ARMIJO_STOP:
                break
            i = int(rng.integers(len(pool)))
            st = armijo_teacher(X[i], Y[i], w, ETA, learner, c2=c2, g_max=g_max)
            steps += 1
            if st.satisfied:
                violations += int(not armijo_condition(learner, X[i], Y[i], w, ETA, st.g, c2))
                # quadratic loss: Armijo holds iff eta * g * ||x_i||^2 <= 2 (1 - c2)
                step_ratio = max(step_ratio, ETA * st.g * float(X[i] @ X[i]) / (2.0 * (1.0 - c2)))
            else:
                fallbacks += 1
            w = st.w
            dists.append(float(np.linalg.norm(w - w_star)))
        t = np.arange(len(dists), dtype=np.float64)
        fit = stats.linregress(t, np.log(np.maximum(dists, np.finfo(float).tiny)))
        r2s.append(float(fit.rvalue ** 2))
        slopes.append(float(fit.slope))
    passed = (
        violations == 0
        and step_ratio <= 1.0 + ARMIJO_STEP_TOL
        and min(r2s) > ARMIJO_MIN_R2
        and max(slopes) < 0.0
    )
    return SuiteReport(
        "armijo",
        passed,
        {
            "steps": float(steps),
            "violations": float(violations),
            "fallbacks": float(fallbacks),
            "max_step_ratio": step_ratio,
            "min_r2": min(r2s),
            "mean_log_slope": float(np.mean(slopes)),
        },
    )


# =====================================================
# SUPER-EXPONENTIAL TEACHABILITY
# =====================================================

def suite_super_et(runs: int = SUPER_ET_RUNS, seed: int = 0) -> SuiteReport:
    pool = gen_linreg(POOL_N, POOL_D, seed=seed)
    learner = Learner(LearnerKind.LSR, POOL_D)
    w_star = compute_wstar(pool, learner)
    f = LsrPoolObjective(pool.X, pool.Y, learner.lam, learner.reg_mask)
    rng = SeededRng(seed + 1)
    worst = 0.0
    for _ in range(runs):
        w0 = rng.normal(size=POOL_D, scale=SUPER_ET_START_SD)
        for alpha in SUPER_ET_ALPHAS:
            w1 = newton_last_teacher(f, w0, w_star, ETA, alpha)
            worst = max(worst, float(np.linalg.norm(w1 - w_star)))
    return SuiteReport(
        "super_et",
        worst < SUPER_ET_TOL,
        {"runs": float(runs), "alphas": float(len(SUPER_ET_ALPHAS)), "max_one_step_residual": worst},
    )


# =====================================================
# MONOTONICITY
# =====================================================

def suite_monotonicity(seeds: int = MONO_SEEDS, steps: int = MONO_STEPS) -> SuiteReport:
    base = ExperimentConfig().with_overrides([f"run.iterations={steps}", f"run.seeds=0..{seeds - 1}"])
    runs = {
        "last": run_teaching(base.with_value("teacher.kind", "last_nc")),
        "sgd": run_teaching(base.with_value("teacher.kind", "sgd")),
    }
    last, sgd = aggregate(runs["last"]), aggregate(runs["sgd"])
    sel = last.t >= MONO_FROM_T
    margin = float(np.max(last.mean[sel] - sgd.mean[sel]))
    report = compare(runs, start=MONO_FROM_T)
    pair = report.pair("last", "sgd")
    passed = margin <= 0.0 and pair.better == "last" and pair.p_value < MONO_P
    return SuiteReport(
        "monotonicity",
        passed,
        {
            "seeds": float(seeds),
            "max_mean_gap": margin,
            "final_last": report.finals["last"],
            "final_sgd": report.finals["sgd"],
            "sign_test_p": pair.p_value,
            "wins": float(pair.wins),
        },
    )


# =====================================================
# TEACHER COST
# =====================================================

def suite_cost(iterations: int = COST_ITERS, seed: int = 0) -> SuiteReport:
    fits = measure_teacher_cost(("imt", "last"), COST_SIZES, iterations, seed)
    imt, last = fits["imt"], fits["last"]
    flat = last.slope * max(COST_SIZES) < COST_FLAT_SHARE * float(np.mean(last.mean_micros))
    passed = imt.slope > 0 and imt.r2 > COST_MIN_R2 and (flat or last.p_value > MONO_P)
    return SuiteReport(
        "cost",
        passed,
        {
            "imt_slope_us_per_example": imt.slope,
            "imt_r2": imt.r2,
            "last_slope_us_per_example": last.slope,
            "last_slope_p": last.p_value,
            "last_mean_us": float(np.mean(last.mean_micros)),
        },
    )


def theorem_suite(kind: str, runs: Optional[int] = None, seed: int = 0) -> SuiteReport:
    kind = kind.strip().lower()
    log("SUITE", f"running {kind}")
    if kind == "et":
        return suite_et(runs or ET_RUNS, seed)
    if kind == "armijo":
        return suite_armijo(runs or ARMIJO_RUNS, seed)
    if kind == "super_et":
        return suite_super_et(runs or SUPER_ET_RUNS, seed)
    if kind == "monotonicity":
        return suite_monotonicity(runs or MONO_SEEDS)
    if kind == "cost":
        return suite_cost(seed=seed)
    raise ConfigError(f"unknown theorem suite '{kind}'", suites=SUITES)
