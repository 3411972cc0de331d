"""End-to-end acceptance suite: every headline guarantee at its stated
tolerance, checked against independent oracles (brute-force assignment,
central finite differences, direct summation) and wall-clock budgets.
"""
import dataclasses
import hashlib
import time

import numpy as np
import pytest

from intentot.data import Dataset, DatasetMeta, Trajectory
from intentot.envs import GridWorld, expert_policy, parse_grid_file, rollout
from intentot.intents import (IntentBatchItem, IntentTrainConfig,
                              icvf_loss_and_grads, init_intent_model,
                              temporal_linearity_report, train_intents,
                              value_bound_report)
from intentot.iql import IqlConfig
from intentot.ot import exact_ot_bruteforce, sinkhorn, transport_cost
from intentot.relabel import RelabelConfig, relabel_dataset, reward_from_plan
from intentot.cli import run_pipeline

GRID = "tests/fixtures/corridor7.grid"


def sha256(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


# --- 1. Sinkhorn vs brute-force exact OT -----------------------------------

def test_sinkhorn_matches_bruteforce_on_random_costs():
    rng = np.random.default_rng(0)
    epsilon = 0.001
    started = time.monotonic()
    for _ in range(200):
        n = int(rng.integers(2, 7))
        cost = rng.uniform(0.0, 10.0, size=(n, n))
        plan = sinkhorn(cost, epsilon, max_iters=200)
        assert plan.marginal_error < 1e-6
        assert plan.iterations_run <= 200
        exact_value, _ = exact_ot_bruteforce(cost)
        gap = transport_cost(plan, cost) - exact_value
        # the plan's marginals are feasible only to ~1e-9, which can push
        # the entropic cost below the exact value by that much
        assert gap > -1e-7
        assert gap < 5 * epsilon
    assert time.monotonic() - started < 10.0


# --- 2. Analytic gradients vs central finite differences -------------------

def test_gradients_match_finite_differences():
    started = time.monotonic()
    rng = np.random.default_rng(0)
    eps = 1e-5
    for trial in range(50):
        model = init_intent_model(6, 3, np.random.default_rng(trial))
        target = init_intent_model(6, 3, np.random.default_rng(1000 + trial))
        batch = [IntentBatchItem(*rng.integers(0, 6, size=4))
                 for _ in range(8)]
        _, grads = icvf_loss_and_grads(model, target, batch, 0.9, 0.7)
        for field in ("phi", "psi", "t_base", "t_factors"):
            arr = getattr(model, field)
            g = getattr(grads, field)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                up, _ = icvf_loss_and_grads(model, target, batch, 0.9, 0.7)
                arr[idx] = orig - eps
                dn, _ = icvf_loss_and_grads(model, target, batch, 0.9, 0.7)
                arr[idx] = orig
                fd = (up - dn) / (2 * eps)
                # entries where both values sit at the finite-difference
                # noise floor (~1e-11) are compared absolutely
                denom = max(abs(fd), abs(g[idx]), 1e-6)
                assert abs(fd - g[idx]) / denom < 1e-4
    assert time.monotonic() - started < 5.0


# --- 3. Reward formula vs independent direct summation ---------------------

def test_reward_formula_matches_direct_summation():
    rng = np.random.default_rng(7)
    for _ in range(20):
        t_a = int(rng.integers(2, 12))
        m = int(rng.integers(2, 12))
        plan = rng.uniform(0.0, 1.0, size=(t_a, m))
        plan /= plan.sum()
        cost = rng.uniform(0.0, 10.0, size=(t_a, m))
        alpha = float(rng.uniform(0.5, 8.0))
        tau = float(rng.uniform(0.1, 2.0))
        rewards = reward_from_plan(plan, cost, t_a, alpha, tau)
        for i in range(t_a):
            inner = 0.0
            for j in range(m):
                inner += plan[i, j] * cost[i, j]
            expected = alpha * np.exp(-tau * t_a * inner)
            assert abs(rewards[i] - expected) <= 1e-12


# --- 4/5. Intent geometry on the 7x7 random-walk benchmark -----------------

@pytest.fixture(scope="module")
def trained_models():
    env = GridWorld(width=7, height=7, walls=frozenset(), goal=(6, 6),
                    start_cells=((0, 0),), max_episode_len=50)
    dataset = rollout(env, "random", 123, 200)
    started = time.monotonic()
    models = [
        train_intents(dataset, IntentTrainConfig(
            d=8, steps=30000, learning_rate=0.05, batch_size=128,
            future_geometric_p=0.05, seed=seed))
        for seed in range(10)
    ]
    return dataset, models, time.monotonic() - started


def test_temporal_linearity_across_seeds(trained_models):
    dataset, models, elapsed = trained_models
    assert elapsed < 180.0
    hits = 0
    for model in models:
        rows = [r for r in temporal_linearity_report(model, dataset, 10)
                if r[0] >= 1]
        ks = np.array([r[0] for r in rows], dtype=float)
        dists = np.array([r[1] for r in rows])
        if float(np.corrcoef(ks, dists)[0, 1]) >= 0.9:
            hits += 1
    assert hits >= 8


def test_value_bound_constant_stable(trained_models):
    dataset, models, _ = trained_models
    constants = []
    for seed, model in enumerate(models):
        report = value_bound_report(model, dataset, 1000,
                                    np.random.default_rng(seed))
        assert np.isfinite(report.bound_constant)
        assert report.zero_delta_max_abs_value < 0.2
        constants.append(report.bound_constant)
    assert max(constants) / min(constants) < 10.0


# --- 6/7. End-to-end imitation on the walled-corridor grid -----------------

@pytest.fixture(scope="module")
def pipeline_results(tmp_path_factory):
    env = parse_grid_file(GRID, max_episode_len=100)
    agent = rollout(env, "random", 0, 300)
    expert1 = rollout(env, expert_policy(env), 0, 1, expert=True)
    expert5 = rollout(env, expert_policy(env), 0, 5, expert=True)
    out = tmp_path_factory.mktemp("pipeline")
    started = time.monotonic()
    k1 = run_pipeline(agent, expert1, env, out / "k1", RelabelConfig(),
                      IntentTrainConfig(seed=0), IqlConfig(seed=1), 20, 2)
    zero = run_pipeline(agent, expert1, env, out / "zero", RelabelConfig(),
                        IntentTrainConfig(seed=0), IqlConfig(seed=1), 20, 2,
                        zero_rewards=True)
    elapsed = time.monotonic() - started
    k5 = run_pipeline(agent, expert5, env, out / "k5", RelabelConfig(),
                      IntentTrainConfig(seed=0), IqlConfig(seed=1), 20, 2)
    return k1, zero, k5, elapsed


def test_imitation_beats_zero_reward_baseline(pipeline_results):
    k1, zero, _, elapsed = pipeline_results
    assert k1["success_rate"] >= 0.9
    assert zero["success_rate"] <= 0.2
    assert elapsed < 300.0


def test_more_experts_do_not_regress(pipeline_results):
    k1, _, k5, _ = pipeline_results
    assert k5["success_rate"] >= k1["success_rate"] - 0.05


# --- 8. Relabeling overhead -------------------------------------------------

def test_relabel_100x200_under_30s():
    rng = np.random.default_rng(0)
    n_states = 49
    meta = DatasetMeta(env="synthetic", n_states=n_states, seed=0,
                       expert=False, goal=None, n_actions=None)
    agent = Dataset(
        trajectories=tuple(
            Trajectory(states=tuple(int(s) for s in
                                    rng.integers(0, n_states, size=200)))
            for _ in range(100)),
        meta=meta)
    expert = Dataset(
        trajectories=(Trajectory(states=tuple(
            int(s) for s in rng.integers(0, n_states, size=200))),),
        meta=dataclasses.replace(meta, expert=True))
    model = init_intent_model(n_states, 8, np.random.default_rng(1))
    started = time.monotonic()
    out = relabel_dataset(agent, expert, model, RelabelConfig())
    elapsed = time.monotonic() - started
    assert len(out.dataset.trajectories) == 100
    assert all(t.rewards is not None for t in out.dataset.trajectories)
    assert elapsed < 30.0


# --- 9. Pipeline determinism ------------------------------------------------

def test_pipeline_checksum_identical_artifacts(tmp_path):
    env = parse_grid_file(GRID, max_episode_len=50)
    agent = rollout(env, "random", 0, 30)
    expert = rollout(env, expert_policy(env), 0, 1, expert=True)
    intent_cfg = IntentTrainConfig(d=4, steps=1500, batch_size=32, seed=0)
    iql_cfg = IqlConfig(steps=1500, seed=1)
    results = [
        run_pipeline(agent, expert, env, tmp_path / f"run{i}",
                     RelabelConfig(), intent_cfg, iql_cfg, 10, 2)
        for i in range(2)
    ]
    names = [str(p).rsplit("/", 1)[1] for p in results[0]["artifacts"]]
    assert names  # at least one artifact
    for name in names:
        assert (sha256(tmp_path / "run0" / name)
                == sha256(tmp_path / "run1" / name)), name
