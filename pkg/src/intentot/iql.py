"""Tabular implicit Q-learning consumer for relabeled datasets.

Alternates expectile regression of V toward Q with squared-TD updates of
Q, then extracts a deterministic policy by advantage-weighted scores over
the actions actually observed at each state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .expectile import expectile_weight
from .policy import Policy


@dataclass(frozen=True)
class IqlConfig:
    gamma: float = 0.99
    expectile: float = 0.7
    temperature: float = 6.0
    learning_rate: float = 0.1
    steps: int = 20000
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 < self.expectile < 1.0:
            raise ValueError("expectile must be in (0, 1)")
        if self.temperature <= 0 or self.learning_rate <= 0:
            raise ValueError("temperature and learning_rate must be positive")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps/batch_size out of range")


@dataclass
class IqlTables:
    q: np.ndarray  # [n_states, n_actions]
    v: np.ndarray  # [n_states]


def _transitions(dataset: Dataset):
    """Flatten trajectories into (s, a, r(s'), s', done) arrays.

    The reward of a transition is the relabeled reward of its arrival
    state; done marks arrival at the metadata goal.
    """
    s, a, r, s2 = [], [], [], []
    for i, traj in enumerate(dataset.trajectories):
        if traj.actions is None:
            raise ValueError(f"trajectory {i} has no actions; IQL needs them")
        if traj.rewards is None:
            raise ValueError(f"trajectory {i} has no rewards; relabel first")
        s.extend(traj.states[:-1])
        a.extend(traj.actions)
        r.extend(traj.rewards[1:])
        s2.extend(traj.states[1:])
    s = np.asarray(s)
    a = np.asarray(a)
    s2 = np.asarray(s2)
    goal = dataset.meta.goal
    done = (s2 == goal).astype(float) if goal is not None else np.zeros(len(s2))
    return s, a, np.asarray(r, dtype=float), s2, done


def _scatter_mean_add(table: np.ndarray, flat_idx: np.ndarray,
                      delta: np.ndarray) -> None:
    """table.flat[i] += mean of delta over batch entries hitting i.

    Duplicates within a batch are averaged, not summed: every per-sample
    delta is computed from the pre-update table value, so summing them
    would multiply the learning rate by the duplicate count and diverge
    on small state spaces.
    """
    upd = np.zeros(table.size)
    cnt = np.zeros(table.size)
    np.add.at(upd, flat_idx, delta)
    np.add.at(cnt, flat_idx, 1.0)
    hit = cnt > 0
    table.flat[hit] += upd[hit] / cnt[hit]


def iql_train(dataset: Dataset, config: IqlConfig) -> tuple[IqlTables, Policy]:
    """Train Q/V tables from the relabeled dataset; deterministic given seed."""
    s, a, r, s2, done = _transitions(dataset)
    n_states = dataset.meta.n_states
    n_actions = dataset.meta.n_actions or int(a.max()) + 1
    q = np.zeros((n_states, n_actions))
    v = np.zeros(n_states)
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for _ in range(config.steps):
        idx = rng.integers(len(s), size=config.batch_size)
        bs, ba, br, bs2, bdone = s[idx], a[idx], r[idx], s2[idx], done[idx]
        q_sa = q[bs, ba]
        w = expectile_weight(config.expectile, q_sa - v[bs])
        _scatter_mean_add(v, bs, lr * w * (q_sa - v[bs]))
        target = br + config.gamma * (1.0 - bdone) * v[bs2]
        _scatter_mean_add(q, bs * n_actions + ba, lr * (target - q[bs, ba]))
    policy = extract_policy(IqlTables(q=q, v=v), dataset, config.temperature)
    return IqlTables(q=q, v=v), policy


def extract_policy(tables: IqlTables, dataset: Dataset,
                   temperature: float) -> Policy:
    """Greedy argmax of occurrence-summed advantage weights.

    Only actions observed at a state compete; unseen states fall back to
    action 0. Ties break toward the smallest action index.
    """
    n_states, n_actions = tables.q.shape
    counts = np.zeros((n_states, n_actions))
    for traj in dataset.trajectories:
        if traj.actions is None:
            continue
        np.add.at(counts, (np.asarray(traj.states[:-1]), np.asarray(traj.actions)), 1.0)
    adv = (tables.q - tables.v[:, None]) / temperature
    adv -= adv.max(axis=1, keepdims=True)  # same shift per row, argmax-safe
    scores = counts * np.exp(adv)
    actions = tuple(int(np.argmax(row)) for row in scores)
    return Policy(actions=actions)


def evaluate(policy: Policy, env, n_episodes: int, seed: int) -> tuple[float, float]:
    """Deterministic greedy rollouts; success = goal within max_episode_len.

    Start cells are drawn with a per-episode rng seeded seed + episode
    index; neither the policy nor the env is mutated.
    """
    if isinstance(getattr(env, "start_cells", None), tuple):
        starts = tuple(env.state_id(c) for c in env.start_cells)
    else:
        starts = env.start_states
    successes = 0
    lengths = []
    for ep in range(n_episodes):
        rng = np.random.default_rng(seed + ep)
        state = int(starts[rng.integers(len(starts))])
        steps = 0
        reached = False
        for _ in range(env.max_episode_len):
            state, done = env.step(state, policy.action(state))
            steps += 1
            if done:
                reached = True
                break
        successes += reached
        lengths.append(steps)
    return successes / n_episodes, float(np.mean(lengths))


def write_eval_csv(path, n_episodes: int, success_rate: float,
                   mean_length: float) -> None:
    with open(path, "w") as fh:
        fh.write("episodes,success_rate,mean_length\n")
        fh.write(f"{n_episodes},{success_rate!r},{mean_length!r}\n")


def save_iql_tables(tables: IqlTables, path) -> None:
    import json

    obj = {
        "n_states": tables.q.shape[0],
        "n_actions": tables.q.shape[1],
        "q": tables.q.ravel().tolist(),
        "v": tables.v.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_iql_tables(path) -> IqlTables:
    import json

    with open(path) as fh:
        obj = json.load(fh)
    q = np.array(obj["q"]).reshape(obj["n_states"], obj["n_actions"])
    return IqlTables(q=q, v=np.array(obj["v"]))
