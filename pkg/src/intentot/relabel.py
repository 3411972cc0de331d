"""Dense reward relabeling of agent trajectories via intent-space OT.

Every agent trajectory is aligned to every expert trajectory: embed both,
build the lookahead cost, locate the expert tail, solve entropic OT on
the tail with renormalized uniform marginals, and turn per-state
transport costs into rewards alpha * exp(-tau * T_a * <P_i, C_i>).
Rewards are aggregated across experts (max by default) and written back
into the dataset.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Trajectory
from .intents import IntentModel
from .ot import TransportPlan, build_cost_matrix, sinkhorn, tail_index, transport_cost

AGGREGATORS = ("max", "min")
RESCALE_MODES = ("none", "iql-range", "iql-range-minus-one")


@dataclass(frozen=True)
class RelabelConfig:
    alpha: float = 5.0
    tau: float = 0.5
    k: int = 2
    epsilon: float = 0.001
    max_iters: int = 200
    tolerance: float = 1e-9
    aggregator: str = "max"
    rescale: str = "iql-range-minus-one"

    def __post_init__(self):
        if self.alpha <= 0 or self.tau <= 0 or self.epsilon <= 0:
            raise ValueError("alpha, tau and epsilon must be positive")
        if self.k < 1 or self.max_iters < 1:
            raise ValueError("k and max_iters must be positive integers")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"aggregator must be one of {AGGREGATORS}")
        if self.rescale not in RESCALE_MODES:
            raise ValueError(f"rescale must be one of {RESCALE_MODES}")

    @classmethod
    def from_file(cls, path) -> "RelabelConfig":
        """Read key=value lines; '#' starts a comment."""
        fields: dict = {}
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}: line {lineno}: expected key=value")
                key, value = (tok.strip() for tok in line.split("=", 1))
                fields[key] = value
        return cls.from_mapping(fields)

    @classmethod
    def from_mapping(cls, fields: dict) -> "RelabelConfig":
        kwargs: dict = {}
        casts = {"alpha": float, "tau": float, "k": int, "epsilon": float,
                 "max_iters": int, "tolerance": float,
                 "aggregator": str, "rescale": str}
        for key, value in fields.items():
            if key not in casts:
                raise ValueError(f"unknown relabel config key {key!r}")
            kwargs[key] = casts[key](value)
        return cls(**kwargs)


@dataclass(frozen=True)
class PairAlignment:
    """Outcome of aligning one agent trajectory to one expert trajectory."""

    j1: int
    transport_cost: float
    iterations_run: int
    marginal_error: float


@dataclass(frozen=True)
class TrajectoryProvenance:
    trajectory_index: int
    chosen_expert: int
    alignments: tuple[PairAlignment, ...]


@dataclass(frozen=True)
class RelabeledDataset:
    dataset: Dataset
    provenance: tuple[TrajectoryProvenance, ...]


def reward_from_plan(plan, cost_tail, t_a: int, alpha: float,
                     tau: float) -> np.ndarray:
    """r_i = alpha * exp(-tau * T_a * sum_j P[i, j] * C[i, j])."""
    p = plan.values if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    c = np.asarray(cost_tail, dtype=float)
    if p.shape != c.shape:
        raise ValueError(f"plan shape {p.shape} != cost shape {c.shape}")
    if p.shape[0] != t_a:
        raise ValueError(f"plan has {p.shape[0]} rows, expected T_a = {t_a}")
    row_cost = np.sum(p * c, axis=1)
    return alpha * np.exp(-tau * t_a * row_cost)


def relabel_pair(agent_traj: Trajectory, expert_traj: Trajectory,
                 model: IntentModel, config: RelabelConfig):
    """Rewards for one (agent, expert) pair plus alignment provenance."""
    psi_a = model.psi[np.asarray(agent_traj.states)]
    psi_e = model.psi[np.asarray(expert_traj.states)]
    cost = build_cost_matrix(psi_a, psi_e, config.k)
    j1 = tail_index(cost)
    tail = cost.values[:, j1 - 1:]
    plan = sinkhorn(tail, config.epsilon, config.max_iters, config.tolerance)
    rewards = reward_from_plan(plan, tail, len(agent_traj), config.alpha,
                               config.tau)
    alignment = PairAlignment(
        j1=j1,
        transport_cost=transport_cost(plan, tail),
        iterations_run=plan.iterations_run,
        marginal_error=plan.marginal_error,
    )
    return rewards, alignment


def relabel_dataset(agent_dataset: Dataset, expert_dataset: Dataset,
                    model: IntentModel, config: RelabelConfig) -> RelabeledDataset:
    """Align every agent trajectory to every expert and aggregate rewards.

    Aggregation is elementwise max (or min) across experts; the chosen
    expert per trajectory is the one with the largest (smallest) summed
    reward, first index on ties.
    """
    if len(expert_dataset) == 0:
        raise ValueError("expert dataset is empty")
    if agent_dataset.meta.n_states > model.n_states or \
            expert_dataset.meta.n_states > model.n_states:
        raise ValueError("dataset state space exceeds intent model tables")
    trajectories = []
    provenance = []
    for idx, agent_traj in enumerate(agent_dataset.trajectories):
        per_expert = []
        alignments = []
        for expert_traj in expert_dataset.trajectories:
            rewards, alignment = relabel_pair(agent_traj, expert_traj, model,
                                              config)
            per_expert.append(rewards)
            alignments.append(alignment)
        stacked = np.stack(per_expert)
        if config.aggregator == "max":
            aggregated = stacked.max(axis=0)
            chosen = int(np.argmax(stacked.sum(axis=1)))
        else:
            aggregated = stacked.min(axis=0)
            chosen = int(np.argmin(stacked.sum(axis=1)))
        trajectories.append(replace(agent_traj, rewards=tuple(float(r) for r in aggregated)))
        provenance.append(TrajectoryProvenance(
            trajectory_index=idx, chosen_expert=chosen,
            alignments=tuple(alignments)))
    dataset = Dataset(trajectories=tuple(trajectories), meta=agent_dataset.meta)
    return RelabeledDataset(dataset=dataset, provenance=tuple(provenance))


def rescale_rewards(relabeled: RelabeledDataset, mode: str,
                    alpha: float = 1.0) -> RelabeledDataset:
    """Downstream reward rescaling.

    "iql-range" multiplies every reward by 1000 / (max_return - min_return)
    over per-trajectory reward sums; "iql-range-minus-one" first subtracts
    `alpha` from every reward, then applies the same range scaling. The
    subtraction is 1 in units of the reward ceiling: relabeled rewards
    live in (0, alpha], so passing the relabeling alpha shifts them into
    (-alpha, 0]. Non-positive rewards are what makes goal termination
    preferable to collecting dense positive reward forever, which is the
    point of the subtraction in goal-reaching tasks.
    """
    if mode not in RESCALE_MODES:
        raise ValueError(f"rescale mode must be one of {RESCALE_MODES}")
    if mode == "none":
        return relabeled
    rewards = [np.asarray(t.rewards, dtype=float)
               for t in relabeled.dataset.trajectories]
    if mode == "iql-range-minus-one":
        rewards = [r - alpha for r in rewards]
    returns = np.array([r.sum() for r in rewards])
    if len(returns) < 2 or returns.max() == returns.min():
        raise ValueError("range rescaling needs at least two distinct returns")
    factor = 1000.0 / (returns.max() - returns.min())
    trajectories = tuple(
        replace(t, rewards=tuple(float(x) for x in r * factor))
        for t, r in zip(relabeled.dataset.trajectories, rewards)
    )
    dataset = Dataset(trajectories=trajectories, meta=relabeled.dataset.meta)
    return RelabeledDataset(dataset=dataset, provenance=relabeled.provenance)


def write_provenance(relabeled: RelabeledDataset, path) -> None:
    """One JSON line per agent trajectory."""
    with open(path, "w") as fh:
        for rec in relabeled.provenance:
            obj = {
                "trajectory": rec.trajectory_index,
                "chosen_expert": rec.chosen_expert,
                "experts": [
                    {
                        "j1": al.j1,
                        "transport_cost": al.transport_cost,
                        "iterations_run": al.iterations_run,
                        "marginal_error": al.marginal_error,
                    }
                    for al in rec.alignments
                ],
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
