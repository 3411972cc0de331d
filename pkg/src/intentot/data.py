"""Trajectory datasets: representation, JSONL serialization, validation.

Agent datasets carry actions (and later rewards); expert datasets are
state-only. The on-disk format is line-delimited JSON with a single
metadata header line followed by one trajectory per line.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

SCHEMA_VERSION = 1


class DatasetError(ValueError):
    """Base class for dataset validation and IO failures."""


class DatasetParseError(DatasetError):
    """Malformed dataset file; message includes the offending line number."""


class SchemaVersionError(DatasetError):
    """Dataset file written with an unsupported schema version."""


class SelectionError(DatasetError):
    """Not enough qualifying trajectories for an expert selection."""


@dataclass(frozen=True)
class Trajectory:
    """One episode: T states, optionally T-1 actions and T rewards."""

    states: tuple[int, ...]
    actions: tuple[int, ...] | None = None
    rewards: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.states) < 1:
            raise DatasetError("trajectory must contain at least one state")
        if self.actions is not None and len(self.actions) != len(self.states) - 1:
            raise DatasetError(
                f"actions length {len(self.actions)} != T-1 = {len(self.states) - 1}"
            )
        if self.rewards is not None:
            if len(self.rewards) != len(self.states):
                raise DatasetError(
                    f"rewards length {len(self.rewards)} != T = {len(self.states)}"
                )
            if not all(math.isfinite(r) for r in self.rewards):
                raise DatasetError("rewards must be finite")

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class DatasetMeta:
    """Header describing where a dataset came from and how to validate it."""

    env: str
    n_states: int
    seed: int
    expert: bool
    version: int = SCHEMA_VERSION
    goal: int | None = None
    n_actions: int | None = None
    success_fraction: float | None = None

    def to_json(self) -> dict:
        out = {
            "env": self.env,
            "n_states": self.n_states,
            "seed": self.seed,
            "expert": self.expert,
            "version": self.version,
        }
        if self.goal is not None:
            out["goal"] = self.goal
        if self.n_actions is not None:
            out["n_actions"] = self.n_actions
        if self.success_fraction is not None:
            out["success_fraction"] = self.success_fraction
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetMeta":
        version = obj.get("version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"unsupported schema version {version!r}, expected {SCHEMA_VERSION}"
            )
        return cls(
            env=obj["env"],
            n_states=obj["n_states"],
            seed=obj["seed"],
            expert=obj["expert"],
            version=version,
            goal=obj.get("goal"),
            n_actions=obj.get("n_actions"),
            success_fraction=obj.get("success_fraction"),
        )


@dataclass(frozen=True)
class Dataset:
    trajectories: tuple[Trajectory, ...]
    meta: DatasetMeta

    def __post_init__(self):
        for i, traj in enumerate(self.trajectories):
            if any(s < 0 or s >= self.meta.n_states for s in traj.states):
                raise DatasetError(
                    f"trajectory {i}: state id outside [0, {self.meta.n_states})"
                )
            if self.meta.expert and (traj.actions is not None or traj.rewards is not None):
                raise DatasetError(
                    f"trajectory {i}: expert datasets carry no actions or rewards"
                )

    def __len__(self) -> int:
        return len(self.trajectories)


def save_dataset(dataset: Dataset, path) -> None:
    """Write header + one JSON line per trajectory."""
    with open(path, "w") as fh:
        fh.write(json.dumps(dataset.meta.to_json(), sort_keys=True) + "\n")
        for traj in dataset.trajectories:
            rec: dict = {"states": list(traj.states)}
            if traj.actions is not None:
                rec["actions"] = list(traj.actions)
            if traj.rewards is not None:
                rec["rewards"] = list(traj.rewards)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetParseError(f"{path}: empty file, missing header line")
    try:
        meta = DatasetMeta.from_json(json.loads(lines[0]))
    except SchemaVersionError:
        raise
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetParseError(f"{path}: line 1: bad header ({exc})") from exc
    trajectories = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            traj = Trajectory(
                states=tuple(rec["states"]),
                actions=tuple(rec["actions"]) if "actions" in rec else None,
                rewards=tuple(rec["rewards"]) if "rewards" in rec else None,
            )
        except DatasetError as exc:
            raise DatasetError(
                f"{path}: line {lineno} (trajectory {lineno - 2}): {exc}"
            ) from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DatasetParseError(f"{path}: line {lineno}: {exc}") from exc
        trajectories.append(traj)
    return Dataset(trajectories=tuple(trajectories), meta=meta)


def strip_labels(dataset: Dataset, drop_actions: bool = False,
                 drop_rewards: bool = False) -> Dataset:
    """Copy with the named label fields removed; states are untouched."""
    trajs = tuple(
        Trajectory(
            states=t.states,
            actions=None if drop_actions else t.actions,
            rewards=None if drop_rewards else t.rewards,
        )
        for t in dataset.trajectories
    )
    return Dataset(trajectories=trajs, meta=dataset.meta)


def as_expert(dataset: Dataset) -> Dataset:
    """State-only export flagged as expert data."""
    bare = strip_labels(dataset, drop_actions=True, drop_rewards=True)
    return Dataset(trajectories=bare.trajectories,
                   meta=replace(bare.meta, expert=True))


def select_expert_trajectories(dataset: Dataset, k: int,
                               criterion: str = "reached-goal") -> Dataset:
    """Pick the K best trajectories.

    "reached-goal" keeps trajectories ending at the metadata goal;
    "top-return" needs rewards and ranks by summed reward. Ordering is
    deterministic: return descending, length ascending, original index.
    """
    if k < 1:
        raise DatasetError(f"k must be >= 1, got {k}")
    if criterion == "reached-goal":
        if dataset.meta.goal is None:
            raise DatasetError("reached-goal selection needs a goal in metadata")
        goal = dataset.meta.goal
        candidates = [
            (0.0, len(t), i, t)
            for i, t in enumerate(dataset.trajectories)
            if t.states[-1] == goal
        ]
    elif criterion == "top-return":
        if any(t.rewards is None for t in dataset.trajectories):
            raise DatasetError("top-return selection needs rewards on every trajectory")
        candidates = [
            (sum(t.rewards), len(t), i, t)
            for i, t in enumerate(dataset.trajectories)
        ]
    else:
        raise DatasetError(f"unknown criterion {criterion!r}")
    if len(candidates) < k:
        raise SelectionError(f"found {len(candidates)} qualifying trajectories, need {k}")
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    selected = tuple(c[3] for c in candidates[:k])
    return Dataset(trajectories=selected, meta=dataset.meta)
