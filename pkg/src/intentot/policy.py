"""Greedy tabular policy shared by the environments and the RL consumer."""
from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Policy:
    """One action per state, optionally with the extraction scores kept."""

    actions: tuple[int, ...]
    scores: tuple[tuple[float, ...], ...] | None = None

    def action(self, state: int) -> int:
        return self.actions[state]

    @property
    def n_states(self) -> int:
        return len(self.actions)


def save_policy(policy: Policy, path) -> None:
    obj: dict = {"actions": list(policy.actions)}
    if policy.scores is not None:
        obj["scores"] = [list(row) for row in policy.scores]
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_policy(path) -> Policy:
    with open(path) as fh:
        obj = json.load(fh)
    scores = obj.get("scores")
    return Policy(
        actions=tuple(obj["actions"]),
        scores=tuple(tuple(row) for row in scores) if scores is not None else None,
    )
