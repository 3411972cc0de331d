"""Deterministic toy MDPs (gridworld, chain) and dataset generation.

States are small integers (row-major cell index for grids). The goal is
absorbing and terminates the episode; no extrinsic reward is emitted.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .data import Dataset, DatasetMeta, Trajectory, as_expert
from .policy import Policy

# Action order is also the tie-break order for the expert policy.
UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
GRID_MOVES = ((0, -1), (0, 1), (-1, 0), (1, 0))

CHAIN_LEFT, CHAIN_RIGHT = 0, 1


class EnvError(ValueError):
    """Invalid environment definition or invalid state/action."""


@dataclass(frozen=True)
class GridWorld:
    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    goal: tuple[int, int]
    start_cells: tuple[tuple[int, int], ...]
    max_episode_len: int
    name: str = "grid"

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise EnvError("grid dimensions must be positive")
        if self.max_episode_len < 1:
            raise EnvError("max_episode_len must be positive")
        if not self.start_cells:
            raise EnvError("at least one start cell required")
        for cell in (self.goal, *self.start_cells):
            if not self._in_bounds(cell):
                raise EnvError(f"cell {cell} outside {self.width}x{self.height} grid")
            if cell in self.walls:
                raise EnvError(f"cell {cell} is a wall")
        dist = self._bfs_distance()
        for cell in self.start_cells:
            if dist[self.state_id(cell)] < 0:
                raise EnvError(f"goal unreachable from start cell {cell}")

    def _in_bounds(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_actions(self) -> int:
        return 4

    @property
    def goal_state(self) -> int:
        return self.state_id(self.goal)

    def state_id(self, cell: tuple[int, int]) -> int:
        x, y = cell
        return y * self.width + x

    def cell(self, state: int) -> tuple[int, int]:
        return state % self.width, state // self.width

    def _bfs_distance(self) -> list[int]:
        """Shortest step count to the goal for every cell, -1 if unreachable."""
        dist = [-1] * self.n_states
        dist[self.goal_state] = 0
        queue = deque([self.goal])
        while queue:
            x, y = queue.popleft()
            for dx, dy in GRID_MOVES:
                nxt = (x + dx, y + dy)
                if self._in_bounds(nxt) and nxt not in self.walls:
                    nid = self.state_id(nxt)
                    if dist[nid] < 0:
                        dist[nid] = dist[self.state_id((x, y))] + 1
                        queue.append(nxt)
        return dist

    def step(self, state: int, action: int) -> tuple[int, bool]:
        """Deterministic transition; moving into a wall or boundary is a no-op."""
        if not 0 <= state < self.n_states:
            raise EnvError(f"invalid state id {state}")
        if not 0 <= action < self.n_actions:
            raise EnvError(f"invalid action id {action}")
        x, y = self.cell(state)
        dx, dy = GRID_MOVES[action]
        nxt = (x + dx, y + dy)
        if not self._in_bounds(nxt) or nxt in self.walls:
            nxt = (x, y)
        next_state = self.state_id(nxt)
        return next_state, next_state == self.goal_state


@dataclass(frozen=True)
class ChainMDP:
    """1-D corridor; the rightmost state is the absorbing goal."""

    length: int
    max_episode_len: int
    name: str = "chain"

    def __post_init__(self):
        if self.length < 2:
            raise EnvError("chain length must be >= 2")
        if self.max_episode_len < 1:
            raise EnvError("max_episode_len must be positive")

    @property
    def n_states(self) -> int:
        return self.length

    @property
    def n_actions(self) -> int:
        return 2

    @property
    def goal_state(self) -> int:
        return self.length - 1

    @property
    def start_states(self) -> tuple[int, ...]:
        return tuple(range(self.length - 1))

    def step(self, state: int, action: int) -> tuple[int, bool]:
        if not 0 <= state < self.length:
            raise EnvError(f"invalid state id {state}")
        if action == CHAIN_LEFT:
            nxt = max(0, state - 1)
        elif action == CHAIN_RIGHT:
            nxt = min(self.length - 1, state + 1)
        else:
            raise EnvError(f"invalid action id {action}")
        return nxt, nxt == self.goal_state


def parse_grid_file(path, max_episode_len: int = 100) -> GridWorld:
    """Load a grid from a plain-text spec: "W H" then H rows of . # G S."""
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    return parse_grid_text(lines, max_episode_len=max_episode_len,
                           name=str(path))


def parse_grid_text(lines: list[str], max_episode_len: int = 100,
                    name: str = "grid") -> GridWorld:
    if not lines:
        raise EnvError("empty grid definition")
    try:
        width, height = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise EnvError(f"bad dimension line {lines[0]!r}") from exc
    if len(lines) != height + 1:
        raise EnvError(f"expected {height} rows, got {len(lines) - 1}")
    walls, starts, goal = set(), [], None
    for y in range(height):
        row = lines[1 + y]
        if len(row) != width:
            raise EnvError(f"row {y} has length {len(row)}, expected {width}")
        for x, ch in enumerate(row):
            if ch == "#":
                walls.add((x, y))
            elif ch == "G":
                if goal is not None:
                    raise EnvError("multiple goal cells")
                goal = (x, y)
            elif ch == "S":
                starts.append((x, y))
            elif ch != ".":
                raise EnvError(f"unknown cell character {ch!r} at ({x},{y})")
    if goal is None:
        raise EnvError("no goal cell")
    if not starts:
        raise EnvError("no start cell")
    return GridWorld(width=width, height=height, walls=frozenset(walls),
                     goal=goal, start_cells=tuple(starts),
                     max_episode_len=max_episode_len, name=name)


def expert_policy(env: GridWorld) -> Policy:
    """Shortest-path policy, greedy over BFS distance to the goal.

    Ties break in fixed action order (up, down, left, right). Cells from
    which the goal is unreachable, and the goal itself, store action 0.
    """
    dist = env._bfs_distance()
    actions = []
    for state in range(env.n_states):
        if dist[state] <= 0:
            actions.append(UP)
            continue
        best = UP
        for a in (UP, DOWN, LEFT, RIGHT):
            nxt, _ = env.step(state, a)
            if dist[nxt] >= 0 and dist[nxt] == dist[state] - 1:
                best = a
                break
        actions.append(best)
    return Policy(actions=tuple(actions))


def rollout(env, policy: Policy | str, seed: int, n_episodes: int,
            expert: bool = False) -> Dataset:
    """Generate episodes; `policy` is a Policy or the string "random".

    Deterministic given the seed. Episodes are truncated at
    max_episode_len transitions; the goal terminates early. With
    expert=True the actions are stripped and the dataset flagged as
    expert data.
    """
    if n_episodes < 1:
        raise EnvError(f"n_episodes must be >= 1, got {n_episodes}")
    rng = np.random.default_rng(seed)
    if isinstance(env, GridWorld):
        starts = tuple(env.state_id(c) for c in env.start_cells)
    else:
        starts = env.start_states
    trajectories = []
    n_success = 0
    for _ in range(n_episodes):
        state = int(starts[rng.integers(len(starts))])
        states, acts = [state], []
        for _ in range(env.max_episode_len):
            if policy == "random":
                action = int(rng.integers(env.n_actions))
            else:
                action = policy.action(state)
            state, done = env.step(state, action)
            states.append(state)
            acts.append(action)
            if done:
                n_success += 1
                break
        trajectories.append(Trajectory(states=tuple(states), actions=tuple(acts)))
    meta = DatasetMeta(
        env=env.name,
        n_states=env.n_states,
        seed=seed,
        expert=False,
        goal=env.goal_state,
        n_actions=env.n_actions,
        success_fraction=n_success / n_episodes,
    )
    dataset = Dataset(trajectories=tuple(trajectories), meta=meta)
    return as_expert(dataset) if expert else dataset
