"""Slippery gridworld CMDP with an absorbing goal and two penalty regions.

The agent picks one of four moves (up, right, down, left); the move succeeds
with probability 1 - slip_prob, otherwise another direction is taken.  Moves
off the grid leave the agent in place.  Reaching the goal is absorbing and
pays the goal reward every step thereafter.  Stepping on a cell of penalty
region 1 (2) earns the penalty on utility signal 1 (2); the constraints keep
each utility above its threshold.

The default layout (goal top-right, penalty rows blocking the direct route,
start bottom-left) is a reconstruction: every cell list, the start cell, and
the slip split are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TabularCmdp

__all__ = ["GridworldSpec", "build_gridworld"]

# (drow, dcol) per action: up, right, down, left
_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

_DEFAULT_RED1 = tuple((1, c) for c in range(0, 4))
_DEFAULT_RED2 = tuple((3, c) for c in range(2, 6))


@dataclass(frozen=True)
class GridworldSpec:
    width: int = 6
    height: int = 6
    goal_cell: tuple[int, int] = (0, 5)
    red_cells_signal1: tuple[tuple[int, int], ...] = _DEFAULT_RED1
    red_cells_signal2: tuple[tuple[int, int], ...] = _DEFAULT_RED2
    start_cell: tuple[int, int] = (5, 0)
    # "point": all initial mass on start_cell; "uniform": over every cell;
    # "uniform_safe": over cells that are neither the goal nor penalized.
    start_dist: str = "point"
    slip_prob: float = 0.1
    slip_split: str = "others"  # slip mass over the three other moves, or "all" four
    penalty: float = -10.0
    goal_reward: float = 1.0
    discount: float = 0.7
    thresholds: tuple[float, ...] = (-2.0, -2.0)

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        if not 0.0 <= self.slip_prob < 1.0:
            raise ValueError("slip_prob out of [0,1)")
        if self.slip_split not in ("others", "all"):
            raise ValueError(f"unknown slip_split {self.slip_split!r}")
        if self.start_dist not in ("point", "uniform", "uniform_safe"):
            raise ValueError(f"unknown start_dist {self.start_dist!r}")
        for name, cell in (("goal_cell", self.goal_cell), ("start_cell", self.start_cell)):
            r, c = cell
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"{name} {cell} outside the {self.height}x{self.width} grid")
        for name, cells in (
            ("red_cells_signal1", self.red_cells_signal1),
            ("red_cells_signal2", self.red_cells_signal2),
        ):
            for cell in cells:
                r, c = cell
                if not (0 <= r < self.height and 0 <= c < self.width):
                    raise ValueError(f"{name} contains {cell}, outside the grid")
                if tuple(cell) == tuple(self.goal_cell):
                    raise ValueError(f"goal cell {cell} cannot be a penalty cell")
        if len(self.thresholds) != 2:
            raise ValueError("gridworld carries exactly two constraint signals")

    def cell_index(self, cell) -> int:
        r, c = cell
        return r * self.width + c

    @classmethod
    def from_dict(cls, doc: dict) -> "GridworldSpec":
        kw = dict(doc)
        for key in ("goal_cell", "start_cell"):
            if key in kw:
                kw[key] = tuple(kw[key])
        for key in ("red_cells_signal1", "red_cells_signal2"):
            if key in kw:
                kw[key] = tuple(tuple(c) for c in kw[key])
        if "thresholds" in kw:
            kw["thresholds"] = tuple(kw["thresholds"])
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "goal_cell": list(self.goal_cell),
            "red_cells_signal1": [list(c) for c in self.red_cells_signal1],
            "red_cells_signal2": [list(c) for c in self.red_cells_signal2],
            "start_cell": list(self.start_cell),
            "start_dist": self.start_dist,
            "slip_prob": self.slip_prob,
            "slip_split": self.slip_split,
            "penalty": self.penalty,
            "goal_reward": self.goal_reward,
            "discount": self.discount,
            "thresholds": list(self.thresholds),
        }


def _move_probs(spec: GridworldSpec, action: int) -> np.ndarray:
    """Probability of actually moving in each of the four directions."""
    p = np.zeros(4)
    if spec.slip_split == "others":
        p[:] = spec.slip_prob / 3.0
        p[action] = 1.0 - spec.slip_prob
    else:
        p[:] = spec.slip_prob / 4.0
        p[action] += 1.0 - spec.slip_prob
    return p


def build_gridworld(spec: GridworldSpec) -> TabularCmdp:
    """Assemble the TabularCmdp for a gridworld layout."""
    spec.validate()
    h, w = spec.height, spec.width
    n_states = h * w
    goal = spec.cell_index(spec.goal_cell)

    transition = np.zeros((n_states, 4, n_states))
    for r in range(h):
        for c in range(w):
            s = r * w + c
            if s == goal:
                transition[s, :, s] = 1.0
                continue
            for a in range(4):
                for direction, p in enumerate(_move_probs(spec, a)):
                    if p == 0.0:
                        continue
                    dr, dc = _MOVES[direction]
                    nr, nc = r + dr, c + dc
                    if not (0 <= nr < h and 0 <= nc < w):
                        nr, nc = r, c  # bumping the wall keeps the agent in place
                    transition[s, a, nr * w + nc] += p

    rewards = np.zeros((3, n_states, 4))
    rewards[0, goal, :] = spec.goal_reward
    for cell in spec.red_cells_signal1:
        rewards[1, spec.cell_index(cell), :] = spec.penalty
    for cell in spec.red_cells_signal2:
        rewards[2, spec.cell_index(cell), :] = spec.penalty

    initial = np.zeros(n_states)
    if spec.start_dist == "point":
        initial[spec.cell_index(spec.start_cell)] = 1.0
    elif spec.start_dist == "uniform":
        initial[:] = 1.0 / n_states
    else:
        red = {spec.cell_index(c) for c in spec.red_cells_signal1}
        red |= {spec.cell_index(c) for c in spec.red_cells_signal2}
        safe = [s for s in range(n_states) if s != goal and s not in red]
        initial[safe] = 1.0 / len(safe)

    bounds = np.abs(rewards).max(axis=(1, 2))
    return TabularCmdp(
        num_states=n_states,
        num_actions=4,
        transition=transition,
        initial_dist=initial,
        rewards=rewards,
        reward_bounds=bounds,
        discount=spec.discount,
        thresholds=np.array(spec.thresholds, dtype=np.float64),
    )
