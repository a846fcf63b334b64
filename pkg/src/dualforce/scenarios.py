"""Built-in MDP scenarios: the 2-state chain, random MDPs and two gridworlds."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mdp import (
    ExpertDataset,
    FeatureMap,
    OfflineDataset,
    TabularMdp,
    TabularPolicy,
    ValidationError,
    generate_offline_dataset,
    merge_datasets,
    Trajectory,
    sample_expert_states,
    trajectory_dataset,
)

UP, DOWN, LEFT, RIGHT = range(4)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}


@dataclass
class Scenario:
    name: str
    mdp: TabularMdp
    features: FeatureMap  # feature map used for successor features and the reward prior
    expert_policy: TabularPolicy
    behavior: list  # [(TabularPolicy, weight)]
    hidden_reward: np.ndarray  # per state; never shown to the learner
    horizon: int
    grid_shape: tuple | None = None
    walls: frozenset = field(default_factory=frozenset)

    def generate(self, episodes: int, expert_samples: int, seed: int) -> tuple[OfflineDataset, ExpertDataset]:
        """Offline mixture plus expert states; the expert episodes are mixed into the offline data."""
        mdp = self.mdp
        meta = {
            "num_states": mdp.num_states,
            "num_actions": mdp.num_actions,
            "gamma": mdp.gamma,
            "seed": int(seed),
            "generator": f"{self.name}:mixture+expert",
        }
        mixture = generate_offline_dataset(mdp, self.behavior, episodes, self.horizon, seed, self.name)
        expert_states, expert_traj = sample_expert_states(
            mdp, self.expert_policy, expert_samples, self.horizon, seed + 1
        )
        # mix in a tenth as many expert episodes as behaviour episodes, plus any episode
        # whose sampled state the data would otherwise miss
        covered = np.zeros(mdp.num_states, dtype=bool)
        covered[mixture.states] = True
        keep = np.arange(expert_samples) < max(1, episodes // 10)
        covered[expert_traj.states[keep]] = True
        for e in np.flatnonzero(~keep):
            if not covered[expert_states[e]]:
                keep[e] = True
                covered[expert_traj.states[e]] = True
        kept = Trajectory(expert_traj.states[keep], expert_traj.actions[keep], expert_traj.next_states[keep])
        offline = merge_datasets([mixture, trajectory_dataset(kept, meta)], meta)
        expert_meta = dict(meta, generator=f"{self.name}:expert-occupancy")
        return offline, ExpertDataset(expert_states, expert_meta)


def chain2(gamma: float = 0.5) -> Scenario:
    """s0 -> s1 -> s1 with a single action, start at s0."""
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    mdp = TabularMdp(P, np.array([1.0, 0.0]), gamma)
    pi = TabularPolicy(np.ones((2, 1)))
    return Scenario(
        name="chain2",
        mdp=mdp,
        features=FeatureMap.one_hot(2),
        expert_policy=pi,
        behavior=[(pi, 1.0)],
        hidden_reward=np.array([0.0, 1.0]),
        horizon=int(np.ceil(np.log(1e-4) / np.log(gamma))),
    )


def random_mdp(num_states: int, num_actions: int, gamma: float, rng: np.random.Generator, concentration: float = 1.0) -> TabularMdp:
    P = rng.dirichlet(np.full(num_states, concentration), size=(num_states, num_actions))
    rho0 = rng.dirichlet(np.ones(num_states))
    return TabularMdp(P, rho0, gamma)


def random_policy(num_states: int, num_actions: int, rng: np.random.Generator, smoothing: float = 0.05) -> TabularPolicy:
    """Random stochastic policy mixed with uniform so every action keeps positive mass."""
    return TabularPolicy(rng.dirichlet(np.ones(num_actions), size=num_states)).smoothed(smoothing)


def random_scenario(num_states: int, num_actions: int, gamma: float, seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    mdp = random_mdp(num_states, num_actions, gamma, rng)
    expert = random_policy(num_states, num_actions, rng)
    behavior = [(random_policy(num_states, num_actions, rng), 0.5), (expert, 0.5)]
    return Scenario(
        name=f"random{num_states}",
        mdp=mdp,
        features=FeatureMap.one_hot(num_states),
        expert_policy=expert,
        behavior=behavior,
        hidden_reward=rng.uniform(-1, 1, num_states),
        horizon=int(np.ceil(np.log(1e-4) / np.log(gamma))),
    )


# ----------------------------------------------------------------------------- gridworlds


class Grid:
    def __init__(self, rows: int, cols: int, walls, goal, start, slip: float):
        self.rows, self.cols = rows, cols
        self.walls = frozenset(walls)
        self.goal, self.start, self.slip = goal, start, slip

    def index(self, cell) -> int:
        return cell[0] * self.cols + cell[1]

    def cell(self, s: int):
        return divmod(s, self.cols)

    @property
    def num_states(self) -> int:
        return self.rows * self.cols

    def step(self, cell, action, blocked=frozenset()):
        if cell == self.goal:
            return cell
        dr, dc = MOVES[action]
        r, c = cell[0] + dr, cell[1] + dc
        if not (0 <= r < self.rows and 0 <= c < self.cols) or (r, c) in self.walls or (r, c) in blocked:
            return cell
        return (r, c)

    def mdp(self, gamma: float) -> TabularMdp:
        """Intended move with probability 1 - slip, otherwise a uniformly random move; the goal absorbs."""
        S = self.num_states
        P = np.zeros((S, 4, S))
        for s in range(S):
            cell = self.cell(s)
            for a in range(4):
                P[s, a, self.index(self.step(cell, a))] += 1.0 - self.slip
                for b in range(4):
                    P[s, a, self.index(self.step(cell, b))] += self.slip / 4
        rho0 = np.zeros(S)
        rho0[self.index(self.start)] = 1.0
        return TabularMdp(P, rho0, gamma)

    def distances(self, blocked=frozenset()) -> np.ndarray:
        """BFS distance to the goal, infinite where unreachable."""
        dist = np.full(self.num_states, np.inf)
        dist[self.index(self.goal)] = 0
        queue = deque([self.goal])
        while queue:
            cur = queue.popleft()
            for a in range(4):
                dr, dc = MOVES[a]
                prev = (cur[0] - dr, cur[1] - dc)
                if not (0 <= prev[0] < self.rows and 0 <= prev[1] < self.cols):
                    continue
                if prev in self.walls or prev in blocked or prev == self.goal:
                    continue
                if self.step(prev, a, blocked) == cur and dist[self.index(prev)] == np.inf:
                    dist[self.index(prev)] = dist[self.index(cur)] + 1
                    queue.append(prev)
        return dist

    def route_policy(self, blocked, noise: float) -> TabularPolicy:
        """Greedy descent of the goal distance with `blocked` cells avoided where possible."""
        restricted = self.distances(blocked)
        free = self.distances()
        probs = np.full((self.num_states, 4), 0.25)
        for s in range(self.num_states):
            cell = self.cell(s)
            if cell in self.walls or cell == self.goal:
                continue
            dist = restricted if np.isfinite(restricted[s]) else free
            succ = [dist[self.index(self.step(cell, a, blocked if dist is restricted else frozenset()))] for a in range(4)]
            best = np.flatnonzero(np.isclose(succ, min(succ)))
            row = np.zeros(4)
            row[best] = 1.0 / len(best)
            probs[s] = (1.0 - noise) * row + noise / 4
        return TabularPolicy(probs)

    def goal_reward(self) -> np.ndarray:
        r = np.zeros(self.num_states)
        r[self.index(self.goal)] = 1.0
        return r


def _band(rows, cols):
    return frozenset((r, c) for r in rows for c in cols)


def grid8_corridors(gamma: float = 0.9, slip: float = 0.05) -> Scenario:
    """8x8 grid split into top/middle/bottom corridors joined at the outer columns.

    Start (3, 0), goal (3, 7). The expert uses the top corridor; the offline
    mixture follows all three corridors.
    """
    walls = _band([2, 5], range(1, 7))
    grid = Grid(8, 8, walls, goal=(3, 7), start=(3, 0), slip=slip)
    inner = range(1, 7)
    top, middle, bottom = _band([0, 1], inner), _band([3, 4], inner), _band([6, 7], inner)
    route_top = grid.route_policy(middle | bottom, noise=0.1)
    route_mid = grid.route_policy(top | bottom, noise=0.3)
    route_bot = grid.route_policy(top | middle, noise=0.3)
    expert = route_top
    behavior = [
        (grid.route_policy(middle | bottom, noise=0.3), 0.3),
        (route_mid, 0.35),
        (route_bot, 0.35),
    ]
    return Scenario(
        name="grid8-corridors",
        mdp=grid.mdp(gamma),
        features=FeatureMap.grid_coordinates(8, 8),
        expert_policy=expert,
        behavior=behavior,
        hidden_reward=grid.goal_reward(),
        horizon=30,
        grid_shape=(8, 8),
        walls=walls,
    )


def grid_obstacle(gamma: float = 0.9, slip: float = 0.05) -> Scenario:
    """5x5 grid with the centre blocked; the expert goes around it either way."""
    walls = frozenset({(2, 2)})
    grid = Grid(5, 5, walls, goal=(2, 4), start=(2, 0), slip=slip)
    over = grid.route_policy(_band([3, 4], range(5)), noise=0.1)
    under = grid.route_policy(_band([0, 1], range(5)), noise=0.1)
    expert = TabularPolicy(0.5 * over.probs + 0.5 * under.probs)
    behavior = [
        (over.smoothed(0.3), 0.35),
        (under.smoothed(0.3), 0.35),
        (TabularPolicy.uniform(grid.num_states, 4), 0.3),
    ]
    return Scenario(
        name="grid-obstacle",
        mdp=grid.mdp(gamma),
        features=FeatureMap.grid_coordinates(5, 5),
        expert_policy=expert,
        behavior=behavior,
        hidden_reward=grid.goal_reward(),
        horizon=25,
        grid_shape=(5, 5),
        walls=walls,
    )


SCENARIOS = {
    "chain2": chain2,
    "grid8-corridors": grid8_corridors,
    "grid-obstacle": grid_obstacle,
}


def build_scenario(name: str, **kwargs) -> Scenario:
    if name.startswith("random"):
        return random_scenario(int(name[len("random"):] or 10), kwargs.pop("num_actions", 3), kwargs.pop("gamma", 0.9), kwargs.pop("seed", 0))
    try:
        return SCENARIOS[name](**kwargs)
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None
