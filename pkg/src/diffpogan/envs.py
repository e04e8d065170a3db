"""Synthetic control tasks, scripted behavior policies, dataset generators.

``bandit2d`` is a one-step task whose behavior data is an even mixture of two
action modes, probing whether a policy can keep both. ``pointmaze`` is a
sparse-reward navigation task: a point mass must round an interior wall to
reach a corner goal, so per-step blends of good and random actions drift into
the wall while directed behavior gets through.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset

BANDIT_CENTERS = np.array([[-0.6, -0.6], [0.6, 0.6]])

# pointmaze geometry and dynamics constants
MAZE_GOAL = np.array([0.9, 0.9])
MAZE_GOAL_RADIUS = 0.1
MAZE_WALL_X = 0.5
MAZE_WALL_TOP = 0.65
MAZE_ACCEL = 0.03
MAZE_VMAX = 0.12
MAZE_MAX_STEPS = 100
_WAYPOINT = np.array([0.3, 0.85])


class Bandit2D:
    """Single-step task: reward is 1 minus distance to the nearest mode."""

    name = "bandit2d"
    obs_dim = 1
    act_dim = 2
    max_steps = 1

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        dist = np.linalg.norm(BANDIT_CENTERS - action, axis=1).min()
        return np.zeros(1), 1.0 - float(dist), True


class PointMaze:
    """Point mass in the unit box with an interior wall below a gap.

    Observation (x, y, vx, vy); action is bounded acceleration. Reward 1 on
    entering the goal disc, 0 elsewhere; episodes end on goal or timeout.
    """

    name = "pointmaze"
    obs_dim = 4
    act_dim = 2
    max_steps = MAZE_MAX_STEPS

    def __init__(self):
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.t = 0

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.pos = np.array([0.08, 0.08]) + rng.uniform(0.0, 0.08, size=2)
        self.vel = np.zeros(2)
        self.t = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self.vel = np.clip(self.vel + MAZE_ACCEL * a, -MAZE_VMAX, MAZE_VMAX)
        nxt = self.pos + self.vel
        # interior wall: block x-crossings below the gap
        if (self.pos[0] - MAZE_WALL_X) * (nxt[0] - MAZE_WALL_X) < 0.0:
            frac = (MAZE_WALL_X - self.pos[0]) / (nxt[0] - self.pos[0])
            y_cross = self.pos[1] + frac * (nxt[1] - self.pos[1])
            if y_cross <= MAZE_WALL_TOP:
                nxt[0] = self.pos[0]
                self.vel[0] = 0.0
        # box walls absorb the normal velocity component
        for k in range(2):
            if nxt[k] < 0.0 or nxt[k] > 1.0:
                nxt[k] = np.clip(nxt[k], 0.0, 1.0)
                self.vel[k] = 0.0
        self.pos = nxt
        self.t += 1
        at_goal = np.linalg.norm(self.pos - MAZE_GOAL) <= MAZE_GOAL_RADIUS
        reward = 1.0 if at_goal else 0.0
        done = bool(at_goal or self.t >= self.max_steps)
        return self._obs(), reward, done


def make_env(name: str):
    if name == "bandit2d":
        return Bandit2D()
    if name == "pointmaze":
        return PointMaze()
    raise ValueError(f"unknown env {name!r}")


def random_policy(obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=2)


def bandit_expert(obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Plays one of the two modes exactly, chosen at random."""
    return BANDIT_CENTERS[rng.integers(0, 2)].copy()


def maze_expert(obs: np.ndarray, rng: np.random.Generator, noise: float = 0.1) -> np.ndarray:
    """PD controller via a waypoint above the wall gap, lightly jittered."""
    pos, vel = obs[:2], obs[2:]
    if pos[0] < MAZE_WALL_X and pos[1] < MAZE_WALL_TOP + 0.1:
        target = _WAYPOINT
    else:
        target = MAZE_GOAL
    a = 12.0 * (target - pos) - 8.0 * vel
    if noise > 0.0:
        a = a + rng.normal(0.0, noise, size=2)
    return np.clip(a, -1.0, 1.0)


def expert_policy(env_name: str):
    return bandit_expert if env_name == "bandit2d" else maze_expert


def rollout(env, policy, rng: np.random.Generator) -> tuple[list, float]:
    """Run one episode; returns (transition tuples, undiscounted return)."""
    obs = env.reset(rng)
    transitions = []
    total = 0.0
    done = False
    while not done:
        action = np.clip(policy(obs, rng), -1.0, 1.0)
        nxt, reward, done = env.step(action)
        transitions.append((obs, action, reward, nxt, done))
        total += reward
        obs = nxt
    return transitions, total


def measure_return(env, policy, episodes: int, rng: np.random.Generator) -> float:
    return float(np.mean([rollout(env, policy, rng)[1] for _ in range(episodes)]))


def reference_returns(env_name: str, seed: int = 7) -> tuple[float, float]:
    """Canonical (random, expert) reference returns for an env name."""
    return remeasure_reference_returns(env_name, seed)


REF_EPISODES = 100


def _measured_meta(env_name: str, quality_mix, meas_seed: int) -> dict:
    """Reference returns measured by scripted rollouts under a stored seed."""
    rand_ret, exp_ret = remeasure_reference_returns(env_name, meas_seed)
    return {
        "env": env_name,
        "random_return": rand_ret,
        "expert_return": exp_ret,
        "quality_mix": quality_mix,
        "seed": meas_seed,
        "ref_episodes": REF_EPISODES,
    }


def remeasure_reference_returns(env_name: str, meas_seed: int) -> tuple[float, float]:
    """Re-roll the scripted policies with the seed a dataset's meta stores."""
    env = make_env(env_name)
    rand_ret = measure_return(env, random_policy, REF_EPISODES, np.random.default_rng([meas_seed, 0]))
    exp_ret = measure_return(
        env, expert_policy(env_name), REF_EPISODES, np.random.default_rng([meas_seed, 1])
    )
    return rand_ret, exp_ret


def gen_bandit2d(n: int, rng: np.random.Generator) -> Dataset:
    """Synthesizes the two-mode bandit dataset directly (all terminal)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    which = rng.integers(0, 2, size=n)
    actions = np.clip(BANDIT_CENTERS[which] + rng.normal(0.0, 0.05, size=(n, 2)), -1.0, 1.0)
    dists = np.linalg.norm(actions[:, None, :] - BANDIT_CENTERS[None, :, :], axis=2).min(axis=1)
    rewards = 1.0 - dists
    obs = np.zeros((n, 1))
    meta = _measured_meta("bandit2d", None, int(rng.integers(2**31)))
    return Dataset(obs, actions, rewards, obs.copy(), np.ones(n, dtype=bool), meta)


def gen_pointmaze(n: int, quality_mix: float, rng: np.random.Generator) -> Dataset:
    """Rolls expert and random episodes until ~quality_mix of n transitions
    come from the expert, then fills with random episodes and truncates."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not 0.0 <= quality_mix <= 1.0:
        raise ValueError(f"quality_mix must be in [0, 1], got {quality_mix}")
    env = PointMaze()
    target_expert = int(round(n * quality_mix))
    rows: list = []
    n_expert = 0
    while n_expert < target_expert:
        transitions, _ = rollout(env, maze_expert, rng)
        rows.extend(transitions)
        n_expert += len(transitions)
    while len(rows) < n:
        transitions, _ = rollout(env, random_policy, rng)
        rows.extend(transitions)
    rows = rows[:n]
    obs = np.stack([r[0] for r in rows])
    actions = np.stack([r[1] for r in rows])
    rewards = np.array([r[2] for r in rows])
    nxt = np.stack([r[3] for r in rows])
    terminals = np.array([r[4] for r in rows], dtype=bool)
    meta = _measured_meta("pointmaze", quality_mix, int(rng.integers(2**31)))
    return Dataset(obs, actions, rewards, nxt, terminals, meta)
