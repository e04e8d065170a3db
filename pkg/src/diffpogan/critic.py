"""Twin Q-networks with target copies and the clipped double-Q backup."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Mlp, init_mlp, mlp_forward, polyak_update


class TwinCritic:
    """Online pair (q1, q2) and frozen targets, each mapping (s, a) -> scalar."""

    def __init__(self, q1: Mlp, q2: Mlp, q1_target: Mlp, q2_target: Mlp):
        self.q1 = q1
        self.q2 = q2
        self.q1_target = q1_target
        self.q2_target = q2_target

    @classmethod
    def create(cls, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator) -> "TwinCritic":
        q1 = init_mlp(obs_dim + act_dim, hidden, 1, rng)
        q2 = init_mlp(obs_dim + act_dim, hidden, 1, rng)
        return cls(q1, q2, q1.copy(), q2.copy())

    def parameters(self):
        return self.q1.parameters() + self.q2.parameters()

    def online(self, states, actions) -> tuple[Tensor, Tensor]:
        x = ad.concat([ad.as_tensor(states), ad.as_tensor(actions)], axis=-1)
        return mlp_forward(self.q1, x), mlp_forward(self.q2, x)

    def target_min(self, states, actions) -> np.ndarray:
        """min over target critics, computed without graph recording; (n, 1)."""
        with ad.no_grad():
            x = ad.concat([ad.as_tensor(states), ad.as_tensor(actions)], axis=-1)
            t1 = mlp_forward(self.q1_target, x).data
            t2 = mlp_forward(self.q2_target, x).data
        return np.minimum(t1, t2)

    def update_targets(self, rho: float) -> None:
        polyak_update(self.q1_target, self.q1, rho)
        polyak_update(self.q2_target, self.q2, rho)


def td_targets(
    rewards: np.ndarray,
    terminals: np.ndarray,
    next_states: np.ndarray,
    next_actions: np.ndarray,
    critics: TwinCritic,
    gamma: float,
) -> np.ndarray:
    """y = r + gamma * (1 - done) * min_target(s', a'); detached, shape (n, 1)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    r = np.asarray(rewards, dtype=np.float64).reshape(-1, 1)
    live = 1.0 - np.asarray(terminals, dtype=np.float64).reshape(-1, 1)
    return r + gamma * live * critics.target_min(next_states, next_actions)


def critic_loss(critics: TwinCritic, states, actions, targets: np.ndarray) -> Tensor:
    """Mean of (q1 - y)^2 + (q2 - y)^2 over the batch."""
    q1, q2 = critics.online(states, actions)
    y = Tensor(np.asarray(targets, dtype=np.float64).reshape(-1, 1))
    return ad.add(ad.mean(ad.square(ad.sub(q1, y))), ad.mean(ad.square(ad.sub(q2, y))))
