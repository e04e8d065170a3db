"""Conditional denoising diffusion over bounded continuous actions.

The variance-preserving schedule closes over [beta_min, beta_max] so that the
cumulative signal fraction at the last step is exp(-(beta_min + (beta_max -
beta_min)/2)) for every step count. Sampling runs the ancestral reverse chain
with per-step clamping to the action box; the final step injects no noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Mlp, init_mlp, load_mlp, mlp_forward, save_mlp


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step beta/alpha and cumulative alpha products, indexed 1..steps."""

    steps: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def coeffs(self, step) -> tuple:
        """(beta, alpha, alpha_bar) for 1-based ``step`` (int or int array)."""
        step = np.asarray(step)
        if np.any(step < 1) or np.any(step > self.steps):
            raise ValueError(f"diffusion step {step} outside 1..{self.steps}")
        idx = step - 1
        return self.beta[idx], self.alpha[idx], self.alpha_bar[idx]


def make_schedule(steps: int, beta_min: float = 0.1, beta_max: float = 10.0) -> NoiseSchedule:
    if steps < 1:
        raise ValueError(f"need at least one diffusion step, got {steps}")
    if not (0.0 < beta_min <= beta_max):
        raise ValueError(f"need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}")
    i = np.arange(1, steps + 1, dtype=np.float64)
    exponent = -beta_min / steps - 0.5 * (beta_max - beta_min) * (2.0 * i - 1.0) / steps**2
    beta = 1.0 - np.exp(exponent)
    if np.any(beta <= 0.0) or np.any(beta >= 1.0):
        raise ValueError("schedule parameters put beta outside (0, 1)")
    alpha = 1.0 - beta
    return NoiseSchedule(steps, beta, alpha, np.cumprod(alpha))


def forward_diffuse(a0: np.ndarray, step, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form noising: sqrt(abar_i) * a0 + sqrt(1 - abar_i) * eps.

    ``step`` may be a single 1-based step or one per sample.
    """
    a0 = np.asarray(a0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _, _, abar = schedule.coeffs(step)
    if np.ndim(abar) == 1:
        abar = abar[:, None]
    return np.sqrt(abar) * a0 + np.sqrt(1.0 - abar) * eps


def timestep_embedding(step, dim: int) -> np.ndarray:
    """Sinusoidal embedding of 1-based step indices; shape (..., dim)."""
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    ang = np.asarray(step, dtype=np.float64)[..., None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)


class DiffusionPolicy:
    """Noise-prediction network conditioned on state and step embedding."""

    def __init__(self, net: Mlp, obs_dim: int, act_dim: int, time_embed_dim: int):
        expected = act_dim + obs_dim + time_embed_dim
        if net.in_dim != expected or net.out_dim != act_dim:
            raise ad.DimensionError(
                f"policy net must map {expected} -> {act_dim}, "
                f"got {net.in_dim} -> {net.out_dim}"
            )
        self.net = net
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.time_embed_dim = time_embed_dim

    @classmethod
    def create(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden,
        rng: np.random.Generator,
        time_embed_dim: int = 16,
        activation: str = "mish",
        final_scale: float = 1e-3,
    ) -> "DiffusionPolicy":
        net = init_mlp(
            act_dim + obs_dim + time_embed_dim,
            hidden,
            act_dim,
            rng,
            hidden_activation=activation,
            final_scale=final_scale,
        )
        return cls(net, obs_dim, act_dim, time_embed_dim)

    def predict_noise(self, noisy_actions, states, step) -> Tensor:
        """eps_hat for a batch; ``step`` is scalar or per-sample 1-based."""
        a = ad.as_tensor(noisy_actions)
        s = np.asarray(states, dtype=np.float64)
        n = a.data.shape[0]
        emb = timestep_embedding(step, self.time_embed_dim)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (n, self.time_embed_dim))
        x = ad.concat([a, Tensor(s), Tensor(emb)], axis=-1)
        return mlp_forward(self.net, x)

    def copy(self) -> "DiffusionPolicy":
        return DiffusionPolicy(self.net.copy(), self.obs_dim, self.act_dim, self.time_embed_dim)

    def save(self, path) -> None:
        save_mlp(self.net, path)

    def load_params(self, path) -> None:
        self.net = load_mlp(path)


def diffusion_loss_per_sample(
    policy: DiffusionPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> Tensor:
    """Per-sample squared noise-prediction error, shape (n, 1).

    One uniform step index and one Gaussian draw per sample; the squared
    error sums over action coordinates.
    """
    actions = np.asarray(actions, dtype=np.float64)
    n = actions.shape[0]
    step = rng.integers(1, schedule.steps + 1, size=n)
    eps = rng.standard_normal(actions.shape)
    noisy = forward_diffuse(actions, step, eps, schedule)
    pred = policy.predict_noise(Tensor(noisy), states, step)
    return ad.sum_last(ad.square(ad.sub(Tensor(eps), pred)))


def diffusion_loss(
    policy: DiffusionPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> Tensor:
    """Batch-mean denoising loss (the behavior-cloning surrogate)."""
    return ad.mean(diffusion_loss_per_sample(policy, states, actions, schedule, rng))


def sample_actions(
    policy: DiffusionPolicy,
    states: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    clamp: bool = True,
) -> Tensor:
    """Run the reverse chain from the Gaussian prior; differentiable.

    a_{i-1} = a_i/sqrt(alpha_i) - beta_i/sqrt(alpha_i (1-abar_i)) * eps_hat
              + sqrt(beta_i) * z,   z = 0 on the final step,
    clamped to [-1, 1] after every step when ``clamp`` is set.
    """
    states = np.asarray(states, dtype=np.float64)
    n = states.shape[0]
    a = Tensor(rng.standard_normal((n, policy.act_dim)))
    for i in range(schedule.steps, 0, -1):
        beta, alpha, abar = schedule.coeffs(i)
        eps_hat = policy.predict_noise(a, states, i)
        coef = beta / np.sqrt(alpha * (1.0 - abar))
        a = ad.sub(ad.mul(a, 1.0 / np.sqrt(alpha)), ad.mul(eps_hat, coef))
        if i > 1:
            z = rng.standard_normal((n, policy.act_dim))
            a = ad.add(a, np.sqrt(beta) * z)
        if clamp:
            a = ad.clip(a, -1.0, 1.0)
    return a


def sample_actions_np(
    policy: DiffusionPolicy,
    states: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    clamp: bool = True,
) -> np.ndarray:
    """Reverse-chain sampling without graph recording; returns an ndarray."""
    with ad.no_grad():
        return sample_actions(policy, states, schedule, rng, clamp=clamp).data


def policy_action(
    policy: DiffusionPolicy,
    obs: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Single-observation convenience wrapper around sample_actions_np."""
    return sample_actions_np(policy, np.asarray(obs)[None, :], schedule, rng)[0]
