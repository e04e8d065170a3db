"""Discriminator over (state, action) pairs and the quantities built on it.

Two modes: ``sigmoid_prob`` (probability head, clamped away from 0 and 1) for
the cross-entropy game, and ``raw_critic`` (unbounded head, weight-clipped by
the trainer) for the Wasserstein game. The down-weight ratio and the policy
score bonus are defined on top of whichever mode is active.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Mlp, init_mlp, mlp_forward

OUTPUT_MODES = ("sigmoid_prob", "raw_critic")
SCORE_VARIANTS = ("neglog_one_minus_d", "raw_critic_score")


class Discriminator:
    def __init__(self, net: Mlp, output_mode: str = "sigmoid_prob", clamp_eps: float = 1e-4):
        if output_mode not in OUTPUT_MODES:
            raise ValueError(f"unknown output mode {output_mode!r}")
        if not 0.0 < clamp_eps < 0.5:
            raise ValueError(f"clamp_eps must be in (0, 0.5), got {clamp_eps}")
        if net.out_dim != 1:
            raise ad.DimensionError("discriminator net must output a scalar per pair")
        self.net = net
        self.output_mode = output_mode
        self.clamp_eps = clamp_eps

    @classmethod
    def create(
        cls,
        obs_dim: int,
        act_dim: int,
        hidden,
        rng: np.random.Generator,
        output_mode: str = "sigmoid_prob",
        clamp_eps: float = 1e-4,
    ) -> "Discriminator":
        net = init_mlp(obs_dim + act_dim, hidden, 1, rng)
        return cls(net, output_mode, clamp_eps)

    def parameters(self):
        return self.net.parameters()

    def raw(self, states, actions) -> Tensor:
        """Unsquashed head value f(s, a), shape (n, 1)."""
        x = ad.concat([ad.as_tensor(states), ad.as_tensor(actions)], axis=-1)
        return mlp_forward(self.net, x)

    def prob(self, states, actions) -> Tensor:
        """sigmoid(f(s, a)) clamped to [clamp_eps, 1 - clamp_eps]."""
        return ad.clip(ad.sigmoid(self.raw(states, actions)), self.clamp_eps, 1.0 - self.clamp_eps)


def disc_loss_vanilla(disc: Discriminator, states, real_actions, fake_actions) -> Tensor:
    """-E[log D(s, a_data)] - E[log(1 - D(s, a_policy))].

    Fake actions must already be detached from the policy graph.
    """
    if disc.output_mode != "sigmoid_prob":
        raise ValueError("vanilla loss needs a sigmoid_prob discriminator")
    d_real = disc.prob(states, real_actions)
    d_fake = disc.prob(states, fake_actions)
    loss = ad.sub(ad.neg(ad.mean(ad.log(d_real))), ad.mean(ad.log(ad.sub(1.0, d_fake))))
    ad.check_finite(loss, "discriminator loss")
    return loss


def disc_loss_wgan(disc: Discriminator, states, real_actions, fake_actions) -> Tensor:
    """E[f(s, a_policy)] - E[f(s, a_data)]; caller clips weights after the step."""
    if disc.output_mode != "raw_critic":
        raise ValueError("wgan loss needs a raw_critic discriminator")
    return ad.sub(ad.mean(disc.raw(states, fake_actions)), ad.mean(disc.raw(states, real_actions)))


def down_weight(disc: Discriminator, states, sampled_actions, data_actions) -> np.ndarray:
    """Detached ratio D(s, a_sampled) / D(s, a_data), both factors clamped.

    Returns a plain (n, 1) array so no gradient can flow through it.
    """
    if disc.output_mode != "sigmoid_prob":
        raise ValueError("down-weight needs a sigmoid_prob discriminator")
    with ad.no_grad():
        num = disc.prob(states, sampled_actions).data
        den = disc.prob(states, data_actions).data
    return num / den


def score_term(disc: Discriminator, states, actions, variant: str) -> Tensor:
    """Per-pair realism bonus, differentiable through ``actions``; (n, 1).

    ``neglog_one_minus_d``: -log(1 - D(s, a)), increasing in D.
    ``raw_critic_score``: the raw head value f(s, a).
    """
    if variant == "neglog_one_minus_d":
        if disc.output_mode != "sigmoid_prob":
            raise ValueError("neglog_one_minus_d needs a sigmoid_prob discriminator")
        return ad.neg(ad.log(ad.sub(1.0, disc.prob(states, actions))))
    if variant == "raw_critic_score":
        if disc.output_mode != "raw_critic":
            raise ValueError("raw_critic_score needs a raw_critic discriminator")
        return disc.raw(states, actions)
    raise ValueError(f"unknown score variant {variant!r}")
