"""Diffusion-actor offline RL with GAN-based policy regularization."""

from .adversarial import Discriminator, disc_loss_vanilla, disc_loss_wgan, down_weight, score_term
from .autodiff import DimensionError, NumericError, Tensor, no_grad
from .critic import TwinCritic, critic_loss, td_targets
from .data import Batch, Dataset, FormatError, load_dataset, normalized_score, sample_batch, save_dataset
from .diffusion import (
    DiffusionPolicy,
    NoiseSchedule,
    diffusion_loss,
    diffusion_loss_per_sample,
    forward_diffuse,
    make_schedule,
    sample_actions,
    sample_actions_np,
)
from .envs import gen_bandit2d, gen_pointmaze, make_env, reference_returns
from .nn import Adam, Mlp, clip_params, init_mlp, load_mlp, mlp_forward, polyak_update, save_mlp
from .trainer import (
    ConfigError,
    TrainConfig,
    TrainerState,
    evaluate,
    init_state,
    policy_loss,
    train,
    train_step,
)

__version__ = "0.1.0"
