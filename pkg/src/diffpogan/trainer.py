"""Interleaved discriminator / critic / delayed-policy training loop.

Per step, in order: sample a minibatch, sample next actions from the target
policy, update the discriminator, update the twin critics against the clipped
double-Q backup, update the policy every ``policy_delay`` steps with the
composite objective (normalized Q term, down-weighted denoising term, realism
score), then Polyak-update every target network.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .adversarial import Discriminator, disc_loss_vanilla, disc_loss_wgan, down_weight, score_term
from .autodiff import NumericError, Tensor, frozen
from .critic import TwinCritic, critic_loss, td_targets
from .data import Dataset, sample_batch, normalized_score
from .diffusion import (
    DiffusionPolicy,
    NoiseSchedule,
    diffusion_loss_per_sample,
    make_schedule,
    policy_action,
    sample_actions,
    sample_actions_np,
)
from .envs import make_env, reference_returns
from .nn import Adam, clip_params, load_mlp, polyak_update, save_mlp

GAN_VARIANTS = ("vanilla", "wgan")

METRICS_HEADER = [
    "step",
    "critic_loss",
    "policy_loss",
    "disc_loss",
    "diffusion_loss",
    "mean_q",
    "down_weight_mean",
    "eval_return",
    "normalized_score",
]

NETWORK_FILES = {
    "policy": "policy.mlp",
    "policy_target": "policy_target.mlp",
    "q1": "q1.mlp",
    "q2": "q2.mlp",
    "q1_target": "q1_target.mlp",
    "q2_target": "q2_target.mlp",
    "disc": "disc.mlp",
}


class ConfigError(ValueError):
    """A training configuration is invalid or contains unknown keys."""


@dataclass
class TrainConfig:
    diffusion_steps: int = 5
    beta_min: float = 0.1
    beta_max: float = 10.0
    gamma: float = 0.99
    polyak: float = 0.995
    bc_weight: float = 1.0
    q_norm_scale: float = 2.5
    policy_delay: int = 2
    gan_variant: str = "vanilla"
    batch_size: int = 256
    total_steps: int = 20_000
    seed: int = 0
    eval_interval: int = 1000
    eval_episodes: int = 10
    policy_hidden: tuple = (64, 64, 64)
    critic_hidden: tuple = (64, 64)
    disc_hidden: tuple = (64, 64)
    time_embed_dim: int = 16
    policy_lr: float = 3e-4
    critic_lr: float = 3e-4
    disc_lr: float = 1e-4
    wgan_clip: float = 0.01
    reward_shift: bool = False
    use_q_term: bool = True
    use_score_term: bool = True
    use_down_weight: bool = True

    def __post_init__(self):
        self.policy_hidden = tuple(self.policy_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        self.disc_hidden = tuple(self.disc_hidden)
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.diffusion_steps >= 1, "diffusion_steps must be >= 1"),
            (0.0 < self.beta_min <= self.beta_max, "need 0 < beta_min <= beta_max"),
            (0.0 < self.gamma <= 1.0, "gamma must be in (0, 1]"),
            (0.0 <= self.polyak < 1.0, "polyak must be in [0, 1)"),
            (self.bc_weight >= 0.0, "bc_weight must be >= 0"),
            (self.q_norm_scale > 0.0, "q_norm_scale must be > 0"),
            (self.policy_delay >= 1, "policy_delay must be >= 1"),
            (self.gan_variant in GAN_VARIANTS, f"gan_variant must be one of {GAN_VARIANTS}"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.total_steps >= 0, "total_steps must be >= 0"),
            (self.eval_interval >= 1, "eval_interval must be >= 1"),
            (self.eval_episodes >= 1, "eval_episodes must be >= 1"),
            (self.wgan_clip > 0.0, "wgan_clip must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("policy_hidden", "critic_hidden", "disc_hidden"):
            d[key] = list(d[key])
        return d

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    @property
    def score_variant(self) -> str:
        return "neglog_one_minus_d" if self.gan_variant == "vanilla" else "raw_critic_score"

    @property
    def disc_mode(self) -> str:
        return "sigmoid_prob" if self.gan_variant == "vanilla" else "raw_critic"

    @property
    def needs_critic(self) -> bool:
        return self.use_q_term

    @property
    def needs_disc(self) -> bool:
        # the wgan head has no probability output, so no down-weight there
        return self.use_score_term or (self.use_down_weight and self.gan_variant == "vanilla")


@dataclass
class TrainerState:
    config: TrainConfig
    schedule: NoiseSchedule
    policy: DiffusionPolicy
    policy_target: DiffusionPolicy
    critics: TwinCritic
    disc: Discriminator
    policy_opt: Adam
    critic_opt: Adam
    disc_opt: Adam
    rng: np.random.Generator
    step: int = 0
    trace: list | None = None

    def frozen_non_policy(self):
        return frozen(self.critics.parameters() + self.disc.parameters())


def init_state(config: TrainConfig, obs_dim: int, act_dim: int) -> TrainerState:
    rng = np.random.default_rng(config.seed)
    policy = DiffusionPolicy.create(
        obs_dim, act_dim, config.policy_hidden, rng, time_embed_dim=config.time_embed_dim
    )
    critics = TwinCritic.create(obs_dim, act_dim, config.critic_hidden, rng)
    disc = Discriminator.create(obs_dim, act_dim, config.disc_hidden, rng, output_mode=config.disc_mode)
    return TrainerState(
        config=config,
        schedule=make_schedule(config.diffusion_steps, config.beta_min, config.beta_max),
        policy=policy,
        policy_target=policy.copy(),
        critics=critics,
        disc=disc,
        policy_opt=Adam(policy.net.parameters(), lr=config.policy_lr),
        critic_opt=Adam(critics.parameters(), lr=config.critic_lr),
        disc_opt=Adam(disc.parameters(), lr=config.disc_lr),
        rng=rng,
    )


def policy_loss(
    state: TrainerState,
    batch,
    down_weight_override: np.ndarray | None = None,
) -> tuple[Tensor, dict]:
    """Negative of the maximized objective; gradients reach only the policy.

    alpha = q_norm_scale / mean|Q_min| with a detached denominator; the
    down-weight factor is a plain array and carries no gradient.
    """
    cfg = state.config
    states = batch.observations
    metrics: dict = {}
    with state.frozen_non_policy():
        actions = sample_actions(state.policy, states, state.schedule, state.rng)

        per_sample = diffusion_loss_per_sample(
            state.policy, states, batch.actions, state.schedule, state.rng
        )
        metrics["diffusion_loss"] = float(per_sample.data.mean())
        if cfg.use_down_weight and cfg.gan_variant == "vanilla":
            if down_weight_override is not None:
                weights = down_weight_override
            else:
                weights = down_weight(state.disc, states, actions.data, batch.actions)
            metrics["down_weight_mean"] = float(weights.mean())
            bc_term = ad.mean(ad.mul(per_sample, weights))
        else:
            bc_term = ad.mean(per_sample)
        loss = ad.mul(bc_term, cfg.bc_weight)

        if cfg.use_q_term:
            q1, q2 = state.critics.online(states, actions)
            q_min = ad.minimum(q1, q2)
            metrics["mean_q"] = float(q_min.data.mean())
            denom = float(np.mean(np.abs(q_min.data)))
            if denom > 0.0:
                alpha = cfg.q_norm_scale / denom
                loss = ad.sub(loss, ad.mul(ad.mean(q_min), alpha))

        if cfg.use_score_term:
            bonus = ad.mean(score_term(state.disc, states, actions, cfg.score_variant))
            loss = ad.sub(loss, bonus)

    metrics["policy_loss"] = float(loss.data)
    return loss, metrics


def train_step(state: TrainerState, ds: Dataset) -> dict:
    """One pass of the interleaved update; returns this step's metrics."""
    cfg = state.config
    batch = sample_batch(ds, cfg.batch_size, state.rng)
    metrics: dict = {}

    if cfg.needs_critic:
        next_actions = sample_actions_np(
            state.policy_target, batch.next_observations, state.schedule, state.rng
        )

    if cfg.needs_disc:
        with ad.no_grad():
            fake = sample_actions_np(state.policy, batch.observations, state.schedule, state.rng)
        state.disc_opt.zero_grad()
        if cfg.gan_variant == "vanilla":
            d_loss = disc_loss_vanilla(state.disc, batch.observations, batch.actions, fake)
        else:
            d_loss = disc_loss_wgan(state.disc, batch.observations, batch.actions, fake)
        d_loss.backward()
        state.disc_opt.step()
        if cfg.gan_variant == "wgan":
            clip_params(state.disc.net, cfg.wgan_clip)
        metrics["disc_loss"] = float(d_loss.data)
        if state.trace is not None:
            state.trace.append("disc")

    if cfg.needs_critic:
        targets = td_targets(
            batch.rewards, batch.terminals, batch.next_observations,
            next_actions, state.critics, cfg.gamma,
        )
        state.critic_opt.zero_grad()
        c_loss = critic_loss(state.critics, batch.observations, batch.actions, targets)
        c_loss.backward()
        state.critic_opt.step()
        metrics["critic_loss"] = float(c_loss.data)
        if state.trace is not None:
            state.trace.append("critic")

    if state.step % cfg.policy_delay == 0:
        state.policy_opt.zero_grad()
        p_loss, p_metrics = policy_loss(state, batch)
        ad.check_finite(p_loss, "policy loss")
        p_loss.backward()
        state.policy_opt.step()
        metrics.update(p_metrics)
        if state.trace is not None:
            state.trace.append("policy")

    polyak_update(state.policy_target.net, state.policy.net, cfg.polyak)
    state.critics.update_targets(cfg.polyak)
    if state.trace is not None:
        state.trace.append("targets")

    state.step += 1
    return metrics


def evaluate(
    policy: DiffusionPolicy,
    env,
    schedule: NoiseSchedule,
    n_episodes: int,
    seed: int,
    refs: tuple[float, float],
) -> tuple[float, float]:
    """Mean undiscounted return over episodes, plus its normalized score.

    Each episode gets its own generator derived from (seed, episode index).
    """
    returns = []
    for ep in range(n_episodes):
        rng = np.random.default_rng([int(seed), ep])
        obs = env.reset(rng)
        done = False
        total = 0.0
        while not done:
            action = policy_action(policy, obs, schedule, rng)
            obs, reward, done = env.step(action)
            total += reward
        returns.append(total)
    mean_ret = float(np.mean(returns))
    return mean_ret, normalized_score(mean_ret, refs[0], refs[1])


def dataset_refs(ds: Dataset) -> tuple[float, float]:
    meta = ds.meta
    if "random_return" in meta and "expert_return" in meta:
        return float(meta["random_return"]), float(meta["expert_return"])
    return reference_returns(meta.get("env", "pointmaze"))


def save_checkpoint(state: TrainerState, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nets = {
        "policy": state.policy.net,
        "policy_target": state.policy_target.net,
        "q1": state.critics.q1,
        "q2": state.critics.q2,
        "q1_target": state.critics.q1_target,
        "q2_target": state.critics.q2_target,
        "disc": state.disc.net,
    }
    for key, net in nets.items():
        save_mlp(net, out_dir / NETWORK_FILES[key])
    manifest = {
        "step": state.step,
        "config_hash": state.config.hash(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "rng_state": _encode_rng(state.rng),
    }
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _encode_rng(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def load_checkpoint(out_dir, config: TrainConfig, obs_dim: int, act_dim: int) -> TrainerState:
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.json") as f:
        manifest = json.load(f)
    if manifest["config_hash"] != config.hash():
        raise ConfigError(f"{out_dir}: checkpoint was written under a different config")
    state = init_state(config, obs_dim, act_dim)
    state.policy.net = load_mlp(out_dir / NETWORK_FILES["policy"])
    state.policy_target.net = load_mlp(out_dir / NETWORK_FILES["policy_target"])
    state.critics.q1 = load_mlp(out_dir / NETWORK_FILES["q1"])
    state.critics.q2 = load_mlp(out_dir / NETWORK_FILES["q2"])
    state.critics.q1_target = load_mlp(out_dir / NETWORK_FILES["q1_target"])
    state.critics.q2_target = load_mlp(out_dir / NETWORK_FILES["q2_target"])
    state.disc.net = load_mlp(out_dir / NETWORK_FILES["disc"])
    state.policy_opt = Adam(state.policy.net.parameters(), lr=config.policy_lr)
    state.critic_opt = Adam(state.critics.parameters(), lr=config.critic_lr)
    state.disc_opt = Adam(state.disc.parameters(), lr=config.disc_lr)
    rng_state = manifest.get("rng_state")
    if rng_state is not None:
        state.rng.bit_generator.state = rng_state
    state.step = int(manifest["step"])
    return state


def load_policy(run_dir) -> tuple[DiffusionPolicy, NoiseSchedule, TrainConfig]:
    """Rebuild just the sampling-side policy from a run directory."""
    run_dir = Path(run_dir)
    config = TrainConfig.from_json(run_dir / "config.json")
    net = load_mlp(run_dir / NETWORK_FILES["policy"])
    act_dim = net.out_dim
    obs_dim = net.in_dim - act_dim - config.time_embed_dim
    policy = DiffusionPolicy(net, obs_dim, act_dim, config.time_embed_dim)
    schedule = make_schedule(config.diffusion_steps, config.beta_min, config.beta_max)
    return policy, schedule, config


def _fmt(value) -> str:
    return "" if value is None else repr(value)


def train(config: TrainConfig, ds: Dataset, out_dir, resume: bool = False) -> dict:
    """Run the full loop, writing config.json, metrics.csv, and a checkpoint.

    Returns a summary dict with the final step and last evaluation results.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.to_json(out_dir / "config.json")

    if config.reward_shift:
        ds = Dataset(
            ds.observations, ds.actions, ds.rewards - 1.0,
            ds.next_observations, ds.terminals, dict(ds.meta),
        )

    resuming = resume and (out_dir / "manifest.json").exists()
    if resuming:
        state = load_checkpoint(out_dir, config, ds.obs_dim, ds.act_dim)
    else:
        state = init_state(config, ds.obs_dim, ds.act_dim)

    env = make_env(ds.meta.get("env", "pointmaze"))
    refs = dataset_refs(ds)
    metrics_path = out_dir / "metrics.csv"
    mode = "a" if resuming and metrics_path.exists() else "w"
    last_eval = {"eval_return": None, "normalized_score": None}

    with open(metrics_path, mode, newline="") as f:
        writer = csv.writer(f)
        if mode == "w":
            writer.writerow(METRICS_HEADER)
        if state.step >= config.total_steps:
            save_checkpoint(state, out_dir)
            return {"step": state.step, **last_eval}
        while state.step < config.total_steps:
            try:
                metrics = train_step(state, ds)
            except NumericError as e:
                f.flush()
                save_checkpoint(state, out_dir)
                raise NumericError(f"step {state.step}: {e}") from e
            row = {"step": state.step, **metrics}
            due = state.step % config.eval_interval == 0 or state.step == config.total_steps
            if due:
                ret, score = evaluate(
                    state.policy, env, state.schedule,
                    config.eval_episodes, seed=config.seed * 100_003 + state.step, refs=refs,
                )
                row["eval_return"] = ret
                row["normalized_score"] = score
                last_eval = {"eval_return": ret, "normalized_score": score}
            writer.writerow([_fmt(row.get(k)) for k in METRICS_HEADER])
            if due:
                f.flush()
    save_checkpoint(state, out_dir)
    return {"step": state.step, **last_eval}


def read_metrics(run_dir) -> list[dict]:
    with open(Path(run_dir) / "metrics.csv", newline="") as f:
        return [row for row in csv.DictReader(f)]


def final_normalized_score(run_dir, window: int = 3) -> float:
    """Mean normalized score over the last ``window`` evaluation rows."""
    scores = [float(r["normalized_score"]) for r in read_metrics(run_dir) if r["normalized_score"]]
    if not scores:
        raise ValueError(f"{run_dir}: no evaluation rows in metrics.csv")
    return float(np.mean(scores[-window:]))
