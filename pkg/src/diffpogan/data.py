"""Columnar offline datasets, the DPG1 binary format, and score bookkeeping."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"DPG1"


class FormatError(ValueError):
    """A DPG1 file is malformed; the message carries the byte offset."""


@dataclass
class Dataset:
    """Immutable-by-convention transition columns plus free-form metadata.

    ``meta`` carries at least {"env", "random_return", "expert_return"} for
    generated datasets; actions live in [-1, 1].
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminals: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.next_observations = np.asarray(self.next_observations, dtype=np.float64)
        self.terminals = np.asarray(self.terminals, dtype=bool)
        self.validate()

    @property
    def n(self) -> int:
        return self.observations.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.observations.shape[1]

    @property
    def act_dim(self) -> int:
        return self.actions.shape[1]

    def validate(self) -> None:
        n = self.observations.shape[0]
        if self.observations.ndim != 2 or self.actions.ndim != 2:
            raise ValueError("observations and actions must be 2-D")
        if self.next_observations.shape != self.observations.shape:
            raise ValueError("next_observations shape must match observations")
        if not (self.actions.shape[0] == self.rewards.shape[0] == self.terminals.shape[0] == n):
            raise ValueError("column lengths disagree")
        if self.actions.size and (self.actions.min() < -1.0 or self.actions.max() > 1.0):
            raise ValueError("actions must lie in [-1, 1]")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("rewards must be finite")


@dataclass
class Batch:
    """Row slices of a Dataset for the sampled indices."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray


def sample_batch(ds: Dataset, batch_size: int, rng: np.random.Generator) -> Batch:
    """Uniform i.i.d. (with replacement) minibatch."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if ds.n < 1:
        raise ValueError("cannot sample from an empty dataset")
    idx = rng.integers(0, ds.n, size=batch_size)
    return Batch(
        ds.observations[idx],
        ds.actions[idx],
        ds.rewards[idx],
        ds.next_observations[idx],
        ds.terminals[idx],
        idx,
    )


def normalized_score(ret: float, random_return: float, expert_return: float) -> float:
    """100 * (ret - random) / (expert - random)."""
    if not expert_return > random_return:
        raise ValueError(
            f"expert return ({expert_return}) must exceed random return ({random_return})"
        )
    return 100.0 * (ret - random_return) / (expert_return - random_return)


def save_dataset(ds: Dataset, path) -> None:
    """DPG1 layout: magic, u32 {n, obs_dim, act_dim}, float64 LE columns
    (observations, actions, rewards, next_observations), terminal bytes,
    then a u32-length-prefixed JSON meta blob."""
    meta_blob = json.dumps(ds.meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", ds.n, ds.obs_dim, ds.act_dim))
        for col in (ds.observations, ds.actions, ds.rewards, ds.next_observations):
            f.write(np.ascontiguousarray(col, dtype="<f8").tobytes())
        f.write(ds.terminals.astype(np.uint8).tobytes())
        f.write(struct.pack("<I", len(meta_blob)))
        f.write(meta_blob)


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        buf = f.read()

    def take(offset: int, count: int, what: str) -> tuple[bytes, int]:
        if offset + count > len(buf):
            raise FormatError(f"{path}: truncated {what} at byte {offset}")
        return buf[offset : offset + count], offset + count

    chunk, off = take(0, 4, "magic")
    if chunk != MAGIC:
        raise FormatError(f"{path}: bad magic {chunk!r} at byte 0")
    chunk, off = take(off, 12, "dimension header")
    n, obs_dim, act_dim = struct.unpack("<III", chunk)

    def column(off: int, rows: int, cols: int, what: str):
        chunk, off = take(off, rows * cols * 8, what)
        return np.frombuffer(chunk, dtype="<f8").copy().reshape(rows, cols), off

    obs, off = column(off, n, obs_dim, "observations")
    acts, off = column(off, n, act_dim, "actions")
    chunk, off = take(off, n * 8, "rewards")
    rewards = np.frombuffer(chunk, dtype="<f8").copy()
    nobs, off = column(off, n, obs_dim, "next_observations")
    chunk, off = take(off, n, "terminals")
    terminals = np.frombuffer(chunk, dtype=np.uint8).astype(bool)
    chunk, off = take(off, 4, "meta length")
    (mlen,) = struct.unpack("<I", chunk)
    chunk, off = take(off, mlen, "meta blob")
    meta = json.loads(chunk.decode("utf-8"))
    return Dataset(obs, acts, rewards, nobs, terminals, meta)
