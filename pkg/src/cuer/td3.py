"""Minimal TD3 learner on top of :mod:`cuer.nn`."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .errors import InvalidArgument, NumericError
from .nn import Adam, Mlp, clip_by_global_norm, load_arrays, polyak_blend, save_arrays
from .replay import ReplayBuffer
from .samplers import Batch, SamplingStrategy


@dataclass
class Td3Config:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    explore_noise: float = 0.1
    batch_size: int = 64
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    hidden: tuple = (64, 64)
    grad_clip: float = 10.0
    action_l2: float = 0.0

    def validate(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidArgument(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidArgument(f"tau must lie in (0, 1], got {self.tau}")
        if self.policy_delay < 1:
            raise InvalidArgument(f"policy_delay must be >= 1, got {self.policy_delay}")
        if self.noise_clip <= 0:
            raise InvalidArgument(f"noise_clip must be > 0, got {self.noise_clip}")
        if self.target_noise < 0 or self.explore_noise < 0:
            raise InvalidArgument("noise scales must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise InvalidArgument("learning rates must be > 0")
        if self.action_l2 < 0:
            raise InvalidArgument(f"action_l2 must be >= 0, got {self.action_l2}")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            raise InvalidArgument(f"hidden sizes must be positive, got {self.hidden}")


class Td3Agent:
    """Twin critics, clipped double-Q targets, target smoothing, delayed actor.

    ``init_rng`` seeds all six networks (targets start as copies);
    ``smooth_rng`` feeds target-policy smoothing noise.
    """

    def __init__(self, obs_dim: int, act_dim: int, config: Optional[Td3Config] = None,
                 init_rng: Optional[np.random.Generator] = None,
                 smooth_rng: Optional[np.random.Generator] = None) -> None:
        self.config = config or Td3Config()
        self.config.validate()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        init_rng = init_rng if init_rng is not None else np.random.default_rng(0)
        self.smooth_rng = smooth_rng if smooth_rng is not None else np.random.default_rng(1)
        hidden = list(self.config.hidden)
        self.actor = Mlp([obs_dim, *hidden, act_dim], out_act="tanh", rng=init_rng)
        self.critic1 = Mlp([obs_dim + act_dim, *hidden, 1], rng=init_rng)
        self.critic2 = Mlp([obs_dim + act_dim, *hidden, 1], rng=init_rng)
        self.actor_target = self.actor.copy()
        self.critic1_target = self.critic1.copy()
        self.critic2_target = self.critic2.copy()
        self.actor_opt = Adam(self.actor.params, lr=self.config.actor_lr)
        self.critic1_opt = Adam(self.critic1.params, lr=self.config.critic_lr)
        self.critic2_opt = Adam(self.critic2.params, lr=self.config.critic_lr)
        self.updates = 0
        self.actor_updates = 0

    @property
    def networks(self) -> list[Mlp]:
        return [self.actor, self.critic1, self.critic2,
                self.actor_target, self.critic1_target, self.critic2_target]

    # -- acting ----------------------------------------------------------

    def act(self, state, explore: bool = False, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        a = self.actor(np.asarray(state, dtype=np.float64))
        if explore and self.config.explore_noise > 0:
            if rng is None:
                raise InvalidArgument("exploration needs an rng")
            a = a + rng.normal(0.0, self.config.explore_noise, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    # -- targets ---------------------------------------------------------

    def smoothing_noise(self, shape) -> np.ndarray:
        c = self.config
        if c.target_noise == 0:
            return np.zeros(shape)
        return np.clip(self.smooth_rng.normal(0.0, c.target_noise, size=shape), -c.noise_clip, c.noise_clip)

    def target_q(self, next_states: np.ndarray, noise: Optional[np.ndarray] = None):
        """``(Q'_1, Q'_2)`` at the smoothed target action for every row."""
        a = self.actor_target(next_states)
        if noise is None:
            noise = self.smoothing_noise(a.shape)
        a = np.clip(a + noise, -1.0, 1.0)
        x = np.concatenate([next_states, a], axis=1)
        return self.critic1_target(x)[:, 0], self.critic2_target(x)[:, 0]

    def compute_target(self, batch: Batch, noise: Optional[np.ndarray] = None) -> np.ndarray:
        q1, q2 = self.target_q(batch.next_states, noise)
        y = batch.rewards + (1.0 - batch.dones) * self.config.gamma * np.minimum(q1, q2)
        if not np.all(np.isfinite(y)):
            raise NumericError("non-finite TD target")
        return y

    def td_error(self, batch: Batch, y: np.ndarray) -> np.ndarray:
        """``|y - Q_1(s, a)|`` (first critic only)."""
        q1 = self.critic1(np.concatenate([batch.states, batch.actions], axis=1))[:, 0]
        return np.abs(y - q1)

    # -- losses ----------------------------------------------------------

    def critic_loss_and_grads(self, batch: Batch, y: np.ndarray, weights: Optional[np.ndarray] = None):
        n = len(y)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        x = np.concatenate([batch.states, batch.actions], axis=1)
        q1, cache1 = self.critic1.forward(x)
        q2, cache2 = self.critic2.forward(x)
        e1 = q1[:, 0] - y
        e2 = q2[:, 0] - y
        loss = float(np.sum(w * (e1 * e1 + e2 * e2)) / n)
        g1, _ = self.critic1.backward(cache1, (2.0 * w * e1 / n)[:, None])
        g2, _ = self.critic2.backward(cache2, (2.0 * w * e2 / n)[:, None])
        return loss, g1, g2

    def actor_loss_and_grads(self, states: np.ndarray):
        """``-mean Q_1(s, pi(s)) + action_l2 * mean |pi(s)|^2``."""
        n = states.shape[0]
        a, cache_a = self.actor.forward(states)
        q, cache_q = self.critic1.forward(np.concatenate([states, a], axis=1))
        lam = self.config.action_l2
        loss = -float(np.mean(q)) + lam * float(np.sum(a * a)) / n
        _, dx = self.critic1.backward(cache_q, np.full((n, 1), -1.0 / n))
        da = dx[:, self.obs_dim:]
        if lam:
            da = da + (2.0 * lam / n) * a
        grads, _ = self.actor.backward(cache_a, da)
        return loss, grads

    # -- updates ---------------------------------------------------------

    def critic_update(self, batch: Batch, y: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
        loss, g1, g2 = self.critic_loss_and_grads(batch, y, weights)
        if not math.isfinite(loss):
            raise NumericError("non-finite critic loss")
        g1, _ = clip_by_global_norm(g1, self.config.grad_clip)
        g2, _ = clip_by_global_norm(g2, self.config.grad_clip)
        self.critic1_opt.step(self.critic1.params, g1)
        self.critic2_opt.step(self.critic2.params, g2)
        return loss

    def actor_update(self, batch: Batch) -> float:
        loss, grads = self.actor_loss_and_grads(batch.states)
        if not math.isfinite(loss):
            raise NumericError("non-finite actor loss")
        grads, _ = clip_by_global_norm(grads, self.config.grad_clip)
        self.actor_opt.step(self.actor.params, grads)
        tau = self.config.tau
        polyak_blend(self.actor_target, self.actor, tau)
        polyak_blend(self.critic1_target, self.critic1, tau)
        polyak_blend(self.critic2_target, self.critic2, tau)
        self.actor_updates += 1
        return loss

    def _state_arrays(self) -> list[np.ndarray]:
        arrays = [p for net in self.networks for p in net.params]
        for opt in (self.actor_opt, self.critic1_opt, self.critic2_opt):
            arrays += opt.m + opt.v
        return arrays

    def _snapshot(self):
        opts = (self.actor_opt, self.critic1_opt, self.critic2_opt)
        return ([a.copy() for a in self._state_arrays()], [o.t for o in opts],
                self.updates, self.actor_updates)

    def _restore(self, snap) -> None:
        arrays, ts, self.updates, self.actor_updates = snap
        for dst, src in zip(self._state_arrays(), arrays):
            dst[...] = src
        for opt, t in zip((self.actor_opt, self.critic1_opt, self.critic2_opt), ts):
            opt.t = t

    def train_step(self, buffer: ReplayBuffer, strategy: SamplingStrategy,
                   rng: np.random.Generator, env_step: Optional[int] = None) -> dict:
        """One learner iteration.

        Sample, build targets, update the critics, feed TD errors and draw
        counts back to the strategy, and update the actor every
        ``policy_delay`` calls. If any update goes non-finite the agent is
        rolled back and :class:`NumericError` propagates; the strategy is
        not touched in that case.
        """
        batch = strategy.sample(self.config.batch_size, rng)
        snap = self._snapshot()
        try:
            y = self.compute_target(batch)
            td = self.td_error(batch, y)
            critic_loss = self.critic_update(batch, y, batch.weights)
            self.updates += 1
            actor_loss = math.nan
            if self.updates % self.config.policy_delay == 0:
                actor_loss = self.actor_update(batch)
        except NumericError:
            self._restore(snap)
            raise
        strategy.update_feedback(batch.slots, td)
        strategy.on_sampled(batch.slots)
        step = buffer.push_count if env_step is None else env_step
        ages = step - batch.birth_steps
        return {
            "batch": batch,
            "critic_loss": critic_loss,
            "actor_loss": actor_loss,
            "td_mean": float(td.mean()),
            "psi": strategy.psi,
            "age_mean": float(ages.mean()),
            "age_p95": float(np.percentile(ages, 95)),
        }

    # -- checkpoints -----------------------------------------------------

    def save(self, path) -> None:
        save_arrays(path, [p for net in self.networks for p in net.params])

    def load(self, path) -> None:
        arrays = load_arrays(path)
        targets = [p for net in self.networks for p in net.params]
        if len(arrays) != len(targets) or any(a.shape != b.shape for a, b in zip(arrays, targets)):
            raise InvalidArgument("checkpoint does not match this agent's network shapes")
        for dst, src in zip(targets, arrays):
            dst[...] = src


def config_from_dict(values: dict) -> Td3Config:
    known = {f.name for f in fields(Td3Config)}
    unknown = set(values) - known
    if unknown:
        raise InvalidArgument(f"unknown TD3 options: {sorted(unknown)}")
    return Td3Config(**values)
