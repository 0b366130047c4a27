"""Single (config, seed) training run and policy evaluation."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from ..envs import make_env
from ..errors import NumericError
from ..replay import ReplayBuffer
from ..replaylog import ReplayLogWriter
from ..samplers import make_sampler
from ..td3 import Td3Agent
from .config import ExperimentConfig, format_config
from .seeding import stream, stream_seed

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "env_step",
    "eval_return",
    "critic_loss",
    "actor_loss",
    "td_mean",
    "psi",
    "age_mean",
    "age_p95",
    "replay_mean",
    "replay_max",
    "buffer_size",
)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def evaluate(agent: Td3Agent, env_name: str, episodes: int, seed: int) -> float:
    """Mean undiscounted return of the deterministic policy.

    Episode ``i`` starts from ``stream_seed(seed, "eval", i)``, so every
    evaluation of a run sees the same start states.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = make_env(env_name)
    total = 0.0
    for i in range(episodes):
        obs = env.reset(stream_seed(seed, "eval", i))
        while True:
            res = env.step(agent.act(obs, explore=False))
            total += res.reward
            if res.terminal or res.truncated:
                break
            obs = res.next_obs
    return total / episodes


def run_path(cfg: ExperimentConfig, seed: int, out_dir=None) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    safe = cfg.name.replace("+", "_plus_").replace("@", "_cap")
    return out / f"{safe}_seed{seed}.csv"


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir=None,
                   checkpoint_in: Optional[str] = None,
                   checkpoint_out: Optional[str] = None) -> Path:
    """Train one agent and write its metrics CSV; returns the CSV path.

    Streams: ``env`` (episode start seeds), ``init`` (network init),
    ``explore`` (warmup and exploration noise), ``strategy`` (batch draws),
    ``smoothing`` (target noise), ``eval`` (evaluation starts).
    On a :class:`NumericError` the rows so far are flushed and the error
    re-raised.
    """
    cfg.validate()
    path = run_path(cfg, seed, out_dir)
    path.parent.mkdir(parents=True, exist_ok=True)

    env = make_env(cfg.env)
    spec = env.spec
    env_rng = stream(seed, "env")
    explore_rng = stream(seed, "explore")
    strategy_rng = stream(seed, "strategy")
    agent = Td3Agent(spec.obs_dim, spec.act_dim, cfg.agent_config(),
                     init_rng=stream(seed, "init"), smooth_rng=stream(seed, "smoothing"))
    if checkpoint_in:
        agent.load(checkpoint_in)
    buffer = ReplayBuffer(cfg.capacity, spec.obs_dim, spec.act_dim)
    sp = cfg.sampler_params
    strategy = make_sampler(
        cfg.sampler, buffer, cfg.batch_size, alpha=sp.alpha, beta0=sp.beta0, eps_per=sp.eps_per,
        eps_min=sp.eps_min, stratified=sp.stratified, per_occurrence=sp.per_occurrence,
        importance_weights=sp.importance_weights,
    )
    writer = None
    if cfg.replay_log:
        writer = ReplayLogWriter(path.with_suffix(".log"), spec.obs_dim, spec.act_dim,
                                 cfg.capacity, cfg.batch_size).attach(buffer)
    replay_counts = np.zeros(cfg.capacity, dtype=np.int64)
    train_from = max(cfg.learning_starts, cfg.batch_size)

    with open(path, "w", newline="") as fh:
        fh.write(f"# seed = {seed}\n")
        for line in format_config(cfg).splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        fh.flush()

        critic_losses: list[float] = []
        actor_losses: list[float] = []
        td_means: list[float] = []
        ages: list[np.ndarray] = []
        obs = env.reset(int(env_rng.integers(2 ** 63)))
        try:
            for step in range(1, cfg.total_steps + 1):
                if step <= cfg.learning_starts:
                    action = explore_rng.uniform(-1.0, 1.0, size=spec.act_dim)
                else:
                    action = agent.act(obs, explore=True, rng=explore_rng)
                res = env.step(action)
                slot, _ = buffer.add(obs, action, res.reward, res.next_obs, res.terminal, birth_step=step)
                replay_counts[slot] = 0
                if res.terminal or res.truncated:
                    obs = env.reset(int(env_rng.integers(2 ** 63)))
                else:
                    obs = res.next_obs

                if step >= train_from:
                    strategy.set_progress(step / cfg.total_steps)
                    frag = agent.train_step(buffer, strategy, strategy_rng, env_step=step)
                    batch = frag["batch"]
                    np.add.at(replay_counts, batch.slots, 1)
                    critic_losses.append(frag["critic_loss"])
                    if not math.isnan(frag["actor_loss"]):
                        actor_losses.append(frag["actor_loss"])
                    td_means.append(frag["td_mean"])
                    ages.append(step - batch.birth_steps)
                    if writer is not None:
                        writer.log_samples(batch, step)

                if step % cfg.eval_interval == 0 or step == cfg.total_steps:
                    ret = evaluate(agent, cfg.env, cfg.eval_episodes, seed)
                    if not math.isfinite(ret):
                        raise NumericError(f"non-finite evaluation return at step {step}")
                    occ = replay_counts[: buffer.size]
                    all_ages = np.concatenate(ages) if ages else np.array([])
                    row = (
                        step,
                        ret,
                        np.mean(critic_losses) if critic_losses else math.nan,
                        np.mean(actor_losses) if actor_losses else math.nan,
                        np.mean(td_means) if td_means else math.nan,
                        strategy.psi,
                        all_ages.mean() if all_ages.size else math.nan,
                        np.percentile(all_ages, 95) if all_ages.size else math.nan,
                        occ.mean() if occ.size else math.nan,
                        occ.max() if occ.size else 0,
                        buffer.size,
                    )
                    fh.write(",".join(_fmt(v) for v in row) + "\n")
                    fh.flush()
                    critic_losses.clear()
                    actor_losses.clear()
                    td_means.clear()
                    ages.clear()
        except NumericError:
            log.error("numeric failure in %s seed %s; partial metrics kept in %s", cfg.name, seed, path)
            raise
        finally:
            if writer is not None:
                writer.close()
    if checkpoint_out:
        agent.save(checkpoint_out)
    return path


def read_metrics(path) -> dict[str, np.ndarray]:
    """Columns of a metrics CSV as float arrays (comment lines skipped)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:] if ln]
    cols = {name: np.array([float(r[i]) for r in rows]) for i, name in enumerate(header)}
    return cols
