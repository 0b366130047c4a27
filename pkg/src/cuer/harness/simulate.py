"""No-learning replay simulation: one push and one batch of draws per step.

Transitions carry no data, so the only thing that evolves is the sampling
strategy's state. This isolates replay dynamics (priority mass, lifetime
replay counts, sample age) from anything a learner could do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..replay import ReplayBuffer
from ..replaylog import ReplayLogWriter
from ..samplers import CerSampler, CuerSampler, make_sampler
from .seeding import stream


@dataclass
class SimResult:
    sampler: str
    batch_size: int
    capacity: int
    warmup: int
    psi_before: np.ndarray
    psi_after: np.ndarray
    removed: np.ndarray
    evicted_residual: np.ndarray
    clamped: np.ndarray
    size: np.ndarray
    age_mean: np.ndarray
    lifetime_counts: np.ndarray
    lifetime_ids: np.ndarray

    @property
    def psi_drift(self) -> np.ndarray:
        return self.psi_after - self.psi_before


def _cuer_of(strategy) -> Optional[CuerSampler]:
    if isinstance(strategy, CuerSampler):
        return strategy
    if isinstance(strategy, CerSampler) and isinstance(strategy.inner, CuerSampler):
        return strategy.inner
    return None


def simulate_replay(
    sampler: str,
    steps: int,
    capacity: int,
    batch_size: int,
    seed: int,
    eps_min: float = 0.0,
    warmup: int = 1000,
    alpha: float = 0.6,
    stratified: bool = False,
    per_occurrence: bool = True,
    log_path=None,
) -> SimResult:
    """Run ``warmup`` pushes without sampling, then ``steps`` push+batch steps.

    Per-step arrays cover the ``steps`` sampling steps only. ``psi_before``
    is read before the push and ``psi_after`` after the draw decrements, so
    for CUER ``drift == N - removed - evicted_residual`` exactly.
    Lifetime counts are recorded for every transition at the moment it is
    evicted.
    """
    rng = stream(seed, "strategy")
    buffer = ReplayBuffer(capacity, 1, 1)
    strategy = make_sampler(sampler, buffer, batch_size, eps_min=eps_min, alpha=alpha,
                            stratified=stratified, per_occurrence=per_occurrence)
    cuer = _cuer_of(strategy)
    writer = None
    if log_path is not None:
        writer = ReplayLogWriter(log_path, 1, 1, capacity, batch_size).attach(buffer)

    counts = np.zeros(capacity, dtype=np.int64)
    lifetimes: list[int] = []
    lifetime_ids: list[int] = []
    zero = np.zeros(1)

    psi_before = np.full(steps, math.nan)
    psi_after = np.full(steps, math.nan)
    removed = np.zeros(steps)
    residual = np.zeros(steps)
    clamped = np.zeros(steps, dtype=bool)
    size = np.zeros(steps, dtype=np.int64)
    age_mean = np.zeros(steps)

    def push(step: int) -> float:
        slot = buffer.write_cursor
        res = 0.0
        if buffer.size == capacity:
            if cuer is not None:
                res = cuer.tree[slot]
            lifetimes.append(int(counts[slot]))
            lifetime_ids.append(int(buffer.ids[slot]))
        buffer.add(zero, zero, 0.0, zero, False, birth_step=step)
        counts[slot] = 0
        return res

    try:
        for step in range(warmup):
            push(step)
        for k in range(steps):
            step = warmup + k
            psi_before[k] = strategy.psi
            residual[k] = push(step)
            batch = strategy.sample(batch_size, rng)
            strategy.on_sampled(batch.slots)
            np.add.at(counts, batch.slots, 1)
            if writer is not None:
                writer.log_samples(batch, step)
            if cuer is not None:
                removed[k] = cuer.last_removed
                clamped[k] = cuer.last_clamped
            psi_after[k] = strategy.psi
            size[k] = buffer.size
            age_mean[k] = step - batch.birth_steps.mean()
    finally:
        if writer is not None:
            writer.close()

    return SimResult(
        sampler=sampler,
        batch_size=batch_size,
        capacity=capacity,
        warmup=warmup,
        psi_before=psi_before,
        psi_after=psi_after,
        removed=removed,
        evicted_residual=residual,
        clamped=clamped,
        size=size,
        age_mean=age_mean,
        lifetime_counts=np.array(lifetimes, dtype=np.int64),
        lifetime_ids=np.array(lifetime_ids, dtype=np.int64),
    )
