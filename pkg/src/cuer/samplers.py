"""Sampling strategies over a :class:`~cuer.replay.ReplayBuffer`.

Every strategy follows the same hook protocol:

* ``on_push(slot, transition)`` / ``on_evict(slot)`` are called by the buffer;
* ``sample(n, rng)`` returns a :class:`Batch` and never mutates priorities;
* ``on_sampled(slots)`` is called by the learner once the batch was used;
* ``update_feedback(slots, td_errors)`` carries TD errors (PER only).

CUER keeps its priorities in raw form: a new transition enters with
priority ``N`` (the batch size) and every draw occurrence removes one unit,
never going below ``eps_min``. Normalising by the root of the sum tree gives
the same sampling distribution as tracking the probabilities themselves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyBufferError, InvalidArgument, NumericError
from .replay import ReplayBuffer, Transition
from .sumtree import SumTree

log = logging.getLogger(__name__)

SAMPLER_NAMES = ("uniform", "per", "cer", "cuer", "cer+cuer")


@dataclass
class Batch:
    """A sampled minibatch. Row ``j`` of every array belongs to ``slots[j]``."""

    slots: np.ndarray
    weights: np.ndarray
    probs: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    ids: np.ndarray
    birth_steps: np.ndarray

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def transitions(self) -> list[Transition]:
        return [
            Transition(
                self.states[j], self.actions[j], float(self.rewards[j]),
                self.next_states[j], bool(self.dones[j]),
                int(self.birth_steps[j]), int(self.ids[j]),
            )
            for j in range(len(self.slots))
        ]


def gather(buffer: ReplayBuffer, slots, weights=None, probs=None) -> Batch:
    slots = np.asarray(slots, dtype=np.int64)
    n = len(slots)
    return Batch(
        slots=slots,
        weights=np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64),
        probs=np.full(n, np.nan) if probs is None else np.asarray(probs, dtype=np.float64),
        states=buffer.states[slots],
        actions=buffer.actions[slots],
        rewards=buffer.rewards[slots],
        next_states=buffer.next_states[slots],
        dones=buffer.dones[slots],
        ids=buffer.ids[slots],
        birth_steps=buffer.birth_steps[slots],
    )


def uniform_sample(buffer: ReplayBuffer, n: int, rng: np.random.Generator) -> Batch:
    """``n`` i.i.d. draws, each occupied slot with probability ``1/size``."""
    if buffer.size == 0:
        raise EmptyBufferError("cannot sample from an empty buffer")
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    # the buffer fills slots 0..size-1 before wrapping, so they are the occupied ones
    slots = rng.integers(0, buffer.size, size=n)
    return gather(buffer, slots, probs=np.full(n, 1.0 / buffer.size))


def expected_sampling_interval(p_i: float, batch_size: int) -> float:
    """Expected number of steps between two draws of a transition: ``1/(p_i*N)``."""
    if not (0.0 < p_i <= 1.0) or not math.isfinite(p_i):
        raise InvalidArgument(f"probability must lie in (0, 1], got {p_i!r}")
    if batch_size < 1:
        raise InvalidArgument(f"batch size must be >= 1, got {batch_size}")
    return 1.0 / (p_i * batch_size)


class SamplingStrategy:
    name = "base"

    def __init__(self, buffer: ReplayBuffer) -> None:
        self.buffer = buffer
        buffer.subscribe(self)
        # adopt anything already stored, oldest first
        for slot in buffer.occupied_slots():
            self.on_push(int(slot), buffer.get(int(slot)))

    def on_push(self, slot: int, transition: Transition) -> None:
        pass

    def on_evict(self, slot: int) -> None:
        pass

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        raise NotImplementedError

    def on_sampled(self, slots) -> None:
        pass

    def update_feedback(self, slots, td_errors) -> None:
        pass

    def set_progress(self, fraction: float) -> None:
        """Training progress in [0, 1]; used for annealed parameters."""

    @property
    def psi(self) -> float:
        """Total priority mass, NaN for strategies without priorities."""
        return math.nan


class UniformSampler(SamplingStrategy):
    name = "uniform"

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        return uniform_sample(self.buffer, n, rng)


class PerSampler(SamplingStrategy):
    """Proportional prioritized replay.

    Leaves store ``(|delta| + eps_per) ** alpha``. New transitions get the
    largest raw priority seen so far. Importance weights are
    ``(size * P(i)) ** -beta`` normalised by the batch maximum, with ``beta``
    annealed linearly from ``beta0`` to 1 through :meth:`set_progress`.
    """

    name = "per"

    def __init__(
        self,
        buffer: ReplayBuffer,
        alpha: float = 0.6,
        eps_per: float = 1e-3,
        beta0: float = 0.4,
        importance_weights: bool = True,
        stratified: bool = False,
    ) -> None:
        if not 0.0 <= alpha <= 1.0:
            raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
        if not 0.0 <= beta0 <= 1.0:
            raise InvalidArgument(f"beta0 must lie in [0, 1], got {beta0}")
        if eps_per <= 0:
            raise InvalidArgument(f"eps_per must be > 0, got {eps_per}")
        self.tree = SumTree(buffer.capacity)
        self.alpha = float(alpha)
        self.eps_per = float(eps_per)
        self.beta0 = float(beta0)
        self.beta = float(beta0)
        self.importance_weights = importance_weights
        self.stratified = stratified
        self.max_priority_seen = 1.0
        super().__init__(buffer)

    def on_push(self, slot: int, transition: Transition) -> None:
        self.tree.set_priority(slot, self.max_priority_seen ** self.alpha)

    def on_evict(self, slot: int) -> None:
        self.tree.set_priority(slot, 0.0)

    def set_progress(self, fraction: float) -> None:
        fraction = min(max(fraction, 0.0), 1.0)
        self.beta = self.beta0 + (1.0 - self.beta0) * fraction

    @property
    def psi(self) -> float:
        return self.tree.total()

    def per_probability(self, slot: int) -> float:
        if not self.buffer.occupied(slot):
            raise InvalidArgument(f"slot {slot} is not occupied")
        return self.tree.probability(slot)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.buffer.size == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        slots = self.tree.sample_batch(n, rng, stratified=self.stratified)
        probs = self.tree.nodes[self.tree.leaf_base + slots] / self.tree.total()
        if self.importance_weights:
            w = (self.buffer.size * probs) ** (-self.beta)
            weights = w / w.max()
        else:
            weights = np.ones(n)
        return gather(self.buffer, slots, weights=weights, probs=probs)

    def update_feedback(self, slots, td_errors) -> None:
        slots = np.asarray(slots, dtype=np.int64)
        td = np.asarray(td_errors, dtype=np.float64)
        if not np.all(np.isfinite(td)):
            raise NumericError("non-finite TD error fed to PER")
        raw = np.abs(td) + self.eps_per
        # a slot drawn twice keeps the error of its last occurrence
        rev_unique, rev_index = np.unique(slots[::-1], return_index=True)
        last = len(slots) - 1 - rev_index
        self.tree.set_many(rev_unique, raw[last] ** self.alpha)
        self.max_priority_seen = max(self.max_priority_seen, float(raw.max()))


class CuerSampler(SamplingStrategy):
    """Corrected uniform replay in raw-priority form.

    ``per_occurrence=False`` decrements a slot once per batch no matter how
    many times it was drawn.
    """

    name = "cuer"

    def __init__(
        self,
        buffer: ReplayBuffer,
        batch_size: int,
        eps_min: float = 1.0,
        stratified: bool = False,
        per_occurrence: bool = True,
    ) -> None:
        if batch_size < 1:
            raise InvalidArgument(f"batch size must be >= 1, got {batch_size}")
        if not (0.0 <= eps_min <= batch_size):
            raise InvalidArgument(f"eps_min must lie in [0, batch_size], got {eps_min}")
        self.tree = SumTree(buffer.capacity)
        self.batch_size = int(batch_size)
        self.eps_min = float(eps_min)
        self.stratified = stratified
        self.per_occurrence = per_occurrence
        # bookkeeping of the most recent on_sampled call
        self.last_clamped = False
        self.last_removed = 0.0
        super().__init__(buffer)

    def on_push(self, slot: int, transition: Transition) -> None:
        self.tree.set_priority(slot, float(self.batch_size))

    def on_evict(self, slot: int) -> None:
        self.tree.set_priority(slot, 0.0)

    @property
    def psi(self) -> float:
        return self.tree.total()

    def probability(self, slot: int) -> float:
        if not self.buffer.occupied(slot):
            raise InvalidArgument(f"slot {slot} is not occupied")
        return self.tree.probability(slot)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if n != self.batch_size:
            raise InvalidArgument(f"CUER batches must have size {self.batch_size}, got {n}")
        if self.buffer.size == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        total = self.tree.total()
        if total <= 0:
            log.warning("CUER priority mass is zero (eps_min=%s); falling back to uniform", self.eps_min)
            return uniform_sample(self.buffer, n, rng)
        slots = self.tree.sample_batch(n, rng, stratified=self.stratified)
        probs = self.tree.nodes[self.tree.leaf_base + slots] / total
        return gather(self.buffer, slots, probs=probs)

    def on_sampled(self, slots) -> None:
        slots = np.asarray(slots, dtype=np.int64)
        if slots.size == 0:
            self.last_clamped = False
            self.last_removed = 0.0
            return
        uniq, counts = np.unique(slots, return_counts=True)
        if not self.per_occurrence:
            counts = np.ones_like(counts)
        old = self.tree.nodes[self.tree.leaf_base + uniq]
        wanted = old - counts
        new = np.maximum(wanted, self.eps_min)
        self.last_clamped = bool(np.any(wanted < self.eps_min))
        self.last_removed = float((old - new).sum())
        self.tree.set_many(uniq, new)


class CerSampler(SamplingStrategy):
    """Combined replay: the last row of every batch is the newest transition.

    The inner strategy only hears about the ``n - 1`` draws that were kept.
    """

    def __init__(self, inner: SamplingStrategy) -> None:
        # the inner strategy is already subscribed to the buffer
        self.inner = inner
        self.buffer = inner.buffer
        self.name = "cer" if isinstance(inner, UniformSampler) else f"cer+{inner.name}"

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        return cer_wrap(self.inner.sample(n, rng), self.buffer)

    def on_sampled(self, slots) -> None:
        self.inner.on_sampled(np.asarray(slots)[:-1])

    def update_feedback(self, slots, td_errors) -> None:
        self.inner.update_feedback(np.asarray(slots)[:-1], np.asarray(td_errors)[:-1])

    def set_progress(self, fraction: float) -> None:
        self.inner.set_progress(fraction)

    @property
    def psi(self) -> float:
        return self.inner.psi


def cer_wrap(inner_batch: Batch, buffer: ReplayBuffer) -> Batch:
    """Replace the last row of ``inner_batch`` with the buffer's newest transition."""
    if buffer.size == 0:
        raise EmptyBufferError("cannot wrap a batch around an empty buffer")
    if len(inner_batch) < 1:
        raise InvalidArgument("inner batch must be non-empty")
    slots = inner_batch.slots.copy()
    slots[-1] = buffer.latest_slot
    weights = inner_batch.weights.copy()
    weights[-1] = 1.0
    probs = inner_batch.probs.copy()
    probs[-1] = 1.0
    return gather(buffer, slots, weights=weights, probs=probs)


def make_sampler(
    name: str,
    buffer: ReplayBuffer,
    batch_size: int,
    alpha: float = 0.6,
    beta0: float = 0.4,
    eps_per: float = 1e-3,
    eps_min: float = 1.0,
    stratified: bool = False,
    per_occurrence: bool = True,
    importance_weights: Optional[bool] = None,
) -> SamplingStrategy:
    """Build a strategy from its config name (``uniform|per|cer|cuer|cer+cuer``)."""
    if name == "uniform":
        return UniformSampler(buffer)
    if name == "per":
        return PerSampler(
            buffer, alpha=alpha, eps_per=eps_per, beta0=beta0,
            importance_weights=True if importance_weights is None else importance_weights,
            stratified=stratified,
        )
    if name == "cuer":
        return CuerSampler(buffer, batch_size, eps_min=eps_min, stratified=stratified,
                           per_occurrence=per_occurrence)
    if name == "cer":
        return CerSampler(UniformSampler(buffer))
    if name == "cer+cuer":
        return CerSampler(CuerSampler(buffer, batch_size, eps_min=eps_min, stratified=stratified,
                                      per_occurrence=per_occurrence))
    raise InvalidArgument(f"unknown sampler {name!r}; expected one of {', '.join(SAMPLER_NAMES)}")
