"""Circular transition store with stable slot addressing."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EmptyBufferError, InvalidArgument, LogParseError


@dataclass(frozen=True)
class Transition:
    """One environment step.

    ``done`` is True only for genuine terminals; time-limit truncation is
    stored as ``done=False`` so targets keep bootstrapping through it.
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    birth_step: int
    id: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, Transition):
            return NotImplemented
        return (
            self.id == other.id
            and self.birth_step == other.birth_step
            and self.reward == other.reward
            and self.done == other.done
            and np.array_equal(self.state, other.state)
            and np.array_equal(self.action, other.action)
            and np.array_equal(self.next_state, other.next_state)
        )

    __hash__ = None


class ReplayBuffer:
    """Fixed-capacity FIFO store.

    The transition written by push ``k`` lands in slot ``k % capacity`` and
    evicts whatever push ``k - capacity`` wrote there. Registered listeners
    (sampling strategies) get ``on_evict(slot)`` before the overwrite and
    ``on_push(slot, transition)`` after it.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int) -> None:
        if capacity < 1:
            raise InvalidArgument(f"capacity must be >= 1, got {capacity}")
        if obs_dim < 1 or act_dim < 1:
            raise InvalidArgument("obs_dim and act_dim must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.ids = np.full(capacity, -1, dtype=np.int64)
        self.birth_steps = np.zeros(capacity, dtype=np.int64)
        self.write_cursor = 0
        self.size = 0
        self.push_count = 0
        self._last_id = -1
        self._last_birth = -1
        self._listeners: list = []

    def __len__(self) -> int:
        return self.size

    def subscribe(self, listener) -> None:
        self._listeners.append(listener)

    @property
    def next_id(self) -> int:
        return self._last_id + 1

    def add(self, state, action, reward, next_state, done, birth_step: int):
        """Build a transition with the next id and push it."""
        t = Transition(
            np.asarray(state, dtype=np.float64),
            np.asarray(action, dtype=np.float64),
            float(reward),
            np.asarray(next_state, dtype=np.float64),
            bool(done),
            int(birth_step),
            self.next_id,
        )
        return self.push(t)

    def push(self, t: Transition) -> tuple[int, Optional[Transition]]:
        state = np.asarray(t.state, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        if state.shape != (self.obs_dim,) or next_state.shape != (self.obs_dim,):
            raise InvalidArgument(
                f"state/next_state must have shape ({self.obs_dim},), "
                f"got {state.shape} and {next_state.shape}"
            )
        if action.shape != (self.act_dim,):
            raise InvalidArgument(f"action must have shape ({self.act_dim},), got {action.shape}")
        if np.any(np.abs(action) > 1.0):
            raise InvalidArgument("action components must lie in [-1, 1]")
        if t.id <= self._last_id:
            raise InvalidArgument(f"transition id {t.id} is not above last id {self._last_id}")
        if t.birth_step < self._last_birth:
            raise InvalidArgument("birth_step must be non-decreasing")

        slot = self.write_cursor
        evicted = None
        if self.size == self.capacity:
            evicted = self.get(slot)
            for listener in self._listeners:
                listener.on_evict(slot)
        self.states[slot] = state
        self.actions[slot] = action
        self.rewards[slot] = t.reward
        self.next_states[slot] = next_state
        self.dones[slot] = t.done
        self.ids[slot] = t.id
        self.birth_steps[slot] = t.birth_step
        self._last_id = t.id
        self._last_birth = t.birth_step
        self.write_cursor = (slot + 1) % self.capacity
        self.push_count += 1
        if self.size < self.capacity:
            self.size += 1
        for listener in self._listeners:
            listener.on_push(slot, t)
        return slot, evicted

    def occupied(self, slot: int) -> bool:
        return 0 <= slot < self.capacity and self.ids[slot] >= 0

    def get(self, slot: int) -> Transition:
        if not self.occupied(slot):
            raise InvalidArgument(f"slot {slot} is out of range or unoccupied")
        return Transition(
            self.states[slot].copy(),
            self.actions[slot].copy(),
            float(self.rewards[slot]),
            self.next_states[slot].copy(),
            bool(self.dones[slot]),
            int(self.birth_steps[slot]),
            int(self.ids[slot]),
        )

    @property
    def latest_slot(self) -> int:
        if self.size == 0:
            raise EmptyBufferError("buffer is empty")
        return (self.write_cursor - 1) % self.capacity

    def latest(self) -> Transition:
        return self.get(self.latest_slot)

    def occupied_slots(self) -> np.ndarray:
        if self.size == self.capacity:
            return np.arange(self.capacity)
        return np.arange(self.size)

    # -- binary dump -----------------------------------------------------

    def dump(self, path) -> None:
        """Write occupied transitions in id order; layout in docs/formats.md."""
        order = np.argsort(self.ids[: self.size] if self.size < self.capacity else self.ids)
        with open(path, "wb") as fh:
            fh.write(DUMP_HEADER.pack(DUMP_MAGIC, self.obs_dim, self.act_dim, self.size))
            rec = np.zeros(self.size, dtype=dump_dtype(self.obs_dim, self.act_dim))
            rec["id"] = self.ids[order]
            rec["birth_step"] = self.birth_steps[order]
            rec["state"] = self.states[order]
            rec["action"] = self.actions[order]
            rec["reward"] = self.rewards[order]
            rec["next_state"] = self.next_states[order]
            rec["done"] = self.dones[order].astype(np.float64)
            fh.write(rec.tobytes())


DUMP_MAGIC = b"CUERBUF1"
DUMP_HEADER = struct.Struct("<8sIIQ")


def dump_dtype(obs_dim: int, act_dim: int) -> np.dtype:
    return np.dtype(
        [
            ("id", "<u8"),
            ("birth_step", "<u8"),
            ("state", "<f8", (obs_dim,)),
            ("action", "<f8", (act_dim,)),
            ("reward", "<f8"),
            ("next_state", "<f8", (obs_dim,)),
            ("done", "<f8"),
        ]
    )


def load_dump(path) -> list[Transition]:
    data = Path(path).read_bytes()
    if len(data) < DUMP_HEADER.size:
        raise LogParseError(0, "file shorter than dump header")
    magic, obs_dim, act_dim, count = DUMP_HEADER.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise LogParseError(0, f"bad magic {magic!r}")
    dt = dump_dtype(obs_dim, act_dim)
    body = len(data) - DUMP_HEADER.size
    if body != count * dt.itemsize:
        offset = DUMP_HEADER.size + min(body // dt.itemsize, count) * dt.itemsize
        raise LogParseError(offset, f"expected {count} records of {dt.itemsize} bytes")
    rec = np.frombuffer(data, dtype=dt, offset=DUMP_HEADER.size)
    return [
        Transition(
            r["state"].copy(), r["action"].copy(), float(r["reward"]),
            r["next_state"].copy(), bool(r["done"]), int(r["birth_step"]), int(r["id"]),
        )
        for r in rec
    ]
