"""Sum tree for O(log n) proportional sampling over slot priorities."""

from __future__ import annotations

import math

import numpy as np

from .errors import EmptyTreeError, InvalidArgument


class SumTree:
    """Complete binary tree whose internal nodes hold the sum of their children.

    Leaves are padded up to a power of two with zero priority, so any
    ``capacity >= 1`` works; padded leaves can never be reached by descent.
    Node 1 is the root and leaf ``i`` lives at node ``leaf_base + i``.

    ``touches`` counts node reads/writes made by the scalar operations
    (``set_priority`` and ``find_prefix``) and exists for complexity tests.
    """

    def __init__(self, capacity: int) -> None:
        if not isinstance(capacity, (int, np.integer)) or capacity < 1:
            raise InvalidArgument(f"capacity must be a positive integer, got {capacity!r}")
        self.capacity = int(capacity)
        self.depth = max(0, math.ceil(math.log2(self.capacity)))
        self.leaf_base = 1 << self.depth
        self.nodes = np.zeros(2 * self.leaf_base, dtype=np.float64)
        self._written = np.zeros(self.capacity, dtype=bool)
        self.touches = 0

    def __len__(self) -> int:
        return self.capacity

    def __getitem__(self, slot: int) -> float:
        self._check_slot(slot)
        return float(self.nodes[self.leaf_base + slot])

    @property
    def used(self) -> int:
        """Number of distinct slots that have ever been written."""
        return int(self._written.sum())

    def total(self) -> float:
        return float(self.nodes[1])

    def leaves(self) -> np.ndarray:
        """Copy of the leaf priorities (without padding)."""
        return self.nodes[self.leaf_base:self.leaf_base + self.capacity].copy()

    def _check_slot(self, slot) -> None:
        if not 0 <= slot < self.capacity:
            raise InvalidArgument(f"slot {slot} out of range [0, {self.capacity})")

    @staticmethod
    def _check_priority(p: float) -> None:
        if not math.isfinite(p) or p < 0:
            raise InvalidArgument(f"priority must be finite and >= 0, got {p!r}")

    def set_priority(self, slot: int, p: float) -> None:
        self._check_slot(slot)
        p = float(p)
        self._check_priority(p)
        nodes = self.nodes
        i = self.leaf_base + int(slot)
        nodes[i] = p
        self._written[slot] = True
        touches = 1
        i >>= 1
        while i >= 1:
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1]
            touches += 1
            i >>= 1
        self.touches += touches

    def set_many(self, slots, values) -> None:
        """Vectorised ``set_priority`` for a batch of *distinct* slots."""
        slots = np.asarray(slots, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if slots.shape != values.shape or slots.ndim != 1:
            raise InvalidArgument("slots and values must be 1-D arrays of equal length")
        if slots.size == 0:
            return
        if slots.min() < 0 or slots.max() >= self.capacity:
            raise InvalidArgument("slot out of range")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidArgument("priorities must be finite and >= 0")
        order = np.argsort(slots, kind="stable")
        slots = slots[order]
        if slots.size > 1 and np.any(slots[1:] == slots[:-1]):
            raise InvalidArgument("set_many requires distinct slots")
        nodes = self.nodes
        idx = slots + self.leaf_base
        nodes[idx] = values[order]
        self._written[slots] = True
        for _ in range(self.depth):
            idx = idx >> 1
            if idx.size > 1:
                keep = np.empty(idx.size, dtype=bool)
                keep[0] = True
                np.not_equal(idx[1:], idx[:-1], out=keep[1:])
                idx = idx[keep]
            nodes[idx] = nodes[2 * idx] + nodes[2 * idx + 1]

    def rebuild(self) -> None:
        """Recompute every internal node from the leaves (cancels float drift)."""
        nodes = self.nodes
        lo = self.leaf_base
        while lo > 1:
            parents = np.arange(lo >> 1, lo)
            nodes[parents] = nodes[2 * parents] + nodes[2 * parents + 1]
            lo >>= 1

    def find_prefix(self, u: float) -> int:
        """Slot ``i`` with ``cumsum(p[:i]) <= u < cumsum(p[:i+1])``.

        At each node descend left when ``u`` is strictly below the left sum,
        otherwise subtract the left sum and descend right. Ties therefore go
        right, which keeps zero-priority leaves unreachable.
        """
        total = self.nodes[1]
        if total <= 0:
            raise EmptyTreeError("find_prefix on a tree with zero total mass")
        u = float(u)
        if not (0.0 <= u < total):
            raise InvalidArgument(f"u={u!r} outside [0, {total!r})")
        nodes = self.nodes
        i = 1
        touches = 0
        while i < self.leaf_base:
            left = nodes[2 * i]
            touches += 1
            if u < left:
                i = 2 * i
            elif nodes[2 * i + 1] > 0:
                u -= left
                i = 2 * i + 1
            else:
                # rounding pushed u past the right subtree; stay left
                i = 2 * i
        self.touches += touches + 1
        return i - self.leaf_base

    def _descend(self, u: np.ndarray) -> np.ndarray:
        nodes = self.nodes
        idx = np.ones(u.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = idx << 1
            lsum = nodes[left]
            go_right = (u >= lsum) & (nodes[left + 1] > 0)
            u = np.where(go_right, u - lsum, u)
            idx = left + go_right
        return idx - self.leaf_base

    def sample_batch(self, n: int, rng: np.random.Generator, stratified: bool = False) -> np.ndarray:
        """Draw ``n`` slots i.i.d. with probability ``p_i / total``.

        With ``stratified`` the mass is cut into ``n`` equal segments and one
        draw is taken from each.
        """
        if n < 1:
            raise InvalidArgument(f"n must be >= 1, got {n}")
        total = self.nodes[1]
        if total <= 0:
            raise EmptyTreeError("cannot sample from a tree with zero total mass")
        if stratified:
            u = (np.arange(n) + rng.random(n)) * (total / n)
        else:
            u = rng.random(n) * total
        return self._descend(u)

    def probability(self, slot: int) -> float:
        self._check_slot(slot)
        total = self.nodes[1]
        if total <= 0:
            raise EmptyTreeError("probability undefined on an empty tree")
        return float(self.nodes[self.leaf_base + slot] / total)
