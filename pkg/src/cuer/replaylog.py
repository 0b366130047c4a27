"""Binary replay event log (push / evict / sample records).

Layout, all little endian::

    header  (32 bytes)  magic "CUERLOG1" | obs_dim u32 | act_dim u32 |
                        capacity u64 | batch_size u32 | reserved u32
    record  (40 bytes)  kind u8 | pad 3 | slot u32 | id u64 |
                        birth_step u64 | env_step u64 | prob f64

``kind`` is 1 (push), 2 (evict) or 3 (sample, one record per draw
occurrence). ``prob`` is the draw-time probability for sample records and 0
otherwise. The ``id``/``birth_step`` pair uses the same u64 encoding as the
buffer dump in :mod:`cuer.replay`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LogParseError

LOG_MAGIC = b"CUERLOG1"
LOG_HEADER = struct.Struct("<8sIIQII")
PUSH, EVICT, SAMPLE = 1, 2, 3

RECORD_DTYPE = np.dtype(
    [
        ("kind", "u1"),
        ("pad", "V3"),
        ("slot", "<u4"),
        ("id", "<u8"),
        ("birth_step", "<u8"),
        ("env_step", "<u8"),
        ("prob", "<f8"),
    ]
)
assert RECORD_DTYPE.itemsize == 40


@dataclass
class LogHeader:
    obs_dim: int
    act_dim: int
    capacity: int
    batch_size: int


class ReplayLogWriter:
    """Buffer listener that appends push/evict records; samples are logged explicitly."""

    def __init__(self, path, obs_dim: int, act_dim: int, capacity: int, batch_size: int,
                 flush_every: int = 4096) -> None:
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(LOG_HEADER.pack(LOG_MAGIC, obs_dim, act_dim, capacity, batch_size, 0))
        self._pending: list[np.ndarray] = []
        self._pending_rows = 0
        self._flush_every = flush_every
        self._evicted = None
        self._buffer = None

    def attach(self, buffer) -> "ReplayLogWriter":
        self._buffer = buffer
        buffer.subscribe(self)
        return self

    def _append(self, kind, slots, ids, births, step, probs=0.0) -> None:
        slots = np.atleast_1d(slots)
        rec = np.zeros(len(slots), dtype=RECORD_DTYPE)
        rec["kind"] = kind
        rec["slot"] = slots
        rec["id"] = ids
        rec["birth_step"] = births
        rec["env_step"] = step
        rec["prob"] = probs
        self._pending.append(rec)
        self._pending_rows += len(rec)
        if self._pending_rows >= self._flush_every:
            self.flush()

    def on_evict(self, slot: int) -> None:
        buf = self._buffer
        self._evicted = (slot, int(buf.ids[slot]), int(buf.birth_steps[slot]))

    def on_push(self, slot: int, transition) -> None:
        step = transition.birth_step
        if self._evicted is not None:
            e_slot, e_id, e_birth = self._evicted
            self._append(EVICT, e_slot, e_id, e_birth, step)
            self._evicted = None
        self._append(PUSH, slot, transition.id, transition.birth_step, step)

    def log_samples(self, batch, env_step: int) -> None:
        self._append(SAMPLE, batch.slots, batch.ids, batch.birth_steps, env_step,
                     np.nan_to_num(batch.probs, nan=0.0))

    def flush(self) -> None:
        if self._pending:
            self._fh.write(np.concatenate(self._pending).tobytes())
            self._pending.clear()
            self._pending_rows = 0
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self.flush()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_log(path) -> tuple[LogHeader, np.ndarray]:
    """Parse a log; raises :class:`LogParseError` with the failing byte offset."""
    data = Path(path).read_bytes()
    if len(data) < LOG_HEADER.size:
        raise LogParseError(len(data), "truncated header")
    magic, obs_dim, act_dim, capacity, batch_size, _ = LOG_HEADER.unpack_from(data)
    if magic != LOG_MAGIC:
        raise LogParseError(0, f"bad magic {magic!r}")
    body = len(data) - LOG_HEADER.size
    whole = body // RECORD_DTYPE.itemsize
    if body % RECORD_DTYPE.itemsize:
        raise LogParseError(LOG_HEADER.size + whole * RECORD_DTYPE.itemsize, "truncated record")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, offset=LOG_HEADER.size)
    bad = np.flatnonzero((rec["kind"] < PUSH) | (rec["kind"] > SAMPLE))
    if bad.size:
        offset = LOG_HEADER.size + int(bad[0]) * RECORD_DTYPE.itemsize
        raise LogParseError(offset, f"unknown record kind {int(rec['kind'][bad[0]])}")
    steps = rec["env_step"].astype(np.int64)
    if steps.size > 1:
        back = np.flatnonzero(steps[1:] < steps[:-1])
        if back.size:
            offset = LOG_HEADER.size + (int(back[0]) + 1) * RECORD_DTYPE.itemsize
            raise LogParseError(offset, "env_step goes backwards")
    return LogHeader(obs_dim, act_dim, capacity, batch_size), rec
