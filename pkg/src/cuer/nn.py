"""Small dense networks with hand-written backprop, Adam and Polyak averaging."""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument, LogParseError, NumericError

log = logging.getLogger(__name__)


class Mlp:
    """Affine layers with tanh between them.

    ``out_act`` is ``"identity"`` or ``"tanh"``. Weights are stored as
    ``(fan_in, fan_out)`` matrices and initialised uniformly in
    ``+-1/sqrt(fan_in)`` from ``rng``.
    """

    def __init__(self, sizes: Sequence[int], out_act: str = "identity",
                 rng: np.random.Generator | None = None) -> None:
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise InvalidArgument(f"layer sizes must be >= 2 positive ints, got {sizes!r}")
        if out_act not in ("identity", "tanh"):
            raise InvalidArgument(f"unknown output activation {out_act!r}")
        self.sizes = [int(s) for s in sizes]
        self.out_act = out_act
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def copy(self) -> "Mlp":
        other = Mlp.__new__(Mlp)
        other.sizes = list(self.sizes)
        other.out_act = self.out_act
        other.params = [p.copy() for p in self.params]
        return other

    def forward(self, x: np.ndarray):
        """Return ``(y, cache)``; ``x`` is ``(in,)`` or ``(batch, in)``."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[-1] != self.sizes[0]:
            raise InvalidArgument(f"input has {x.shape[-1]} features, net expects {self.sizes[0]}")
        # the sum is non-finite iff some entry is (or the input is absurdly large)
        if not np.isfinite(x.sum()):
            raise NumericError("non-finite network input")
        inputs, pre = [], []
        h = x
        last = self.n_layers - 1
        for k in range(self.n_layers):
            inputs.append(h)
            z = h @ self.params[2 * k] + self.params[2 * k + 1]
            pre.append(z)
            h = z if (k == last and self.out_act == "identity") else np.tanh(z)
        cache = (inputs, pre, h, squeeze)
        return (h[0] if squeeze else h), cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dy: np.ndarray):
        """Gradients of a scalar loss given ``dL/dy``.

        Returns ``(param_grads, dL/dx)`` with grads aligned to ``params``.
        """
        inputs, pre, out, squeeze = cache
        dy = np.asarray(dy, dtype=np.float64)
        if squeeze:
            dy = dy[None, :]
        if dy.shape != out.shape:
            raise InvalidArgument(f"dL/dy shape {dy.shape} does not match output {out.shape}")
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        last = self.n_layers - 1
        g = dy
        for k in range(last, -1, -1):
            if k == last:
                if self.out_act == "tanh":
                    g = g * (1.0 - out * out)
            else:
                # derivative of tanh from the activation that fed layer k + 1
                a = inputs[k + 1]
                g = g * (1.0 - a * a)
            grads[2 * k] = inputs[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
        return grads, (g[0] if squeeze else g)


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


class Adam:
    """Bias-corrected Adam over a list of parameter arrays (updated in place)."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise InvalidArgument("parameter/gradient count does not match optimizer state")
        for p, g, m in zip(params, grads, self.m):
            if p.shape != g.shape or p.shape != m.shape:
                raise InvalidArgument(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if not np.isfinite(sum(float(g.sum()) for g in grads)):
            raise NumericError("non-finite gradient; Adam step skipped")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> list[np.ndarray]:
        return [np.array([float(self.t)])] + self.m + self.v


def polyak_blend(target: Mlp, online: Mlp, tau: float) -> None:
    """``target <- (1 - tau) * target + tau * online``, parameter-wise."""
    if not 0.0 < tau <= 1.0:
        raise InvalidArgument(f"tau must lie in (0, 1], got {tau}")
    if len(target.params) != len(online.params) or any(
        a.shape != b.shape for a, b in zip(target.params, online.params)
    ):
        raise InvalidArgument("target and online networks have different shapes")
    for t, o in zip(target.params, online.params):
        if tau == 1.0:
            t[...] = o
        else:
            t *= 1.0 - tau
            t += tau * o


def numerical_gradient(loss: Callable[[], float], params: Sequence[np.ndarray], h: float = 1e-5):
    """Central differences of ``loss()`` w.r.t. every entry of ``params``."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss()
            flat[i] = orig - h
            down = loss()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                       floor: float = 1e-7) -> float:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


# -- checkpoints ---------------------------------------------------------

CKPT_MAGIC = b"TNETCKP1"


def save_arrays(path, arrays: Sequence[np.ndarray]) -> None:
    """Shape header followed by every array as little-endian f64, C order."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_arrays(path) -> list[np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise LogParseError(0, "not a checkpoint file")
    pos = 8
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shapes.append(struct.unpack_from(f"<{ndim}Q", data, pos))
            pos += 8 * ndim
    except struct.error as exc:
        raise LogParseError(pos, f"truncated checkpoint header ({exc})") from None
    arrays = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        if pos + 8 * n > len(data):
            raise LogParseError(pos, "truncated checkpoint payload")
        arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).copy())
        pos += 8 * n
    if pos != len(data):
        raise LogParseError(pos, "trailing bytes after checkpoint payload")
    return arrays
