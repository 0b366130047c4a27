"""Two small deterministic continuous-control tasks.

Both integrate with symplectic Euler at a fixed ``dt`` and truncate episodes
at ``max_episode_steps``. Actions live in ``[-1, 1]^act_dim``; out-of-range
actions are clipped with a warning, non-finite ones are rejected.

pointmass
    State ``[x, y, vx, vy]``, goal at the origin. Per step::

        v += a * dt          (force gain 1)
        p += v * dt
        v *= 0.99

    reward ``-dt * (|p - goal| + 0.01 |a|^2)`` on the post-step position, so an
    episode return is the time integral of the cost. Terminal when
    ``|p - goal| < 0.05`` and ``|v| < 0.05``. Initial position uniform in
    ``[-1, 1]^2``, velocity zero.

pendulum
    Observation ``[cos th, sin th, thdot]`` with ``th = 0`` upright. Per step::

        thdot += (3 g / (2 l) sin th + 3 / (m l^2) * 2 a - 0.1 thdot) * dt
        thdot  = clip(thdot, -8, 8)
        th    += thdot * dt

    reward ``-(th^2 + 0.1 thdot^2 + 0.001 a^2)`` with ``th`` wrapped to
    ``[-pi, pi)``. Never terminal. Initial ``th ~ U[-pi, pi]``,
    ``thdot ~ U[-1, 1]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

log = logging.getLogger(__name__)

ENV_NAMES = ("pointmass", "pendulum")


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    max_episode_steps: int
    reward_range: tuple[float, float]
    obs_bounds: tuple[tuple[float, float], ...]
    constants: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StepResult:
    next_obs: np.ndarray
    reward: float
    terminal: bool
    truncated: bool


class _Env:
    spec: EnvSpec

    def __init__(self) -> None:
        self.t = 0
        self._done = True

    def _check_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (self.spec.act_dim,):
            raise InvalidArgument(f"action must have {self.spec.act_dim} components, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidArgument(f"non-finite action {a!r}")
        if np.any(np.abs(a) > 1.0):
            log.warning("action %s outside [-1, 1]; clipping", a)
            a = np.clip(a, -1.0, 1.0)
        if self._done:
            raise InvalidArgument("episode is over; call reset() first")
        return a

    def _advance_clock(self, terminal: bool) -> bool:
        self.t += 1
        truncated = (not terminal) and self.t >= self.spec.max_episode_steps
        self._done = terminal or truncated
        return truncated


class PointMass(_Env):
    DT = 0.05
    DAMPING = 0.99
    GOAL = (0.0, 0.0)
    GOAL_RADIUS = 0.05
    STOP_SPEED = 0.05
    ACTION_COST = 0.01
    MAX_STEPS = 200
    # terminal speed per axis under constant full thrust: 0.99 * dt / 0.01
    V_MAX = DAMPING * DT / (1.0 - DAMPING)
    P_MAX = 1.0 + V_MAX * DT * MAX_STEPS

    spec = EnvSpec(
        name="pointmass",
        obs_dim=4,
        act_dim=2,
        max_episode_steps=MAX_STEPS,
        reward_range=(-DT * (P_MAX * math.sqrt(2.0) + ACTION_COST * 2.0), 0.0),
        obs_bounds=((-P_MAX, P_MAX),) * 2 + ((-V_MAX, V_MAX),) * 2,
        constants={
            "dt": DT, "force_gain": 1.0, "damping": DAMPING, "goal": GOAL,
            "goal_radius": GOAL_RADIUS, "stop_speed": STOP_SPEED,
            "action_cost": ACTION_COST, "init_position": "U[-1,1]^2",
            "init_velocity": 0.0, "reward": "-dt*(|p-goal| + 0.01|a|^2)",
        },
    )

    def __init__(self) -> None:
        super().__init__()
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.goal = np.array(self.GOAL)

    def obs(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    def reset(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.pos = rng.uniform(-1.0, 1.0, size=2)
        self.vel = np.zeros(2)
        self.t = 0
        self._done = False
        return self.obs()

    def step(self, action) -> StepResult:
        a = self._check_action(action)
        self.vel = self.vel + a * self.DT
        self.pos = self.pos + self.vel * self.DT
        self.vel = self.vel * self.DAMPING
        dist = float(np.linalg.norm(self.pos - self.goal))
        reward = -self.DT * (dist + self.ACTION_COST * float(a @ a))
        terminal = dist < self.GOAL_RADIUS and float(np.linalg.norm(self.vel)) < self.STOP_SPEED
        truncated = self._advance_clock(terminal)
        return StepResult(self.obs(), reward, terminal, truncated)


class Pendulum(_Env):
    DT = 0.05
    G = 10.0
    MASS = 1.0
    LENGTH = 1.0
    MAX_TORQUE = 2.0
    FRICTION = 0.1
    MAX_SPEED = 8.0
    MAX_STEPS = 200

    spec = EnvSpec(
        name="pendulum",
        obs_dim=3,
        act_dim=1,
        max_episode_steps=MAX_STEPS,
        reward_range=(-(math.pi ** 2 + 0.1 * MAX_SPEED ** 2 + 0.001), 0.0),
        obs_bounds=((-1.0, 1.0), (-1.0, 1.0), (-MAX_SPEED, MAX_SPEED)),
        constants={
            "dt": DT, "g": G, "mass": MASS, "length": LENGTH,
            "max_torque": MAX_TORQUE, "friction": FRICTION, "max_speed": MAX_SPEED,
            "init_theta": "U[-pi,pi]", "init_thetadot": "U[-1,1]",
            "reward": "-(th^2 + 0.1 thdot^2 + 0.001 a^2)",
        },
    )

    def __init__(self) -> None:
        super().__init__()
        self.theta = 0.0
        self.thetadot = 0.0

    def obs(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.thetadot])

    def reset(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.theta = float(rng.uniform(-math.pi, math.pi))
        self.thetadot = float(rng.uniform(-1.0, 1.0))
        self.t = 0
        self._done = False
        return self.obs()

    def step(self, action) -> StepResult:
        a = float(self._check_action(action)[0])
        torque = self.MAX_TORQUE * a
        acc = (
            3.0 * self.G / (2.0 * self.LENGTH) * math.sin(self.theta)
            + 3.0 / (self.MASS * self.LENGTH ** 2) * torque
            - self.FRICTION * self.thetadot
        )
        self.thetadot = min(max(self.thetadot + acc * self.DT, -self.MAX_SPEED), self.MAX_SPEED)
        self.theta = self.theta + self.thetadot * self.DT
        th = (self.theta + math.pi) % (2.0 * math.pi) - math.pi
        reward = -(th ** 2 + 0.1 * self.thetadot ** 2 + 0.001 * a ** 2)
        truncated = self._advance_clock(False)
        return StepResult(self.obs(), reward, False, truncated)


def make_env(name: str) -> _Env:
    if name == "pointmass":
        return PointMass()
    if name == "pendulum":
        return Pendulum()
    raise InvalidArgument(f"unknown env {name!r}; expected one of {', '.join(ENV_NAMES)}")


def describe_env(name: str) -> str:
    spec = make_env(name).spec
    lines = [
        f"name = {spec.name}",
        f"obs_dim = {spec.obs_dim}",
        f"act_dim = {spec.act_dim}",
        f"action_space = [-1, 1]^{spec.act_dim}",
        f"max_episode_steps = {spec.max_episode_steps}",
        f"reward_range = [{spec.reward_range[0]:.6g}, {spec.reward_range[1]:.6g}]",
        "obs_bounds = " + ", ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in spec.obs_bounds),
    ]
    lines += [f"{k} = {v}" for k, v in spec.constants.items()]
    return "\n".join(lines)
