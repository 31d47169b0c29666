"""Toy continuous-control environments and an exact DP oracle.

All environments are deterministic given the reset seed, clip incoming
actions to their bounds internally, and terminate only at the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import ActionBounds


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    bounds: ActionBounds
    horizon: int
    reward_desc: str

    def describe(self) -> str:
        return (f"{self.name}: state_dim={self.state_dim} action_dim={self.action_dim} "
                f"bounds=[{self.bounds.low.tolist()}, {self.bounds.high.tolist()}] "
                f"horizon={self.horizon} reward={self.reward_desc}")


class ToyEnv:
    """Shared reset/step plumbing; subclasses define dynamics and reward."""

    spec: EnvSpec

    def __init__(self):
        self._state: np.ndarray | None = None
        self._t = 0
        self._done = True

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(seed))
        self._state = self._initial_state(rng)
        self._t = 0
        self._done = False
        return self._state.copy()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool]:
        if self._done:
            raise RuntimeError("step() called on a terminal episode; reset first")
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.spec.action_dim,):
            raise ValueError(f"action shape {action.shape}, expected ({self.spec.action_dim},)")
        clipped = np.clip(action, self.spec.bounds.low, self.spec.bounds.high)
        next_state, reward = self._transition(self._state, clipped, self._t)
        self._t += 1
        self._done = self._t >= self.spec.horizon
        self._state = next_state
        return next_state.copy(), float(reward), self._done

    def clone(self) -> "ToyEnv":
        return type(self)()

    def _initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, state, action, t) -> tuple[np.ndarray, float]:
        raise NotImplementedError


class PointMass1D(ToyEnv):
    """Position on [-1, 1], step of at most 0.1, reward -x'^2, horizon 50."""

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec("pointmass1d", 1, 1, ActionBounds.symmetric(0.1, 1),
                            50, "-x'^2 after x' = clamp(x + a, -1, 1)")

    def _initial_state(self, rng):
        return rng.uniform(-1.0, 1.0, size=1)

    def _transition(self, state, action, t):
        x = np.clip(state + action, -1.0, 1.0)
        return x, -float(x[0] ** 2)


class PointMass2D(ToyEnv):
    """Two independent axes; reward is the mean of the per-axis -x'^2."""

    def __init__(self):
        super().__init__()
        self.spec = EnvSpec("pointmass2d", 2, 2, ActionBounds.symmetric(0.1, 2),
                            100, "-(x1'^2 + x2'^2)/2")

    def _initial_state(self, rng):
        return rng.uniform(-1.0, 1.0, size=2)

    def _transition(self, state, action, t):
        x = np.clip(state + action, -1.0, 1.0)
        return x, -float(np.mean(x ** 2))


class BoundaryLure(ToyEnv):
    """Bandit-like task whose early steps pay a bonus for near-bound actions.

    State is normalized time.  The quadratic term peaks at the interior
    point 0.3*M, but during the first 20% of the episode actions with
    |a| >= 0.9*M collect an extra 0.05, which makes the bound the better
    choice early on and pulls raw policy outputs outward.
    """

    BONUS = 0.05
    TARGET_FRACTION = 0.3
    LURE_EDGE = 0.9
    WINDOW_FRACTION = 0.2

    def __init__(self):
        super().__init__()
        m = 0.1
        self.spec = EnvSpec("boundarylure", 1, 1, ActionBounds.symmetric(m, 1),
                            50, "-(a - 0.3M)^2 + 0.05*[|a| >= 0.9M] on early steps")
        self._m = m
        self._window = int(round(self.WINDOW_FRACTION * self.spec.horizon))

    def _initial_state(self, rng):
        return np.zeros(1)

    def _transition(self, state, action, t):
        a = float(action[0])
        r = -((a - self.TARGET_FRACTION * self._m) ** 2)
        if t < self._window and abs(a) >= self.LURE_EDGE * self._m:
            r += self.BONUS
        return np.array([(t + 1) / self.spec.horizon]), r


_REGISTRY = {
    "pointmass1d": PointMass1D,
    "pointmass2d": PointMass2D,
    "boundarylure": BoundaryLure,
}


def make_env(name: str) -> ToyEnv:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown env '{name}'; choose from {sorted(_REGISTRY)}") from None


def env_names() -> list[str]:
    return sorted(_REGISTRY)


@dataclass
class DpResult:
    """Backward-induction solution: optimal undiscounted return per start state."""

    state_grid: np.ndarray
    v0: np.ndarray
    mean_return: float

    def value_at(self, x: np.ndarray | float) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self.state_grid.ndim == 1 and x.size == 1:
            return float(np.interp(x[0], self.state_grid, self.v0))
        # independent axes: total value is the sum of per-axis values
        return float(sum(np.interp(xi, self.state_grid, self.v0) for xi in x))


def _dp_pointmass_axis(horizon: int, reward_scale: float, state_res: int,
                       action_res: int) -> tuple[np.ndarray, np.ndarray]:
    grid = np.linspace(-1.0, 1.0, state_res)
    acts = np.linspace(-0.1, 0.1, action_res)
    v = np.zeros(state_res)
    for _ in range(horizon):
        nxt = np.clip(grid[:, None] + acts[None, :], -1.0, 1.0)
        reward = -reward_scale * nxt ** 2
        future = np.interp(nxt.ravel(), grid, v).reshape(nxt.shape)
        v = np.max(reward + future, axis=1)
    return grid, v


def dp_oracle(env: ToyEnv | str, state_res: int = 513, action_res: int = 129) -> DpResult:
    """Finite-horizon optimal return (gamma = 1) on a discretized grid.

    The mean return averages the start-state value over the environment's
    initial distribution (uniform on the state box for the point-mass
    tasks, the fixed start for the lure task).  Odd resolutions put the
    origin and the zero action exactly on the grids.
    """
    if state_res < 32 or action_res < 32:
        raise ValueError("grid resolutions must be at least 32")
    name = env if isinstance(env, str) else env.spec.name
    if name == "pointmass1d":
        grid, v = _dp_pointmass_axis(50, 1.0, state_res, action_res)
        return DpResult(grid, v, float(np.trapezoid(v, grid) / 2.0))
    if name == "pointmass2d":
        grid, v = _dp_pointmass_axis(100, 0.5, state_res, action_res)
        return DpResult(grid, v, float(2.0 * np.trapezoid(v, grid) / 2.0))
    if name == "boundarylure":
        env_obj = make_env("boundarylure")
        acts = np.linspace(env_obj.spec.bounds.low[0], env_obj.spec.bounds.high[0],
                           action_res)
        total = 0.0
        for t in range(env_obj.spec.horizon):
            rewards = [env_obj._transition(np.array([t / env_obj.spec.horizon]),
                                           np.array([a]), t)[1] for a in acts]
            total += max(rewards)
        grid = np.array([0.0, 1.0])
        return DpResult(grid, np.array([total, total]), total)
    raise ValueError(f"no oracle for env '{name}'")
