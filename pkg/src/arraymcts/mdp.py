"""Generative MDPs the searches plan over.

States are tuples of integer grid coordinates. The dynamics and rewards are
written as scalar functions over plain sequences so that the same source runs
under CPython (tree reference) and numba (array searches); see ``env_kernel``.

Three environments are provided:

* ``bug_trap`` -- a 3-DOF vehicle (x, y, heading) with a U-shaped obstacle
  whose mouth faces the start, so greedy distance descent gets stuck inside.
* ``chain`` -- a 1-D line over ``[-L, L]`` with reward only at ``+L``.
* ``bandit`` -- a one-step MDP: each arm leads to its own state, after which
  the process is absorbed in a zero-reward terminal state.
"""

from __future__ import annotations

import json
import math
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .errors import ConstructionError, ContractViolation

StateVec = tuple  # tuple[int, ...]

# Reserved coordinate for the never-matching sentinel state.
SENTINEL_COORD = int(np.iinfo(np.int64).min)

BUG_TRAP, CHAIN, BANDIT = 0, 1, 2
_KINDS = {"bug_trap": BUG_TRAP, "chain": CHAIN, "bandit": BANDIT}

N_HEADINGS = 8
HEADING_DX = tuple(math.cos(2.0 * math.pi * h / N_HEADINGS) for h in range(N_HEADINGS))
HEADING_DY = tuple(math.sin(2.0 * math.pi * h / N_HEADINGS) for h in range(N_HEADINGS))

# Noise quantile table: a uniform draw below cdf[k] (first such k) selects
# displacement direction k, scaled by noise_scale. Outcome 0 is "no noise".
DEFAULT_NOISE_CDF = (0.6, 0.7, 0.8, 0.9, 1.0)
DEFAULT_NOISE_DIRS = ((0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0))

# Bug-trap actions: (speed in world units, heading increment).
BUG_TRAP_ACTIONS = ((1.0, 0), (1.0, 1), (1.0, -1), (0.0, 0))
BUG_TRAP_ACTION_NAMES = ("forward", "forward-left", "forward-right", "stay")


def sentinel_state(dim: int) -> StateVec:
    return (SENTINEL_COORD,) * dim


def round_half_away(v):
    """Round to the nearest integer, ties away from zero."""
    a = abs(v)
    whole = math.floor(a)
    r = whole + (a - whole >= 0.5)
    return r if v >= 0 else -r


# --- scalar dynamics (shared by CPython and numba) --------------------------


def _bug_trap_step(x, y, h, speed, turn, res, noise_scale, noise_cdf, noise_dx, noise_dy,
                   heading_dx, heading_dy, draw):
    h2 = (h + turn) % len(heading_dx)
    k = 0
    for i in range(len(noise_cdf) - 1):
        k += draw >= noise_cdf[i]
    wx = x * res + speed * heading_dx[h2] + noise_scale * noise_dx[k]
    wy = y * res + speed * heading_dy[h2] + noise_scale * noise_dy[k]
    # round half away from zero, spelled out so numba needs no callee
    qx = wx / res
    ax = abs(qx)
    fx = math.floor(ax)
    rx = fx + (ax - fx >= 0.5)
    qy = wy / res
    ay = abs(qy)
    fy = math.floor(ay)
    ry = fy + (ay - fy >= 0.5)
    return (rx if qx >= 0 else -rx), (ry if qy >= 0 else -ry), h2


def _bug_trap_reward(x, y, res, goal_x, goal_y, obstacles, penalty):
    wx = x * res
    wy = y * res
    dx = wx - goal_x
    dy = wy - goal_y
    r = -math.sqrt(dx * dx + dy * dy)
    inside = 0
    for i in range(len(obstacles) // 4):
        x0 = obstacles[4 * i]
        y0 = obstacles[4 * i + 1]
        x1 = obstacles[4 * i + 2]
        y1 = obstacles[4 * i + 3]
        inside |= (x0 <= wx) & (wx <= x1) & (y0 <= wy) & (wy <= y1)
    return r + penalty * inside


def _chain_step(s, delta, length):
    return min(max(s + delta, -length), length)


def _bandit_step(s, arm, n_arms):
    # 0 is the start state, k+1 the state after pulling arm k, n_arms+1 terminal.
    return (arm + 1) * (s == 0) + (n_arms + 1) * (s != 0)


def _tabulated_reward(s, table, offset):
    return table[s - offset]


# --- environment spec -------------------------------------------------------


@dataclass(frozen=True)
class EnvSpec:
    """Immutable description of one environment.

    ``actions`` holds one descriptor tuple per action: ``(speed, turn)`` for
    the bug trap, ``(delta,)`` for the chain and ``(arm,)`` for the bandit.
    ``obstacles`` are ``(x0, y0, x1, y1)`` closed rectangles in world units and
    ``goal`` is ``(x, y, radius)``.
    """

    kind: str
    dim: int
    actions: tuple
    grid_resolution: float = 1.0
    noise_scale: float = 0.0
    obstacles: tuple = ()
    goal: tuple = (0.0, 0.0, 0.0)
    obstacle_penalty: float = -1.0
    horizon_hint: int = 1
    exploration_hint: float = 1.0
    start: StateVec = ()
    reward_table: tuple = ()
    reward_offset: int = 0
    length: int = 0
    noise_cdf: tuple = DEFAULT_NOISE_CDF
    noise_dirs: tuple = DEFAULT_NOISE_DIRS
    action_names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConstructionError(f"unknown environment kind {self.kind!r}")
        if self.dim < 1:
            raise ConstructionError("dim must be positive")
        if not self.actions:
            raise ConstructionError("action set must be non-empty")
        if not self.grid_resolution > 0:
            raise ConstructionError("grid_resolution must be > 0")
        if not self.obstacle_penalty < 0:
            raise ConstructionError("obstacle_penalty must be < 0")
        if not self.exploration_hint >= 0:
            raise ConstructionError("exploration_hint must be >= 0")
        if self.noise_scale < 0:
            raise ConstructionError("noise_scale must be >= 0")
        if len(self.start) != self.dim:
            raise ConstructionError("start state has the wrong dimension")
        if len(self.noise_cdf) != len(self.noise_dirs) or self.noise_cdf[-1] != 1.0:
            raise ConstructionError("noise table must end at cdf 1.0, one direction per entry")
        if self.kind == "bug_trap":
            if self.dim != 3:
                raise ConstructionError("bug trap states are (x, y, heading)")
            gx, gy, _ = self.goal
            for x0, y0, x1, y1 in self.obstacles:
                if x0 > x1 or y0 > y1:
                    raise ConstructionError(f"malformed obstacle {(x0, y0, x1, y1)}")
                if x0 <= gx <= x1 and y0 <= gy <= y1:
                    raise ConstructionError("goal lies inside an obstacle")
        # Flattened, float views used by the scalar functions.
        object.__setattr__(self, "_obstacles_flat", tuple(float(v) for r in self.obstacles for v in r))
        object.__setattr__(self, "_noise_dx", tuple(float(d[0]) for d in self.noise_dirs))
        object.__setattr__(self, "_noise_dy", tuple(float(d[1]) for d in self.noise_dirs))

    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def max_branching(self) -> int:
        """Upper bound on distinct successors of one (state, action) pair."""
        return len(self.noise_cdf) if self.kind == "bug_trap" and self.noise_scale > 0 else 1

    # The pure dynamics; module-level step()/reward() add contract checks.

    def _step(self, state, a, draw):
        if self.kind == "bug_trap":
            speed, turn = self.actions[a]
            return _bug_trap_step(
                state[0], state[1], state[2], speed, turn, self.grid_resolution,
                self.noise_scale, self.noise_cdf, self._noise_dx, self._noise_dy,
                HEADING_DX, HEADING_DY, draw,
            )
        if self.kind == "chain":
            return (_chain_step(state[0], self.actions[a][0], self.length),)
        return (_bandit_step(state[0], self.actions[a][0], len(self.actions)),)

    def _reward(self, state):
        if self.kind == "bug_trap":
            gx, gy, _ = self.goal
            return _bug_trap_reward(state[0], state[1], self.grid_resolution, gx, gy,
                                    self._obstacles_flat, self.obstacle_penalty)
        return _tabulated_reward(state[0], self.reward_table, self.reward_offset)

    def position(self, state) -> tuple[float, float]:
        """World-frame (x, y) of a bug-trap state."""
        return state[0] * self.grid_resolution, state[1] * self.grid_resolution

    def in_obstacle(self, state) -> bool:
        if self.kind != "bug_trap":
            return False
        wx, wy = self.position(state)
        return any(x0 <= wx <= x1 and y0 <= wy <= y1 for x0, y0, x1, y1 in self.obstacles)

    def at_goal(self, state) -> bool:
        if self.kind == "bug_trap":
            wx, wy = self.position(state)
            gx, gy, radius = self.goal
            return math.hypot(wx - gx, wy - gy) <= radius
        if self.kind == "chain":
            return state[0] == self.length
        return False


def _check_state(env: EnvSpec, state) -> None:
    if len(state) != env.dim:
        raise ContractViolation(f"state has dim {len(state)}, environment expects {env.dim}")


def step(env: EnvSpec, state: StateVec, action_idx: int, noise_draw: float) -> StateVec:
    """Successor of ``state`` under action ``action_idx`` and one uniform noise draw."""
    _check_state(env, state)
    if not 0 <= action_idx < env.num_actions:
        raise ContractViolation(f"action index {action_idx} outside [0, {env.num_actions})")
    if not 0.0 <= noise_draw < 1.0:
        raise ContractViolation(f"noise draw must lie in [0, 1), got {noise_draw}")
    return tuple(env._step(state, action_idx, noise_draw))


def reward(env: EnvSpec, state: StateVec) -> float:
    _check_state(env, state)
    return float(env._reward(state))


def discretize(env: EnvSpec, point: Sequence[float]) -> StateVec:
    """Snap a continuous point to grid coordinates (round half away from zero)."""
    if len(point) != env.dim:
        raise ContractViolation(f"point has dim {len(point)}, environment expects {env.dim}")
    out = []
    for v in point:
        if not math.isfinite(v):
            raise ContractViolation(f"non-finite coordinate {v}")
        q = v / env.grid_resolution
        if abs(q) >= 2.0**62:
            raise ContractViolation(f"coordinate {v} outside the representable grid")
        out.append(int(round_half_away(q)))
    return tuple(out)


# --- constructors -----------------------------------------------------------


@dataclass(frozen=True)
class BugTrapParams:
    grid_resolution: float = 0.25
    noise_scale: float = 0.3
    start: tuple = (0.0, 0.0, 0)  # world x, world y, heading index
    goal: tuple = (6.0, 0.0, 1.0)
    # U-shaped trap, mouth facing the start (-x), closed side toward the goal.
    # Walls are one unit thick so a unit step can never hop across one.
    obstacles: tuple = (
        (3.0, -2.0, 4.0, 2.0),
        (2.0, 1.0, 4.0, 2.0),
        (2.0, -2.0, 4.0, -1.0),
    )
    obstacle_penalty: float = -50.0
    horizon_hint: int = 12
    # Returns are undiscounted sums of negative distances and penalties, so a
    # useful UCT constant is on the scale of a whole-path return.
    exploration_hint: float = 100.0


def make_bug_trap_env(params: BugTrapParams | None = None) -> EnvSpec:
    p = params or BugTrapParams()
    if not p.grid_resolution > 0:
        raise ConstructionError("grid_resolution must be > 0")
    sx, sy, sh = p.start
    start = (int(round_half_away(sx / p.grid_resolution)),
             int(round_half_away(sy / p.grid_resolution)), int(sh) % N_HEADINGS)
    return EnvSpec(
        kind="bug_trap",
        dim=3,
        actions=BUG_TRAP_ACTIONS,
        grid_resolution=p.grid_resolution,
        noise_scale=p.noise_scale,
        obstacles=tuple(tuple(float(v) for v in r) for r in p.obstacles),
        goal=tuple(float(v) for v in p.goal),
        obstacle_penalty=p.obstacle_penalty,
        horizon_hint=p.horizon_hint,
        exploration_hint=p.exploration_hint,
        start=start,
        action_names=BUG_TRAP_ACTION_NAMES,
    )


def make_chain_env(length: int = 5, goal_reward: float = 1.0) -> EnvSpec:
    if length < 1:
        raise ConstructionError("chain length must be >= 1")
    table = [0.0] * (2 * length + 1)
    table[-1] = goal_reward
    return EnvSpec(
        kind="chain",
        dim=1,
        actions=((-1,), (1,)),
        horizon_hint=length,
        start=(0,),
        reward_table=tuple(table),
        reward_offset=-length,
        length=length,
        action_names=("left", "right"),
    )


def make_bandit_env(arm_rewards: Sequence[float] = (0.2, 0.5, 0.9)) -> EnvSpec:
    if len(arm_rewards) == 0:
        raise ConstructionError("bandit needs at least one arm")
    n = len(arm_rewards)
    return EnvSpec(
        kind="bandit",
        dim=1,
        actions=tuple((k,) for k in range(n)),
        horizon_hint=1,
        start=(0,),
        reward_table=(0.0, *(float(r) for r in arm_rewards), 0.0),
        reward_offset=0,
        action_names=tuple(f"arm{k}" for k in range(n)),
    )


def env_from_dict(doc: dict) -> EnvSpec:
    """Build an environment from a JSON-style document (see README for the schema)."""
    kind = doc.get("kind", "bug_trap")
    try:
        if kind == "chain":
            return make_chain_env(int(doc.get("length", 5)))
        if kind == "bandit":
            return make_bandit_env(doc["arm_rewards"])
        if kind != "bug_trap":
            raise ConstructionError(f"unknown environment kind {kind!r}")
        if int(doc.get("dim", 3)) != 3:
            raise ConstructionError("bug trap environments have dim 3")
        defaults = BugTrapParams()
        goal = doc.get("goal", defaults.goal)
        if isinstance(goal, dict):
            goal = (goal["x"], goal["y"], goal["radius"])
        env = make_bug_trap_env(BugTrapParams(
            grid_resolution=float(doc.get("grid_resolution", defaults.grid_resolution)),
            noise_scale=float(doc.get("noise_scale", defaults.noise_scale)),
            start=tuple(doc.get("start", defaults.start)),
            goal=tuple(goal),
            obstacles=tuple(tuple(r) for r in doc.get("obstacles", defaults.obstacles)),
            obstacle_penalty=float(doc.get("obstacle_penalty", defaults.obstacle_penalty)),
            horizon_hint=int(doc.get("horizon_hint", defaults.horizon_hint)),
            exploration_hint=float(doc.get("exploration_hint", defaults.exploration_hint)),
        ))
        if "actions" in doc:
            actions = tuple((float(a[0]), int(a[1])) for a in doc["actions"])
            env = EnvSpec(**{**_fields(env), "actions": actions, "action_names": ()})
        return env
    except (KeyError, TypeError, IndexError) as exc:
        raise ConstructionError(f"malformed environment document: {exc}") from exc


def _fields(env: EnvSpec) -> dict:
    return {f: getattr(env, f) for f in env.__dataclass_fields__}


def load_env(path: str | Path) -> EnvSpec:
    with open(path) as fh:
        return env_from_dict(json.load(fh))


def env_to_dict(env: EnvSpec) -> dict:
    if env.kind == "chain":
        return {"kind": "chain", "length": env.length}
    if env.kind == "bandit":
        return {"kind": "bandit", "arm_rewards": list(env.reward_table[1:-1])}
    res = env.grid_resolution
    return {
        "kind": "bug_trap",
        "dim": env.dim,
        "actions": [list(a) for a in env.actions],
        "grid_resolution": res,
        "noise_scale": env.noise_scale,
        "obstacles": [list(r) for r in env.obstacles],
        "goal": list(env.goal),
        "obstacle_penalty": env.obstacle_penalty,
        "horizon_hint": env.horizon_hint,
        "exploration_hint": env.exploration_hint,
        "start": [env.start[0] * res, env.start[1] * res, env.start[2]],
    }


# --- numba view ---------------------------------------------------------------

EnvKernel = namedtuple(
    "EnvKernel",
    ["kind", "dim", "speed", "turn", "delta", "res", "noise_scale", "noise_cdf",
     "noise_dx", "noise_dy", "heading_dx", "heading_dy", "goal_x", "goal_y",
     "obstacles", "penalty", "reward_table", "reward_offset", "length", "n_actions"],
)


def env_kernel(env: EnvSpec) -> EnvKernel:
    """Pack an environment into a numba-friendly tuple of scalars and arrays."""
    n = env.num_actions
    f64 = lambda xs: np.asarray(xs, dtype=np.float64).reshape(-1)  # noqa: E731
    if env.kind == "bug_trap":
        speed = f64([a[0] for a in env.actions])
        turn = np.asarray([a[1] for a in env.actions], dtype=np.int64)
        delta = np.zeros(n, dtype=np.int64)
    else:
        speed = np.zeros(n)
        turn = np.zeros(n, dtype=np.int64)
        delta = np.asarray([a[0] for a in env.actions], dtype=np.int64)
    return EnvKernel(
        kind=_KINDS[env.kind],
        dim=env.dim,
        speed=speed,
        turn=turn,
        delta=delta,
        res=float(env.grid_resolution),
        noise_scale=float(env.noise_scale),
        noise_cdf=f64(env.noise_cdf),
        noise_dx=f64(env._noise_dx),
        noise_dy=f64(env._noise_dy),
        heading_dx=f64(HEADING_DX),
        heading_dy=f64(HEADING_DY),
        goal_x=float(env.goal[0]),
        goal_y=float(env.goal[1]),
        obstacles=f64(env._obstacles_flat) if env.obstacles else np.zeros(0),
        penalty=float(env.obstacle_penalty),
        reward_table=f64(env.reward_table) if env.reward_table else np.zeros(1),
        reward_offset=int(env.reward_offset),
        length=int(env.length),
        n_actions=n,
    )


round_half_away_jit = njit(cache=True)(round_half_away)
_bug_trap_step_jit = njit(cache=True)(_bug_trap_step)
_bug_trap_reward_jit = njit(cache=True)(_bug_trap_reward)
_chain_step_jit = njit(cache=True)(_chain_step)
_bandit_step_jit = njit(cache=True)(_bandit_step)


@njit(cache=True)
def kernel_step(ek, state, a, draw, out):
    """Write the successor of ``state`` (an int64 row) into ``out``."""
    if ek.kind == 0:
        x, y, h = _bug_trap_step_jit(
            state[0], state[1], state[2], ek.speed[a], ek.turn[a], ek.res,
            ek.noise_scale, ek.noise_cdf, ek.noise_dx, ek.noise_dy,
            ek.heading_dx, ek.heading_dy, draw,
        )
        out[0] = x
        out[1] = y
        out[2] = h
    elif ek.kind == 1:
        out[0] = _chain_step_jit(state[0], ek.delta[a], ek.length)
    else:
        out[0] = _bandit_step_jit(state[0], ek.delta[a], ek.n_actions)


@njit(cache=True)
def kernel_reward(ek, state):
    if ek.kind == 0:
        return _bug_trap_reward_jit(state[0], state[1], ek.res, ek.goal_x, ek.goal_y,
                                    ek.obstacles, ek.penalty)
    return ek.reward_table[state[0] - ek.reward_offset]
