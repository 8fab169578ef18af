"""Desk-scale environments and exact soft-optimal experts.

Three environment families are shipped:

* ``tabular``: any finite MDP given by its tables (the canonical instance is
  a 4-state chain, see :func:`chain_spec`),
* ``gridworld``: a fixed 5x5 maze with step cost -1 and a +10 goal bonus,
* ``pointmass``: a 1-D continuous-control task with quadratic state cost.

Discrete environments expose one-hot observations so the same network code
serves tabular and continuous tasks.  Experts are exact: stage-indexed soft
value iteration for discrete tasks and a scripted proportional controller
for the point mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StateError, ValidationError
from .nn import logsumexp_rows

__all__ = [
    "Env",
    "EnvSpec",
    "GridworldSpec",
    "PointMassSpec",
    "ScriptedPointMassPolicy",
    "SoftExpertPolicy",
    "SoftQTable",
    "TabularMdp",
    "TabularSpec",
    "Trajectory",
    "chain_spec",
    "env_by_id",
    "gridworld_mdp",
    "gridworld_spec",
    "maxent_policy",
    "one_hot",
    "pointmass_spec",
    "rollout",
    "scripted_pointmass_expert",
    "soft_value_iteration",
]

_ATOL = 1e-9


def one_hot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n, dtype=np.float64)
    v[i] = 1.0
    return v


@dataclass
class TabularMdp:
    """Finite MDP: transition tensor P[s, a, s'], start dist p0, rewards r[s, a].

    The horizon is a hard episode length; there are no terminal states, so
    absorbing constructions (zero-reward self loops) express early stopping.
    """

    transitions: np.ndarray
    start: np.ndarray
    rewards: np.ndarray
    horizon: int
    gamma: float = 1.0

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.start = np.asarray(self.start, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def validate(self) -> None:
        p, p0, r = self.transitions, self.start, self.rewards
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ShapeError(f"transitions must be (S, A, S), got {p.shape}")
        s, a = p.shape[0], p.shape[1]
        if p0.shape != (s,):
            raise ShapeError(f"start distribution must be ({s},), got {p0.shape}")
        if r.shape != (s, a):
            raise ShapeError(f"rewards must be ({s}, {a}), got {r.shape}")
        if np.any(p < -_ATOL) or np.any(p0 < -_ATOL):
            raise ValidationError("negative probabilities")
        rows = p.sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > _ATOL:
            raise ValidationError(f"transition rows must sum to 1 within {_ATOL}")
        if abs(p0.sum() - 1.0) > _ATOL:
            raise ValidationError(f"start distribution must sum to 1 within {_ATOL}")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")


@dataclass
class SoftQTable:
    """Stage-indexed soft action values: q[t, s, a] for t in 0..T-1."""

    q: np.ndarray
    alpha: float

    def value(self, t: int) -> np.ndarray:
        """Soft state values v[t, s] = alpha * logsumexp_a q[t, s, a] / alpha."""
        return self.alpha * logsumexp_rows(self.q[t] / self.alpha)

    def policy(self, t: int) -> np.ndarray:
        """Stage-t action distribution per state, shape (S, A)."""
        z = self.q[t] / self.alpha
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def policy_table(self) -> np.ndarray:
        """All stages stacked: shape (T, S, A)."""
        return np.stack([self.policy(t) for t in range(self.q.shape[0])])

    def greedy_table(self) -> np.ndarray:
        """Argmax action per (t, s)."""
        return np.argmax(self.q, axis=2)


def soft_value_iteration(mdp: TabularMdp, alpha: float) -> SoftQTable:
    """Finite-horizon soft backup with terminal value zero.

    q[t] = r + gamma * P v[t+1] and v[t] = alpha * logsumexp(q[t] / alpha),
    swept backwards from the horizon.  alpha is the entropy temperature; the
    matching stochastic expert is softmax(q / alpha) per stage.
    """
    if alpha <= 0.0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    t_max = mdp.horizon
    q = np.zeros((t_max, mdp.n_states, mdp.n_actions), dtype=np.float64)
    v_next = np.zeros(mdp.n_states, dtype=np.float64)
    for t in range(t_max - 1, -1, -1):
        q[t] = mdp.rewards + mdp.gamma * (mdp.transitions @ v_next)
        v_next = alpha * logsumexp_rows(q[t] / alpha)
    return SoftQTable(q=q, alpha=alpha)


def maxent_policy(qtable: SoftQTable, t: int, s: int) -> np.ndarray:
    """Action distribution exp((q - v) / alpha) at stage t, state s."""
    return qtable.policy(t)[s]


@dataclass
class Trajectory:
    """One episode: observations (L, obs_dim) and the actions taken.

    Actions are int for discrete tasks and (L, act_dim) float for continuous
    ones.  Rewards are deliberately absent; only evaluation and expert
    generation ever look at the reward channel.
    """

    obs: np.ndarray
    acts: np.ndarray

    def __post_init__(self):
        self.obs = np.asarray(self.obs, dtype=np.float64)
        if self.obs.ndim != 2:
            raise ShapeError(f"observations must be (L, obs_dim), got {self.obs.shape}")
        self.acts = np.asarray(self.acts)
        if len(self.acts) != len(self.obs):
            raise ShapeError(f"{len(self.obs)} observations vs {len(self.acts)} actions")

    def __len__(self) -> int:
        return len(self.obs)


class Env:
    """Episode protocol: reset() then step() until done or the horizon."""

    spec: "EnvSpec"

    def reset(self, seed=None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action):
        """Returns (obs, reward, done).  Stepping a finished episode raises."""
        raise NotImplementedError

    def _rng_from(self, seed) -> np.random.Generator:
        if isinstance(seed, np.random.Generator):
            return seed
        return np.random.default_rng(seed)


@dataclass
class TabularSpec:
    """Environment spec wrapping a TabularMdp; expert_alpha is the default
    temperature used when an exact expert for this instance is requested."""

    mdp: TabularMdp
    env_id: str = "tabular"
    expert_alpha: float = 1.0
    kind: str = field(init=False, default="tabular")
    action_kind: str = field(init=False, default="discrete")

    @property
    def obs_dim(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def horizon(self) -> int:
        return self.mdp.horizon

    def make(self) -> "TabularEnv":
        return TabularEnv(self)


class TabularEnv(Env):
    def __init__(self, spec: TabularSpec):
        self.spec = spec
        self._mdp = spec.mdp
        self._state = -1
        self._t = 0
        self._done = True
        self._rng = np.random.default_rng()

    @property
    def state(self) -> int:
        return self._state

    def reset(self, seed=None) -> np.ndarray:
        self._rng = self._rng_from(seed)
        self._state = int(self._rng.choice(self._mdp.n_states, p=self._mdp.start))
        self._t = 0
        self._done = False
        return one_hot(self._state, self._mdp.n_states)

    def step(self, action):
        if self._done:
            raise StateError("step() on a finished episode; call reset() first")
        a = int(action)
        if not 0 <= a < self._mdp.n_actions:
            raise ValueError(f"action {a} out of range [0, {self._mdp.n_actions})")
        r = float(self._mdp.rewards[self._state, a])
        self._state = int(self._rng.choice(self._mdp.n_states, p=self._mdp.transitions[self._state, a]))
        self._t += 1
        self._done = self._t >= self._mdp.horizon
        return one_hot(self._state, self._mdp.n_states), r, self._done


def chain_spec(horizon: int = 5, gamma: float = 0.3, expert_alpha: float = 1.0) -> TabularSpec:
    """The canonical 4-state, 2-action chain.

    Action 1 moves right (clamped at state 3), action 0 moves left (clamped
    at 0).  Reward 0.1 * state + 0.4 for the right move, so drifting right
    is softly preferred in every state at every stage.
    """
    n = 4
    p = np.zeros((n, 2, n))
    for s in range(n):
        p[s, 0, max(s - 1, 0)] = 1.0
        p[s, 1, min(s + 1, n - 1)] = 1.0
    r = np.zeros((n, 2))
    for s in range(n):
        r[s, 0] = 0.1 * s
        r[s, 1] = 0.1 * s + 0.4
    p0 = np.zeros(n)
    p0[0] = 1.0
    mdp = TabularMdp(transitions=p, start=p0, rewards=r, horizon=horizon, gamma=gamma)
    return TabularSpec(mdp=mdp, env_id="chain", expert_alpha=expert_alpha)


# 5x5 maze: S start, G goal, # wall.  Two disjoint 8-step corridors reach G.
_GRID_ROWS = (
    "S....",
    ".###.",
    "...#.",
    "##.#.",
    "....G",
)
_GRID_N = 5
# action order: 0 up, 1 down, 2 left, 3 right
_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _parse_grid():
    walls = set()
    start = goal = None
    for rr, row in enumerate(_GRID_ROWS):
        for cc, ch in enumerate(row):
            if ch == "#":
                walls.add((rr, cc))
            elif ch == "S":
                start = (rr, cc)
            elif ch == "G":
                goal = (rr, cc)
    return walls, start, goal


_GRID_WALLS, _GRID_START, _GRID_GOAL = _parse_grid()


def _grid_next(cell: tuple[int, int], action: int) -> tuple[int, int]:
    dr, dc = _MOVES[action]
    nxt = (cell[0] + dr, cell[1] + dc)
    if not (0 <= nxt[0] < _GRID_N and 0 <= nxt[1] < _GRID_N) or nxt in _GRID_WALLS:
        return cell
    return nxt


def _cell_id(cell: tuple[int, int]) -> int:
    return cell[0] * _GRID_N + cell[1]


def gridworld_mdp(horizon: int = 30) -> TabularMdp:
    """The maze as a TabularMdp: absorbing zero-reward goal, -1 per step and
    +10 on the transition that enters the goal."""
    n = _GRID_N * _GRID_N
    p = np.zeros((n, 4, n))
    r = np.zeros((n, 4))
    for rr in range(_GRID_N):
        for cc in range(_GRID_N):
            s = _cell_id((rr, cc))
            if (rr, cc) == _GRID_GOAL:
                p[s, :, s] = 1.0
                continue
            for a in range(4):
                nxt = _grid_next((rr, cc), a)
                p[s, a, _cell_id(nxt)] = 1.0
                r[s, a] = -1.0 + (10.0 if nxt == _GRID_GOAL else 0.0)
    p0 = np.zeros(n)
    p0[_cell_id(_GRID_START)] = 1.0
    return TabularMdp(transitions=p, start=p0, rewards=r, horizon=horizon, gamma=1.0)


@dataclass
class GridworldSpec:
    horizon: int = 30
    expert_alpha: float = 1.0
    env_id: str = field(init=False, default="gridworld")
    kind: str = field(init=False, default="gridworld")
    action_kind: str = field(init=False, default="discrete")

    @property
    def obs_dim(self) -> int:
        return _GRID_N * _GRID_N

    @property
    def n_actions(self) -> int:
        return 4

    @property
    def mdp(self) -> TabularMdp:
        return gridworld_mdp(self.horizon)

    def make(self) -> "GridworldEnv":
        return GridworldEnv(self)


class GridworldEnv(Env):
    """Interactive form of the maze; the episode actually ends at the goal.

    Return totals match the absorbing TabularMdp form exactly because the
    absorbed tail earns zero reward.
    """

    def __init__(self, spec: GridworldSpec):
        self.spec = spec
        self._cell = _GRID_START
        self._t = 0
        self._done = True

    @property
    def cell(self) -> tuple[int, int]:
        return self._cell

    def reset(self, seed=None) -> np.ndarray:
        self._rng_from(seed)  # accepted for protocol symmetry; dynamics are deterministic
        self._cell = _GRID_START
        self._t = 0
        self._done = False
        return one_hot(_cell_id(self._cell), self.spec.obs_dim)

    def step(self, action):
        if self._done:
            raise StateError("step() on a finished episode; call reset() first")
        a = int(action)
        if not 0 <= a < 4:
            raise ValueError(f"action {a} out of range [0, 4)")
        nxt = _grid_next(self._cell, a)
        r = -1.0 + (10.0 if nxt == _GRID_GOAL else 0.0)
        self._cell = nxt
        self._t += 1
        self._done = nxt == _GRID_GOAL or self._t >= self.spec.horizon
        return one_hot(_cell_id(self._cell), self.spec.obs_dim), r, self._done


@dataclass
class PointMassSpec:
    horizon: int = 50
    env_id: str = field(init=False, default="pointmass")
    kind: str = field(init=False, default="pointmass")
    action_kind: str = field(init=False, default="continuous")

    @property
    def obs_dim(self) -> int:
        return 1

    @property
    def act_dim(self) -> int:
        return 1

    def make(self) -> "PointMassEnv":
        return PointMassEnv(self)


class PointMassEnv(Env):
    """1-D point mass: x' = clamp(x + 0.1 a, -2, 2) with a clamped to [-1, 1].

    Reward is -x'^2, the start position is uniform on [-1, 1], and episodes
    run exactly ``horizon`` steps.
    """

    def __init__(self, spec: PointMassSpec):
        self.spec = spec
        self._x = 0.0
        self._t = 0
        self._done = True

    @property
    def x(self) -> float:
        return self._x

    def reset(self, seed=None) -> np.ndarray:
        rng = self._rng_from(seed)
        self._x = float(rng.uniform(-1.0, 1.0))
        self._t = 0
        self._done = False
        return np.array([self._x])

    def step(self, action):
        if self._done:
            raise StateError("step() on a finished episode; call reset() first")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (1,):
            raise ShapeError(f"action must be a scalar or shape (1,), got {np.shape(action)}")
        a = float(np.clip(a[0], -1.0, 1.0))
        self._x = float(np.clip(self._x + 0.1 * a, -2.0, 2.0))
        self._t += 1
        self._done = self._t >= self.spec.horizon
        return np.array([self._x]), -self._x * self._x, self._done


EnvSpec = TabularSpec | GridworldSpec | PointMassSpec


def env_by_id(env_id: str) -> EnvSpec:
    """Named instances addressable from configs and the command line."""
    if env_id == "chain":
        return chain_spec()
    if env_id == "gridworld":
        return gridworld_spec()
    if env_id == "pointmass":
        return pointmass_spec()
    raise ValidationError(f"unknown environment id {env_id!r} (expected chain, gridworld, or pointmass)")


def gridworld_spec(horizon: int = 30, expert_alpha: float = 1.0) -> GridworldSpec:
    return GridworldSpec(horizon=horizon, expert_alpha=expert_alpha)


def pointmass_spec(horizon: int = 50) -> PointMassSpec:
    return PointMassSpec(horizon=horizon)


def scripted_pointmass_expert(x: float) -> float:
    """Proportional controller a = clamp(-5 x, -1, 1)."""
    return float(np.clip(-5.0 * x, -1.0, 1.0))


class ScriptedPointMassPolicy:
    """The scripted controller wrapped in the policy sampling protocol."""

    action_kind = "continuous"

    def sample(self, obs, rng) -> np.ndarray:
        return np.array([scripted_pointmass_expert(float(np.asarray(obs).reshape(-1)[0]))])

    def snapshot(self) -> "ScriptedPointMassPolicy":
        return ScriptedPointMassPolicy()


class SoftExpertPolicy:
    """Stage-indexed sampler for a SoftQTable expert on a one-hot discrete env.

    The optimal entropy-regularized policy of a finite-horizon task depends
    on the stage, so sampling needs the step index: rollout() passes it to
    any policy with ``stage_indexed`` set.
    """

    action_kind = "discrete"
    stage_indexed = True

    def __init__(self, qtable: SoftQTable):
        self.qtable = qtable
        self._tables = qtable.policy_table()

    def sample(self, obs, rng: np.random.Generator, t: int) -> int:
        s = int(np.argmax(np.asarray(obs)))
        t = min(t, self._tables.shape[0] - 1)
        p = self._tables[t, s]
        return int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))

    def log_prob(self, obs, action, t: int) -> float:
        s = int(np.argmax(np.asarray(obs)))
        t = min(t, self._tables.shape[0] - 1)
        return float(np.log(self._tables[t, s, int(action)]))

    def snapshot(self) -> "SoftExpertPolicy":
        return SoftExpertPolicy(self.qtable)


def rollout(env_spec: EnvSpec, policy, seed) -> tuple[Trajectory, float]:
    """Run one episode and return (trajectory, undiscounted return).

    A single Generator seeded from ``seed`` drives reset, policy sampling,
    and transitions, so the episode is a pure function of (spec, policy,
    seed).  The trajectory stores only (obs, act) pairs; the reward sum is
    returned separately so imitation code can drop it unseen.
    """
    rng = np.random.default_rng(seed)
    env = env_spec.make()
    obs = env.reset(rng)
    stage_indexed = getattr(policy, "stage_indexed", False)
    obs_list, act_list = [], []
    total = 0.0
    t = 0
    done = False
    while not done:
        act = policy.sample(obs, rng, t) if stage_indexed else policy.sample(obs, rng)
        obs_list.append(obs)
        act_list.append(act)
        obs, reward, done = env.step(act)
        total += reward
        t += 1
    acts = np.asarray(act_list)
    return Trajectory(obs=np.asarray(obs_list), acts=acts), total
