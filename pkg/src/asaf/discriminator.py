"""Structured discriminators whose parameters are the thing being learned.

The full-trajectory discriminator scores a window tau by the learner's and
the frozen generator's policy-only likelihoods

    D = ql(tau) / (ql(tau) + qg(tau)),   q(tau) = prod_t pi(a_t | s_t).

Environment dynamics multiply numerator and denominator identically and
cancel, so D never touches a transition model.  All arithmetic stays in the
log domain:

    log D = A - logaddexp(A, G),  log(1 - D) = G - logaddexp(A, G)

with A = sum log learner, G = sum log generator.  Minimizing the usual
two-sided cross entropy over D trains the learner policy directly.

The transition-wise variant (ASQF) replaces A by an unnormalized score
f(s, a) from a score net; its softmax is the extracted policy.  It only
makes sense for discrete actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError, UnsupportedError
from .nn import Mlp, log_softmax_rows
from .envs import Trajectory
from .policies import CategoricalPolicy

__all__ = [
    "AsqfModel",
    "PackedWindows",
    "TransitionBatch",
    "Window",
    "asqf_bce_loss",
    "asqf_extract_policy",
    "asqf_log_d",
    "bce_loss",
    "bce_on_packed",
    "pack_windows",
    "structured_log_d",
    "window_split",
]


@dataclass
class Window:
    """A contiguous (obs, act) slice of one trajectory."""

    obs: np.ndarray
    acts: np.ndarray
    source: int = -1
    offset: int = 0

    def __len__(self) -> int:
        return len(self.obs)


def window_split(traj: Trajectory, w: int, stride: int, source: int = -1) -> list[Window]:
    """Cut a trajectory into windows of length w at the given stride.

    Offsets are 0, stride, 2 stride, ... while a full window fits.  An
    episode shorter than w yields a single truncated window so no data is
    ever dropped.
    """
    if w < 1:
        raise ValueError(f"window length must be >= 1, got {w}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = len(traj)
    if n == 0:
        raise ValueError("cannot split an empty trajectory")
    if n < w:
        return [Window(obs=traj.obs, acts=traj.acts, source=source, offset=0)]
    return [
        Window(obs=traj.obs[off : off + w], acts=traj.acts[off : off + w], source=source, offset=off)
        for off in range(0, n - w + 1, stride)
    ]


@dataclass
class PackedWindows:
    """A list of windows flattened for batched net evaluation.

    ``starts`` marks each window's first row in the packed arrays; summing a
    per-step vector with reduceat over ``starts`` gives per-window totals.
    ``gen_logp`` caches the frozen generator's per-window log-likelihood; it
    is filled in by the caller whenever the generator changes.
    """

    obs: np.ndarray
    acts: np.ndarray
    starts: np.ndarray
    lengths: np.ndarray
    gen_logp: np.ndarray | None = None

    @property
    def n_windows(self) -> int:
        return len(self.starts)

    def segment_sum(self, per_step: np.ndarray) -> np.ndarray:
        return np.add.reduceat(per_step, self.starts)

    def per_step(self, per_window: np.ndarray) -> np.ndarray:
        return np.repeat(per_window, self.lengths)

    def take(self, idx: np.ndarray) -> "PackedWindows":
        idx = np.asarray(idx)
        rows = np.concatenate([np.arange(s, s + l) for s, l in zip(self.starts[idx], self.lengths[idx])])
        lengths = self.lengths[idx]
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        return PackedWindows(
            obs=self.obs[rows],
            acts=self.acts[rows],
            starts=starts,
            lengths=lengths,
            gen_logp=None if self.gen_logp is None else self.gen_logp[idx],
        )


def pack_windows(windows: list[Window]) -> PackedWindows:
    if not windows:
        raise ValueError("cannot pack an empty window list")
    lengths = np.array([len(w) for w in windows], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    return PackedWindows(
        obs=np.concatenate([w.obs for w in windows]),
        acts=np.concatenate([np.atleast_1d(w.acts) for w in windows]),
        starts=starts,
        lengths=lengths,
    )


def refresh_generator_scores(packed: PackedWindows, generator) -> None:
    """Recompute the cached generator log-likelihood per window."""
    packed.gen_logp = packed.segment_sum(generator.log_prob_batch(packed.obs, packed.acts))


def structured_log_d(learner, generator, window: Window) -> tuple[float, float]:
    """(log D, log(1 - D)) for one window; both always finite."""
    a = float(np.sum(learner.log_prob_batch(window.obs, np.atleast_1d(window.acts))))
    g = float(np.sum(generator.log_prob_batch(window.obs, np.atleast_1d(window.acts))))
    m = np.logaddexp(a, g)
    return a - m, g - m


def bce_on_packed(learner, packed_e: PackedWindows, packed_g: PackedWindows) -> tuple[float, np.ndarray]:
    """Two-sided cross entropy and its gradient in the learner's parameters.

    Both packs must carry cached generator scores.  The expert and generator
    sides must hold the same number of windows; the loss weighs each side by
    1/n.  Gradient per window: expert side -(1 - D)/n, generator side +D/n,
    distributed onto each step's log-prob gradient.
    """
    if packed_e.gen_logp is None or packed_g.gen_logp is None:
        raise ValueError("generator scores not cached; call refresh_generator_scores first")
    n_e, n_g = packed_e.n_windows, packed_g.n_windows
    if n_e != n_g or n_e == 0:
        raise ValueError(f"need equally many expert and generator windows, got {n_e} vs {n_g}")

    lp_e, cache_e = learner.log_prob_tape(packed_e.obs, packed_e.acts)
    lp_g, cache_g = learner.log_prob_tape(packed_g.obs, packed_g.acts)
    a_e = packed_e.segment_sum(lp_e)
    a_g = packed_g.segment_sum(lp_g)
    m_e = np.logaddexp(a_e, packed_e.gen_logp)
    m_g = np.logaddexp(a_g, packed_g.gen_logp)
    log_d_e = a_e - m_e                      # log D on expert windows
    log_1md_g = packed_g.gen_logp - m_g      # log(1 - D) on generator windows
    loss = -float(np.mean(log_d_e)) - float(np.mean(log_1md_g))

    w_e = -np.exp(packed_e.gen_logp - m_e) / n_e   # -(1 - D)/n
    w_g = np.exp(a_g - m_g) / n_g                  # +D/n
    grad = learner.backprop_log_prob(cache_e, packed_e.per_step(w_e))
    grad += learner.backprop_log_prob(cache_g, packed_g.per_step(w_g))
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite discriminator loss or gradient")
    return loss, grad


def bce_loss(learner, generator, expert_windows: list[Window], gen_windows: list[Window]) -> tuple[float, np.ndarray]:
    """Convenience wrapper over ``bce_on_packed`` for plain window lists."""
    packed_e = pack_windows(expert_windows)
    packed_g = pack_windows(gen_windows)
    refresh_generator_scores(packed_e, generator)
    refresh_generator_scores(packed_g, generator)
    return bce_on_packed(learner, packed_e, packed_g)


@dataclass
class TransitionBatch:
    """Flat (obs, act) pairs for the transition-wise variant."""

    obs: np.ndarray
    acts: np.ndarray
    gen_logp: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, idx: np.ndarray) -> "TransitionBatch":
        idx = np.asarray(idx)
        return TransitionBatch(
            obs=self.obs[idx],
            acts=self.acts[idx],
            gen_logp=None if self.gen_logp is None else self.gen_logp[idx],
        )


def transitions_from(trajs) -> TransitionBatch:
    obs = np.concatenate([t.obs for t in trajs])
    acts = np.concatenate([np.atleast_1d(t.acts) for t in trajs])
    return TransitionBatch(obs=obs, acts=acts)


class AsqfModel:
    """Unnormalized per-action score net f(s, a); softmax(f) is the policy."""

    def __init__(self, net: Mlp):
        self.net = net
        self.n_actions = net.out_dim

    @classmethod
    def init(cls, obs_dim: int, n_actions: int, hidden, rng: np.random.Generator) -> "AsqfModel":
        return cls(Mlp.init((obs_dim, *hidden, n_actions), rng))

    def _check_acts(self, acts: np.ndarray) -> np.ndarray:
        acts = np.asarray(acts)
        if acts.dtype.kind == "f":
            if acts.ndim > 1 or not np.allclose(acts, np.round(acts)):
                raise UnsupportedError("transition-wise scored discriminator requires discrete actions")
            acts = acts.astype(np.int64)
        if acts.ndim != 1:
            raise UnsupportedError("transition-wise scored discriminator requires discrete actions")
        if np.any(acts < 0) or np.any(acts >= self.n_actions):
            raise ValueError(f"actions must lie in [0, {self.n_actions})")
        return acts

    def scores(self, obs) -> np.ndarray:
        out, _ = self.net.forward(obs)
        return out

    def score_tape(self, obs: np.ndarray, acts: np.ndarray):
        acts = self._check_acts(acts)
        out, tape = self.net.forward(obs)
        return out[np.arange(len(acts)), acts], (tape, acts, out.shape)

    def backprop_scores(self, cache, weights: np.ndarray) -> np.ndarray:
        tape, acts, shape = cache
        dy = np.zeros(shape, dtype=np.float64)
        dy[np.arange(len(acts)), acts] = weights
        return self.net.backward(tape, dy)

    def copy(self) -> "AsqfModel":
        return AsqfModel(self.net.copy())


def asqf_log_d(model: AsqfModel, generator, obs, acts) -> tuple[np.ndarray, np.ndarray]:
    """Per-transition (log D, log(1 - D)) with D = e^f / (e^f + pi_g)."""
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    acts = model._check_acts(np.atleast_1d(acts))
    f = model.scores(obs)[np.arange(len(acts)), acts]
    g = generator.log_prob_batch(obs, acts)
    m = np.logaddexp(f, g)
    return f - m, g - m


def asqf_bce_loss(model: AsqfModel, generator, expert: TransitionBatch, gen: TransitionBatch) -> tuple[float, np.ndarray]:
    """Transition-wise two-sided cross entropy and gradient in the scores.

    The cached ``gen_logp`` fields are used when present so the frozen
    generator is evaluated once per collection, not once per minibatch.
    """
    n_e, n_g = len(expert), len(gen)
    if n_e != n_g or n_e == 0:
        raise ValueError(f"need equally many expert and generator transitions, got {n_e} vs {n_g}")
    g_e = expert.gen_logp if expert.gen_logp is not None else generator.log_prob_batch(expert.obs, expert.acts)
    g_g = gen.gen_logp if gen.gen_logp is not None else generator.log_prob_batch(gen.obs, gen.acts)

    f_e, cache_e = model.score_tape(expert.obs, expert.acts)
    f_g, cache_g = model.score_tape(gen.obs, gen.acts)
    m_e = np.logaddexp(f_e, g_e)
    m_g = np.logaddexp(f_g, g_g)
    loss = -float(np.mean(f_e - m_e)) - float(np.mean(g_g - m_g))

    w_e = -np.exp(g_e - m_e) / n_e
    w_g = np.exp(f_g - m_g) / n_g
    grad = model.backprop_scores(cache_e, w_e) + model.backprop_scores(cache_g, w_g)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite discriminator loss or gradient")
    return loss, grad


def asqf_extract_policy(model: AsqfModel) -> CategoricalPolicy:
    """Freeze the current scores into a softmax policy (an independent copy)."""
    return CategoricalPolicy(model.net.copy())
