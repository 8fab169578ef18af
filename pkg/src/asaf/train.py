"""Training loops: structured-discriminator imitation and two baselines.

The main loop alternates, for a configured number of outer steps:

1. collect ``n_g`` fresh episodes with the frozen generator policy,
2. run ``epochs`` passes of minibatch cross-entropy updates on the learner
   (the generator pool defines an epoch; expert windows are drawn with
   replacement to pair each batch one-to-one),
3. replace the generator with a snapshot of the learner.

No reinforcement signal is used anywhere: the reward channel is read only
by ``evaluate_policy`` and by expert generation.  Collected generator data
is discarded after every outer step, keeping the discriminator strictly
on-policy.

Seeding: everything derives from ``TrainConfig.seed``.  Evaluation episodes
use the standalone seed ``seed + 100003 * (outer_step)`` recorded in each
log row, so any logged evaluation can be reproduced later from a saved
checkpoint with ``evaluate_policy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import discriminator as disc
from .envs import EnvSpec, TabularSpec, Trajectory, rollout, soft_value_iteration
from .errors import CapacityError, UnsupportedError, ValidationError
from .exact import exact_traj_distribution, js_between
from .nn import AdamState, adam_step, clip_by_global_norm, clip_by_value
from .policies import CategoricalPolicy, make_policy, tabular_policy_extract

__all__ = [
    "ALGORITHMS",
    "DemoSet",
    "RunLog",
    "RunRecord",
    "TrainConfig",
    "asaf_train",
    "asqf_train",
    "bc_train",
    "evaluate_policy",
    "train",
]

ALGORITHMS = ("asaf", "asaf_w", "asaf_1", "asqf", "bc")


@dataclass
class TrainConfig:
    algorithm: str = "asaf"
    w: int | None = None            # window length, asaf_w only
    stride: int | None = None       # window offset step, defaults to w
    lr_d: float = 0.001
    batch: int = 10                 # windows (or transitions) per side per minibatch
    n_g: int = 10                   # episodes collected between updates
    epochs: int = 50                # passes over the collected pool per outer step
    clip: float = 1.0
    clip_mode: str = "norm"         # "norm" or "value"
    steps: int = 100                # outer steps
    eval_k: int = 20
    eval_interval: int = 10
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)

    def validated(self) -> "TrainConfig":
        cfg = replace(self, hidden=tuple(int(h) for h in self.hidden))
        if cfg.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {cfg.algorithm!r}, expected one of {ALGORITHMS}")
        if cfg.algorithm == "asaf_w":
            if cfg.w is None or cfg.w < 1:
                raise ValidationError("asaf_w needs a window length w >= 1")
            if cfg.stride is None:
                cfg = replace(cfg, stride=cfg.w)
            elif cfg.stride < 1:
                raise ValidationError("stride must be >= 1")
        elif cfg.algorithm == "asaf_1":
            if cfg.w not in (None, 1) or cfg.stride not in (None, 1):
                raise ValidationError("asaf_1 is fixed to w = 1, stride = 1")
            cfg = replace(cfg, w=1, stride=1)
        else:
            if cfg.w is not None or cfg.stride is not None:
                raise ValidationError(f"{cfg.algorithm} does not take w/stride")
        if cfg.lr_d <= 0.0:
            raise ValidationError("lr_d must be positive")
        if cfg.batch < 1:
            raise ValidationError("batch must be >= 1")
        if cfg.n_g < 1:
            raise ValidationError("n_g must be >= 1")
        if cfg.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if cfg.clip <= 0.0:
            raise ValidationError("clip must be positive")
        if cfg.clip_mode not in ("norm", "value"):
            raise ValidationError(f"clip_mode must be 'norm' or 'value', got {cfg.clip_mode!r}")
        if cfg.steps < 0:
            raise ValidationError("steps must be >= 0")
        if cfg.eval_k < 1:
            raise ValidationError("eval_k must be >= 1")
        if cfg.eval_interval < 1:
            raise ValidationError("eval_interval must be >= 1")
        if cfg.seed < 0:
            raise ValidationError("seed must be >= 0")
        if any(h < 1 for h in cfg.hidden):
            raise ValidationError("hidden sizes must be >= 1")
        return cfg


@dataclass
class DemoSet:
    """Expert demonstrations plus the metadata needed to check compatibility."""

    trajectories: list[Trajectory]
    env_id: str
    action_kind: str
    obs_dim: int
    mean_return: float
    generator: str = ""

    def __len__(self) -> int:
        return len(self.trajectories)


@dataclass
class RunRecord:
    step: int               # outer steps completed when the row was written
    env_steps: int          # cumulative collected environment transitions
    mean_return: float
    std_return: float
    bce_loss: float
    js_to_expert: float | None
    eval_seed: int


@dataclass
class RunLog:
    rows: list[RunRecord] = field(default_factory=list)
    first_batch_losses: list[float] = field(default_factory=list)
    total_env_steps: int = 0


def evaluate_policy(policy, env_spec: EnvSpec, k: int = 20, seed: int = 0) -> tuple[float, float]:
    """Mean and population std of undiscounted return over k seeded episodes.

    Episode i uses the composite seed (seed, i), so the whole evaluation is
    reproducible from the scalar seed alone.  Sampling is stochastic: the
    policy's own distribution is drawn from, never its argmax.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    returns = np.empty(k, dtype=np.float64)
    for i in range(k):
        _, returns[i] = rollout(env_spec, policy, seed=(seed, i))
    return float(returns.mean()), float(returns.std())


def _check_demos(demos: DemoSet, env_spec: EnvSpec) -> None:
    if len(demos) == 0:
        raise ValidationError("demo set is empty")
    if demos.env_id != env_spec.env_id:
        raise ValidationError(f"demos recorded on {demos.env_id!r} cannot train on {env_spec.env_id!r}")
    if demos.action_kind != env_spec.action_kind:
        raise ValidationError(f"demo action kind {demos.action_kind!r} does not match env {env_spec.action_kind!r}")
    if demos.obs_dim != env_spec.obs_dim:
        raise ValidationError(f"demo obs_dim {demos.obs_dim} does not match env {env_spec.obs_dim}")


def _eval_seed(cfg: TrainConfig, outer_step: int) -> int:
    return cfg.seed + 100003 * outer_step


class _ExpertReference:
    """Cached exact expert trajectory distribution for tabular tracking."""

    def __init__(self, env_spec: EnvSpec):
        self.dist = None
        if isinstance(env_spec, TabularSpec):
            try:
                expert = soft_value_iteration(env_spec.mdp, env_spec.expert_alpha)
                self.dist = exact_traj_distribution(env_spec.mdp, expert.policy_table())
                self.mdp = env_spec.mdp
            except CapacityError:
                self.dist = None

    def js(self, policy) -> float | None:
        if self.dist is None or not isinstance(policy, CategoricalPolicy):
            return None
        table = tabular_policy_extract(policy, self.mdp.n_states)
        return js_between(exact_traj_distribution(self.mdp, table), self.dist)


def _clip(grad: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    if cfg.clip_mode == "norm":
        return clip_by_global_norm(grad, cfg.clip)
    return clip_by_value(grad, cfg.clip)


def _make_windows(trajs: list[Trajectory], cfg: TrainConfig) -> list[disc.Window]:
    """Whole trajectories for asaf, fixed-size cuts for asaf_w/asaf_1."""
    out = []
    for i, traj in enumerate(trajs):
        if cfg.algorithm == "asaf":
            out.append(disc.Window(obs=traj.obs, acts=traj.acts, source=i, offset=0))
        else:
            out.extend(disc.window_split(traj, cfg.w, cfg.stride, source=i))
    return out


def _log_eval(log, cfg, policy, env_spec, reference, outer_step, env_steps, losses):
    seed = _eval_seed(cfg, outer_step)
    mean, std = evaluate_policy(policy, env_spec, k=cfg.eval_k, seed=seed)
    bce = float(np.mean(losses)) if losses else float("nan")
    log.rows.append(
        RunRecord(
            step=outer_step,
            env_steps=env_steps,
            mean_return=mean,
            std_return=std,
            bce_loss=bce,
            js_to_expert=reference.js(policy),
            eval_seed=seed,
        )
    )


def asaf_train(cfg: TrainConfig, demos: DemoSet, env_spec: EnvSpec):
    """Full-trajectory, windowed, or transition-wise structured-discriminator
    training; returns (policy, RunLog)."""
    cfg = cfg.validated()
    if cfg.algorithm not in ("asaf", "asaf_w", "asaf_1"):
        raise ValidationError(f"asaf_train got algorithm {cfg.algorithm!r}")
    _check_demos(demos, env_spec)

    ss_init, ss_collect, ss_batch = np.random.SeedSequence(cfg.seed).spawn(3)
    learner = make_policy(env_spec, cfg.hidden, np.random.default_rng(ss_init))
    generator = learner.snapshot()
    adam = AdamState.for_params(learner.net.params)
    collect_rng = np.random.default_rng(ss_collect)
    batch_rng = np.random.default_rng(ss_batch)

    packed_e = disc.pack_windows(_make_windows(demos.trajectories, cfg))
    reference = _ExpertReference(env_spec)
    log = RunLog()
    env_steps = 0

    for m in range(cfg.steps):
        trajs = []
        for _ in range(cfg.n_g):
            traj, _ = rollout(env_spec, generator, seed=collect_rng)
            trajs.append(traj)
            env_steps += len(traj)
        packed_g = disc.pack_windows(_make_windows(trajs, cfg))
        disc.refresh_generator_scores(packed_e, generator)
        disc.refresh_generator_scores(packed_g, generator)

        losses = []
        first = True
        for _ in range(cfg.epochs):
            order = batch_rng.permutation(packed_g.n_windows)
            for lo in range(0, len(order), cfg.batch):
                gen_idx = order[lo : lo + cfg.batch]
                exp_idx = batch_rng.integers(0, packed_e.n_windows, size=len(gen_idx))
                loss, grad = disc.bce_on_packed(learner, packed_e.take(exp_idx), packed_g.take(gen_idx))
                if first:
                    log.first_batch_losses.append(loss)
                    first = False
                losses.append(loss)
                new_params, adam = adam_step(adam, learner.net.params, _clip(grad, cfg), cfg.lr_d)
                learner.net.params = new_params

        generator = learner.snapshot()
        if (m + 1) % cfg.eval_interval == 0 or m == cfg.steps - 1:
            _log_eval(log, cfg, learner, env_spec, reference, m + 1, env_steps, losses)

    log.total_env_steps = env_steps
    return learner, log


def asqf_train(cfg: TrainConfig, demos: DemoSet, env_spec: EnvSpec):
    """Transition-wise scored-discriminator training for discrete actions.

    The learned object is the score net; the behavior policy is re-extracted
    as its softmax after every outer step.  Returns (policy, RunLog) where
    the policy is the final extraction.
    """
    cfg = cfg.validated()
    if cfg.algorithm != "asqf":
        raise ValidationError(f"asqf_train got algorithm {cfg.algorithm!r}")
    if env_spec.action_kind != "discrete":
        raise UnsupportedError("the scored discriminator requires discrete actions")
    _check_demos(demos, env_spec)

    ss_init, ss_collect, ss_batch = np.random.SeedSequence(cfg.seed).spawn(3)
    model = disc.AsqfModel.init(env_spec.obs_dim, env_spec.n_actions, cfg.hidden, np.random.default_rng(ss_init))
    generator = disc.asqf_extract_policy(model)
    adam = AdamState.for_params(model.net.params)
    collect_rng = np.random.default_rng(ss_collect)
    batch_rng = np.random.default_rng(ss_batch)

    expert_pool = disc.transitions_from(demos.trajectories)
    reference = _ExpertReference(env_spec)
    log = RunLog()
    env_steps = 0

    for m in range(cfg.steps):
        trajs = []
        for _ in range(cfg.n_g):
            traj, _ = rollout(env_spec, generator, seed=collect_rng)
            trajs.append(traj)
            env_steps += len(traj)
        gen_pool = disc.transitions_from(trajs)
        expert_pool.gen_logp = generator.log_prob_batch(expert_pool.obs, expert_pool.acts)
        gen_pool.gen_logp = generator.log_prob_batch(gen_pool.obs, gen_pool.acts)

        losses = []
        first = True
        for _ in range(cfg.epochs):
            order = batch_rng.permutation(len(gen_pool))
            for lo in range(0, len(order), cfg.batch):
                gen_idx = order[lo : lo + cfg.batch]
                exp_idx = batch_rng.integers(0, len(expert_pool), size=len(gen_idx))
                loss, grad = disc.asqf_bce_loss(model, generator, expert_pool.take(exp_idx), gen_pool.take(gen_idx))
                if first:
                    log.first_batch_losses.append(loss)
                    first = False
                losses.append(loss)
                new_params, adam = adam_step(adam, model.net.params, _clip(grad, cfg), cfg.lr_d)
                model.net.params = new_params

        generator = disc.asqf_extract_policy(model)
        if (m + 1) % cfg.eval_interval == 0 or m == cfg.steps - 1:
            _log_eval(log, cfg, generator, env_spec, reference, m + 1, env_steps, losses)

    log.total_env_steps = env_steps
    return disc.asqf_extract_policy(model), log


def bc_train(cfg: TrainConfig, demos: DemoSet, env_spec: EnvSpec):
    """Behavioral cloning: maximize demo log-likelihood, no interaction.

    Environment steps stay at zero; the env is touched only by evaluation.
    Returns (policy, RunLog); the bce_loss column carries the negative
    log-likelihood.
    """
    cfg = cfg.validated()
    if cfg.algorithm != "bc":
        raise ValidationError(f"bc_train got algorithm {cfg.algorithm!r}")
    _check_demos(demos, env_spec)

    ss_init, _, ss_batch = np.random.SeedSequence(cfg.seed).spawn(3)
    policy = make_policy(env_spec, cfg.hidden, np.random.default_rng(ss_init))
    adam = AdamState.for_params(policy.net.params)
    batch_rng = np.random.default_rng(ss_batch)

    pool = disc.transitions_from(demos.trajectories)
    reference = _ExpertReference(env_spec)
    log = RunLog()

    for m in range(cfg.steps):
        losses = []
        first = True
        for _ in range(cfg.epochs):
            order = batch_rng.permutation(len(pool))
            for lo in range(0, len(order), cfg.batch):
                idx = order[lo : lo + cfg.batch]
                obs, acts = pool.obs[idx], pool.acts[idx]
                logp, cache = policy.log_prob_tape(obs, acts)
                loss = -float(np.mean(logp))
                grad = policy.backprop_log_prob(cache, np.full(len(idx), -1.0 / len(idx)))
                if first:
                    log.first_batch_losses.append(loss)
                    first = False
                losses.append(loss)
                new_params, adam = adam_step(adam, policy.net.params, _clip(grad, cfg), cfg.lr_d)
                policy.net.params = new_params

        if (m + 1) % cfg.eval_interval == 0 or m == cfg.steps - 1:
            _log_eval(log, cfg, policy, env_spec, reference, m + 1, 0, losses)

    log.total_env_steps = 0
    return policy, log


def train(cfg: TrainConfig, demos: DemoSet, env_spec: EnvSpec):
    """Dispatch on cfg.algorithm; returns (policy, RunLog)."""
    cfg = cfg.validated()
    if cfg.algorithm in ("asaf", "asaf_w", "asaf_1"):
        return asaf_train(cfg, demos, env_spec)
    if cfg.algorithm == "asqf":
        return asqf_train(cfg, demos, env_spec)
    return bc_train(cfg, demos, env_spec)
