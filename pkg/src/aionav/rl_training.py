"""Actor-critic training: generalized advantage estimation, clipped-surrogate
policy updates, rollout collection at the agent's cadence, curriculum
progression, and the reactive-policy / switch training loops."""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .local_planners import ReactivePolicy, aio_registry
from .map_gen import MAX_DIFFICULTY, ScenarioConfig
from .nav_env import ReactiveEnv, SwitchEnv
from .rewards import RewardBreakdown, reward_step, reward_terminal  # noqa: F401
from .sim_core import MAX_LOCAL_STEPS
from .switch_agent import SwitchPolicy, stack_observations


class NonFiniteGradient(Exception):
    pass


@dataclass
class Transition:
    observation: object
    action: int
    log_prob: float
    value: float
    reward: float
    done: bool


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_length: int = 2048
    minibatch_size: int = 256
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    curriculum_threshold: float = 0.8
    curriculum_window: int = 100
    seed: int = 0
    total_steps: int = 200_000
    map_kind: str = "outdoor"
    n_obstacles: int = 10
    obstacle_speed: float = 0.3
    max_episode_steps: int = MAX_LOCAL_STEPS
    checkpoint_every: int = 20

    def __post_init__(self):
        if not 0 < self.gamma <= 1 or not 0 < self.gae_lambda <= 1:
            raise ValueError("gamma and gae_lambda must be in (0, 1]")
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must be in (0, 1)")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def gae(rewards, values, dones, gamma: float, lam: float,
        last_value: float = 0.0):
    """Backward-recursive advantage estimation; bootstraps with last_value
    when the rollout is truncated mid-episode. Returns raw advantages and
    returns (normalization happens inside the update)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if not len(rewards) == len(values) == len(dones):
        raise ValueError("rewards, values, dones must have equal lengths")
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    next_value = last_value
    for t in reversed(range(n)):
        nonterminal = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize(x: np.ndarray) -> np.ndarray:
    return (x - x.mean()) / (x.std() + 1e-8)


class SwitchAdapter:
    """Maps switch observations/params onto the shared network interface."""

    init = staticmethod(nets.init_switch_params)

    def stack(self, observations):
        return stack_observations(list(observations))

    def forward(self, params, batch, need_cache=False):
        return nets.forward_switch(params, *batch, need_cache=need_cache)

    def backward(self, params, cache, d_logits, d_values):
        return nets.backward_switch(params, cache, d_logits, d_values)


class ReactiveAdapter:
    def stack(self, observations):
        scans = np.stack([o[0] for o in observations])
        feats = np.stack([o[1] for o in observations])
        return scans, feats

    def forward(self, params, batch, need_cache=False):
        return nets.forward_reactive(params, *batch, need_cache=need_cache)

    def backward(self, params, cache, d_logits, d_values):
        return nets.backward_reactive(params, cache, d_logits, d_values)


def ppo_update(params: dict, transitions: list[Transition], config: TrainConfig,
               adapter, optimizer: nets.Adam, rng: np.random.Generator,
               last_value: float = 0.0):
    """One clipped-surrogate update over the rollout. A non-finite gradient
    aborts the whole update and hands back the original parameters."""
    original = {k: v.copy() for k, v in params.items()}
    actions = np.array([t.action for t in transitions])
    old_logp = np.array([t.log_prob for t in transitions])
    values = np.array([t.value for t in transitions])
    rewards = np.array([t.reward for t in transitions])
    dones = np.array([t.done for t in transitions])
    adv, returns = gae(rewards, values, dones, config.gamma,
                       config.gae_lambda, last_value)
    adv = normalize(adv)
    obs_batch = adapter.stack([t.observation for t in transitions])

    n = len(transitions)
    stats = {"loss": 0.0, "policy_loss": 0.0, "value_loss": 0.0,
             "kl": 0.0, "entropy": 0.0, "aborted": False}
    n_batches = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.minibatch_size):
            mb = order[lo:lo + config.minibatch_size]
            batch = tuple(a[mb] for a in obs_batch)
            (logits, vals), cache = adapter.forward(params, batch,
                                                    need_cache=True)
            logp_all = nets.log_softmax(logits)
            probs = np.exp(logp_all)
            b = len(mb)
            logp_a = logp_all[np.arange(b), actions[mb]]
            ratio = np.exp(logp_a - old_logp[mb])
            a_mb = adv[mb]
            surr1 = ratio * a_mb
            surr2 = np.clip(ratio, 1 - config.clip_eps,
                            1 + config.clip_eps) * a_mb
            pg_loss = -np.minimum(surr1, surr2).mean()
            v_err = vals - returns[mb]
            v_loss = np.mean(v_err ** 2)
            entropy = -np.sum(probs * logp_all, axis=1)
            loss = (pg_loss + config.value_coef * v_loss
                    - config.entropy_coef * entropy.mean())

            # Policy gradient flows through the ratio only where the
            # unclipped surrogate is active.
            use1 = surr1 <= surr2
            coeff = np.where(use1, -ratio * a_mb, 0.0) / b
            onehot = np.zeros_like(probs)
            onehot[np.arange(b), actions[mb]] = 1.0
            d_logits = coeff[:, None] * (onehot - probs)
            d_logits += (config.entropy_coef / b) * probs \
                * (logp_all + entropy[:, None])
            d_values = 2.0 * config.value_coef * v_err / b
            grads = adapter.backward(params, cache, d_logits, d_values)
            if not all(np.isfinite(g).all() for g in grads.values()):
                stats["aborted"] = True
                return original, stats
            params = optimizer.step(params, grads)

            stats["loss"] += float(loss)
            stats["policy_loss"] += float(pg_loss)
            stats["value_loss"] += float(v_loss)
            stats["kl"] += float(np.mean(old_logp[mb] - logp_a))
            stats["entropy"] += float(entropy.mean())
            n_batches += 1
    for k in ("loss", "policy_loss", "value_loss", "kl", "entropy"):
        stats[k] /= max(n_batches, 1)
    return params, stats


@dataclass
class Curriculum:
    threshold: float = 0.8
    window: int = 100
    max_difficulty: int = MAX_DIFFICULTY
    difficulty: int = 0
    successes: deque = field(default_factory=lambda: deque(maxlen=100))

    def __post_init__(self):
        self.successes = deque(maxlen=self.window)

    def observe(self, success: bool) -> None:
        self.successes.append(bool(success))


def run_curriculum(curriculum: Curriculum) -> Curriculum:
    """Advance the difficulty when the trailing window clears the success
    threshold; the window resets on advancement. Never decreases."""
    full = len(curriculum.successes) == curriculum.window
    if (full and curriculum.difficulty < curriculum.max_difficulty
            and np.mean(curriculum.successes) >= curriculum.threshold):
        curriculum.difficulty += 1
        curriculum.successes.clear()
    return curriculum


class RolloutCollector:
    """Steps one environment with sampled actions, cutting rollouts at a
    fixed length and resetting episodes as they end."""

    def __init__(self, env, adapter, next_config, rng: np.random.Generator,
                 episode_sink=None):
        self.env = env
        self.adapter = adapter
        self.next_config = next_config
        self.rng = rng
        self.episode_sink = episode_sink
        self.obs = None
        self.episode_reward = 0.0

    def _policy_step(self, params, obs):
        batch = self.adapter.stack([obs])
        logits, values = self.adapter.forward(params, batch)
        logp = nets.log_softmax(logits[0])
        action = int(self.rng.choice(len(logp), p=np.exp(logp)))
        return action, float(logp[action]), float(values[0])

    def collect(self, params, length: int) -> tuple[list[Transition], float]:
        transitions = []
        for _ in range(length):
            if self.obs is None:
                self.obs = self.env.reset(self.next_config())
                self.episode_reward = 0.0
            action, logp, value = self._policy_step(params, self.obs)
            next_obs, reward, done, info = self.env.step(action)
            transitions.append(Transition(self.obs, action, logp, value,
                                          reward, done))
            self.episode_reward += reward
            if done:
                if self.episode_sink is not None:
                    self.episode_sink(self.episode_reward, info["success"])
                self.obs = None
            else:
                self.obs = next_obs
        last_value = 0.0
        if self.obs is not None:
            _, _, last_value = self._policy_step(params, self.obs)
        return transitions, last_value


LOG_COLUMNS = ["episode", "reward", "success", "difficulty",
               "loss", "kl", "entropy"]


class _TrainLoop:
    """Shared trainer: rollout, update, curriculum, CSV log, checkpoints."""

    def __init__(self, config: TrainConfig, adapter, env, params: dict,
                 out_dir=None, extra_params: dict | None = None):
        self.config = config
        self.adapter = adapter
        self.env = env
        self.params = params
        self.extra_params = extra_params or {}
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = nets.Adam(lr=config.learning_rate)
        self.rng = np.random.default_rng((config.seed, 0x7A1))
        self.curriculum = Curriculum(threshold=config.curriculum_threshold,
                                     window=config.curriculum_window)
        self.steps = 0
        self.updates = 0
        self.episodes = 0
        self.pending_rows = []
        self.last_stats = {"loss": 0.0, "kl": 0.0, "entropy": 0.0}
        self.collector = RolloutCollector(
            env, adapter, self._next_config, self.rng,
            episode_sink=self._episode_done)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.log_path = self.out_dir / "training_log.csv"
            if not self.log_path.exists():
                with open(self.log_path, "w", newline="") as f:
                    csv.writer(f).writerow(LOG_COLUMNS)

    def _next_config(self) -> ScenarioConfig:
        seed = int(np.random.SeedSequence(
            (self.config.seed, 0x5EED, self.episodes)).generate_state(1)[0])
        return ScenarioConfig(map_kind=self.config.map_kind,
                              difficulty=self.curriculum.difficulty,
                              n_obstacles=self.config.n_obstacles,
                              obstacle_speed=self.config.obstacle_speed,
                              seed=seed)

    def _episode_done(self, reward: float, success: bool) -> None:
        self.episodes += 1
        self.pending_rows.append(
            [self.episodes, f"{reward:.4f}", int(success),
             self.curriculum.difficulty])
        self.curriculum.observe(success)
        run_curriculum(self.curriculum)

    def _flush_log(self) -> None:
        if self.out_dir is None:
            self.pending_rows.clear()
            return
        with open(self.log_path, "a", newline="") as f:
            w = csv.writer(f)
            for row in self.pending_rows:
                w.writerow(row + [f"{self.last_stats['loss']:.5f}",
                                  f"{self.last_stats['kl']:.6f}",
                                  f"{self.last_stats['entropy']:.5f}"])
        self.pending_rows.clear()

    def checkpoint_params(self) -> dict:
        merged = dict(self.params)
        merged.update(self.extra_params)
        return merged

    def save_checkpoint(self) -> None:
        if self.out_dir is None:
            return
        nets.save_checkpoint(self.out_dir / "checkpoint.bin",
                             self.checkpoint_params())
        state = {"steps": self.steps, "updates": self.updates,
                 "episodes": self.episodes,
                 "difficulty": self.curriculum.difficulty}
        with open(self.out_dir / "train_state.json", "w") as f:
            json.dump(state, f)

    def resume(self) -> None:
        ckpt = self.out_dir / "checkpoint.bin"
        state_path = self.out_dir / "train_state.json"
        if not ckpt.exists() or not state_path.exists():
            raise FileNotFoundError(f"nothing to resume in {self.out_dir}")
        saved = nets.load_checkpoint(ckpt, nets.param_shapes(
            self.checkpoint_params()))
        self.params = {k: saved[k] for k in self.params}
        self.extra_params = {k: saved[k] for k in self.extra_params}
        with open(state_path) as f:
            state = json.load(f)
        self.steps = state["steps"]
        self.updates = state["updates"]
        self.episodes = state["episodes"]
        self.curriculum.difficulty = state["difficulty"]

    def run(self) -> dict:
        while self.steps < self.config.total_steps:
            length = min(self.config.rollout_length,
                         self.config.total_steps - self.steps)
            transitions, last_value = self.collector.collect(self.params, length)
            self.steps += len(transitions)
            self.params, stats = ppo_update(
                self.params, transitions, self.config, self.adapter,
                self.optimizer, self.rng, last_value)
            if stats["aborted"]:
                self.save_checkpoint()
                self._flush_log()
                raise NonFiniteGradient(
                    f"update {self.updates} produced non-finite gradients")
            self.updates += 1
            self.last_stats = stats
            self._flush_log()
            if self.updates % self.config.checkpoint_every == 0:
                self.save_checkpoint()
        self.save_checkpoint()
        return self.params


def train_reactive_policy(config: TrainConfig, out_dir=None,
                          resume: bool = False) -> ReactivePolicy:
    """PPO over the 9-command action space at the local cadence; proximity
    penalties use the raw sensor scan."""
    rng = np.random.default_rng((config.seed, 0x11))
    env = ReactiveEnv(max_steps=config.max_episode_steps)
    loop = _TrainLoop(config, ReactiveAdapter(), env,
                      nets.init_reactive_params(rng), out_dir=out_dir)
    if resume:
        loop.resume()
    params = loop.run()
    return ReactivePolicy(params)


def train_switch_agent(config: TrainConfig, reactive: ReactivePolicy,
                       out_dir=None, resume: bool = False) -> SwitchPolicy:
    """PPO over the planner choice at 2 Hz; checkpoints embed the frozen
    reactive-policy tensors so one file drives the full agent."""
    rng = np.random.default_rng((config.seed, 0x22))
    registry = aio_registry(reactive)
    env = SwitchEnv(registry, max_steps=config.max_episode_steps)
    params = nets.init_switch_params(rng, n_actions=len(registry))
    loop = _TrainLoop(config, SwitchAdapter(), env, params, out_dir=out_dir,
                      extra_params=dict(reactive.params))
    if resume:
        loop.resume()
    switch_params = loop.run()
    return SwitchPolicy({k: v for k, v in switch_params.items()
                         if k.startswith("switch.")},
                        n_actions=len(registry))
