"""Episodic REINFORCE with reward-to-go, discounting, and a centered reward.

One trainer owns one environment and one policy. Per update it collects N
exploratory episodes, assembles the policy gradient
    (1/N) sum_i sum_t grad log pi(a_t|s_t) * (discounted reward-to-go)_t,
takes an ascending Adam step, and scores the new policy with a deterministic
(mean-action) evaluation episode. Training stops when the steady-state
(last-half-window) evaluation fidelity reaches the configured threshold.

The reward is centered around zero by construction (the m/c constants of
RewardSpec), which is exactly equivalent to subtracting a constant baseline
from the reward-to-go, so no separate baseline estimate is kept.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .policy import (
    AdamState,
    adam_update,
    forward,
    grad_log_prob,
    init,
    log_prob,
    mean_action,
    sample_action_raw,
    weighted_log_prob_grad,
)
from .quantum import fidelity_from_alpha

REWARD_LIMIT = 25.0
WINDOWS = ("full", "first-half", "last-half")


@dataclass(frozen=True)
class RewardSpec:
    """Per-target reward constants: r = -c * (|alpha - alpha_target| - m).

    m is half the worst-case absolute error, which centers the reward range
    around zero; c scales the range to exactly [-25, 25] for every target.
    """

    alpha_target: float
    m_target: float
    c_target: float

    def __post_init__(self):
        if not 0.0 <= self.alpha_target <= 1.0:
            raise ValueError(f"alpha_target must be in [0, 1], got {self.alpha_target}")
        m = max(self.alpha_target, 1.0 - self.alpha_target) / 2.0
        if abs(self.m_target - m) > 1e-12:
            raise ValueError(f"m_target must be {m} for alpha_target {self.alpha_target}")
        if abs(self.c_target - REWARD_LIMIT / m) > 1e-9:
            raise ValueError(f"c_target must be {REWARD_LIMIT / m}")

    @classmethod
    def for_target(cls, alpha_target):
        alpha_target = float(alpha_target)
        m = max(alpha_target, 1.0 - alpha_target) / 2.0
        return cls(alpha_target=alpha_target, m_target=m, c_target=REWARD_LIMIT / m)


def reward(alpha_last, spec):
    """Reward of one control step from the last sample of its window."""
    if not -1e-12 <= alpha_last <= 1.0 + 1e-12:
        raise ValueError(f"alpha_last must be in [0, 1], got {alpha_last}")
    alpha_last = min(max(alpha_last, 0.0), 1.0)
    return -spec.c_target * (abs(alpha_last - spec.alpha_target) - spec.m_target)


def reward_to_go(rewards, gamma):
    """Discounted suffix sums: out[t] = sum_{u>=t} gamma^(u-t) * rewards[u]."""
    rewards = np.asarray(rewards, dtype=float)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass(frozen=True)
class EtaSchedule:
    """Halve the learning rate after `patience` updates without a new best
    evaluation fidelity, never below `min_factor` times the initial rate."""

    patience: int = 200
    factor: float = 0.5
    min_factor: float = 1.0 / 16.0


@dataclass(frozen=True)
class TrainConfig:
    """Trainer knobs. `baseline_ema` tracks the running mean step reward and
    subtracts it (as a constant baseline through the discounted horizon) on
    top of the built-in reward centering; `restart_updates` cold-restarts a
    training attempt from a derived init seed when it has not converged
    within that many updates (exploration occasionally collapses into a
    saturated-voltage corner, and a fresh draw is cheaper than waiting).
    Both stabilizers change no estimator expectation, only its variance."""

    T: int = 500
    N: int = 1
    gamma: float = 0.99
    eta: float = 2e-3
    eta_schedule: EtaSchedule = field(default_factory=EtaSchedule)
    weight_decay: float = 0.1
    max_updates: int = 20000
    stop_fidelity: float = 99.0
    seed: int = 0
    baseline_ema: float = 0.05
    restart_updates: int = 400

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.N < 1 or self.T < 1:
            raise ValueError("N and T must be at least 1")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if not 0.0 <= self.baseline_ema < 1.0:
            raise ValueError("baseline_ema must be in [0, 1)")
        if self.restart_updates < 1:
            raise ValueError("restart_updates must be positive")


@dataclass
class Trajectory:
    """One episode: per-step observations, pre-clamp actions, log-probs,
    rewards, and last-sample outputs. Length is exactly T."""

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    alpha_last: np.ndarray

    def __len__(self):
        return len(self.rewards)


def rollout(params, env, spec, mode, rng=None, T=500):
    """Run one episode without resetting; the caller controls chaining.

    'explore' samples actions from the Gaussian heads (requires rng);
    'exploit' applies the means. Actions are recorded before clamping
    (the environment clamps on the wire).
    """
    if mode not in ("explore", "exploit"):
        raise ValueError(f"mode must be 'explore' or 'exploit', got {mode!r}")
    if mode == "explore" and rng is None:
        raise ValueError("explore mode needs a random generator")
    obs_dim = params.layer_sizes[0]
    observations = np.empty((T, obs_dim))
    actions = np.empty((T, 2))
    log_probs = np.empty(T)
    rewards = np.empty(T)
    alphas = np.empty(T)
    obs = env.observation
    for t in range(T):
        observations[t] = obs
        out = forward(params, obs)
        if mode == "explore":
            action = sample_action_raw(out, rng)
        else:
            action = mean_action(out)
        actions[t] = action
        log_probs[t] = log_prob(out, action)
        obs, alpha = env.step(action)
        rewards[t] = reward(alpha, spec)
        alphas[t] = alpha
    return Trajectory(observations, actions, log_probs, rewards, alphas)


def policy_gradient(params, trajectories, gamma, baseline=None):
    """Average REINFORCE gradient over N trajectories.

    `baseline` is an optional per-step vector subtracted from each
    trajectory's discounted reward-to-go (action-independent, so it changes
    only the variance of the estimator, not its mean).
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    total_w = None
    total_b = None
    for traj in trajectories:
        weights = reward_to_go(traj.rewards, gamma)
        if baseline is not None:
            weights = weights - np.asarray(baseline, dtype=float)
        grad = weighted_log_prob_grad(params, traj.observations, traj.actions, weights)
        if total_w is None:
            total_w = grad.weights
            total_b = grad.biases
        else:
            total_w = [a + b for a, b in zip(total_w, grad.weights)]
            total_b = [a + b for a, b in zip(total_b, grad.biases)]
    scale = 1.0 / len(trajectories)
    grad.weights = [w * scale for w in total_w]
    grad.biases = [b * scale for b in total_b]
    return grad


def window_slice(window, n_samples):
    """Sample slice of an episode trace for a named fidelity window."""
    if window == "full":
        return slice(0, n_samples)
    if window == "first-half":
        return slice(0, n_samples // 2)
    if window == "last-half":
        return slice(n_samples // 2, n_samples)
    raise ValueError(f"unknown window {window!r}; expected one of {WINDOWS}")


def exploit_alpha_trace(params, env, T=500, reset=True):
    """Full sampled output of one mean-action episode (T * 50 samples)."""
    if reset:
        env.reset()
    n = env.config.samples_per_step
    trace = np.empty(T * n)
    obs = env.observation
    for t in range(T):
        out = forward(params, obs)
        obs, _ = env.step(mean_action(out))
        trace[t * n:(t + 1) * n] = obs
    return trace


def evaluate(params, env, target, window="full", T=500, reset=True):
    """Mean fidelity of one mean-action episode against a target, in percent.

    With reset=False the episode chains from the environment's current
    state (sequence operation); otherwise it starts from the reset state.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (2,) or abs(target.sum() - 1.0) > 1e-9 or np.any(target < 0):
        raise ValueError(f"target must be a 2-entry distribution, got {target!r}")
    trace = exploit_alpha_trace(params, env, T=T, reset=reset)
    sl = window_slice(window, len(trace))
    return float(fidelity_from_alpha(trace[sl], target[0]).mean())


@dataclass
class TrainLogRow:
    update: int
    mean_reward: float
    eval_fidelity_full: float
    eval_fidelity_last5ms: float
    eta: float


@dataclass
class TrainResult:
    params: object
    log: list
    converged: bool
    best_fidelity: float
    updates_run: int


def train_target(env_factory, spec, cfg, init_scheme):
    """Train one policy for one target distribution until it evaluates at
    `stop_fidelity` steady-state fidelity or the update budget runs out.

    Returns the best parameters seen (by steady-state evaluation fidelity),
    the per-update log, and a convergence flag; budget exhaustion is an
    outcome, not an error.
    """
    env = env_factory()
    params = init(init_scheme, cfg.seed)
    adam = AdamState(params)
    rng = np.random.default_rng([cfg.seed, 1])
    eta = cfg.eta
    reward_level = 0.0  # EMA of the mean step reward, extra constant baseline
    discounted_ones = reward_to_go(np.ones(cfg.T), cfg.gamma)
    best_params = params.copy()
    best_fid = -math.inf
    stale = 0
    attempt = 0
    attempt_updates = 0
    log = []
    converged = False
    updates = 0
    for update in range(1, cfg.max_updates + 1):
        updates = update
        attempt_updates += 1
        trajectories = []
        for _ in range(cfg.N):
            env.reset()
            trajectories.append(rollout(params, env, spec, "explore", rng, cfg.T))
        grad = policy_gradient(
            params, trajectories, cfg.gamma, baseline=reward_level * discounted_ones
        )
        params = adam_update(params, grad, adam, eta, cfg.weight_decay)
        mean_reward = float(np.mean([t.rewards.mean() for t in trajectories]))
        reward_level += cfg.baseline_ema * (mean_reward - reward_level)

        trace = exploit_alpha_trace(params, env, T=cfg.T, reset=True)
        fid_full = float(fidelity_from_alpha(trace, spec.alpha_target).mean())
        last = window_slice("last-half", len(trace))
        fid_last = float(fidelity_from_alpha(trace[last], spec.alpha_target).mean())
        log.append(TrainLogRow(update, mean_reward, fid_full, fid_last, eta))

        if fid_last > best_fid:
            best_fid = fid_last
            best_params = params.copy()
            stale = 0
        else:
            stale += 1
        if fid_last >= cfg.stop_fidelity:
            converged = True
            break
        if attempt_updates >= cfg.restart_updates:
            # exploration collapsed somewhere unproductive: cold restart
            attempt += 1
            attempt_updates = 0
            params = init(init_scheme, [cfg.seed, attempt])
            adam = AdamState(params)
            eta = cfg.eta
            reward_level = 0.0
            stale = 0
        elif stale >= cfg.eta_schedule.patience:
            eta = max(eta * cfg.eta_schedule.factor, cfg.eta * cfg.eta_schedule.min_factor)
            stale = 0
    return TrainResult(best_params, log, converged, best_fid, updates)


def write_training_log(log, path):
    """Emit the per-update log as CSV (full-precision floats)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["update", "mean_reward", "eval_fidelity_full", "eval_fidelity_last5ms", "eta"]
        )
        for row in log:
            writer.writerow(
                [row.update, repr(row.mean_reward), repr(row.eval_fidelity_full),
                 repr(row.eval_fidelity_last5ms), repr(row.eta)]
            )
    return path
