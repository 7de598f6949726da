"""Desk-scale clipped-surrogate policy-gradient trainer for the waypoint task.

Pure-numpy PPO: a Gaussian acts on the pre-squash network output, actions are
tanh-squashed, and advantages come from generalized advantage estimation over
fixed-size rollout batches collected from a single deterministic env stream.
The tanh change-of-variables term depends only on the stored sample, so it
cancels from the importance ratio and never needs computing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ChiefOrbit, VehicleParams, default_orbit, default_vehicle
from .env import EpisodeConfig, Status, WaypointTask, observe, sample_episode, step
from .policy import DEFAULT_LAYER_DIMS, MlpPolicy, policy_act

LOG_2PI = math.log(2.0 * math.pi)


class TrainingDivergence(RuntimeError):
    """Raised when the loss or the parameters stop being finite."""


@dataclass(frozen=True)
class TrainerConfig:
    total_steps: int = 300_000
    batch_size: int = 2048
    learning_rate: float = 3e-4
    discount: float = 0.99
    clip_ratio: float = 0.2
    epochs_per_batch: int = 10
    seed: int = 0
    gae_lambda: float = 0.95
    minibatch_size: int = 64
    entropy_coef: float = 0.0
    grad_clip: float = 0.5
    init_log_std: float = -0.7
    layer_dims: tuple = DEFAULT_LAYER_DIMS

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        for name in ("batch_size", "learning_rate", "discount",
                     "epochs_per_batch", "minibatch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")


@dataclass(frozen=True)
class CurvePoint:
    """One training iteration: env steps so far and batch episode stats."""

    steps: int
    mean_return: float
    success_rate: float


@dataclass
class RolloutBatch:
    obs: np.ndarray        # (N, obs_dim)
    z: np.ndarray          # (N, act_dim) pre-squash Gaussian samples
    logp_old: np.ndarray   # (N,)
    adv: np.ndarray        # (N,) normalized advantages
    v_target: np.ndarray   # (N,)


def gaussian_logp(z: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Row-wise log density of independent Gaussians (z, mean: (N, d))."""
    inv_var = np.exp(-2.0 * log_std)
    quad = 0.5 * np.sum((z - mean) ** 2 * inv_var, axis=-1)
    return -(quad + np.sum(log_std) + 0.5 * z.shape[-1] * LOG_2PI)


def _mean_forward(policy: MlpPolicy, obs: np.ndarray):
    """Batched policy mean with cached hidden activations for backprop."""
    hs = [obs]
    h = obs
    for w, b in zip(policy.weights[:-1], policy.biases[:-1]):
        h = np.tanh(h @ w.T + b)
        hs.append(h)
    mean = h @ policy.weights[-1].T + policy.biases[-1]
    return mean, hs


def _backprop(weights, hs, g_out):
    """Gradients of a tanh MLP given the output gradient g_out (N, n_out)."""
    g_w = [None] * len(weights)
    g_b = [None] * len(weights)
    g = g_out
    for layer in range(len(weights) - 1, -1, -1):
        g_w[layer] = g.T @ hs[layer]
        g_b[layer] = g.sum(axis=0)
        if layer > 0:
            g = (g @ weights[layer]) * (1.0 - hs[layer] ** 2)
    return g_w, g_b


def surrogate_loss_and_grad(policy: MlpPolicy, batch: RolloutBatch,
                            clip_ratio: float, entropy_coef: float = 0.0):
    """Clipped-surrogate loss and its exact gradient.

    Returns (loss, grads) with grads keyed "weights", "biases", "log_std",
    shaped like the policy's parameters.
    """
    mean, hs = _mean_forward(policy, batch.obs)
    logp = gaussian_logp(batch.z, mean, policy.log_std)
    ratio = np.exp(logp - batch.logp_old)
    adv = batch.adv
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    per_sample = np.minimum(ratio * adv, clipped * adv)
    loss = -float(np.mean(per_sample))

    # gradient flows only where the unclipped branch attains the minimum
    unclipped_active = ratio * adv <= clipped * adv
    n = batch.obs.shape[0]
    d_logp = -(adv * ratio * unclipped_active) / n

    inv_var = np.exp(-2.0 * policy.log_std)
    diff = batch.z - mean
    g_mean = d_logp[:, None] * diff * inv_var
    g_log_std = np.sum(d_logp[:, None] * (diff ** 2 * inv_var - 1.0), axis=0)
    if entropy_coef:
        # Gaussian entropy is sum(log_std) + const, per sample
        loss -= entropy_coef * float(np.sum(policy.log_std) +
                                     0.5 * batch.z.shape[1] * (1.0 + LOG_2PI))
        g_log_std -= entropy_coef
    g_w, g_b = _backprop(policy.weights, hs, g_mean)
    return loss, {"weights": g_w, "biases": g_b, "log_std": g_log_std}


@dataclass
class ValueNet:
    weights: list
    biases: list

    @classmethod
    def initialize(cls, rng: np.random.Generator, layer_dims=(6, 64, 64, 1)):
        weights, biases = [], []
        for n_in, n_out in zip(layer_dims, layer_dims[1:]):
            weights.append(rng.normal(0.0, math.sqrt(2.0 / n_in), (n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(weights, biases)

    def forward(self, obs: np.ndarray):
        hs = [obs]
        h = obs
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
            hs.append(h)
        v = (h @ self.weights[-1].T + self.biases[-1])[..., 0]
        return v, hs

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return self.forward(np.atleast_2d(obs))[0]


def value_loss_and_grad(net: ValueNet, obs: np.ndarray, target: np.ndarray):
    v, hs = net.forward(obs)
    err = v - target
    loss = 0.5 * float(np.mean(err ** 2))
    g_out = (err / err.shape[0])[:, None]
    g_w, g_b = _backprop(net.weights, hs, g_out)
    return loss, {"weights": g_w, "biases": g_b}


class Adam:
    """Plain Adam over a flat list of parameter arrays, updated in place."""

    def __init__(self, params: list, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _clip_grads(grads: list, max_norm: float) -> list:
    if max_norm <= 0.0:
        return grads
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm:
        scale = max_norm / total
        return [g * scale for g in grads]
    return grads


def _policy_params(policy: MlpPolicy) -> list:
    return [*policy.weights, *policy.biases, policy.log_std]


def _split_policy_grads(policy: MlpPolicy, grads: dict) -> list:
    return [*grads["weights"], *grads["biases"], grads["log_std"]]


def train(env_cfg: EpisodeConfig | None = None,
          trainer_cfg: TrainerConfig | None = None,
          orbit: ChiefOrbit | None = None,
          veh: VehicleParams | None = None,
          init_policy: MlpPolicy | None = None):
    """Train a waypoint policy; returns (MlpPolicy, list of CurvePoint).

    Deterministic given trainer_cfg.seed.  ``init_policy`` resumes from an
    existing network instead of a fresh initialization.  Raises
    TrainingDivergence when a loss or parameter turns non-finite.
    """
    env_cfg = env_cfg if env_cfg is not None else EpisodeConfig()
    cfg = trainer_cfg if trainer_cfg is not None else TrainerConfig()
    orbit = orbit if orbit is not None else default_orbit()
    veh = veh if veh is not None else default_vehicle()

    rng = np.random.default_rng(cfg.seed)
    if init_policy is not None:
        policy = init_policy.copy()
    else:
        policy = MlpPolicy.initialize(rng, layer_dims=cfg.layer_dims,
                                      init_log_std=cfg.init_log_std)
    dims = policy.layer_dims
    value_net = ValueNet.initialize(rng, (dims[0], 64, 64, 1))
    curve: list = []
    if cfg.total_steps == 0:
        return policy, curve

    pol_opt = Adam(_policy_params(policy), cfg.learning_rate)
    val_opt = Adam([*value_net.weights, *value_net.biases], cfg.learning_rate)

    state, goal = sample_episode(rng, env_cfg)
    task = WaypointTask(goal)
    elapsed = 0.0
    ep_return = 0.0
    steps_done = 0

    while steps_done < cfg.total_steps:
        n = min(cfg.batch_size, cfg.total_steps - steps_done)
        obs_buf = np.empty((n, dims[0]))
        next_obs_buf = np.empty_like(obs_buf)
        z_buf = np.empty((n, dims[-1]))
        logp_buf = np.empty(n)
        rew_buf = np.empty(n)
        terminal_buf = np.zeros(n)   # no bootstrap past these steps
        boundary_buf = np.zeros(n)   # advantage recursion resets here
        ep_returns: list = []
        ep_successes: list = []

        for i in range(n):
            obs_vec = observe(state, task.goal).vector()
            mean = policy.pre_squash(obs_vec)
            z = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
            action = np.tanh(z)
            out = step(state, action, task, env_cfg, orbit, veh, elapsed)
            elapsed += env_cfg.dt
            ep_return += out.reward

            obs_buf[i] = obs_vec
            z_buf[i] = z
            logp_buf[i] = gaussian_logp(z, mean, policy.log_std)
            rew_buf[i] = out.reward
            next_obs_buf[i] = out.obs.vector()
            state = out.state

            if out.status is not Status.RUNNING:
                # timeouts are budget truncations: bootstrap but reset GAE
                terminal_buf[i] = float(out.status is not Status.TIMEOUT)
                boundary_buf[i] = 1.0
                ep_returns.append(ep_return)
                ep_successes.append(float(out.status is Status.REACHED))
                state, goal = sample_episode(rng, env_cfg)
                task = WaypointTask(goal)
                elapsed = 0.0
                ep_return = 0.0
        steps_done += n

        values = value_net.predict(obs_buf)
        next_values = value_net.predict(next_obs_buf)
        adv = np.empty(n)
        gae = 0.0
        for i in range(n - 1, -1, -1):
            delta = (rew_buf[i]
                     + cfg.discount * next_values[i] * (1.0 - terminal_buf[i])
                     - values[i])
            gae = delta + (cfg.discount * cfg.gae_lambda
                           * (1.0 - boundary_buf[i]) * gae)
            adv[i] = gae
        v_target = adv + values
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        batch = RolloutBatch(obs_buf, z_buf, logp_buf, adv, v_target)

        for _ in range(cfg.epochs_per_batch):
            order = rng.permutation(n)
            for lo in range(0, n, cfg.minibatch_size):
                idx = order[lo:lo + cfg.minibatch_size]
                mini = RolloutBatch(batch.obs[idx], batch.z[idx],
                                    batch.logp_old[idx], batch.adv[idx],
                                    batch.v_target[idx])
                p_loss, p_grads = surrogate_loss_and_grad(
                    policy, mini, cfg.clip_ratio, cfg.entropy_coef)
                v_loss, v_grads = value_loss_and_grad(
                    value_net, mini.obs, mini.v_target)
                if not (math.isfinite(p_loss) and math.isfinite(v_loss)):
                    raise TrainingDivergence(
                        f"non-finite loss at step {steps_done}: "
                        f"policy {p_loss}, value {v_loss}")
                pol_opt.step(_policy_params(policy),
                             _clip_grads(_split_policy_grads(policy, p_grads),
                                         cfg.grad_clip))
                val_opt.step([*value_net.weights, *value_net.biases],
                             _clip_grads([*v_grads["weights"],
                                          *v_grads["biases"]], cfg.grad_clip))
        if not all(np.all(np.isfinite(p)) for p in _policy_params(policy)):
            raise TrainingDivergence(f"non-finite parameters at step {steps_done}")

        curve.append(CurvePoint(
            steps=steps_done,
            mean_return=float(np.mean(ep_returns)) if ep_returns else float("nan"),
            success_rate=float(np.mean(ep_successes)) if ep_successes else float("nan")))
    return policy, curve


def evaluate_policy(policy: MlpPolicy, n_episodes: int, seed: int = 0,
                    env_cfg: EpisodeConfig | None = None,
                    orbit: ChiefOrbit | None = None,
                    veh: VehicleParams | None = None):
    """Deterministic rollouts on sampled episodes: (success rate, mean time)."""
    env_cfg = env_cfg if env_cfg is not None else EpisodeConfig()
    orbit = orbit if orbit is not None else default_orbit()
    veh = veh if veh is not None else default_vehicle()
    rng = np.random.default_rng(seed)
    successes = 0
    times: list = []
    for _ in range(n_episodes):
        state, goal = sample_episode(rng, env_cfg)
        task = WaypointTask(goal)
        elapsed = 0.0
        while True:
            action = policy_act(policy, observe(state, task.goal))
            out = step(state, action, task, env_cfg, orbit, veh, elapsed)
            state = out.state
            elapsed += env_cfg.dt
            if out.status is not Status.RUNNING:
                break
        if out.status is Status.REACHED:
            successes += 1
            times.append(elapsed)
    rate = successes / n_episodes if n_episodes else 0.0
    return rate, (float(np.mean(times)) if times else float("nan"))


def curve_rows(curve: list) -> list:
    """Learning curve as rows for CSV export."""
    return [(p.steps, p.mean_return, p.success_rate) for p in curve]
