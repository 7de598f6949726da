"""Controllers for the waypoint environment and their on-disk format.

Two controllers are provided: a hand-tuned proportional-derivative baseline
that needs no training, and a small tanh MLP whose weights come from the
trainer.  Both map an Observation to a thrust command in [-1, 1]^3.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .env import Observation, OBS_POSITION_SCALE, RewardParams

POLICY_FORMAT = "proxops-mlp-policy"
POLICY_VERSION = 1

DEFAULT_LAYER_DIMS = (6, 64, 64, 3)


class PolicyFileError(ValueError):
    """Raised for malformed or truncated policy files."""


class UnsupportedPolicyVersion(PolicyFileError):
    """Raised when a policy file declares a version this code cannot read."""


@dataclass(frozen=True)
class BaselineGains:
    """PD tracking gains with a commanded-speed cap.

    The commanded speed toward the goal is min(kp/kv * d, speed_cap,
    speed_limit_margin * speed_limit_slope * d), which keeps the baseline
    inside the reward's distance-proportional speed limit by construction.
    """

    kp: float = 4e-3
    kv: float = 0.12
    speed_cap: float = 4.0
    speed_limit_slope: float = RewardParams.speed_limit_slope
    speed_limit_margin: float = RewardParams.speed_limit_margin


def baseline_act(obs: Observation, gains: BaselineGains = BaselineGains(),
                 mass: float = 1.0, thrust_bound: float = 1.0) -> np.ndarray:
    """PD thrust command toward the goal, in [-1, 1] per axis."""
    delta = obs.scaled_delta * OBS_POSITION_SCALE
    dist = float(np.linalg.norm(delta))
    if dist > 0.0:
        speed = min(gains.kp / gains.kv * dist, gains.speed_cap,
                    gains.speed_limit_margin * gains.speed_limit_slope * dist)
        vel_des = -delta / dist * speed
    else:
        vel_des = np.zeros(3)
    accel_cmd = gains.kv * (vel_des - obs.vel)
    action = accel_cmd * mass / thrust_bound
    return np.clip(action, -1.0, 1.0)


class MlpPolicy:
    """Tanh MLP from 6-vector observations to thrust commands in [-1, 1]^3.

    Hidden activations are tanh; the linear output is squashed through a
    final tanh.  ``log_std`` is the log standard deviation of Gaussian
    exploration noise added before the squash in stochastic mode.
    """

    def __init__(self, weights, biases, log_std=None):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("each layer needs a matrix and a matching bias vector")
        for prev, nxt in zip(self.weights[:-1], self.weights[1:]):
            if nxt.shape[1] != prev.shape[0]:
                raise ValueError("layer shapes do not chain")
        out_dim = self.weights[-1].shape[0]
        self.log_std = (np.zeros(out_dim) if log_std is None
                        else np.asarray(log_std, dtype=float))
        if self.log_std.shape != (out_dim,):
            raise ValueError("log_std must match the output dimension")

    @property
    def layer_dims(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @classmethod
    def initialize(cls, rng: np.random.Generator,
                   layer_dims=DEFAULT_LAYER_DIMS,
                   init_log_std: float = -0.7) -> "MlpPolicy":
        """Orthogonal-ish random init; small final layer for gentle actions."""
        weights = []
        biases = []
        for k, (n_in, n_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
            scale = 0.01 if k == len(layer_dims) - 2 else np.sqrt(2.0 / n_in)
            weights.append(rng.normal(0.0, scale, (n_out, n_in)))
            biases.append(np.zeros(n_out))
        return cls(weights, biases, np.full(layer_dims[-1], init_log_std))

    def pre_squash(self, obs_vec: np.ndarray) -> np.ndarray:
        """Network output before the final tanh (the action mean)."""
        h = np.asarray(obs_vec, dtype=float)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.tanh(h @ w.T + b)
        return h @ self.weights[-1].T + self.biases[-1]

    def act(self, obs_vec: np.ndarray,
            rng: np.random.Generator | None = None) -> np.ndarray:
        """Deterministic action, or a noisy one when ``rng`` is given."""
        mean = self.pre_squash(obs_vec)
        if rng is not None:
            mean = mean + np.exp(self.log_std) * rng.standard_normal(mean.shape)
        return np.tanh(mean)

    def copy(self) -> "MlpPolicy":
        return MlpPolicy([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         self.log_std.copy())


def policy_act(policy: MlpPolicy, obs: Observation,
               rng: np.random.Generator | None = None) -> np.ndarray:
    vec = obs.vector()
    if vec.shape != (policy.layer_dims[0],):
        raise ValueError(f"observation dimension {vec.shape[0]} does not match "
                         f"policy input {policy.layer_dims[0]}")
    return policy.act(vec, rng)


def save_policy(policy: MlpPolicy, path) -> None:
    """Write the policy as versioned JSON (row-major weight matrices)."""
    payload = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "layer_dims": list(policy.layer_dims),
        "weights": [w.reshape(-1).tolist() for w in policy.weights],
        "biases": [b.tolist() for b in policy.biases],
        "log_std": policy.log_std.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_policy(path) -> MlpPolicy:
    """Read a policy file; raises PolicyFileError on any malformation."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PolicyFileError(f"cannot parse policy file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != POLICY_FORMAT:
        raise PolicyFileError(f"{path} is not a {POLICY_FORMAT} file")
    version = payload.get("version")
    if version != POLICY_VERSION:
        raise UnsupportedPolicyVersion(
            f"policy file version {version!r} is not supported (expected {POLICY_VERSION})")
    try:
        dims = payload["layer_dims"]
        weights = [np.asarray(flat, dtype=float).reshape(n_out, n_in)
                   for flat, n_in, n_out in zip(payload["weights"], dims[:-1], dims[1:])]
        if len(weights) != len(dims) - 1 or len(payload["biases"]) != len(weights):
            raise ValueError("layer count mismatch")
        return MlpPolicy(weights, payload["biases"], payload["log_std"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFileError(f"policy file {path} has inconsistent contents: {exc}") from exc
