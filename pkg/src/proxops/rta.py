"""Runtime assurance for relative-motion waypoint control.

A minimally invasive filter built from control barrier functions: each agent
solves a small slack-relaxed QP that keeps its thrust close to the desired
command while enforcing

* pairwise collision avoidance against every peer and the chief (a
  second-order barrier on separation, driven through a two-gain chain),
* a hard speed ceiling,
* a commanded-acceleration ceiling, and
* the per-axis thrust box.

Constraints are affine in the thrust because the relative dynamics are
control-affine.  Peer accelerations are not observable, so callers supply an
estimate (the harness uses each peer's previous realized acceleration).
Every row carries a slack variable with a large quadratic penalty; slacks
stay at zero unless the hard constraints are momentarily incompatible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ChiefOrbit, RelativeState, VehicleParams, cwh_drift_accel
from . import qp as qp_mod

N_SHARED_SLACKS = 5  # velocity, acceleration, and one per thrust axis


@dataclass(frozen=True)
class RtaParams:
    """Safety limits and filter gains.

    ``pos_gain_inner`` and ``pos_gain_outer`` chain the separation barrier
    down to an acceleration condition; both 0.1/s gives an alert horizon of
    roughly 100 m at scenario speeds of a few m/s.  ``slack_penalty``
    multiplies the squared slacks in the QP objective.
    """

    collision_radius: float = 50.0
    max_speed: float = 3.0
    max_accel: float = 1.732
    thrust_bound: float = 1.0
    pos_gain_inner: float = 0.1
    pos_gain_outer: float = 0.1
    vel_gain: float = 1.0
    slack_penalty: float = 1e6

    def __post_init__(self):
        for name in ("collision_radius", "max_speed", "max_accel", "thrust_bound",
                     "pos_gain_inner", "pos_gain_outer", "vel_gain", "slack_penalty"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass
class AgentSnapshot:
    """One agent's state, an estimate of its current acceleration, and its
    actuation parameters.  ``veh`` may be omitted for peers (only their state
    and acceleration enter another agent's constraints)."""

    state: RelativeState
    accel_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    veh: VehicleParams | None = None

    def __post_init__(self):
        self.accel_est = np.asarray(self.accel_est, dtype=float)
        if self.accel_est.shape != (3,):
            raise ValueError("accel_est must be a 3-vector")


def chief_snapshot() -> AgentSnapshot:
    """The chief as seen by the filter: fixed at the Hill-frame origin."""
    return AgentSnapshot(RelativeState(np.zeros(3), np.zeros(3)), np.zeros(3))


@dataclass
class ConstraintRow:
    """One affine condition coeff_u . u + rhs >= slack[slack_index]."""

    coeff_u: np.ndarray
    rhs: float
    slack_index: int
    label: str

    def __post_init__(self):
        self.coeff_u = np.asarray(self.coeff_u, dtype=float)

    def evaluate(self, u) -> float:
        """Constraint margin at thrust ``u`` with the slack at zero."""
        return float(self.coeff_u @ np.asarray(u, dtype=float)) + self.rhs


@dataclass
class RtaDecision:
    """Filter output for one agent."""

    u_safe: np.ndarray
    slacks: np.ndarray
    margins: np.ndarray
    active: np.ndarray
    labels: list
    fallback: bool = False

    def intervened(self, desired, tol: float = 1e-6) -> bool:
        return bool(np.max(np.abs(self.u_safe - np.asarray(desired, dtype=float))) > tol)


def pos_barrier(state_i: RelativeState, state_j: RelativeState,
                collision_radius: float) -> float:
    """Half the squared separation in excess of the collision radius."""
    d = state_i.pos - state_j.pos
    return 0.5 * (float(d @ d) - collision_radius**2)


def pos_barrier_dot(state_i: RelativeState, state_j: RelativeState) -> float:
    """Time derivative of :func:`pos_barrier` along the joint motion."""
    d = state_i.pos - state_j.pos
    dv = state_i.vel - state_j.vel
    return float(d @ dv)


def pos_hocbf_row(agent: AgentSnapshot, peer: AgentSnapshot, orbit: ChiefOrbit,
                  params: RtaParams, slack_index: int, label: str) -> ConstraintRow:
    """Second-order barrier condition on separation from one peer.

    The barrier's second derivative depends on the agent's thrust and on the
    peer's acceleration, taken from the peer's ``accel_est``.
    """
    state = agent.state
    d = state.pos - peer.state.pos
    dv = state.vel - peer.state.vel
    drift = cwh_drift_accel(state, orbit)
    h = 0.5 * (float(d @ d) - params.collision_radius**2)
    h_dot = float(d @ dv)
    gain_sum = params.pos_gain_inner + params.pos_gain_outer
    gain_prod = params.pos_gain_inner * params.pos_gain_outer
    rhs = (float(dv @ dv) - float(d @ peer.accel_est) + float(d @ drift)
           + gain_sum * h_dot + gain_prod * h)
    return ConstraintRow(d / agent.veh.mass, rhs, slack_index, label)


def vel_row(agent: AgentSnapshot, orbit: ChiefOrbit, params: RtaParams,
            slack_index: int) -> ConstraintRow:
    """First-order barrier condition keeping speed below ``max_speed``."""
    vel = agent.state.vel
    drift = cwh_drift_accel(agent.state, orbit)
    barrier = 0.5 * (params.max_speed**2 - float(vel @ vel))
    rhs = -float(vel @ drift) + params.vel_gain * barrier
    return ConstraintRow(-vel / agent.veh.mass, rhs, slack_index, "vel")


def acc_row(agent: AgentSnapshot, orbit: ChiefOrbit, params: RtaParams,
            slack_index: int) -> ConstraintRow:
    """Bound on commanded acceleration along the current acceleration estimate."""
    drift = cwh_drift_accel(agent.state, orbit)
    est = agent.accel_est
    rhs = params.max_accel**2 - float(est @ drift)
    return ConstraintRow(-est / agent.veh.mass, rhs, slack_index, "acc")


def input_rows(params: RtaParams, first_slack_index: int) -> list:
    """Per-axis thrust box, two rows per axis sharing one slack."""
    rows = []
    for axis, name in enumerate("xyz"):
        for sign, tag in ((1.0, "+"), (-1.0, "-")):
            coeff = np.zeros(3)
            coeff[axis] = -sign
            rows.append(ConstraintRow(coeff, params.thrust_bound,
                                      first_slack_index + axis,
                                      f"input:{tag}{name}"))
    return rows


def build_rows(agent: AgentSnapshot, peers, orbit: ChiefOrbit,
               params: RtaParams, peer_labels=None) -> list:
    """All constraint rows for one agent, pair rows first."""
    if agent.veh is None:
        raise ValueError("the filtered agent needs vehicle parameters")
    if peer_labels is None:
        peer_labels = [f"pos:{k}" for k in range(len(peers))]
    rows = []
    for k, (peer, label) in enumerate(zip(peers, peer_labels)):
        rows.append(pos_hocbf_row(agent, peer, orbit, params, k, label))
    n_pairs = len(peers)
    rows.append(vel_row(agent, orbit, params, n_pairs))
    rows.append(acc_row(agent, orbit, params, n_pairs + 1))
    rows.extend(input_rows(params, n_pairs + 2))
    return rows


def build_qp(agent: AgentSnapshot, peers, desired, orbit: ChiefOrbit,
             params: RtaParams, peer_labels=None):
    """Assemble the slack-relaxed QP for one agent.

    Variables are [u, slacks]: 3 thrust components followed by one slack per
    peer pair plus the five shared slacks.  Returns (QpProblem, rows).
    """
    rows = build_rows(agent, peers, orbit, params, peer_labels)
    n_slacks = len(peers) + N_SHARED_SLACKS
    dim = 3 + n_slacks
    weights = np.ones(dim)
    weights[3:] = params.slack_penalty
    center = np.zeros(dim)
    center[:3] = np.asarray(desired, dtype=float)
    qp_rows = []
    for row in rows:
        coeffs = np.zeros(dim)
        coeffs[:3] = -row.coeff_u
        coeffs[3 + row.slack_index] = 1.0
        qp_rows.append((coeffs, row.rhs))
    return qp_mod.QpProblem(weights, center, qp_rows), rows


def filter_agent(agent: AgentSnapshot, peers, desired, orbit: ChiefOrbit,
                 params: RtaParams, peer_labels=None,
                 active_tol: float = 1e-7) -> RtaDecision:
    """Filter one agent's desired thrust against its constraint rows."""
    problem, rows = build_qp(agent, peers, desired, orbit, params, peer_labels)
    solution = qp_mod.solve(problem)
    labels = [row.label for row in rows]
    if solution.status != qp_mod.OPTIMAL:
        # Fail closed: zero thrust, flagged so the caller can log it.
        u_safe = np.zeros(3)
        slacks = np.zeros(len(peers) + N_SHARED_SLACKS)
        margins = np.array([row.evaluate(u_safe) for row in rows])
        return RtaDecision(u_safe, slacks, margins,
                           np.zeros(len(rows), dtype=bool), labels, fallback=True)
    u_safe = solution.x[:3]
    slacks = solution.x[3:]
    margins = np.array([row.evaluate(u_safe) for row in rows])
    active = np.array([abs(margins[k] - slacks[rows[k].slack_index]) <= active_tol
                       for k in range(len(rows))])
    return RtaDecision(u_safe, slacks, margins, active, labels)


def filter_actions(agents, desired_actions, orbit: ChiefOrbit,
                   params: RtaParams, include_chief: bool = True) -> list:
    """Filter every agent's desired thrust, treating the others as peers.

    ``agents`` is a list of AgentSnapshot; ``desired_actions`` the matching
    thrust commands in newtons.  When ``include_chief`` is set, a motionless
    chief at the origin joins each agent's peer list.
    """
    if len(agents) != len(desired_actions):
        raise ValueError("agents and desired_actions must align")
    chief = chief_snapshot() if include_chief else None
    decisions = []
    for i, (agent, desired) in enumerate(zip(agents, desired_actions)):
        peers = [snap for j, snap in enumerate(agents) if j != i]
        labels = [f"pos:peer{j}" for j in range(len(agents)) if j != i]
        if chief is not None:
            peers.append(chief)
            labels.append("pos:chief")
        decisions.append(filter_agent(agent, peers, desired, orbit, params, labels))
    return decisions
