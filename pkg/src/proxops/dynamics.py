"""Relative-motion and inertial dynamics for chief/deputy proximity operations.

All states are expressed either in an Earth-centered inertial (ECI) frame or
in the chief-centered Hill frame with x radial (outward from Earth), y
along-track, and z along the chief's orbital angular momentum.  Units are
meters, seconds, kilograms, and newtons throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MU_EARTH = 3.986004418e14
"""Earth gravitational parameter, m^3/s^2."""

J2_EARTH = 1.08262668e-3
"""Earth J2 zonal harmonic coefficient, dimensionless."""

R_EARTH = 6378137.0
"""Earth equatorial radius, m."""

DEFAULT_SEMI_MAJOR_AXIS = 6878137.0
"""Chief circular orbit radius used by default (about 500 km altitude), m."""

DEFAULT_SUBSTEP = 0.1
"""Default RK4 step for relative-motion propagation, s."""

DEFAULT_INERTIAL_SUBSTEP = 1.0
"""Default RK4 step for inertial propagation, s."""


class PropagationError(RuntimeError):
    """Raised when numerical propagation produces an invalid state."""


def _vec3(value) -> np.ndarray:
    out = np.asarray(value, dtype=float)
    if out.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {out.shape}")
    return out


@dataclass
class RelativeState:
    """Deputy position and velocity relative to the chief, Hill frame."""

    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        self.pos = _vec3(self.pos)
        self.vel = _vec3(self.vel)

    def copy(self) -> "RelativeState":
        return RelativeState(self.pos.copy(), self.vel.copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])

    @classmethod
    def from_vector(cls, vec) -> "RelativeState":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (6,):
            raise ValueError(f"expected a 6-vector, got shape {vec.shape}")
        return cls(vec[:3], vec[3:])


@dataclass
class InertialState:
    """Absolute position and velocity in the ECI frame."""

    pos: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        self.pos = _vec3(self.pos)
        self.vel = _vec3(self.vel)

    def copy(self) -> "InertialState":
        return InertialState(self.pos.copy(), self.vel.copy())


@dataclass(frozen=True)
class ChiefOrbit:
    """Circular chief orbit defining the Hill frame rotation rate.

    ``mean_motion`` must equal sqrt(mu / semi_major_axis^3); both fields are
    stored so either view is cheap to read.
    """

    mean_motion: float
    semi_major_axis: float
    mu: float = MU_EARTH
    j2_enabled: bool = False
    j2_coefficient: float = J2_EARTH
    body_radius: float = R_EARTH

    def __post_init__(self):
        if self.semi_major_axis <= 0.0 or self.mu <= 0.0:
            raise ValueError("semi_major_axis and mu must be positive")
        expected = math.sqrt(self.mu / self.semi_major_axis**3)
        if abs(self.mean_motion - expected) > 1e-12 * expected:
            raise ValueError(
                f"mean_motion {self.mean_motion} inconsistent with "
                f"sqrt(mu/a^3) = {expected}"
            )

    @classmethod
    def circular(cls, semi_major_axis: float = DEFAULT_SEMI_MAJOR_AXIS,
                 mu: float = MU_EARTH, **kwargs) -> "ChiefOrbit":
        return cls(mean_motion=math.sqrt(mu / semi_major_axis**3),
                   semi_major_axis=semi_major_axis, mu=mu, **kwargs)


@dataclass(frozen=True)
class VehicleParams:
    """Deputy actuation limits: mass in kg, per-axis thrust bound in N."""

    mass: float = 1.0
    thrust_bound: float = 1.0

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.thrust_bound < 0.0:
            raise ValueError("thrust_bound must be nonnegative")


def default_orbit(j2_enabled: bool = False) -> ChiefOrbit:
    """Chief orbit used across scenarios: circular at 6378.137+500 km."""
    return ChiefOrbit.circular(DEFAULT_SEMI_MAJOR_AXIS, j2_enabled=j2_enabled)


def default_vehicle() -> VehicleParams:
    return VehicleParams()


class StateDerivative(NamedTuple):
    vel: np.ndarray
    accel: np.ndarray


def cwh_drift_accel(state: RelativeState, orbit: ChiefOrbit) -> np.ndarray:
    """Unforced Clohessy-Wiltshire acceleration at ``state``, m/s^2.

    This is the linear drift term of the relative dynamics; thrust enters
    separately as u / mass.
    """
    n = orbit.mean_motion
    x, _, z = state.pos
    vx, vy, _ = state.vel
    return np.array([
        3.0 * n * n * x + 2.0 * n * vy,
        -2.0 * n * vx,
        -n * n * z,
    ])


def cwh_derivative(state: RelativeState, u, orbit: ChiefOrbit,
                   veh: VehicleParams) -> StateDerivative:
    """Time derivative of the relative state under thrust ``u`` (N).

    Returns
    -------
    StateDerivative
        ``vel`` is the state's velocity, ``accel`` the CWH drift plus u/m.
    """
    u = _vec3(u)
    accel = cwh_drift_accel(state, orbit) + u / veh.mass
    return StateDerivative(state.vel.copy(), accel)


def propagate_cwh(state: RelativeState, u, dt: float, orbit: ChiefOrbit,
                  veh: VehicleParams, substeps: int | None = None) -> RelativeState:
    """Propagate the CWH dynamics for ``dt`` seconds under constant thrust.

    Classical fixed-step RK4.  When ``substeps`` is omitted the step size is
    close to DEFAULT_SUBSTEP.

    Parameters
    ----------
    state : RelativeState
        Initial relative state.
    u : array_like
        Thrust vector held constant over the interval, N.
    dt : float
        Propagation interval, s.  Must be positive.
    substeps : int, optional
        Number of RK4 steps; at least 1.

    Raises
    ------
    PropagationError
        If the propagated state stops being finite.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if substeps is None:
        substeps = max(1, int(round(dt / DEFAULT_SUBSTEP)))
    if substeps < 1:
        raise ValueError("substeps must be at least 1")

    n = orbit.mean_motion
    n2 = n * n
    inv_m = 1.0 / veh.mass
    ux, uy, uz = (float(v) for v in np.asarray(u, dtype=float))
    ax_u, ay_u, az_u = ux * inv_m, uy * inv_m, uz * inv_m

    # Scalar RK4 keeps the hot loop free of array allocation overhead.
    def deriv(x, y, z, vx, vy, vz):
        return (vx, vy, vz,
                3.0 * n2 * x + 2.0 * n * vy + ax_u,
                -2.0 * n * vx + ay_u,
                -n2 * z + az_u)

    h = dt / substeps
    x, y, z = (float(v) for v in state.pos)
    vx, vy, vz = (float(v) for v in state.vel)
    for _ in range(substeps):
        k1 = deriv(x, y, z, vx, vy, vz)
        k2 = deriv(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], z + 0.5 * h * k1[2],
                   vx + 0.5 * h * k1[3], vy + 0.5 * h * k1[4], vz + 0.5 * h * k1[5])
        k3 = deriv(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], z + 0.5 * h * k2[2],
                   vx + 0.5 * h * k2[3], vy + 0.5 * h * k2[4], vz + 0.5 * h * k2[5])
        k4 = deriv(x + h * k3[0], y + h * k3[1], z + h * k3[2],
                   vx + h * k3[3], vy + h * k3[4], vz + h * k3[5])
        sixth = h / 6.0
        x += sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y += sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        z += sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        vx += sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        vy += sixth * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        vz += sixth * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])

    out = (x, y, z, vx, vy, vz)
    if not all(math.isfinite(v) for v in out):
        raise PropagationError("relative-motion propagation diverged to non-finite state")
    return RelativeState(np.array(out[:3]), np.array(out[3:]))


def cwh_closed_form(state: RelativeState, dt: float, orbit: ChiefOrbit) -> RelativeState:
    """Exact unforced CWH solution after ``dt`` seconds.

    Uses the closed-form state transition matrix of the linearized relative
    motion; valid for any dt, including zero and negative values.
    """
    n = orbit.mean_motion
    nt = n * dt
    c = math.cos(nt)
    s = math.sin(nt)

    phi_rr = np.array([
        [4.0 - 3.0 * c, 0.0, 0.0],
        [6.0 * (s - nt), 1.0, 0.0],
        [0.0, 0.0, c],
    ])
    phi_rv = np.array([
        [s / n, 2.0 * (1.0 - c) / n, 0.0],
        [2.0 * (c - 1.0) / n, (4.0 * s - 3.0 * nt) / n, 0.0],
        [0.0, 0.0, s / n],
    ])
    phi_vr = np.array([
        [3.0 * n * s, 0.0, 0.0],
        [6.0 * n * (c - 1.0), 0.0, 0.0],
        [0.0, 0.0, -n * s],
    ])
    phi_vv = np.array([
        [c, 2.0 * s, 0.0],
        [-2.0 * s, 4.0 * c - 3.0, 0.0],
        [0.0, 0.0, c],
    ])

    pos = phi_rr @ state.pos + phi_rv @ state.vel
    vel = phi_vr @ state.pos + phi_vv @ state.vel
    return RelativeState(pos, vel)


def two_body_j2_derivative(state: InertialState, orbit: ChiefOrbit) -> StateDerivative:
    """Two-body acceleration with an optional first-order J2 zonal term.

    Parameters
    ----------
    state : InertialState
        ECI state of the vehicle.
    orbit : ChiefOrbit
        Supplies mu, the J2 flag/coefficient, and the body radius.

    Raises
    ------
    ValueError
        If the position has zero norm.
    """
    r = state.pos
    r2 = float(r @ r)
    if r2 == 0.0:
        raise ValueError("position norm must be positive")
    rn = math.sqrt(r2)
    accel = (-orbit.mu / (r2 * rn)) * r
    if orbit.j2_enabled:
        x, y, z = r
        z2_r2 = z * z / r2
        k = -1.5 * orbit.j2_coefficient * orbit.mu * orbit.body_radius**2 / (r2 * r2 * rn)
        accel = accel + k * np.array([
            x * (1.0 - 5.0 * z2_r2),
            y * (1.0 - 5.0 * z2_r2),
            z * (3.0 - 5.0 * z2_r2),
        ])
    return StateDerivative(state.vel.copy(), accel)


def propagate_inertial(state: InertialState, dt: float, orbit: ChiefOrbit,
                       substeps: int | None = None) -> InertialState:
    """RK4 propagation of the two-body (+J2) dynamics for ``dt`` seconds.

    Raises PropagationError if the trajectory leaves the valid domain
    (non-finite values or descent below the body radius).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if substeps is None:
        substeps = max(1, int(round(dt / DEFAULT_INERTIAL_SUBSTEP)))
    if substeps < 1:
        raise ValueError("substeps must be at least 1")

    mu = orbit.mu
    j2_on = orbit.j2_enabled
    j2k = -1.5 * orbit.j2_coefficient * orbit.mu * orbit.body_radius**2

    def deriv(x, y, z, vx, vy, vz):
        r2 = x * x + y * y + z * z
        rn = math.sqrt(r2)
        g = -mu / (r2 * rn)
        ax, ay, az = g * x, g * y, g * z
        if j2_on:
            k = j2k / (r2 * r2 * rn)
            z2_r2 = z * z / r2
            ax += k * x * (1.0 - 5.0 * z2_r2)
            ay += k * y * (1.0 - 5.0 * z2_r2)
            az += k * z * (3.0 - 5.0 * z2_r2)
        return (vx, vy, vz, ax, ay, az)

    h = dt / substeps
    x, y, z = (float(v) for v in state.pos)
    vx, vy, vz = (float(v) for v in state.vel)
    for _ in range(substeps):
        k1 = deriv(x, y, z, vx, vy, vz)
        k2 = deriv(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], z + 0.5 * h * k1[2],
                   vx + 0.5 * h * k1[3], vy + 0.5 * h * k1[4], vz + 0.5 * h * k1[5])
        k3 = deriv(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], z + 0.5 * h * k2[2],
                   vx + 0.5 * h * k2[3], vy + 0.5 * h * k2[4], vz + 0.5 * h * k2[5])
        k4 = deriv(x + h * k3[0], y + h * k3[1], z + h * k3[2],
                   vx + h * k3[3], vy + h * k3[4], vz + h * k3[5])
        sixth = h / 6.0
        x += sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        y += sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        z += sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        vx += sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        vy += sixth * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
        vz += sixth * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
        if not (math.isfinite(x) and math.isfinite(vx)):
            raise PropagationError("inertial propagation diverged to non-finite state")
        if x * x + y * y + z * z < orbit.body_radius**2:
            raise PropagationError("inertial propagation descended below the body radius")

    return InertialState(np.array([x, y, z]), np.array([vx, vy, vz]))


def _hill_basis(chief: InertialState):
    """Rotation matrix (rows = Hill axes in ECI) and frame rate about z."""
    r0 = chief.pos
    v0 = chief.vel
    rn = float(np.linalg.norm(r0))
    h = np.cross(r0, v0)
    hn = float(np.linalg.norm(h))
    if rn == 0.0 or hn == 0.0:
        raise ValueError("chief state is degenerate: zero radius or angular momentum")
    x_hat = r0 / rn
    z_hat = h / hn
    y_hat = np.cross(z_hat, x_hat)
    rot = np.vstack([x_hat, y_hat, z_hat])
    omega_z = hn / (rn * rn)
    return rot, omega_z


def eci_to_hill(chief: InertialState, deputy: InertialState) -> RelativeState:
    """Express the deputy state relative to the chief in the Hill frame.

    The transformation rotates the position difference into the Hill axes and
    removes the frame rotation from the velocity difference (transport term).
    """
    rot, omega_z = _hill_basis(chief)
    dpos = rot @ (deputy.pos - chief.pos)
    dvel = rot @ (deputy.vel - chief.vel)
    omega = np.array([0.0, 0.0, omega_z])
    return RelativeState(dpos, dvel - np.cross(omega, dpos))


def hill_to_eci(chief: InertialState, rel: RelativeState) -> InertialState:
    """Inverse of :func:`eci_to_hill` about the same chief state."""
    rot, omega_z = _hill_basis(chief)
    omega = np.array([0.0, 0.0, omega_z])
    pos = chief.pos + rot.T @ rel.pos
    vel = chief.vel + rot.T @ (rel.vel + np.cross(omega, rel.pos))
    return InertialState(pos, vel)


def circular_chief_state(orbit: ChiefOrbit, phase: float = 0.0) -> InertialState:
    """ECI state of the chief on its circular equatorial orbit at ``phase`` rad."""
    a = orbit.semi_major_axis
    speed = orbit.mean_motion * a
    c, s = math.cos(phase), math.sin(phase)
    return InertialState(np.array([a * c, a * s, 0.0]),
                         np.array([-speed * s, speed * c, 0.0]))
