"""Small dense quadratic-program solver for runtime-assurance filtering.

Solves
    min_x  sum_i w_i (x_i - c_i)^2    s.t.  A x <= b
with strictly positive weights ``w``.  Problems of interest have at most a
dozen variables and around a dozen rows, so a dense active-set method with
exact KKT solves is both simple and predictable: it terminates in finitely
many steps, unlike first-order schemes.

The solver starts from the unconstrained minimum ``x = c`` and alternately
adds the lowest-indexed violated row to the working set and drops the
lowest-indexed row with a negative multiplier (Bland-style selection, which
prevents cycling on degenerate instances).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


@dataclass
class QpProblem:
    """Separable strictly convex QP with linear inequality rows.

    ``rows`` is a list of (coeffs, rhs) pairs, each meaning coeffs . x <= rhs.
    """

    cost_weights: np.ndarray
    cost_center: np.ndarray
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.cost_weights = np.asarray(self.cost_weights, dtype=float)
        self.cost_center = np.asarray(self.cost_center, dtype=float)
        if self.cost_weights.ndim != 1:
            raise ValueError("cost_weights must be a vector")
        if self.cost_weights.shape != self.cost_center.shape:
            raise ValueError("cost_weights and cost_center must have equal length")
        if np.any(self.cost_weights <= 0.0):
            raise ValueError("cost_weights must be strictly positive")
        self.rows = [(np.asarray(a, dtype=float), float(r)) for a, r in self.rows]
        for coeffs, _ in self.rows:
            if coeffs.shape != self.cost_weights.shape:
                raise ValueError("row coefficient length must match the variable count")

    @property
    def dim(self) -> int:
        return self.cost_weights.shape[0]

    def objective(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.cost_center
        return float(np.sum(self.cost_weights * d * d))


@dataclass
class QpSolution:
    x: np.ndarray
    multipliers: np.ndarray
    status: str
    iterations: int
    kkt_residual: float


def kkt_residual(qp: QpProblem, x, multipliers) -> float:
    """Max of stationarity, primal-violation, and complementarity residuals.

    Zero (up to roundoff) exactly at the optimum when the multipliers are the
    optimal duals; usable as an independent certificate for any candidate.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    grad = 2.0 * qp.cost_weights * (x - qp.cost_center)
    primal = 0.0
    comp = 0.0
    for (coeffs, rhs), l in zip(qp.rows, lam):
        slack = float(coeffs @ x) - rhs
        grad = grad + l * coeffs
        primal = max(primal, slack)
        comp = max(comp, abs(l * slack))
    stationarity = float(np.max(np.abs(grad))) if grad.size else 0.0
    dual = max(0.0, -float(np.min(lam))) if lam.size else 0.0
    return max(stationarity, max(primal, 0.0), comp, dual)


def solve(qp: QpProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Solve the QP; returns the unique minimizer when status is optimal.

    Dual active-set iteration in the style of Goldfarb and Idnani: starting
    from the unconstrained minimum, repeatedly pick the lowest-indexed
    violated row and drive it into the active set, releasing blocking rows
    via a ratio test on the multipliers.  Stationarity and dual feasibility
    hold at every step, and each release strictly increases the dual
    objective, so the iteration cannot cycle.  Rows are normalized
    internally, which makes ``tol`` scale-free; multipliers are reported for
    the rows as given.
    """
    m = len(qp.rows)
    weights = qp.cost_weights
    center = qp.cost_center
    inv_q = 0.5 / weights  # inverse of the Hessian diagonal

    rows_a = np.zeros((m, qp.dim))
    rows_b = np.zeros(m)
    scale = np.ones(m)
    skip = np.zeros(m, dtype=bool)
    for i, (coeffs, rhs) in enumerate(qp.rows):
        norm = float(np.linalg.norm(coeffs))
        if norm == 0.0:
            # 0 . x <= rhs is vacuous or hopeless regardless of x.
            if rhs < -tol:
                return QpSolution(center.copy(), np.zeros(m), INFEASIBLE, 0, float("inf"))
            skip[i] = True
            continue
        rows_a[i] = coeffs / norm
        rows_b[i] = rhs / norm
        scale[i] = norm

    x = center.copy()
    lam = np.zeros(m)
    active: list[int] = []
    status = MAX_ITER
    iterations = 0
    entering = -1
    while iterations < max_iter:
        iterations += 1
        if entering < 0:
            violated = [i for i in range(m)
                        if not skip[i] and i not in active
                        and float(rows_a[i] @ x) - rows_b[i] > tol]
            if not violated:
                status = OPTIMAL
                break
            entering = min(violated)

        a_p = rows_a[entering]
        if active:
            a_w = rows_a[active]
            gram = (a_w * inv_q) @ a_w.T
            r = np.linalg.solve(gram, a_w @ (inv_q * a_p))
            z = inv_q * (a_p - a_w.T @ r)
        else:
            r = np.zeros(0)
            z = inv_q * a_p
        curvature = float(a_p @ z)  # zero iff a_p depends on the active rows

        blocking = [(lam[active[k]] / r[k], active[k])
                    for k in range(len(active)) if r[k] > 1e-12]
        t_block, drop = min(blocking) if blocking else (np.inf, -1)

        if curvature <= 1e-11 * float(a_p @ (inv_q * a_p)):
            if drop < 0:
                status = INFEASIBLE
                break
            # Dual-only step: transfer multiplier mass onto the entering row.
            for k, j in enumerate(active):
                lam[j] -= t_block * r[k]
            lam[entering] += t_block
            lam[drop] = 0.0
            active.remove(drop)
            continue

        t_full = (float(a_p @ x) - rows_b[entering]) / curvature
        t = min(t_full, t_block)
        x = x - t * z
        for k, j in enumerate(active):
            lam[j] -= t * r[k]
        lam[entering] += t
        if t_full <= t_block:
            active.append(entering)
            entering = -1
        else:
            lam[drop] = 0.0
            active.remove(drop)

    multipliers = np.maximum(lam, 0.0) / scale
    residual = kkt_residual(qp, x, multipliers)
    return QpSolution(x, multipliers, status, iterations, residual)
