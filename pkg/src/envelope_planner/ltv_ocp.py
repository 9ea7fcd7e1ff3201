"""Batch (condensed) assembly of linear time-variant optimal control problems.

Continuous models are Euler-discretized, stacked over the horizon into batch
transition/input/output maps, and combined with quadratic tracking costs and
box bounds into a dense inequality-constrained QP whose decision variable is
the stacked input sequence.  Output bounds become input constraints through
the batch maps; optional one-sided slack variables soften selected output
rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qp import QuadraticProgram


class InconsistentBounds(ValueError):
    """A lower bound exceeds its upper bound."""


@dataclass(frozen=True)
class LtvModel:
    """Per-step continuous matrices of ``x' = Ax + Bu + Ez``, ``y = Cx``.

    ``a``, ``b``, ``e`` are indexed k = 0..N-1 (the step being propagated);
    ``c`` is indexed for the constrained steps k = 1..N.  ``e`` is None when
    there is no error input.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    e: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.a.shape[0]
        if self.a.ndim != 3 or self.a.shape[1] != self.a.shape[2]:
            raise ValueError("a must be (N, n_x, n_x)")
        if self.b.shape[0] != n or self.c.shape[0] != n:
            raise ValueError("per-step matrix counts differ")
        if self.e is not None and self.e.shape[0] != n:
            raise ValueError("per-step matrix counts differ")

    @property
    def horizon(self) -> int:
        return self.a.shape[0]

    @property
    def state_dim(self) -> int:
        return self.a.shape[1]

    @property
    def input_dim(self) -> int:
        return self.b.shape[2]

    @property
    def output_dim(self) -> int:
        return self.c.shape[1]

    @property
    def error_dim(self) -> int:
        return 0 if self.e is None else self.e.shape[2]


@dataclass(frozen=True)
class DiscreteLtv:
    """Euler-discretized per-step matrices."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    e: Optional[np.ndarray]
    dt: float


def discretize(model: LtvModel, dt: float) -> DiscreteLtv:
    """Euler discretization: A_k = I + dt*A(t_k), B_k = dt*B(t_k),
    E_k = dt*E(t_k); the output map is untouched."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    eye = np.eye(model.state_dim)
    a_hat = eye[None, :, :] + dt * model.a
    b_hat = dt * model.b
    e_hat = None if model.e is None else dt * model.e
    return DiscreteLtv(a_hat, b_hat, model.c.copy(), e_hat, dt)


@dataclass(frozen=True)
class BatchSystem:
    """Stacked horizon maps: x_stack = cal_a @ x0 + cal_b @ u + cal_e @ z.

    The state stack covers steps 1..N; cal_b is lower block triangular with
    the per-step input matrices on its diagonal band, and cal_c is the block
    diagonal of the per-step output maps.
    """

    cal_a: np.ndarray
    cal_b: np.ndarray
    cal_c: np.ndarray
    cal_e: Optional[np.ndarray]
    horizon: int
    dt: float
    state_dim: int
    input_dim: int
    output_dim: int

    def propagate(self, x0, u_stack, z_stack=None) -> np.ndarray:
        """Stacked states for steps 1..N given x0 and stacked inputs."""
        x = self.cal_a @ np.asarray(x0, dtype=float)
        x = x + self.cal_b @ np.asarray(u_stack, dtype=float).ravel()
        if self.cal_e is not None and z_stack is not None:
            x = x + self.cal_e @ np.asarray(z_stack, dtype=float).ravel()
        return x


def _stack_input_map(a_hat: np.ndarray, blocks: np.ndarray, n: int) -> np.ndarray:
    """Lower block triangular map from stacked per-step inputs to states."""
    nx = a_hat.shape[1]
    nb = blocks.shape[2]
    out = np.zeros((n * nx, n * nb))
    for col in range(n):
        acc = blocks[col]
        out[col * nx : (col + 1) * nx, col * nb : (col + 1) * nb] = acc
        for row in range(col + 1, n):
            acc = a_hat[row] @ acc
            out[row * nx : (row + 1) * nx, col * nb : (col + 1) * nb] = acc
    return out


def build_batch(discrete: DiscreteLtv, horizon: Optional[int] = None) -> BatchSystem:
    """Stack per-step matrices into batch maps over the horizon."""
    n = horizon if horizon is not None else discrete.a.shape[0]
    if n < 1 or n > discrete.a.shape[0]:
        raise ValueError("horizon out of range")
    nx = discrete.a.shape[1]
    nu = discrete.b.shape[2]
    ny = discrete.c.shape[1]

    cal_a = np.zeros((n * nx, nx))
    acc = np.eye(nx)
    for row in range(n):
        acc = discrete.a[row] @ acc
        cal_a[row * nx : (row + 1) * nx] = acc

    cal_b = _stack_input_map(discrete.a, discrete.b, n)
    cal_e = (
        None if discrete.e is None else _stack_input_map(discrete.a, discrete.e, n)
    )

    cal_c = np.zeros((n * ny, n * nx))
    for k in range(n):
        cal_c[k * ny : (k + 1) * ny, k * nx : (k + 1) * nx] = discrete.c[k]

    return BatchSystem(cal_a, cal_b, cal_c, cal_e, n, discrete.dt, nx, nu, ny)


@dataclass(frozen=True)
class CostWeights:
    """Per-step quadratic weights and the stacked state reference."""

    q_per_step: np.ndarray
    r_per_step: np.ndarray
    x_ref: np.ndarray


def _block_diag(per_step: np.ndarray) -> np.ndarray:
    n, rows, cols = per_step.shape
    out = np.zeros((n * rows, n * cols))
    for k in range(n):
        out[k * rows : (k + 1) * rows, k * cols : (k + 1) * cols] = per_step[k]
    return out


@dataclass(frozen=True)
class SlackSpec:
    """One-sided quadratic slack on selected output bounds.

    ``entries`` lists (step, output_index) pairs with step in 1..N; each
    entry adds one nonnegative slack variable relaxing both the upper and
    lower bound of that output at that step.
    """

    entries: tuple
    weight: float


@dataclass(frozen=True)
class AssembledQp:
    """Condensed QP plus the bookkeeping to interpret its solution."""

    qp: QuadraticProgram
    constant: float
    n_inputs: int
    n_slack: int
    input_dim: int

    def split(self, primal: np.ndarray):
        """(per-step input array, slack values) from a stacked primal."""
        u = np.asarray(primal[: self.n_inputs]).reshape(-1, self.input_dim)
        return u, np.asarray(primal[self.n_inputs :])


def assemble_qp(
    batch: BatchSystem,
    weights: CostWeights,
    x0,
    z_stack=None,
    u_min=None,
    u_max=None,
    y_min=None,
    y_max=None,
    slack: Optional[SlackSpec] = None,
) -> AssembledQp:
    """Condense cost and bounds into a QP over the stacked input.

    Substituting the batch state map into the tracking cost yields hessian
    ``2 (B' Q B + R)``; output bounds y_min <= C(A x0 + B u + E z) <= y_max
    and input box bounds become inequality rows.  Infinite bounds are
    dropped.  The constant cost term from the reference is returned
    separately.  Raises InconsistentBounds when any lower bound exceeds its
    upper bound.
    """
    n, nx, nu, ny = batch.horizon, batch.state_dim, batch.input_dim, batch.output_dim
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != nx:
        raise ValueError("x0 dimension mismatch")

    free = batch.cal_a @ x0
    if batch.cal_e is not None and z_stack is not None:
        free = free + batch.cal_e @ np.asarray(z_stack, dtype=float).ravel()

    qq = _block_diag(np.asarray(weights.q_per_step, dtype=float))
    rr = _block_diag(np.asarray(weights.r_per_step, dtype=float))
    x_ref = np.asarray(weights.x_ref, dtype=float).ravel()
    if x_ref.size != n * nx:
        raise ValueError("x_ref dimension mismatch")

    offset = free - x_ref
    hessian = 2.0 * (batch.cal_b.T @ qq @ batch.cal_b + rr)
    linear = 2.0 * batch.cal_b.T @ (qq @ offset)
    constant = float(offset @ qq @ offset)

    def per_step_stack(bounds, width, name):
        if bounds is None:
            return np.full(n * width, np.nan)
        arr = np.asarray(bounds, dtype=float)
        if arr.shape != (n, width):
            raise ValueError(f"{name} must have shape ({n}, {width})")
        return arr.ravel()

    u_lo = per_step_stack(u_min, nu, "u_min")
    u_hi = per_step_stack(u_max, nu, "u_max")
    y_lo = per_step_stack(y_min, ny, "y_min")
    y_hi = per_step_stack(y_max, ny, "y_max")
    for lo, hi, name in ((u_lo, u_hi, "input"), (y_lo, y_hi, "output")):
        both = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[both] > hi[both]):
            raise InconsistentBounds(f"{name} lower bound exceeds upper bound")

    n_u_total = n * nu
    n_slack = 0 if slack is None else len(slack.entries)
    n_vars = n_u_total + n_slack

    cb = batch.cal_c @ batch.cal_b
    y_free = batch.cal_c @ free

    slack_col = {}
    if slack is not None:
        for col, (step, out_idx) in enumerate(slack.entries):
            if not 1 <= step <= n or not 0 <= out_idx < ny:
                raise ValueError("slack entry out of range")
            slack_col[(step - 1) * ny + out_idx] = n_u_total + col

    rows = []
    uppers = []

    def add_row(row_u, upper, slack_idx=None):
        row = np.zeros(n_vars)
        row[:n_u_total] = row_u
        if slack_idx is not None:
            row[slack_idx] = -1.0
        rows.append(row)
        uppers.append(upper)

    eye_u = np.eye(n_u_total)
    finite = np.isfinite(u_hi)
    for i in np.flatnonzero(finite):
        add_row(eye_u[i], u_hi[i])
    finite = np.isfinite(u_lo)
    for i in np.flatnonzero(finite):
        add_row(-eye_u[i], -u_lo[i])
    for i in np.flatnonzero(np.isfinite(y_hi)):
        add_row(cb[i], y_hi[i] - y_free[i], slack_col.get(i))
    for i in np.flatnonzero(np.isfinite(y_lo)):
        add_row(-cb[i], y_free[i] - y_lo[i], slack_col.get(i))
    for col in range(n_slack):
        row = np.zeros(n_vars)
        row[n_u_total + col] = -1.0
        rows.append(row)
        uppers.append(0.0)

    if n_slack:
        hess_aug = np.zeros((n_vars, n_vars))
        hess_aug[:n_u_total, :n_u_total] = hessian
        hess_aug[n_u_total:, n_u_total:] = 2.0 * slack.weight * np.eye(n_slack)
        lin_aug = np.concatenate([linear, np.zeros(n_slack)])
    else:
        hess_aug, lin_aug = hessian, linear

    g_matrix = np.array(rows) if rows else None
    h_vector = np.array(uppers) if rows else None
    qp = QuadraticProgram(hess_aug, lin_aug, g_matrix, h_vector)
    return AssembledQp(qp, constant, n_u_total, n_slack, nu)


def evaluate_cost(batch: BatchSystem, weights: CostWeights, x0, u_stack, z_stack=None) -> float:
    """Tracking cost of an input sequence, including the constant term."""
    x = batch.propagate(x0, u_stack, z_stack)
    offset = x - np.asarray(weights.x_ref, dtype=float).ravel()
    qq = _block_diag(np.asarray(weights.q_per_step, dtype=float))
    rr = _block_diag(np.asarray(weights.r_per_step, dtype=float))
    u = np.asarray(u_stack, dtype=float).ravel()
    return float(offset @ qq @ offset + u @ rr @ u)
