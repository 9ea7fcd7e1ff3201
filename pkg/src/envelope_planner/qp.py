"""Dense convex quadratic programming with warm starts and infeasibility
certificates.

Solves ``min 0.5 z'Hz + f'z  s.t.  Gz <= h``.  An operator-splitting (ADMM)
iteration supplies iterates and infeasibility detection; an active-set
refinement polishes iterates to tight KKT residuals with direct linear
solves.  Constraint rows are equilibrated to unit infinity norm and the
cost is normalized internally; duals are mapped back to the original
scaling.  The hessian is regularized by a small diagonal shift so every
accepted problem is strictly convex; primal infeasibility is certified by a
separating dual ray (y >= 0, G'y ~ 0, h'y < 0).  The solver is fully
deterministic: identical inputs and settings produce bitwise-identical
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class DimensionMismatch(ValueError):
    """Problem matrices and vectors have inconsistent shapes."""


class NonConvex(ValueError):
    """Hessian has an eigenvalue below -1e-6."""


@dataclass
class QuadraticProgram:
    """``min 0.5 z'Hz + f'z  s.t.  Gz <= h``; warm_start seeds the primal."""

    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: Optional[np.ndarray] = None
    ineq_upper: Optional[np.ndarray] = None
    warm_start: Optional[np.ndarray] = None


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeasible: float = 1e-5
    max_iterations: int = 4000
    check_interval: int = 25
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adaptive_rho: bool = True
    polish: bool = True
    regularization: float = 1e-9
    refine_passes: int = 200


@dataclass
class QpSolution:
    """status is 'optimal', 'infeasible', or 'max_iterations'.

    For infeasible problems ``dual`` carries the certificate ray.
    """

    primal: np.ndarray
    dual: np.ndarray
    status: str
    iterations: int
    kkt_residual: float


def kkt_residual(H, f, G, h, z, y) -> float:
    """Worst violation among stationarity, primal feasibility, dual sign,
    and complementary slackness."""
    stationarity = H @ z + f
    if G is not None and h is not None and len(h):
        stationarity = stationarity + G.T @ y
        slack = G @ z - h
        primal = float(np.maximum(slack, 0.0).max(initial=0.0))
        comp = float(np.abs(y * slack).max(initial=0.0))
        dual_neg = float(np.maximum(-y, 0.0).max(initial=0.0))
    else:
        primal = comp = dual_neg = 0.0
    return max(float(np.abs(stationarity).max(initial=0.0)), primal, comp, dual_neg)


def _norm_inf(v) -> float:
    return float(np.abs(v).max(initial=0.0))


def _validate(problem: QuadraticProgram, settings: QpSettings):
    H = np.asarray(problem.hessian, dtype=float)
    f = np.asarray(problem.linear, dtype=float).ravel()
    n = f.size
    if H.shape != (n, n):
        raise DimensionMismatch(f"hessian {H.shape} vs linear ({n},)")
    scale = max(1.0, _norm_inf(H))
    if _norm_inf(H - H.T) > 1e-9 * scale:
        raise DimensionMismatch("hessian is not symmetric within 1e-9")
    H = 0.5 * (H + H.T)
    if np.linalg.eigvalsh(H)[0] < -1e-6:
        raise NonConvex("hessian has an eigenvalue below -1e-6")
    if (
        problem.ineq_matrix is None
        or problem.ineq_upper is None
        or np.size(problem.ineq_upper) == 0
    ):
        G = np.zeros((0, n))
        h = np.zeros(0)
    else:
        G = np.atleast_2d(np.asarray(problem.ineq_matrix, dtype=float))
        h = np.asarray(problem.ineq_upper, dtype=float).ravel()
        if G.shape != (h.size, n):
            raise DimensionMismatch(f"constraints {G.shape} vs upper ({h.size},)")
    if problem.warm_start is not None:
        w = np.asarray(problem.warm_start, dtype=float).ravel()
        if w.size != n:
            raise DimensionMismatch("warm start size mismatch")
    P = H + settings.regularization * np.eye(n)
    return P, H, f, G, h


def _kkt_solve(P, Ga, ha, f):
    """Direct solve of the equality-constrained KKT system with two rounds
    of iterative refinement; returns (z, y_active) or None."""
    n = len(f)
    na = len(ha)
    if na == 0:
        try:
            z = np.linalg.solve(P, -f)
        except np.linalg.LinAlgError:
            return None
        return z, np.zeros(0)
    kkt = np.zeros((n + na, n + na))
    kkt[:n, :n] = P
    kkt[:n, n:] = Ga.T
    kkt[n:, :n] = Ga
    rhs = np.concatenate([-f, ha])
    rhs_scale = 1.0 + _norm_inf(rhs)
    sol = None
    try:
        sol = np.linalg.solve(kkt, rhs)
        for _ in range(2):
            sol = sol + np.linalg.solve(kkt, rhs - kkt @ sol)
    except np.linalg.LinAlgError:
        sol = None
    # Near-singular working sets (redundant or nearly parallel active rows,
    # e.g. consecutive position bounds while stopped, or both sides of a
    # zero-width corridor) yield wild multiplier splits; the minimum-norm
    # solve resolves them and the caller's drop pass cleans up negatives.
    if (
        sol is None
        or not np.all(np.isfinite(sol))
        or _norm_inf(sol) > 1e10 * rhs_scale
        or _norm_inf(kkt @ sol - rhs) > 1e-4 * rhs_scale
    ):
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        sol = sol + np.linalg.lstsq(kkt, rhs - kkt @ sol, rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            return None
    return sol[:n], sol[n:]


def _active_set_refine(P, Gs, hs, f, active, max_passes):
    """Iterate equality solves, dropping negative multipliers and adding the
    worst violated rows, until the working set is optimal.

    Finite for strictly convex problems in practice; capped by max_passes.
    Returns (z, y_scaled_full) or None.
    """
    m = len(hs)
    active = active.copy()
    seen = set()
    bland = False  # lowest-index anti-cycling rule after a repeat
    for _ in range(max_passes):
        key = active.tobytes()
        if key in seen:
            if bland:
                return None
            bland = True
            seen.clear()
        seen.add(key)
        idx = np.flatnonzero(active)
        result = _kkt_solve(P, Gs[idx], hs[idx], f)
        if result is None:
            return None
        z, y_act = result
        y_scale = 1.0 + _norm_inf(y_act)
        negative = np.flatnonzero(y_act < -1e-11 * y_scale)
        if negative.size:
            pick = negative[0] if bland else int(np.argmin(y_act))
            active[idx[pick]] = False
            continue
        slack = Gs @ z - hs
        if len(idx):
            slack[idx] = 0.0  # working rows solved as equalities
        tol = 1e-11 * (1.0 + np.abs(hs))
        violated = np.flatnonzero(slack > tol)
        if violated.size == 0:
            y_full = np.zeros(m)
            if len(idx):
                y_full[idx] = np.maximum(y_act, 0.0)
            return z, y_full
        pick = violated[0] if bland else violated[np.argmax(slack[violated])]
        active[int(pick)] = True
    return None


def _dual_projected_newton(P, Gs, hs, f, max_iterations=60):
    """Projected Newton on the bound-constrained dual problem.

    With strictly convex P the dual is ``min 0.5 y'My + q'y  s.t. y >= 0``
    with M = G P^-1 G'.  Robust on degenerate active sets where working-set
    iteration cycles.  Returns (z, y_scaled) or None.
    """
    m = len(hs)
    factor = cho_factor(P)
    pinv_gt = cho_solve(factor, Gs.T)
    pinv_f = cho_solve(factor, f)
    big_m = Gs @ pinv_gt
    q_dual = Gs @ pinv_f + hs
    scale = 1.0 + _norm_inf(q_dual)
    y = np.zeros(m)
    grad = big_m @ y + q_dual
    phi = 0.5 * float(y @ (grad + q_dual))
    for _ in range(max_iterations):
        projected_grad = np.where(y > 1e-12, grad, np.minimum(grad, 0.0))
        if _norm_inf(projected_grad) <= 1e-12 * scale:
            break
        free = (y > 1e-12) | (grad < 0.0)
        idx = np.flatnonzero(free)
        if idx.size == 0:
            break
        direction = np.zeros(m)
        sub = big_m[np.ix_(idx, idx)] + 1e-10 * np.eye(idx.size)
        try:
            direction[idx] = -np.linalg.solve(sub, grad[idx])
        except np.linalg.LinAlgError:
            direction[idx] = -np.linalg.lstsq(sub, grad[idx], rcond=None)[0]
        slope = float(grad @ direction)
        if slope >= 0.0:
            break
        step = 1.0
        improved = False
        for _ in range(25):
            y_new = np.maximum(y + step * direction, 0.0)
            grad_new = big_m @ y_new + q_dual
            phi_new = 0.5 * float(y_new @ (grad_new + q_dual))
            if phi_new <= phi + 1e-4 * step * slope:
                y, grad, phi = y_new, grad_new, phi_new
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        if _norm_inf(y) > 1e12 * scale:
            return None  # diverging dual: leave infeasibility to the probe
    z = -(pinv_f + pinv_gt @ y)
    return z, y


def _feasibility_probe(Gs, hs, z0=None, max_iterations=150):
    """Minimize the constraint violation ``phi(z) = 0.5 ||(Gz - h)+||^2``
    by Gauss-Newton with backtracking.

    At the minimizer the residual v = (Gz - h)+ satisfies G'v = 0, v >= 0,
    and h'v = -||v||^2, so a nonzero residual is a Farkas infeasibility
    certificate.  Returns the residual ray or None when a feasible point is
    found (or the probe fails to settle).
    """
    n = Gs.shape[1]
    z = np.zeros(n) if z0 is None else np.asarray(z0, dtype=float).copy()
    viol = np.maximum(Gs @ z - hs, 0.0)
    phi = 0.5 * float(viol @ viol)
    scale = 1.0 + _norm_inf(hs)
    for _ in range(max_iterations):
        if phi <= 1e-18 * scale * scale:
            return None  # feasible point found
        grad = Gs.T @ viol
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= 1e-12 * scale:
            break  # stationary: minimum violation reached
        active = viol > 0.0
        Ga = Gs[active]
        try:
            step = np.linalg.lstsq(Ga, viol[active], rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        alpha = 1.0
        for _ in range(30):
            trial = z - alpha * step
            viol_t = np.maximum(Gs @ trial - hs, 0.0)
            phi_t = 0.5 * float(viol_t @ viol_t)
            if phi_t <= phi - 1e-4 * alpha * float(grad @ step):
                z, viol, phi = trial, viol_t, phi_t
                break
            alpha *= 0.5
        else:
            break  # no progress
    if phi <= 1e-16 * scale * scale:
        return None
    grad = Gs.T @ viol
    if float(np.linalg.norm(grad)) > 1e-7 * (1.0 + float(np.linalg.norm(viol))):
        return None  # not at the minimizer; certificate would be unsound
    return viol


def solve(problem: QuadraticProgram, settings: Optional[QpSettings] = None) -> QpSolution:
    """Solve a convex QP.

    Optimal solutions satisfy the KKT conditions within tolerance; primal
    infeasibility is reported with a certificate ray in ``dual``.  A provided
    warm start is used as the initial primal iterate.
    """
    st = settings or QpSettings()
    P, H, f, G, h = _validate(problem, st)
    n = f.size
    m = h.size

    if m == 0:
        z = cho_solve(cho_factor(P), -f)
        res = kkt_residual(H, f, None, None, z, np.zeros(0))
        return QpSolution(z, np.zeros(0), "optimal", 0, res)

    # Internal scaling: unit-inf-norm constraint rows, normalized cost.
    row_norm = np.abs(G).max(axis=1)
    row_scale = 1.0 / np.maximum(row_norm, 1e-12)
    Gs = G * row_scale[:, None]
    hs = h * row_scale
    cost_scale = 1.0 / max(1.0, _norm_inf(P))
    Pc = cost_scale * P
    fc = cost_scale * f

    def unscale_dual(y_scaled: np.ndarray) -> np.ndarray:
        return y_scaled * row_scale / cost_scale

    def try_finish(z, y_scaled, iterations):
        y = np.maximum(unscale_dual(y_scaled), 0.0)
        res = kkt_residual(H, f, G, h, z, y)
        if res <= st.eps_abs:
            return QpSolution(z, y, "optimal", iterations, res)
        return None

    z = (
        np.asarray(problem.warm_start, dtype=float).ravel().copy()
        if problem.warm_start is not None
        else np.zeros(n)
    )
    zc = Gs @ z
    y = np.zeros(m)

    if problem.warm_start is not None and st.polish:
        # A warm start near the optimum identifies the active set directly.
        active = zc - hs > -1e-6 * (1.0 + np.abs(hs))
        refined = _active_set_refine(Pc, Gs, hs, fc, active, st.refine_passes)
        if refined is not None:
            z_pol, y_pol = refined
            y_orig = np.maximum(y_pol * row_scale / cost_scale, 0.0)
            res_pol = kkt_residual(H, f, G, h, z_pol, y_orig)
            if res_pol <= st.eps_abs:
                return QpSolution(z_pol, y_orig, "optimal", 0, res_pol)

    rho = st.rho
    Gt = np.ascontiguousarray(Gs.T)
    GtG = Gt @ Gs
    eye_n = np.eye(n)
    factor = cho_factor(Pc + st.sigma * eye_n + rho * GtG)

    best = None
    iterations = 0
    refine_failures = 0
    next_refine = 0
    newton_done = False
    h_scale = 1.0 + _norm_inf(hs)

    def consider(z_cand, y_scaled, res):
        nonlocal best
        if best is None or res < best[2]:
            best = (z_cand, np.maximum(unscale_dual(y_scaled), 0.0), res)

    for k in range(1, st.max_iterations + 1):
        iterations = k
        rhs = st.sigma * z - fc + Gt @ (rho * zc - y)
        z_tilde = cho_solve(factor, rhs)
        zt = Gs @ z_tilde
        z = st.alpha * z_tilde + (1.0 - st.alpha) * z
        relaxed = st.alpha * zt + (1.0 - st.alpha) * zc
        zc_new = np.minimum(relaxed + y / rho, hs)
        y_new = y + rho * (relaxed - zc_new)
        delta_y = y_new - y
        y, zc = y_new, zc_new

        if k % st.check_interval != 0 and k > 5 and k != st.max_iterations:
            continue

        Gz = Gs @ z
        r_prim = _norm_inf(Gz - zc)
        r_dual = _norm_inf(Pc @ z + fc + Gt @ y)
        eps_prim = st.eps_abs + st.eps_rel * max(_norm_inf(Gz), _norm_inf(zc))
        eps_dual = st.eps_abs + st.eps_rel * max(
            _norm_inf(Pc @ z), _norm_inf(Gt @ y), _norm_inf(fc)
        )

        refine_due = k <= 5 or k >= next_refine
        if st.polish and refine_due and r_prim < 0.1 * h_scale:
            active = (y > 1e-10) | (Gz - hs > -1e-4 * (1.0 + np.abs(hs)))
            refined = _active_set_refine(Pc, Gs, hs, fc, active, st.refine_passes)
            if refined is not None:
                z_pol, y_pol = refined
                y_orig = np.maximum(unscale_dual(y_pol), 0.0)
                res_pol = kkt_residual(H, f, G, h, z_pol, y_orig)
                if res_pol <= st.eps_abs:
                    return QpSolution(z_pol, y_orig, "optimal", k, res_pol)
                consider(z_pol, y_pol, res_pol)
            # Exponential backoff after failed refinements.
            refine_failures = min(refine_failures + 1, 5)
            next_refine = k + st.check_interval * (2**refine_failures)
            if refine_failures >= 3 and k >= 100 and not newton_done:
                # Degenerate working sets defeat the refinement; fall back
                # to projected Newton on the dual.
                newton_done = True
                newton = _dual_projected_newton(
                    Pc + st.sigma * eye_n, Gs, hs, fc
                )
                if newton is not None:
                    z_nw, y_nw = newton
                    y_orig = np.maximum(unscale_dual(y_nw), 0.0)
                    res_nw = kkt_residual(H, f, G, h, z_nw, y_orig)
                    if res_nw <= st.eps_abs:
                        return QpSolution(z_nw, y_orig, "optimal", k, res_nw)
                    consider(z_nw, y_nw, res_nw)
                    active = (y_nw > 1e-10) | (
                        Gs @ z_nw - hs > -1e-6 * (1.0 + np.abs(hs))
                    )
                    refined = _active_set_refine(
                        Pc, Gs, hs, fc, active, st.refine_passes
                    )
                    if refined is not None:
                        z_pol, y_pol = refined
                        y_orig = np.maximum(unscale_dual(y_pol), 0.0)
                        res_pol = kkt_residual(H, f, G, h, z_pol, y_orig)
                        if res_pol <= st.eps_abs:
                            return QpSolution(z_pol, y_orig, "optimal", k, res_pol)
                        consider(z_pol, y_pol, res_pol)

        if r_prim <= eps_prim and r_dual <= eps_dual:
            finished = try_finish(z, y, k)
            if finished is not None:
                return finished
            consider(z, y, kkt_residual(H, f, G, h, z, np.maximum(unscale_dual(y), 0.0)))
            # Scaled convergence without original-scale KKT accuracy: the
            # iterate pins the active set, so refine right away; degenerate
            # vertices that defeat the working-set iteration go to the
            # dual projected Newton.
            if st.polish:
                active = (y > 1e-10) | (Gz - hs > -1e-5 * (1.0 + np.abs(hs)))
                refined = _active_set_refine(Pc, Gs, hs, fc, active, st.refine_passes)
                if refined is None and not newton_done:
                    newton_done = True
                    refined = _dual_projected_newton(Pc + st.sigma * eye_n, Gs, hs, fc)
                if refined is not None:
                    z_pol, y_pol = refined
                    y_orig = np.maximum(unscale_dual(y_pol), 0.0)
                    res_pol = kkt_residual(H, f, G, h, z_pol, y_orig)
                    if res_pol <= st.eps_abs:
                        return QpSolution(z_pol, y_orig, "optimal", k, res_pol)
                    consider(z_pol, y_pol, res_pol)

        # Primal infeasibility certificates: the dual-update direction, and
        # a minimum-violation probe seeded from the current iterate (at the
        # minimizer the positive residual is a Farkas ray).
        norm_dy = _norm_inf(delta_y)
        ray_s = None
        if norm_dy > st.eps_infeasible:
            candidate = np.maximum(delta_y / norm_dy, 0.0)
            if (
                hs @ candidate < -st.eps_infeasible
                and _norm_inf(Gt @ candidate) < st.eps_infeasible
            ):
                ray_s = candidate
        if ray_s is None and k >= 2 * st.check_interval and k <= 8 * st.check_interval:
            candidate = _feasibility_probe(Gs, hs, z0=z)
            if candidate is not None:
                norm_c = _norm_inf(candidate)
                if norm_c > 0.0:
                    candidate = candidate / norm_c
                    if (
                        hs @ candidate < -st.eps_infeasible
                        and _norm_inf(Gt @ candidate) < st.eps_infeasible
                    ):
                        ray_s = candidate
        if ray_s is not None:
            ray = ray_s * row_scale
            ray = ray / max(_norm_inf(ray), 1e-300)
            return QpSolution(z, ray, "infeasible", k, float("inf"))

        if st.adaptive_rho and k < st.max_iterations:
            prim_scaled = r_prim / max(_norm_inf(Gz), _norm_inf(zc), 1e-10)
            dual_scaled = r_dual / max(
                _norm_inf(Pc @ z), _norm_inf(Gt @ y), _norm_inf(fc), 1e-10
            )
            new_rho = rho * np.sqrt(max(prim_scaled, 1e-12) / max(dual_scaled, 1e-12))
            new_rho = float(np.clip(new_rho, 1e-6, 1e6))
            if new_rho > 5.0 * rho or new_rho < rho / 5.0:
                rho = new_rho
                factor = cho_factor(Pc + st.sigma * eye_n + rho * GtG)

    if best is not None:
        z_b, y_b, res_b = best
        status = "optimal" if res_b <= st.eps_abs else "max_iterations"
        return QpSolution(z_b, y_b, status, iterations, res_b)
    y_orig = np.maximum(unscale_dual(y), 0.0)
    res = kkt_residual(H, f, G, h, z, y_orig)
    return QpSolution(z, y_orig, "max_iterations", iterations, res)
