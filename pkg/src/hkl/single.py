"""Single-kernel learning in the dual.

Solves, for one positive semidefinite Gram matrix K,

    min_{f, b}  mean_i loss(y_i, f_i + b) + (lam/2) ||f||^2,

through its dual over zero-sum vectors alpha,

    max_{1^T alpha = 0}  -mean_i psi_i(-n lam alpha_i) - (lam/2) alpha' Kc alpha,

with Kc the centered Gram matrix.  The primal candidate attached to a feasible
alpha is f = K alpha with intercept b*(K alpha), and the duality gap of the
pair is the optimality certificate used everywhere downstream.

Least squares has a closed form (one SPD system); the other strictly-convex
conjugate losses are solved by convex minimization of the primal in the
representer coefficients, from which the optimal dual vector is recovered as
alpha = -loss'(u)/(n lam).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .losses import (
    LossModel,
    conjugate_derivative,
    conjugate_second_derivative,
    conjugate_value_clipped,
    intercept,
    loss_derivative,
    loss_second_derivative,
    loss_value,
)

FEASIBILITY_TOL = 1e-12


@dataclass
class DualSolution:
    """Converged dual vector with both objective values and their gap."""

    alpha: np.ndarray
    b: float
    primal_obj: float
    dual_obj: float
    gap: float
    iterations: int = 0
    converged: bool = True


def _check_inputs(K: np.ndarray, y: np.ndarray, lam: float):
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if K.shape != (n, n):
        raise ValueError(f"K must be ({n}, {n})")
    if n < 2:
        raise ValueError("need n >= 2 samples")
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite inputs")
    if not lam > 0:
        raise ValueError("lam must be positive")
    return K, y, n


def _spd_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with trace-scaled jitter escalation on failure."""
    scale = max(np.trace(M) / len(M), 1.0)
    for jitter in (0.0, 1e-12, 1e-10, 1e-8):
        try:
            c, low = scipy.linalg.cho_factor(
                M + jitter * scale * np.eye(len(M)), lower=True
            )
            return scipy.linalg.cho_solve((c, low), rhs)
        except scipy.linalg.LinAlgError:
            continue
    raise scipy.linalg.LinAlgError("SPD solve failed beyond jitter tolerance")


def _objectives(K, y, alpha, lam, loss: LossModel):
    """Primal/dual objective pair for a feasible alpha (1'alpha = 0)."""
    n = len(y)
    u = K @ alpha
    b = intercept(loss, y, u)
    quad = float(alpha @ u)  # equals the centered quadratic form when 1'a = 0
    primal = float(np.mean(loss_value(loss, y, u + b))) + 0.5 * lam * quad
    psi = conjugate_value_clipped(loss, y, -n * lam * alpha)
    dual = -float(np.mean(psi)) - 0.5 * lam * quad
    return primal, dual, b


def gap_kernel(K, y, alpha, lam: float, loss: LossModel) -> float:
    """Duality gap of a feasible alpha for the single-kernel problem.

    mean_i phi_i((K a)_i + b*(K a)) + lam a' Kc a + mean_i psi_i(-n lam a_i);
    nonnegative, zero exactly at the optimum.
    """
    K, y, n = _check_inputs(K, y, lam)
    alpha = np.asarray(alpha, dtype=float)
    if abs(float(np.sum(alpha))) > 1e-8 * max(1.0, float(np.abs(alpha).sum())):
        raise ValueError("alpha must satisfy 1'alpha = 0")
    primal, dual, _ = _objectives(K, y, alpha, lam, loss)
    return primal - dual


def solve_least_squares(K, y, lam: float) -> DualSolution:
    """Closed-form dual solution for the square loss.

    alpha solves (Kc + n lam I) alpha = y - mean(y); the solution stays in the
    zero-sum subspace because Kc annihilates constants.
    """
    K, y, n = _check_inputs(K, y, lam)
    Kc = K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()
    rhs = y - y.mean()
    alpha = _spd_solve(Kc + n * lam * np.eye(n), rhs)
    alpha -= alpha.mean()  # exact feasibility against rounding
    loss = LossModel("least_squares")
    primal, dual, b = _objectives(K, y, alpha, lam, loss)
    return DualSolution(alpha, b, primal, dual, primal - dual)


def solve_smooth_dual(
    K,
    y,
    lam: float,
    loss: LossModel,
    tol: float = 1e-8,
    max_iter: int = 200,
    alpha0: np.ndarray | None = None,
) -> DualSolution:
    """Dual solution for any loss with a strictly convex conjugate.

    Minimizes the convex primal in representer coordinates (alpha, b) with
    quasi-Newton steps, polished by Newton-CG; the optimal dual vector is
    alpha = -loss'(u)/(n lam), which is feasible because b is optimal.
    """
    K, y, n = _check_inputs(K, y, lam)
    if not loss.strictly_convex_conjugate:
        raise ValueError(
            f"{loss.kind} has a non-strictly-convex conjugate; add a ridge to "
            "the Gram matrix first"
        )

    def split(x):
        return x[:n], x[n]

    def fun_grad(x):
        a, b = split(x)
        Ka = K @ a
        u = Ka + b
        phi = loss_value(loss, y, u)
        dphi = loss_derivative(loss, y, u)
        val = float(np.mean(phi)) + 0.5 * lam * float(a @ Ka)
        ga = K @ (dphi / n + lam * a)
        gb = float(np.mean(dphi))
        return val, np.concatenate([ga, [gb]])

    def hessp(x, v):
        a, b = split(x)
        u = K @ a + b
        d2 = loss_second_derivative(loss, y, u)
        Kva = K @ v[:n]
        w = d2 * (Kva + v[n]) / n
        return np.concatenate([K @ w + lam * Kva, [float(np.sum(w))]])

    Kc = K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()

    def dual_newton_refine(alpha, rounds=3):
        """Damped Newton steps on the concave dual over the zero-sum subspace.

        The dual gradient is lam psi'(-n lam a) - lam Kc a and the negated
        Hessian n lam^2 diag(psi'') + lam Kc; steps are accepted only on dual
        improvement, which keeps the piecewise-quadratic conjugates safe.
        """
        best_a = alpha
        _, best_dual, _ = _objectives(K, y, best_a, lam, loss)
        for _ in range(rounds):
            beta = -n * lam * best_a
            grad = lam * conjugate_derivative(loss, y, beta) - lam * (Kc @ best_a)
            psi2 = np.maximum(conjugate_second_derivative(loss, y, beta), 1e-10)
            H = n * lam**2 * np.diag(psi2) + lam * Kc
            step = _spd_solve(H, grad)
            step -= step.mean()
            t, improved = 1.0, False
            for _ in range(25):
                cand = best_a + t * step
                _, dual_c, _ = _objectives(K, y, cand, lam, loss)
                if np.isfinite(dual_c) and dual_c > best_dual:
                    best_a, best_dual, improved = cand, dual_c, True
                    break
                t *= 0.5
            if not improved:
                break
        return best_a

    if alpha0 is not None and len(alpha0) == n:
        x0 = np.concatenate([alpha0, [intercept(loss, y, K @ alpha0)]])
    else:
        x0 = np.concatenate([np.zeros(n), [intercept(loss, y, np.zeros(n))]])

    best = None
    iterations = 0
    x = x0
    for round_ in range(4):
        res = scipy.optimize.minimize(
            fun_grad,
            x,
            jac=True,
            method="L-BFGS-B" if round_ == 0 else "Newton-CG",
            hessp=None if round_ == 0 else hessp,
            options=(
                {"maxiter": max_iter, "ftol": 1e-16, "gtol": 1e-12}
                if round_ == 0
                else {"maxiter": max_iter // 2, "xtol": 1e-14}
            ),
        )
        x = res.x
        iterations += int(res.nit)
        a, b = split(x)
        u = K @ a + b
        alpha = -loss_derivative(loss, y, u) / (n * lam)
        alpha -= alpha.mean()
        alpha = dual_newton_refine(alpha)
        primal, dual, b_out = _objectives(K, y, alpha, lam, loss)
        cand = DualSolution(alpha, b_out, primal, dual, primal - dual, iterations)
        if best is None or cand.gap < best.gap:
            best = cand
        # always run at least one Newton polish after the quasi-Newton pass
        if round_ >= 1 and best.gap <= tol * (1.0 + abs(best.primal_obj)):
            best.converged = True
            return best
    best.converged = False
    return best


def solve(
    K,
    y,
    lam: float,
    loss: LossModel,
    tol: float = 1e-8,
    max_iter: int = 200,
    alpha0: np.ndarray | None = None,
) -> DualSolution:
    """Dispatch: closed form for least squares, generic path otherwise."""
    if loss.kind == "least_squares":
        return solve_least_squares(K, y, lam)
    return solve_smooth_dual(K, y, lam, loss, tol=tol, max_iter=max_iter, alpha0=alpha0)
