"""Variational kernel-weight machinery and the reduced-problem solver.

The DAG norm admits the variational form

    Omega(f)^2 = min_{eta in H} sum_w (sum_{v in A(w)} eta_v^{-1}) ||f_w||^2,
    H = {eta >= 0, sum_v d_v^2 eta_v <= 1},

with per-kernel weights zeta_w(eta)^{-1} = sum_{v in A(w)} eta_v^{-1} (zero as
soon as one ancestor weight vanishes).  Fitting on an active set W therefore
means minimizing over eta the optimal value B of the single-kernel problem
with kernel sum_w zeta_w(eta) K_w; B is made differentiable by mixing eta
with a small uniform component, and is minimized by projected gradient with
Armijo backtracking.

The duality gap of the eta-subproblem is certified through feasible dual
candidates kappa (rows indexed by vertices, columns summing to one over each
ancestor set): both the closed-form candidate d_v / sum_{A(w)} d and the
eta-induced candidate zeta_w / eta_v are evaluated and the smaller bound wins;
the second one vanishes at the optimum, the first one is what survives on
vertices with zero weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dag import SubDag
from .losses import LossModel
from .single import DualSolution, solve


def ancestor_matrix(sub: SubDag) -> np.ndarray:
    """Boolean (m, m) matrix with A[w, v] = 1 iff v is an ancestor of w."""
    m = len(sub)
    A = np.zeros((m, m), dtype=bool)
    for w, anc in enumerate(sub.anc):
        A[w, anc] = True
    return A


def zeta_from_eta(sub: SubDag, eta: np.ndarray) -> np.ndarray:
    """zeta_w = (sum of 1/eta_v over ancestors v of w)^{-1}, zero-propagating."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0):
        raise ValueError("eta must be nonnegative")
    A = ancestor_matrix(sub).astype(float)
    pos = eta > 0.0
    inv = np.zeros_like(eta)
    inv[pos] = 1.0 / eta[pos]
    sums = A @ inv
    dead = (A @ (~pos).astype(float)) > 0.0  # some ancestor has eta = 0
    zeta = np.zeros_like(eta)
    alive = ~dead
    zeta[alive] = 1.0 / sums[alive]
    return zeta


def optimal_eta_given_f(norms: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Minimizing eta for fixed group norms ||f_{D(v)}||.

    eta_v = (||f_{D(v)}|| / d_v) / sum_w d_w ||f_{D(w)}||, which saturates the
    budget and turns the quadratic upper bound into the exact squared norm.
    """
    norms = np.asarray(norms, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(norms < 0):
        raise ValueError("norms must be nonnegative")
    total = float(np.sum(d * norms))
    if total <= 0.0:
        warnings.warn("all group norms are zero; returning the uniform feasible eta")
        return d**-2.0 / len(d)
    return (norms / d) / total


def project_onto_H(eta_raw: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {eta >= 0, sum d_v^2 eta_v <= 1}.

    Clipping the negatives either lands inside the budget (then it is the
    projection) or the budget is active and the solution is
    max(0, eta - theta d^2) with theta found by an exact sort-based scan.
    """
    eta_raw = np.asarray(eta_raw, dtype=float)
    if not np.all(np.isfinite(eta_raw)):
        raise ValueError("eta must be finite")
    a = np.asarray(d, dtype=float) ** 2
    x = np.maximum(eta_raw, 0.0)
    if float(a @ x) <= 1.0:
        return x
    ratios = eta_raw / a
    order = np.argsort(ratios)[::-1]
    eta_s, a_s = eta_raw[order], a[order]
    thetas = (np.cumsum(a_s * eta_s) - 1.0) / np.cumsum(a_s * a_s)
    r_sorted = ratios[order]
    # support size = largest k whose top-k coordinates stay positive
    k = int(np.nonzero(r_sorted > thetas)[0][-1])
    return np.maximum(eta_raw - thetas[k] * a, 0.0)


def gap_weights_upper_bound(
    a_quad: np.ndarray, eta: np.ndarray, sub: SubDag
) -> float:
    """Upper bound on the duality gap of max_{eta in H} sum_w zeta_w(eta) a_w.

    Evaluates the dual objective max_v d_v^{-2} sum_{w in D(v)} kappa_vw^2 a_w
    at two feasible candidates and subtracts the primal value at eta.  Always
    an upper bound on the true gap; tight (up to smoothing) at the optimum.
    """
    a_quad = np.asarray(a_quad, dtype=float)
    eta = np.asarray(eta, dtype=float)
    d = sub.d_array()
    zeta = zeta_from_eta(sub, eta)
    primal = float(zeta @ a_quad)

    # closed-form candidate: kappa_vw = d_v / S_w with S_w = sum_{A(w)} d
    S = np.array([d[anc].sum() for anc in sub.anc])
    ratios = a_quad / S**2
    bound = max(float(sum(ratios[wi] for wi in desc)) for desc in sub.desc)

    # eta-induced candidate (feasible only when every eta_v > 0)
    if np.all(eta > 0.0):
        z2a = zeta**2 * a_quad
        bound_eta = max(
            float(sum(z2a[wi] for wi in desc)) / (d[v] ** 2 * eta[v] ** 2)
            for v, desc in enumerate(sub.desc)
        )
        bound = min(bound, bound_eta)
    return bound - primal


@dataclass
class BEvaluation:
    """One evaluation of the smoothed objective eta -> B(zeta(eta_tilde))."""

    value: float  # dual optimal value (the function Danskin differentiates)
    grad: np.ndarray
    eta_tilde: np.ndarray
    zeta: np.ndarray
    sol: DualSolution
    a_quad: np.ndarray
    upper_value: float  # primal value; equals `value` at exact inner solves


def evaluate_smoothed_b(
    grams: list[np.ndarray],
    y: np.ndarray,
    lam: float,
    loss: LossModel,
    sub: SubDag,
    eta: np.ndarray,
    eps_smooth: float = 1e-3,
    inner_tol: float = 1e-9,
    alpha0: np.ndarray | None = None,
    ridge: float = 0.0,
) -> BEvaluation:
    """Value and gradient of the smoothed reduced objective at eta.

    The gradient comes from the chain rule at the inner optimum:
    dB/dzeta_w = -(lam/2) alpha' Kc_w alpha and
    dzeta_w/deta_v = zeta_w^2 / eta_tilde_v^2 for ancestors v of w, scaled by
    the smoothing factor (1 - eps).
    """
    m = len(sub)
    y = np.asarray(y, dtype=float)
    n = len(y)
    d = sub.d_array()
    eta = np.asarray(eta, dtype=float)
    eta_t = (1.0 - eps_smooth) * eta + (eps_smooth / m) * d**-2.0
    zeta = zeta_from_eta(sub, eta_t)
    Kz = np.zeros((n, n))
    for zw, Kw in zip(zeta, grams):
        if zw > 0.0:
            Kz += zw * Kw
    if ridge > 0.0:
        Kz = Kz + ridge * np.eye(n)
    sol = solve(Kz, y, lam, loss, tol=inner_tol, alpha0=alpha0)
    a_quad = np.array([float(sol.alpha @ (Kw @ sol.alpha)) for Kw in grams])
    z2a = zeta**2 * a_quad
    grad = (
        -np.array([sum(z2a[wi] for wi in desc) for desc in sub.desc])
        * (1.0 - eps_smooth)
        * 0.5
        * lam
        / eta_t**2
    )
    return BEvaluation(
        value=sol.dual_obj,
        grad=grad,
        eta_tilde=eta_t,
        zeta=zeta,
        sol=sol,
        a_quad=a_quad,
        upper_value=sol.primal_obj,
    )


@dataclass
class ReducedSolution:
    """Converged reduced problem on an active set."""

    eta: np.ndarray  # optimization variable (before smoothing)
    eta_tilde: np.ndarray  # smoothed weights actually defining the kernel
    zeta: np.ndarray  # zeta(eta_tilde)
    sol: DualSolution  # inner single-kernel solution
    a_quad: np.ndarray  # alpha' K_w alpha per node
    gap_bound: float  # certified total gap of the reduced problem
    objective: float  # B value at the solution
    n_inner: int = 0
    n_outer: int = 0
    converged: bool = True

    @property
    def omega_squared(self) -> float:
        return float(self.zeta @ self.a_quad)


def minimize_B(
    grams: list[np.ndarray],
    y: np.ndarray,
    lam: float,
    loss: LossModel,
    sub: SubDag,
    eps_smooth: float = 1e-3,
    tol: float = 1e-3,
    max_iter: int = 300,
    eta0: np.ndarray | None = None,
    alpha0: np.ndarray | None = None,
    inner_tol: float = 1e-9,
    armijo: float = 1e-4,
) -> ReducedSolution:
    """Minimize eta -> B(zeta((1-eps) eta + eps/m d^{-2})) over H.

    ``grams`` are the raw node Gram matrices aligned with ``sub``.  Terminates
    when the certified reduced gap (inner kernel gap plus lam/2 times the
    weight-subproblem gap bound) drops below ``tol``.
    """
    m = len(sub)
    if len(grams) != m:
        raise ValueError("one Gram matrix per restriction vertex required")
    y = np.asarray(y, dtype=float)
    n = len(y)
    d = sub.d_array()

    ridge = 0.0
    if not loss.strictly_convex_conjugate:
        ridge = 1e-6 * n * lam  # smooths the dual; keeps B differentiable

    eta = np.asarray(eta0, dtype=float) if eta0 is not None else d**-2.0 / m
    eta = project_onto_H(eta, d)

    n_inner = 0

    def evaluate(eta_vec, warm):
        nonlocal n_inner
        n_inner += 1
        return evaluate_smoothed_b(
            grams, y, lam, loss, sub, eta_vec,
            eps_smooth=eps_smooth, inner_tol=inner_tol, alpha0=warm, ridge=ridge,
        )

    ev = evaluate(eta, alpha0)
    J = ev.upper_value
    # initial step: largest coordinate moves ~30% of its budget share, which
    # keeps the first projected trial in the interior regardless of how the
    # depth weights skew the gradient scale
    gd = np.abs(ev.grad) * d**2
    step = 0.3 / gd.max() if gd.max() > 0 else 1.0
    n_outer = 0
    converged = False
    gap_bound = np.inf

    for n_outer in range(1, max_iter + 1):
        gw = gap_weights_upper_bound(ev.a_quad, ev.eta_tilde, sub)
        gap_bound = ev.sol.gap + 0.5 * lam * max(gw, 0.0)
        if gap_bound <= tol:
            converged = True
            break

        # variational jump: the closed-form optimal eta for the current
        # per-group norms; a plain fixed-point step that is exact at the
        # solution, accepted only when it does not increase the objective
        z2a = ev.zeta**2 * ev.a_quad
        group = np.sqrt(np.array([sum(z2a[wi] for wi in desc) for desc in sub.desc]))
        if group.sum() > 0:
            jump = optimal_eta_given_f(group, d)
            j_ev = evaluate(jump, ev.sol.alpha)
            if j_ev.upper_value < J - 1e-12 * max(1.0, abs(J)):
                eta, ev, J = jump, j_ev, j_ev.upper_value
                continue  # strict progress; let the next round try again

        accepted = False
        for _ in range(40):
            trial = project_onto_H(eta - step * ev.grad, d)
            decrease = float(ev.grad @ (eta - trial))
            if decrease <= 1e-18 * max(1.0, abs(J)):
                break  # projected-gradient stationary point
            t_ev = evaluate(trial, ev.sol.alpha)
            if t_ev.upper_value <= J - armijo * decrease:
                eta, ev, J = trial, t_ev, t_ev.upper_value
                accepted = True
                step *= 2.0
                break
            step *= 0.5
        if not accepted:
            # no descent direction left at this resolution; report the gap as is
            gw = gap_weights_upper_bound(ev.a_quad, ev.eta_tilde, sub)
            gap_bound = ev.sol.gap + 0.5 * lam * max(gw, 0.0)
            converged = gap_bound <= tol
            break

    return ReducedSolution(
        eta=eta,
        eta_tilde=ev.eta_tilde,
        zeta=ev.zeta,
        sol=ev.sol,
        a_quad=ev.a_quad,
        gap_bound=float(gap_bound),
        objective=float(J),
        n_inner=n_inner,
        n_outer=n_outer,
        converged=converged,
    )
