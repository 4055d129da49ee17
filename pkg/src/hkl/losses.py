"""Loss functions, their Fenchel conjugates, and the intercept optimizer.

Seven losses are supported; regression losses take real targets, the
classification losses require labels in {-1, +1}:

====================  =============================  ==========================
kind                  loss value at u                conjugate, domain
====================  =============================  ==========================
``least_squares``     (y - u)^2 / 2                  b^2/2 + b y
``svr_1norm``         (|y - u| - eps)_+              b y + |b| eps,  |b| <= 1
``svr_2norm``         (|y - u| - eps)_+^2 / 2        b^2/2 + b y + |b| eps
``huber``             quadratic/linear at |r| = eps  b^2/2 + b y,  |b| <= eps
``logistic``          log(1 + exp(-y u))             entropy form,  b y in [-1,0]
``svm_1norm``         (1 - y u)_+                    b y,  b y in [-1, 0]
``svm_2norm``         (1 - y u)_+^2 / 2              b^2/2 + b y,  b y <= 0
====================  =============================  ==========================

Conjugate values outside the stated domains are ``+inf``.  The conjugate is
strictly convex on its domain for every kind except ``svr_1norm`` and
``svm_1norm``; solvers that need a differentiable dual must add a ridge to
the Gram matrix for those two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REGRESSION_KINDS = ("least_squares", "svr_1norm", "svr_2norm", "huber")
CLASSIFICATION_KINDS = ("logistic", "svm_1norm", "svm_2norm")
ALL_KINDS = REGRESSION_KINDS + CLASSIFICATION_KINDS

#: Absolute tolerance on the 1-D stationarity residual of the intercept.
INTERCEPT_TOL = 1e-10

_INF = np.inf


@dataclass(frozen=True)
class LossModel:
    """A loss kind plus its parameter (``eps`` for the SVR/Huber tubes)."""

    kind: str = "least_squares"
    eps: float = 0.1

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("svr_1norm", "svr_2norm", "huber") and not self.eps > 0:
            raise ValueError("eps must be positive for SVR/Huber losses")

    @property
    def strictly_convex_conjugate(self) -> bool:
        return self.kind not in ("svr_1norm", "svm_1norm")

    @property
    def is_classification(self) -> bool:
        return self.kind in CLASSIFICATION_KINDS

    def check_labels(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        if self.is_classification and not np.all(np.abs(y) == 1.0):
            raise ValueError(f"{self.kind} needs labels in {{-1, +1}}")
        return y


def loss_value(model: LossModel, y, u) -> np.ndarray:
    """Elementwise loss phi_i(u_i); broadcasts over arrays."""
    y = model.check_labels(y)
    u = np.asarray(u, dtype=float)
    k, eps = model.kind, model.eps
    if k == "least_squares":
        return 0.5 * (y - u) ** 2
    if k == "svr_1norm":
        return np.maximum(np.abs(y - u) - eps, 0.0)
    if k == "svr_2norm":
        return 0.5 * np.maximum(np.abs(y - u) - eps, 0.0) ** 2
    if k == "huber":
        r = np.abs(y - u)
        return np.where(r <= eps, 0.5 * r**2, eps * r - 0.5 * eps**2)
    if k == "logistic":
        # log(1 + exp(-yu)) computed without overflow
        m = y * u
        return np.logaddexp(0.0, -m)
    if k == "svm_1norm":
        return np.maximum(1.0 - y * u, 0.0)
    if k == "svm_2norm":
        return 0.5 * np.maximum(1.0 - y * u, 0.0) ** 2
    raise AssertionError(k)


def loss_derivative(model: LossModel, y, u) -> np.ndarray:
    """d/du of the loss; for the piecewise-linear kinds, a subgradient."""
    y = model.check_labels(y)
    u = np.asarray(u, dtype=float)
    k, eps = model.kind, model.eps
    if k == "least_squares":
        return u - y
    if k == "svr_1norm":
        r = u - y
        return np.sign(r) * (np.abs(r) > eps)
    if k == "svr_2norm":
        r = u - y
        return np.sign(r) * np.maximum(np.abs(r) - eps, 0.0)
    if k == "huber":
        return np.clip(u - y, -eps, eps)
    if k == "logistic":
        m = y * u
        # -y * sigmoid(-yu), stable for large |m|
        return -y / (1.0 + np.exp(m))
    if k == "svm_1norm":
        return -y * (y * u < 1.0)
    if k == "svm_2norm":
        return -y * np.maximum(1.0 - y * u, 0.0)
    raise AssertionError(k)


def loss_second_derivative(model: LossModel, y, u) -> np.ndarray:
    """d^2/du^2 of the loss (a.e. for the piecewise-quadratic kinds)."""
    y = model.check_labels(y)
    u = np.asarray(u, dtype=float)
    k, eps = model.kind, model.eps
    if k == "least_squares":
        return np.ones_like(u)
    if k == "svr_1norm" or k == "svm_1norm":
        return np.zeros_like(u)
    if k == "svr_2norm":
        return (np.abs(u - y) > eps).astype(float)
    if k == "huber":
        return (np.abs(u - y) <= eps).astype(float)
    if k == "logistic":
        s = 1.0 / (1.0 + np.exp(y * u))
        return s * (1.0 - s)
    if k == "svm_2norm":
        return (y * u < 1.0).astype(float)
    raise AssertionError(k)


def conjugate_value(model: LossModel, y, beta) -> np.ndarray:
    """Fenchel conjugate psi_i(beta_i); ``+inf`` outside the domain."""
    y = model.check_labels(y)
    beta = np.asarray(beta, dtype=float)
    k, eps = model.kind, model.eps
    if k == "least_squares":
        return 0.5 * beta**2 + beta * y
    if k == "svr_1norm":
        out = beta * y + np.abs(beta) * eps
        return np.where(np.abs(beta) <= 1.0, out, _INF)
    if k == "svr_2norm":
        return 0.5 * beta**2 + beta * y + np.abs(beta) * eps
    if k == "huber":
        out = 0.5 * beta**2 + beta * y
        return np.where(np.abs(beta) <= eps, out, _INF)
    if k == "logistic":
        s = beta * y
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.where(
                (s > -1.0) & (s < 0.0),
                (1.0 + s) * np.log1p(s) - s * np.log(-s),
                0.0,  # entropy vanishes at both endpoints
            )
        return np.where((s >= -1.0) & (s <= 0.0), ent, _INF)
    if k == "svm_1norm":
        s = beta * y
        return np.where((s >= -1.0) & (s <= 0.0), y * beta, _INF)
    if k == "svm_2norm":
        s = beta * y
        return np.where(s <= 0.0, 0.5 * beta**2 + beta * y, _INF)
    raise AssertionError(k)


def conjugate_derivative(model: LossModel, y, beta) -> np.ndarray:
    """d/dbeta of the conjugate on its domain (Fenchel: psi'(phi'(u)) = u)."""
    y = model.check_labels(y)
    beta = np.asarray(beta, dtype=float)
    k, eps = model.kind, model.eps
    if k in ("least_squares", "huber", "svm_2norm"):
        return beta + y
    if k == "svr_2norm":
        return beta + y + eps * np.sign(beta)
    if k == "svr_1norm":
        return y + eps * np.sign(beta)
    if k == "svm_1norm":
        return y * np.ones_like(beta)
    if k == "logistic":
        s = np.clip(beta * y, -1.0 + 1e-15, -1e-15)
        return y * (np.log1p(s) - np.log(-s))
    raise AssertionError(k)


def conjugate_second_derivative(model: LossModel, y, beta) -> np.ndarray:
    """d^2/dbeta^2 of the conjugate (a.e.), used by dual Newton steps."""
    y = model.check_labels(y)
    beta = np.asarray(beta, dtype=float)
    k = model.kind
    if k in ("least_squares", "huber", "svm_2norm", "svr_2norm"):
        return np.ones_like(beta)
    if k in ("svr_1norm", "svm_1norm"):
        return np.zeros_like(beta)
    if k == "logistic":
        s = np.clip(beta * y, -1.0 + 1e-15, -1e-15)
        return 1.0 / (1.0 + s) - 1.0 / s
    raise AssertionError(k)


def conjugate_value_clipped(model: LossModel, y, beta, slack: float = 1e-9):
    """Conjugate evaluated after snapping near-boundary beta into the domain.

    Dual vectors constructed from primal gradients can land a rounding error
    outside the conjugate domain; this keeps certified gaps finite.
    """
    y = model.check_labels(y)
    beta = np.asarray(beta, dtype=float)
    k, eps = model.kind, model.eps
    if k in ("least_squares", "svr_2norm"):
        return conjugate_value(model, y, beta)
    scale = 1.0 + slack
    if k == "huber":
        beta = np.clip(beta, -eps, eps) if np.all(np.abs(beta) <= eps * scale) else beta
    elif k in ("logistic", "svm_1norm"):
        s = beta * y
        if np.all((s >= -scale) & (s <= slack)):
            beta = np.clip(s, -1.0, 0.0) * y
    elif k == "svm_2norm":
        s = beta * y
        if np.all(s <= slack):
            beta = np.minimum(s, 0.0) * y
    elif k == "svr_1norm":
        if np.all(np.abs(beta) <= scale):
            beta = np.clip(beta, -1.0, 1.0)
    return conjugate_value(model, y, beta)


def _intercept_logistic(y: np.ndarray, u: np.ndarray) -> float:
    if np.all(y > 0) or np.all(y < 0):
        raise ValueError("logistic intercept needs both classes present")
    lo, hi = -1.0, 1.0
    g = lambda b: float(np.sum(loss_derivative(LossModel("logistic"), y, u + b)))
    # expand a bracket, then safeguarded Newton
    while g(lo) > 0:
        lo *= 2.0
    while g(hi) < 0:
        hi *= 2.0
    b = 0.5 * (lo + hi)
    model = LossModel("logistic")
    for _ in range(100):
        gb = float(np.sum(loss_derivative(model, y, u + b)))
        if abs(gb) <= INTERCEPT_TOL * max(1.0, len(y)):
            return b
        if gb > 0:
            hi = b
        else:
            lo = b
        hb = float(np.sum(loss_second_derivative(model, y, u + b)))
        step = b - gb / hb if hb > 0 else 0.5 * (lo + hi)
        b = step if lo < step < hi else 0.5 * (lo + hi)
    return b


def _intercept_breakpoints(model: LossModel, y, u) -> np.ndarray:
    """Values of b where the subderivative of the 1-D objective changes slope."""
    k, eps = model.kind, model.eps
    if k in ("svr_1norm", "svr_2norm", "huber"):
        return np.concatenate([y - u - eps, y - u + eps])
    if k in ("svm_1norm", "svm_2norm"):
        return (1.0 - y * u) / y
    raise AssertionError(k)


def _intercept_step(model: LossModel, y, u) -> float:
    """Minimizer for losses with a step subderivative (1-norm SVM/SVR).

    The derivative of the 1-D objective is constant on each open segment
    between breakpoints; the minimizer is a breakpoint where it changes sign,
    or any point of a zero-derivative segment.
    """
    bs = np.unique(_intercept_breakpoints(model, y, u))
    g = lambda b: float(np.sum(loss_derivative(model, y, u + b)))
    reps = np.concatenate([[bs[0] - 1.0], 0.5 * (bs[:-1] + bs[1:]), [bs[-1] + 1.0]])
    gs = np.array([g(t) for t in reps])
    nonneg = np.nonzero(gs >= 0.0)[0]
    if len(nonneg) == 0:
        # derivative negative on every segment: loss is zero past the last
        # breakpoint (convexity forces the derivative to reach 0 from below)
        return float(reps[-1])
    s = int(nonneg[0])
    if gs[s] == 0.0:
        return float(reps[s])
    if s == 0:
        raise ValueError("intercept objective unbounded below (degenerate data)")
    return float(bs[s - 1])


def _intercept_piecewise(model: LossModel, y, u) -> float:
    """Exact minimizer over b by sorting subgradient breakpoints."""
    if model.kind in ("svm_1norm", "svr_1norm"):
        return _intercept_step(model, y, u)
    bs = np.unique(_intercept_breakpoints(model, y, u))
    g = lambda b: float(np.sum(loss_derivative(model, y, u + b)))
    gvals = np.array([g(b) for b in bs])
    if gvals[0] >= 0.0:
        glo = g(bs[0] - 1.0)
        if glo >= 0:
            if glo > 0:
                raise ValueError("intercept objective unbounded below (degenerate data)")
            return float(bs[0] - 1.0)  # flat to the left of all breakpoints
        lo, hi, ghi = bs[0] - 1.0, bs[0], gvals[0]
    elif gvals[-1] <= 0.0:
        ghi = g(bs[-1] + 1.0)
        if ghi <= 0:
            if ghi < 0:
                raise ValueError("intercept objective unbounded below (degenerate data)")
            return float(bs[-1] + 1.0)
        lo, hi, glo = bs[-1], bs[-1] + 1.0, gvals[-1]
    else:
        i = int(np.searchsorted(gvals >= 0.0, True))
        lo, hi, glo, ghi = bs[i - 1], bs[i], gvals[i - 1], gvals[i]
    if glo == 0.0 and ghi == 0.0:
        return float(0.5 * (lo + hi))  # flat segment: any point is optimal
    # g is continuous piecewise linear on [lo, hi]: linear interpolation is exact
    return float(lo - glo * (hi - lo) / (ghi - glo))


def intercept(model: LossModel, y, u) -> float:
    """Minimizer b* of the averaged loss ``mean(phi_i(u_i + b))``."""
    y = model.check_labels(y)
    u = np.asarray(u, dtype=float)
    if u.shape != y.shape:
        raise ValueError("y and u must have the same length")
    if not np.all(np.isfinite(u)):
        raise ValueError("predictions must be finite")
    if model.kind == "least_squares":
        return float(np.mean(y - u))
    if model.kind == "logistic":
        return _intercept_logistic(y, u)
    return _intercept_piecewise(model, y, u)
