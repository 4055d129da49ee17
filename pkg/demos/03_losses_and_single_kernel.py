"""Losses, Fenchel conjugates, and the single-kernel dual solver.

Every loss is paired with its convex conjugate; the solver certifies its
answer with the duality gap built from that pair.  The intercept is handled
as a separate unregularized 1-D minimization.
"""

import numpy as np

from hkl import LossModel, conjugate_value, gap_kernel, intercept, loss_value
from hkl.single import solve, solve_least_squares

# Conjugate pairs: phi(u) + psi(beta) >= u * beta everywhere, with equality
# exactly when beta is the slope of phi at u.
for kind in ("least_squares", "huber", "logistic", "svm_2norm"):
    model = LossModel(kind, eps=0.5)
    y = 1.0
    u = 0.4
    phi = float(loss_value(model, y, u))
    print(f"{kind:>14}: phi({u}) = {phi:.4f}, "
          f"psi(-0.3) = {float(conjugate_value(model, y, -0.3)):.4f}")

# Intercepts: closed form for squares, breakpoint scans for the piecewise
# losses, safeguarded Newton for logistic.
rng = np.random.default_rng(1)
y = rng.normal(size=9)
u = rng.normal(size=9)
for kind in ("least_squares", "huber", "svr_1norm"):
    b = intercept(LossModel(kind, eps=0.3), y, u)
    print(f"intercept[{kind}] = {b:+.4f}")

# A single-kernel fit with its certificate.  The kernel here is a Gaussian
# Gram on scalar inputs; the duality gap at the returned alpha is ~1e-16.
x = np.linspace(-2, 2, 40)
K = np.exp(-0.5 * np.subtract.outer(x, x) ** 2)
y = np.sin(2 * x) + 0.1 * rng.normal(size=40)
lam = 1e-2
sol = solve_least_squares(K, y, lam)
print(f"\nleast squares: primal {sol.primal_obj:.6f}, dual {sol.dual_obj:.6f}, "
      f"gap {sol.gap:.2e}")

# Any feasible alpha yields a certificate; random vectors are far from
# optimal and the gap says by how much.
a = rng.normal(size=40)
a -= a.mean()
print(f"gap at a random feasible alpha: "
      f"{gap_kernel(K, y, a, lam, LossModel('least_squares')):.4f}")

# The same machinery runs the logistic dual (strictly convex conjugate).
yc = np.sign(x + 0.1 * rng.normal(size=40))
sol_log = solve(K, yc, 5e-3, LossModel("logistic"))
acc = np.mean(np.sign(K @ sol_log.alpha + sol_log.b) == yc)
print(f"logistic: gap {sol_log.gap:.2e}, train accuracy {acc:.2%}")
