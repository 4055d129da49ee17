"""Loss values, Fenchel conjugates, and the intercept optimizer."""

import numpy as np
import pytest

from hkl.losses import (
    ALL_KINDS,
    LossModel,
    conjugate_value,
    intercept,
    loss_derivative,
    loss_value,
)


def make_model(kind):
    return LossModel(kind, eps=0.3) if kind in ("svr_1norm", "svr_2norm", "huber") else LossModel(kind)


def sample_y(kind, rng, n=1):
    if LossModel(kind).is_classification:
        return rng.choice([-1.0, 1.0], size=n)
    return rng.normal(size=n)


class TestValues:
    def test_least_squares(self):
        m = LossModel("least_squares")
        assert loss_value(m, 0.0, 1.0) == pytest.approx(0.5)

    def test_logistic_at_zero(self):
        m = LossModel("logistic")
        assert loss_value(m, 1.0, 0.0) == pytest.approx(np.log(2.0))

    def test_svr1_inside_tube(self):
        m = LossModel("svr_1norm", eps=0.1)
        assert loss_value(m, 0.0, 0.05) == 0.0

    def test_huber_regimes(self):
        m = LossModel("huber", eps=1.0)
        assert loss_value(m, 0.0, 0.5) == pytest.approx(0.125)
        assert loss_value(m, 0.0, 2.0) == pytest.approx(2.0 - 0.5)

    def test_classification_label_check(self):
        with pytest.raises(ValueError):
            loss_value(LossModel("svm_1norm"), 0.5, 1.0)


class TestConjugates:
    def test_least_squares_value(self):
        assert conjugate_value(LossModel("least_squares"), 1.0, 1.0) == pytest.approx(1.5)

    def test_logistic_interior(self):
        got = conjugate_value(LossModel("logistic"), 1.0, -0.5)
        assert got == pytest.approx(-np.log(2.0))

    def test_logistic_endpoints(self):
        m = LossModel("logistic")
        assert conjugate_value(m, 1.0, 0.0) == 0.0
        assert conjugate_value(m, 1.0, -1.0) == 0.0
        assert conjugate_value(m, 1.0, 0.1) == np.inf

    def test_svm1_domain(self):
        assert conjugate_value(LossModel("svm_1norm"), 1.0, 0.5) == np.inf
        assert conjugate_value(LossModel("svm_1norm"), 1.0, -0.5) == pytest.approx(-0.5)

    def test_strict_convexity_flags(self):
        strict = {k for k in ALL_KINDS if LossModel(k, eps=0.3).strictly_convex_conjugate}
        assert strict == {"least_squares", "logistic", "svr_2norm", "svm_2norm", "huber"}


class TestBiconjugacy:
    """max over a dense beta grid of u*beta - psi(beta) must reproduce phi(u)."""

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_biconjugate_recovers_loss(self, kind):
        model = make_model(kind)
        rng = np.random.default_rng(7)
        y = float(sample_y(kind, rng)[0])
        betas = np.linspace(-3.0, 3.0, 60001)
        psi = conjugate_value(model, y, betas)
        finite = np.isfinite(psi)
        grid_tol = 5e-4  # spacing-limited accuracy of the grid maximum
        for u in np.linspace(-2.0, 2.0, 11):
            recovered = np.max(u * betas[finite] - psi[finite])
            target = float(loss_value(model, y, u))
            assert recovered == pytest.approx(target, abs=grid_tol)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_fenchel_young(self, kind):
        model = make_model(kind)
        rng = np.random.default_rng(8)
        y = float(sample_y(kind, rng)[0])
        for _ in range(200):
            u = rng.uniform(-2, 2)
            beta = rng.uniform(-2, 2)
            psi = float(conjugate_value(model, y, beta))
            if np.isfinite(psi):
                assert u * beta <= float(loss_value(model, y, u)) + psi + 1e-12

    @pytest.mark.parametrize(
        "kind", ["least_squares", "logistic", "svr_2norm", "svm_2norm", "huber"]
    )
    def test_fenchel_young_equality_at_gradient(self, kind):
        model = make_model(kind)
        rng = np.random.default_rng(9)
        y = float(sample_y(kind, rng)[0])
        for u in rng.uniform(-2, 2, size=50):
            beta = float(loss_derivative(model, y, u))
            lhs = u * beta
            rhs = float(loss_value(model, y, u)) + float(conjugate_value(model, y, beta))
            assert lhs == pytest.approx(rhs, abs=1e-9)


def intercept_oracle(model, y, u):
    """Dense grid plus golden-section refinement on the 1-D objective."""
    obj = lambda b: float(np.mean(loss_value(model, y, u + b)))
    lo = float(np.min(y - u)) - 3 * getattr(model, "eps", 1.0) - 3.0
    hi = float(np.max(y - u)) + 3 * getattr(model, "eps", 1.0) + 3.0
    grid = np.linspace(lo, hi, 4001)
    k = int(np.argmin([obj(b) for b in grid]))
    a, c = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    phi = (np.sqrt(5) - 1) / 2
    for _ in range(200):
        b1 = c - phi * (c - a)
        b2 = a + phi * (c - a)
        if obj(b1) <= obj(b2):
            c = b2
        else:
            a = b1
    return 0.5 * (a + c)


class TestIntercept:
    def test_least_squares_closed_form(self):
        m = LossModel("least_squares")
        assert intercept(m, np.array([1.0, 3.0]), np.zeros(2)) == pytest.approx(2.0)

    def test_logistic_symmetry(self):
        m = LossModel("logistic")
        y = np.array([1.0, -1.0])
        assert intercept(m, y, np.zeros(2)) == pytest.approx(0.0, abs=1e-9)

    def test_huber_matches_grid_oracle(self):
        m = LossModel("huber", eps=1.0)
        rng = np.random.default_rng(10)
        y = rng.normal(size=20)
        u = rng.normal(size=20)
        got = intercept(m, y, u)
        want = intercept_oracle(m, y, u)
        assert got == pytest.approx(want, abs=1e-6)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_stationarity(self, kind):
        model = make_model(kind)
        rng = np.random.default_rng(11)
        y = sample_y(kind, rng, n=25)
        u = rng.normal(size=25)
        b = intercept(model, y, u)
        obj = lambda t: float(np.mean(loss_value(model, y, u + t)))
        eps = 1e-6
        assert obj(b) <= obj(b - eps) + 1e-10
        assert obj(b) <= obj(b + eps) + 1e-10

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_matches_oracle_random(self, kind):
        model = make_model(kind)
        rng = np.random.default_rng(12)
        y = sample_y(kind, rng, n=15)
        u = rng.normal(size=15)
        got = intercept(model, y, u)
        want = intercept_oracle(model, y, u)
        obj = lambda t: float(np.mean(loss_value(model, y, u + t)))
        # objectives must agree even if the minimizer is non-unique
        assert obj(got) == pytest.approx(obj(want), abs=1e-9)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            intercept(LossModel("least_squares"), np.array([1.0, np.nan]), np.zeros(2))
