"""Per-dimension kernel decompositions and Gram-matrix assembly.

Every family decomposes a one-dimensional kernel into ``q + 1`` blocks
``k_{i0}, ..., k_{iq}`` whose sum has a closed form, so that the full
p-dimensional kernel is a product of sums,

    k(x, x') = prod_i sum_j k_{ij}(x_i, x_i'),

i.e. a sum of ``(q+1)^p`` node kernels ``K_v = hadamard_i k_{i v_i}`` indexed
by the directed grid.  Families:

* ``polynomial``:  k_{ij} = C(q, j) (x x')^j, summing to (1 + x x')^q.
* ``gauss_hermite``:  the Gauss-Hermite eigen-decomposition of
  exp(-b (x-x')^2) for a normal design with variance 1/(4a); the first q
  blocks are rank-one Hermite terms, the last is the analytic tail obtained
  by differencing, so the blocks sum to the Gaussian exactly.
* ``all_subset_gaussian``:  q = 1 with blocks {1, alpha exp(-b (x-x')^2)};
  node kernels are alpha^{|J|} exp(-b ||x_J - x_J'||^2) over subsets J.
* ``spline``:  q = 2 with {1, x x', cubic spline block}, parameter free.
* ``hermite``:  geometrically weighted Hermite products
  alpha^j/(2^j j!) H_j(x) H_j(x') with the Mehler closed form as total.

Data columns are standardized (zero mean, unit variance) before kernel
evaluation; the constants are stored so test points go through the same map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FAMILY_NAMES = (
    "polynomial",
    "gauss_hermite",
    "all_subset_gaussian",
    "spline",
    "hermite",
)


def center(K: np.ndarray) -> np.ndarray:
    """Centered Gram matrix P K P with P = I - 11^T/n.

    Removes the constant component on both sides; the result annihilates the
    all-ones vector and agrees with K in any quadratic form over zero-sum
    vectors.
    """
    K = np.asarray(K, dtype=float)
    row = K.mean(axis=0, keepdims=True)
    col = K.mean(axis=1, keepdims=True)
    return K - row - col + K.mean()


def center_cross(K_cross: np.ndarray, K_train: np.ndarray) -> np.ndarray:
    """Center an (m, n) test-train block using training-side means only."""
    K_cross = np.asarray(K_cross, dtype=float)
    col = K_train.mean(axis=0, keepdims=True)  # (1, n)
    row = K_cross.mean(axis=1, keepdims=True)  # (m, 1)
    return K_cross - row - col + K_train.mean()


def _scaled_hermite_features(u: np.ndarray, rho: float, jmax: int) -> list[np.ndarray]:
    """chi_j(u) = rho^{j/2} H_j(u) / sqrt(2^j j!) for j = 0..jmax, stably.

    The three-term Hermite recurrence is rescaled so that the products
    chi_j(u) chi_j(v) equal the Mehler series terms rho^j H_j H_j / (2^j j!)
    without overflow for large j.
    """
    out = [np.ones_like(u)]
    if jmax >= 1:
        out.append(u * math.sqrt(2.0 * rho))
    for j in range(1, jmax):
        nxt = u * math.sqrt(2.0 * rho / (j + 1)) * out[j] - rho * math.sqrt(
            j / (j + 1.0)
        ) * out[j - 1]
        out.append(nxt)
    return out


class KernelFamily:
    """Base class: per-dimension blocks plus their closed-form sum."""

    name: str = ""

    @property
    def n_orders(self) -> int:
        """Number of blocks per dimension, q + 1."""
        raise NotImplementedError

    def blocks_1d(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """All blocks for one dimension, shape (q+1, len(x), len(z))."""
        raise NotImplementedError

    def full_1d(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Closed form of sum_j k_{ij}(x, z)."""
        raise NotImplementedError

    def block_is_all_ones(self, j: int) -> bool:
        """True if block j is the constant kernel 1 (lets products skip it)."""
        return False

    def params(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PolynomialFamily(KernelFamily):
    q: int = 3
    name: str = field(default="polynomial", init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("polynomial order q must be >= 1")

    @property
    def n_orders(self) -> int:
        return self.q + 1

    def blocks_1d(self, x, z):
        xz = np.outer(x, z)
        return np.stack([math.comb(self.q, j) * xz**j for j in range(self.q + 1)])

    def full_1d(self, x, z):
        return (1.0 + np.outer(x, z)) ** self.q

    def block_is_all_ones(self, j):
        return j == 0

    def params(self):
        return {"q": self.q}


@dataclass(frozen=True)
class GaussHermiteFamily(KernelFamily):
    """Truncated eigen-decomposition of exp(-b (x-x')^2).

    With c = sqrt(a^2 + 2ab) and A = a + b + c, the Gaussian kernel expands
    into rank-one terms

        sqrt(1 - (b/A)^2) * (b/A)^j / (2^j j!) *
        e^{-(b/A)(a+c) x^2} H_j(sqrt(2c) x) * [same in x'],

    summing exactly to exp(-b (x-x')^2) (Mehler's formula).  Blocks 0..q-1
    are the leading terms; block q is the remaining tail by differencing.
    The default a = 1/4 matches a standardized design (variance 1/(4a) = 1).
    """

    q: int = 3
    b: float = 1.0
    a: float = 0.25
    name: str = field(default="gauss_hermite", init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("gauss_hermite order q must be >= 1")
        if self.b <= 0 or self.a <= 0:
            raise ValueError("gauss_hermite needs a > 0 and b > 0")

    @property
    def n_orders(self) -> int:
        return self.q + 1

    def _constants(self):
        c = math.sqrt(self.a**2 + 2.0 * self.a * self.b)
        A = self.a + self.b + c
        rho = self.b / A
        g = rho * (self.a + c)
        return c, rho, g

    def _features(self, x, jmax):
        c, rho, g = self._constants()
        pref = (1.0 - rho**2) ** 0.25
        chis = _scaled_hermite_features(np.sqrt(2.0 * c) * x, rho, jmax)
        env = pref * np.exp(-g * x**2)
        return [env * chi for chi in chis]

    def blocks_1d(self, x, z):
        fx = self._features(np.asarray(x, float), self.q - 1)
        fz = self._features(np.asarray(z, float), self.q - 1)
        blocks = [np.outer(fx[j], fz[j]) for j in range(self.q)]
        tail = self.full_1d(x, z) - sum(blocks)
        blocks.append(tail)
        return np.stack(blocks)

    def full_1d(self, x, z):
        return np.exp(-self.b * np.subtract.outer(x, z) ** 2)

    def params(self):
        return {"q": self.q, "b": self.b, "a": self.a}


@dataclass(frozen=True)
class AllSubsetGaussianFamily(KernelFamily):
    """Blocks {1, alpha exp(-b (x-x')^2)}; if b is None it resolves to
    1/(2p) at atlas build time so the product kernel stays well conditioned
    as the dimension grows."""

    alpha: float = 1.0
    b: float | None = None
    name: str = field(default="all_subset_gaussian", init=False)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.b is not None and self.b <= 0:
            raise ValueError("b must be positive")

    def resolve(self, p: int) -> "AllSubsetGaussianFamily":
        return (
            self
            if self.b is not None
            else AllSubsetGaussianFamily(alpha=self.alpha, b=1.0 / (2.0 * p))
        )

    @property
    def n_orders(self) -> int:
        return 2

    def blocks_1d(self, x, z):
        if self.b is None:
            raise ValueError("bandwidth b unresolved; build the atlas first")
        ones = np.ones((len(x), len(z)))
        gauss = self.alpha * np.exp(-self.b * np.subtract.outer(x, z) ** 2)
        return np.stack([ones, gauss])

    def full_1d(self, x, z):
        return 1.0 + self.alpha * np.exp(-self.b * np.subtract.outer(x, z) ** 2)

    def block_is_all_ones(self, j):
        return j == 0

    def params(self):
        return {"alpha": self.alpha, "b": self.b}


@dataclass(frozen=True)
class SplineFamily(KernelFamily):
    """Parameter-free cubic-spline decomposition {1, x x', spline}.

    The third block is min(|x|,|x'|)^2 (3 max(|x|,|x'|) - min(|x|,|x'|)) / 6
    when x x' >= 0 and zero otherwise, i.e. a cubic spline on each half line.
    """

    name: str = field(default="spline", init=False)

    @property
    def n_orders(self) -> int:
        return 3

    @staticmethod
    def _spline_block(x, z):
        ax, az = np.abs(x), np.abs(z)
        mn = np.minimum.outer(ax, az)
        mx = np.maximum.outer(ax, az)
        same_side = np.outer(x, z) >= 0.0
        return np.where(same_side, mn**2 * (3.0 * mx - mn) / 6.0, 0.0)

    def blocks_1d(self, x, z):
        x = np.asarray(x, float)
        z = np.asarray(z, float)
        return np.stack(
            [np.ones((len(x), len(z))), np.outer(x, z), self._spline_block(x, z)]
        )

    def full_1d(self, x, z):
        b = self.blocks_1d(x, z)
        return b[0] + b[1] + b[2]

    def block_is_all_ones(self, j):
        return j == 0

    def params(self):
        return {}


@dataclass(frozen=True)
class HermiteFamily(KernelFamily):
    """Geometric Hermite decomposition starting with linear features.

    Blocks j = 0..q-1 are alpha^j/(2^j j!) H_j(x) H_j(x'), block q is the
    analytic tail: the Mehler closed form

        (1 - alpha^2)^{-1/2} exp[(2 alpha x x' - alpha^2 (x^2+x'^2))/(1-alpha^2)]

    minus the partial sum.  Requires 0 < alpha < 1.
    """

    q: int = 3
    alpha: float = 0.5
    name: str = field(default="hermite", init=False)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("hermite order q must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("hermite needs 0 < alpha < 1")

    @property
    def n_orders(self) -> int:
        return self.q + 1

    def blocks_1d(self, x, z):
        x = np.asarray(x, float)
        z = np.asarray(z, float)
        fx = _scaled_hermite_features(x, self.alpha, self.q - 1)
        fz = _scaled_hermite_features(z, self.alpha, self.q - 1)
        blocks = [np.outer(fx[j], fz[j]) for j in range(self.q)]
        blocks.append(self.full_1d(x, z) - sum(blocks))
        return np.stack(blocks)

    def full_1d(self, x, z):
        al = self.alpha
        xz = np.outer(x, z)
        sq = np.add.outer(np.asarray(x) ** 2, np.asarray(z) ** 2)
        return (1.0 - al**2) ** -0.5 * np.exp(
            (2.0 * al * xz - al**2 * sq) / (1.0 - al**2)
        )

    def block_is_all_ones(self, j):
        return j == 0

    def params(self):
        return {"q": self.q, "alpha": self.alpha}


def make_family(name: str, **params) -> KernelFamily:
    """Family factory used by the CLI and model deserialization."""
    name = name.replace("-", "_")
    if name in ("poly", "polynomial"):
        return PolynomialFamily(q=int(params.get("q", 3)))
    if name in ("gauss_hermite", "gauss_hermite_gaussian"):
        return GaussHermiteFamily(
            q=int(params.get("q", 3)),
            b=float(params.get("b", 1.0)),
            a=float(params.get("a", 0.25)),
        )
    if name in ("all_subset_gauss", "all_subset_gaussian"):
        b = params.get("b")
        return AllSubsetGaussianFamily(
            alpha=float(params.get("alpha", 1.0)),
            b=None if b is None else float(b),
        )
    if name == "spline":
        return SplineFamily()
    if name == "hermite":
        return HermiteFamily(
            q=int(params.get("q", 3)), alpha=float(params.get("alpha", 0.5))
        )
    raise ValueError(f"unknown kernel family {name!r}")


@dataclass(frozen=True)
class Standardizer:
    """Columnwise affine map to zero mean / unit variance."""

    mean: np.ndarray
    scale: np.ndarray

    @staticmethod
    def fit(X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0.0, scale, 1.0)
        return Standardizer(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return (X - self.mean) / self.scale


class KernelAtlas:
    """All per-dimension Gram blocks for a training design, plus assembly.

    Stores ``p * (q+1)`` blocks of shape (n, n) and answers node Grams
    (Hadamard products), the full product-of-sums kernel, the cached
    suffix-weighted sums needed by the sufficient optimality condition, and
    test-train cross blocks through the same construction.
    """

    def __init__(
        self,
        X: np.ndarray,
        family: KernelFamily,
        standardize: bool = True,
        standardizer: Standardizer | None = None,
    ):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("X must be (n, p) with n >= 2")
        if not np.all(np.isfinite(X)):
            raise ValueError("X must be finite")
        if isinstance(family, AllSubsetGaussianFamily):
            family = family.resolve(X.shape[1])
        self.family = family
        if standardizer is not None:
            self.standardizer = standardizer
        else:
            self.standardizer = (
                Standardizer.fit(X)
                if standardize
                else Standardizer(np.zeros(X.shape[1]), np.ones(X.shape[1]))
            )
        self.Xs = self.standardizer.transform(X)
        self.n, self.p = self.Xs.shape
        self.q = family.n_orders - 1
        self.base = [
            family.blocks_1d(self.Xs[:, i], self.Xs[:, i]) for i in range(self.p)
        ]
        self._suffix_cache: dict[tuple[int, int, float], np.ndarray] = {}

    # -- assembly ---------------------------------------------------------

    def _check_label(self, v) -> tuple[int, ...]:
        v = tuple(int(j) for j in v)
        if len(v) != self.p or any(j < 0 or j > self.q for j in v):
            raise KeyError(f"label {v} out of range for p={self.p}, q={self.q}")
        return v

    def node_gram(self, v) -> np.ndarray:
        """K_v = hadamard_i base[i][v_i]; all-ones blocks are skipped."""
        v = self._check_label(v)
        out = None
        for i, j in enumerate(v):
            if self.family.block_is_all_ones(j):
                continue
            blk = self.base[i][j]
            out = blk.copy() if out is None else out * blk
        return np.ones((self.n, self.n)) if out is None else out

    def centered_node_gram(self, v) -> np.ndarray:
        return center(self.node_gram(v))

    def full_sum_gram(self) -> np.ndarray:
        """Sum of all (q+1)^p node Grams, as an elementwise product of sums."""
        out = np.ones((self.n, self.n))
        for i in range(self.p):
            out *= self.family.full_1d(self.Xs[:, i], self.Xs[:, i])
        return out

    def cross_full_sum_gram(self, X_new: np.ndarray) -> np.ndarray:
        """(m, n) block of the full product-of-sums kernel on new points."""
        Z = self.standardizer.transform(np.asarray(X_new, dtype=float))
        if Z.ndim != 2 or Z.shape[1] != self.p:
            raise ValueError(f"X_new must have {self.p} columns")
        out = np.ones((Z.shape[0], self.n))
        for i in range(self.p):
            out *= self.family.full_1d(Z[:, i], self.Xs[:, i])
        return out

    # -- cached sums for the sufficient condition --------------------------

    def _suffix_sum(self, i: int, t_i: int, beta: float) -> np.ndarray:
        """sum_{j >= t_i} ((beta-1)/(beta^{j-t_i+1}-1))^2 * base[i][j]."""
        key = (i, t_i, beta)
        out = self._suffix_cache.get(key)
        if out is None:
            out = np.zeros((self.n, self.n))
            for j in range(t_i, self.q + 1):
                coef = (beta - 1.0) / (beta ** (j - t_i + 1) - 1.0)
                out += coef**2 * self.base[i][j]
            self._suffix_cache[key] = out
        return out

    def sufficient_sum_gram(self, weights, t) -> np.ndarray:
        """Cached sum over the descendants of t, centered once at the end.

        For t with depth >= 1 the ancestor-weight sums factorize across
        dimensions exactly; at the root with d_r < 1 the sum is replaced by
        the lower bound d_r * prod(...), which can only inflate the result
        (the optimality certificate stays sound).
        """
        t = self._check_label(t)
        beta = weights.beta
        if beta <= 1.0:
            raise ValueError("beta must be > 1")
        depth = sum(t)
        out = None
        for i in range(self.p):
            s = self._suffix_sum(i, t[i], beta)
            out = s.copy() if out is None else out * s
        scale = beta ** (-2.0 * depth) if depth > 0 else weights.d_r**-2.0
        return center(scale * out)

    # -- test-time blocks ---------------------------------------------------

    def cross_node_gram(self, v, X_new: np.ndarray, centered: bool = False):
        """(m, n) block of k_v between new points and the training set.

        With ``centered`` the training-side means are subtracted consistently
        with the projector applied on the training Gram.
        """
        v = self._check_label(v)
        Z = self.standardizer.transform(np.asarray(X_new, dtype=float))
        if Z.ndim != 2 or Z.shape[1] != self.p:
            raise ValueError(f"X_new must have {self.p} columns")
        out = None
        needs = [
            (i, j) for i, j in enumerate(v) if not self.family.block_is_all_ones(j)
        ]
        for i, j in needs:
            blk = self.family.blocks_1d(Z[:, i], self.Xs[:, i])[j]
            out = blk if out is None else out * blk
        if out is None:
            out = np.ones((Z.shape[0], self.n))
        return center_cross(out, self.node_gram(v)) if centered else out


def build_atlas(
    X: np.ndarray,
    family: KernelFamily,
    standardize: bool = True,
    standardizer: Standardizer | None = None,
):
    """Compute all per-dimension base blocks for a training design."""
    return KernelAtlas(X, family, standardize=standardize, standardizer=standardizer)
