"""Synthetic benchmark harness: data generation, CV, baselines, orchestration.

The synthetic protocol draws a covariance from a Wishart distribution with
2p degrees of freedom, normalizes it to unit diagonal, samples Gaussian
inputs, and sets the response to the sum of all pairwise products of the
first r variables plus Gaussian noise calibrated to a target signal-to-noise
ratio.

Model selection uses two nested loops of k-fold cross-validation: the outer
loop over the depth-penalty base beta, the inner loop over the regularization
grid (descending, warm-started).  Baselines: greedy constrained forward
selection over the same DAG, plain ridge on the full summed kernel, and flat
MKL over the depth-one kernels.
"""

from __future__ import annotations

import csv
import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dag import WeightScheme, build_edgeless_dag, build_grid_dag, frontier_of
from .engine import HklConfig, HklModel, fit
from .kernels import KernelAtlas, build_atlas, make_family
from .losses import LossModel, loss_value
from .single import solve

DEFAULT_LAMBDA_GRID = tuple(10.0 ** (-0.5 * k) for k in range(9))  # 1 .. 1e-4
DEFAULT_BETA_GRID = (1.5, 2.0, 4.0)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Wishart-covariance design with a pairwise-interaction signal."""

    p: int
    r: int
    n: int
    snr: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.r > self.p:
            raise ValueError("need r <= p")
        if self.n < 2:
            raise ValueError("need n >= 2")
        if not self.snr > 0:
            raise ValueError("snr must be positive")


def _wishart_unit_diag(p: int, rng: np.random.Generator) -> np.ndarray:
    """Wishart(p, 2p) draw via Bartlett, normalized to unit diagonal."""
    df = 2 * p
    A = np.zeros((p, p))
    for i in range(p):
        A[i, i] = np.sqrt(rng.chisquare(df - i))
        A[i, :i] = rng.normal(size=i)
    W = A @ A.T
    dinv = 1.0 / np.sqrt(np.diag(W))
    return W * np.outer(dinv, dinv)


def signal_function(X: np.ndarray, r: int) -> np.ndarray:
    """Sum of all cross products of the first r columns."""
    f = np.zeros(X.shape[0])
    for i in range(r):
        for j in range(i + 1, r):
            f += X[:, i] * X[:, j]
    return f


def gen_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw (X, y); deterministic given the seed."""
    for attempt in range(5):
        rng = np.random.default_rng((spec.seed, attempt))
        sigma = _wishart_unit_diag(spec.p, rng)
        eigs = np.linalg.eigvalsh(sigma)
        if eigs.min() > 1e-10:
            break
    else:
        raise RuntimeError("degenerate Wishart draw after 5 attempts")
    L = np.linalg.cholesky(sigma)
    X = rng.normal(size=(spec.n, spec.p)) @ L.T
    f = signal_function(X, spec.r)
    noise_std = np.sqrt(f.var() / spec.snr) if f.var() > 0 else 0.0
    y = f + noise_std * rng.normal(size=spec.n)
    return X, y


# ---------------------------------------------------------------------------
# methods
# ---------------------------------------------------------------------------


@dataclass
class KernelRidgeModel:
    """Plain single-kernel model on a fixed Gram assembly."""

    atlas: KernelAtlas
    alpha: np.ndarray
    b: float
    mode: str  # "full" or node-sum over stored labels
    labels: list = field(default_factory=list)
    active: list = field(default_factory=list)

    def predict(self, X_new: np.ndarray) -> np.ndarray:
        if self.mode == "full":
            Kx = self.atlas.cross_full_sum_gram(X_new)
        else:
            Kx = sum(self.atlas.cross_node_gram(v, X_new) for v in self.labels)
        return Kx @ self.alpha + self.b


def l2_full_fit(X, y, lam: float, kernel, loss=None, standardize=True):
    """Ridge on the sum of all kernels (the full product-of-sums Gram)."""
    loss = loss or LossModel("least_squares")
    atlas = build_atlas(X, make_family(kernel) if isinstance(kernel, str) else kernel,
                        standardize=standardize)
    sol = solve(atlas.full_sum_gram(), y, lam, loss)
    return KernelRidgeModel(atlas=atlas, alpha=sol.alpha, b=sol.b, mode="full")


def flat_mkl_fit(X, y, lam: float, config: HklConfig) -> HklModel:
    """MKL over the depth-one kernels: the edgeless-DAG special case."""
    p = np.asarray(X).shape[1]
    labels = [tuple(int(i == j) for j in range(p)) for i in range(p)]
    dag = build_edgeless_dag(labels)
    return fit(X, y, lam, config, dag=dag)


def greedy_forward_fit(
    X,
    y,
    lam: float,
    config: HklConfig,
    seed: int = 0,
    val_fraction: float = 0.2,
    se_factor: float = 1.0,
):
    """Forward selection under the same hull constraint as the convex solver.

    Starts from the DAG sources and greedily adds the frontier vertex whose
    addition most improves a held-out split of the training data, fitting the
    ridge problem on the plain sum of active kernels at each step.  Stops
    when the best candidate fails to beat the current held-out loss by more
    than ``se_factor`` standard errors of that loss estimate (the usual guard
    against chasing noise on a small validation split).
    """
    X = np.asarray(X, dtype=float)
    y = config.loss.check_labels(y)
    n = len(y)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = max(1, int(val_fraction * n))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]

    atlas = build_atlas(X, config.kernel, standardize=config.standardize)
    dag = build_grid_dag(atlas.p, atlas.q)

    def val_losses(labels):
        K = sum(atlas.node_gram(v) for v in labels)
        sol = solve(K[np.ix_(tr_idx, tr_idx)], y[tr_idx], lam, config.loss)
        preds = K[np.ix_(val_idx, tr_idx)] @ sol.alpha + sol.b
        pointwise = loss_value(config.loss, y[val_idx], preds)
        return float(np.mean(pointwise)), float(
            np.std(pointwise) / np.sqrt(len(val_idx))
        )

    W = sorted(dag.sources())
    best, best_se = val_losses(W)
    while len(W) < config.q_max:
        candidates = sorted(frontier_of(dag, W))
        if not candidates:
            break
        scores = [(val_losses(W + [t]), t) for t in candidates]
        (score, se), t = min(scores, key=lambda st: (st[0][0], st[1]))
        if score >= best - se_factor * best_se:
            break
        W.append(t)
        W = sorted(W)
        best, best_se = score, se

    K = sum(atlas.node_gram(v) for v in W)
    sol = solve(K, y, lam, config.loss)
    return KernelRidgeModel(
        atlas=atlas, alpha=sol.alpha, b=sol.b, mode="sum", labels=W, active=W
    )


def _method_config(kernel, loss, beta, eps_gap, q_max, eps_smooth=1e-3) -> HklConfig:
    fam = make_family(kernel) if isinstance(kernel, str) else kernel
    return HklConfig(
        kernel=fam,
        loss=loss,
        weights=WeightScheme(beta=beta, d_r=1.0),
        eps_gap=eps_gap,
        q_max=q_max,
        eps_smooth=eps_smooth,
    )


def fit_hkl_path(X, y, lambdas_desc, config: HklConfig):
    """Continuation in lambda: fit a descending path with warm starts.

    A cold start at a small lambda can exhaust the kernel budget on noise
    before the informative cones are reached; the path inherits the active
    set found at easier regularization levels.  Returns the model at the
    final (smallest) value.
    """
    warm = None
    model = None
    for lam in lambdas_desc:
        model = fit(X, y, lam, config, warm_start=warm)
        warm = (model.active_raw, model.eta, model.alpha)
    return model


def fit_method(
    method: str,
    X,
    y,
    lam: float,
    beta: float,
    kernel,
    loss: LossModel,
    eps_gap: float = 1e-3,
    q_max: int = 40,
    warm=None,
    seed: int = 0,
    lambda_path=None,
):
    """Uniform entry point used by cross-validation and the benchmark.

    For the hierarchical method, ``lambda_path`` (a descending grid ending at
    ``lam``) makes the fit warm-start down the path instead of starting cold.
    """
    if method == "hkl":
        config = _method_config(kernel, loss, beta, eps_gap, q_max)
        if lambda_path is not None:
            path = sorted({l for l in lambda_path if l >= lam}, reverse=True)
            if not path or path[-1] != lam:
                path.append(lam)
            model = fit_hkl_path(X, y, path, config)
        else:
            model = fit(X, y, lam, config, warm_start=warm)
        new_warm = (model.active_raw, model.eta, model.alpha)
        return model, new_warm
    if method == "mkl":
        config = _method_config(kernel, loss, beta, eps_gap, q_max)
        return flat_mkl_fit(X, y, lam, config), None
    if method == "l2":
        return l2_full_fit(X, y, lam, kernel, loss=loss), None
    if method == "greedy":
        config = _method_config(kernel, loss, beta, eps_gap, q_max)
        return greedy_forward_fit(X, y, lam, config, seed=seed), None
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


def make_folds(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Deterministic disjoint folds covering all indices, sizes within 1."""
    if n < folds:
        raise ValueError("need n >= folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


@dataclass
class CVResult:
    best_lambda: float
    best_beta: float
    best_score: float
    scores: dict  # (beta, lambda) -> mean validation loss


def cross_validate(
    X,
    y,
    method: str,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    beta_grid=DEFAULT_BETA_GRID,
    folds: int = 10,
    kernel="hermite",
    loss: LossModel | None = None,
    eps_gap: float = 1e-3,
    q_max: int = 40,
    seed: int = 0,
) -> CVResult:
    """Two nested selection loops: beta outside, lambda inside (descending).

    The lambda path within each (beta, fold) pair is warm-started from the
    previous, larger, value.  Returns the configuration with the smallest
    mean validation loss.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    loss = loss or LossModel("least_squares")
    lambdas = sorted({float(l) for l in lambda_grid}, reverse=True)
    betas = sorted({float(b) for b in beta_grid})
    if not lambdas or not betas:
        raise ValueError("grids must be nonempty")
    fold_idx = make_folds(len(y), folds, seed)

    scores: dict[tuple[float, float], float] = {}
    for beta in betas:
        fold_losses = {lam: [] for lam in lambdas}
        for k, val in enumerate(fold_idx):
            tr = np.setdiff1d(np.arange(len(y)), val)
            warm = None
            for lam in lambdas:
                model, warm = fit_method(
                    method, X[tr], y[tr], lam, beta, kernel, loss,
                    eps_gap=eps_gap, q_max=q_max, warm=warm, seed=seed + k,
                )
                preds = model.predict(X[val])
                if loss.is_classification:
                    err = float(np.mean(preds != y[val]))
                else:
                    err = float(np.mean((preds - y[val]) ** 2))
                fold_losses[lam].append(err)
        for lam in lambdas:
            scores[(beta, lam)] = float(np.mean(fold_losses[lam]))

    best_beta, best_lambda = min(scores, key=lambda bl: (scores[bl], -bl[1], bl[0]))
    return CVResult(
        best_lambda=best_lambda,
        best_beta=best_beta,
        best_score=scores[(best_beta, best_lambda)],
        scores=scores,
    )


# ---------------------------------------------------------------------------
# benchmark orchestration
# ---------------------------------------------------------------------------


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


@dataclass
class BenchConfig:
    methods: list = field(default_factory=lambda: ["hkl", "l2", "greedy"])
    p_values: list = field(default_factory=lambda: [8, 16, 32])
    n: int = 400
    r: int = 2
    snr: float = 4.0
    replicates: int = 10
    lambda_grid: list = field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID))
    beta_grid: list = field(default_factory=lambda: list(DEFAULT_BETA_GRID))
    kernel: str = "hermite"
    loss: str = "least_squares"
    eps_gap: float = 1e-3
    q_max: int = 40
    folds: int = 10
    n_test: int = 1000
    seed: int = 0
    workers: int = 1

    @staticmethod
    def from_file(path: str) -> "BenchConfig":
        return BenchConfig(**_load_toml(path))


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)

    def aggregate(self) -> list[dict]:
        """Median and quartiles of test error per (method, p)."""
        keys = sorted({(r["method"], r["p"]) for r in self.rows})
        out = []
        for method, p in keys:
            errs = [r["test_mse"] for r in self.rows
                    if r["method"] == method and r["p"] == p and r["test_mse"] is not None]
            if not errs:
                continue
            q1, med, q3 = np.percentile(errs, [25, 50, 75])
            out.append(
                {
                    "method": method,
                    "p": p,
                    "median": float(med),
                    "q1": float(q1),
                    "q3": float(q3),
                    "n_replicates": len(errs),
                }
            )
        return out

    def to_csv(self, path: str):
        cols = ["method", "p", "replicate", "test_mse", "lambda", "beta",
                "active_size", "wall_time", "error"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in sorted(self.rows, key=lambda r: (r["method"], r["p"], r["replicate"])):
                writer.writerow({c: row.get(c) for c in cols})

    def to_json(self, path: str):
        payload = {
            "rows": sorted(
                self.rows, key=lambda r: (r["method"], r["p"], r["replicate"])
            ),
            "aggregate": self.aggregate(),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)


def _bench_one(args: tuple) -> dict:
    """One (method, p, replicate) cell; returns a result row."""
    cfg, method, p, rep = args
    t0 = time.perf_counter()
    row = {"method": method, "p": p, "replicate": rep, "test_mse": None,
           "lambda": None, "beta": None, "active_size": None,
           "wall_time": None, "error": None}
    try:
        spec = SyntheticSpec(p=p, r=cfg.r, n=cfg.n + cfg.n_test,
                             snr=cfg.snr, seed=cfg.seed + rep)
        X_all, y_all = gen_synthetic(spec)
        X, y = X_all[: cfg.n], y_all[: cfg.n]
        X_test, y_test = X_all[cfg.n :], y_all[cfg.n :]
        loss = LossModel(cfg.loss)
        # only the hierarchical norm uses the depth penalty; skip the beta
        # loop for methods it cannot affect
        beta_grid = cfg.beta_grid if method == "hkl" else [2.0]
        cv = cross_validate(
            X, y, method,
            lambda_grid=cfg.lambda_grid, beta_grid=beta_grid, folds=cfg.folds,
            kernel=cfg.kernel, loss=loss, eps_gap=cfg.eps_gap, q_max=cfg.q_max,
            seed=cfg.seed + rep,
        )
        model, _ = fit_method(
            method, X, y, cv.best_lambda, cv.best_beta, cfg.kernel, loss,
            eps_gap=cfg.eps_gap, q_max=cfg.q_max, seed=cfg.seed + rep,
            lambda_path=cfg.lambda_grid,
        )
        preds = model.predict(X_test)
        row["test_mse"] = float(np.mean((preds - y_test) ** 2))
        row["lambda"] = cv.best_lambda
        row["beta"] = cv.best_beta
        row["active_size"] = len(getattr(model, "active", []))
    except Exception:
        row["error"] = traceback.format_exc(limit=10)
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_benchmark(config: BenchConfig | str, out_dir: str) -> tuple[ResultsTable, bool]:
    """Execute the full method-by-dimension comparison.

    Writes ``results.csv``, ``results.json`` and ``bench.log`` into out_dir.
    Returns the table and a success flag (False when any cell failed; the
    completed rows are still written).
    """
    cfg = BenchConfig.from_file(config) if isinstance(config, str) else config
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [
        (cfg, method, p, rep)
        for method in cfg.methods
        for p in cfg.p_values
        for rep in range(cfg.replicates)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_bench_one, cells))
    else:
        rows = [_bench_one(cell) for cell in cells]
    rows.sort(key=lambda r: (r["method"], r["p"], r["replicate"]))
    table = ResultsTable(rows=rows)
    table.to_csv(str(out / "results.csv"))
    table.to_json(str(out / "results.json"))
    ok = all(r["error"] is None for r in rows)
    with open(out / "bench.log", "w") as fh:
        for r in rows:
            status = "ok" if r["error"] is None else "FAILED"
            fh.write(
                f"{r['method']} p={r['p']} rep={r['replicate']}: {status} "
                f"mse={r['test_mse']} lam={r['lambda']} beta={r['beta']} "
                f"t={r['wall_time']:.2f}s\n"
            )
            if r["error"]:
                fh.write(r["error"] + "\n")
    return table, ok
