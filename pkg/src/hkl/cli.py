"""Command-line interface: fit / predict / gen / cv / bench.

CSV files are plain numeric without a header (pass ``--header`` when the
first line should be skipped); targets live in a separate single-column file.
Models are stored as self-contained JSON.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dag import WeightScheme
from .engine import HklConfig, HklModel, fit
from .harness import (
    DEFAULT_BETA_GRID,
    DEFAULT_LAMBDA_GRID,
    SyntheticSpec,
    cross_validate,
    gen_synthetic,
    run_benchmark,
)
from .kernels import make_family
from .losses import LossModel

LOSS_ALIASES = {
    "ls": "least_squares",
    "logistic": "logistic",
    "svr1": "svr_1norm",
    "svr2": "svr_2norm",
    "huber": "huber",
    "svm1": "svm_1norm",
    "svm2": "svm_2norm",
}

KERNEL_CHOICES = ["poly", "hermite", "gauss-hermite", "all-subset-gauss", "spline"]


def _read_matrix(path: str, header: bool) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    return data


def _read_vector(path: str, header: bool) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=1)
    return data.reshape(-1)


def _write_vector(path: str, vec: np.ndarray):
    np.savetxt(path, np.asarray(vec).reshape(-1, 1), delimiter=",", fmt="%.17g")


def _loss_from(args) -> LossModel:
    kind = LOSS_ALIASES[args.loss]
    if kind in ("svr_1norm", "svr_2norm", "huber"):
        return LossModel(kind, eps=args.epsilon)
    return LossModel(kind)


def _kernel_from(args):
    params = {"q": args.q}
    if args.kernel == "gauss-hermite":
        params["b"] = args.kernel_b if args.kernel_b is not None else 1.0
    elif args.kernel == "all-subset-gauss":
        params = {"alpha": args.kernel_alpha}
        if args.kernel_b is not None:
            params["b"] = args.kernel_b
    elif args.kernel == "hermite":
        params["alpha"] = args.kernel_alpha
    elif args.kernel == "spline":
        params = {}
    return make_family(args.kernel, **params)


def _add_kernel_flags(parser):
    parser.add_argument("--kernel", choices=KERNEL_CHOICES, default="hermite")
    parser.add_argument("--q", type=int, default=3, help="per-dimension order")
    parser.add_argument("--kernel-b", type=float, default=None,
                        help="Gaussian width b (gauss-hermite / all-subset-gauss)")
    parser.add_argument("--kernel-alpha", type=float, default=0.5,
                        help="geometric scale (hermite / all-subset-gauss)")


def _add_loss_flags(parser):
    parser.add_argument("--loss", choices=sorted(LOSS_ALIASES), default="ls")
    parser.add_argument("--epsilon", type=float, default=0.1,
                        help="tube/threshold for svr1, svr2, huber")


def _add_fit_flags(parser):
    parser.add_argument("--eps-gap", type=float, default=1e-3)
    parser.add_argument("--q-max", type=int, default=100)
    parser.add_argument("--beta", type=float, default=2.0)
    parser.add_argument("--dr", type=float, default=1.0)
    parser.add_argument("--eps-smooth", type=float, default=1e-3)
    parser.add_argument("--inner-tol", type=float, default=1e-9)
    parser.add_argument("--max-inner-iter", type=int, default=300)


def _config_from(args) -> HklConfig:
    return HklConfig(
        kernel=_kernel_from(args),
        loss=_loss_from(args),
        weights=WeightScheme(beta=args.beta, d_r=args.dr),
        eps_gap=args.eps_gap,
        q_max=args.q_max,
        eps_smooth=args.eps_smooth,
        inner_tol=args.inner_tol,
        max_outer_iter=args.max_inner_iter,
    )


def cmd_fit(args) -> int:
    X = _read_matrix(args.data, args.header)
    y = _read_vector(args.target, args.header)
    model = fit(X, y, args.lam, _config_from(args))
    model.save(args.out)
    print(
        f"fit: n={len(y)} p={X.shape[1]} active={len(model.active)} "
        f"gap={model.gap:.3e} certified={model.gap_certified}"
    )
    return 0


def cmd_predict(args) -> int:
    model = HklModel.load(args.model)
    X = _read_matrix(args.data, args.header)
    _write_vector(args.out, model.predict(X))
    print(f"predict: wrote {X.shape[0]} values to {args.out}")
    return 0


def cmd_gen(args) -> int:
    spec = SyntheticSpec(p=args.p, r=args.r, n=args.n, snr=args.snr, seed=args.seed)
    X, y = gen_synthetic(spec)
    np.savetxt(args.out_x, X, delimiter=",", fmt="%.17g")
    _write_vector(args.out_y, y)
    print(f"gen: wrote {args.n}x{args.p} design to {args.out_x}")
    return 0


def cmd_cv(args) -> int:
    X = _read_matrix(args.data, args.header)
    y = _read_vector(args.target, args.header)
    lambdas = (
        [float(s) for s in args.lambdas.split(",")]
        if args.lambdas
        else list(DEFAULT_LAMBDA_GRID)
    )
    betas = (
        [float(s) for s in args.betas.split(",")]
        if args.betas
        else list(DEFAULT_BETA_GRID)
    )
    loss = _loss_from(args)
    cv = cross_validate(
        X, y, "hkl", lambda_grid=lambdas, beta_grid=betas, folds=args.folds,
        kernel=_kernel_from(args), loss=loss, eps_gap=args.eps_gap,
        q_max=args.q_max, seed=args.seed,
    )
    args.beta = cv.best_beta
    from .harness import fit_hkl_path

    path = sorted({l for l in lambdas if l >= cv.best_lambda}, reverse=True)
    model = fit_hkl_path(X, y, path, _config_from(args))
    model.save(args.out)
    print(
        f"cv: best lambda={cv.best_lambda:.4g} beta={cv.best_beta} "
        f"score={cv.best_score:.4g}; model -> {args.out}"
    )
    return 0


def cmd_bench(args) -> int:
    table, ok = run_benchmark(args.config, args.out_dir)
    for row in table.aggregate():
        print(
            f"{row['method']:>8} p={row['p']:<4} median={row['median']:.4f} "
            f"[{row['q1']:.4f}, {row['q3']:.4f}] over {row['n_replicates']} reps"
        )
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hkl",
        description="Hierarchical kernel learning: DAG-sparse kernel selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model at one regularization value")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--target", required=True)
    p_fit.add_argument("--lambda", dest="lam", type=float, required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--header", action="store_true")
    _add_kernel_flags(p_fit)
    _add_loss_flags(p_fit)
    _add_fit_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict with a stored model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.add_argument("--header", action="store_true")
    p_pred.set_defaults(func=cmd_predict)

    p_gen = sub.add_parser("gen", help="generate a synthetic regression dataset")
    p_gen.add_argument("--p", type=int, required=True)
    p_gen.add_argument("--r", type=int, required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--snr", type=float, default=4.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out-x", required=True)
    p_gen.add_argument("--out-y", required=True)
    p_gen.set_defaults(func=cmd_gen)

    p_cv = sub.add_parser("cv", help="two-loop cross-validation, then final fit")
    p_cv.add_argument("--data", required=True)
    p_cv.add_argument("--target", required=True)
    p_cv.add_argument("--out", required=True)
    p_cv.add_argument("--header", action="store_true")
    p_cv.add_argument("--lambdas", default=None, help="comma-separated grid")
    p_cv.add_argument("--betas", default=None, help="comma-separated grid")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=0)
    _add_kernel_flags(p_cv)
    _add_loss_flags(p_cv)
    _add_fit_flags(p_cv)
    p_cv.set_defaults(func=cmd_cv)

    p_bench = sub.add_parser("bench", help="run the benchmark defined in a TOML file")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--out-dir", required=True)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
