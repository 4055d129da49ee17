"""Active-set kernel search with a certified duality gap.

Grows a hull-closed active set W from the DAG sources.  In a first phase,
frontier vertices (sources of the complement) violating the necessary
optimality condition

    alpha' Kc_t alpha / d_t^2  <=  Omega^2

are added one at a time, re-solving the reduced problem after each addition.
In a second phase the same is done for the sufficient condition

    alpha' Kbreve_t alpha  <=  Omega^2 + 2 eps / lam,

whose left side sums the whole descendant cone of t through the cached
matrices Kbreve_t.  When the second condition holds everywhere, the total
duality gap over the full (possibly astronomically large) DAG is provably at
most the reduced gap plus eps, i.e. at most 2 eps for reduced solves run to
gap eps.  Each phase stops early once |W| exceeds the kernel budget, in which
case the model is returned with ``gap_certified = False``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .dag import (
    Dag,
    GridDag,
    SubDag,
    WeightScheme,
    build_grid_dag,
    frontier_of,
    hull,
)
from .kernels import KernelAtlas, KernelFamily, build_atlas, center, make_family
from .losses import LossModel
from .single import gap_kernel
from .weights import ReducedSolution, minimize_B, zeta_from_eta

NECESSARY_SLACK = 1e-8  # relative slack on the necessary-condition threshold


@dataclass
class HklConfig:
    """Everything but the data and the regularization strength."""

    kernel: KernelFamily
    loss: LossModel = field(default_factory=LossModel)
    weights: WeightScheme = field(default_factory=WeightScheme)
    eps_gap: float = 1e-3
    q_max: int = 100
    eps_smooth: float = 1e-3
    inner_tol: float = 1e-9
    max_outer_iter: int = 300
    standardize: bool = True
    prune_rel_tol: float = 1e-8


class ActiveSetState:
    """Mutable search state: restriction, Gram caches, current solution."""

    def __init__(self, dag: Dag, atlas: KernelAtlas, weights: WeightScheme):
        self.dag = dag
        self.atlas = atlas
        self.weights = weights
        self.sub = SubDag(dag, [], weights)
        self.grams: list[np.ndarray] = []
        self.red: ReducedSolution | None = None
        self.frontier: list = []
        self._gram_cache: dict = {}
        self._breve_cache: dict = {}

    # -- caches -----------------------------------------------------------

    def node_gram(self, v) -> np.ndarray:
        out = self._gram_cache.get(v)
        if out is None:
            out = self.atlas.node_gram(v)
            self._gram_cache[v] = out
        return out

    def breve_gram(self, t) -> np.ndarray:
        out = self._breve_cache.get(t)
        if out is None:
            if isinstance(self.dag, GridDag):
                out = self.atlas.sufficient_sum_gram(self.weights, t)
            else:
                out = breve_by_enumeration(self.dag, self.atlas, self.weights, t)
            self._breve_cache[t] = out
        return out

    def _prune_caches(self):
        keep = set(self.sub.labels) | set(self.frontier)
        self._gram_cache = {v: g for v, g in self._gram_cache.items() if v in keep}
        self._breve_cache = {v: g for v, g in self._breve_cache.items() if v in keep}

    # -- structure --------------------------------------------------------

    def add_vertex(self, v):
        self.sub.add(v)
        self.grams.append(self.node_gram(v))
        self.refresh_frontier()

    def refresh_frontier(self):
        self.frontier = sorted(frontier_of(self.dag, self.sub.labels))
        self._prune_caches()

    # -- scores -----------------------------------------------------------

    @property
    def alpha(self) -> np.ndarray:
        return self.red.sol.alpha

    def omega_squared(self) -> float:
        return float(self.red.zeta @ self.red.a_quad)

    def necessary_scores(self) -> list[tuple[Hashable, float]]:
        a = self.alpha
        out = []
        for t in self.frontier:
            d_t = self.weights.weight(self.dag.depth(t))
            out.append((t, float(a @ (self.node_gram(t) @ a)) / d_t**2))
        return out

    def sufficient_scores(self) -> list[tuple[Hashable, float]]:
        a = self.alpha
        return [(t, float(a @ (self.breve_gram(t) @ a))) for t in self.frontier]


def breve_by_enumeration(dag: Dag, atlas: KernelAtlas, weights: WeightScheme, t):
    """Exact cached sum over an enumerable descendant cone (non-grid DAGs)."""
    out = np.zeros((atlas.n, atlas.n))
    dt = dag.descendants(t)
    for w in dt:
        denom = sum(weights.weight(dag.depth(v)) for v in dag.ancestors(w) & dt)
        out += center(atlas.node_gram(w)) / denom**2
    return out


def necessary_condition_violators(
    state: ActiveSetState,
) -> list[tuple[Hashable, float]]:
    """Frontier vertices with alpha' Kc_t alpha / d_t^2 above Omega^2."""
    thresh = state.omega_squared() * (1.0 + NECESSARY_SLACK)
    out = [(t, s) for t, s in state.necessary_scores() if s > thresh]
    return sorted(out, key=lambda ts: (-ts[1], ts[0]))


def sufficient_condition_violators(
    state: ActiveSetState, eps_gap: float, lam: float
) -> list[tuple[Hashable, float]]:
    """Frontier vertices whose descendant-cone score exceeds Omega^2 + 2 eps/lam."""
    thresh = state.omega_squared() + 2.0 * eps_gap / lam
    out = [(t, s) for t, s in state.sufficient_scores() if s > thresh]
    return sorted(out, key=lambda ts: (-ts[1], ts[0]))


def omega_squared(state: ActiveSetState) -> float:
    """sum_w zeta_w alpha' Kc_w alpha over the active set."""
    return state.omega_squared()


def dual_norm_bounds(
    dag: Dag,
    weights: WeightScheme,
    g_norms: dict,
    K: Iterable[Hashable] | None = None,
) -> tuple[float, float]:
    """Sandwich bounds on the dual norm of g restricted to the set K.

    lower = max_w ||g_w|| / sum_{v in A(w) cap K} d_v,
    upper = max_w ||g_w|| / d_w; equal when the DAG restricted to K has no
    edges.
    """
    Kset = set(K) if K is not None else set(g_norms)
    lower = upper = 0.0
    for w, g in g_norms.items():
        if w not in Kset:
            continue
        dw = weights.weight(dag.depth(w))
        anc_sum = sum(
            weights.weight(dag.depth(v)) for v in dag.ancestors(w) if v in Kset
        )
        lower = max(lower, g / anc_sum)
        upper = max(upper, g / dw)
    return lower, upper


@dataclass
class HklModel:
    """Fitted hierarchical kernel learning model, sufficient for prediction."""

    active: list  # pruned active labels
    zeta: np.ndarray  # weights for the pruned labels
    alpha: np.ndarray
    b: float
    lam: float
    kernel_name: str
    kernel_params: dict
    loss_kind: str
    loss_eps: float
    weights: WeightScheme
    standard_mean: np.ndarray
    standard_scale: np.ndarray
    X_train: np.ndarray
    dag_info: dict
    gap: float
    gap_certified: bool
    active_raw: list = field(default_factory=list)
    eta: np.ndarray | None = None  # eta on active_raw, for warm starts
    fitted: np.ndarray | None = None
    n_reduced_solves: int = 0
    w_trajectory: list = field(default_factory=list)  # W after each solve
    objective_trajectory: list = field(default_factory=list)  # reduced primal values

    @property
    def loss(self) -> LossModel:
        return LossModel(self.loss_kind, eps=self.loss_eps)

    @property
    def family(self) -> KernelFamily:
        return make_family(self.kernel_name, **self.kernel_params)

    # -- prediction ------------------------------------------------------

    def _atlas(self) -> KernelAtlas:
        return build_atlas(
            self.X_train,
            self.family,
            standardizer=_std_from(self.standard_mean, self.standard_scale),
        )

    def decision_function(self, X_new: np.ndarray) -> np.ndarray:
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim != 2 or X_new.shape[1] != self.X_train.shape[1]:
            raise ValueError(
                f"X_new must have {self.X_train.shape[1]} columns, got {X_new.shape}"
            )
        atlas = self._atlas()
        out = np.full(X_new.shape[0], self.b)
        for w, zw in zip(self.active, self.zeta):
            if zw > 0.0:
                out += zw * (atlas.cross_node_gram(w, X_new) @ self.alpha)
        return out

    def predict(self, X_new: np.ndarray) -> np.ndarray:
        score = self.decision_function(X_new)
        if self.loss.is_classification:
            return np.where(score >= 0.0, 1.0, -1.0)
        return score

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "dag": self.dag_info,
            "W": [list(map(int, w)) for w in self.active],
            "W_raw": [list(map(int, w)) for w in self.active_raw],
            "zeta": np.asarray(self.zeta).tolist(),
            "eta": None if self.eta is None else np.asarray(self.eta).tolist(),
            "alpha": np.asarray(self.alpha).tolist(),
            "b": float(self.b),
            "lambda": float(self.lam),
            "loss": {"kind": self.loss_kind, "eps": float(self.loss_eps)},
            "kernel": {"name": self.kernel_name, "params": self.kernel_params},
            "standardization": {
                "mean": np.asarray(self.standard_mean).tolist(),
                "scale": np.asarray(self.standard_scale).tolist(),
            },
            "X_train": np.asarray(self.X_train).tolist(),
            "gap": float(self.gap),
            "gap_certified": bool(self.gap_certified),
        }
        return json.dumps(payload)

    @staticmethod
    def from_json(text: str) -> "HklModel":
        d = json.loads(text)
        return HklModel(
            active=[tuple(w) for w in d["W"]],
            zeta=np.asarray(d["zeta"], dtype=float),
            alpha=np.asarray(d["alpha"], dtype=float),
            b=float(d["b"]),
            lam=float(d["lambda"]),
            kernel_name=d["kernel"]["name"],
            kernel_params=d["kernel"]["params"],
            loss_kind=d["loss"]["kind"],
            loss_eps=float(d["loss"]["eps"]),
            weights=WeightScheme(
                beta=float(d["dag"]["beta"]), d_r=float(d["dag"]["d_r"])
            ),
            standard_mean=np.asarray(d["standardization"]["mean"], dtype=float),
            standard_scale=np.asarray(d["standardization"]["scale"], dtype=float),
            X_train=np.asarray(d["X_train"], dtype=float),
            dag_info=d["dag"],
            gap=float(d["gap"]),
            gap_certified=bool(d["gap_certified"]),
            active_raw=[tuple(w) for w in d.get("W_raw", [])],
            eta=None if d.get("eta") is None else np.asarray(d["eta"], dtype=float),
        )

    def save(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @staticmethod
    def load(path: str) -> "HklModel":
        with open(path) as fh:
            return HklModel.from_json(fh.read())


def _std_from(mean, scale):
    from .kernels import Standardizer

    return Standardizer(np.asarray(mean, float), np.asarray(scale, float))


def _reduced_solve(state: ActiveSetState, y, lam, config, eta0, alpha0):
    return minimize_B(
        state.grams,
        y,
        lam,
        config.loss,
        state.sub,
        eps_smooth=config.eps_smooth,
        tol=config.eps_gap,
        max_iter=config.max_outer_iter,
        eta0=eta0,
        alpha0=alpha0,
        inner_tol=config.inner_tol,
    )


def _extended_eta(state: ActiveSetState, eta_prev: np.ndarray) -> np.ndarray:
    """Warm start: keep previous mass, give new vertices a small d^-2 share."""
    m = len(state.sub)
    k = len(eta_prev)
    d = state.sub.d_array()
    eta = np.zeros(m)
    eta[:k] = eta_prev
    eps_add = 0.05
    eta[k:] = eps_add * d[k:] ** -2.0 / max(m - k, 1)
    budget = float(d**2 @ eta)
    if budget > 1.0:
        eta /= budget
    return eta


def fit(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    config: HklConfig,
    dag: Dag | None = None,
    warm_start: tuple[list, np.ndarray, np.ndarray] | None = None,
) -> HklModel:
    """Kernel search: grow W from the sources until optimality is certified.

    ``warm_start`` may carry (labels, eta, alpha) from a previous fit at a
    nearby regularization value; labels must form a hull-closed set.
    """
    X = np.asarray(X, dtype=float)
    y = config.loss.check_labels(y)
    if not lam > 0:
        raise ValueError("lam must be positive")
    atlas = build_atlas(X, config.kernel, standardize=config.standardize)
    if dag is None:
        dag = build_grid_dag(atlas.p, atlas.q)
    state = ActiveSetState(dag, atlas, config.weights)

    start_labels = sorted(dag.sources())
    eta0 = alpha0 = None
    if warm_start is not None:
        labels, eta0, alpha0 = warm_start
        start_labels = list(labels)
    for v in start_labels:
        state.sub.add(v)
        state.grams.append(state.node_gram(v))
    state.refresh_frontier()

    n_solves = 0
    trajectory: list[list] = []
    objectives: list[float] = []

    def resolve(eta_init, alpha_init):
        nonlocal n_solves
        state.red = _reduced_solve(state, y, lam, config, eta_init, alpha_init)
        n_solves += 1
        trajectory.append(list(state.sub.labels))
        objectives.append(float(state.red.objective))

    resolve(eta0, alpha0)
    budget_ok = True

    # phase 1: necessary condition
    while True:
        viol = necessary_condition_violators(state)
        if not viol:
            break
        if len(state.sub) >= config.q_max:
            budget_ok = False
            break
        t = viol[0][0]
        state.add_vertex(t)
        resolve(_extended_eta(state, state.red.eta), state.alpha)

    # phase 2: sufficient condition
    residual = 0.0
    if budget_ok:
        while True:
            viol = sufficient_condition_violators(state, config.eps_gap, lam)
            if not viol:
                scores = state.sufficient_scores()
                worst = max((s for _, s in scores), default=0.0)
                residual = max(0.0, worst - state.omega_squared())
                break
            if len(state.sub) >= config.q_max:
                budget_ok = False
                break
            t = viol[0][0]
            state.add_vertex(t)
            resolve(_extended_eta(state, state.red.eta), state.alpha)

    gap_certified = budget_ok and state.red.converged
    total_gap = state.red.gap_bound + 0.5 * lam * residual if gap_certified else np.inf

    # read off the sparsity pattern: smoothing leaves strictly positive dust
    zeta = state.red.zeta
    tau = config.prune_rel_tol * (zeta.max() if len(zeta) else 0.0)
    kept = [w for w, zw in zip(state.sub.labels, zeta) if zw > tau]
    kept_set = hull(dag, kept)
    active = sorted(kept_set)
    zmap = dict(zip(state.sub.labels, zeta))
    zeta_active = np.array([zmap[w] for w in active])

    Kz = np.zeros((atlas.n, atlas.n))
    for w, zw in zip(state.sub.labels, zeta):
        Kz += zw * state.node_gram(w)
    fitted = Kz @ state.alpha + state.red.sol.b

    dag_info = {
        "kind": "grid" if isinstance(dag, GridDag) else "custom",
        "p": atlas.p,
        "q": atlas.q,
        "beta": config.weights.beta,
        "d_r": config.weights.d_r,
    }
    return HklModel(
        active=active,
        zeta=zeta_active,
        alpha=state.alpha.copy(),
        b=float(state.red.sol.b),
        lam=float(lam),
        kernel_name=atlas.family.name,
        kernel_params=atlas.family.params(),
        loss_kind=config.loss.kind,
        loss_eps=config.loss.eps,
        weights=config.weights,
        standard_mean=atlas.standardizer.mean,
        standard_scale=atlas.standardizer.scale,
        X_train=X,
        dag_info=dag_info,
        gap=float(total_gap),
        gap_certified=bool(gap_certified),
        active_raw=list(state.sub.labels),
        eta=state.red.eta.copy(),
        fitted=fitted,
        n_reduced_solves=n_solves,
        w_trajectory=trajectory,
        objective_trajectory=objectives,
    )


def predict(model: HklModel, X_new: np.ndarray) -> np.ndarray:
    return model.predict(X_new)


def full_gap_by_enumeration(
    dag: Dag,
    atlas: KernelAtlas,
    weights: WeightScheme,
    y: np.ndarray,
    lam: float,
    loss: LossModel,
    active: Sequence,
    eta_tilde: np.ndarray,
    alpha: np.ndarray,
) -> float:
    """Brute-force upper bound on the total duality gap over the whole DAG.

    Only feasible when the DAG is small enough to enumerate.  Rebuilds the
    kernel-side gap with the full weighted kernel (weights vanish off the
    active set) and bounds the weight-side gap with the feasible dual
    candidate that mixes the eta-induced rows on W with the closed-form rows
    on the complement, also comparing against the all-closed-form candidate.
    """
    labels = list(dag.vertices())
    Wset = set(active)
    sub = SubDag(dag, list(active), weights)
    zeta_W = zeta_from_eta(sub, np.asarray(eta_tilde, dtype=float))
    zmap = dict(zip(sub.labels, zeta_W))

    Kz = np.zeros((atlas.n, atlas.n))
    for w in sub.labels:
        if zmap[w] > 0:
            Kz += zmap[w] * atlas.node_gram(w)
    g_kernel = gap_kernel(Kz, y, alpha, lam, loss)

    a_all = {v: float(alpha @ (atlas.node_gram(v) @ alpha)) for v in labels}
    d_of = {v: weights.weight(dag.depth(v)) for v in labels}
    primal = sum(zmap[w] * a_all[w] for w in sub.labels)

    # candidate 1: eta rows on W, closed-form rows on the complement
    rows = []
    eta_map = dict(zip(sub.labels, np.asarray(eta_tilde, dtype=float)))
    for v in labels:
        if v in Wset:
            if eta_map[v] <= 0:
                continue
            val = sum(
                (zmap[w] / eta_map[v]) ** 2 * a_all[w]
                for w in dag.descendants(v)
                if w in Wset
            ) / d_of[v] ** 2
        else:
            val = 0.0
            for w in dag.descendants(v):
                S = sum(d_of[u] for u in dag.ancestors(w) if u not in Wset)
                val += a_all[w] / S**2
        rows.append(val)
    bound1 = max(rows)

    # candidate 2: closed-form kappa over the entire DAG
    S_full = {w: sum(d_of[u] for u in dag.ancestors(w)) for w in labels}
    bound2 = max(
        sum(a_all[w] / S_full[w] ** 2 for w in dag.descendants(v)) for v in labels
    )

    g_weights = min(bound1, bound2) - primal
    return g_kernel + 0.5 * lam * max(0.0, g_weights)
