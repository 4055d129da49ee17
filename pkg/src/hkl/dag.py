"""Directed acyclic graphs of kernel indices.

Kernels are indexed by vertices of a DAG; selecting a kernel is only allowed
after all of its ancestors are selected.  The central objects are the directed
grid ``{0,...,q}^p`` (vertices are integer tuples, edges increment one
coordinate) and explicit DAGs over arbitrary hashable labels.  Both expose the
same query surface: parents/children, depth, ancestors/descendants, hull,
sources and sinks of subsets.

The directed grid is kept implicit: a grid with ``(q+1)^p`` vertices up to
``4^256`` is representable because every query is answered arithmetically from
the label.  Materializing the vertex list is only allowed below a capacity cap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

GridLabel = tuple[int, ...]

#: Default cap on materializing vertices of an implicit grid.
DENSE_VERTEX_CAP = 2**20


class CapacityError(RuntimeError):
    """Raised when an operation would materialize too many vertices."""


@dataclass(frozen=True)
class WeightScheme:
    """Per-vertex weights: ``d_r`` at the sources, ``beta**depth`` elsewhere.

    ``beta > 1`` penalizes deep vertices more, which is what makes the
    active-set search terminate in practice; ``d_r`` in (0, 1] is the common
    weight of all sources.
    """

    beta: float = 2.0
    d_r: float = 1.0

    def __post_init__(self):
        if not self.beta > 1.0:
            raise ValueError(f"beta must be > 1, got {self.beta}")
        if not 0.0 < self.d_r <= 1.0:
            raise ValueError(f"d_r must be in (0, 1], got {self.d_r}")

    def weight(self, depth: int) -> float:
        return self.d_r if depth == 0 else self.beta**depth


class GridDag:
    """Implicit directed grid on ``{0,...,q}^p``.

    Vertex labels are length-``p`` integer tuples; ``(j1,...,jp)`` is connected
    to each coordinate-increment neighbor.  The single source is ``(0,...,0)``
    and ``depth(v) = sum(v)``.
    """

    is_grid = True

    def __init__(self, p: int, q: int, dense_cap: int = DENSE_VERTEX_CAP):
        if p < 1 or q < 1:
            raise ValueError("grid DAG needs p >= 1 and q >= 1")
        self.p = p
        self.q = q
        self.num_vertices = (q + 1) ** p
        self.num_components = 1
        self.max_out_degree = p
        self._dense_cap = dense_cap

    # -- basic queries -------------------------------------------------

    def is_vertex(self, v: GridLabel) -> bool:
        return len(v) == self.p and all(0 <= j <= self.q for j in v)

    def _check(self, v: GridLabel) -> GridLabel:
        v = tuple(int(j) for j in v)
        if not self.is_vertex(v):
            raise KeyError(f"{v} is not a vertex of the {self.p}-dim grid")
        return v

    def depth(self, v: GridLabel) -> int:
        return sum(self._check(v))

    def parents(self, v: GridLabel) -> list[GridLabel]:
        v = self._check(v)
        return [v[:i] + (v[i] - 1,) + v[i + 1 :] for i in range(self.p) if v[i] > 0]

    def children(self, v: GridLabel) -> list[GridLabel]:
        v = self._check(v)
        return [
            v[:i] + (v[i] + 1,) + v[i + 1 :] for i in range(self.p) if v[i] < self.q
        ]

    def sources(self) -> list[GridLabel]:
        return [(0,) * self.p]

    def ancestors(self, v: GridLabel) -> set[GridLabel]:
        """All ``w <= v`` componentwise (including ``v`` itself)."""
        v = self._check(v)
        count = math.prod(j + 1 for j in v)
        if count > self._dense_cap:
            raise CapacityError(f"ancestor set of {v} has {count} vertices")
        return set(itertools.product(*(range(j + 1) for j in v)))

    def descendants(self, v: GridLabel) -> set[GridLabel]:
        """All ``w >= v`` componentwise (including ``v`` itself)."""
        v = self._check(v)
        count = math.prod(self.q - j + 1 for j in v)
        if count > self._dense_cap:
            raise CapacityError(f"descendant set of {v} has {count} vertices")
        return set(itertools.product(*(range(j, self.q + 1) for j in v)))

    def ancestor_count(self, v: GridLabel) -> int:
        return math.prod(j + 1 for j in self._check(v))

    # -- dense-mode helpers ---------------------------------------------

    @property
    def dense(self) -> bool:
        return self.num_vertices <= self._dense_cap

    def vertices(self) -> list[GridLabel]:
        """All labels in lexicographic (hence topological) order."""
        if not self.dense:
            raise CapacityError(
                f"grid has {self.num_vertices} vertices, above the dense cap "
                f"{self._dense_cap}; use the implicit queries instead"
            )
        return list(itertools.product(range(self.q + 1), repeat=self.p))

    def index_of(self, v: GridLabel) -> int:
        """Dense index of a label (mixed-radix, lexicographic)."""
        v = self._check(v)
        idx = 0
        for j in v:
            idx = idx * (self.q + 1) + j
        return idx

    def label_of(self, idx: int) -> GridLabel:
        if not 0 <= idx < self.num_vertices:
            raise KeyError(f"index {idx} out of range")
        out = []
        for _ in range(self.p):
            idx, j = divmod(idx, self.q + 1)
            out.append(j)
        return tuple(reversed(out))


class ExplicitDag:
    """DAG stored with explicit vertex and adjacency lists.

    Vertices may carry arbitrary hashable labels.  Construction verifies
    acyclicity by computing a topological order (Kahn's algorithm with
    insertion-order tie-breaking, so runs are deterministic).
    """

    is_grid = False

    def __init__(
        self,
        labels: Sequence[Hashable],
        edges: Iterable[tuple[Hashable, Hashable]] = (),
    ):
        self._labels = list(labels)
        if len(set(self._labels)) != len(self._labels):
            raise ValueError("duplicate vertex labels")
        index = {v: i for i, v in enumerate(self._labels)}
        self._children: dict[Hashable, list[Hashable]] = {v: [] for v in self._labels}
        self._parents: dict[Hashable, list[Hashable]] = {v: [] for v in self._labels}
        for u, w in edges:
            if u not in index or w not in index:
                raise KeyError(f"edge ({u}, {w}) references unknown vertex")
            if w not in self._children[u]:
                self._children[u].append(w)
                self._parents[w].append(u)

        self.topo_order = self._toposort()
        self.num_vertices = len(self._labels)
        self.max_out_degree = max(
            (len(c) for c in self._children.values()), default=0
        )
        self.num_components = self._count_components()
        self._depths = self._compute_depths()

    def _toposort(self) -> list[Hashable]:
        indeg = {v: len(self._parents[v]) for v in self._labels}
        ready = [v for v in self._labels if indeg[v] == 0]
        order: list[Hashable] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for w in self._children[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        if len(order) != len(self._labels):
            raise ValueError("graph has a cycle")
        return order

    def _count_components(self) -> int:
        seen: set[Hashable] = set()
        count = 0
        for v in self._labels:
            if v in seen:
                continue
            count += 1
            stack = [v]
            while stack:
                u = stack.pop()
                if u in seen:
                    continue
                seen.add(u)
                stack.extend(self._children[u])
                stack.extend(self._parents[u])
        return count

    def _compute_depths(self) -> dict[Hashable, int]:
        # Shortest path from any source, following the topological order.
        depths: dict[Hashable, int] = {}
        for v in self.topo_order:
            ps = self._parents[v]
            depths[v] = 0 if not ps else 1 + min(depths[u] for u in ps)
        return depths

    # -- queries ---------------------------------------------------------

    def is_vertex(self, v: Hashable) -> bool:
        return v in self._children

    def _check(self, v: Hashable) -> Hashable:
        if not self.is_vertex(v):
            raise KeyError(f"{v} is not a vertex")
        return v

    def vertices(self) -> list[Hashable]:
        return list(self._labels)

    def depth(self, v: Hashable) -> int:
        return self._depths[self._check(v)]

    def parents(self, v: Hashable) -> list[Hashable]:
        return list(self._parents[self._check(v)])

    def children(self, v: Hashable) -> list[Hashable]:
        return list(self._children[self._check(v)])

    def sources(self) -> list[Hashable]:
        return [v for v in self._labels if not self._parents[v]]

    def ancestors(self, v: Hashable) -> set[Hashable]:
        out = {self._check(v)}
        stack = [v]
        while stack:
            for u in self._parents[stack.pop()]:
                if u not in out:
                    out.add(u)
                    stack.append(u)
        return out

    def descendants(self, v: Hashable) -> set[Hashable]:
        out = {self._check(v)}
        stack = [v]
        while stack:
            for u in self._children[stack.pop()]:
                if u not in out:
                    out.add(u)
                    stack.append(u)
        return out


Dag = GridDag | ExplicitDag


def build_grid_dag(p: int, q: int, dense_cap: int = DENSE_VERTEX_CAP) -> GridDag:
    """Directed grid ``{0,...,q}^p`` with coordinate-increment edges."""
    return GridDag(p, q, dense_cap=dense_cap)


def build_powerset_dag(p: int, dense_cap: int = DENSE_VERTEX_CAP) -> GridDag:
    """DAG of all subsets of ``{1,...,p}``, i.e. the grid with ``q = 1``."""
    return build_grid_dag(p, 1, dense_cap=dense_cap)


def build_edgeless_dag(labels: Sequence[Hashable]) -> ExplicitDag:
    """DAG with no edges: every vertex is its own source (flat MKL)."""
    return ExplicitDag(labels, edges=())


def ancestors(dag: Dag, v: Hashable) -> set[Hashable]:
    return dag.ancestors(v)


def descendants(dag: Dag, v: Hashable) -> set[Hashable]:
    return dag.descendants(v)


def hull(dag: Dag, W: Iterable[Hashable]) -> set[Hashable]:
    """Union of the ancestor sets of all members of ``W``.

    Extensive, monotone and idempotent; the hulls are exactly the sparsity
    patterns the DAG-adapted norm can produce.
    """
    out: set[Hashable] = set()
    for w in W:
        out |= dag.ancestors(w)
    return out


def sources_of(dag: Dag, W: Iterable[Hashable]) -> set[Hashable]:
    """Members of ``W`` with no parent inside ``W``."""
    Wset = set(W)
    return {w for w in Wset if not any(u in Wset for u in dag.parents(w))}


def sinks_of(dag: Dag, W: Iterable[Hashable]) -> set[Hashable]:
    """Smallest subset of ``W`` with the same hull as ``W``.

    These are the members of ``W`` with no strict descendant inside ``W``
    (the extreme points of the pattern).
    """
    Wset = set(W)
    out = set()
    for w in Wset:
        if all(u == w or u not in Wset for u in dag.descendants(w)):
            out.add(w)
    return out


def frontier_of(dag: Dag, W: Iterable[Hashable]) -> set[Hashable]:
    """Sources of the complement of ``W``, computed without enumerating it.

    A vertex t is in ``sources(W^c)`` iff t is outside ``W`` and every parent
    of t lies inside ``W``.  Candidates are children of members of ``W`` plus
    the global sources, so the cost is ``O(|W| * max_out_degree)``.
    """
    Wset = set(W)
    cands: set[Hashable] = set()
    for w in Wset:
        cands.update(dag.children(w))
    cands.update(dag.sources())
    cands -= Wset
    return {t for t in cands if all(u in Wset for u in dag.parents(t))}


class SubDag:
    """Restriction of a DAG to an ordered, hull-closed vertex subset.

    Precomputes ancestor/descendant index lists within the subset so that the
    weight solver can evaluate ancestor sums without touching the (possibly
    huge) parent DAG.  For a hull-closed subset the in-set ancestors of a
    member coincide with its full ancestor set.
    """

    def __init__(self, dag: Dag, labels: Sequence[Hashable], weights: WeightScheme):
        self.dag = dag
        self.weights = weights
        self.labels: list[Hashable] = []
        self.index: dict[Hashable, int] = {}
        self.anc: list[list[int]] = []  # ancestor indices within the set (incl self)
        self.desc: list[list[int]] = []  # descendant indices within the set
        self.d: list[float] = []  # per-vertex weight d_v
        for v in labels:
            self.add(v)

    def __len__(self) -> int:
        return len(self.labels)

    def add(self, v: Hashable) -> int:
        """Append one vertex; its in-set parents must already be present."""
        if v in self.index:
            raise ValueError(f"{v} already in restriction")
        i = len(self.labels)
        anc_i = {i}
        for u in self.dag.parents(v):
            j = self.index.get(u)
            if j is not None:
                anc_i.update(self.anc[j])
        self.labels.append(v)
        self.index[v] = i
        self.anc.append(sorted(anc_i))
        self.desc.append([i])
        for j in sorted(anc_i):
            if j != i:
                self.desc[j].append(i)
        self.d.append(self.weights.weight(self.dag.depth(v)))
        return i

    def d_array(self) -> np.ndarray:
        return np.asarray(self.d, dtype=float)


def gamma_constant(dag: Dag, weights: WeightScheme) -> float:
    """Hull-selection difficulty constant of the DAG.

    ``4 log(2 num(V)) / (1 - 1/beta)^2 + 4 log(deg(V)) / (log beta)^3`` with
    ``num(V)`` the number of weakly-connected components and ``deg(V)`` one
    plus the maximum out-degree.  Grows only logarithmically with the
    branching, which is what permits exponentially large vertex sets.
    """
    beta = weights.beta
    num_v = dag.num_components
    deg_v = dag.max_out_degree + 1
    return (
        4.0 * math.log(2.0 * num_v) / (1.0 - 1.0 / beta) ** 2
        + 4.0 * math.log(deg_v) / math.log(beta) ** 3
    )
