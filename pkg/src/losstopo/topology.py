"""0-dimensional sublevel-set persistence of a grid.

Vertices are processed in the total order ``(value, linear index)``, so ties
and plateaus are resolved deterministically. A vertex with no lower neighbour
starts a component (a minimum); a vertex joining two or more components is a
saddle, and at each merge the component with the younger minimum dies (elder
rule). The component of the global minimum never dies; its bar is closed at
``f_max`` where the root of the merge tree sits.

Minimum ids are the rank of the minimum in that order (0 is the global
minimum). :func:`build_merge_tree` and :func:`stable_manifolds` agree on them.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import UsageError
from .sampler import LandscapeGrid

__all__ = [
    "ADJACENCIES",
    "neighbor_table",
    "Node",
    "Edge",
    "MergeTree",
    "PersistencePair",
    "Barcode",
    "StableManifolds",
    "build_merge_tree",
    "stable_manifolds",
    "simplify",
    "Simplification",
]

ADJACENCIES = ("axis", "full")


def _offsets(ndim: int, adjacency: str) -> list[tuple[int, ...]]:
    if adjacency == "axis":
        out = []
        for ax in range(ndim):
            for step in (-1, 1):
                o = [0] * ndim
                o[ax] = step
                out.append(tuple(o))
        return out
    if adjacency == "full":
        return [o for o in itertools.product((-1, 0, 1), repeat=ndim) if any(o)]
    raise UsageError(f"adjacency must be one of {ADJACENCIES}, got {adjacency!r}")


def neighbor_table(shape: tuple[int, ...], adjacency: str = "axis") -> np.ndarray:
    """``(n_offsets, N)`` array of neighbour linear indices, ``-1`` past the boundary.

    ``axis`` gives the 2n face neighbours, ``full`` all ``3^n - 1`` cells of
    the surrounding cube. There is no wraparound.
    """
    shape = tuple(shape)
    coords = np.indices(shape).reshape(len(shape), -1)
    offs = _offsets(len(shape), adjacency)
    table = np.full((len(offs), coords.shape[1]), -1, dtype=np.int64)
    extent = np.array(shape)[:, None]
    for row, o in enumerate(offs):
        moved = coords + np.array(o)[:, None]
        ok = np.all((moved >= 0) & (moved < extent), axis=0)
        table[row, ok] = np.ravel_multi_index(moved[:, ok], shape)
    return table


def filtration_rank(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex order by (value, index) and the rank of every vertex in it."""
    order = np.lexsort((np.arange(values.shape[0]), values))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    return order, rank


@dataclass(frozen=True)
class Node:
    id: int
    index: int
    value: float
    kind: str  # "minimum" | "saddle" | "root"


@dataclass(frozen=True)
class Edge:
    parent: int
    child: int
    weight: float


@dataclass(frozen=True)
class PersistencePair:
    minimum: int
    min_index: int
    birth: float
    death: float
    saddle: int | None = None
    saddle_index: int | None = None
    essential: bool = False
    absorber: int | None = None  # surviving (elder) minimum at the merge

    @property
    def persistence(self) -> float:
        return self.death - self.birth

    def to_dict(self) -> dict:
        return {
            "minimum": self.minimum,
            "min_index": self.min_index,
            "saddle": self.saddle,
            "saddle_index": self.saddle_index,
            "birth": self.birth,
            "death": self.death,
            "persistence": self.persistence,
            "essential": self.essential,
            "absorber": self.absorber,
        }


@dataclass(frozen=True)
class MergeTree:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    adjacency: str
    grid_digest: str

    @property
    def minima(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind == "minimum"]

    @property
    def root(self) -> int:
        return next(n.id for n in self.nodes if n.kind == "root")

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    @property
    def _by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    def children(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            out[e.parent].append(e.child)
        return out

    def parents(self) -> dict[int, int]:
        return {e.child: e.parent for e in self.edges}

    def to_dict(self) -> dict:
        return {
            "adjacency": self.adjacency,
            "grid_digest": self.grid_digest,
            "nodes": [{"id": n.id, "index": n.index, "value": n.value, "kind": n.kind} for n in self.nodes],
            "edges": [{"parent": e.parent, "child": e.child, "persistence": e.weight} for e in self.edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Barcode:
    pairs: tuple[PersistencePair, ...]
    adjacency: str
    grid_digest: str

    @property
    def essential(self) -> list[PersistencePair]:
        return [p for p in self.pairs if p.essential]

    @property
    def finite(self) -> list[PersistencePair]:
        return [p for p in self.pairs if not p.essential]

    def diagram(self, finite_only: bool = False) -> np.ndarray:
        """``(k, 2)`` array of (birth, death)."""
        ps = self.finite if finite_only else list(self.pairs)
        return np.array([[p.birth, p.death] for p in ps], dtype=float).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {
            "adjacency": self.adjacency,
            "grid_digest": self.grid_digest,
            "pairs": [p.to_dict() for p in self.pairs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class StableManifolds:
    """Steepest-descent basins.

    ``assignment[i]`` is the minimum id grid point ``i`` flows to, ``sizes[m]``
    the number of points of minimum ``m`` (0 once it has been cancelled) and
    ``min_index[m]`` its grid index.
    """

    assignment: np.ndarray
    sizes: np.ndarray
    min_index: np.ndarray
    adjacency: str
    grid_digest: str
    active: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.active:
            object.__setattr__(self, "active", tuple(int(m) for m in np.flatnonzero(self.sizes)))

    @property
    def N(self) -> int:
        return int(self.assignment.shape[0])

    def to_dict(self) -> dict:
        return {
            "adjacency": self.adjacency,
            "grid_digest": self.grid_digest,
            "assignment": self.assignment.tolist(),
            "sizes": self.sizes.tolist(),
            "min_index": self.min_index.tolist(),
        }


def _check_grid(grid: LandscapeGrid):
    if grid.N < 1:
        raise UsageError("grid is empty")


def build_merge_tree(grid: LandscapeGrid, adjacency: str = "axis") -> tuple[MergeTree, Barcode]:
    """Merge tree and barcode of the sublevel-set filtration of ``grid``.

    >>> from losstopo.sampler import LandscapeGrid
    >>> tree, bars = build_merge_tree(LandscapeGrid.from_array([0, 2, 1, 2, 0]))
    >>> [(p.min_index, p.saddle_index, p.persistence) for p in bars.finite]
    [(2, 1, 1.0), (4, 3, 2.0)]
    """
    _check_grid(grid)
    values = grid.values
    N = grid.N
    nbrs = neighbor_table(grid.shape, adjacency)
    order, rank = filtration_rank(values)

    parent = np.full(N, -1, dtype=np.int64)
    elder = np.full(N, -1, dtype=np.int64)  # root -> grid index of its oldest minimum
    top = np.full(N, -1, dtype=np.int64)  # root -> provisional id of the chain's top tree node

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    # provisional nodes: ("minimum"/"saddle", grid index); renumbered below
    prov: list[tuple[str, int]] = []
    prov_edges: list[tuple[int, int]] = []
    pairs_raw: list[tuple[int, int, int]] = []  # (dying min idx, saddle idx, elder min idx)

    nbr_rows = nbrs.T.tolist()
    rank_l = rank.tolist()
    for v in order.tolist():
        rv = rank_l[v]
        roots = []
        for u in nbr_rows[v]:
            if u >= 0 and rank_l[u] < rv:
                r = find(u)
                if r not in roots:
                    roots.append(r)
        if not roots:
            parent[v] = v
            elder[v] = v
            top[v] = len(prov)
            prov.append(("minimum", v))
            continue
        if len(roots) == 1:
            parent[v] = roots[0]
            continue
        roots.sort(key=lambda r: rank_l[elder[r]])
        keep = roots[0]
        sid = len(prov)
        prov.append(("saddle", v))
        for r in roots:
            prov_edges.append((sid, int(top[r])))
        for r in roots[1:]:
            pairs_raw.append((int(elder[r]), v, int(elder[keep])))
            parent[r] = keep
        top[keep] = sid
        parent[v] = keep

    final_root = find(int(order[0]))
    root_prov = len(prov)
    prov.append(("root", int(order[-1])))
    prov_edges.append((root_prov, int(top[final_root])))

    # renumber: minima by birth order, then saddles, then the root
    mins = [i for i, (k, _) in enumerate(prov) if k == "minimum"]
    sads = [i for i, (k, _) in enumerate(prov) if k == "saddle"]
    new_id = {old: new for new, old in enumerate(mins + sads + [root_prov])}
    min_id_of_index = {prov[i][1]: new_id[i] for i in mins}
    saddle_id_of_index = {prov[i][1]: new_id[i] for i in sads}

    nodes = [None] * len(prov)
    for old, (kind, idx) in enumerate(prov):
        nodes[new_id[old]] = Node(new_id[old], idx, float(values[idx]), kind)
    edges = []
    for p_old, c_old in prov_edges:
        p, c = nodes[new_id[p_old]], nodes[new_id[c_old]]
        edges.append(Edge(p.id, c.id, abs(p.value - c.value)))
    edges.sort(key=lambda e: (e.parent, e.child))

    f_max = float(values[order[-1]])
    gmin = int(order[0])
    pairs = [
        PersistencePair(
            minimum=min_id_of_index[gmin], min_index=gmin, birth=float(values[gmin]),
            death=f_max, essential=True,
        )
    ]
    for m_idx, s_idx, e_idx in pairs_raw:
        pairs.append(
            PersistencePair(
                minimum=min_id_of_index[m_idx], min_index=m_idx,
                birth=float(values[m_idx]), death=float(values[s_idx]),
                saddle=saddle_id_of_index[s_idx], saddle_index=s_idx,
                absorber=min_id_of_index[e_idx],
            )
        )
    digest = grid.digest
    return (
        MergeTree(tuple(nodes), tuple(edges), adjacency, digest),
        Barcode(tuple(pairs), adjacency, digest),
    )


def stable_manifolds(grid: LandscapeGrid, adjacency: str = "axis") -> StableManifolds:
    """Assign every grid point to the minimum its discrete steepest descent reaches.

    Each step moves to the lowest neighbour in the (value, index) order as long
    as it is lower than the current point, so the walk always terminates.
    """
    _check_grid(grid)
    N = grid.N
    nbrs = neighbor_table(grid.shape, adjacency)
    _, rank = filtration_rank(grid.values)
    big = np.iinfo(np.int64).max
    nbr_rank = np.where(nbrs >= 0, rank[np.maximum(nbrs, 0)], big)
    if nbr_rank.shape[0]:
        best = np.argmin(nbr_rank, axis=0)
        best_rank = nbr_rank[best, np.arange(N)]
        step = np.where(best_rank < rank, nbrs[best, np.arange(N)], np.arange(N))
    else:
        step = np.arange(N)
    # pointer jumping until every point points at its terminal minimum
    while True:
        nxt = step[step]
        if np.array_equal(nxt, step):
            break
        step = nxt
    is_min = step == np.arange(N)
    min_idx = np.flatnonzero(is_min)
    min_idx = min_idx[np.argsort(rank[min_idx])]
    id_of = np.full(N, -1, dtype=np.int64)
    id_of[min_idx] = np.arange(min_idx.shape[0])
    assignment = id_of[step]
    sizes = np.bincount(assignment, minlength=min_idx.shape[0])
    return StableManifolds(assignment, sizes, min_idx, adjacency, grid.digest)


class Simplification(NamedTuple):
    tree: MergeTree
    barcode: Barcode
    manifolds: StableManifolds | None


def simplify(tree: MergeTree, barcode: Barcode, tau: float,
             manifolds: StableManifolds | None = None) -> Simplification:
    """Cancel every finite pair with persistence below ``tau``.

    Pairs go in ascending persistence (younger minimum first on ties). The
    cancelled minimum's leaf is removed from the tree, a saddle left with one
    child is spliced out, and the minimum's stable-manifold points pass to the
    minimum that absorbed it at the saddle. The essential pair always stays;
    ``tau=0`` returns the inputs unchanged.
    """
    if tau < 0:
        raise UsageError(f"tau must be >= 0, got {tau}")
    doomed = sorted(
        (p for p in barcode.finite if p.persistence < tau),
        key=lambda p: (p.persistence, -p.minimum),
    )
    if not doomed:
        return Simplification(tree, barcode, manifolds)

    absorbed_by: dict[int, int] = {}
    for p in doomed:
        absorbed_by[p.minimum] = p.absorber

    def final(m):
        while m in absorbed_by:
            m = absorbed_by[m]
        return m

    nodes = {n.id: n for n in tree.nodes}
    children = tree.children()
    parents = tree.parents()
    for p in doomed:
        leaf = p.minimum
        if children[leaf]:
            raise AssertionError(f"minimum {leaf} is not a leaf at cancellation time")
        sad = parents.pop(leaf)
        children[sad].remove(leaf)
        del nodes[leaf], children[leaf]
        if len(children[sad]) == 1 and nodes[sad].kind == "saddle":
            (only,) = children[sad]
            up = parents.pop(sad)
            children[up][children[up].index(sad)] = only
            parents[only] = up
            del nodes[sad], children[sad]

    edges = sorted(
        (Edge(parents[c], c, abs(nodes[parents[c]].value - nodes[c].value)) for c in parents),
        key=lambda e: (e.parent, e.child),
    )
    new_tree = replace(tree, nodes=tuple(nodes[i] for i in sorted(nodes)), edges=tuple(edges))
    gone = set(absorbed_by)
    kept = tuple(
        p if p.absorber is None else replace(p, absorber=final(p.absorber))
        for p in barcode.pairs
        if p.minimum not in gone
    )
    new_bars = replace(barcode, pairs=kept)

    new_man = None
    if manifolds is not None:
        remap = np.arange(manifolds.sizes.shape[0])
        for m in gone:
            remap[m] = final(m)
        assignment = remap[manifolds.assignment]
        sizes = np.bincount(assignment, minlength=manifolds.sizes.shape[0])
        new_man = replace(manifolds, assignment=assignment, sizes=sizes,
                          active=tuple(int(m) for m in np.flatnonzero(sizes)))
    return Simplification(new_tree, new_bars, new_man)
