"""Cluster tree, admissibility, adaptive cross approximation and H-matrices.

Triangles are bisected recursively at the median centroid along the longest
box axis and renumbered in leaf order.  Each RWG basis belongs to the node
holding its plus (lower-index) triangle, so every node owns a contiguous
range of basis indices and every block of the partition is a rectangle of
the reordered matrix.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
import json
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import MeshError, adjacency_walk, reorder_triangles, triangle_neighbors

__all__ = [
    "ClusterNode",
    "ClusterTree",
    "BlockPair",
    "LowRankBlock",
    "HMatrix",
    "build_tree",
    "admissible",
    "build_block_structure",
    "aca",
    "recompress",
    "build_hmatrix",
    "hmatvec",
    "coverage_bitmap",
]

NEAR = "nearDense"
FAR = "farLowRank"


@dataclass(eq=False)
class ClusterNode:
    """Node of the binary cluster tree over the reordered triangles."""

    tri_start: int
    tri_stop: int
    level: int
    edge_start: int = 0
    edge_stop: int = 0
    box_min: np.ndarray = field(default_factory=lambda: np.zeros(3), repr=False)
    box_max: np.ndarray = field(default_factory=lambda: np.zeros(3), repr=False)
    children: list = field(default_factory=list, repr=False)
    index: int = 0

    @property
    def is_leaf(self):
        return not self.children

    @property
    def num_triangles(self):
        return self.tri_stop - self.tri_start

    @property
    def num_edges(self):
        return self.edge_stop - self.edge_start

    @property
    def triangle_ids(self):
        return np.arange(self.tri_start, self.tri_stop)

    @property
    def edge_ids(self):
        return np.arange(self.edge_start, self.edge_stop)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.box_max - self.box_min))

    def walk(self):
        """Yield the subtree in depth-first, left-to-right order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))


@dataclass(eq=False)
class ClusterTree:
    """Cluster tree plus the triangle-reordered mesh it indexes.

    ``permutation[i]`` is the original id of reordered triangle ``i``.
    """

    mesh: object
    permutation: np.ndarray
    root: ClusterNode
    leaf_size: int
    depth: Optional[int] = None

    @property
    def leaves(self):
        return [n for n in self.root.walk() if n.is_leaf]

    @property
    def nodes(self):
        return list(self.root.walk())

    @property
    def num_levels(self):
        return 1 + max(n.level for n in self.root.walk())


def _median_split(tris, c):
    pts = c[tris]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
    order = np.argsort(pts[:, axis], kind="stable")
    half = len(tris) // 2
    return tris[order[:half]], tris[order[half:]]


def _bisection_order(tris, c):
    # continued median bisection down to single triangles
    if len(tris) <= 2:
        return list(tris)
    left, right = _median_split(tris, c)
    return _bisection_order(left, c) + _bisection_order(right, c)


def build_tree(mesh, leaf_size=30, depth=None):
    """Build the cluster tree of `mesh`.

    Parameters
    ----------
    mesh : SurfaceMesh
    leaf_size : int
        A node becomes a leaf once it owns at most this many RWG bases.
    depth : int, optional
        Split every node down to exactly this level instead (a level-5 tree
        has 32 leaves), ignoring `leaf_size`.

    Returns
    -------
    ClusterTree
        Its ``mesh`` is the input mesh renumbered in leaf order.  Inside a
        leaf, triangles follow an edge-adjacent walk so that neighbors in the
        linear order mostly share an edge.
    """
    T = mesh.num_triangles
    if T == 0:
        raise MeshError("cannot build a cluster tree on an empty mesh")
    if leaf_size < 1:
        raise ValueError("leaf_size must be positive")
    c = mesh.centroids
    if T > 1 and np.ptp(c, axis=0).max() == 0.0:
        raise MeshError("degenerate mesh: all triangle centroids coincide")
    et = mesh.edge_triangles
    nbr = triangle_neighbors(mesh)
    stamp = np.full(T, -1, dtype=np.int64)
    order: List[int] = []
    counter = [0]

    def split(tris, edges, level):
        start = len(order)
        if depth is not None:
            leaf = level >= depth
        else:
            leaf = len(edges) <= leaf_size
        leaf = leaf or len(tris) < 2
        if leaf:
            order.extend(adjacency_walk(nbr, _bisection_order(tris, c)))
            return ClusterNode(start, len(order), level)
        left, right = _median_split(tris, c)
        counter[0] += 1
        tag = counter[0]
        stamp[left] = tag
        to_left = (stamp[et[edges, 0]] == tag) | (stamp[et[edges, 1]] == tag)
        kids = [split(left, edges[to_left], level + 1),
                split(right, edges[~to_left], level + 1)]
        return ClusterNode(start, len(order), level, children=kids)

    root = split(np.arange(T), np.arange(mesh.num_unknowns), 0)
    perm = np.asarray(order, dtype=np.int64)
    new = reorder_triangles(mesh, perm)
    plus = new.edge_triangles[:, 0]
    minus = new.edge_triangles[:, 1]
    tv = new.vertices[new.triangles]                    # (T, 3, 3)
    tmin = tv.min(axis=1)
    tmax = tv.max(axis=1)
    for i, node in enumerate(root.walk()):
        node.index = i
        node.edge_start = int(np.searchsorted(plus, node.tri_start))
        node.edge_stop = int(np.searchsorted(plus, node.tri_stop))
        # box of the node's triangles and of the supports of its bases
        ids = np.concatenate([node.triangle_ids,
                              minus[node.edge_start:node.edge_stop]])
        node.box_min = tmin[ids].min(axis=0)
        node.box_max = tmax[ids].max(axis=0)
    return ClusterTree(new, perm, root, leaf_size, depth)


def box_distance(t, s):
    """Euclidean distance between the axis-aligned boxes of two nodes."""
    gap = np.maximum(0.0, np.maximum(t.box_min - s.box_max, s.box_min - t.box_max))
    return float(np.linalg.norm(gap))


def admissible(t, s, eta=1.0):
    """True iff ``eta * dist(t, s) >= min(diam(t), diam(s))`` with dist > 0."""
    dist = box_distance(t, s)
    if dist <= 0.0:
        return False
    return eta * dist >= min(t.diameter, s.diameter)


@dataclass(frozen=True, eq=False)
class BlockPair:
    test: ClusterNode
    source: ClusterNode
    kind: str
    level: int

    @property
    def rows(self):
        return self.test.edge_ids

    @property
    def cols(self):
        return self.source.edge_ids

    @property
    def shape(self):
        return (self.test.num_edges, self.source.num_edges)


def build_block_structure(root, eta=1.0):
    """Top-down dual traversal producing the block partition.

    Pairs owning no basis on either side are dropped, so the returned blocks
    tile exactly the ``N x N`` index square.
    """
    blocks = []
    stack = [(root, root)]
    while stack:
        t, s = stack.pop()
        if t.num_edges == 0 or s.num_edges == 0:
            continue
        level = max(t.level, s.level)
        if admissible(t, s, eta):
            blocks.append(BlockPair(t, s, FAR, level))
        elif t.is_leaf and s.is_leaf:
            blocks.append(BlockPair(t, s, NEAR, level))
        elif t.is_leaf:
            stack.extend((t, c) for c in reversed(s.children))
        elif s.is_leaf:
            stack.extend((c, s) for c in reversed(t.children))
        else:
            stack.extend((a, b) for a in reversed(t.children)
                         for b in reversed(s.children))
    return blocks


def coverage_bitmap(blocks, n):
    """Number of blocks covering each ``(row, col)`` index pair."""
    cover = np.zeros((n, n), dtype=np.int32)
    for b in blocks:
        cover[b.test.edge_start:b.test.edge_stop,
              b.source.edge_start:b.source.edge_stop] += 1
    return cover


# ----------------------------------------------------------------------
# low-rank blocks
# ----------------------------------------------------------------------
@dataclass
class LowRankBlock:
    """``A ~= U @ V`` with ``U`` (rows x rank) and ``V`` (rank x cols)."""

    U: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[1])

    @property
    def stored_entries(self):
        return self.U.size + self.V.size

    def to_dense(self):
        return self.U @ self.V


class AcaStagnation(RuntimeError):
    """Cross approximation ran out of pivots before meeting its tolerance."""


def aca(get_row: Callable[[int], np.ndarray], get_col: Callable[[int], np.ndarray],
        shape, tol=1e-3, max_rank=None):
    """Partially pivoted adaptive cross approximation.

    Parameters
    ----------
    get_row, get_col : callables
        Return row ``i`` / column ``j`` of the block as 1D complex arrays.
    shape : (int, int)
    tol : float
        Stop once ``|u_k| |v_k| <= tol * |A_k|_F`` with the Frobenius norm of
        the running approximation updated incrementally.
    max_rank : int, optional
        Defaults to ``min(shape)``.

    Raises
    ------
    AcaStagnation
        If every row pivot is exhausted (or `max_rank` is hit) first.
    """
    m, n = shape
    kmax = min(m, n) if max_rank is None else min(max_rank, m, n)
    us, vs = [], []
    used_rows = np.zeros(m, bool)
    norm2 = 0.0
    i = 0
    while len(us) < kmax:
        used_rows[i] = True
        row = np.array(get_row(i), dtype=complex)
        for u, v in zip(us, vs):
            row -= u[i] * v
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) == 0.0:
            free = np.flatnonzero(~used_rows)
            if not len(free):
                break
            i = int(free[0])
            continue
        v = row / row[j]
        u = np.array(get_col(j), dtype=complex)
        for uu, vv in zip(us, vs):
            u -= vv[j] * uu
        nu2 = float(np.vdot(u, u).real)
        nv2 = float(np.vdot(v, v).real)
        cross = 0.0
        for uu, vv in zip(us, vs):
            cross += (np.vdot(uu, u) * np.vdot(v, vv)).real
        norm2 += nu2 * nv2 + 2.0 * cross
        us.append(u)
        vs.append(v)
        if np.sqrt(nu2 * nv2) <= tol * np.sqrt(max(norm2, 0.0)):
            return LowRankBlock(np.column_stack(us), np.vstack(vs))
        score = np.abs(u)
        score[used_rows] = -1.0
        i = int(np.argmax(score))
        if score[i] < 0:
            break
    if len(us) == min(m, n):
        # full rank reached: the cross is exact
        return LowRankBlock(np.column_stack(us), np.vstack(vs))
    raise AcaStagnation(f"cross approximation stagnated at rank {len(us)}")


def recompress(block, tol=1e-3):
    """QR + truncated SVD of the factors; never increases the rank.

    Keeps the smallest rank whose discarded singular values have Frobenius
    norm at most ``tol`` times that of the block.
    """
    U, V = block.U, block.V
    if block.rank == 0:
        return block
    qu, ru = np.linalg.qr(U)
    qv, rv = np.linalg.qr(V.conj().T)
    w, s, zh = np.linalg.svd(ru @ rv.conj().T)
    total = np.sqrt(np.sum(s ** 2))
    if total == 0.0:
        return LowRankBlock(U[:, :0], V[:0])
    # tail[r] = norm of singular values r, r+1, ...
    tail = np.sqrt(np.cumsum((s ** 2)[::-1])[::-1])
    ok = np.flatnonzero(tail <= tol * total)
    r = int(ok[0]) if len(ok) else len(s)
    r = max(1, min(r, block.rank))
    newU = qu @ (w[:, :r] * s[:r])
    newV = zh[:r] @ qv.conj().T
    return LowRankBlock(newU, newV)


# ----------------------------------------------------------------------
# H-matrix
# ----------------------------------------------------------------------
@dataclass(eq=False)
class HMatrix:
    """Block-partitioned matrix: dense near-field plus low-rank far-field.

    The near field is also kept as one CSR matrix and the low-rank factors
    are stacked into two sparse operators so that :meth:`matvec` is three
    sparse products.
    """

    n: int
    tol: float
    dense_blocks: list
    lowrank_blocks: list
    eta: float = 1.0
    _near: object = field(default=None, repr=False)
    _U: object = field(default=None, repr=False)
    _V: object = field(default=None, repr=False)

    def __post_init__(self):
        self._assemble()

    def _assemble(self):
        rows, cols, vals = [], [], []
        for bp, A in self.dense_blocks:
            r, c = np.meshgrid(bp.rows, bp.cols, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(np.asarray(A).ravel())
        n = self.n
        cat = (lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dt))
        self._near = sp.csr_matrix(
            (cat(vals, complex), (cat(rows, np.int64), cat(cols, np.int64))),
            shape=(n, n))
        # stacked factors: y = U_all @ (V_all @ x)
        ur, uc, uv, vr, vc, vv = [], [], [], [], [], []
        offset = 0
        for bp, lr in self.lowrank_blocks:
            k = lr.rank
            r, c = np.meshgrid(bp.rows, offset + np.arange(k), indexing="ij")
            ur.append(r.ravel()); uc.append(c.ravel()); uv.append(lr.U.ravel())
            r, c = np.meshgrid(offset + np.arange(k), bp.cols, indexing="ij")
            vr.append(r.ravel()); vc.append(c.ravel()); vv.append(lr.V.ravel())
            offset += k
        self._U = sp.csr_matrix(
            (cat(uv, complex), (cat(ur, np.int64), cat(uc, np.int64))),
            shape=(n, offset))
        self._V = sp.csr_matrix(
            (cat(vv, complex), (cat(vr, np.int64), cat(vc, np.int64))),
            shape=(offset, n))

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def near_field(self):
        """Near-field part as a CSR matrix."""
        return self._near

    @property
    def blocks(self):
        return ([bp for bp, _ in self.dense_blocks]
                + [bp for bp, _ in self.lowrank_blocks])

    def matvec(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.n:
            raise ValueError(f"vector length {x.shape[0]} does not match N = {self.n}")
        return self._near @ x + self._U @ (self._V @ x)

    __matmul__ = matvec

    def to_dense(self):
        Z = np.zeros((self.n, self.n), complex)
        for bp, A in self.dense_blocks:
            Z[bp.test.edge_start:bp.test.edge_stop,
              bp.source.edge_start:bp.source.edge_stop] = A
        for bp, lr in self.lowrank_blocks:
            Z[bp.test.edge_start:bp.test.edge_stop,
              bp.source.edge_start:bp.source.edge_stop] = lr.to_dense()
        return Z

    def stored_entries(self):
        return (sum(np.asarray(A).size for _, A in self.dense_blocks)
                + sum(lr.stored_entries for _, lr in self.lowrank_blocks))

    def memory_ratio(self):
        """Stored complex entries relative to the dense ``N**2``."""
        return self.stored_entries() / float(self.n * self.n)

    def report(self):
        """Compression summary (JSON-ready)."""
        levels = {}
        for bp in self.blocks:
            d = levels.setdefault(str(bp.level), {NEAR: 0, FAR: 0})
            d[bp.kind] += 1
        ranks = Counter(int(lr.rank) for _, lr in self.lowrank_blocks)
        return {
            "N": self.n,
            "tolerance": self.tol,
            "eta": self.eta,
            "dense_blocks": len(self.dense_blocks),
            "lowrank_blocks": len(self.lowrank_blocks),
            "blocks_per_level": dict(sorted(levels.items(), key=lambda kv: int(kv[0]))),
            "rank_histogram": {str(k): v for k, v in sorted(ranks.items())},
            "stored_entries": int(self.stored_entries()),
            "dense_entries": int(self.n * self.n),
            "memory_ratio": self.memory_ratio(),
        }

    def report_json(self, **kw):
        return json.dumps(self.report(), **kw)


def hmatvec(H, x):
    """``H @ x`` for an :class:`HMatrix`."""
    return H.matvec(x)


def _fill_far(kernel, rows, cols, tol, recompression):
    try:
        lr = aca(lambda i: kernel.fill_block(rows[i:i + 1], cols)[0],
                 lambda j: kernel.fill_block(rows, cols[j:j + 1])[:, 0],
                 (len(rows), len(cols)), tol)
        if recompression:
            lr = recompress(lr, tol)
    except AcaStagnation:
        return None
    if lr.stored_entries >= len(rows) * len(cols):
        return None
    return lr


def build_hmatrix(kernel, tree, eta=1.0, tol=1e-3, recompression=True,
                  symmetric=True):
    """Assemble the H-matrix of `kernel` on the partition of `tree`.

    `kernel` must be bound to ``tree.mesh`` (the reordered mesh).  Far blocks
    whose cross approximation stagnates, or whose factors would outweigh the
    dense block, are stored densely; the block keeps its ``farLowRank`` tag.
    With `symmetric` (the Galerkin EFIE matrix is) each block below the
    diagonal is the transpose of its mirror and is not recomputed; both
    halves are still stored.
    """
    if kernel.mesh is not tree.mesh:
        raise ValueError("kernel must be built on tree.mesh (leaf-ordered mesh)")
    blocks = build_block_structure(tree.root, eta)
    dense, lowrank = [], []
    done = {}
    for bp in blocks:
        key = (bp.test.index, bp.source.index)
        mirror = done.get((key[1], key[0])) if symmetric else None
        if mirror is not None:
            kind, val = mirror
            if kind == "dense":
                dense.append((bp, val.T.copy()))
            else:
                lowrank.append((bp, LowRankBlock(val.V.T.copy(), val.U.T.copy())))
            continue
        rows, cols = bp.rows, bp.cols
        lr = None
        if bp.kind == FAR:
            lr = _fill_far(kernel, rows, cols, tol, recompression)
        if lr is None:
            A = kernel.fill_block(rows, cols)
            dense.append((bp, A))
            done[key] = ("dense", A)
        else:
            lowrank.append((bp, lr))
            done[key] = ("lowrank", lr)
    return HMatrix(kernel.num_unknowns, tol, dense, lowrank, eta)
