"""Sparse near-field preconditioners built from triangle or leaf adjacency.

Two patterns are supported:

* triangle tridiagonal: triangles interact when they are neighbors in a
  linear triangle order;
* group-block tridiagonal: the bases owned by cluster-tree groups ``i`` and
  ``j`` interact when ``|i - j| <= 1`` in left-to-right order.

The sparse matrix is factored once with SuperLU (nested-dissection or
minimum-degree order, threshold partial pivoting) and applied inside GMRES.
"""
from __future__ import annotations

from dataclasses import dataclass
import csv

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import adjacency_walk, triangle_neighbors

__all__ = [
    "PrecondConfig",
    "SingularPreconditionerError",
    "SparseLu",
    "build_tridiagonal",
    "triangle_order",
    "block_groups",
    "build_block_tridiagonal",
    "build_preconditioner",
    "factorize",
    "nested_dissection",
    "dissection_points",
    "apply",
    "memory_report",
    "write_matrix_market",
    "write_pattern_csv",
]

VARIANTS = ("triTridiagonal", "blockTridiagonal")
MODES = ("partialPair", "fullEntry")
TRIANGLE_ORDERINGS = ("walk", "tree", "file")
ORDERINGS = {"mmd": "MMD_AT_PLUS_A", "natural": "NATURAL", "nd": "NATURAL"}
ND_LEAF = 64
BYTES_PER_VALUE = 16


class SingularPreconditionerError(ArithmeticError):
    """A pivot of the sparse LU vanished (relative to the largest entry)."""


@dataclass(frozen=True)
class PrecondConfig:
    """Preconditioner options.

    ``triangle_ordering`` is the linear triangle order of the triangle
    pattern: ``walk`` (edge-adjacency walk seeded in tree-leaf order,
    default), ``tree`` (tree-leaf order) or ``file`` (the mesh as loaded).
    ``column_ordering`` is the fill-reducing order: ``nd`` (nested
    dissection, default), ``mmd`` (minimum degree on ``P + P^T``) or
    ``natural``.  See :func:`dissection_points` for how ``nd`` cuts each
    pattern.
    ``group_triangles`` is the target mean triangle count of a block-pattern
    group; the tree level whose mean is nearest to it (in ratio) is used.
    ``None`` (default) uses the tree leaves.

    ``entry_mode`` defaults to ``partialPair``: stored values are sums of
    the triangle-pair terms inside the pattern, a consistent discretization
    of the local sub-surface.  Truncated complete entries (``fullEntry``)
    precondition markedly worse on closed surfaces.
    """

    variant: str = "triTridiagonal"
    entry_mode: str | None = None
    pivot_threshold: float = 0.1
    column_ordering: str = "nd"
    group_triangles: float | None = None
    triangle_ordering: str = "walk"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.entry_mode is not None and self.entry_mode not in MODES:
            raise ValueError(f"entry_mode must be one of {MODES}")
        if not (0.0 < self.pivot_threshold <= 1.0):
            raise ValueError("pivot_threshold must lie in (0, 1]")
        if self.column_ordering not in ORDERINGS:
            raise ValueError(f"column_ordering must be one of {tuple(ORDERINGS)}")
        if self.triangle_ordering not in TRIANGLE_ORDERINGS:
            raise ValueError(f"triangle_ordering must be one of {TRIANGLE_ORDERINGS}")
        if self.group_triangles is not None and not self.group_triangles > 0:
            raise ValueError("group_triangles must be positive")

    @property
    def mode(self):
        if self.entry_mode is not None:
            return self.entry_mode
        return "partialPair"


def _csr(rows, cols, vals, n):
    # duplicates are summed, never overwritten
    P = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    P.sum_duplicates()
    P.sort_indices()
    return P


def _triangle_band(order):
    a = np.asarray(order, dtype=np.int64)
    ta = np.concatenate([a, a[:-1], a[1:]])
    tb = np.concatenate([a, a[1:], a[:-1]])
    return ta, tb


def triangle_order(tree, kind="walk"):
    """Linear triangle order (ids of ``tree.mesh``) for the triangle pattern."""
    T = tree.mesh.num_triangles
    if kind == "tree":
        return np.arange(T)
    if kind == "file":
        return np.argsort(tree.permutation)
    if kind == "walk":
        return np.asarray(adjacency_walk(triangle_neighbors(tree.mesh), range(T)))
    raise ValueError(f"unknown triangle ordering {kind!r}")


def _pair_terms(mesh, ta, tb):
    """Expand triangle pairs into (row, col, pair index, local i, local j)."""
    te, ts = mesh.tri_edges, mesh.tri_signs
    P = len(ta)
    p = np.repeat(np.arange(P), 9)
    i = np.tile(np.repeat(np.arange(3), 3), P)
    j = np.tile(np.arange(3), 3 * P)
    m = te[ta[p], i]
    n = te[tb[p], j]
    keep = (m >= 0) & (n >= 0)
    p, i, j, m, n = p[keep], i[keep], j[keep], m[keep], n[keep]
    sign = ts[ta[p], i] * ts[tb[p], j]
    return m, n, p, i, j, sign


def build_tridiagonal(mesh, kernel, config=None, order=None):
    """Triangle-tridiagonal preconditioner.

    Triangles ``order[i]`` and ``order[i +- 1]`` interact (default: the
    mesh's own triangle order).  In ``partialPair`` mode each stored value is
    the sum of the triangle-pair terms inside the band; in ``fullEntry`` mode
    it is the complete matrix entry.  Unknowns keep the mesh's numbering.
    """
    config = config or PrecondConfig("triTridiagonal")
    if kernel.mesh is not mesh:
        raise ValueError("kernel must be bound to the same mesh")
    T = mesh.num_triangles
    N = mesh.num_unknowns
    if T == 0 or N == 0:
        raise ValueError("cannot build a preconditioner on an empty mesh")
    if order is None:
        order = np.arange(T)
    elif sorted(np.asarray(order).tolist()) != list(range(T)):
        raise ValueError("order is not a permutation of the triangles")
    ta, tb = _triangle_band(order)
    m, n, p, i, j, sign = _pair_terms(mesh, ta, tb)
    if config.mode == "partialPair":
        M = kernel.local_matrices(ta, tb)
        vals = sign * mesh.edge_length[m] * mesh.edge_length[n] * M[p, i, j]
        return _csr(m, n, vals, N)
    pattern = _csr(m, n, np.ones(len(m)), N).tocoo()
    vals = kernel.entries(pattern.row, pattern.col)
    return _csr(pattern.row, pattern.col, vals, N)


def block_groups(tree, group_triangles=None):
    """Tree nodes forming the block pattern's groups, left to right.

    The groups are the nodes at the level whose mean triangle count is
    nearest to `group_triangles` (leaves above that level stand in for
    themselves).  ``None`` returns the leaves.
    """
    if group_triangles is None:
        return tree.leaves
    T = tree.mesh.num_triangles
    best, best_err = None, np.inf
    for level in range(tree.num_levels):
        groups = _frontier(tree.root, level)
        err = abs(np.log(T / len(groups) / group_triangles))
        if err < best_err - 1e-12:
            best, best_err = groups, err
    return best


def _frontier(root, level):
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.level == level or node.is_leaf:
            out.append(node)
        else:
            stack.extend(reversed(node.children))
    return out


def build_block_tridiagonal(tree, kernel, config=None):
    """Leaf-block tridiagonal preconditioner.

    Groups are tree nodes (see :func:`block_groups`) in left-to-right order.
    Group ``i`` owns a contiguous range of bases; blocks ``(i, j)`` with
    ``|i - j| <= 1`` are filled.  ``partialPair`` (default) sums only the
    triangle pairs drawn from the two leaves' triangle ranges; ``fullEntry``
    stores complete entries.
    """
    if tree is None:
        raise ValueError("block preconditioner requires a cluster tree")
    config = config or PrecondConfig("blockTridiagonal")
    mesh = tree.mesh
    if kernel.mesh is not mesh:
        raise ValueError("kernel must be bound to tree.mesh")
    N = mesh.num_unknowns
    if N == 0:
        raise ValueError("cannot build a preconditioner on an empty mesh")
    leaves = block_groups(tree, config.group_triangles)
    rows, cols, vals = [], [], []
    if config.mode == "fullEntry":
        filled = {}
        for a, la in enumerate(leaves):
            for b in range(max(0, a - 1), min(len(leaves), a + 2)):
                lb = leaves[b]
                if la.num_edges == 0 or lb.num_edges == 0:
                    continue
                if (b, a) in filled:
                    A = filled[(b, a)].T          # exact symmetry of Z
                else:
                    A = kernel.fill_block(la.edge_ids, lb.edge_ids)
                    filled[(a, b)] = A
                r, c = np.meshgrid(la.edge_ids, lb.edge_ids, indexing="ij")
                rows.append(r.ravel())
                cols.append(c.ravel())
                vals.append(A.ravel())
        return _csr(np.concatenate(rows), np.concatenate(cols),
                    np.concatenate(vals), N)
    for a, la in enumerate(leaves):
        for b in range(max(0, a - 1), min(len(leaves), a + 2)):
            lb = leaves[b]
            ta = np.repeat(la.triangle_ids, lb.num_triangles)
            tb = np.tile(lb.triangle_ids, la.num_triangles)
            m, n, p, i, j, sign = _pair_terms(mesh, ta, tb)
            M = kernel.local_matrices(ta, tb)
            rows.append(m)
            cols.append(n)
            vals.append(sign * mesh.edge_length[m] * mesh.edge_length[n] * M[p, i, j])
    return _csr(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), N)


def build_preconditioner(kernel, tree, config):
    """Dispatch on ``config.variant`` (both use ``tree.mesh`` ordering)."""
    if config.variant == "triTridiagonal":
        return build_tridiagonal(tree.mesh, kernel, config,
                                 triangle_order(tree, config.triangle_ordering))
    return build_block_tridiagonal(tree, kernel, config)


@dataclass(eq=False)
class SparseLu:
    """Sparse LU factors ``Pr A Pc = L U`` with unit lower-triangular ``L``.

    With a symmetric pre-permutation ``perm`` the factors are those of
    ``A[perm][:, perm]``; :meth:`solve` undoes it.
    """

    n: int
    pattern_nnz: int
    _lu: object
    perm: np.ndarray | None = None

    @property
    def L(self):
        return self._lu.L

    @property
    def U(self):
        return self._lu.U

    @property
    def perm_r(self):
        return self._lu.perm_r

    @property
    def perm_c(self):
        return self._lu.perm_c

    @property
    def fill_nnz(self):
        """Stored factor entries; the unit diagonal of ``L`` is implicit."""
        return int(self._lu.L.nnz + self._lu.U.nnz - self.n)

    @property
    def shape(self):
        return (self.n, self.n)

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise ValueError(f"vector length {b.shape[0]} does not match N = {self.n}")
        b = np.asarray(b, dtype=complex)
        if self.perm is None:
            return self._lu.solve(b)
        x = np.empty_like(b)
        x[self.perm] = self._lu.solve(b[self.perm])
        return x

    __call__ = solve


def dissection_points(mesh, config):
    """Coordinates steering nested dissection of a pattern, or None.

    The triangle pattern is cut geometrically at RWG support centres.  The
    block pattern is cut in index order, whose ranges follow its groups, so
    separators do not slice through densely coupled groups.
    """
    if config.column_ordering != "nd" or config.variant != "triTridiagonal":
        return None
    return mesh.centroids[mesh.edge_triangles].mean(axis=1)


def nested_dissection(P, leaf=ND_LEAF, points=None):
    """Nested-dissection permutation of `P`.

    Each index set is halved, at the median of `points` along their longest
    extent when given, else at the middle of the index order (spatially
    coherent in cluster-tree order).  The smaller set of indices coupled
    across the cut forms the separator, numbered after both halves.
    """
    G = sp.csr_matrix(P)
    G = ((abs(G) + abs(G).T) != 0).astype(np.int8).tocsr()
    n = G.shape[0]
    out = []
    mark = np.zeros(n, np.int8)
    stack = [(np.arange(n), False)]
    # explicit stack: (nodes, emit) with separators pushed below the halves
    while stack:
        nodes, emit = stack.pop()
        if emit or len(nodes) <= leaf:
            out.append(nodes)
            continue
        half = len(nodes) // 2
        if points is not None:
            x = points[nodes]
            axis = int(np.argmax(x.max(axis=0) - x.min(axis=0)))
            nodes = nodes[np.argsort(x[:, axis], kind="stable")]
        left, right = nodes[:half], nodes[half:]
        mark[right] = 1
        cut_l = (G[left] @ mark) > 0
        mark[right] = 0
        mark[left] = 1
        cut_r = (G[right] @ mark) > 0
        mark[left] = 0
        if cut_l.sum() <= cut_r.sum():
            sep, left = left[cut_l], left[~cut_l]
        else:
            sep, right = right[cut_r], right[~cut_r]
        stack.append((sep, True))
        stack.append((right, False))
        stack.append((left, False))
    return np.concatenate(out) if out else np.zeros(0, np.int64)


def factorize(P, config=None, points=None):
    """Sparse LU of `P` (fill-reducing order, threshold partial pivoting).

    `points` (N, 3), optional, steers nested dissection geometrically; see
    :func:`dissection_points`.

    Raises
    ------
    SingularPreconditionerError
        If a pivot is below ``1e-14`` times the largest entry of `P`.
    """
    config = config or PrecondConfig()
    P = sp.csc_matrix(P, dtype=complex)
    n, m = P.shape
    if n != m:
        raise ValueError("preconditioner must be square")
    scale = abs(P).max() if P.nnz else 0.0
    if scale == 0.0:
        raise SingularPreconditionerError("preconditioner is identically zero (row 0)")
    ordering = config.column_ordering
    perm = nested_dissection(P, points=points) if ordering == "nd" else None
    A = P[perm][:, perm].tocsc() if perm is not None else P
    try:
        lu = splu(A, permc_spec=ORDERINGS[ordering], diag_pivot_thresh=config.pivot_threshold,
                  options={"SymmetricMode": False})
    except RuntimeError as exc:
        empty = np.flatnonzero(abs(P).max(axis=1).toarray().ravel() < 1e-14 * scale)
        where = f" (row {int(empty[0])} is zero)" if len(empty) else ""
        raise SingularPreconditionerError(f"sparse LU failed: {exc}{where}") from exc
    diag = np.abs(lu.U.diagonal())
    bad = np.flatnonzero(diag < 1e-14 * scale)
    if len(bad):
        col = int(lu.perm_c[bad[0]])
        row = int(np.flatnonzero(lu.perm_r == bad[0])[0])
        if perm is not None:
            row, col = int(perm[row]), int(perm[col])
        raise SingularPreconditionerError(
            f"pivot {diag[bad[0]]:.3e} below 1e-14*max|P| at row {row} (column {col})")
    return SparseLu(n, int(P.nnz), lu, perm)


def apply(F, b):
    """``P^{-1} b`` by forward and back substitution."""
    return F.solve(b)


def memory_report(obj):
    """Stored complex values and their bytes for a sparse matrix or factor."""
    if isinstance(obj, SparseLu):
        nnz = obj.fill_nnz
    else:
        nnz = int(sp.csr_matrix(obj).nnz)
    return {"nnz": nnz, "bytes": nnz * BYTES_PER_VALUE}


def write_matrix_market(P, path):
    """Matrix Market coordinate file (complex general)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(P, dtype=complex), field="complex",
                     symmetry="general")


def write_pattern_csv(P, path):
    """Sparsity pattern as ``row,col`` lines under a single header."""
    coo = sp.coo_matrix(P)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col"])
        w.writerows(zip(coo.row[order].tolist(), coo.col[order].tolist()))
