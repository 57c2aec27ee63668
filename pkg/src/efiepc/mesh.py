"""Triangle surface meshes and RWG edge-basis topology.

A :class:`SurfaceMesh` owns vertices and triangles and derives the RWG
unknowns: one basis per edge shared by exactly two triangles.  RWG bases are
ordered by ``(plus triangle, minus triangle)`` where the plus triangle is the
one with the lower index, so every permutation of triangles deterministically
re-derives the unknown ordering.
"""
from dataclasses import dataclass, field
from pathlib import Path
import math

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "MeshError",
    "SurfaceMesh",
    "load_mesh",
    "write_rawtri",
    "mesh_plate",
    "mesh_sphere",
    "icosphere",
    "reorder_triangles",
    "triangle_neighbors",
    "adjacency_walk",
    "count_interior_edges",
]

MERGE_TOL = 1e-9


class MeshError(ValueError):
    """Raised for unreadable or topologically invalid meshes."""


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Triangulated PEC surface with its RWG basis set.

    Attributes
    ----------
    vertices : (V, 3) float array, meters
    triangles : (T, 3) int array of vertex ids
    edge_vertices : (N, 2) vertex ids of each RWG edge (sorted)
    edge_triangles : (N, 2) ``[plus, minus]`` triangle ids
    edge_free : (N, 2) free (opposite) vertex in the plus / minus triangle
    edge_length : (N,) edge lengths
    tri_edges : (T, 3) RWG index of the edge opposite local vertex ``i``,
        or -1 for a boundary edge
    tri_signs : (T, 3) +1 if the triangle is the plus side of that RWG
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edge_vertices: np.ndarray = field(repr=False)
    edge_triangles: np.ndarray = field(repr=False)
    edge_free: np.ndarray = field(repr=False)
    edge_length: np.ndarray = field(repr=False)
    tri_edges: np.ndarray = field(repr=False)
    tri_signs: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, vertices, triangles):
        """Build and validate a mesh from vertex and triangle arrays."""
        V = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 3)
        T = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(V)):
            raise MeshError("vertex coordinates must be finite")
        if len(T) and (T.min() < 0 or T.max() >= len(V)):
            raise MeshError("triangle references a vertex out of range")
        if len(T) and np.any((T[:, 0] == T[:, 1]) | (T[:, 1] == T[:, 2])
                             | (T[:, 0] == T[:, 2])):
            bad = np.flatnonzero((T[:, 0] == T[:, 1]) | (T[:, 1] == T[:, 2])
                                 | (T[:, 0] == T[:, 2]))[0]
            raise MeshError(f"triangle {bad} has repeated vertex ids")
        p0, p1, p2 = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
        cross = np.cross(p1 - p0, p2 - p0)
        twice = np.linalg.norm(cross, axis=1)
        if len(T) and np.any(twice <= 0.0):
            bad = np.flatnonzero(twice <= 0.0)[0]
            raise MeshError(f"triangle {bad} is degenerate (zero area)")
        areas = 0.5 * twice
        normals = cross / twice[:, None] if len(T) else np.zeros((0, 3))
        centroids = (p0 + p1 + p2) / 3.0
        topo = _rwg_topology(V, T)
        for arr in (V, T, areas, normals, centroids, *topo):
            arr.setflags(write=False)
        return cls(V, T, *topo, areas, centroids, normals)

    @property
    def num_unknowns(self):
        return len(self.edge_length)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def tri_vertices(self, ids=None):
        """Vertex coordinates of triangles, shape ``(len(ids), 3, 3)``."""
        T = self.triangles if ids is None else self.triangles[ids]
        return self.vertices[T]

    def all_edge_lengths(self):
        T = self.triangles
        e = np.concatenate([T[:, [1, 2]], T[:, [2, 0]], T[:, [0, 1]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]],
                              axis=1)

    def stats(self):
        """Summary statistics as a JSON-ready dict."""
        lo, hi = self.bounding_box
        lengths = self.all_edge_lengths()
        return {
            "vertices": int(len(self.vertices)),
            "triangles": int(self.num_triangles),
            "rwg_bases": int(self.num_unknowns),
            "bounding_box": {"min": lo.tolist(), "max": hi.tolist()},
            "min_edge_length": float(lengths.min()) if len(lengths) else 0.0,
            "max_edge_length": float(lengths.max()) if len(lengths) else 0.0,
            "total_area": float(self.areas.sum()),
        }


def _rwg_topology(V, T):
    nt = len(T)
    # local edge i is opposite local vertex i
    local = np.array([[1, 2], [2, 0], [0, 1]])
    pairs = T[:, local]                                  # (T, 3, 2)
    keys = np.sort(pairs, axis=2).reshape(-1, 2)
    tri_of = np.repeat(np.arange(nt), 3)
    loc_of = np.tile(np.arange(3), nt)
    if nt == 0:
        empty2 = np.zeros((0, 2), dtype=np.int64)
        return (empty2, empty2.copy(), empty2.copy(), np.zeros(0),
                np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3), dtype=np.int64))
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = np.flatnonzero(counts > 2)[0]
        a, b = uniq[bad]
        raise MeshError(
            f"non-manifold edge ({a}, {b}) shared by {counts[bad]} triangles")
    order = np.argsort(inverse, kind="stable")
    grp = inverse[order]
    shared = np.flatnonzero(counts == 2)
    # positions of the two incidences for each shared edge
    starts = np.searchsorted(grp, shared)
    i0, i1 = order[starts], order[starts + 1]
    ta, tb = tri_of[i0], tri_of[i1]
    swap = ta > tb
    i0, i1 = np.where(swap, i1, i0), np.where(swap, i0, i1)
    tp, tm = tri_of[i0], tri_of[i1]
    rank = np.lexsort((tm, tp))
    i0, i1, tp, tm = i0[rank], i1[rank], tp[rank], tm[rank]
    n = len(i0)
    edge_vertices = keys[i0]
    edge_triangles = np.column_stack([tp, tm])
    edge_free = np.column_stack([T[tp, loc_of[i0]], T[tm, loc_of[i1]]])
    edge_length = np.linalg.norm(V[edge_vertices[:, 0]] - V[edge_vertices[:, 1]],
                                 axis=1)
    tri_edges = np.full((nt, 3), -1, dtype=np.int64)
    tri_signs = np.zeros((nt, 3), dtype=np.int64)
    idx = np.arange(n)
    tri_edges[tp, loc_of[i0]] = idx
    tri_signs[tp, loc_of[i0]] = 1
    tri_edges[tm, loc_of[i1]] = idx
    tri_signs[tm, loc_of[i1]] = -1
    return (edge_vertices, edge_triangles, edge_free, edge_length,
            tri_edges, tri_signs)


def count_interior_edges(triangles):
    """Brute-force count of edges shared by exactly two triangles."""
    counts = {}
    for tri in np.asarray(triangles).tolist():
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return sum(1 for c in counts.values() if c == 2)


def _merge_vertices(points, triangles, tol=MERGE_TOL):
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return points, np.asarray(triangles)
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))
    if len(pairs):
        # union-find over the (few) close pairs
        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i
        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        parent = np.array([find(i) for i in range(len(points))])
    keep, remap = np.unique(parent, return_inverse=True)
    return points[keep], remap[np.asarray(triangles)]


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def _read_rawtri(text):
    lines = [ln for ln in (_strip_comment(x) for x in text.splitlines()) if ln]
    if not lines:
        raise MeshError("empty rawtri file")
    head = lines[0].split()
    if len(head) != 2:
        raise MeshError("rawtri header must be '<num_vertices> <num_triangles>'")
    nv, nt = int(head[0]), int(head[1])
    if len(lines) < 1 + nv + nt:
        raise MeshError("rawtri file truncated")
    try:
        pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + nv]])
        tris = np.array([[int(v) for v in ln.split()]
                         for ln in lines[1 + nv:1 + nv + nt]], dtype=np.int64)
    except ValueError as exc:
        raise MeshError(f"rawtri parse failure: {exc}") from None
    if pts.shape != (nv, 3) or tris.reshape(-1, 3).shape != (nt, 3):
        raise MeshError("rawtri rows must have 3 entries")
    return pts, tris.reshape(-1, 3)


def _read_msh2(text):
    lines = text.splitlines()
    nodes, tris = {}, []
    seen_nodes = False
    i = 0
    try:
        while i < len(lines):
            tag = lines[i].strip()
            if tag == "$MeshFormat":
                version = lines[i + 1].split()[0]
                if not version.startswith("2"):
                    raise MeshError(f"unsupported MSH version {version}")
                i += 3
            elif tag == "$Nodes":
                n = int(lines[i + 1])
                for ln in lines[i + 2:i + 2 + n]:
                    f = ln.split()
                    nodes[int(f[0])] = (float(f[1]), float(f[2]), float(f[3]))
                seen_nodes = True
                i += n + 3
            elif tag == "$Elements":
                n = int(lines[i + 1])
                for ln in lines[i + 2:i + 2 + n]:
                    f = [int(v) for v in ln.split()]
                    if f[1] == 2:
                        ntags = f[2]
                        tris.append(f[3 + ntags:6 + ntags])
                i += n + 3
            else:
                i += 1
    except (IndexError, ValueError) as exc:
        raise MeshError(f"msh2 parse failure near line {i + 1}: {exc}") from None
    if not seen_nodes:
        raise MeshError("msh2 file has no $Nodes section")
    ids = sorted(nodes)
    index = {nid: k for k, nid in enumerate(ids)}
    pts = np.array([nodes[nid] for nid in ids], dtype=float).reshape(-1, 3)
    try:
        tri = np.array([[index[v] for v in t] for t in tris], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"element references unknown node {exc}") from None
    return pts, tri.reshape(-1, 3)


def load_mesh(path, format=None):
    """Read a ``msh2`` (Gmsh 2.2 ASCII) or ``rawtri`` mesh file.

    The format is inferred from the suffix when not given (``.msh`` ->
    msh2, anything else -> rawtri).  Vertices closer than 1e-9 m are merged.
    """
    path = Path(path)
    if not path.is_file():
        raise MeshError(f"mesh file not found: {path}")
    if format is None:
        format = "msh2" if path.suffix.lower() == ".msh" else "rawtri"
    text = path.read_text()
    if format == "msh2":
        pts, tris = _read_msh2(text)
    elif format == "rawtri":
        pts, tris = _read_rawtri(text)
    else:
        raise MeshError(f"unknown mesh format {format!r}")
    if len(tris) and (tris.min() < 0 or tris.max() >= len(pts)):
        raise MeshError("triangle references a vertex out of range")
    pts, tris = _merge_vertices(pts, tris)
    return SurfaceMesh.from_arrays(pts, tris)


def write_rawtri(mesh, path):
    """Write `mesh` in the rawtri text format."""
    with open(path, "w") as fh:
        fh.write(f"{len(mesh.vertices)} {mesh.num_triangles}\n")
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for t in mesh.triangles:
            fh.write(f"{t[0]} {t[1]} {t[2]}\n")


def mesh_plate(side_x, side_y, h, center=(0.0, 0.0, 0.0)):
    """Structured right-triangle mesh of a rectangular plate in the xy-plane.

    The plate is split into ``ceil(side/h)`` cells per side and each cell
    into two triangles along its ``(i, j)-(i+1, j+1)`` diagonal.
    """
    if min(side_x, side_y, h) <= 0:
        raise ValueError("plate sides and h must be positive")
    if h > max(side_x, side_y) * (1 + 1e-12):
        raise ValueError(f"target edge length {h} exceeds the plate side")
    nx = max(1, math.ceil(side_x / h - 1e-9))
    ny = max(1, math.ceil(side_y / h - 1e-9))
    xs = np.linspace(-side_x / 2, side_x / 2, nx + 1)
    ys = np.linspace(-side_y / 2, side_y / 2, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    pts += np.asarray(center, dtype=float)
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a = vid[:-1, :-1].ravel()
    b = vid[1:, :-1].ravel()
    c = vid[1:, 1:].ravel()
    d = vid[:-1, 1:].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return SurfaceMesh.from_arrays(pts, tris)


_ICO_EDGE_OVER_RADIUS = 4.0 / math.sqrt(10.0 + 2.0 * math.sqrt(5.0))


def _icosahedron():
    p = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1)[:, None]
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v, f


def _geodesic(radius, freq, center):
    v0, f0 = _icosahedron()
    pts, tris = [], []
    base = 0
    n = freq
    # barycentric lattice on every face, then merge shared edge points
    idx = {}
    local = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            idx[(i, j)] = len(local)
            local.append((i, j))
    local = np.array(local, dtype=float)
    sub = []
    for i in range(n):
        for j in range(n - i):
            sub.append((idx[(i, j)], idx[(i + 1, j)], idx[(i, j + 1)]))
            if j < n - i - 1:
                sub.append((idx[(i + 1, j)], idx[(i + 1, j + 1)], idx[(i, j + 1)]))
    sub = np.array(sub, dtype=np.int64)
    for face in f0:
        a, b, c = v0[face]
        w1, w2 = local[:, 0] / n, local[:, 1] / n
        p = a[None, :] * (1 - w1 - w2)[:, None] + b * w1[:, None] + c * w2[:, None]
        pts.append(p)
        tris.append(sub + base)
        base += len(p)
    pts = np.concatenate(pts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts, tris = _merge_vertices(pts, np.concatenate(tris), tol=1e-9)
    pts = pts * radius + np.asarray(center, dtype=float)
    # outward orientation
    V = pts[tris]
    nrm = np.cross(V[:, 1] - V[:, 0], V[:, 2] - V[:, 0])
    inward = np.einsum("ij,ij->i", nrm, V.mean(axis=1) - center) < 0
    tris[inward] = tris[inward][:, [0, 2, 1]]
    return SurfaceMesh.from_arrays(pts, tris)


def mesh_sphere(radius, h, center=(0.0, 0.0, 0.0), max_frequency=200):
    """Geodesic sphere: icosahedron faces split into ``nu**2`` triangles.

    ``nu = ceil(icosahedron_edge / h)`` so the mean edge is close to `h`;
    the triangle count is ``20 * nu**2`` and the RWG count ``30 * nu**2``.
    """
    if radius <= 0 or h <= 0:
        raise ValueError("radius and h must be positive")
    nu = max(1, math.ceil(_ICO_EDGE_OVER_RADIUS * radius / h - 1e-9))
    if nu > max_frequency:
        raise ValueError(
            f"h={h} needs subdivision frequency {nu} > {max_frequency}")
    return _geodesic(radius, nu, np.asarray(center, dtype=float))


def icosphere(radius, level, center=(0.0, 0.0, 0.0)):
    """Sphere from `level` midpoint-subdivisions of an icosahedron (20*4**level)."""
    if level < 0 or level > 8:
        raise ValueError("icosphere level must be in [0, 8]")
    return _geodesic(radius, 2 ** level, np.asarray(center, dtype=float))


def reorder_triangles(mesh, ordering="file", tree=None):
    """Return a copy of `mesh` with its triangles permuted.

    `ordering` is ``"file"`` (identity), ``"tree"`` (leaf order of the
    cluster `tree`, see :func:`efiepc.hmatrix.build_tree`) or an explicit
    permutation array listing old triangle ids in their new order.  RWG
    bases are re-derived, so their indices follow the new triangle order.
    """
    if isinstance(ordering, str):
        if ordering == "file":
            perm = np.arange(mesh.num_triangles)
        elif ordering == "tree":
            if tree is None:
                raise ValueError("tree ordering requires a cluster tree")
            perm = np.asarray(tree.permutation)
        else:
            raise ValueError(f"unknown ordering {ordering!r}")
    else:
        perm = np.asarray(ordering, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(mesh.num_triangles)):
        raise ValueError("ordering is not a permutation of the triangles")
    return SurfaceMesh.from_arrays(mesh.vertices, mesh.triangles[perm])


def triangle_neighbors(mesh):
    """Edge-adjacent triangles of every triangle (lists, via RWG bases)."""
    nbr = [[] for _ in range(mesh.num_triangles)]
    for a, b in mesh.edge_triangles.tolist():
        nbr[a].append(b)
        nbr[b].append(a)
    return nbr


def adjacency_walk(neighbors, base):
    """Reorder the triangles in `base` so consecutive ones mostly share an edge.

    Greedy walk over the triangles listed in `base`: from the current
    triangle step to the unvisited neighbor with the fewest unvisited
    neighbors of its own (ties broken by position in `base`); at a dead end
    restart from the first unvisited triangle of `base`.
    """
    base = [int(t) for t in base]
    rank = {t: i for i, t in enumerate(base)}
    free = set(rank)
    out = []
    for s in base:
        cur = s if s in free else None
        while cur is not None:
            free.discard(cur)
            out.append(cur)
            cand = [t for t in neighbors[cur] if t in free]
            if not cand:
                break
            cur = min(cand, key=lambda t: (sum(u in free for u in neighbors[t]), rank[t]))
    return out
