"""Galerkin EFIE matrix entries and plane-wave excitation for RWG bases.

Time convention is ``exp(+j omega t)`` with the Green's function
``exp(-j k R) / (4 pi R)``.  An entry is

    Z[m, n] = j omega mu <f_m, G f_n> + 1/(j omega eps) <div f_m, G div f_n>

and is assembled from triangle-pair interactions: every (test triangle,
source triangle) pair yields a 3x3 matrix indexed by the free vertices of the
two triangles, scaled per basis by ``sign * edge_length``.
"""
from dataclasses import dataclass
import math

import numpy as np

from . import _backend
from .quadrature import triangle_rule, line_rule, DEFAULT_DEGREE

__all__ = [
    "C0",
    "MU0",
    "EPS0",
    "PhysicsParams",
    "PlaneWave",
    "EfieKernel",
    "KernelGeometry",
    "excitation",
    "incident_field",
]

C0 = 299792458.0
MU0 = 4e-7 * math.pi
EPS0 = 1.0 / (MU0 * C0 * C0)


@dataclass(frozen=True)
class PhysicsParams:
    """Free-space wave parameters at one frequency (Hz)."""

    frequency: float
    speed_of_light: float = C0

    def __post_init__(self):
        if not (self.frequency > 0 and self.speed_of_light > 0):
            raise ValueError("frequency and speed of light must be positive")

    @classmethod
    def from_wavelength(cls, wavelength, speed_of_light=C0):
        return cls(speed_of_light / wavelength, speed_of_light)

    @property
    def omega(self):
        return 2.0 * math.pi * self.frequency

    @property
    def wavenumber(self):
        return self.omega / self.speed_of_light

    @property
    def wavelength(self):
        return self.speed_of_light / self.frequency

    @property
    def mu(self):
        return MU0

    @property
    def eps(self):
        return 1.0 / (MU0 * self.speed_of_light ** 2)

    @property
    def impedance(self):
        return MU0 * self.speed_of_light


def _spherical_unit_vectors(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    r = np.stack([st * cp, st * sp, ct * np.ones_like(phi)], axis=-1)
    th = np.stack([ct * cp, ct * sp, -st * np.ones_like(phi)], axis=-1)
    ph = np.stack([-sp * np.ones_like(theta), cp * np.ones_like(theta),
                   np.zeros(np.broadcast(theta, phi).shape)], axis=-1)
    return r, th, ph


@dataclass(frozen=True)
class PlaneWave:
    """Plane wave arriving from direction ``(theta, phi)`` (radians).

    ``VV`` polarizes the electric field along theta-hat of the incidence
    direction, ``HH`` along phi-hat.
    """

    theta: float = 0.0
    phi: float = 0.0
    polarization: str = "VV"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.polarization not in ("VV", "HH"):
            raise ValueError("polarization must be 'VV' or 'HH'")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not (0.0 <= self.theta <= math.pi):
            raise ValueError("theta must lie in [0, pi]")

    def vectors(self):
        """Return ``(k_hat, e_hat)``: propagation direction and polarization."""
        r, th, ph = _spherical_unit_vectors(np.float64(self.theta),
                                            np.float64(self.phi))
        return -r, (th if self.polarization == "VV" else ph)


def incident_field(wave, physics, points):
    """Incident electric field at `points` (..., 3)."""
    khat, ehat = wave.vectors()
    phase = np.exp(-1j * physics.wavenumber * (points @ khat))
    return wave.amplitude * phase[..., None] * ehat


@dataclass(eq=False)
class KernelGeometry:
    """Contiguous per-triangle and per-basis arrays consumed by the backends."""

    V: np.ndarray            # (T, 3, 3) vertices
    n: np.ndarray            # (T, 3) unit normals
    X: np.ndarray            # (T, q, 3) regular rule points
    W: np.ndarray            # (T, q) weights, area included
    Xs: np.ndarray           # remainder rule for touching pairs
    Ws: np.ndarray
    line_t: np.ndarray
    line_w: np.ndarray
    tris: np.ndarray         # (T, 3) vertex ids
    centroids: np.ndarray
    diam: np.ndarray
    areas: np.ndarray
    edge_triangles: np.ndarray
    edge_local: np.ndarray   # free-vertex slot in the plus / minus triangle
    edge_coef: np.ndarray    # (+l, -l)
    near_factor: float
    k: float
    c_vec: complex
    c_sca: complex

    @staticmethod
    def _rule_points(V, areas, degree):
        bary, w = triangle_rule(degree)
        X = np.ascontiguousarray(np.einsum("qa,tak->tqk", bary, V))
        W = np.ascontiguousarray(areas[:, None] * w[None, :])
        return X, W

    @classmethod
    def build(cls, mesh, physics, degree, singular_degree, line_points,
              near_factor):
        V = np.ascontiguousarray(mesh.tri_vertices())
        areas = np.ascontiguousarray(mesh.areas)
        X, W = cls._rule_points(V, areas, degree)
        Xs, Ws = cls._rule_points(V, areas, singular_degree)
        lt, lw = line_rule(line_points)
        e = np.stack([V[:, 1] - V[:, 0], V[:, 2] - V[:, 1], V[:, 0] - V[:, 2]],
                     axis=1)
        diam = np.linalg.norm(e, axis=2).max(axis=1) if len(V) else np.zeros(0)
        N = mesh.num_unknowns
        edge_local = np.zeros((N, 2), dtype=np.int64)
        te, ts = mesh.tri_edges, mesh.tri_signs
        t_idx, l_idx = np.nonzero(te >= 0)
        col = np.where(ts[t_idx, l_idx] > 0, 0, 1)
        edge_local[te[t_idx, l_idx], col] = l_idx
        edge_coef = np.ascontiguousarray(
            np.column_stack([mesh.edge_length, -mesh.edge_length]))
        omega = physics.omega
        return cls(V=V, n=np.ascontiguousarray(mesh.normals), X=X, W=W, Xs=Xs,
                   Ws=Ws, line_t=lt, line_w=lw,
                   tris=np.ascontiguousarray(mesh.triangles, dtype=np.int64),
                   centroids=np.ascontiguousarray(mesh.centroids),
                   diam=np.ascontiguousarray(diam), areas=areas,
                   edge_triangles=np.ascontiguousarray(mesh.edge_triangles,
                                                       dtype=np.int64),
                   edge_local=edge_local, edge_coef=edge_coef,
                   near_factor=float(near_factor), k=physics.wavenumber,
                   c_vec=1j * omega * physics.mu / 4.0,
                   c_sca=1.0 / (1j * omega * physics.eps))


class EfieKernel:
    """EFIE interaction evaluator bound to a mesh and frequency.

    Parameters
    ----------
    mesh : SurfaceMesh
    physics : PhysicsParams
    degree : int
        Quadrature degree for regular pairs (5 = 7-point rule).
    singular_degree : int
        Product-rule degree for the smooth kernel remainder on pairs that
        share a vertex.
    line_points : int
        Gauss points per half edge for the static part of such pairs.
    near_factor : float
        Pairs with centroid distance below ``near_factor`` times the larger
        triangle diameter use singularity extraction.
    backend : {None, "python", "compiled"}
    """

    def __init__(self, mesh, physics, degree=DEFAULT_DEGREE,
                 singular_degree=DEFAULT_DEGREE, line_points=8, near_factor=2.0,
                 backend=None):
        self.mesh = mesh
        self.physics = physics
        self.degree = degree
        self.singular_degree = singular_degree
        self.line_points = line_points
        self.near_factor = near_factor
        self._impl = _backend.get(backend)
        self.backend = "python" if self._impl is _backend.python_backend else "compiled"
        self.geometry = KernelGeometry.build(mesh, physics, degree,
                                             singular_degree, line_points,
                                             near_factor)

    @property
    def num_unknowns(self):
        return self.mesh.num_unknowns

    @property
    def edge_local(self):
        return self.geometry.edge_local

    @property
    def edge_coef(self):
        return self.geometry.edge_coef

    # ------------------------------------------------------------------
    # triangle-pair level
    # ------------------------------------------------------------------
    def classify_pairs(self, ta, tb):
        """Return ``(near, touching)`` boolean masks for triangle pairs."""
        return _backend.python_backend.classify_pairs(
            self.geometry, np.asarray(ta), np.asarray(tb))

    def pair_integrals(self, ta, tb):
        """Kernel moments ``(S, Vx, Vy, Q)`` for triangle pairs ``(ta, tb)``.

        Pairs are evaluated with the lower triangle id as the test side and
        transposed back, so the moments of ``(a, b)`` and ``(b, a)`` are
        exact mirrors and the assembled matrix is exactly symmetric.
        """
        ta = np.atleast_1d(np.asarray(ta, dtype=np.int64))
        tb = np.atleast_1d(np.asarray(tb, dtype=np.int64))
        return self._impl.pair_moments(self.geometry, ta, tb)

    def local_matrices(self, ta, tb):
        """RWG interaction matrices ``M[p, i, j]`` for triangle pairs.

        ``i``/``j`` index the free vertex of the test / source triangle; the
        contribution to ``Z[m, n]`` is ``coef_m * coef_n * M[p, i, j]`` with
        ``coef = +-edge_length``.
        """
        ta = np.atleast_1d(np.asarray(ta, dtype=np.int64))
        tb = np.atleast_1d(np.asarray(tb, dtype=np.int64))
        return self._impl.pair_matrices(self.geometry, ta, tb)

    # ------------------------------------------------------------------
    # RWG level
    # ------------------------------------------------------------------
    def _support_index(self, m, t):
        tri = self.mesh.edge_triangles[m]
        hit = np.flatnonzero(tri == t)
        if not len(hit):
            raise ValueError(f"triangle {t} is not in the support of RWG {m}")
        return hit[0]

    def z_triangle_pair_contribution(self, m, n, ta, tb):
        """Single (test triangle, source triangle) term of ``Z[m, n]``."""
        a = self._support_index(m, ta)
        b = self._support_index(n, tb)
        M = self.local_matrices([ta], [tb])[0]
        return (self.edge_coef[m, a] * self.edge_coef[n, b]
                * M[self.edge_local[m, a], self.edge_local[n, b]])

    def entries(self, rows, cols):
        """``Z[rows[i], cols[i]]`` for paired index lists."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if rows.shape != cols.shape:
            raise ValueError("rows and cols must have equal length")
        et = self.mesh.edge_triangles
        out = np.zeros(len(rows), complex)
        if not len(rows):
            return out
        ta = np.concatenate([et[rows, a] for a in (0, 1) for _ in (0, 1)])
        tb = np.concatenate([et[cols, b] for _ in (0, 1) for b in (0, 1)])
        nt = self.mesh.num_triangles
        keys, inv = np.unique(ta * nt + tb, return_inverse=True)
        M = self.local_matrices(keys // nt, keys % nt)
        n = len(rows)
        for h, (a, b) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            sl = slice(h * n, (h + 1) * n)
            out += (self.edge_coef[rows, a] * self.edge_coef[cols, b]
                    * M[inv.ravel()[sl], self.edge_local[rows, a],
                        self.edge_local[cols, b]])
        return out

    def z_entry(self, m, n):
        """Single EFIE matrix entry ``Z[m, n]`` in ohms."""
        return complex(self.entries([m], [n])[0])

    def fill_block(self, rows, cols):
        """Dense sub-block ``Z[rows][:, cols]``."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if not len(rows) or not len(cols):
            raise ValueError("block index lists must be non-empty")
        return self._impl.fill_block(self.geometry, rows, cols)

    def dense(self):
        """Full ``N x N`` matrix (small problems only)."""
        idx = np.arange(self.num_unknowns)
        return self.fill_block(idx, idx)


def excitation(mesh, physics, wave, degree=10):
    """Galerkin-tested excitation ``b[m] = <f_m, E_inc>`` (volts)."""
    bary, w = triangle_rule(degree)
    V = mesh.tri_vertices()
    X = np.einsum("qa,tak->tqk", bary, V)
    E = incident_field(wave, physics, X)                       # (T, q, 3)
    # int (r - v_i) . E dS for each local free vertex i
    rE = np.einsum("q,tqk,tqk->t", w, X, E) * mesh.areas
    vE = np.einsum("q,tqk->tk", w, E) * mesh.areas[:, None]
    local = rE[:, None] - np.einsum("tik,tk->ti", V, vE)       # (T, 3)
    local = local / (2.0 * mesh.areas[:, None])
    b = np.zeros(mesh.num_unknowns, complex)
    te, ts = mesh.tri_edges, mesh.tri_signs
    t_idx, l_idx = np.nonzero(te >= 0)
    e = te[t_idx, l_idx]
    contrib = ts[t_idx, l_idx] * mesh.edge_length[e] * local[t_idx, l_idx]
    np.add.at(b, e, contrib)
    return b
