"""Independent reference computations used by the tests."""
import math

import numpy as np
from numpy.polynomial.legendre import leggauss


def _gauss(a, b, n):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def inner_potentials(r, Vb, k, n_ang=48, n_rad=24):
    """``int_Tb G dS'`` and ``int_Tb r' G dS'`` at points `r` (P, 3).

    Polar coordinates about the projection of each point onto the source
    plane: one angular Gauss rule per edge sub-triangle, the scalar radial
    integral in closed form and the vector one by Gauss.
    """
    r = np.atleast_2d(r)
    nrm = np.cross(Vb[1] - Vb[0], Vb[2] - Vb[0])
    nrm /= np.linalg.norm(nrm)
    z = (r - Vb[0]) @ nrm
    p0 = r - z[:, None] * nrm
    az = np.abs(z)
    phi0 = np.zeros(len(r), complex)
    phi1 = np.zeros((len(r), 3), complex)
    xr, wr = leggauss(n_rad)
    xr = 0.5 * (xr + 1.0)
    wr = 0.5 * wr
    for e in range(3):
        P, Q = Vb[e], Vb[(e + 1) % 3]
        a = P - p0
        b = Q - p0
        s = np.sign(np.cross(a, b) @ nrm)
        edge = Q - P
        t0 = -(a @ edge) / (edge @ edge)
        foot = P + t0[:, None] * edge
        dvec = foot - p0
        d = np.linalg.norm(dvec, axis=1)
        ok = (d > 1e-14) & (s != 0)
        e1 = np.where(ok[:, None], dvec / np.where(ok, d, 1.0)[:, None], 0.0)
        e2 = np.cross(nrm, e1)
        fa = np.arctan2(np.einsum("pk,pk->p", a, e2), np.einsum("pk,pk->p", a, e1))
        fb = np.arctan2(np.einsum("pk,pk->p", b, e2), np.einsum("pk,pk->p", b, e1))
        lo, hi = np.minimum(fa, fb), np.maximum(fa, fb)
        for seg_lo, seg_hi in ((lo, np.clip(0.0, lo, hi)), (np.clip(0.0, lo, hi), hi)):
            x, w = leggauss(n_ang)
            phi = 0.5 * (seg_hi - seg_lo)[:, None] * x + 0.5 * (seg_hi + seg_lo)[:, None]
            wt = 0.5 * (seg_hi - seg_lo)[:, None] * w                        # (P, n)
            L = d[:, None] / np.cos(phi)
            RL = np.sqrt(L ** 2 + az[:, None] ** 2)
            A0 = (np.exp(-1j * k * az)[:, None] - np.exp(-1j * k * RL)) / (4j * math.pi * k)
            rho = L[..., None] * xr                                          # (P, n, m)
            R = np.sqrt(rho ** 2 + az[:, None, None] ** 2)
            R = np.where(R > 0, R, 1.0)
            A1 = np.sum(wr * L[..., None] * rho ** 2 * np.exp(-1j * k * R) / (4 * math.pi * R),
                        axis=-1)
            u = (np.cos(phi)[..., None] * e1[:, None, :]
                 + np.sin(phi)[..., None] * e2[:, None, :])                 # (P, n, 3)
            sw = (s * ok)[:, None] * wt
            phi0 += np.sum(sw * A0, axis=1)
            phi1 += np.sum((sw * A0)[..., None] * p0[:, None, :]
                           + (sw * A1)[..., None] * u, axis=1)
    return phi0, phi1


def subdivided_rule(V, level, degree=8):
    """Points and area weights of `V` split ``4**level`` times."""
    from efiepc.quadrature import triangle_rule
    bary, w = triangle_rule(degree)
    tris = [np.asarray(V, dtype=float)]
    for _ in range(level):
        nxt = []
        for A, B, C in tris:
            ab, bc, ca = (A + B) / 2, (B + C) / 2, (C + A) / 2
            nxt += [np.array(t) for t in ((A, ab, ca), (ab, B, bc), (ca, bc, C), (ab, bc, ca))]
        tris = nxt
    pts, wts = [], []
    for T in tris:
        area = 0.5 * np.linalg.norm(np.cross(T[1] - T[0], T[2] - T[0]))
        pts.append(bary @ T)
        wts.append(w * area)
    return np.concatenate(pts), np.concatenate(wts)


def local_matrix(Va, Vb, k, omega, mu, eps, level=3, degree=8):
    """Reference 3x3 RWG triangle-pair matrix (free vertex i of Va, j of Vb)."""
    X, W = subdivided_rule(Va, level, degree)
    phi0, phi1 = inner_potentials(X, Vb, k)
    Aa = 0.5 * np.linalg.norm(np.cross(Va[1] - Va[0], Va[2] - Va[0]))
    Ab = 0.5 * np.linalg.norm(np.cross(Vb[1] - Vb[0], Vb[2] - Vb[0]))
    M = np.zeros((3, 3), complex)
    S = np.sum(W * phi0)
    for i in range(3):
        for j in range(3):
            vec = np.einsum("pk,pk->p", X - Va[i], phi1 - Vb[j] * phi0[:, None])
            M[i, j] = (1j * omega * mu / (4 * Aa * Ab) * np.sum(W * vec)
                       + S / (1j * omega * eps * Aa * Ab))
    return M


def thomas(a, b, c, d):
    """Tridiagonal solve: sub-diagonal a, diagonal b, super-diagonal c."""
    n = len(b)
    cp = np.zeros(n, dtype=complex)
    dp = np.zeros(n, dtype=complex)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i - 1] * cp[i - 1]
        cp[i] = c[i] / m if i < n - 1 else 0.0
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / m
    x = np.zeros(n, dtype=complex)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def brute_force_rwg_count(triangles):
    """Interior edges by explicit pairwise comparison of triangle edges."""
    tris = [tuple(t) for t in np.asarray(triangles).tolist()]
    edges = []
    for t in tris:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges.append(frozenset((a, b)))
    count = 0
    for i, e in enumerate(set(edges)):
        if sum(1 for f in edges if f == e) == 2:
            count += 1
    return count


def physical_optics_peak(area, wavelength):
    """Broadside RCS ``4 pi A^2 / lambda^2`` of a flat plate (m^2)."""
    return 4.0 * math.pi * area ** 2 / wavelength ** 2
