"""Pure numpy triangle-pair integrals (fallback for the compiled core).

All routines return the four moments of the Helmholtz kernel
``G(R) = exp(-1j*k*R) / (4*pi*R)`` over a (test, source) triangle pair::

    S  = int int G            (P,)
    Vx = int int r G          (P, 3)
    Vy = int int r' G         (P, 3)
    Q  = int int (r . r') G   (P,)

from which every RWG interaction on that pair follows.

Near pairs split the kernel into the odd powers ``1/R - k^2 R/2 + k^4 R^3/24``
(integrated in closed form over the source triangle) plus a C^4 remainder
handled by product quadrature.  Pairs sharing a vertex additionally reduce
the static part to line integrals by dilation about the shared vertex.
"""
import numpy as np

FOUR_PI = 4.0 * np.pi
CHUNK = 2048
POWERS = (-1, 1, 3)


def static_coefficients(k):
    """Weights of ``R**q`` (q = -1, 1, 3) in the extracted kernel part."""
    return (1.0, -0.5 * k * k, k ** 4 / 24.0)


def _moments(X, WX, Js, Jv):
    # Js: (P, nx) int G dS' at outer points, Jv: (P, nx, 3) int r' G dS'
    S = np.einsum("pi,pi->p", WX, Js)
    Vx = np.einsum("pi,pi,pik->pk", WX, Js, X)
    Vy = np.einsum("pi,pik->pk", WX, Jv)
    Q = np.einsum("pi,pik,pik->p", WX, X, Jv)
    return S, Vx, Vy, Q


def regular_pairs(X, WX, Y, WY, k):
    """Product-rule moments for well separated pairs.

    X : (P, nx, 3) test points, WX : (P, nx) weights (area included)
    Y : (P, ny, 3) source points, WY : (P, ny)
    """
    P = X.shape[0]
    S = np.empty(P, complex)
    Vx = np.empty((P, 3), complex)
    Vy = np.empty((P, 3), complex)
    Q = np.empty(P, complex)
    for a in range(0, P, CHUNK):
        b = min(P, a + CHUNK)
        x, y = X[a:b], Y[a:b]
        D = x[:, :, None, :] - y[:, None, :, :]
        R = np.sqrt(np.einsum("pijk,pijk->pij", D, D))
        G = np.exp(-1j * k * R) / (FOUR_PI * R) * WY[a:b, None, :]
        Js = G.sum(axis=2)
        Jv = np.einsum("pij,pjk->pik", G, y)
        S[a:b], Vx[a:b], Vy[a:b], Q[a:b] = _moments(x, WX[a:b], Js, Jv)
    return S, Vx, Vy, Q


def _log_ratio(sp, sm, Rp, Rm, R0sq):
    # ln((R+ + s+) / (R- + s-)) without cancellation for negative s
    num = np.where(sp > 0, Rp + sp, R0sq / np.maximum(Rp - sp, 1e-300))
    den = np.where(sm > 0, Rm + sm, R0sq / np.maximum(Rm - sm, 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(num / den)
    return np.where((num > 0) & (den > 0), out, 0.0)


def static_potentials(X, V, n):
    """Closed-form source-triangle integrals at observation points.

    X : (M, 3) points, V : (M, 3, 3) source triangle vertices,
    n : (M, 3) unit normal of the source triangle (right-handed with V).

    Returns ``(K, Kv, d)``: ``K[j]`` is the integral of ``R**q`` and
    ``Kv[j]`` that of ``(rho' - rho) R**q`` for ``q = POWERS[j]``; rho is the
    projection of the observation point on the source plane and ``d`` its
    signed height above it.
    """
    M = len(X)
    d = np.einsum("mk,mk->m", X - V[:, 0], n)
    ad = np.abs(d)
    scale = np.linalg.norm(V[:, 1] - V[:, 0], axis=1)
    K_m1 = np.zeros(M)
    tL = np.zeros((2, M))          # sum_i t_i L_q for q = 1, 3
    Kv = np.zeros((3, M, 3))
    for i in range(3):
        va, vb = V[:, i], V[:, (i + 1) % 3]
        e = vb - va
        lhat = e / np.linalg.norm(e, axis=1)[:, None]
        u = np.cross(lhat, n)
        ra, rb = va - X, vb - X
        sm = np.einsum("mk,mk->m", ra, lhat)
        sp = np.einsum("mk,mk->m", rb, lhat)
        t = np.einsum("mk,mk->m", ra, u)
        R0sq = t * t + d * d
        Rm = np.linalg.norm(ra, axis=1)
        Rp = np.linalg.norm(rb, axis=1)
        on_line = R0sq <= (1e-12 * scale) ** 2
        L = np.where(on_line, 0.0, _log_ratio(sp, sm, Rp, Rm, R0sq))
        beta = (np.arctan2(t * sp, R0sq + ad * Rp)
                - np.arctan2(t * sm, R0sq + ad * Rm))
        K_m1 += t * L - ad * beta
        # line integrals of R**q along the edge by the standard recursion
        Lq = [L]
        for q in (1, 3, 5):
            Lq.append((sp * Rp ** q - sm * Rm ** q + q * R0sq * Lq[-1]) / (q + 1))
        tL[0] += t * Lq[1]
        tL[1] += t * Lq[2]
        for j, q in enumerate(POWERS):
            Kv[j] += u * (Lq[j + 1] / (q + 2))[:, None]
    K_p1 = (tL[0] + d * d * K_m1) / 3.0
    K_p3 = (tL[1] + 3.0 * d * d * K_p1) / 5.0
    return np.stack([K_m1, K_p1, K_p3]), Kv, d


def smooth_remainder(R, k):
    """``exp(-jkR)/R - (1/R - k^2 R/2 + k^4 R^3/24)``, finite at R = 0."""
    R = np.asarray(R, dtype=float)
    out = np.empty(R.shape, complex)
    small = k * R < 0.05
    Rl = R[~small]
    kl = k * Rl
    out[~small] = ((np.cos(kl) - 1.0 + 0.5 * kl ** 2 - kl ** 4 / 24.0) / Rl
                   - 1j * np.sin(kl) / Rl)
    x = k * R[small]
    x2 = x * x
    re = k * x ** 5 * (-1.0 / 720.0 + x2 / 40320.0)
    im = -k * (1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 ** 3 / 5040.0)
    out[small] = re + 1j * im
    return out


def _extracted(X, V, n, k):
    # int g_s dS' and int (r' - x) g_s dS' for the extracted kernel part
    K, Kv, d = static_potentials(X, V, n)
    c = static_coefficients(k)
    Is = c[0] * K[0] + c[1] * K[1] + c[2] * K[2]
    Iv = c[0] * Kv[0] + c[1] * Kv[1] + c[2] * Kv[2] - (d * Is)[:, None] * n
    return Is, Iv


def singular_pairs(X, WX, V, n, Y, WY, k):
    """Moments for near pairs: closed-form inner integral of the extracted
    kernel over the source triangle ``V`` (P, 3, 3) with normal ``n``, plus
    product quadrature of the smooth remainder with source rule ``Y, WY``.
    """
    P, nx, _ = X.shape
    S = np.empty(P, complex)
    Vx = np.empty((P, 3), complex)
    Vy = np.empty((P, 3), complex)
    Q = np.empty(P, complex)
    step = max(1, CHUNK // 4)
    for a in range(0, P, step):
        b = min(P, a + step)
        x, y = X[a:b], Y[a:b]
        m = (b - a) * nx
        Is, Iv = _extracted(x.reshape(m, 3), np.repeat(V[a:b], nx, axis=0),
                            np.repeat(n[a:b], nx, axis=0), k)
        D = x[:, :, None, :] - y[:, None, :, :]
        R = np.sqrt(np.einsum("pijk,pijk->pij", D, D))
        g = smooth_remainder(R, k) * WY[a:b, None, :]
        Js = Is.reshape(b - a, nx) + g.sum(axis=2)
        Jrel = Iv.reshape(b - a, nx, 3) - np.einsum("pij,pijk->pik", g, D)
        Jv = Jrel + x * Js[:, :, None]
        S[a:b], Vx[a:b], Vy[a:b], Q[a:b] = _moments(x, WX[a:b], Js, Jv)
    return S / FOUR_PI, Vx / FOUR_PI, Vy / FOUR_PI, Q / FOUR_PI


def _dilation_side(Va, za, Vb, nb, ts, ws, k):
    """One boundary term of the dilation identity.

    Integrates the extracted kernel moments over the edge of triangle ``a``
    opposite its vertex ``za`` against the whole source triangle ``b``.
    Returns per-power arrays ``(F0, Fx, Fy, FQ)`` with coordinates relative to
    the shared vertex, each already multiplied by ``h_a * |e_a| = 2 A_a``.
    """
    P = len(Va)
    rows = np.arange(P)
    z = Va[rows, za]
    p = Va[rows, (za + 1) % 3]
    q = Va[rows, (za + 2) % 3]
    two_area = np.linalg.norm(np.cross(p - z, q - z), axis=1)
    nl = len(ts)
    X = p[:, None, :] + ts[None, :, None] * (q - p)[:, None, :]   # (P, nl, 3)
    K, Kv, d = static_potentials(X.reshape(-1, 3), np.repeat(Vb, nl, axis=0),
                                 np.repeat(nb, nl, axis=0))
    nrep = np.repeat(nb, nl, axis=0)
    xz = (X - z[:, None, :]).reshape(-1, 3)
    out = []
    w = (ws[None, :] * two_area[:, None]).reshape(-1)
    for j in range(3):
        I = K[j]
        # int_b (y - z) R^q dy = int_b (y - x) R^q + (x - z) int_b R^q
        J = Kv[j] - (d * I)[:, None] * nrep + xz * I[:, None]
        wI = (w * I).reshape(P, nl)
        F0 = wI.sum(axis=1)
        Fx = np.einsum("pl,plk->pk", wI, xz.reshape(P, nl, 3))
        Fy = np.einsum("pl,plk->pk", w.reshape(P, nl), J.reshape(P, nl, 3))
        FQ = np.einsum("l,lk,lk->l", w, xz, J).reshape(P, nl).sum(axis=1)
        out.append((F0, Fx, Fy, FQ))
    return out


def touching_pairs(Va, Vb, na, nb, za, zb, XA, WA, XB, WB, ts, ws, k):
    """Moments for pairs sharing a vertex (including identical triangles).

    Va, Vb : (P, 3, 3) vertices; na, nb : normals; za, zb : local index of a
    shared vertex in each triangle; XA/WA, XB/WB : product rules for the
    smooth remainder; ts, ws : 1D rule on [0, 1] for the edge integrals.
    """
    P = len(Va)
    rows = np.arange(P)
    z = Va[rows, za]
    side_a = _dilation_side(Va, za, Vb, nb, ts, ws, k)
    side_b = _dilation_side(Vb, zb, Va, na, ts, ws, k)
    c = static_coefficients(k)
    F0 = np.zeros(P)
    Fx = np.zeros((P, 3))
    Fy = np.zeros((P, 3))
    FQ = np.zeros(P)
    for j, qpow in enumerate(POWERS):
        a0, ax, ay, aq = side_a[j]
        b0, bx, by, bq = side_b[j]
        # side b integrates with the roles of x and y exchanged
        F0 += c[j] * (a0 + b0) / (4 + qpow)
        Fx += c[j] * (ax + by) / (5 + qpow)
        Fy += c[j] * (ay + bx) / (5 + qpow)
        FQ += c[j] * (aq + bq) / (6 + qpow)
    zz = np.einsum("pk,pk->p", z, z)
    S = F0.astype(complex)
    Vx = Fx + z * F0[:, None]
    Vy = Fy + z * F0[:, None]
    Q = FQ + np.einsum("pk,pk->p", z, Fx + Fy) + zz * F0
    # smooth remainder by product quadrature
    D = XA[:, :, None, :] - XB[:, None, :, :]
    R = np.sqrt(np.einsum("pijk,pijk->pij", D, D))
    g = smooth_remainder(R, k) * WA[:, :, None] * WB[:, None, :]
    S = S + g.sum(axis=(1, 2))
    Vx = Vx + np.einsum("pij,pik->pk", g, XA)
    Vy = Vy + np.einsum("pij,pjk->pk", g, XB)
    Q = Q + np.einsum("pij,pik,pjk->p", g, XA, XB)
    return S / FOUR_PI, Vx / FOUR_PI, Vy / FOUR_PI, Q / FOUR_PI


# ----------------------------------------------------------------------
# geometry-level entry points (shared contract with the compiled core)
# ----------------------------------------------------------------------
def _chunks(idx, size=4096):
    for start in range(0, len(idx), size):
        yield idx[start:start + size]


def classify_pairs(g, ta, tb):
    """``(near, touching)`` masks for triangle pairs of geometry `g`."""
    T = g.tris
    touching = (T[ta][:, :, None] == T[tb][:, None, :]).any(axis=(1, 2))
    dist = np.linalg.norm(g.centroids[ta] - g.centroids[tb], axis=1)
    size = np.maximum(g.diam[ta], g.diam[tb])
    near = touching | (dist < g.near_factor * size)
    return near, touching


def pair_moments(g, ta, tb):
    """Moments ``(S, Vx, Vy, Q)`` of triangle pairs ``(ta, tb)``.

    Each pair is integrated with the lower triangle id on the test side and
    transposed back, so ``(a, b)`` and ``(b, a)`` are exact mirrors.
    """
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    lo = np.minimum(ta, tb)
    hi = np.maximum(ta, tb)
    P = len(lo)
    S = np.empty(P, complex)
    Vx = np.empty((P, 3), complex)
    Vy = np.empty((P, 3), complex)
    Q = np.empty(P, complex)
    near, touching = classify_pairs(g, lo, hi)
    k = g.k
    for idx in _chunks(np.flatnonzero(~near)):
        a, b = lo[idx], hi[idx]
        res = regular_pairs(g.X[a], g.W[a], g.X[b], g.W[b], k)
        S[idx], Vx[idx], Vy[idx], Q[idx] = res
    for idx in _chunks(np.flatnonzero(near & ~touching)):
        a, b = lo[idx], hi[idx]
        res = singular_pairs(g.X[a], g.W[a], g.V[b], g.n[b], g.X[b], g.W[b], k)
        S[idx], Vx[idx], Vy[idx], Q[idx] = res
    for idx in _chunks(np.flatnonzero(touching)):
        a, b = lo[idx], hi[idx]
        eq = g.tris[a][:, :, None] == g.tris[b][:, None, :]
        flat = eq.reshape(len(idx), 9).argmax(axis=1)
        res = touching_pairs(g.V[a], g.V[b], g.n[a], g.n[b], flat // 3, flat % 3,
                             g.Xs[a], g.Ws[a], g.Xs[b], g.Ws[b],
                             g.line_t, g.line_w, k)
        S[idx], Vx[idx], Vy[idx], Q[idx] = res
    same = lo == hi
    if same.any():
        avg = 0.5 * (Vx[same] + Vy[same])
        Vx[same] = avg
        Vy[same] = avg
    swap = ta > tb
    if swap.any():
        Vx[swap], Vy[swap] = Vy[swap].copy(), Vx[swap].copy()
    return S, Vx, Vy, Q


def pair_matrices(g, ta, tb):
    """RWG interaction matrices ``M[p, i, j]`` (free vertex i of the test,
    j of the source triangle)."""
    ta = np.asarray(ta, dtype=np.int64)
    tb = np.asarray(tb, dtype=np.int64)
    S, Vx, Vy, Q = pair_moments(g, ta, tb)
    va, vb = g.V[ta], g.V[tb]
    AaAb = g.areas[ta] * g.areas[tb]
    vec = (Q[:, None, None]
           - np.einsum("pk,pjk->pj", Vx, vb)[:, None, :]
           - np.einsum("pik,pk->pi", va, Vy)[:, :, None]
           + np.einsum("pik,pjk->pij", va, vb) * S[:, None, None])
    return (g.c_vec * vec + g.c_sca * S[:, None, None]) / AaAb[:, None, None]


def fill_block(g, rows, cols):
    """Dense block ``Z[rows][:, cols]`` of geometry `g`."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    et = g.edge_triangles
    ur, ir = np.unique(et[rows], return_inverse=True)
    uc, ic = np.unique(et[cols], return_inverse=True)
    ir = ir.reshape(-1, 2)
    ic = ic.reshape(-1, 2)
    out = np.zeros((len(rows), len(cols)), complex)
    # bound the (row tri x col tri x 3 x 3) buffer
    step = max(1, 65536 // max(1, len(uc)))
    for s0 in range(0, len(ur), step):
        s1 = min(len(ur), s0 + step)
        M = pair_matrices(g, np.repeat(ur[s0:s1], len(uc)),
                          np.tile(uc, s1 - s0)).reshape(s1 - s0, len(uc), 3, 3)
        for a in (0, 1):
            ra = ir[:, a]
            sel = np.flatnonzero((ra >= s0) & (ra < s1))
            if not len(sel):
                continue
            for b in (0, 1):
                sub = M[ra[sel][:, None] - s0, ic[:, b][None, :],
                        g.edge_local[rows[sel], a][:, None],
                        g.edge_local[cols, b][None, :]]
                out[sel] += (g.edge_coef[rows[sel], a][:, None]
                             * g.edge_coef[cols, b][None, :]) * sub
    return out
