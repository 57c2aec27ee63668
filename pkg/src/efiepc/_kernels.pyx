# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled triangle-pair integrals; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, cos, sin, log, fabs, atan2, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef double complex cplx

cdef double FOUR_PI = 4.0 * M_PI


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline cplx smooth_rem(double R, double k) noexcept nogil:
    # exp(-jkR)/R - (1/R - k^2 R/2 + k^4 R^3/24)
    cdef double x = k * R, x2
    if x < 0.05:
        x2 = x * x
        return (k * x * x2 * x2 * (-1.0 / 720.0 + x2 / 40320.0)
                - 1j * k * (1.0 - x2 / 6.0 + x2 * x2 / 120.0
                            - x2 * x2 * x2 / 5040.0))
    return ((cos(x) - 1.0 + 0.5 * x * x - x * x * x * x / 24.0) / R
            - 1j * sin(x) / R)


cdef inline double log_ratio(double sp, double sm, double Rp, double Rm,
                             double R0sq) noexcept nogil:
    cdef double num, den, a
    if sp > 0:
        num = Rp + sp
    else:
        a = Rp - sp
        num = R0sq / (a if a > 1e-300 else 1e-300)
    if sm > 0:
        den = Rm + sm
    else:
        a = Rm - sm
        den = R0sq / (a if a > 1e-300 else 1e-300)
    if num > 0 and den > 0:
        return log(num / den)
    return 0.0


cdef void static_pot(const double* x, const double* V, const double* n,
                     double* K, double* Kv, double* dout) noexcept nogil:
    """K[j] = int R^q, Kv[3j:3j+3] = int (rho' - rho) R^q for q = -1, 1, 3."""
    cdef double d, ad, scale, le, sm, sp, t, R0sq, Rm, Rp, L, beta
    cdef double Lq[4]
    cdef double e[3]
    cdef double lhat[3]
    cdef double u[3]
    cdef double ra[3]
    cdef double rb[3]
    cdef double tL1 = 0.0, tL3 = 0.0, Km1 = 0.0, Kp1
    cdef int i, c, j
    cdef const double* va
    cdef const double* vb
    for c in range(3):
        ra[c] = x[c] - V[c]
    d = dot3(ra, n)
    ad = fabs(d)
    for c in range(3):
        e[c] = V[3 + c] - V[c]
    scale = sqrt(dot3(e, e))
    for j in range(9):
        Kv[j] = 0.0
    for i in range(3):
        va = V + 3 * i
        vb = V + 3 * ((i + 1) % 3)
        for c in range(3):
            e[c] = vb[c] - va[c]
        le = sqrt(dot3(e, e))
        for c in range(3):
            lhat[c] = e[c] / le
        u[0] = lhat[1] * n[2] - lhat[2] * n[1]
        u[1] = lhat[2] * n[0] - lhat[0] * n[2]
        u[2] = lhat[0] * n[1] - lhat[1] * n[0]
        for c in range(3):
            ra[c] = va[c] - x[c]
            rb[c] = vb[c] - x[c]
        sm = dot3(ra, lhat)
        sp = dot3(rb, lhat)
        t = dot3(ra, u)
        R0sq = t * t + d * d
        Rm = sqrt(dot3(ra, ra))
        Rp = sqrt(dot3(rb, rb))
        if R0sq <= (1e-12 * scale) * (1e-12 * scale):
            L = 0.0
        else:
            L = log_ratio(sp, sm, Rp, Rm, R0sq)
        beta = atan2(t * sp, R0sq + ad * Rp) - atan2(t * sm, R0sq + ad * Rm)
        Km1 += t * L - ad * beta
        Lq[0] = L
        Lq[1] = (sp * Rp - sm * Rm + R0sq * Lq[0]) / 2.0
        Lq[2] = (sp * Rp * Rp * Rp - sm * Rm * Rm * Rm + 3.0 * R0sq * Lq[1]) / 4.0
        Lq[3] = (sp * Rp ** 5 - sm * Rm ** 5 + 5.0 * R0sq * Lq[2]) / 6.0
        tL1 += t * Lq[1]
        tL3 += t * Lq[2]
        for c in range(3):
            Kv[c] += u[c] * Lq[1]
            Kv[3 + c] += u[c] * Lq[2] / 3.0
            Kv[6 + c] += u[c] * Lq[3] / 5.0
    Kp1 = (tL1 + d * d * Km1) / 3.0
    K[0] = Km1
    K[1] = Kp1
    K[2] = (tL3 + 3.0 * d * d * Kp1) / 5.0
    dout[0] = d


# ----------------------------------------------------------------------
# single-pair moments; mom = [S, Vx0, Vx1, Vx2, Vy0, Vy1, Vy2, Q]
# ----------------------------------------------------------------------
cdef void regular_one(const double* x, const double* wx, int nx,
                      const double* y, const double* wy, int ny, double k,
                      cplx* mom) noexcept nogil:
    # real arithmetic throughout; this loop dominates far-field assembly
    cdef int i, j, c
    cdef double R, w, kr, gr, gi, jsr, jsi, y0, y1, y2, d0, d1, d2
    cdef double sr = 0.0, si = 0.0, qr = 0.0, qi = 0.0
    cdef double jvr[3]
    cdef double jvi[3]
    cdef double vxr[3]
    cdef double vxi[3]
    cdef double vyr[3]
    cdef double vyi[3]
    for c in range(3):
        vxr[c] = 0.0
        vxi[c] = 0.0
        vyr[c] = 0.0
        vyi[c] = 0.0
    for i in range(nx):
        jsr = 0.0
        jsi = 0.0
        jvr[0] = 0.0
        jvr[1] = 0.0
        jvr[2] = 0.0
        jvi[0] = 0.0
        jvi[1] = 0.0
        jvi[2] = 0.0
        for j in range(ny):
            y0 = y[3 * j]
            y1 = y[3 * j + 1]
            y2 = y[3 * j + 2]
            d0 = x[3 * i] - y0
            d1 = x[3 * i + 1] - y1
            d2 = x[3 * i + 2] - y2
            R = sqrt(d0 * d0 + d1 * d1 + d2 * d2)
            kr = k * R
            w = wy[j] / (FOUR_PI * R)
            gr = cos(kr) * w
            gi = -sin(kr) * w
            jsr += gr
            jsi += gi
            jvr[0] += gr * y0
            jvr[1] += gr * y1
            jvr[2] += gr * y2
            jvi[0] += gi * y0
            jvi[1] += gi * y1
            jvi[2] += gi * y2
        w = wx[i]
        sr += w * jsr
        si += w * jsi
        for c in range(3):
            vxr[c] += w * jsr * x[3 * i + c]
            vxi[c] += w * jsi * x[3 * i + c]
            vyr[c] += w * jvr[c]
            vyi[c] += w * jvi[c]
            qr += w * x[3 * i + c] * jvr[c]
            qi += w * x[3 * i + c] * jvi[c]
    mom[0] = sr + 1j * si
    for c in range(3):
        mom[1 + c] = vxr[c] + 1j * vxi[c]
        mom[4 + c] = vyr[c] + 1j * vyi[c]
    mom[7] = qr + 1j * qi


cdef void singular_one(const double* x, const double* wx, int nx,
                       const double* Vb, const double* nb,
                       const double* y, const double* wy, int ny, double k,
                       cplx* mom) noexcept nogil:
    cdef int i, j, c
    cdef double R, w, d, Is
    cdef double K[3]
    cdef double Kv[9]
    cdef double dd[3]
    cdef cplx g, js
    cdef cplx jv[3]
    cdef double c1 = -0.5 * k * k, c3 = k * k * k * k / 24.0
    for c in range(8):
        mom[c] = 0
    for i in range(nx):
        static_pot(x + 3 * i, Vb, nb, K, Kv, &d)
        Is = K[0] + c1 * K[1] + c3 * K[2]
        js = Is
        for c in range(3):
            jv[c] = Kv[c] + c1 * Kv[3 + c] + c3 * Kv[6 + c] - d * Is * nb[c]
        for j in range(ny):
            for c in range(3):
                dd[c] = x[3 * i + c] - y[3 * j + c]
            R = sqrt(dot3(dd, dd))
            g = smooth_rem(R, k) * wy[j]
            js = js + g
            for c in range(3):
                jv[c] = jv[c] - g * dd[c]
        w = wx[i] / FOUR_PI
        mom[0] += w * js
        for c in range(3):
            # int (r' - x) G -> int r' G
            jv[c] = jv[c] + x[3 * i + c] * js
            mom[1 + c] += w * js * x[3 * i + c]
            mom[4 + c] += w * jv[c]
            mom[7] += w * x[3 * i + c] * jv[c]


cdef void dilation_side(const double* Va, int za, const double* Vb,
                        const double* nb, const double* ts, const double* ws,
                        int nl, double k, double* F0, double* Fx,
                        double* Fy, double* FQ) noexcept nogil:
    # extracted-kernel moments relative to the shared vertex, already
    # divided by the homogeneity factors 4+q, 5+q, 6+q
    cdef const double* z = Va + 3 * za
    cdef const double* p = Va + 3 * ((za + 1) % 3)
    cdef const double* qv = Va + 3 * ((za + 2) % 3)
    cdef double a[3]
    cdef double b[3]
    cdef double cr[3]
    cdef double x[3]
    cdef double xz[3]
    cdef double K[3]
    cdef double Kv[9]
    cdef double J[3]
    cdef double d, two_area, w, I, coef
    cdef double cq[3]
    cdef int qpow[3]
    cdef int l, c, j
    cq[0] = 1.0
    cq[1] = -0.5 * k * k
    cq[2] = k * k * k * k / 24.0
    qpow[0] = -1
    qpow[1] = 1
    qpow[2] = 3
    for c in range(3):
        a[c] = p[c] - z[c]
        b[c] = qv[c] - z[c]
    cr[0] = a[1] * b[2] - a[2] * b[1]
    cr[1] = a[2] * b[0] - a[0] * b[2]
    cr[2] = a[0] * b[1] - a[1] * b[0]
    two_area = sqrt(dot3(cr, cr))
    for l in range(nl):
        for c in range(3):
            x[c] = p[c] + ts[l] * (qv[c] - p[c])
            xz[c] = x[c] - z[c]
        static_pot(x, Vb, nb, K, Kv, &d)
        w = ws[l] * two_area
        for j in range(3):
            I = K[j]
            for c in range(3):
                J[c] = Kv[3 * j + c] - d * I * nb[c] + xz[c] * I
            coef = cq[j] * w
            F0[0] += coef * I / (4 + qpow[j])
            for c in range(3):
                Fx[c] += coef * xz[c] * I / (5 + qpow[j])
                Fy[c] += coef * J[c] / (5 + qpow[j])
            FQ[0] += coef * dot3(xz, J) / (6 + qpow[j])


cdef void touching_one(const double* Va, const double* Vb, const double* na,
                       const double* nb, int za, int zb,
                       const double* xa, const double* wa, int nxa,
                       const double* xb, const double* wb, int nxb,
                       const double* ts, const double* ws, int nl, double k,
                       cplx* mom) noexcept nogil:
    cdef int i, j, c
    cdef double F0 = 0.0, FQ = 0.0, zz, R, xy
    cdef double Fx[3]
    cdef double Fy[3]
    cdef double Fxb[3]
    cdef double Fyb[3]
    cdef double dd[3]
    cdef const double* z = Va + 3 * za
    cdef cplx g
    for c in range(3):
        Fx[c] = 0.0
        Fy[c] = 0.0
        Fxb[c] = 0.0
        Fyb[c] = 0.0
    dilation_side(Va, za, Vb, nb, ts, ws, nl, k, &F0, Fx, Fy, &FQ)
    # test and source roles swap on the second side
    dilation_side(Vb, zb, Va, na, ts, ws, nl, k, &F0, Fyb, Fxb, &FQ)
    for c in range(3):
        Fx[c] += Fxb[c]
        Fy[c] += Fyb[c]
    zz = dot3(z, z)
    mom[0] = F0
    mom[7] = FQ + dot3(z, Fx) + dot3(z, Fy) + zz * F0
    for c in range(3):
        mom[1 + c] = Fx[c] + z[c] * F0
        mom[4 + c] = Fy[c] + z[c] * F0
    for i in range(nxa):
        for j in range(nxb):
            for c in range(3):
                dd[c] = xa[3 * i + c] - xb[3 * j + c]
            R = sqrt(dot3(dd, dd))
            g = smooth_rem(R, k) * (wa[i] * wb[j])
            mom[0] += g
            xy = 0.0
            for c in range(3):
                mom[1 + c] += g * xa[3 * i + c]
                mom[4 + c] += g * xb[3 * j + c]
                xy += xa[3 * i + c] * xb[3 * j + c]
            mom[7] += g * xy
    for c in range(8):
        mom[c] = mom[c] / FOUR_PI


# ----------------------------------------------------------------------
# array entry points mirroring the numpy fallback
# ----------------------------------------------------------------------
def _split(mom):
    return (mom[:, 0].copy(), mom[:, 1:4].copy(), mom[:, 4:7].copy(),
            mom[:, 7].copy())


def regular_pairs(X, WX, Y, WY, double k):
    cdef const double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] wx = np.ascontiguousarray(WX, dtype=np.float64)
    cdef const double[:, :, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] wy = np.ascontiguousarray(WY, dtype=np.float64)
    cdef Py_ssize_t P = x.shape[0], p
    cdef int nx = x.shape[1], ny = y.shape[1]
    mom_arr = np.zeros((P, 8), np.complex128)
    if P == 0:
        return _split(mom_arr)
    cdef cplx[:, ::1] mom = mom_arr
    with nogil:
        for p in range(P):
            regular_one(&x[p, 0, 0], &wx[p, 0], nx, &y[p, 0, 0], &wy[p, 0], ny,
                        k, &mom[p, 0])
    return _split(mom_arr)


def singular_pairs(X, WX, V, n, Y, WY, double k):
    cdef const double[:, :, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[:, ::1] wx = np.ascontiguousarray(WX, dtype=np.float64)
    cdef const double[:, :, ::1] vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef const double[:, ::1] nn = np.ascontiguousarray(n, dtype=np.float64)
    cdef const double[:, :, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] wy = np.ascontiguousarray(WY, dtype=np.float64)
    cdef Py_ssize_t P = x.shape[0], p
    cdef int nx = x.shape[1], ny = y.shape[1]
    mom_arr = np.zeros((P, 8), np.complex128)
    if P == 0:
        return _split(mom_arr)
    cdef cplx[:, ::1] mom = mom_arr
    with nogil:
        for p in range(P):
            singular_one(&x[p, 0, 0], &wx[p, 0], nx, &vv[p, 0, 0], &nn[p, 0],
                         &y[p, 0, 0], &wy[p, 0], ny, k, &mom[p, 0])
    return _split(mom_arr)


def touching_pairs(Va, Vb, na, nb, za, zb, XA, WA, XB, WB, ts, ws, double k):
    cdef const double[:, :, ::1] va = np.ascontiguousarray(Va, dtype=np.float64)
    cdef const double[:, :, ::1] vb = np.ascontiguousarray(Vb, dtype=np.float64)
    cdef const double[:, ::1] nav = np.ascontiguousarray(na, dtype=np.float64)
    cdef const double[:, ::1] nbv = np.ascontiguousarray(nb, dtype=np.float64)
    cdef const cnp.int64_t[::1] zav = np.ascontiguousarray(za, dtype=np.int64)
    cdef const cnp.int64_t[::1] zbv = np.ascontiguousarray(zb, dtype=np.int64)
    cdef const double[:, :, ::1] xa = np.ascontiguousarray(XA, dtype=np.float64)
    cdef const double[:, ::1] wa = np.ascontiguousarray(WA, dtype=np.float64)
    cdef const double[:, :, ::1] xb = np.ascontiguousarray(XB, dtype=np.float64)
    cdef const double[:, ::1] wb = np.ascontiguousarray(WB, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(ts, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(ws, dtype=np.float64)
    cdef Py_ssize_t P = va.shape[0], p
    cdef int nxa = xa.shape[1], nxb = xb.shape[1], nl = tv.shape[0]
    mom_arr = np.zeros((P, 8), np.complex128)
    if P == 0:
        return _split(mom_arr)
    cdef cplx[:, ::1] mom = mom_arr
    with nogil:
        for p in range(P):
            touching_one(&va[p, 0, 0], &vb[p, 0, 0], &nav[p, 0], &nbv[p, 0],
                         <int>zav[p], <int>zbv[p], &xa[p, 0, 0], &wa[p, 0], nxa,
                         &xb[p, 0, 0], &wb[p, 0], nxb, &tv[0], &wv[0], nl, k,
                         &mom[p, 0])
    return _split(mom_arr)


# ----------------------------------------------------------------------
# geometry-level entry points
# ----------------------------------------------------------------------
cdef struct Geo:
    const double* V
    const double* n
    const double* X
    const double* W
    int nq
    const double* Xs
    const double* Ws
    int nqs
    const double* lt
    const double* lw
    int nl
    const cnp.int64_t* tris
    const double* cen
    const double* diam
    const double* area
    double near_factor
    double k
    cplx c_vec
    cplx c_sca


cdef inline const double* _dptr(cnp.ndarray a):
    return <const double*>cnp.PyArray_DATA(a)


cdef class _GeoRef:
    # keeps the contiguous arrays behind a Geo alive
    cdef Geo g
    cdef object keep

    def __init__(self, geom):
        V = np.ascontiguousarray(geom.V, dtype=np.float64)
        n = np.ascontiguousarray(geom.n, dtype=np.float64)
        X = np.ascontiguousarray(geom.X, dtype=np.float64)
        W = np.ascontiguousarray(geom.W, dtype=np.float64)
        Xs = np.ascontiguousarray(geom.Xs, dtype=np.float64)
        Ws = np.ascontiguousarray(geom.Ws, dtype=np.float64)
        lt = np.ascontiguousarray(geom.line_t, dtype=np.float64)
        lw = np.ascontiguousarray(geom.line_w, dtype=np.float64)
        tris = np.ascontiguousarray(geom.tris, dtype=np.int64)
        cen = np.ascontiguousarray(geom.centroids, dtype=np.float64)
        diam = np.ascontiguousarray(geom.diam, dtype=np.float64)
        area = np.ascontiguousarray(geom.areas, dtype=np.float64)
        self.keep = (V, n, X, W, Xs, Ws, lt, lw, tris, cen, diam, area)
        self.g.V = _dptr(V)
        self.g.n = _dptr(n)
        self.g.X = _dptr(X)
        self.g.W = _dptr(W)
        self.g.nq = W.shape[1]
        self.g.Xs = _dptr(Xs)
        self.g.Ws = _dptr(Ws)
        self.g.nqs = Ws.shape[1]
        self.g.lt = _dptr(lt)
        self.g.lw = _dptr(lw)
        self.g.nl = lt.shape[0]
        self.g.tris = <const cnp.int64_t*>cnp.PyArray_DATA(tris)
        self.g.cen = _dptr(cen)
        self.g.diam = _dptr(diam)
        self.g.area = _dptr(area)
        self.g.near_factor = geom.near_factor
        self.g.k = geom.k
        self.g.c_vec = geom.c_vec
        self.g.c_sca = geom.c_sca


cdef _GeoRef _geo(geom):
    ref = getattr(geom, "_compiled_ref", None)
    if ref is None:
        ref = _GeoRef(geom)
        try:
            object.__setattr__(geom, "_compiled_ref", ref)
        except AttributeError:
            pass
    return ref


cdef void moments_one(const Geo* g, Py_ssize_t ta, Py_ssize_t tb,
                      cplx* mom) noexcept nogil:
    cdef Py_ssize_t a = ta if ta < tb else tb
    cdef Py_ssize_t b = tb if ta < tb else ta
    cdef int i, j, c, za = -1, zb = -1
    cdef double dist, size
    cdef double dd[3]
    cdef cplx tmp
    for i in range(3):
        for j in range(3):
            if za < 0 and g.tris[3 * a + i] == g.tris[3 * b + j]:
                za = i
                zb = j
    if za >= 0:
        touching_one(g.V + 9 * a, g.V + 9 * b, g.n + 3 * a, g.n + 3 * b, za, zb,
                     g.Xs + 3 * g.nqs * a, g.Ws + g.nqs * a, g.nqs,
                     g.Xs + 3 * g.nqs * b, g.Ws + g.nqs * b, g.nqs,
                     g.lt, g.lw, g.nl, g.k, mom)
    else:
        for c in range(3):
            dd[c] = g.cen[3 * a + c] - g.cen[3 * b + c]
        dist = sqrt(dot3(dd, dd))
        size = g.diam[a] if g.diam[a] > g.diam[b] else g.diam[b]
        if dist < g.near_factor * size:
            singular_one(g.X + 3 * g.nq * a, g.W + g.nq * a, g.nq,
                         g.V + 9 * b, g.n + 3 * b,
                         g.X + 3 * g.nq * b, g.W + g.nq * b, g.nq, g.k, mom)
        else:
            regular_one(g.X + 3 * g.nq * a, g.W + g.nq * a, g.nq,
                        g.X + 3 * g.nq * b, g.W + g.nq * b, g.nq, g.k, mom)
    if a == b:
        for c in range(3):
            tmp = 0.5 * (mom[1 + c] + mom[4 + c])
            mom[1 + c] = tmp
            mom[4 + c] = tmp
    elif ta > tb:
        for c in range(3):
            tmp = mom[1 + c]
            mom[1 + c] = mom[4 + c]
            mom[4 + c] = tmp


cdef void matrix_one(const Geo* g, Py_ssize_t ta, Py_ssize_t tb,
                     cplx* M) noexcept nogil:
    cdef cplx mom[8]
    cdef cplx cross
    cdef const double* va = g.V + 9 * ta
    cdef const double* vb = g.V + 9 * tb
    cdef double inv = 1.0 / (g.area[ta] * g.area[tb])
    cdef int i, j, c
    moments_one(g, ta, tb, mom)
    for i in range(3):
        for j in range(3):
            cross = 0
            for c in range(3):
                cross = cross + va[3 * i + c] * mom[4 + c] + vb[3 * j + c] * mom[1 + c]
            M[3 * i + j] = (g.c_vec * (mom[7] - cross
                                       + dot3(va + 3 * i, vb + 3 * j) * mom[0])
                            + g.c_sca * mom[0]) * inv


def pair_moments(geom, ta, tb):
    cdef _GeoRef ref = _geo(geom)
    cdef const cnp.int64_t[::1] a = np.ascontiguousarray(ta, dtype=np.int64)
    cdef const cnp.int64_t[::1] b = np.ascontiguousarray(tb, dtype=np.int64)
    cdef Py_ssize_t P = a.shape[0], p
    mom_arr = np.zeros((P, 8), np.complex128)
    if P == 0:
        return _split(mom_arr)
    cdef cplx[:, ::1] mom = mom_arr
    with nogil:
        for p in range(P):
            moments_one(&ref.g, a[p], b[p], &mom[p, 0])
    return _split(mom_arr)


def pair_matrices(geom, ta, tb):
    cdef _GeoRef ref = _geo(geom)
    cdef const cnp.int64_t[::1] a = np.ascontiguousarray(ta, dtype=np.int64)
    cdef const cnp.int64_t[::1] b = np.ascontiguousarray(tb, dtype=np.int64)
    cdef Py_ssize_t P = a.shape[0], p
    out = np.zeros((P, 3, 3), np.complex128)
    if P == 0:
        return out
    cdef cplx[:, :, ::1] M = out
    with nogil:
        for p in range(P):
            matrix_one(&ref.g, a[p], b[p], &M[p, 0, 0])
    return out


def fill_block(geom, rows, cols):
    cdef _GeoRef ref = _geo(geom)
    et_np = np.asarray(geom.edge_triangles)
    cdef const cnp.int64_t[:, ::1] loc = np.ascontiguousarray(geom.edge_local,
                                                              dtype=np.int64)
    cdef const double[:, ::1] coef = np.ascontiguousarray(geom.edge_coef,
                                                          dtype=np.float64)
    rows_a = np.ascontiguousarray(rows, dtype=np.int64)
    cols_a = np.ascontiguousarray(cols, dtype=np.int64)
    ur_a, ir_a = np.unique(et_np[rows_a], return_inverse=True)
    uc_a, ic_a = np.unique(et_np[cols_a], return_inverse=True)
    # (row, side) incidences grouped by unique row triangle
    flat = ir_a.ravel()
    order_a = np.argsort(flat, kind="stable")
    starts_a = np.searchsorted(flat[order_a], np.arange(len(ur_a) + 1))
    cdef const cnp.int64_t[::1] rv = rows_a
    cdef const cnp.int64_t[::1] cv = cols_a
    cdef const cnp.int64_t[::1] ur = np.ascontiguousarray(ur_a, dtype=np.int64)
    cdef const cnp.int64_t[::1] uc = np.ascontiguousarray(uc_a, dtype=np.int64)
    cdef const cnp.int64_t[:, ::1] ic = np.ascontiguousarray(
        ic_a.reshape(-1, 2), dtype=np.int64)
    cdef const cnp.int64_t[::1] order = np.ascontiguousarray(order_a, dtype=np.int64)
    cdef const cnp.int64_t[::1] starts = np.ascontiguousarray(starts_a, dtype=np.int64)
    cdef Py_ssize_t nr = rv.shape[0], nc = cv.shape[0]
    cdef Py_ssize_t nur = ur.shape[0], nuc = uc.shape[0]
    out = np.zeros((nr, nc), np.complex128)
    if nr == 0 or nc == 0:
        return out
    cdef cplx[:, ::1] Z = out
    cdef Py_ssize_t ia, jb, h, r, col
    cdef int s, t
    cdef double cr
    cdef const cplx* Mr
    cdef cplx* Mrow = <cplx*>malloc(nuc * 9 * sizeof(cplx))
    if Mrow == NULL:
        raise MemoryError()
    try:
        with nogil:
            for ia in range(nur):
                for jb in range(nuc):
                    matrix_one(&ref.g, ur[ia], uc[jb], Mrow + 9 * jb)
                for h in range(starts[ia], starts[ia + 1]):
                    r = order[h] // 2
                    s = order[h] % 2
                    cr = coef[rv[r], s]
                    Mr = Mrow + 3 * loc[rv[r], s]
                    for col in range(nc):
                        for t in range(2):
                            Z[r, col] += (cr * coef[cv[col], t]
                                          * Mr[9 * ic[col, t] + loc[cv[col], t]])
    finally:
        free(Mrow)
    return out
