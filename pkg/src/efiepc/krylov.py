"""Restarted GMRES with left or right preconditioning, and dense spectra."""
from __future__ import annotations

from dataclasses import dataclass
import csv
import math
import numpy as np

__all__ = [
    "GmresConfig",
    "GmresReport",
    "SpectrumReport",
    "gmres",
    "dense_spectrum",
    "mean_diagonal_normalized",
    "write_residuals_csv",
    "write_spectrum_csv",
]


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-6
    restart: int = 100
    max_iters: int = 5000
    side: str = "left"

    def __post_init__(self):
        if not (0.0 < self.tol < 1.0):
            raise ValueError("tol must lie in (0, 1)")
        if self.restart < 1:
            raise ValueError("restart must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")


@dataclass
class GmresReport:
    """Outcome of :func:`gmres`.

    ``residual_history[i]`` is the relative (preconditioned, for left
    preconditioning) residual after inner iteration ``i + 1``.
    """

    solution: np.ndarray
    iterations: int
    residual_history: np.ndarray
    converged: bool
    breakdown: bool = False
    true_residual: float = math.nan
    restart: int = 100
    side: str = "left"
    tol: float = 1e-6

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "breakdown": self.breakdown,
            "final_residual": (float(self.residual_history[-1])
                               if len(self.residual_history) else 0.0),
            "true_residual": self.true_residual,
            "restart": self.restart,
            "side": self.side,
            "tol": self.tol,
        }


def _as_operator(A):
    if callable(A):
        return A
    if hasattr(A, "matvec"):
        return A.matvec
    return lambda x: A @ x


def gmres(matvec, precond, b, config=None, x0=None):
    """Solve ``Z x = b`` by restarted GMRES.

    Parameters
    ----------
    matvec : callable, matrix or object with ``matvec``
        Action of ``Z``.
    precond : callable, object with ``solve``, or None
        Action of ``P^{-1}``.
    b : (N,) array
    config : GmresConfig
    x0 : (N,) array, optional

    Left preconditioning iterates on ``P^{-1} Z x = P^{-1} b`` and monitors
    that residual; right preconditioning iterates on ``Z P^{-1} y = b`` and
    returns ``x = P^{-1} y``.  Convergence is declared only once the true
    residual ``||Z x - b|| / ||b||`` is also within ``10 * tol``; otherwise
    the monitored target is tightened and iteration continues.
    """
    config = config or GmresConfig()
    op = _as_operator(matvec)
    if precond is None:
        M = None
    elif hasattr(precond, "solve"):
        M = precond.solve
    else:
        M = precond
    b = np.asarray(b, dtype=complex)
    n = b.shape[0]
    shape = getattr(matvec, "shape", None)
    if shape is None:
        shape = np.shape(op(np.zeros(n, complex))) * 2
    if tuple(shape)[:2] != (n, n):
        raise ValueError(f"operator of shape {tuple(shape)} does not match b of length {n}")
    left = config.side == "left"
    if M is None:
        A = op
        rhs = b
    elif left:
        A = lambda v: M(op(v))
        rhs = M(b)
    else:
        A = lambda v: op(M(v))
        rhs = b
    bnorm = np.linalg.norm(rhs)
    y = np.zeros(n, complex) if x0 is None else np.array(x0, dtype=complex)
    if x0 is not None and M is not None and not left:
        raise ValueError("x0 is not supported with right preconditioning")
    history = []
    breakdown = False
    if bnorm == 0.0:
        return _finish(op, b, np.zeros(n, complex), history, True, False, config)
    m = config.restart
    eps = np.finfo(float).eps
    converged = False
    target = config.tol
    while len(history) < config.max_iters:
        r = rhs - A(y) if np.any(y) else rhs.copy()
        beta = np.linalg.norm(r)
        if beta / bnorm <= target:
            converged, target = _check_true(op, M, left, b, y, config, target)
            if converged or target is None:
                break
        V = np.zeros((m + 1, n), complex)
        H = np.zeros((m + 1, m), complex)
        cs = np.zeros(m, complex)
        sn = np.zeros(m, complex)
        g = np.zeros(m + 1, complex)
        V[0] = r / beta
        g[0] = beta
        j_used = 0
        for j in range(m):
            w = A(V[j])
            norm_before = np.linalg.norm(w)
            for i in range(j + 1):                      # modified Gram-Schmidt
                h = np.vdot(V[i], w)
                H[i, j] += h
                w -= h * V[i]
            hn = np.linalg.norm(w)
            if hn < 0.7 * norm_before:                  # reorthogonalize once
                for i in range(j + 1):
                    h = np.vdot(V[i], w)
                    H[i, j] += h
                    w -= h * V[i]
                hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            for i in range(j):                          # apply old rotations
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -np.conj(sn[i]) * H[i, j] + np.conj(cs[i]) * H[i + 1, j]
                H[i, j] = t
            a, c = H[j, j], H[j + 1, j]
            den = math.hypot(abs(a), abs(c))
            if den == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                phase = a / abs(a) if abs(a) > 0 else 1.0
                cs[j] = abs(a) / den
                sn[j] = phase * np.conj(c) / den
            H[j, j] = cs[j] * a + sn[j] * c
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            res = abs(g[j + 1]) / bnorm
            history.append(res)
            if hn <= eps * max(norm_before, 1e-300) * n:
                breakdown = True                         # Krylov space exhausted
                break
            V[j + 1] = w / hn
            if res <= target or len(history) >= config.max_iters:
                break
        if j_used:
            z = _backsolve(H[:j_used, :j_used], g[:j_used])
            y = y + V[:j_used].T @ z
        if breakdown:
            r = rhs - A(y)
            if history:
                history[-1] = np.linalg.norm(r) / bnorm
            converged = np.linalg.norm(r) / bnorm <= config.tol
            if converged:
                converged, _ = _check_true(op, M, left, b, y, config, target)
            break
    else:
        r = rhs - A(y)
        if np.linalg.norm(r) / bnorm <= target:
            converged, _ = _check_true(op, M, left, b, y, config, target)
    x = M(y) if (M is not None and not left) else y
    return _finish(op, b, x, history, converged, breakdown, config)


def _check_true(op, M, left, b, y, config, target):
    """Accept only if the true residual is within ``10 * tol``.

    Returns ``(converged, next_target)``; a failing check tightens the
    monitored target in proportion to the observed gap (``None`` when it
    can no longer be tightened).
    """
    x = M(y) if (M is not None and not left) else y
    true_res = np.linalg.norm(op(x) - b) / np.linalg.norm(b)
    if true_res <= 10.0 * config.tol:
        return True, target
    nxt = target * 5.0 * config.tol / true_res
    if nxt < 1e3 * np.finfo(float).eps:
        return False, None
    return False, nxt


def _backsolve(R, g):
    k = len(g)
    z = np.zeros(k, complex)
    for i in range(k - 1, -1, -1):
        z[i] = (g[i] - R[i, i + 1:] @ z[i + 1:]) / R[i, i]
    return z


def _finish(op, b, x, history, converged, breakdown, config):
    bn = np.linalg.norm(b)
    true_res = float(np.linalg.norm(op(x) - b) / bn) if bn > 0 else 0.0
    hist = np.asarray(history, dtype=float)
    return GmresReport(x, len(hist), hist, bool(converged), bool(breakdown),
                       true_res, config.restart, config.side, config.tol)


# ----------------------------------------------------------------------
# spectra
# ----------------------------------------------------------------------
@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    condition_estimate: float

    def cluster_fraction(self, radius):
        """Fraction of eigenvalues with ``|lambda - 1| <= radius``."""
        ev = self.eigenvalues
        if not len(ev):
            return 0.0
        return float(np.mean(np.abs(ev - 1.0) <= radius))

    def to_dict(self, radii=(0.1, 0.25, 0.5, 1.0)):
        return {
            "N": int(len(self.eigenvalues)),
            "condition_estimate": self.condition_estimate,
            "cluster_fraction": {str(r): self.cluster_fraction(r) for r in radii},
        }


def mean_diagonal_normalized(Z):
    """``Z`` divided by the mean magnitude of its diagonal."""
    Z = np.asarray(Z)
    return Z / np.mean(np.abs(np.diag(Z)))


def dense_spectrum(Z, factor=None, cap=6000):
    """Eigenvalues of ``Z`` or, given a sparse LU `factor`, of ``P^{-1} Z``.

    ``condition_estimate`` is ``max|lambda| / min|lambda|``.
    """
    Z = np.asarray(Z)
    n = Z.shape[0]
    if Z.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > cap:
        raise ValueError(f"N = {n} exceeds the dense spectrum cap {cap}")
    A = Z if factor is None else factor.solve(Z.astype(complex))
    ev = np.linalg.eigvals(A)
    mag = np.abs(ev)
    cond = float(mag.max() / mag.min()) if mag.min() > 0 else math.inf
    return SpectrumReport(ev, cond)


def write_residuals_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "relative_residual"])
        for i, r in enumerate(report.residual_history, start=1):
            w.writerow([i, repr(float(r))])


def write_spectrum_csv(spectrum, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["re", "im"])
        for ev in spectrum.eigenvalues:
            w.writerow([repr(float(ev.real)), repr(float(ev.imag))])
