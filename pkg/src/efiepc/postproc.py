"""Far fields of RWG currents, radar cross section and the Mie-series oracle."""
from __future__ import annotations

from dataclasses import dataclass
import csv
import math

import numpy as np
from scipy.signal import find_peaks
from scipy.special import spherical_jn, spherical_yn

from .kernel import _spherical_unit_vectors
from .quadrature import triangle_rule

__all__ = [
    "DB_FLOOR",
    "FarFieldResult",
    "MieConfig",
    "bistatic_angles",
    "to_dbsm",
    "scattered_farfield",
    "mie_coefficients",
    "mie_amplitudes",
    "mie_rcs",
    "mie_efficiencies",
    "rcs_compare",
    "null_mask",
    "write_rcs_csv",
]

DB_FLOOR = -120.0


def to_dbsm(sigma):
    """``10 log10(sigma)`` clamped below at :data:`DB_FLOOR`."""
    sigma = np.asarray(sigma, dtype=float)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(sigma)
    return np.maximum(db, DB_FLOOR)


@dataclass
class FarFieldResult:
    """RCS samples on an angle grid.

    ``angles`` is ``(M, 2)`` in radians (theta, phi); ``rcs`` is dBsm with
    the :data:`DB_FLOOR` clamp; ``sigma`` is the same quantity in m^2.
    """

    angles: np.ndarray
    rcs: np.ndarray
    polarization: str
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.angles = np.atleast_2d(np.asarray(self.angles, dtype=float))
        self.rcs = np.asarray(self.rcs, dtype=float)
        if self.angles.shape[1] != 2 or len(self.angles) != len(self.rcs):
            raise ValueError("angles must be (M, 2) with one RCS sample per row")
        if self.sigma is not None and len(self.sigma) != len(self.rcs):
            raise ValueError("sigma and rcs lengths differ")

    @property
    def theta_deg(self):
        return np.degrees(self.angles[:, 0])

    @property
    def phi_deg(self):
        return np.degrees(self.angles[:, 1])


def bistatic_angles(theta_start=0.0, theta_stop=180.0, num=181, phi=0.0):
    """``(num, 2)`` radian grid sweeping theta (degrees) at fixed phi."""
    th = np.radians(np.linspace(theta_start, theta_stop, num))
    return np.column_stack([th, np.full(num, math.radians(phi))])


def _polarization_vector(angles, polarization):
    _, th, ph = _spherical_unit_vectors(angles[:, 0], angles[:, 1])
    if polarization == "VV":
        return th
    if polarization == "HH":
        return ph
    raise ValueError("polarization must be 'VV' or 'HH'")


def scattered_farfield(mesh, physics, coefficients, angles, polarization="VV",
                       incident_amplitude=1.0, degree=10, chunk=32):
    """Bistatic RCS radiated by the RWG current ``J = sum_n I_n f_n``.

    ``sigma = k^2 eta^2 / (4 pi) |p . Jt|^2 / |E_i|^2`` with the radiation
    vector ``Jt = int J(r') exp(j k r_hat . r') dS'`` and ``p`` the theta
    (VV) or phi (HH) unit vector of the observation direction.
    """
    coefficients = np.asarray(coefficients, dtype=complex)
    if coefficients.shape != (mesh.num_unknowns,):
        raise ValueError(f"expected {mesh.num_unknowns} coefficients, "
                         f"got shape {coefficients.shape}")
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    pol = _polarization_vector(angles, polarization)
    rhat, _, _ = _spherical_unit_vectors(angles[:, 0], angles[:, 1])
    k = physics.wavenumber
    bary, w = triangle_rule(degree)
    V = mesh.tri_vertices()                                  # (T, 3, 3)
    X = np.einsum("qa,tak->tqk", bary, V)                    # (T, q, 3)
    # per-triangle current: sum over local edges of I s l / (2A) (r - v_i)
    te, ts = mesh.tri_edges, mesh.tri_signs
    valid = te >= 0
    amp = np.where(valid, ts * mesh.edge_length[np.where(valid, te, 0)]
                   * coefficients[np.where(valid, te, 0)], 0.0)
    amp = amp / (2.0 * mesh.areas[:, None])                  # (T, 3)
    a_sum = amp.sum(axis=1)
    a_vert = np.einsum("ti,tik->tk", amp, V)
    J = a_sum[:, None, None] * X - a_vert[:, None, :]        # (T, q, 3)
    Jw = J * (w[None, :, None] * mesh.areas[:, None, None])
    Jw = Jw.reshape(-1, 3)
    Xf = X.reshape(-1, 3)
    sigma = np.empty(len(angles))
    for s in range(0, len(angles), chunk):
        r = rhat[s:s + chunk]
        phase = np.exp(1j * k * (r @ Xf.T))                  # (m, Tq)
        Jt = phase @ Jw                                      # (m, 3)
        proj = np.einsum("mk,mk->m", Jt, pol[s:s + chunk])
        sigma[s:s + chunk] = (k * physics.impedance) ** 2 / (4 * math.pi) * np.abs(proj) ** 2
    sigma /= incident_amplitude ** 2
    return FarFieldResult(angles, to_dbsm(sigma), polarization, sigma)


# ----------------------------------------------------------------------
# Mie series
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class MieConfig:
    """PEC sphere for the Mie series; ``max_order`` defaults to ``ceil(ka) + 15``."""

    radius: float
    frequency: float
    max_order: int | None = None
    speed_of_light: float = 299792458.0

    def __post_init__(self):
        if not (self.radius > 0 and self.frequency > 0):
            raise ValueError("radius and frequency must be positive")
        if self.max_order is not None and self.max_order < self.ka + 15:
            raise ValueError(f"max_order must be at least ka + 15 = {self.ka + 15:.2f}")

    @property
    def ka(self):
        return 2.0 * math.pi * self.frequency / self.speed_of_light * self.radius

    @property
    def wavenumber(self):
        return 2.0 * math.pi * self.frequency / self.speed_of_light

    @property
    def order(self):
        return self.max_order if self.max_order is not None else int(math.ceil(self.ka)) + 15


def mie_coefficients(x, nmax):
    """PEC coefficients ``a_n = psi_n'/xi_n'`` and ``b_n = psi_n/xi_n``, n = 1..nmax."""
    n = np.arange(1, nmax + 1)
    j, dj = spherical_jn(n, x), spherical_jn(n, x, derivative=True)
    y, dy = spherical_yn(n, x), spherical_yn(n, x, derivative=True)
    psi = x * j
    dpsi = j + x * dj
    xi = x * (j + 1j * y)
    dxi = (j + 1j * y) + x * (dj + 1j * dy)
    with np.errstate(over="ignore", invalid="ignore"):
        a = dpsi / dxi
        b = psi / xi
    # overflowed Neumann functions mean a vanishing coefficient
    a = np.where(np.isfinite(a), a, 0.0)
    b = np.where(np.isfinite(b), b, 0.0)
    return a, b


def _angular(mu, nmax):
    mu = np.asarray(mu, dtype=float)
    pi = np.zeros((nmax + 1,) + mu.shape)
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    tau[1] = mu
    for n in range(2, nmax + 1):
        pi[n] = ((2 * n - 1) * mu * pi[n - 1] - n * pi[n - 2]) / (n - 1)
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def mie_amplitudes(mie, scattering_angle):
    """Scattering amplitudes ``S1, S2`` at scattering angles (radians)."""
    nmax = mie.order
    a, b = mie_coefficients(mie.ka, nmax)
    n = np.arange(1, nmax + 1)
    c = (2 * n + 1) / (n * (n + 1))
    pi, tau = _angular(np.cos(scattering_angle), nmax)
    S1 = np.tensordot(c * a, pi, axes=1) + np.tensordot(c * b, tau, axes=1)
    S2 = np.tensordot(c * a, tau, axes=1) + np.tensordot(c * b, pi, axes=1)
    return S1, S2


def mie_rcs(mie, angles, polarization="VV"):
    """Co-polarized bistatic RCS of a PEC sphere.

    The plane wave travels along ``-z`` (incidence from ``theta = 0``) with
    the electric field along ``x`` (VV) or ``y`` (HH); observation angles
    are ``(theta, phi)`` in the same frame as :func:`scattered_farfield`.
    """
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    theta, phi = angles[:, 0], angles[:, 1]
    S1, S2 = mie_amplitudes(mie, math.pi - theta)
    k = mie.wavenumber
    if polarization == "VV":
        sigma = 4 * math.pi / k ** 2 * np.abs(S2) ** 2 * np.cos(phi) ** 2
    elif polarization == "HH":
        sigma = 4 * math.pi / k ** 2 * np.abs(S1) ** 2 * np.cos(phi) ** 2
    else:
        raise ValueError("polarization must be 'VV' or 'HH'")
    return FarFieldResult(angles, to_dbsm(sigma), polarization, sigma)


def mie_efficiencies(mie):
    """``(Q_ext, Q_sca)`` normalized by the geometric cross section."""
    x = mie.ka
    a, b = mie_coefficients(x, mie.order)
    n = np.arange(1, mie.order + 1)
    q_ext = 2.0 / x ** 2 * np.sum((2 * n + 1) * (a + b).real)
    q_sca = 2.0 / x ** 2 * np.sum((2 * n + 1) * (np.abs(a) ** 2 + np.abs(b) ** 2))
    return float(q_ext), float(q_sca)


# ----------------------------------------------------------------------
# comparison and output
# ----------------------------------------------------------------------
def null_mask(rcs_db, guard_db=3.0):
    """True where a sample is kept: outside every null's ``guard_db`` basin.

    A null is an interior local minimum whose prominence is at least
    `guard_db` (the curve rises by that much on both sides); its basin is
    the contiguous run of samples around it below ``min + guard_db``.
    """
    y = np.asarray(rcs_db, dtype=float)
    keep = np.ones(len(y), dtype=bool)
    nulls, _ = find_peaks(-y, prominence=guard_db)
    for i in nulls:
        lim = y[i] + guard_db
        lo = hi = i
        while lo > 0 and y[lo - 1] < lim:
            lo -= 1
        while hi < len(y) - 1 and y[hi + 1] < lim:
            hi += 1
        keep[lo:hi + 1] = False
    return keep


def rcs_compare(solver, reference, guard_db=3.0):
    """dB error of `solver` against `reference` away from the reference nulls.

    Returns ``{"rms_db", "max_db", "kept", "total"}``.
    """
    if solver.angles.shape != reference.angles.shape or not np.allclose(
            solver.angles, reference.angles, rtol=0.0, atol=1e-12):
        raise ValueError("solver and reference use different angle grids")
    keep = null_mask(reference.rcs, guard_db)
    if not keep.any():
        raise ValueError("null guard excluded every sample")
    err = solver.rcs[keep] - reference.rcs[keep]
    return {
        "rms_db": float(np.sqrt(np.mean(err ** 2))),
        "max_db": float(np.max(np.abs(err))),
        "kept": int(keep.sum()),
        "total": int(len(keep)),
    }


def write_rcs_csv(result, path):
    """``thetaDeg,phiDeg,rcsDbsm`` rows under a single header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["thetaDeg", "phiDeg", "rcsDbsm"])
        for t, p, r in zip(result.theta_deg, result.phi_deg, result.rcs):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(r))])
