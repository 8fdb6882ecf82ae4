"""Pointwise evaluation of the relativistic Landau kernel.

Every function is vectorised over leading axes: momenta are arrays of shape
(..., 3) and broadcast against each other.  Matrices come back with shape
(..., 3, 3).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import ColinearPair, DegeneratePair

DEGENERATE_TOL = 1e-14
COLINEAR_TOL = 1e-12

# Calibrated constants for phi_upper_bound and the companion bound on
# Lambda*(rho+2)*|p-q|^2.  Each is twice the largest observed ratio of the
# quantity to its bound shape (see calibrate_bound_constants).
PHI_BOUND_C = 2.0 * 1.1515
PART2_BOUND_C = 2.0 * 2.3319
# same procedure for Lambda*lambda3 against lambda3_shape
LAMBDA3_BOUND_C = 2.0 * 1.0


@dataclass(frozen=True)
class Momentum:
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))

    @property
    def p0(self):
        return energy(self.p)


def _arr(x):
    if isinstance(x, Momentum):
        return x.p
    return np.asarray(x, dtype=float)


def energy(p):
    p = _arr(p)
    return np.sqrt(1.0 + np.einsum("...i,...i->...", p, p))


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _eye_like(x):
    return np.broadcast_to(np.eye(3), x.shape + (3, 3))


def rho_tau(p, q):
    """Return (rho, tau) with tau = rho + 2.

    rho = p0 q0 - p.q - 1 is evaluated in the cancellation-free form
    (|p-q|^2 + |p x q|^2) / (p0 q0 + p.q + 1), which is exactly zero at p = q.
    """
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    d = p - q
    c = np.cross(p, q)
    pq = _dot(p, q)
    rho = (_dot(d, d) + _dot(c, c)) / (energy(p) * energy(q) + pq + 1.0)
    return rho, rho + 2.0


@dataclass(frozen=True)
class KernelEval:
    rho: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    s: np.ndarray
    p_proj: np.ndarray
    a_proj: np.ndarray
    phi: np.ndarray
    div_q_phi: np.ndarray
    div_p_phi: np.ndarray
    double_div: np.ndarray

    @property
    def lambda_(self):
        return self.lam


def s_matrix(p, q, rho=None):
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    if rho is None:
        rho, _ = rho_tau(p, q)
    tr = rho * (rho + 2.0)
    d = p - q
    return (tr[..., None, None] * _eye_like(tr) - _outer(d, d)
            + rho[..., None, None] * (_outer(p, q) + _outer(q, p)))


def p_matrix(p, q):
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    w = energy(q)[..., None] * p - energy(p)[..., None] * q
    return _dot(w, w)[..., None, None] * _eye_like(w[..., 0]) - _outer(w, w)


def a_matrix(p, q):
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    c = np.cross(p, q)
    pq = _dot(p, q)
    return (_dot(c, c)[..., None, None] * _eye_like(pq)
            - _dot(q, q)[..., None, None] * _outer(p, p)
            - _dot(p, p)[..., None, None] * _outer(q, q)
            + pq[..., None, None] * (_outer(p, q) + _outer(q, p)))


def kernel_eval(p, q) -> KernelEval:
    """All kernel quantities at p != q.  Raises DegeneratePair on the diagonal."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    rho, tau = rho_tau(p, q)
    tr = tau * rho
    if np.any(tr < DEGENERATE_TOL):
        raise DegeneratePair("tau*rho below %g" % DEGENERATE_TOL)
    p0, q0 = energy(p), energy(q)
    lam = (rho + 1.0) ** 2 / (p0 * q0) * tr ** -1.5
    s = s_matrix(p, q, rho)
    phi = lam[..., None, None] * s
    div_q = 2.0 * lam[..., None] * ((rho + 1.0)[..., None] * p - q)
    div_p = 2.0 * lam[..., None] * ((rho + 1.0)[..., None] * q - p)
    dd = 4.0 * (rho + 1.0) / (p0 * q0 * np.sqrt(tr))
    return KernelEval(rho, tau, lam, s, p_matrix(p, q), a_matrix(p, q),
                      phi, div_q, div_p, dd)


def phi(p, q):
    return kernel_eval(p, q).phi


@dataclass(frozen=True)
class EigenPairs:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def eigen_pairs(p, q) -> EigenPairs:
    """Closed-form eigenpairs of S.  Raises ColinearPair if p x q vanishes."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    c = np.cross(p, q)
    cn = np.linalg.norm(c, axis=-1)
    scale = np.linalg.norm(p, axis=-1) * np.linalg.norm(q, axis=-1)
    if np.any(cn <= COLINEAR_TOL * scale) or np.any(scale == 0):
        raise ColinearPair("|p x q| below %g |p||q|" % COLINEAR_TOL)
    p0, q0 = energy(p), energy(q)
    pq, pp, qq = _dot(p, q), _dot(p, p), _dot(q, q)
    w = q0[..., None] * p - p0[..., None] * q
    v1 = _unit(p / p0[..., None] - q / q0[..., None])
    v2 = c / cn[..., None]
    v3 = _unit((q0 * pq - p0 * qq)[..., None] * p
               + (p0 * pq - q0 * pp)[..., None] * q)
    lam3 = _dot(w, w)
    lam2 = lam3 - cn ** 2
    return EigenPairs(v1, v2, v3, np.zeros_like(lam2), lam2, lam3)


def quadratic_form(p, q, xi, all_three=False):
    """S_ij xi_i xi_j.

    With all_three=True returns (direct, cross-product identity,
    eigen-expansion); the eigen route needs non-colinear p, q.  The
    cross-product identity is quadratic in xi only after dividing the
    quartic term by |xi|^2, since |(p x xi) x (q x xi)| = |xi| |(p x q).xi|.
    """
    p, q, xi = np.broadcast_arrays(_arr(p), _arr(q), _arr(xi))
    direct = np.einsum("...i,...ij,...j->...", xi, s_matrix(p, q), xi)
    if not all_three:
        return direct
    w = energy(q)[..., None] * p - energy(p)[..., None] * q
    a = np.cross(w, xi)
    b = np.cross(np.cross(p, xi), np.cross(q, xi))
    cross = _dot(a, a) - _dot(b, b) / _dot(xi, xi)
    ep = eigen_pairs(p, q)
    eig = (ep.lam2 * _dot(ep.v2, xi) ** 2 + ep.lam3 * _dot(ep.v3, xi) ** 2)
    return direct, cross, eig


def kappa(p, rtol=1e-12):
    """Delta-mass coefficient: 2^{7/2} pi p0 int_0^pi (1+|p|^2 sin^2)^{-3/2} sin."""
    p = _arr(p)
    r2 = np.atleast_1d(np.einsum("...i,...i->...", p, p))
    out = np.empty(r2.shape)
    for idx, a in np.ndenumerate(r2):
        val, _ = integrate.quad(
            lambda t: np.sin(t) * (1.0 + a * np.sin(t) ** 2) ** -1.5,
            0.0, np.pi, epsabs=0.0, epsrel=rtol, limit=200)
        out[idx] = 2 ** 3.5 * np.pi * np.sqrt(1.0 + a) * val
    return out.reshape(np.shape(p)[:-1]) if p.ndim > 1 else out[0]


def diagonal_limit(p):
    """Direction average of lim S/(tau rho) as q -> p.

    Approaching along delta the ratio tends to
    I + p p^T - delta delta^T / delta^T (I - p p^T / p0^2) delta,
    so there is no unique limit.  We return its mean over the unit sphere,
    which is (2/3) I at p = 0.
    """
    p = _arr(p)
    pp = _dot(p, p)
    a = pp / (1.0 + pp)
    small = a < 1e-3
    a_safe = np.where(small, 1.0, a)
    s_safe = np.sqrt(a_safe)
    i0 = np.arctanh(np.minimum(s_safe, 1 - 1e-16)) / s_safe
    k = np.arange(8)
    series = np.sum(np.power.outer(np.where(small, a, 0.0), k) / (2 * k + 3), axis=-1)
    e_par = np.where(small, series, (i0 - 1.0) / a_safe)
    i0 = np.where(small, 1.0 + a * series, i0)
    e_perp = 0.5 * (i0 - e_par)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    hat = np.where(n > 0, p / np.where(n > 0, n, 1.0), 0.0)
    hh = _outer(hat, hat)
    eye = _eye_like(pp)
    return (eye + _outer(p, p) - e_par[..., None, None] * hh
            - e_perp[..., None, None] * (eye - hh))


@dataclass(frozen=True)
class RegularizedKernel:
    """Kernel with (tau rho)^{-1/2} replaced by (tau rho + eps^2)^{-1/2}."""
    eps: float

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")

    def lam(self, p, q):
        p, q = np.broadcast_arrays(_arr(p), _arr(q))
        rho, tau = rho_tau(p, q)
        return ((rho + 1.0) ** 2 / (energy(p) * energy(q))
                / np.sqrt(tau * rho + self.eps ** 2))

    def phi(self, p, q):
        return regularized_eval(self, p, q).phi


def regularized_eval(rk: RegularizedKernel, p, q) -> KernelEval:
    """Kernel fields with Phi_eps = Lambda_{1/eps} S/(tau rho); total on p = q."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    rho, tau = rho_tau(p, q)
    tr = tau * rho
    p0, q0 = energy(p), energy(q)
    lam_e = (rho + 1.0) ** 2 / (p0 * q0) / np.sqrt(tr + rk.eps ** 2)
    diag = tr == 0.0
    tr_safe = np.where(diag, 1.0, tr)
    s = s_matrix(p, q, rho)
    ratio = np.where(diag[..., None, None], diagonal_limit(p), s / tr_safe[..., None, None])
    phi_e = lam_e[..., None, None] * ratio
    g = lam_e / tr_safe
    div_q = np.where(diag[..., None], 0.0,
                     2.0 * g[..., None] * ((rho + 1.0)[..., None] * p - q))
    div_p = np.where(diag[..., None], 0.0,
                     2.0 * g[..., None] * ((rho + 1.0)[..., None] * q - p))
    dd = np.where(diag, 0.0, 4.0 * (rho + 1.0) / (p0 * q0 * np.sqrt(tr_safe))
                  * np.sqrt(tr_safe / (tr_safe + rk.eps ** 2)))
    return KernelEval(rho, tau, lam_e, s, p_matrix(p, q), a_matrix(p, q),
                      phi_e, div_q, div_p, dd)


def glassey_strauss_bounds(p, q):
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    d = p - q
    c = np.cross(p, q)
    dd = _dot(d, d)
    lower = (dd + _dot(c, c)) / (2.0 * energy(p) * energy(q))
    return lower, 0.5 * dd


def bound_shape(p, q):
    """sqrt(p0 q0)/|p-q| when rho < 1/8, else p0/q0 + q0/p0."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    rho, _ = rho_tau(p, q)
    p0, q0 = energy(p), energy(q)
    dist = np.linalg.norm(p - q, axis=-1)
    near = np.sqrt(p0 * q0) / np.where(dist > 0, dist, np.inf)
    return np.where(rho < 0.125, near, p0 / q0 + q0 / p0)


def lambda3_shape(p, q):
    """p0/q0 + q0/p0 + sqrt(p0 q0)/|p-q|."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    p0, q0 = energy(p), energy(q)
    return p0 / q0 + q0 / p0 + np.sqrt(p0 * q0) / np.linalg.norm(p - q, axis=-1)


def lambda3_quantity(p, q):
    """Lambda |q0 p - p0 q|^2, the largest eigenvalue of Phi."""
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    k = kernel_eval(p, q)
    w = energy(q)[..., None] * p - energy(p)[..., None] * q
    return k.lam * _dot(w, w)


def phi_upper_bound(p, q):
    """Upper bound on max_ij |Phi^ij(p, q)|."""
    kernel_eval(p, q)  # raises on the diagonal
    return PHI_BOUND_C * bound_shape(p, q)


def part2_upper_bound(p, q):
    """Upper bound on Lambda (rho + 2) |p - q|^2."""
    kernel_eval(p, q)
    return PART2_BOUND_C * bound_shape(p, q)


def part2_quantity(p, q):
    p, q = np.broadcast_arrays(_arr(p), _arr(q))
    k = kernel_eval(p, q)
    d = p - q
    return k.lam * k.tau * _dot(d, d)


def sample_pairs(n, seed=0, rmax=10.0, near_fraction=0.5):
    """Quasi-random pairs: a log-radial cloud plus near-diagonal neighbours."""
    n_near = int(n * near_fraction)
    n_far = n - n_near
    sob = qmc.Sobol(d=9, scramble=True, seed=seed)
    u = sob.random_base2(int(np.ceil(np.log2(max(n, 2)))))[:n]

    def direction(a, b):
        z = 2.0 * a - 1.0
        t = 2.0 * np.pi * b
        r = np.sqrt(1.0 - z ** 2)
        return np.stack([r * np.cos(t), r * np.sin(t), z], axis=-1)

    rad_p = np.expm1(u[:, 0] * np.log1p(rmax))
    rad_q = np.expm1(u[:, 1] * np.log1p(rmax))
    p = rad_p[:, None] * direction(u[:, 2], u[:, 3])
    q = rad_q[:, None] * direction(u[:, 4], u[:, 5])
    step = 10.0 ** (-4.0 + 4.0 * u[n_far:, 6])
    q[n_far:] = p[n_far:] + step[:, None] * direction(u[n_far:, 7], u[n_far:, 8])
    return p, q


def calibrate_bound_constants(n=10 ** 6, seed=0, rmax=100.0, chunk=100_000):
    """Largest observed ratios of (Phi, part2, Lambda lambda3) to their shapes."""
    p, q = sample_pairs(n, seed=seed, rmax=rmax)
    r1 = r2 = r3 = 0.0
    for s in range(0, n, chunk):
        ps, qs = p[s:s + chunk], q[s:s + chunk]
        k = kernel_eval(ps, qs)
        shape = bound_shape(ps, qs)
        r1 = max(r1, float(np.max(np.abs(k.phi).max(axis=(-1, -2)) / shape)))
        r2 = max(r2, float(np.max(part2_quantity(ps, qs) / shape)))
        r3 = max(r3, float(np.max(lambda3_quantity(ps, qs) / lambda3_shape(ps, qs))))
    return r1, r2, r3
