"""Functionals of a grid density: conserved moments, entropy, dissipation,
Fisher information, moments, the determinant certificate and the audits that
compare them with the analytic inequalities."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import coeff, kernel
from ._pairs import coulomb_pair_sums
from .coeff import DistributionGrid
from .errors import NonpositiveDensity, ZeroMass

CSV_COLUMNS = ("t", "mass", "px", "py", "pz", "energy", "entropy", "abs_entropy",
               "dissipation", "fisher", "delta_phi", "m_half", "m_1", "m_2",
               "min_f", "dt")


def phi_weight(r):
    """Test function phi(r) = exp(-r) used with r = |q|^2/2."""
    return np.exp(-r)


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: np.ndarray
    energy: float
    entropy: float
    abs_entropy: float
    dissipation: float
    fisher: float
    moments: dict
    delta_phi: float
    min_f: float
    dt: float
    l3_norm: float = float("nan")
    rel_l1_juttner: float = float("nan")

    def csv_row(self):
        vals = (self.t, self.mass, *self.momentum, self.energy, self.entropy,
                self.abs_entropy, self.dissipation, self.fisher, self.delta_phi,
                self.moments[0.5], self.moments[1.0], self.moments[2.0],
                self.min_f, self.dt)
        return ["%.17g" % v for v in vals]


def write_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.csv_row())


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError("unexpected CSV header")
    return np.array([[float(x) for x in r] for r in rows[1:]])


# ---------------------------------------------------------------- moments

def conserved_moments(f: DistributionGrid):
    g = f.geom
    v = f.values
    mass = g.integrate(v)
    mom = np.array([g.integrate(v * g.p[..., k]) for k in range(3)])
    return mass, mom, g.integrate(v * g.p0)


def moment_mk(f: DistributionGrid, k):
    if k < 0:
        raise ValueError("k must be >= 0")
    g = f.geom
    if k == 0.5:
        return g.integrate(f.values * g.p0)
    return g.integrate(f.values * (g.p0 ** 2) ** k)


def lp_norm(f: DistributionGrid, p=3.0, weight=None):
    v = np.abs(f.values) if weight is None else np.abs(f.values) * weight
    return f.geom.integrate(v ** p) ** (1.0 / p)


# ---------------------------------------------------------------- entropy

def _require_positive(f):
    if np.any(f.values <= 0.0):
        raise NonpositiveDensity("entropy needs f > 0 at every node")


def entropy(f: DistributionGrid):
    _require_positive(f)
    return f.geom.integrate(f.values * np.log(f.values))


def abs_entropy(f: DistributionGrid, allow_zero=False):
    """int f |log f|; with allow_zero the convention 0 log 0 = 0 applies."""
    if not allow_zero:
        _require_positive(f)
    elif np.any(f.values < 0.0):
        raise NonpositiveDensity("negative density")
    v = f.values
    safe = np.where(v > 0.0, v, 1.0)
    return f.geom.integrate(v * np.abs(np.log(safe)))


def dissipation_sqrt_form(f: DistributionGrid, eps, sym=None):
    """2 h^6 sum_{p,q} Phi_eps [(d_p - d_q) sqrt(f f)]^2 with centred differences."""
    g = f.geom
    s = np.sqrt(f.values)
    u = g.grad(s)
    sym = coeff.detect_symmetry(f) if sym is None else sym
    flat_u = u.reshape(-1, 3)
    A, C = coeff.pair_sums(g, f.values, s.reshape(-1, 1) * flat_u, eps, False, sym)
    quad = np.einsum("ni,nij,nj->", flat_u, A, flat_u)
    cross = np.einsum("n,ni,ni->", s.ravel(), flat_u, C)
    return 4.0 * g.cell ** 2 * (quad - cross)


def entropy_and_dissipation(f: DistributionGrid, eps, form="scheme", sym=None):
    """(H, D).

    form="scheme": D = h^3 sum g.F, the exact entropy production of the
    collision term of the solver (projected kernel, log form).
    form="sqrt": the literal square-root form with the unprojected kernel.
    """
    H = entropy(f)
    if form == "scheme":
        D = coeff.landau_flux(f, eps, sym).dissipation
    elif form == "sqrt":
        D = dissipation_sqrt_form(f, eps, sym)
    else:
        raise ValueError("form must be 'scheme' or 'sqrt'")
    return H, D


def fisher_information(f: DistributionGrid, stencil="centered"):
    """h^3 sum |grad sqrt f|^2."""
    g = f.geom
    s = np.sqrt(np.maximum(f.values, 0.0))
    if stencil == "centered":
        return g.integrate(np.sum(g.grad(s) ** 2, axis=-1))
    if stencil == "staggered":
        return g.cell * sum(float(np.sum((np.diff(s, axis=k) / g.h) ** 2)) for k in range(3))
    raise ValueError("stencil must be 'centered' or 'staggered'")


# ---------------------------------------------------------------- Juttner fit

def matched_juttner(f: DistributionGrid):
    """Equilibrium c exp(-beta (u0 p0 - u.p)) with the mass, momentum and
    energy of f on the same grid."""
    g = f.geom
    M, P, E = conserved_moments(f)
    p, p0 = g.p, g.p0

    def shape(x):
        beta, u = np.exp(x[0]), x[1:]
        u0 = np.sqrt(1.0 + u @ u)
        e = -beta * (u0 * p0 - p @ u)
        return np.exp(e - e.max())

    def resid(x):
        w = shape(x)
        m = g.integrate(w)
        return np.concatenate([[g.integrate(w * p0) / m - E / M],
                               [g.integrate(w * p[..., k]) / m - P[k] / M for k in range(3)]])

    sol = optimize.root(resid, np.zeros(4), method="hybr", tol=1e-14)
    w = shape(sol.x)
    return f.with_values(w * M / g.integrate(w))


def relative_l1(f: DistributionGrid, ref: DistributionGrid):
    return float(np.sum(np.abs(f.values - ref.values)) / np.sum(np.abs(ref.values)))


# ---------------------------------------------------------------- certificate

@dataclass
class CertificateConstants:
    R_cert: float
    A_cert: float
    eps0: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    lower_bound: float
    log_lower_bound: float
    eps3_strict: float = float("nan")
    log_lower_bound_strict: float = float("nan")


def certificate_from_moments(M, E, H_bar) -> CertificateConstants:
    """Constants of the determinant lower bound from mass, energy and H_bar."""
    if not M > 0:
        raise ZeroMass("mass must be positive")
    ratio = E / M
    R = max(1.0, np.sqrt(max(16.0 * ratio ** 2 - 1.0, 0.0)))
    sq = R / np.sqrt(1.0 + R * R)
    e0 = 0.25 * (1.0 - sq)
    e1 = 0.25 * (np.sqrt((1.0 + 4 * R * R) / (3.0 + 4 * R * R)) - sq)
    e2 = (1.0 - np.sqrt((1.0 + 4 * R * R) / (2.0 + 4 * R * R))) / np.sqrt(2.0)
    A = np.exp(4.0 * H_bar / M)
    base = max(1.0, np.sqrt(max(ratio ** 2 - 1.0, 0.0)))
    log_e3 = -np.log(4240.0) - 6.0 * np.log(base) - 4.0 * H_bar / M + np.log(M)
    e3 = np.exp(log_e3)
    # the condition 1060 eps R^6 A <= M/4 written with the R above
    log_e3s = -np.log(4240.0) - 6.0 * np.log(R) - 4.0 * H_bar / M + np.log(M)

    def log_bound(le3):
        le4 = min(np.log(0.5), np.log(e0), np.log(e1), np.log(e2), le3)
        # inf over B(0,R) of phi(|q|^2/2) = exp(-R^2/2)
        return 6.0 * le4 + 3.0 * np.log(M / 4.0) - 1.5 * R * R

    lb = log_bound(log_e3)
    e4 = min(0.5, e0, e1, e2, e3)
    return CertificateConstants(R, A, e0, e1, e2, e3, e4, float(np.exp(lb)), float(lb),
                                float(np.exp(log_e3s)), float(log_bound(log_e3s)))


def certificate_constants(f: DistributionGrid, H_bar=None) -> CertificateConstants:
    M, _, E = conserved_moments(f)
    if not M > 0:
        raise ZeroMass("mass must be positive")
    if H_bar is None:
        H_bar = abs_entropy(f, allow_zero=True)
    return certificate_from_moments(M, E, H_bar)


def gram_matrix(f: DistributionGrid, i, j, phi=phi_weight):
    if i == j:
        raise ValueError("axes must differ")
    g = f.geom
    w = phi(0.5 * np.sum(g.p ** 2, axis=-1)) * f.values
    vi, vj = g.p[..., i] / g.p0, g.p[..., j] / g.p0
    basis = [np.ones_like(vi), vi, vj]
    return np.array([[g.integrate(w * a * b) for b in basis] for a in basis])


def delta_phi(f: DistributionGrid, i, j, phi=phi_weight):
    """Determinant of the phi-weighted Gram matrix of {1, q_i/q0, q_j/q0}."""
    return float(np.linalg.det(gram_matrix(f, i, j, phi)))


# ---------------------------------------------------------------- audits

def _chain_pieces(f: DistributionGrid):
    g = f.geom
    q = g.p
    q0 = g.p0
    qn = np.sqrt(np.sum(q ** 2, axis=-1))
    w = phi_weight(0.5 * qn ** 2)
    M0 = g.integrate(f.values)
    m0 = g.integrate(w * f.values)
    # |phi'| = phi for phi = exp(-r); its argument's gradient is q
    X = g.integrate(f.values * w * qn)
    # A^{-1} <= 4 q0 (q0 + |q|) pointwise in p
    S = g.integrate(f.values * w ** 2 * 4.0 * q0 * (q0 + qn))
    deltas = []
    for i in range(3):
        deltas.append(max(delta_phi(f, i, j) for j in range(3) if j != i))
    return M0, m0, X, S, np.array(deltas)


@dataclass
class EntropyAudit:
    fisher: float
    dissipation: float
    C1: float
    C2: float
    margin: float
    passed: bool
    deltas: np.ndarray = field(repr=False)
    log10_C1_certificate: float = float("nan")
    log10_C2_certificate: float = float("nan")
    eps4: float = float("nan")


def check_entropy_theorem(f: DistributionGrid, eps, dissipation=None, sym=None) -> EntropyAudit:
    """Fisher <= C1 + C2 D with the constants of the Cramer-rule chain.

    Per axis i (with the best partner j):
      int f |d_i f / f|^2 <= 4 Delta^-2 m0^4 {M0 [54 X^2 + 192 m0^2] + 108 D S}
    and Fisher = 1/4 of the sum over i.  The certificate variant replaces
    Delta by its certified lower bound.
    """
    fisher = fisher_information(f)
    if dissipation is None:
        _, dissipation = entropy_and_dissipation(f, eps, sym=sym)
    M0, m0, X, S, deltas = _chain_pieces(f)
    inv2 = float(np.sum(deltas ** -2.0))
    C1 = M0 * m0 ** 4 * (54.0 * X ** 2 + 192.0 * m0 ** 2) * inv2
    C2 = 108.0 * m0 ** 4 * S * inv2
    bound = C1 + C2 * max(dissipation, 0.0)
    cert = certificate_constants(f)
    log10_inv2 = np.log10(3.0) - 2.0 * cert.log_lower_bound / np.log(10.0)
    lc1 = np.log10(M0 * m0 ** 4 * (54.0 * X ** 2 + 192.0 * m0 ** 2)) + log10_inv2
    lc2 = np.log10(108.0 * m0 ** 4 * S) + log10_inv2
    return EntropyAudit(fisher, dissipation, C1, C2, (bound - fisher) / bound,
                        bool(fisher <= bound), deltas, float(lc1), float(lc2), cert.eps4)


def a_sandwich_constants(f: DistributionGrid):
    """(C_lower, C_upper(p)) with C_lower |xi|^2 <= xi.a.xi <= C_upper(p) p0 |xi|^2.

    Lower: |xi|^2 <= 36 m0^4 S sum_i Delta_i^-2 xi.a.xi (Cramer chain).
    Upper: Lambda lambda3 <= K (p0/q0 + q0/p0 + sqrt(p0 q0)/|p-q|), summed
    off the diagonal exactly on the grid, plus the largest eigenvalue of the
    singular cell term.
    """
    g = f.geom
    _, m0, _, S, deltas = _chain_pieces(f)
    c_low = 1.0 / (36.0 * m0 ** 4 * S * float(np.sum(deltas ** -2.0)))
    v = f.values.ravel()
    P0 = g.flat_p0
    # sum_{q != p} sqrt(q0) f(q) / |p - q| by direct summation
    w = np.sqrt(P0) * v
    sing = _coulomb_sum(g, w)
    up = kernel.LAMBDA3_BOUND_C * (P0 * g.integrate(v / P0) + g.integrate(v * P0)
                            + np.sqrt(P0) * g.cell * sing)
    cell, _ = coeff.singular_cell(g.flat_p, g.h)
    up = up + np.linalg.eigvalsh(cell)[:, -1] * v
    return c_low, (up / P0).reshape(g.shape)


def _coulomb_sum(g, w):
    return coulomb_pair_sums(*g.soa, np.ascontiguousarray(w, dtype=float))


# ---------------------------------------------------------------- records

def sample_record(f: DistributionGrid, t, dt, dissipation, with_fit=True):
    M, P, E = conserved_moments(f)
    rec = DiagnosticsRecord(
        t=float(t), mass=M, momentum=P, energy=E,
        entropy=entropy(f), abs_entropy=abs_entropy(f),
        dissipation=float(dissipation), fisher=fisher_information(f),
        moments={k: moment_mk(f, k) for k in (0.0, 0.5, 1.0, 2.0)},
        delta_phi=delta_phi(f, 0, 1), min_f=float(f.values.min()), dt=float(dt),
        l3_norm=lp_norm(f, 3.0))
    if with_fit:
        rec.rel_l1_juttner = relative_l1(f, matched_juttner(f))
    return rec


@dataclass
class MomentReport:
    k: float
    times: np.ndarray
    moments: np.ndarray
    q_t: np.ndarray
    sup: float
    envelope: float
    exponent: float
    passed: bool


def moment_monitor(records, k=2.0) -> MomentReport:
    """sup_t M_k against the envelope M_k(0) + c1 T Q_T^gamma.

    Q_T = int_0^T ||f||_3 dt (trapezoid over the samples).  gamma follows the
    interpolation bookkeeping (1 + 8(k-1)/11)/2, and c1 is fitted on the
    first half of the samples and doubled; the fit is heuristic.
    """
    if not records:
        raise ValueError("empty trajectory")
    t = np.array([r.t for r in records])
    mk = np.array([r.moments[k] if k in r.moments else np.nan for r in records])
    l3 = np.array([r.l3_norm for r in records])
    qt = np.concatenate([[0.0], np.cumsum(0.5 * (l3[1:] + l3[:-1]) * np.diff(t))])
    gamma = 0.5 * (1.0 + 8.0 * max(k - 1.0, 0.0) / 11.0)
    half = max(2, len(t) // 2)
    growth = np.maximum(mk[1:half] - mk[0], 0.0)
    scale = t[1:half] * np.maximum(qt[1:half], 1e-300) ** gamma
    c1 = 2.0 * float(np.max(growth / scale)) if len(growth) else 0.0
    T = t[-1]
    env = mk[0] + c1 * T * max(qt[-1], 0.0) ** gamma + 1e-12 * abs(mk[0])
    sup = float(np.max(mk))
    return MomentReport(k, t, mk, qt, sup, float(env), gamma, bool(sup <= env))


def record_dict(rec: DiagnosticsRecord):
    d = asdict(rec)
    d["momentum"] = list(map(float, rec.momentum))
    return d
