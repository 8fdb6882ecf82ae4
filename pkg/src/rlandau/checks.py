"""Randomised identity checks on the kernel, shared by the CLI and the tests.

Relative tolerances are taken against the scale of the operands entering
each identity (e.g. max(|P|, |A|) for S = P - A), since the individual
terms are O(|p|^2 |q|^2) while the result can be much smaller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernel


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool

    def line(self):
        return "%-30s %s  max_err=%.3e  tol=%.1e" % (
            self.name, "PASS" if self.passed else "FAIL", self.value, self.tol)


def random_pairs(n, seed=0, rmax=10.0):
    """Uniform samples of (p, q, xi) with |p|, |q| <= rmax in the ball."""
    rng = np.random.default_rng(seed)

    def ball(k):
        d = rng.normal(size=(k, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return rmax * rng.random(k)[:, None] ** (1.0 / 3.0) * d
    p, q = ball(n), ball(n)
    xi = rng.normal(size=(n, 3))
    return p, q, xi


def _maxabs(m):
    return np.abs(m).max(axis=(-1, -2))


def _p_minus_a_extended(p, q):
    """P and A in extended precision.

    For nearly parallel p, q both matrices are small differences of terms of
    size |p|^2 |q|^2, so the double-precision versions carry absolute errors
    far above 1e-12 |P|.  S itself is formed from the stable rho and does not
    suffer from this, so the identity is checked against an 80-bit reference.
    """
    L = np.longdouble
    p, q = p.astype(L), q.astype(L)
    p0 = np.sqrt(1 + np.sum(p * p, 1))
    q0 = np.sqrt(1 + np.sum(q * q, 1))
    w = q0[:, None] * p - p0[:, None] * q
    eye = np.eye(3, dtype=L)
    outer = lambda a, b: a[:, :, None] * b[:, None, :]
    P = np.sum(w * w, 1)[:, None, None] * eye - outer(w, w)
    c = np.cross(p, q)
    A = (np.sum(c * c, 1)[:, None, None] * eye
         - np.sum(q * q, 1)[:, None, None] * outer(p, p)
         - np.sum(p * p, 1)[:, None, None] * outer(q, q)
         + np.sum(p * q, 1)[:, None, None] * (outer(p, q) + outer(q, p)))
    return P, A


def kernel_identity_checks(p, q, xi):
    out = []
    k = kernel.kernel_eval(p, q)
    phi_scale = _maxabs(k.phi)

    P, A = _p_minus_a_extended(p, q)
    err = _maxabs(k.s - (P - A)) / np.maximum(_maxabs(P), _maxabs(A))
    out.append(CheckResult("S = P - A", float(err.max()), 1e-12, bool(err.max() <= 1e-12)))

    w = kernel.energy(q)[:, None] * p - kernel.energy(p)[:, None] * q
    c = np.cross(p, q)
    ww = np.sum(w * w, 1)
    err = np.abs(k.tau * k.rho - (ww - np.sum(c * c, 1))) / ww
    out.append(CheckResult("tau rho = |w|^2 - |p x q|^2", float(err.max()), 1e-12,
                           bool(err.max() <= 1e-12)))

    null = q / kernel.energy(q)[:, None] - p / kernel.energy(p)[:, None]
    res = np.linalg.norm(np.einsum("nij,nj->ni", k.phi, null), axis=1)
    err = res / (phi_scale * np.linalg.norm(null, axis=1))
    out.append(CheckResult("Phi null direction", float(err.max()), 1e-10,
                           bool(err.max() <= 1e-10)))

    quad = np.einsum("ni,nij,nj->n", xi, k.phi, xi) / (phi_scale * np.sum(xi * xi, 1))
    lo = np.linalg.eigvalsh(k.phi)[:, 0] / phi_scale
    worst = float(min(quad.min(), lo.min()))
    out.append(CheckResult("Phi positive semidefinite", max(0.0, -worst), 1e-12, worst >= -1e-12))

    sym = _maxabs(k.phi - np.swapaxes(k.phi, -1, -2)) / phi_scale
    swap = kernel.kernel_eval(q, p)
    sym = np.maximum(sym, _maxabs(k.phi - swap.phi) / phi_scale)
    out.append(CheckResult("Phi symmetric, swap invariant", float(sym.max()), 1e-12,
                           bool(sym.max() <= 1e-12)))

    ep = kernel.eigen_pairs(p, q)
    s_scale = np.linalg.norm(k.s, ord=2, axis=(-2, -1))
    res = 0.0
    for v, lam in ((ep.v1, ep.lam1), (ep.v2, ep.lam2), (ep.v3, ep.lam3)):
        r = np.linalg.norm(np.einsum("nij,nj->ni", k.s, v) - lam[:, None] * v, axis=1) / s_scale
        res = max(res, float(r.max()))
    out.append(CheckResult("eigen residual", res, 1e-9, res <= 1e-9))
    V = np.stack([ep.v1, ep.v2, ep.v3], axis=-1)
    orth = _maxabs(np.einsum("nki,nkj->nij", V, V) - np.eye(3))
    out.append(CheckResult("eigenvectors orthonormal", float(orth.max()), 1e-10,
                           bool(orth.max() <= 1e-10)))
    err = np.abs(ep.lam2 - k.tau * k.rho) / ep.lam3
    out.append(CheckResult("lambda2 = tau rho", float(err.max()), 1e-12, bool(err.max() <= 1e-12)))

    lower, upper = kernel.glassey_strauss_bounds(p, q)
    viol = np.maximum((lower - k.rho) / np.maximum(k.rho, 1e-300),
                      (k.rho - upper) / np.maximum(upper, 1e-300))
    v = float(max(viol.max(), 0.0))
    out.append(CheckResult("Glassey-Strauss sandwich", v, 1e-12, v <= 1e-12))

    d, cr, eg = kernel.quadratic_form(p, q, xi, all_three=True)
    qs = s_scale * np.sum(xi * xi, 1)
    err = np.maximum(np.abs(d - cr), np.abs(d - eg)) / qs
    out.append(CheckResult("quadratic form triple", float(err.max()), 1e-10,
                           bool(err.max() <= 1e-10)))

    ratio = _maxabs(k.phi) / kernel.phi_upper_bound(p, q)
    r2 = kernel.part2_quantity(p, q) / kernel.part2_upper_bound(p, q)
    worst = float(max(ratio.max(), r2.max()))
    out.append(CheckResult("kernel upper bounds", worst, 1.0, worst <= 1.0))

    dd = float(k.double_div.min())
    out.append(CheckResult("double divergence >= 0", max(0.0, -dd), 0.0, dd >= 0.0))
    return out


def regularized_checks(p, q, xi, eps_list=(1e-1, 1e-2, 1e-3, 1e-4)):
    out = []
    exact = kernel.kernel_eval(p, q).phi
    errs = []
    worst_null = worst_psd = 0.0
    null = q / kernel.energy(q)[:, None] - p / kernel.energy(p)[:, None]
    for eps in eps_list:
        ph = kernel.RegularizedKernel(eps).phi(p, q)
        sc = _maxabs(ph)
        errs.append(float(np.abs(ph - exact).max()))
        r = np.linalg.norm(np.einsum("nij,nj->ni", ph, null), axis=1)
        worst_null = max(worst_null, float((r / (sc * np.linalg.norm(null, axis=1))).max()))
        qf = np.einsum("ni,nij,nj->n", xi, ph, xi) / (sc * np.sum(xi * xi, 1))
        worst_psd = max(worst_psd, float(max(0.0, -qf.min())))
    mono = all(b < a for a, b in zip(errs, errs[1:]))
    out.append(CheckResult("Phi_eps null direction", worst_null, 1e-10, worst_null <= 1e-10))
    out.append(CheckResult("Phi_eps positive semidefinite", worst_psd, 1e-12, worst_psd <= 1e-12))
    out.append(CheckResult("Phi_eps -> Phi monotone", errs[-1], 0.0, mono))
    return out, errs


def run_suite(seed=0, samples=100_000, chunk=25_000):
    """All randomised kernel checks; results merged over chunks."""
    merged = {}
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        p, q, xi = random_pairs(n, seed=seed + start)
        res = kernel_identity_checks(p, q, xi)
        res += regularized_checks(p, q, xi)[0]
        for r in res:
            if r.name in merged:
                old = merged[r.name]
                merged[r.name] = CheckResult(r.name, max(old.value, r.value), r.tol,
                                             old.passed and r.passed)
            else:
                merged[r.name] = r
    return list(merged.values())
