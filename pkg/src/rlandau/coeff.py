"""Momentum grids and quadrature assembly of the collision coefficients.

The grid is a uniform cube [-R, R]^3 with an odd number of nodes per axis so
the origin is a node.  Sums over source nodes are O(N^2); when the density is
invariant under a subgroup of the 48 signed axis permutations the sums are
only evaluated on one node per orbit and mapped to the rest.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernel
from ._pairs import phi_pair_sums, scalar_pair_sums, unpack_sym
from .errors import EmptyDistribution

# integral of 1/|x| over the unit cube centred at the origin
K_CUBE = 3.0 * np.log(2.0 + np.sqrt(3.0)) - np.pi / 2.0


def set_threads(n=None):
    """Cap compiled worker threads (defaults to $RLANDAU_THREADS if set)."""
    import numba
    if n is None:
        env = os.environ.get("RLANDAU_THREADS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


# ---------------------------------------------------------------- geometry

class Geometry:
    """Node coordinates and difference operators for (radius, n) grids."""

    def __init__(self, radius, n):
        if n < 3 or n % 2 == 0:
            raise ValueError("n_per_axis must be odd and >= 3")
        self.radius = float(radius)
        self.n = int(n)
        self.h = 2.0 * self.radius / (self.n - 1)
        self.axis = np.linspace(-self.radius, self.radius, self.n)
        g = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        self.p = np.stack(g, axis=-1)                      # (n, n, n, 3)
        self.p0 = np.sqrt(1.0 + np.sum(self.p ** 2, axis=-1))
        self.flat_p = np.ascontiguousarray(self.p.reshape(-1, 3))
        self.soa = tuple(np.ascontiguousarray(self.flat_p[:, k]) for k in range(3))
        self.flat_p0 = np.ascontiguousarray(self.p0.ravel())
        # discrete velocity D p0; D is exact on affine functions
        self.v = self.grad(self.p0)
        self.v_soa = tuple(np.ascontiguousarray(self.v[..., k].ravel()) for k in range(3))
        self.cell = self.h ** 3

    @property
    def shape(self):
        return (self.n,) * 3

    def grad(self, u):
        """Centred differences, first-order one-sided at the faces of the box."""
        return np.stack(np.gradient(u, self.h, edge_order=1), axis=-1)

    def grad_t(self, F):
        """Transpose of grad: sum_k D_k^T F[..., k]."""
        out = np.zeros(self.shape)
        h = self.h
        for k in range(3):
            Fk = np.moveaxis(F[..., k], k, 0)
            o = np.moveaxis(out, k, 0)
            o[2:] += Fk[1:-1] / (2 * h)
            o[:-2] -= Fk[1:-1] / (2 * h)
            o[1] += Fk[0] / h
            o[0] -= Fk[0] / h
            o[-1] += Fk[-1] / h
            o[-2] -= Fk[-1] / h
        return out

    def laplacian(self, u):
        """Compact 7-point Laplacian with zero flux through the box faces."""
        out = np.zeros(self.shape)
        for k in range(3):
            flux = np.diff(u, axis=k) / self.h
            pad = [(0, 0)] * 3
            pad[k] = (1, 1)
            out += np.diff(np.pad(flux, pad), axis=k) / self.h
        return out

    def integrate(self, u):
        return self.cell * float(np.sum(u))


@lru_cache(maxsize=8)
def geometry(radius, n):
    return Geometry(radius, n)


@dataclass
class DistributionGrid:
    radius: float
    n_per_axis: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n_per_axis,) * 3:
            raise ValueError("values must have shape (n, n, n)")

    @property
    def geom(self) -> Geometry:
        return geometry(float(self.radius), int(self.n_per_axis))

    @property
    def h(self):
        return self.geom.h

    @property
    def nodes(self):
        return self.geom.p

    def mass(self):
        return self.geom.integrate(self.values)

    def with_values(self, values):
        return DistributionGrid(self.radius, self.n_per_axis, values)

    @classmethod
    def from_function(cls, radius, n, func):
        g = geometry(float(radius), int(n))
        return cls(radius, n, func(g.p))

    @classmethod
    def spike(cls, radius, n, index, mass=1.0):
        g = geometry(float(radius), int(n))
        v = np.zeros(g.shape)
        v[tuple(index)] = mass / g.cell
        return cls(radius, n, v)


# ---------------------------------------------------------------- symmetry

def _signed_permutations():
    ops = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            R = np.zeros((3, 3))
            for k in range(3):
                R[k, perm[k]] = signs[k]
            ops.append(R)
    return ops


OCTAHEDRAL = _signed_permutations()


def _apply(values, R):
    """(f o R^{-1})(x) = f(R^T x) on the node array."""
    perm = [int(np.nonzero(R[k])[0][0]) for k in range(3)]
    signs = [R[k, perm[k]] for k in range(3)]
    # new[o] = old[R^T o]; (R^T o)[perm[k]] = signs[k] o[k]
    inv = np.argsort(perm)
    out = np.transpose(values, inv)
    for k in range(3):
        if signs[k] < 0:
            out = np.flip(out, axis=k)
    return out


@dataclass
class Symmetry:
    ops: list
    reps: np.ndarray          # flat indices of orbit representatives
    rep_of: np.ndarray        # flat index -> position in reps
    op_of: np.ndarray         # flat index -> op with node = R rep

    @property
    def order(self):
        return len(self.ops)

    def expand_matrix(self, Ar):
        R = np.stack(self.ops)[self.op_of]
        return np.einsum("nij,njk,nlk->nil", R, Ar[self.rep_of], R)

    def expand_vector(self, Cr):
        R = np.stack(self.ops)[self.op_of]
        return np.einsum("nij,nj->ni", R, Cr[self.rep_of])

    def expand_scalar(self, sr):
        return sr[self.rep_of]

    def symmetrize(self, values):
        return sum(_apply(values, R) for R in self.ops) / len(self.ops)


def _is_group(ops):
    keys = {tuple(R.ravel()) for R in ops}
    return all(tuple((A @ B).ravel()) in keys for A in ops for B in ops)


@lru_cache(maxsize=32)
def _orbits(n, key):
    ops = [np.array(k).reshape(3, 3) for k in key]
    c = (n - 1) // 2
    idx = np.indices((n,) * 3).reshape(3, -1).T - c      # offsets
    flat = lambda o: ((o[:, 0] + c) * n + o[:, 1] + c) * n + o[:, 2] + c
    images = np.stack([flat(idx @ R.T) for R in ops])      # (G, N): R o
    # orbit representative: smallest image of R^{-1} o, i.e. min over ops
    rep = images.min(axis=0)
    reps = np.unique(rep)
    pos = np.searchsorted(reps, rep)
    # op with node = R rep: find R such that R rep == node
    rep_off = idx[rep]
    op_of = np.empty(len(rep), dtype=np.int64)
    node = np.arange(len(rep))
    found = np.zeros(len(rep), bool)
    for g, R in enumerate(ops):
        hit = (flat(rep_off @ R.T) == node) & ~found
        op_of[hit] = g
        found |= hit
    assert found.all()
    return reps.astype(np.int64), pos, op_of


def detect_symmetry(grid: DistributionGrid, rtol=1e-12) -> Symmetry:
    """Largest subgroup of signed axis permutations leaving f invariant."""
    v = grid.values
    scale = max(float(np.max(np.abs(v))), 1e-300)
    ops = [R for R in OCTAHEDRAL if np.max(np.abs(_apply(v, R) - v)) <= rtol * scale]
    if not _is_group(ops):
        ops = [np.eye(3)]
    return make_symmetry(grid.n_per_axis, ops)


def make_symmetry(n, ops):
    key = tuple(tuple(R.ravel().astype(int)) for R in ops)
    reps, pos, op_of = _orbits(int(n), key)
    return Symmetry([np.array(k, float).reshape(3, 3) for k in key], reps, pos, op_of)


def trivial_symmetry(n):
    return make_symmetry(n, [np.eye(3)])


# ---------------------------------------------------------------- pair sums

def pair_sums(geom: Geometry, m, Z, eps, project, sym: Symmetry):
    """A(p) = sum_{q != p} K m(q), C(p) = sum_{q != p} K z(q) on all nodes.

    Returns A of shape (N, 3, 3) and C of shape (N, 3) (no h^3 factor).
    """
    m = np.ascontiguousarray(np.ravel(m), dtype=float)
    Z = np.asarray(Z, dtype=float).reshape(-1, 3)
    zs = tuple(np.ascontiguousarray(Z[:, k]) for k in range(3))
    t = sym.reps
    A = np.empty((len(t), 6))
    C = np.empty((len(t), 3))
    phi_pair_sums(*geom.soa, geom.flat_p0, *geom.v_soa, m, *zs,
                  float(eps) ** 2, t, bool(project), A, C)
    return sym.expand_matrix(unpack_sym(A)), sym.expand_vector(C)


def scalar_sums(geom: Geometry, m, eps, kind, sym: Symmetry):
    m = np.ascontiguousarray(np.ravel(m), dtype=float)
    out = np.zeros((len(sym.reps), 3))
    scalar_pair_sums(*geom.soa, geom.flat_p0, m, float(eps) ** 2, sym.reps, kind, out)
    if kind == 0:
        return sym.expand_scalar(out[:, 0])
    return sym.expand_vector(out)


# ---------------------------------------------------------------- local cell

def _series_ratio(a, coef, k=12):
    ks = np.arange(k)
    return np.sum(np.power.outer(a, ks) * coef(ks), axis=-1)


def _sphere_means(p):
    """Sphere averages of m^{-1/2}, u^2 m^{-3/2}, (1-u^2) m^{-3/2}/2 with
    m = 1 - a u^2, a = |p|^2/p0^2 and u the cosine to p."""
    pp = np.sum(p ** 2, axis=-1)
    p0 = np.sqrt(1.0 + pp)
    a = pp / (1.0 + pp)
    small = a < 0.05
    s = np.sqrt(np.where(small, 0.5, a))
    from scipy.special import binom
    c = lambda k: binom(2 * k, k) / 4.0 ** k
    m_half = np.where(small, _series_ratio(a, lambda k: c(k) / (2 * k + 1)),
                      np.arcsin(s) / s)
    par = np.where(small,
                   _series_ratio(a, lambda k: c(k + 1) * (2 * k + 2) / (2 * k + 3)),
                   (p0 - np.arcsin(s) / s) / np.where(small, 1.0, a))
    perp = 0.5 * (p0 - par)
    return m_half, par, perp


def singular_cell(p, h):
    """Integral over the h-cube centred at p of the leading 1/|q-p| parts.

    Returns (matrix for Phi, scalar factor) where the scalar is the cell
    integral of 1/(p0^2 sqrt(m) |delta|), the common leading singularity of
    (rho+1)/(p0 q0 sqrt(tau rho)) and 2 Lambda rho.  Directional factors are
    replaced by their sphere averages.
    """
    p = np.asarray(p, float)
    pp = np.sum(p ** 2, axis=-1)
    p0sq = 1.0 + pp
    m_half, par, perp = _sphere_means(p)
    n = np.sqrt(pp)
    hat = np.where(n[..., None] > 0, p / np.where(n > 0, n, 1.0)[..., None], 0.0)
    hh = hat[..., :, None] * hat[..., None, :]
    eye = np.broadcast_to(np.eye(3), hh.shape)
    pp_outer = p[..., :, None] * p[..., None, :]
    mean = (m_half[..., None, None] * (eye + pp_outer)
            - par[..., None, None] * hh - perp[..., None, None] * (eye - hh))
    w = K_CUBE * h ** 2 / p0sq
    return w[..., None, None] * mean, w * m_half


# ---------------------------------------------------------------- assemblers

def _check_mass(f: DistributionGrid):
    if not np.any(f.values != 0.0):
        raise EmptyDistribution("distribution has zero mass")


def _symmetry_for(f, sym):
    return detect_symmetry(f) if sym is None else sym


def assemble_a(f: DistributionGrid, eps, sym=None):
    """a_eps(p) = h^3 sum_q Phi_eps(p, q) f(q), shape (n, n, n, 3, 3).

    eps > 0: midpoint rule including the diagonal term, whose kernel value is
    the direction-averaged limit.  eps = 0: diagonal excluded and replaced by
    the singular cell integral.
    """
    _check_mass(f)
    g = f.geom
    sym = _symmetry_for(f, sym)
    fv = f.values.ravel()
    A, _ = pair_sums(g, fv, np.zeros((fv.size, 3)), eps, False, sym)
    if eps > 0:
        rk = kernel.RegularizedKernel(eps)
        diag = kernel.regularized_eval(rk, g.flat_p, g.flat_p).phi
        A = A + diag * fv[:, None, None]
        A = g.cell * A
    else:
        cell, _ = singular_cell(g.flat_p, g.h)
        A = g.cell * A + cell * fv[:, None, None]
    return A.reshape(g.shape + (3, 3))


def assemble_b_conservative(f: DistributionGrid, eps, sym=None):
    """b_eps(p) = h^3 sum_q d_{q_j} Phi_eps^{ij}(p, q) f(q).

    The diagonal term vanishes for eps > 0.  For eps = 0 its leading
    singularity is odd in q - p, so the punctured sum needs no cell term.
    """
    _check_mass(f)
    g = f.geom
    b = scalar_sums(g, f.values, eps, 2, _symmetry_for(f, sym))
    return (g.cell * b).reshape(g.shape + (3,))


def assemble_b_nonconservative(f: DistributionGrid, sym=None, cell_correction=True):
    """b(p) = 2 h^3 sum_{q != p} Lambda rho (p + q) f(q) plus the cell term."""
    _check_mass(f)
    g = f.geom
    b = g.cell * scalar_sums(g, f.values, 0.0, 1, _symmetry_for(f, sym))
    if cell_correction:
        _, w = singular_cell(g.flat_p, g.h)
        # 2 Lambda rho ~ 1/(p0^2 sqrt(m) |delta|) and p + q -> 2 p
        b = b + (2.0 * w * f.values.ravel())[:, None] * g.flat_p
    return b.reshape(g.shape + (3,))


def assemble_c(f: DistributionGrid, sym=None, cell_correction=True):
    """c(p) = 4 h^3 sum_{q != p} (rho+1)/(p0 q0 sqrt(rho tau)) f(q) + kappa(p) f(p)."""
    _check_mass(f)
    g = f.geom
    fv = f.values.ravel()
    c = g.cell * scalar_sums(g, fv, 0.0, 0, _symmetry_for(f, sym))
    c = c + kappa_grid(g) * fv
    if cell_correction:
        _, w = singular_cell(g.flat_p, g.h)
        c = c + 4.0 * w * fv
    return c.reshape(g.shape)


@lru_cache(maxsize=8)
def _kappa_cached(radius, n):
    g = geometry(radius, n)
    # kappa depends on |p| only
    r2, inv = np.unique(np.round(np.sum(g.flat_p ** 2, axis=-1), 12), return_inverse=True)
    vals = kernel.kappa(np.stack([np.sqrt(r2), 0 * r2, 0 * r2], axis=-1))
    return np.atleast_1d(vals)[inv]


def kappa_grid(g: Geometry):
    return _kappa_cached(g.radius, g.n)


# ---------------------------------------------------------------- scheme flux

@dataclass
class LandauFlux:
    flux: np.ndarray          # (n, n, n, 3) F(p)
    A: np.ndarray             # (N, 3, 3) h^3 sum Phi_h f
    grad_log: np.ndarray      # (n, n, n, 3) D log f
    dissipation: float        # h^3 sum g . F


def landau_flux(f: DistributionGrid, eps, sym=None):
    """Entropy-form collision flux on the grid.

    F(p) = f(p) h^3 sum_q Phi_h(p, q) f(q) (g(p) - g(q)),  g = D log f,
    with Phi_h the regularised kernel projected off v_h(p) - v_h(q),
    v_h = D p0.  The collision term is -D^T F.
    """
    g = f.geom
    fv = f.values
    gl = g.grad(np.log(fv))
    sym = _symmetry_for(f, sym)
    flat_g = gl.reshape(-1, 3)
    A, C = pair_sums(g, fv, fv.reshape(-1, 1) * flat_g, eps, True, sym)
    A *= g.cell
    C *= g.cell
    F = fv.reshape(-1, 1) * (np.einsum("nij,nj->ni", A, flat_g) - C)
    F = F.reshape(g.shape + (3,))
    diss = g.cell * float(np.sum(gl * F))
    return LandauFlux(F, A, gl, diss)
