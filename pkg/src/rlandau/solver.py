"""Time integration of the eps-regularised homogeneous Landau equation

    d_t f = Q_eps(f, f) + eps Laplace f

on a truncated cubic momentum grid.

The collision term is discretised in entropy form, -D^T F with
F(p) = f(p) h^3 sum_q Phi_h(p, q) f(q) (D log f(p) - D log f(q)), where D is
the centred difference operator and Phi_h the regularised kernel projected
off D p0(p) - D p0(q).  Because D annihilates constants, maps p_i to e_i and
p0 to the projected direction, the semi-discrete collision term conserves
mass, momentum and energy exactly, decreases the discrete entropy, and
vanishes on the sampled Juttner distribution.  The eps-Laplacian uses the
compact zero-flux stencil.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import coeff, diagnostics
from .coeff import DistributionGrid
from .errors import BlowUp, CorruptCheckpoint, DiagnosticsFailure, StepRejected

SCHEMES = ("explicit-euler", "rk2")
MAGIC = b"RLND1"
_HEADER = struct.Struct("<5sdqdd")
_TRAILER = struct.Struct("<I")

MASS_RTOL = 1e-12
ENTROPY_ATOL = 1e-8
ENERGY_RTOL = 5e-3


def juttner_mass():
    """int e^{-p0}/(4 pi) dp over R^3 = int_0^inf e^{-sqrt(1+r^2)} r^2 dr = K_2(1)."""
    return float(special.kn(2, 1.0))


def juttner(radius, n) -> DistributionGrid:
    """J(p) = exp(-p0)/(4 pi) sampled on the grid."""
    return DistributionGrid.from_function(
        radius, n, lambda p: np.exp(-np.sqrt(1.0 + np.sum(p ** 2, axis=-1))) / (4 * np.pi))


def gaussian_bumps(radius, n, centers, width=1.0, weights=None):
    centers = np.atleast_2d(np.asarray(centers, float))
    weights = np.ones(len(centers)) if weights is None else np.asarray(weights, float)

    def f(p):
        out = np.zeros(p.shape[:-1])
        for c, w in zip(centers, weights):
            out += w * np.exp(-np.sum((p - c) ** 2, axis=-1) / (2 * width ** 2))
        return out / (2 * np.pi * width ** 2) ** 1.5
    return DistributionGrid.from_function(radius, n, f)


def two_bump(radius, n, shift=1.5, width=0.8):
    return gaussian_bumps(radius, n, [[shift, 0, 0], [-shift, 0, 0]], width)


def perturbed_juttner(radius, n, amplitude=0.1, wave=(1.0, 0.5, -0.25), phase=0.3):
    J = juttner(radius, n)
    k = np.asarray(wave, float)
    return J.with_values(J.values * (1.0 + amplitude * np.cos(J.nodes @ k + phase)))


def mollify(f: DistributionGrid, floor=1e-12) -> DistributionGrid:
    """Raise f to at least floor * max(f) * J(p)/J(0)."""
    g = f.geom
    low = floor * float(np.max(f.values)) * np.exp(1.0 - g.p0)
    return f.with_values(np.maximum(f.values, low))


@dataclass
class SolverConfig:
    eps: float = 1e-3
    radius: float = 8.0
    n_per_axis: int = 41
    t_end: float = 0.5
    dt_init: float = 0.05
    dt_safety: float = 0.9
    scheme: str = "explicit-euler"
    negativity_tol: float = 0.0
    use_symmetry: bool = True
    max_rejections: int = 30

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.dt_init > 0:
            raise ValueError("dt_init must be positive")
        if not 0 < self.dt_safety < 1:
            raise ValueError("dt_safety must lie in (0, 1)")
        if self.radius < 3:
            raise ValueError("radius must be >= 3")
        if self.n_per_axis < 3 or self.n_per_axis % 2 == 0:
            raise ValueError("n_per_axis must be odd and >= 3")
        if self.scheme not in SCHEMES:
            raise ValueError("scheme must be one of %s" % (SCHEMES,))
        if self.negativity_tol < 0:
            raise ValueError("negativity_tol must be >= 0")


@dataclass
class SolverState:
    t: float
    f: DistributionGrid
    coeffs: Optional[coeff.LandauFlux] = None
    step_count: int = 0
    dt: float = float("nan")
    sym: Optional[coeff.Symmetry] = field(default=None, repr=False)


def initial_state(f0: DistributionGrid, cfg: SolverConfig, floor=1e-12) -> SolverState:
    if (f0.radius, f0.n_per_axis) != (cfg.radius, cfg.n_per_axis):
        raise ValueError("initial grid does not match the configuration")
    if np.any(f0.values < 0):
        raise ValueError("initial density must be nonnegative")
    if not f0.mass() > 0:
        raise ValueError("initial density must have positive mass")
    f = mollify(f0, floor)
    if cfg.use_symmetry:
        sym = coeff.detect_symmetry(f)
        f = f.with_values(sym.symmetrize(f.values))
    else:
        sym = coeff.trivial_symmetry(f.n_per_axis)
    return SolverState(0.0, f, None, 0, float("nan"), sym)


def rhs(f: DistributionGrid, eps, sym, flux=None):
    """(d_t f, flux) for the semi-discrete system."""
    g = f.geom
    if flux is None:
        flux = coeff.landau_flux(f, eps, sym)
    return -g.grad_t(flux.flux) + eps * g.laplacian(f.values), flux


def stable_dt(flux: coeff.LandauFlux, h, eps, safety):
    amax = float(np.max(np.abs(flux.A)))
    return safety * h * h / (2.0 * (3.0 * amax + 3.0 * eps))


def _admissible(v, tol):
    if not np.all(np.isfinite(v)):
        return False
    vmax = float(np.max(v))
    vmin = float(np.min(v))
    return vmin > -tol * vmax and (tol > 0 or vmin > 0)


def try_step(state: SolverState, cfg: SolverConfig, dt) -> SolverState:
    """One step of size dt; StepRejected if the result leaves the admissible set."""
    f = state.f
    L0, flux = rhs(f, cfg.eps, state.sym, state.coeffs)
    v1 = f.values + dt * L0
    if cfg.scheme == "rk2":
        if not _admissible(v1, 0.0):
            raise StepRejected("negative stage value")
        L1, _ = rhs(f.with_values(v1), cfg.eps, state.sym)
        v1 = 0.5 * (f.values + v1 + dt * L1)
    if cfg.use_symmetry and state.sym.order > 1:
        v1 = state.sym.symmetrize(v1)
    if not _admissible(v1, cfg.negativity_tol):
        raise StepRejected("min f below -%g max f" % cfg.negativity_tol)
    return SolverState(state.t + dt, f.with_values(v1), None, state.step_count + 1, dt, state.sym)


def ensure_flux(state: SolverState, cfg: SolverConfig) -> coeff.LandauFlux:
    if state.coeffs is None:
        state.coeffs = coeff.landau_flux(state.f, cfg.eps, state.sym)
    return state.coeffs


def step(state: SolverState, cfg: SolverConfig) -> SolverState:
    """Advance by one accepted step, halving dt on rejection."""
    flux = ensure_flux(state, cfg)
    dt = min(cfg.dt_init, stable_dt(flux, state.f.h, cfg.eps, cfg.dt_safety))
    remaining = cfg.t_end - state.t
    if remaining > 0:
        dt = min(dt, remaining)
    floor = 1e-12 * cfg.dt_init
    for _ in range(cfg.max_rejections + 1):
        if dt < floor:
            raise BlowUp("time step fell below %g" % floor)
        try:
            new = try_step(state, cfg, dt)
        except StepRejected:
            dt *= 0.5
            continue
        m0, m1 = state.f.mass(), new.f.mass()
        if abs(m1 - m0) > MASS_RTOL * abs(m0):
            raise DiagnosticsFailure("mass changed by %.3e relative" % ((m1 - m0) / m0))
        return new
    raise StepRejected("step rejected %d times" % (cfg.max_rejections + 1))


@dataclass
class Trajectory:
    records: list
    final: SolverState
    energy_identity_error: float
    discrete_energy_error: float
    mass_error: float
    entropy_increase: float


Sampler = Callable[[DistributionGrid, float, float, float], diagnostics.DiagnosticsRecord]


def run(f0: DistributionGrid, cfg: SolverConfig, hooks: Optional[Sampler] = None,
        diag_stride=1, on_sample=None, check_entropy=True) -> Trajectory:
    """Integrate to cfg.t_end, sampling diagnostics every diag_stride steps.

    Raises DiagnosticsFailure if the sampled entropy rises by more than 1e-8.
    The energy drift is compared with t eps M (continuum identity) and with
    the exact discrete drift eps int f Laplace_h p0.
    """
    if diag_stride < 1:
        raise ValueError("diag_stride must be >= 1")
    sampler = hooks or (lambda f, t, dt, d: diagnostics.sample_record(f, t, dt, d))
    state = initial_state(f0, cfg)
    g = state.f.geom
    lap_p0 = g.laplacian(g.p0)
    M0, _, E0 = diagnostics.conserved_moments(state.f)
    records = []
    predicted_discrete = 0.0
    worst_rise = 0.0

    def sample(s):
        flux = ensure_flux(s, cfg)
        rec = sampler(s.f, s.t, s.dt, flux.dissipation)
        if records and check_entropy:
            rise = rec.entropy - records[-1].entropy
            nonlocal worst_rise
            worst_rise = max(worst_rise, rise)
            if rise > ENTROPY_ATOL:
                raise DiagnosticsFailure("entropy rose by %.3e at t=%g" % (rise, s.t))
        records.append(rec)
        if on_sample is not None:
            on_sample(s, rec)

    sample(state)
    while state.t < cfg.t_end * (1 - 1e-14):
        prev = state
        state = step(state, cfg)
        if cfg.scheme == "explicit-euler":
            predicted_discrete += state.dt * cfg.eps * g.integrate(prev.f.values * lap_p0)
        else:
            mid = 0.5 * (prev.f.values + state.f.values)
            predicted_discrete += state.dt * cfg.eps * g.integrate(mid * lap_p0)
        if state.step_count % diag_stride == 0 or state.t >= cfg.t_end * (1 - 1e-14):
            sample(state)
    M1, _, E1 = diagnostics.conserved_moments(state.f)
    T = state.t
    drift = E1 - E0
    return Trajectory(
        records, state,
        energy_identity_error=abs(drift - T * cfg.eps * M0) / abs(E0),
        discrete_energy_error=abs(drift - predicted_discrete) / abs(E0),
        mass_error=abs(M1 - M0) / abs(M0),
        entropy_increase=worst_rise)


# ---------------------------------------------------------------- checkpoints

def write_checkpoint(path, f: DistributionGrid, t, eps):
    body = _HEADER.pack(MAGIC, float(f.radius), int(f.n_per_axis), float(t), float(eps))
    body += np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(body + _TRAILER.pack(zlib.crc32(body)))


def read_checkpoint(path):
    """Returns (DistributionGrid, t, eps).  CorruptCheckpoint on any mismatch."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptCheckpoint(str(exc)) from exc
    if len(data) < _HEADER.size + _TRAILER.size:
        raise CorruptCheckpoint("file too short")
    magic, radius, n, t, eps = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptCheckpoint("bad magic")
    if n < 3 or n % 2 == 0 or n > 4096:
        raise CorruptCheckpoint("bad grid size")
    body_len = _HEADER.size + 8 * n ** 3
    if len(data) != body_len + _TRAILER.size:
        raise CorruptCheckpoint("size mismatch")
    (crc,) = _TRAILER.unpack_from(data, body_len)
    if zlib.crc32(data[:body_len]) != crc:
        raise CorruptCheckpoint("checksum mismatch")
    values = np.frombuffer(data, dtype="<f8", count=n ** 3, offset=_HEADER.size)
    return DistributionGrid(radius, int(n), values.reshape((n,) * 3).astype(float)), t, eps


def with_config(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, **kw)
