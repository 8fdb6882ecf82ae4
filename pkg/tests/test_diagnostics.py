import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rlandau import coeff, diagnostics, kernel, solver
from rlandau.coeff import DistributionGrid
from rlandau.errors import NonpositiveDensity, ZeroMass


def fisher_juttner_continuum():
    # |grad sqrt J|^2 = |p|^2/(4 p0^2) J, radial integral with the 4 pi cancelled
    val, _ = integrate.quad(lambda r: np.exp(-np.sqrt(1 + r * r)) * r ** 4 / (4 * (1 + r * r)),
                            0, np.inf, epsabs=0, epsrel=1e-12)
    return val


def test_conserved_moments_of_shifted_gaussian():
    f = solver.gaussian_bumps(6.0, 31, [[0.5, -0.25, 0.0]], 0.7)
    M, P, E = diagnostics.conserved_moments(f)
    assert M == pytest.approx(1.0, rel=1e-6)
    np.testing.assert_allclose(P, [0.5, -0.25, 0.0], atol=1e-6)


def test_entropy_matches_direct_sum():
    f = solver.juttner(4.0, 9)
    v = f.values
    assert diagnostics.entropy(f) == pytest.approx(np.sum(v * np.log(v)) * f.h ** 3, rel=1e-14)
    assert diagnostics.abs_entropy(f) == pytest.approx(-diagnostics.entropy(f), rel=1e-14)


def test_entropy_requires_positive_density():
    f = DistributionGrid.spike(4.0, 9, (4, 4, 4))
    with pytest.raises(NonpositiveDensity):
        diagnostics.entropy(f)
    with pytest.raises(NonpositiveDensity):
        diagnostics.abs_entropy(f)
    # 0 log 0 = 0
    v = f.values[4, 4, 4]
    assert diagnostics.abs_entropy(f, allow_zero=True) == pytest.approx(abs(np.log(v)))


def test_fisher_converges_to_continuum_value():
    exact = fisher_juttner_continuum()
    errs = [abs(diagnostics.fisher_information(solver.juttner(8.0, n)) - exact) for n in (21, 41, 81)]
    assert errs[2] < errs[1] < errs[0]
    # the cube |p_i| <= 8 leaves a truncation floor near 0.8 %
    assert errs[2] < 1.5e-2 * exact


def test_fisher_stencils_agree_on_smooth_data():
    f = solver.juttner(8.0, 41)
    a = diagnostics.fisher_information(f, "centered")
    b = diagnostics.fisher_information(f, "staggered")
    assert a == pytest.approx(b, rel=0.05)
    with pytest.raises(ValueError):
        diagnostics.fisher_information(f, "spectral")


def test_moment_mk():
    f = solver.juttner(4.0, 9)
    g = f.geom
    assert diagnostics.moment_mk(f, 0.5) == pytest.approx(g.integrate(f.values * g.p0))
    assert diagnostics.moment_mk(f, 1.0) == pytest.approx(g.integrate(f.values * g.p0 ** 2))
    with pytest.raises(ValueError):
        diagnostics.moment_mk(f, -1.0)


# ---------------------------------------------------------------- dissipation

def _brute_sqrt_dissipation(f, eps):
    """2 h^6 sum_{p,q} (s_q u_p - s_p u_q) . Phi_eps . (s_q u_p - s_p u_q)."""
    g = f.geom
    s = np.sqrt(f.values).ravel()
    u = g.grad(np.sqrt(f.values)).reshape(-1, 3)
    P = g.flat_p
    n = len(P)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    off = i != j
    i, j = i[off], j[off]
    phi = kernel.RegularizedKernel(eps).phi(P[i], P[j])
    v = s[j, None] * u[i] - s[i, None] * u[j]
    return 2 * g.cell ** 2 * np.einsum("ni,nij,nj->", v, phi, v)


def test_sqrt_dissipation_matches_brute_force():
    f = solver.two_bump(3.0, 5, shift=1.0, width=1.0)
    got = diagnostics.dissipation_sqrt_form(f, 1e-2, coeff.trivial_symmetry(5))
    assert got == pytest.approx(_brute_sqrt_dissipation(f, 1e-2), rel=1e-10)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_dissipation_forms_nonnegative(seed):
    rng = np.random.default_rng(seed)
    f = DistributionGrid(3.0, 5, rng.uniform(0.1, 2.0, (5, 5, 5)))
    for form in ("scheme", "sqrt"):
        _, D = diagnostics.entropy_and_dissipation(f, 1e-2, form=form)
        assert D >= -1e-14


def test_dissipation_zero_on_juttner():
    f = solver.juttner(4.0, 9)
    _, D = diagnostics.entropy_and_dissipation(f, 1e-3)
    assert abs(D) < 1e-15
    with pytest.raises(ValueError):
        diagnostics.entropy_and_dissipation(f, 1e-3, form="other")


# ---------------------------------------------------------------- Juttner fit

def test_matched_juttner_recovers_boosted_equilibrium():
    beta, u = 1.3, np.array([0.2, -0.1, 0.05])
    u0 = np.sqrt(1 + u @ u)
    f = DistributionGrid.from_function(6.0, 21, lambda p: 0.7 * np.exp(
        -beta * (u0 * np.sqrt(1 + np.sum(p ** 2, -1)) - p @ u)))
    fit = diagnostics.matched_juttner(f)
    assert diagnostics.relative_l1(f, fit) < 1e-10


# ---------------------------------------------------------------- certificate

def test_certificate_unit_limit():
    c = diagnostics.certificate_from_moments(1.0, 1.0, 0.0)
    assert c.R_cert == pytest.approx(np.sqrt(15.0), rel=1e-12)
    assert c.A_cert == 1.0
    assert c.eps4 == min(0.5, c.eps0, c.eps1, c.eps2, c.eps3)
    assert c.log_lower_bound == pytest.approx(np.log(c.lower_bound), rel=1e-12)


def test_certificate_eps_formulas():
    R = np.sqrt(15.0)
    c = diagnostics.certificate_from_moments(1.0, 1.0, 0.0)
    assert c.eps0 == pytest.approx((1 - R / np.sqrt(1 + R * R)) / 4)
    assert c.eps1 == pytest.approx((np.sqrt(61 / 63) - R / 4) / 4)
    assert c.eps2 == pytest.approx((1 - np.sqrt(61 / 62)) / np.sqrt(2))
    assert c.eps3 == pytest.approx(1 / 4240.0)
    assert c.eps3_strict == pytest.approx(1 / (4240.0 * 15 ** 3))


def test_certificate_zero_mass():
    with pytest.raises(ZeroMass):
        diagnostics.certificate_from_moments(0.0, 1.0, 0.0)
    with pytest.raises(ZeroMass):
        diagnostics.certificate_constants(DistributionGrid(4.0, 9, np.zeros((9, 9, 9))))


def test_delta_phi_matches_explicit_gram():
    f = solver.two_bump(4.0, 9)
    g = f.geom
    w = np.exp(-0.5 * np.sum(g.p ** 2, -1)) * f.values * g.cell
    b = [np.ones(g.shape), g.p[..., 0] / g.p0, g.p[..., 2] / g.p0]
    G = np.array([[np.sum(w * x * y) for y in b] for x in b])
    assert diagnostics.delta_phi(f, 0, 2) == pytest.approx(np.linalg.det(G), rel=1e-12)
    with pytest.raises(ValueError):
        diagnostics.delta_phi(f, 1, 1)


def test_delta_phi_symmetries():
    f = solver.two_bump(4.0, 9)
    assert diagnostics.delta_phi(f, 0, 1) == pytest.approx(diagnostics.delta_phi(f, 1, 0), rel=1e-12)
    # rotation by 90 degrees about x maps y to z
    rot = f.with_values(np.rot90(f.values, axes=(1, 2)))
    assert diagnostics.delta_phi(rot, 0, 1) == pytest.approx(diagnostics.delta_phi(f, 0, 2), rel=1e-12)


def test_delta_phi_of_spike_degenerate():
    f = DistributionGrid.spike(4.0, 9, (5, 4, 4))
    G = diagnostics.gram_matrix(f, 0, 1)
    assert abs(np.linalg.det(G)) <= 1e-12 * np.trace(G) ** 3


# ---------------------------------------------------------------- audits

def test_entropy_audit_on_juttner_passes():
    a = diagnostics.check_entropy_theorem(solver.juttner(4.0, 11), 1e-3)
    assert a.passed and 0 < a.margin <= 1
    assert a.fisher > 0 and a.C1 > a.fisher


def test_a_sandwich_brackets_assembled_a():
    f = solver.two_bump(4.0, 11)
    c_low, c_up = diagnostics.a_sandwich_constants(f)
    a = coeff.assemble_a(f, 0.0).reshape(-1, 3, 3)
    ev = np.linalg.eigvalsh(a)
    p0 = f.geom.flat_p0
    assert c_low > 0
    assert np.all(ev[:, 0] >= c_low)
    assert np.all(ev[:, -1] <= c_up.ravel() * p0)


# ---------------------------------------------------------------- records, CSV

def test_sample_record_and_csv_roundtrip(tmp_path):
    f = solver.juttner(4.0, 9)
    rec = diagnostics.sample_record(f, 0.5, 0.01, 0.0)
    assert rec.rel_l1_juttner < 1e-8
    path = tmp_path / "d.csv"
    diagnostics.write_csv(path, [rec, rec])
    data = diagnostics.read_csv(path)
    assert data.shape == (2, len(diagnostics.CSV_COLUMNS))
    assert data[0, diagnostics.CSV_COLUMNS.index("entropy")] == rec.entropy
    d = diagnostics.record_dict(rec)
    assert d["momentum"] == list(map(float, rec.momentum))


def test_read_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        diagnostics.read_csv(path)


def _rec(t, m2, l3):
    return diagnostics.DiagnosticsRecord(t, 1.0, np.zeros(3), 1.0, 0.0, 0.0, 0.0, 0.0,
                                         {0.0: 1.0, 0.5: 1.0, 1.0: 1.0, 2.0: m2}, 0.0, 0.0, 0.0, l3)


def test_moment_monitor_envelope():
    recs = [_rec(t, 1.0 + 0.1 * t, 1.0) for t in np.linspace(0, 1, 11)]
    rep = diagnostics.moment_monitor(recs, k=2.0)
    assert rep.exponent == pytest.approx(0.5 * (1 + 8 / 11))
    assert rep.passed and rep.sup == pytest.approx(1.1)
    # growth that accelerates late escapes an envelope fitted early
    recs = [_rec(t, 1.0 + 0.01 * t + (5.0 if t > 0.9 else 0.0), 1.0) for t in np.linspace(0, 1, 11)]
    assert not diagnostics.moment_monitor(recs).passed
    with pytest.raises(ValueError):
        diagnostics.moment_monitor([])
