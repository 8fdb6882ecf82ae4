import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from rlandau import coeff, kernel, solver
from rlandau.coeff import DistributionGrid
from rlandau.errors import EmptyDistribution


def gaussian(radius=4.0, n=9, center=(0.3, -0.2, 0.1)):
    c = np.asarray(center)
    return DistributionGrid.from_function(radius, n, lambda p: np.exp(-np.sum((p - c) ** 2, -1)))


# ---------------------------------------------------------------- grid

def test_grid_geometry():
    g = coeff.geometry(4.0, 9)
    assert g.h == pytest.approx(1.0)
    assert g.cell == pytest.approx(1.0)
    np.testing.assert_allclose(g.p[4, 4, 4], 0.0)
    np.testing.assert_allclose(g.p[-1, 0, 4], [4.0, -4.0, 0.0])


def test_grid_shape_validation():
    with pytest.raises(ValueError):
        DistributionGrid(4.0, 9, np.zeros((9, 9, 8)))


def test_spike_mass():
    f = DistributionGrid.spike(4.0, 9, (2, 3, 4), mass=2.5)
    assert f.mass() == pytest.approx(2.5)


def test_gradient_exact_on_linear():
    g = coeff.geometry(3.0, 7)
    u = 2.0 * g.p[..., 0] - g.p[..., 2] + 1.0
    np.testing.assert_allclose(g.grad(u), np.broadcast_to([2.0, 0.0, -1.0], g.shape + (3,)),
                               atol=1e-13)


def test_gradient_transpose_is_adjoint():
    rng = np.random.default_rng(3)
    g = coeff.geometry(3.0, 7)
    u = rng.normal(size=g.shape)
    F = rng.normal(size=g.shape + (3,))
    assert np.sum(g.grad(u) * F) == pytest.approx(np.sum(u * g.grad_t(F)), rel=1e-12)


def test_laplacian_symmetric_and_conservative():
    rng = np.random.default_rng(4)
    g = coeff.geometry(3.0, 7)
    u, v = rng.normal(size=(2,) + g.shape)
    assert np.sum(v * g.laplacian(u)) == pytest.approx(np.sum(u * g.laplacian(v)), rel=1e-12)
    assert abs(np.sum(g.laplacian(u))) < 1e-10
    x = g.p[..., 0]
    # interior nodes: Laplacian of x^2 is 2
    np.testing.assert_allclose(g.laplacian(x ** 2)[1:-1, 1:-1, 1:-1], 2.0, rtol=1e-12)


# ---------------------------------------------------------------- symmetry

def test_octahedral_group():
    assert len(coeff.OCTAHEDRAL) == 48
    dets = {round(float(np.linalg.det(R))) for R in coeff.OCTAHEDRAL}
    assert dets == {-1, 1}


@pytest.mark.parametrize("make,order", [
    (lambda: solver.juttner(4.0, 9), 48),
    (lambda: solver.two_bump(4.0, 9), 16),
    (lambda: gaussian(), 1),
])
def test_detected_symmetry_order(make, order):
    assert coeff.detect_symmetry(make()).order == order


def test_reduced_sums_equal_full():
    f = solver.two_bump(4.0, 9)
    g = f.geom
    full = coeff.trivial_symmetry(9)
    sym = coeff.detect_symmetry(f)
    Z = f.values.reshape(-1, 1) * g.flat_p
    A1, C1 = coeff.pair_sums(g, f.values, Z, 1e-2, True, sym)
    A2, C2 = coeff.pair_sums(g, f.values, Z, 1e-2, True, full)
    np.testing.assert_allclose(A1, A2, rtol=1e-12, atol=1e-14 * np.abs(A2).max())
    np.testing.assert_allclose(C1, C2, rtol=1e-12, atol=1e-14 * np.abs(C2).max())


# ---------------------------------------------------------------- assemblers

def test_empty_distribution_rejected():
    f = DistributionGrid(4.0, 9, np.zeros((9, 9, 9)))
    for fn in (lambda: coeff.assemble_a(f, 1e-2), lambda: coeff.assemble_c(f),
               lambda: coeff.assemble_b_conservative(f, 1e-2),
               lambda: coeff.assemble_b_nonconservative(f)):
        with pytest.raises(EmptyDistribution):
            fn()


def test_a_of_spike_is_kernel_column():
    f = DistributionGrid.spike(4.0, 9, (2, 5, 6), mass=1.5)
    q0 = f.nodes[2, 5, 6]
    a = coeff.assemble_a(f, 1e-2)
    p = f.nodes[6, 1, 3]
    expected = 1.5 * kernel.RegularizedKernel(1e-2).phi(p, q0)
    np.testing.assert_allclose(a[6, 1, 3], expected, rtol=1e-12)


def test_a_symmetric_psd():
    a = coeff.assemble_a(gaussian(), 1e-2).reshape(-1, 3, 3)
    np.testing.assert_allclose(a, np.swapaxes(a, 1, 2), atol=1e-13)
    assert np.linalg.eigvalsh(a).min() > 0


def test_b_conservative_spike_zero_at_spike():
    f = DistributionGrid.spike(4.0, 9, (2, 5, 6))
    b = coeff.assemble_b_conservative(f, 1e-2)
    np.testing.assert_allclose(b[2, 5, 6], 0.0, atol=0)
    p, q0 = f.nodes[6, 1, 3], f.nodes[2, 5, 6]
    np.testing.assert_allclose(b[6, 1, 3], kernel.regularized_eval(
        kernel.RegularizedKernel(1e-2), p, q0).div_q_phi, rtol=1e-12)


def test_drifts_vanish_at_origin_for_even_data():
    f = solver.juttner(4.0, 9)
    np.testing.assert_allclose(coeff.assemble_b_conservative(f, 1e-2)[4, 4, 4], 0.0, atol=1e-14)
    np.testing.assert_allclose(coeff.assemble_b_nonconservative(f)[4, 4, 4], 0.0, atol=1e-14)


def test_b_nonconservative_spike():
    f = DistributionGrid.spike(4.0, 9, (2, 5, 6), mass=0.5)
    b = coeff.assemble_b_nonconservative(f)
    p, q0 = f.nodes[6, 1, 3], f.nodes[2, 5, 6]
    k = kernel.kernel_eval(p, q0)
    # the (d_p + d_q) moment of Phi against a point mass
    np.testing.assert_allclose(b[6, 1, 3], 0.5 * (k.div_p_phi + k.div_q_phi), rtol=1e-12)


def test_c_spike_off_diagonal():
    f = DistributionGrid.spike(4.0, 9, (2, 5, 6), mass=0.5)
    c = coeff.assemble_c(f)
    p, q0 = f.nodes[6, 1, 3], f.nodes[2, 5, 6]
    assert c[6, 1, 3] == pytest.approx(0.5 * kernel.kernel_eval(p, q0).double_div, rel=1e-12)


def test_c_spike_diagonal_has_kappa_and_cell():
    f = DistributionGrid.spike(4.0, 9, (4, 4, 4))
    c = coeff.assemble_c(f, cell_correction=False)
    assert c[4, 4, 4] == pytest.approx(2 ** 4.5 * np.pi * f.values[4, 4, 4], rel=1e-12)


# ---------------------------------------------------------------- singular cell

def test_cube_constant():
    val, _ = integrate.tplquad(lambda z, y, x: 1.0 / np.sqrt(x * x + y * y + z * z),
                               0, 0.5, 0, 0.5, 0, 0.5, epsabs=1e-13, epsrel=1e-12)
    assert coeff.K_CUBE == pytest.approx(8 * val, rel=1e-9)


def test_cell_at_origin():
    # Phi ~ (I - d d^T/|d|^2)/|d| near p = 0, whose cube average is (2/3) I / |d|
    mat, w = coeff.singular_cell(np.zeros(3), 0.5)
    np.testing.assert_allclose(mat, coeff.K_CUBE * 0.25 * 2 / 3 * np.eye(3), rtol=1e-13)
    assert w == pytest.approx(coeff.K_CUBE * 0.25)


def test_sphere_means_branches_join():
    # the series branch is used for a = |p|^2/p0^2 < 0.05
    r = lambda a: np.array([np.sqrt(a / (1 - a)), 0.0, 0.0])
    lo = coeff._sphere_means(r(0.05 - 1e-13))
    hi = coeff._sphere_means(r(0.05 + 1e-13))
    np.testing.assert_allclose(lo, hi, rtol=1e-11)


def test_sphere_means_against_quadrature():
    p = np.array([1.0, 0.5, -2.0])
    a = (p @ p) / (1 + p @ p)
    m = lambda u: 1 - a * u * u
    expected = [integrate.quad(lambda u: m(u) ** -0.5, 0, 1, epsrel=1e-13)[0],
                integrate.quad(lambda u: u * u * m(u) ** -1.5, 0, 1, epsrel=1e-13)[0],
                integrate.quad(lambda u: 0.5 * (1 - u * u) * m(u) ** -1.5, 0, 1, epsrel=1e-13)[0]]
    np.testing.assert_allclose(coeff._sphere_means(p), expected, rtol=1e-11)


def test_eps_zero_a_converges_under_refinement():
    """Cell-corrected eps = 0 coefficient at the origin for a Gaussian."""
    def a_origin(n):
        f = DistributionGrid.from_function(3.0, n, lambda p: np.exp(-np.sum(p ** 2, -1)))
        return coeff.assemble_a(f, 0.0)[n // 2, n // 2, n // 2, 0, 0]
    a9, a17, a33 = a_origin(9), a_origin(17), a_origin(33)
    assert abs(a33 - a17) < 0.5 * abs(a17 - a9)


# ---------------------------------------------------------------- scheme flux

def test_flux_vanishes_on_juttner():
    f = solver.juttner(4.0, 9)
    fl = coeff.landau_flux(f, 1e-2)
    A = np.abs(fl.A).max()
    assert np.abs(fl.flux).max() <= 1e-13 * A * f.values.max()
    assert abs(fl.dissipation) < 1e-14


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_collision_term_conserves_and_dissipates(seed):
    rng = np.random.default_rng(seed)
    f = DistributionGrid(3.0, 7, rng.uniform(0.1, 2.0, (7, 7, 7)))
    g = f.geom
    fl = coeff.landau_flux(f, 1e-2, coeff.trivial_symmetry(7))
    Q = -g.grad_t(fl.flux)
    scale = np.abs(Q).max() * f.values.size
    assert abs(np.sum(Q)) < 1e-13 * scale
    for k in range(3):
        assert abs(np.sum(Q * g.p[..., k])) < 1e-13 * scale * 3
    assert abs(np.sum(Q * g.p0)) < 1e-13 * scale * 3
    assert fl.dissipation >= 0
    # the dissipation is the entropy production of the collision term
    assert fl.dissipation == pytest.approx(-g.integrate(Q * np.log(f.values)), rel=1e-10)


def test_set_threads(monkeypatch):
    import numba
    n0 = numba.get_num_threads()
    try:
        assert coeff.set_threads(1) == 1
        monkeypatch.setenv("RLANDAU_THREADS", "1")
        assert coeff.set_threads() == 1
    finally:
        numba.set_num_threads(n0)
