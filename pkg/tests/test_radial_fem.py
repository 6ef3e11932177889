"""Radial finite elements: mesh, assembly, Jacobian consistency, postprocessing.

Oracles: the homogeneous swelling solution, the first Neumann eigenvalue of
the spherical Laplacian (tan k = k), Taylor remainders of the residual and
h-refinement of the interface traction jump.
"""
from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sl
import scipy.sparse.linalg as spl
from hypothesis import given, strategies as st

from sisei.constitutive import FOURIER, MaterialParams, OcvCurve, kernel_parameters
from sisei.errors import QuadraturePointFailure, SampleOutOfDomain
from sisei.radial_fem import (DofMap, QuadRule, RadialProblem, SeiInternalState, build_mesh,
                              lagrange_basis)

# first positive root of tan k = k: Neumann eigenfunction sin(kr)/(kr) of the unit ball
NEUMANN_K1 = 4.493409457909064
MODES = [("gsv", "elastic"), ("log", "elastic"), ("log", "plastic"), ("log", "viscoplastic")]
TAU = 1e-3


def _problem(n_p=6, n_s=3, p=4, strain="log", plastic="elastic", params=None, curve=None):
    mesh, dofmap = build_mesh(n_p, n_s, 0.1, p)
    return RadialProblem(mesh, dofmap, params or MaterialParams(), curve or OcvCurve.silicon(),
                         strain, plastic)


def _indices(prob, block):
    return np.arange(prob.size)[block]


def _random_state(prob, rng):
    dm, r = prob.dofmap, prob.mesh.nodes
    y = prob.swelling_state(rng.uniform(0.1, 0.8))
    y[dm.c] += 0.05 * rng.uniform(-1, 1, dm.n_particle_nodes)
    y[dm.mu] += 0.01 * rng.uniform(-1, 1, dm.n_particle_nodes)
    y[dm.u] += 0.01 * r * rng.uniform(-1, 1) + 1e-4 * r * rng.uniform(-1, 1, dm.n_u)
    return y


def _random_direction(prob, rng):
    dm = prob.dofmap
    v = np.zeros(prob.size)
    v[dm.c] = 0.05 * rng.uniform(-1, 1, dm.n_particle_nodes)
    v[dm.mu] = 0.05 * rng.uniform(-1, 1, dm.n_particle_nodes)
    v[dm.u] = 1e-3 * rng.uniform(-1, 1, dm.n_u) * prob.mesh.nodes
    return v


def _equilibrate(prob, y, iters=8):
    """Solve the algebraic (mu, u) rows with the concentration held fixed."""
    alg = _indices(prob, slice(prob.dofmap.mu.start, prob.size))
    for _ in range(iters):
        J = prob.jacobian(y).tocsc()[alg][:, alg]
        y[alg] -= spl.spsolve(J, prob.residual(y)[alg])
    return y


# --------------------------------------------------------- mesh and dofs
def test_build_mesh_linear_example():
    mesh, dm = build_mesh(1, 1, 0.1, 1)
    np.testing.assert_allclose(mesh.nodes, [0.0, 1.0, 1.1])
    assert mesh.connectivity.tolist() == [[0, 1], [1, 2]]
    assert mesh.tags.tolist() == [0, 1]
    assert dm.size == 3 * 2 + 1


def test_build_mesh_quartic_node_count():
    mesh, dm = build_mesh(10, 10, 0.1, 4)
    assert mesh.n_particle_nodes == 41
    assert mesh.n_sei_nodes == 41                      # counts the shared interface node
    assert mesh.nodes[40] == 1.0
    assert mesh.connectivity[10][0] == mesh.connectivity[9][-1] == 40
    assert dm.size == 3 * 41 + 40
    assert dm.u_index(40) == dm.u_index(mesh.connectivity[10][0])


def test_mesh_uniform_per_subdomain():
    mesh, _ = build_mesh(7, 3, 0.1, 4)
    np.testing.assert_allclose(np.diff(mesh.nodes[:29]), 1 / 28, rtol=1e-12)
    np.testing.assert_allclose(np.diff(mesh.nodes[28:]), 0.1 / 12, rtol=1e-10)
    assert mesh.outer_radius == pytest.approx(1.1)
    assert mesh.element_size(0) == pytest.approx(1 / 7)
    assert mesh.element_size(1) == pytest.approx(0.1 / 3)


@pytest.mark.parametrize("profile, n_p, n_s, target", [("ci", 120, 12, 1.5e3),
                                                        ("paper", 1200, 120, 15e3)])
def test_profile_dof_counts(profile, n_p, n_s, target):
    _, dm = build_mesh(n_p, n_s, 0.1, 4)
    assert abs(dm.size - target) / target < 0.02


def test_dofmap_blocks_partition():
    dm = DofMap(9, 4)
    blocks = [dm.c, dm.mu, dm.u]
    covered = np.concatenate([np.arange(dm.size)[b] for b in blocks])
    assert np.array_equal(np.sort(covered), np.arange(dm.size))
    assert np.arange(dm.size)[dm.u_particle].size == 9
    assert np.arange(dm.size)[dm.u_sei].size == 3     # interface u belongs to the particle
    assert np.array_equal(np.sort(dm.interleaved_permutation()), np.arange(dm.size))
    assert dm.differential.sum() == 9


@pytest.mark.parametrize("args", [(0, 1, 0.1, 4), (1, -1, 0.1, 4), (1, 1, 0.0, 4), (1, 1, 0.1, 0)])
def test_build_mesh_rejects(args):
    with pytest.raises(ValueError):
        build_mesh(*args)


# ------------------------------------------------- quadrature and basis
@pytest.mark.parametrize("n", [1, 3, 6])
def test_gauss_exactness(n):
    q = QuadRule.gauss_legendre(n)
    for deg in range(2 * n):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert np.dot(q.weights, q.points ** deg) == pytest.approx(exact, abs=1e-14)
    assert abs(np.dot(q.weights, q.points ** (2 * n)) - 2.0 / (2 * n + 1)) > 1e-6


@given(st.integers(1, 5), st.floats(-1.0, 1.0))
def test_lagrange_partition_of_unity(order, xi):
    N, dN = lagrange_basis(order, np.array([xi]))
    assert N.sum() == pytest.approx(1.0, abs=1e-13)
    assert dN.sum() == pytest.approx(0.0, abs=1e-11)


def test_lagrange_kronecker_property():
    nodes = np.linspace(-1, 1, 5)
    N, _ = lagrange_basis(4, nodes)
    np.testing.assert_allclose(N, np.eye(5), atol=1e-14)


# --------------------------------------------------------------- residual
@given(st.floats(0.0, 1.0))
def test_swelling_state_mechanics_residual(c):
    prob = _problem(8, 0, 4)
    f = prob.residual(prob.swelling_state(c, sei_shift=False))
    assert np.max(np.abs(f[prob.dofmap.u])) <= 1e-12


@pytest.mark.parametrize("strain, plastic", MODES)
def test_zero_state_zero_residual(strain, plastic):
    prob = _problem(strain=strain, plastic=plastic, curve=OcvCurve.linear(0.0, 1.0))
    assert np.array_equal(prob.residual(np.zeros(prob.size), TAU), np.zeros(prob.size))


def test_spherical_diffusion_eigenvalue():
    params = MaterialParams(v_pmv_cmax=1e-12)            # mechanics decoupled
    prob = _problem(8, 0, 4, params=params, curve=OcvCurve.linear(0.0, 1.0))   # mu = c
    J = prob.jacobian(prob.swelling_state(0.5, sei_shift=False)).toarray()
    c, mu = _indices(prob, prob.dofmap.c), _indices(prob, prob.dofmap.mu)
    S = J[np.ix_(c, mu)] @ np.linalg.solve(J[np.ix_(mu, mu)], J[np.ix_(mu, c)])
    M = prob.mass.toarray()[np.ix_(c, c)]
    rates = np.sort(sl.eigvals(S, M).real)              # M c' = -S c after eliminating mu
    expected = kernel_parameters(params)[FOURIER] * NEUMANN_K1 ** 2
    assert abs(rates[0]) < 1e-9 * expected              # conserved mode
    assert rates[1] == pytest.approx(expected, rel=1e-3)


def test_residual_flags_inverted_element():
    prob = _problem()
    y = prob.swelling_state(0.3)
    y[prob.dofmap.u] = -2.0 * prob.mesh.nodes
    with pytest.raises(QuadraturePointFailure) as info:
        prob.residual(y)
    assert "element" in str(info.value)


def test_residual_does_not_touch_internal_state(rng):
    prob = _problem(plastic="plastic")
    before = prob.internal.digest()
    y = _random_state(prob, rng)
    prob.residual(y, TAU)
    prob.jacobian(y, TAU)
    assert prob.internal.digest() == before


def test_problem_rejects_modes():
    mesh, dm = build_mesh(2, 1, 0.1, 2)
    for strain, plastic in [("green", "elastic"), ("log", "hardening"), ("gsv", "plastic")]:
        with pytest.raises(ValueError):
            RadialProblem(mesh, dm, MaterialParams(), OcvCurve.silicon(), strain, plastic)


# --------------------------------------------------------------- jacobian
@pytest.mark.parametrize("strain, plastic", MODES)
def test_jacobian_taylor_slope(strain, plastic):
    rng = np.random.default_rng(7)
    prob = _problem(strain=strain, plastic=plastic)
    eps = 2.0 ** -np.arange(8)
    for _ in range(5):
        y, v = _random_state(prob, rng), _random_direction(prob, rng)
        f0 = prob.residual(y, TAU)
        Jv = prob.jacobian(y, TAU) @ v
        err = [np.linalg.norm(prob.residual(y + e * v, TAU) - f0 - e * Jv) for e in eps]
        slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)
        h = 1e-6
        dd = (prob.residual(y + h * v, TAU) - prob.residual(y - h * v, TAU)) / (2 * h)
        assert np.linalg.norm(dd - Jv) <= 1e-6 * np.linalg.norm(dd)


@pytest.mark.parametrize("strain", ["gsv", "log"])
def test_mechanics_block_symmetric_at_stress_free_state(strain):
    prob = _problem(strain=strain)
    J = prob.jacobian(prob.swelling_state(0.3, sei_shift=False)).toarray()
    u = _indices(prob, prob.dofmap.u)
    u = u[u != prob.u0_dof]                              # Dirichlet row
    K = J[np.ix_(u, u)]
    assert np.max(np.abs(K - K.T)) <= 1e-6 * np.max(np.abs(K))


def test_jacobian_bandwidth():
    prob = _problem(10, 4, 4)
    perm = prob.dofmap.interleaved_permutation()
    J = prob.jacobian(prob.swelling_state(0.2)).tocsr()[perm][:, perm].tocoo()
    assert np.max(np.abs(J.row - J.col)) <= 2 * (4 + 1) * 3


# ------------------------------------------------------ postprocessing
def test_total_lithium_examples():
    prob = _problem()
    for c in (0.02, 1.0):
        assert prob.integrate_total_lithium(prob.swelling_state(c)) == pytest.approx(c, rel=1e-14)
    y = np.zeros(prob.size)
    y[prob.dofmap.c] = prob.mesh.nodes[:prob.dofmap.n_particle_nodes] ** 2
    assert prob.integrate_total_lithium(y) == pytest.approx(3 / 5, rel=1e-14)


def test_stress_free_sampling():
    prob = _problem(6, 0, 4)
    y = prob.swelling_state(0.45, sei_shift=False)
    fields = prob.sample_fields(y, np.linspace(0.0, 1.0, 37))
    assert np.max(np.abs(fields["sigma_rr"])) <= 1e-12
    assert np.max(np.abs(fields["sigma_tt"])) <= 1e-12


def test_sample_fields_domain_and_layout():
    prob = _problem()
    fields = prob.sample_fields(prob.swelling_state(0.2), [0.5, 1.05])
    assert set(fields) == {"r", "c", "mu", "u", "sigma_rr", "sigma_tt"}
    assert np.isfinite(fields["c"][0]) and np.isnan(fields["c"][1])
    for bad in ([-0.1], [1.2]):
        with pytest.raises(SampleOutOfDomain):
            prob.sample_fields(prob.swelling_state(0.2), bad)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_interface_traction_continuity_converges(p):
    jumps = []
    for n in (4, 8, 16):
        prob = _problem(n, n // 2, p)
        y = prob.swelling_state(0.2)
        y[prob.dofmap.c] = 0.1 + 0.4 * prob.mesh.nodes[:prob.dofmap.n_particle_nodes] ** 2
        y = _equilibrate(prob, y)
        inner = prob.sample_fields(y, [1.0])["sigma_rr"][0]
        outer = prob.sample_fields(y, [1.0], interface_side="sei")["sigma_rr"][0]
        jumps.append(abs(inner - outer))
    rates = np.log2(np.array(jumps[:-1]) / np.array(jumps[1:]))
    assert np.all(rates >= p - 0.1), rates


def test_center_regularity():
    prob = _problem(16, 8, 4)
    y = prob.swelling_state(0.2)
    y[prob.dofmap.c] = 0.1 + 0.4 * prob.mesh.nodes[:prob.dofmap.n_particle_nodes] ** 2
    y = _equilibrate(prob, y)
    f = prob.sample_fields(y, [0.0, 0.01, 0.02])
    assert f["sigma_rr"][0] == f["sigma_tt"][0]
    gap = np.abs(f["sigma_rr"] - f["sigma_tt"])
    assert gap[2] / gap[1] == pytest.approx(4.0, rel=0.05)   # anisotropy grows like r^2


# -------------------------------------------------------- internal state
def test_commit_elastic_leaves_state():
    prob = _problem()
    before = prob.internal.digest()
    # unstrained SEI: (0 - sqrt(2/3) sigma_Y) / sigma_Y
    assert prob.commit(prob.swelling_state(0.0), TAU) == pytest.approx(-np.sqrt(2 / 3), rel=1e-14)
    prob.commit(prob.swelling_state(0.5), TAU)                      # reported, never applied
    assert prob.internal.digest() == before


def test_commit_plastic_stays_on_yield_surface():
    prob = _problem(plastic="plastic")
    y = prob.swelling_state(0.8)                         # SEI strongly stretched
    assert prob.commit(y, TAU) <= 1e-8
    fpl = prob.internal.fpl
    np.testing.assert_allclose(fpl[..., 0] * fpl[..., 1] ** 2, 1.0, atol=1e-12)
    assert np.all(prob.internal.eps > 0.0)
    # the committed state is plastically admissible: a second commit does not flow
    eps = prob.internal.eps.copy()
    assert prob.commit(y, TAU) <= 1e-8
    np.testing.assert_allclose(prob.internal.eps, eps, rtol=1e-12)


def test_commit_without_sei():
    prob = _problem(6, 0, 4)
    assert prob.commit(prob.swelling_state(0.2), TAU) == -np.inf


def test_internal_state_digest():
    a = SeiInternalState.identity(3, 8)
    b = a.copy()
    assert a.digest() == b.digest()
    b.fpl[0, 0, 0] = 1.0 + 1e-16 * 2
    assert a.digest() != b.digest()
