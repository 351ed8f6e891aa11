import math

import numpy as np
import pytest

from qhessian import cones, quatlin, solver, torus
from qhessian.errors import AdmissibilityError, MaxIterError, StepFailure
from qhessian.torus import HypMatrixField, ScalarField, TorusGrid


def identity_spec(grid, op, H=0.0, **kw):
    om = HypMatrixField.constant(grid, quatlin.qeye(grid.n))
    return solver.EquationSpec(grid, op, om, ScalarField(grid, H), **kw)


def manufactured(spec, phi_star, b_star=1.0):
    """Datum for which (phi_star, b_star) is an exact discrete solution."""
    lam = solver.assemble_A(spec, phi_star).lam
    return spec.with_H(spec.op.f(lam) - spec.offset - math.log(b_star))


@pytest.fixture(scope="module")
def grid2():
    return TorusGrid(2, 3, "spectral")


@pytest.fixture(scope="module")
def phi2(grid2):
    x = grid2.coordinate
    return 0.3 * np.cos(x(0, 0)) + 0.2 * np.cos(x(1, 1)) + 0.1 * np.sin(x(2, 0)) * np.cos(x(3, 1))


def operators(n):
    return [cones.hessian_operator(n, 1), cones.monge_ampere_operator(n), cones.nm1_operator(n)]


def test_assemble_identity_and_n1_example():
    g = TorusGrid(1, 8, "spectral")
    spec = identity_spec(g, cones.monge_ampere_operator(1))
    asm = solver.assemble_A(spec, None)
    assert np.allclose(asm.A.values, quatlin.qeye(1))
    c = np.cos(g.coordinate(0, 0))
    asm = solver.assemble_A(spec, c)
    assert np.allclose(asm.A.values[..., 0, 0, 0], 1.0 - c / 4.0, atol=1e-13)
    assert np.allclose(asm.lam[..., 0], 1.0 - c / 4.0, atol=1e-13)


def test_assembled_matrices_are_hyperhermitian(grid2, phi2):
    rng = np.random.default_rng(3)
    g = quatlin.random_positive_hyperhermitian(rng, 2, floor=1.0)
    spec = identity_spec(grid2, cones.monge_ampere_operator(2), g=g)
    asm = solver.assemble_A(spec, phi2)
    assert quatlin.is_hyperhermitian(asm.sym)
    # eigenvalues of g^{-1} X equal those of the symmetrized matrix
    idx = (0,) * grid2.dim
    w = np.sort(np.linalg.eigvals(quatlin.iota(asm.A.values[idx])).real)
    assert np.allclose(w[::4], np.sort(asm.lam[idx]), atol=1e-10)
    P = asm.projectors(idx)
    assert np.allclose(sum(l * p for l, p in P), asm.sym[idx], atol=1e-12)


def test_residual_trivial_cases(grid2, phi2):
    spec = identity_spec(grid2, cones.monge_ampere_operator(2))
    st = solver.make_state(spec)
    assert np.abs(st.residual.values).max() == 0.0
    doubled = solver.make_state(spec, b=2.0)
    assert np.allclose(doubled.residual.values, -math.log(2.0))
    exact = manufactured(spec, phi2)
    assert solver.make_state(exact, phi2).residual_sup <= 1e-12
    with pytest.raises(AdmissibilityError):
        solver.make_state(spec, 40.0 * phi2)


def test_inadmissible_background_rejected(grid2):
    om = HypMatrixField.constant(grid2, quatlin.qdiag(np.array([1.0, -0.5])))
    with pytest.raises(AdmissibilityError):
        solver.EquationSpec(grid2, cones.monge_ampere_operator(2), om, ScalarField(grid2, 0.0))
    # the same background is admissible for the Laplacian family
    solver.EquationSpec(grid2, cones.hessian_operator(2, 1), om, ScalarField(grid2, 0.0))


@pytest.mark.parametrize("which", [0, 1, 2])
def test_linearization_matches_finite_differences(grid2, phi2, which):
    rng = np.random.default_rng(11 + which)
    op = operators(2)[which]
    g = quatlin.random_positive_hyperhermitian(rng, 2, floor=1.0)
    om = HypMatrixField.constant(grid2, quatlin.random_positive_hyperhermitian(rng, 2, floor=1.0))
    spec = solver.EquationSpec(grid2, op, om, ScalarField(grid2, 0.0), g=g)
    st = solver.make_state(spec, phi2, b=1.3)
    eps = 1e-5
    for _ in range(20):
        psi = torus.ScalarField(grid2, sum(
            rng.standard_normal() * np.cos(grid2.coordinate(p, r) + rng.uniform(0, 6))
            for p in range(4) for r in range(2)
        ))
        L = solver.apply_linearization(spec, st, psi).values
        rp = solver.residual(spec, solver.make_state(spec, phi2 + eps * psi.values, 1.3)).values
        rm = solver.residual(spec, solver.make_state(spec, phi2 - eps * psi.values, 1.3)).values
        fd = (rp - rm) / (2 * eps)
        assert np.abs(L - fd).max() / np.abs(fd).max() < 1e-6


def test_linearization_trivial_cases(grid2, phi2):
    spec = identity_spec(grid2, cones.monge_ampere_operator(2))
    st = solver.make_state(spec)
    assert np.allclose(solver.apply_linearization(spec, st, phi2).values,
                       torus.laplacian_q(ScalarField(grid2, phi2)).values, atol=1e-13)
    st = solver.make_state(spec, phi2)
    assert np.abs(solver.apply_linearization(spec, st, np.full(grid2.shape, 2.0)).values).max() < 1e-13


def test_linearization_coefficient_positive(grid2, phi2):
    for op in operators(2):
        spec = identity_spec(grid2, op)
        coeff = solver.linearization_coefficient(spec, solver.make_state(spec, phi2))
        assert np.linalg.eigvalsh(quatlin.iota(coeff)).min() > 0


def test_newton_trivial_root(grid2):
    st = solver.newton_solve(identity_spec(grid2, cones.monge_ampere_operator(2)))
    assert st.iterations == 0 and st.b == 1.0
    assert np.all(st.phi.values == 0.0)


@pytest.mark.parametrize("which", [0, 1, 2])
def test_newton_recovers_manufactured_solution(grid2, phi2, which):
    spec = manufactured(identity_spec(grid2, operators(2)[which]), phi2, b_star=1.7)
    st = solver.newton_solve(spec)
    assert st.residual_sup <= 1e-10
    assert np.abs(st.phi.values - (phi2 - phi2.mean())).max() <= 1e-8
    assert st.b == pytest.approx(1.7, abs=1e-9)
    assert abs(st.phi.mean()) <= 1e-12
    assert solver.b_from_integral(spec, st.phi) == pytest.approx(st.b, abs=1e-8)
    assert all(row["residual_sup"] >= 0 for row in st.trace)
    assert st.margin > 0


def test_newton_with_metric(grid2, phi2):
    rng = np.random.default_rng(5)
    g = quatlin.random_positive_hyperhermitian(rng, 2, floor=1.0)
    om = HypMatrixField.constant(grid2, g)  # Omega = g keeps phi = 0 admissible
    spec = solver.EquationSpec(grid2, cones.monge_ampere_operator(2), om, ScalarField(grid2, 0.0), g=g)
    spec = manufactured(spec, phi2)
    st = solver.newton_solve(spec)
    assert np.abs(st.phi.values - (phi2 - phi2.mean())).max() <= 1e-8


@pytest.mark.parametrize("family", ["ma", "hessian", "nm1-ma"])
def test_n1_reduces_to_linear_solve(family):
    g = TorusGrid(1, 8, "spectral")
    x = g.coordinate
    H = 0.5 * np.cos(x(0, 0)) * np.sin(x(2, 0)) + 0.3 * np.cos(x(1, 0))
    om = HypMatrixField.constant(g, 2.0 * quatlin.qeye(1))
    spec = solver.EquationSpec(g, cones.make_operator(family, 1, 1), om, ScalarField(g, H))
    st = solver.newton_solve(spec)
    phi, b = solver.linear_poisson_solve(spec)
    assert st.iterations <= 2
    assert np.abs(st.phi.values - phi.values).max() <= 1e-10
    assert st.b == pytest.approx(b, rel=1e-12)


def test_uniqueness_from_two_starts(grid2, phi2):
    spec = manufactured(identity_spec(grid2, cones.monge_ampere_operator(2)), phi2)
    a = solver.newton_solve(spec)
    start = phi2 + 0.05 * np.cos(grid2.coordinate(3, 0))
    b = solver.newton_solve(spec, phi0=start, b0=0.8)
    assert np.abs(a.phi.values - b.phi.values).max() <= 1e-7
    assert a.b == pytest.approx(b.b, abs=1e-7)


def test_max_iter_error(grid2, phi2):
    spec = manufactured(identity_spec(grid2, cones.monge_ampere_operator(2), max_iter=1), phi2)
    with pytest.raises(MaxIterError):
        solver.newton_solve(spec)


def test_nm1_formulations_agree(grid2, phi2):
    rng = np.random.default_rng(8)
    omega1 = quatlin.random_positive_hyperhermitian(rng, 2, floor=1.0)
    spec = solver.nm1_spec(grid2, omega1, ScalarField(grid2, 0.0))
    st = solver.make_state(spec, phi2)
    # direct form: log det(Omega_1 + (Delta phi I - Hess phi) / (n - 1))
    Hphi = grid2.quaternionic_hessian(phi2)
    lap = torus.re_trace_product(np.broadcast_to(quatlin.qeye(2), Hphi.shape), Hphi)
    X = omega1 + lap[..., None, None, None] * quatlin.qeye(2) - Hphi
    direct = np.log(quatlin.moore_det(X))
    assert np.abs(st.residual.values - direct).max() <= 1e-10


def test_b_from_integral_properties(grid2):
    op = cones.hessian_operator(2, 1)
    om = HypMatrixField.constant(grid2, quatlin.qdiag(np.array([2.0, 1.0])))
    c = 0.4
    spec = solver.EquationSpec(grid2, op, om, ScalarField(grid2, c))
    assert solver.b_from_integral(spec) == pytest.approx(math.exp(-c) * 1.5)
    H = np.cos(grid2.coordinate(0, 0))
    b1 = solver.b_from_integral(spec.with_H(H))
    b2 = solver.b_from_integral(spec.with_H(H + math.log(2.0)))
    assert b2 == pytest.approx(b1 / 2.0)


def test_continuity_start_and_path_independence(grid2, phi2):
    spec = manufactured(identity_spec(grid2, cones.monge_ampere_operator(2)), phi2)
    one = solver.continuity_solve(spec, steps=1)
    four = solver.continuity_solve(spec, steps=4)
    assert one.path[0] == {"t": 0.0, "iterations": 0, "residual_history": [0.0], "b": 1.0}
    assert [p["t"] for p in four.path] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert np.abs(one.phi.values - four.phi.values).max() <= 1e-8
    assert one.b == pytest.approx(four.b, abs=1e-8)


def test_continuity_step_failure_carries_state(grid2, phi2):
    spec = manufactured(identity_spec(grid2, cones.monge_ampere_operator(2), max_iter=1), 3 * phi2)
    with pytest.raises(StepFailure) as info:
        solver.continuity_solve(spec, steps=1, trace=False)
    assert 0.0 < info.value.t <= 1.0
    assert info.value.last_state is not None
    assert info.value.last_state.t < info.value.t


def test_sup_zero_normalization(grid2, phi2):
    spec = manufactured(identity_spec(grid2, cones.monge_ampere_operator(2), normalization="sup-zero"), phi2)
    st = solver.continuity_solve(spec, steps=1, trace=False)
    assert st.phi.values.max() == 0.0
    assert st.shift == pytest.approx((phi2 - phi2.mean()).max(), abs=1e-8)
    assert st.b == pytest.approx(1.0, abs=1e-9)


def test_diagnostics(grid2, phi2):
    spec = identity_spec(grid2, cones.monge_ampere_operator(2))
    d = solver.diagnostics(solver.make_state(spec))
    assert d["c0"] == d["grad_sup"] == d["lap_sup"] == d["ratio"] == 0.0
    assert d["margin"] == pytest.approx(1.0)
    assert d["sum_f_lambda"] == pytest.approx(2.0)  # Euler identity for log det: sum f_i lam_i = n
    d = solver.diagnostics(solver.make_state(spec, phi2))
    assert np.isfinite(d["ratio"]) and d["ratio"] > 0
