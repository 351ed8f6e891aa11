import math

import numpy as np
import pytest

from qhessian import cones
from qhessian.cones import ConeOperator
from qhessian.errors import DomainError
from qhessian.verify import interior_samples, operator_list


def test_sigma_examples(rng):
    assert cones.sigma(2, [1.0, 2.0, 3.0]) == 11.0
    lam = rng.standard_normal(5)
    assert cones.sigma(5, lam) == pytest.approx(np.prod(lam), rel=1e-12)
    for r in range(7):
        assert cones.sigma(r, np.ones(6)) == pytest.approx(math.comb(6, r))


def test_sigma_recurrence_matches_enumeration(rng):
    lam = rng.standard_normal((50, 8))
    for r in range(9):
        assert np.allclose(cones.sigma(r, lam), cones.sigma(r, lam, method="enumerate"), atol=1e-12)


def test_sigma_integer_identity():
    # sigma_k(1, ..., n) are unsigned Stirling numbers of the first kind
    assert [int(cones.sigma(k, np.arange(1.0, 5.0))) for k in range(5)] == [1, 10, 35, 50, 24]


def test_gamma_k_membership():
    assert cones.gamma_k_contains(3, [1.0, 1.0, 1.0])
    assert cones.gamma_k_contains(2, [3.0, 3.0, -1.0])
    assert not cones.gamma_k_contains(3, [3.0, 3.0, -1.0])
    assert not cones.gamma_k_contains(1, [-1.0, -1.0, -1.0])


def test_nm1_transform_examples(rng):
    assert np.allclose(cones.nm1_transform([1.0, 2.0, 3.0]), [2.5, 2.0, 1.5])
    assert np.allclose(cones.nm1_transform(np.full(4, 2.5)), 2.5)
    lam = rng.standard_normal(6)
    assert cones.nm1_transform(lam).sum() == pytest.approx(lam.sum())
    with pytest.raises(ValueError):
        cones.nm1_transform([1.0])


def test_operator_values_at_symmetric_points():
    ma = cones.monge_ampere_operator(4)
    assert cones.f_eval(ma, np.ones(4)) == pytest.approx(0.0)
    assert np.allclose(cones.f_grad(ma, np.ones(4)), 1.0)
    h = cones.hessian_operator(3, 2)
    assert cones.f_eval(h, np.ones(3)) == pytest.approx(math.log(3))
    assert np.allclose(cones.f_grad(h, np.ones(3)), 2.0 / 3.0)
    assert h.offset == pytest.approx(math.log(3))


def test_domain_error_outside_cone():
    with pytest.raises(DomainError):
        cones.f_eval(cones.monge_ampere_operator(2), [1.0, -1.0])
    with pytest.raises(DomainError):
        cones.f_grad(cones.nm1_operator(3), [-5.0, 1.0, 1.0])


@pytest.mark.parametrize("n", [2, 3, 5])
def test_derivatives_match_finite_differences(rng, n):
    eps = 1e-5
    for op in operator_list(n):
        lam = interior_samples(op, rng, 20)
        grad, hess = op.grad_f(lam), op.hess_f(lam)
        for j in range(n):
            e = np.zeros(n)
            e[j] = eps
            fd_g = (op.f(lam + e) - op.f(lam - e)) / (2 * eps)
            fd_h = (op.grad_f(lam + e) - op.grad_f(lam - e)) / (2 * eps)
            assert np.all(np.abs(fd_g - grad[:, j]) <= 1e-6 * np.abs(grad).max(axis=-1))
            assert np.all(np.abs(fd_h - hess[:, :, j]).max(axis=-1) <= 1e-6 * (1 + np.abs(hess).max(axis=(-1, -2))))


@pytest.mark.parametrize("n", [1, 3, 6])
def test_monotone_and_concave(rng, n):
    for op in operator_list(n):
        lam = interior_samples(op, rng, 500)
        assert np.all(op.grad_f(lam) > 0)
        hess = op.hess_f(lam)
        top = np.linalg.eigvalsh(hess)[..., -1]
        assert np.all(top <= 1e-8 * (1 + np.abs(hess).max(axis=(-1, -2))))
        assert np.all(lam.sum(axis=-1) > 0)  # cone lies in the half-space sum > 0


def test_permutation_invariance(rng):
    for op in operator_list(4):
        lam = interior_samples(op, rng, 10)
        perm = lam[:, rng.permutation(4)]
        assert np.array_equal(np.sort(perm, axis=-1), np.sort(lam, axis=-1))
        assert np.allclose(op.f(perm), op.f(lam), rtol=0, atol=1e-13)


def test_nm1_is_ma_after_transform(rng):
    op, ma = cones.nm1_operator(4), cones.monge_ampere_operator(4)
    lam = interior_samples(op, rng, 20)
    assert np.allclose(op.f(lam), ma.f(cones.nm1_transform(lam)), atol=1e-14)


def test_radial_growth_and_boundary_blowup(rng):
    for op in operator_list(3):
        lam = interior_samples(op, rng, 20)
        f1, f3, f6 = op.f(lam), op.f(1e3 * lam), op.f(1e6 * lam)
        assert np.all((f1 < f3) & (f3 < f6))
        s = cones.g0(op, lam)
        near = lam - (s - 1e-6)[:, None]
        assert np.all(op.f(near) < -10)


def test_g0_closed_forms_and_sandwich(rng):
    ma = cones.monge_ampere_operator(3)
    assert cones.g0(ma, [3.0, 1.0, 2.0]) == 1.0
    lam = rng.standard_normal((30, 3))
    assert np.allclose(cones.g0(ma, lam, exact=False), lam.min(axis=-1), atol=1e-12)
    for op in operator_list(4):
        lam = rng.standard_normal((30, 4))
        s = cones.g0(op, lam, exact=False)
        assert not np.any(op.contains(lam - s[:, None] - 1e-9))
        assert np.all(op.contains(lam - (s - 1e-6)[:, None]))


def test_g0_gamma2_quadratic_root(rng):
    n = 3
    op = cones.hessian_operator(n, 2)
    assert cones.g0(op, np.ones(3)) == pytest.approx(1.0, abs=1e-12)  # sigma_2 = 3 (1 - s)^2
    lam = rng.standard_normal((20, n))
    s1, s2 = cones.sigma(1, lam), cones.sigma(2, lam)
    # sigma_2(lam - s 1) = C(n,2) s^2 - (n-1) sigma_1 s + sigma_2; the cone boundary is the smaller root
    a, b = math.comb(n, 2), -(n - 1) * s1
    root = (-b - np.sqrt(b * b - 4 * a * s2)) / (2 * a)
    assert np.allclose(cones.g0(op, lam), root, atol=1e-12)


def test_c_subsolution_surrogate():
    ma = cones.monge_ampere_operator(3)
    for sigma in (0.0, 10.0, 1e3):
        assert cones.is_c_subsolution_point(ma, [1.0, 2.0, 0.5], sigma)
    lin = cones.hessian_operator(3, 1)
    assert cones.is_c_subsolution_point(lin, [5.0, -1.0, -1.0], 50.0)
    bounded = ConeOperator(
        family="test-min", n=2, membership=lambda lam: np.all(np.asarray(lam) > 0, axis=-1),
        f=lambda lam: np.min(lam, axis=-1),
    )
    assert cones.is_c_subsolution_point(bounded, [1.0, 1.0], 0.5)
    assert not cones.is_c_subsolution_point(bounded, [1.0, 1.0], 100.0)
    with pytest.raises(DomainError):
        cones.is_c_subsolution_point(ma, [1.0, -1.0, 1.0], 0.0)


def test_make_operator_families():
    assert cones.make_operator("ma", 3).family == "ma"
    assert cones.make_operator("hessian", 3, 2).k == 2
    assert cones.make_operator("nm1-ma", 3).family == "nm1-ma"
    assert cones.make_operator("hessian", 3, 3).family == "ma"
    with pytest.raises(ValueError):
        cones.make_operator("hessian", 3)
    with pytest.raises(ValueError):
        cones.make_operator("mongeampere", 3)
