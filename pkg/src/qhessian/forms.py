"""Explicit exterior algebra of (p,0)-forms on C^{2n}.

A form is a dict mapping strictly increasing index tuples (0-based
``dz`` indices) to complex coefficients.  This is deliberately naive:
it is an oracle for the eigenvalue-level shortcuts used by the solver
(wedge ratios, Hodge star, the (n-1)-power correspondence), and is only
meant for ``n <= 3``.

The canonical positive form is ``Omega_0 = sum_i dz^{2i} ^ dz^{2i+1}``
and a diagonal q-real (2,0)-form with eigenvalues ``lam`` is
``sum_i lam_i dz^{2i} ^ dz^{2i+1}``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import cones, quatlin

TOL = 1e-10


def _merge_sign(a, b):
    """Sign of the permutation sorting the concatenation ``a + b`` (disjoint)."""
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


def wedge(alpha, beta):
    out = {}
    for ia, ca in alpha.items():
        for ib, cb in beta.items():
            if set(ia) & set(ib):
                continue
            key = tuple(sorted(ia + ib))
            out[key] = out.get(key, 0.0) + _merge_sign(ia, ib) * ca * cb
    return {k: v for k, v in out.items() if v != 0}


def power(alpha, k, dim):
    out = {(): 1.0}
    for _ in range(k):
        out = wedge(out, alpha)
    return out


def add(*forms, coeffs=None):
    coeffs = coeffs or [1.0] * len(forms)
    out = {}
    for c, form in zip(coeffs, forms):
        for key, v in form.items():
            out[key] = out.get(key, 0.0) + c * v
    return {k: v for k, v in out.items() if v != 0}


def scale(alpha, c):
    return {k: c * v for k, v in alpha.items()}


def pair(i):
    return (2 * i, 2 * i + 1)


def diagonal_form(lam):
    """``sum_i lam_i dz^{2i} ^ dz^{2i+1}``."""
    return {pair(i): float(v) for i, v in enumerate(lam) if v != 0}


def omega0(n):
    return diagonal_form(np.ones(n))


def two_form_from_matrix(A):
    """``sum_{i<j} A_ij dz^i ^ dz^j`` from an antisymmetric ``2n x 2n`` table."""
    A = np.asarray(A)
    m = A.shape[0]
    return {(i, j): A[i, j] for i in range(m) for j in range(i + 1, m) if A[i, j] != 0}


def top_coefficient(alpha, dim):
    return alpha.get(tuple(range(dim)), 0.0)


def hodge_star(alpha, n):
    """Star with respect to the flat metric: ``dz^I ^ *dz^I = dz^1 ^ ... ^ dz^{2n}``.

    Conjugate-linear in the coefficients, as the defining relation
    ``alpha ^ *beta = <alpha, beta> Omega_0^n / n!`` requires.
    """
    full = tuple(range(2 * n))
    out = {}
    for idx, c in alpha.items():
        comp = tuple(i for i in full if i not in idx)
        out[comp] = out.get(comp, 0.0) + _merge_sign(idx, comp) * np.conj(c)
    return out


def diagonal_eigs(alpha, n, degree):
    """Eigenvalues of a diagonal (2,0)- or (2n-2,0)-form, with the off-diagonal residue.

    A (2n-2,0)-form is read through its pair-complements, so ``degree``
    selects which family of basis monomials counts as diagonal.
    """
    if degree == 2:
        keys = [pair(i) for i in range(n)]
    elif degree == 2 * n - 2:
        keys = [tuple(j for j in range(2 * n) if j not in pair(i)) for i in range(n)]
    else:
        raise ValueError("only (2,0) and (2n-2,0) forms have eigenvalues here")
    eigs = np.array([alpha.get(key, 0.0) for key in keys])
    rest = max((abs(v) for key, v in alpha.items() if key not in keys), default=0.0)
    return eigs, rest


def wedge_ratio(lam, k, method="sigma"):
    """``(chi^k ^ Omega_0^{n-k}) / Omega_0^n`` for ``chi`` with eigenvalues ``lam``.

    ``method="explicit"`` expands the wedge products; ``"sigma"`` uses the
    closed form ``sigma_k(lam) / C(n, k)`` and broadcasts over batches.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}")
    if method == "sigma":
        return cones.sigma(k, lam) / math.comb(n, k)
    if method != "explicit":
        raise ValueError(f"unknown method {method!r}")
    dim = 2 * n
    chi = diagonal_form(lam)
    o0 = omega0(n)
    num = top_coefficient(wedge(power(chi, k, dim), power(o0, n - k, dim)), dim)
    den = top_coefficient(power(o0, n, dim), dim)
    return float(np.real(num / den))


def hodge_star_eigs(lam):
    """Eigenvalues of ``*(Omega^{n-1}) / (n-1)!``: the complement products."""
    return quatlin.complement_products(lam)


def star_power_eigs_explicit(lam):
    """Same as :func:`hodge_star_eigs` by explicit wedge and star (oracle)."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    phi = power(diagonal_form(lam), n - 1, 2 * n)
    eigs, _ = diagonal_eigs(scale(hodge_star(phi, n), 1.0 / math.factorial(n - 1)), n, 2)
    return np.real(eigs)


def det_form(alpha, n):
    """Determinant of a diagonal (2,0)-form, or of a (2n-2,0)-form via ``det(*Phi / (n-1)!)``."""
    degree = len(next(iter(alpha))) if alpha else 2
    if degree == 2:
        eigs, _ = diagonal_eigs(alpha, n, 2)
        return float(np.real(np.prod(eigs)))
    star = scale(hodge_star(alpha, n), 1.0 / math.factorial(n - 1))
    eigs, _ = diagonal_eigs(star, n, 2)
    return float(np.real(np.prod(eigs)))


def _report(identity, n, trials, errors, failures):
    return {
        "identity": identity,
        "n": n,
        "trials": trials,
        "max_abs_error": float(max(errors, default=0.0)),
        "failures": failures,
    }


def _positive_eigs(rng, n):
    return rng.uniform(0.5, 2.0, size=n)


def verify_hodge1(n, trials, rng, tol=TOL):
    """``det(Omega^{n-1}) = det(Omega)^{n-1}`` on random positive diagonal forms."""
    errors, failures = [], []
    for _ in range(trials):
        lam = _positive_eigs(rng, n)
        lhs = det_form(power(diagonal_form(lam), n - 1, 2 * n), n)
        rhs = float(np.prod(lam)) ** (n - 1)
        err = abs(lhs - rhs)
        errors.append(err)
        if err > tol:
            failures.append({"lambda": lam.tolist(), "lhs": lhs, "rhs": rhs})
    return _report("hodge1", n, trials, errors, failures)


def verify_hodge2(n, trials, rng, tol=TOL):
    """``chi^n / Omega^n = det(chi) / det(Omega) = det(*chi) / det(*Omega)``."""
    errors, failures = [], []
    dim = 2 * n
    for _ in range(trials):
        a, b = _positive_eigs(rng, n), _positive_eigs(rng, n)
        chi, om = diagonal_form(a), diagonal_form(b)
        wedge_q = top_coefficient(power(chi, n, dim), dim) / top_coefficient(power(om, n, dim), dim)
        det_q = det_form(chi, n) / det_form(om, n)
        star_q = det_form(hodge_star(chi, n), n) / det_form(hodge_star(om, n), n)
        err = max(abs(wedge_q - det_q), abs(det_q - star_q))
        errors.append(err)
        if err > tol:
            failures.append({"chi": a.tolist(), "omega": b.tolist(), "values": [wedge_q, det_q, star_q]})
    return _report("hodge2", n, trials, errors, failures)


def hodge3_eigs_explicit(mu):
    """Eigenvalues of ``*(M ^ Omega_0^{n-2}) / (n-1)!`` for diagonal ``M`` (explicit)."""
    mu = np.asarray(mu, dtype=float)
    n = mu.size
    form = wedge(diagonal_form(mu), power(omega0(n), n - 2, 2 * n))
    eigs, rest = diagonal_eigs(scale(hodge_star(form, n), 1.0 / math.factorial(n - 1)), n, 2)
    return np.real(eigs), rest


def verify_hodge3(n, trials, rng, tol=TOL):
    """Star identity behind the (n-1) transform: explicit eigenvalues equal ``T(mu)``."""
    errors, failures = [], []
    for _ in range(trials):
        mu = rng.uniform(-2.0, 2.0, size=n)
        eigs, rest = hodge3_eigs_explicit(mu)
        expected = cones.nm1_transform(mu)
        err = max(float(np.abs(eigs - expected).max()), float(abs(rest)))
        errors.append(err)
        if err > tol:
            failures.append({"mu": mu.tolist(), "explicit": eigs.tolist(), "transform": expected.tolist()})
    return _report("hodge3", n, trials, errors, failures)


def nm1_lhs_eq1(omega1_eigs, hess_eigs):
    """``det(Omega_1 + [tr(M) - M] / (n-1))`` for simultaneously diagonal data."""
    return float(np.prod(np.asarray(omega1_eigs) + cones.nm1_transform(hess_eigs)))


def nm1_lhs_eq2(omega2_eigs, hess_eigs):
    """``det(Omega_2^{n-1} + M ^ Omega_0^{n-2})`` by explicit wedge and star."""
    n = len(omega2_eigs)
    dim = 2 * n
    phi = add(
        power(diagonal_form(omega2_eigs), n - 1, dim),
        wedge(diagonal_form(hess_eigs), power(omega0(n), n - 2, dim)),
    )
    return det_form(phi, n)


def iter_monomials(n, degree):
    return itertools.combinations(range(2 * n), degree)
