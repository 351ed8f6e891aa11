"""Seeded property suites over the algebra, cone and exterior-form layers.

Each suite returns a report ``{suite, seed, trials, passed, properties[]}``
where every property entry carries ``name``, ``passed``, ``max_error`` and
up to a few failing instances.  Functions are looked up through their
modules at call time so that a patched implementation is what gets tested.
"""

from __future__ import annotations

import numpy as np

from . import cones, forms, quatlin

SUITES = ("algebra", "cones", "forms", "all")
MAX_DUMP = 5


def _property(name, errors, failures, tol, count=None):
    errors = [float(e) for e in errors]
    return {
        "name": name,
        "passed": not (count or failures),
        "max_error": max(errors, default=0.0),
        "tolerance": tol,
        "failures": failures[:MAX_DUMP],
        "failure_count": len(failures) if count is None else count,
    }


def _check(name, errs, tol, instance):
    """Per-trial errors to a property entry; ``instance(i)`` dumps trial ``i``."""
    errs = np.atleast_1d(np.asarray(errs, dtype=float))
    bad = np.flatnonzero(~(errs <= tol))
    return _property(name, errs, [instance(i) for i in bad[:MAX_DUMP]], tol, count=int(bad.size))


def algebra_suite(rng, trials, ns=(1, 2, 3, 4, 5), hull_ns=(1, 2, 3, 4)):
    props = []
    if trials == 0:
        return props
    for n in ns:
        A = quatlin.random_quaternion_matrix(rng, n, trials)
        B = quatlin.random_quaternion_matrix(rng, n, trials)
        hom = np.abs(quatlin.iota(quatlin.qmatmul(A, B)) - quatlin.iota(A) @ quatlin.iota(B)).max(axis=(-1, -2))
        scale = 1.0 + np.abs(A).max(axis=(-1, -2, -3)) * np.abs(B).max(axis=(-1, -2, -3))
        props.append(_check(f"iota homomorphism (n={n})", hom / scale, 1e-12,
                            lambda i: {"A": A[i].tolist(), "B": B[i].tolist()}))

        H = quatlin.random_hyperhermitian(rng, n, trials)
        w = np.linalg.eigvalsh(quatlin.iota(H))
        quads = w.reshape(trials, n, 4)
        spread = (quads[..., -1] - quads[..., 0]).max(axis=-1) / (1.0 + np.abs(w).max(axis=-1))
        props.append(_check(f"spectrum quadrupling (n={n})", spread, 1e-9,
                            lambda i: {"H": H[i].tolist(), "spectrum": w[i].tolist()}))

        lam = quads.mean(axis=-1)
        md4 = np.prod(lam, axis=-1) ** 4
        det = np.linalg.det(quatlin.iota(H))
        rel = np.abs(md4 - det) / np.maximum(np.abs(det), 1e-300)
        props.append(_check(f"Moore determinant to the fourth equals real determinant (n={n})", rel, 1e-9,
                            lambda i: {"H": H[i].tolist(), "moore4": float(md4[i]), "det": float(det[i])}))

        diag = H[..., np.arange(n), np.arange(n), 0]
        maj = np.array([0.0 if quatlin.majorizes(diag[i], lam[i]) else 1.0 for i in range(trials)])
        props.append(_check(f"Schur majorization of diagonal by spectrum (n={n})", maj, 0.5,
                            lambda i: {"diagonal": diag[i].tolist(), "spectrum": lam[i].tolist()}))

    hull_trials = min(trials, 500)
    for n in hull_ns:
        lam = rng.standard_normal((hull_trials, n))
        mismatch = []
        cases = []
        for i in range(hull_trials):
            if i % 2:
                weights = rng.dirichlet(np.ones(n), size=n)
                mu = weights @ lam[i]  # not doubly stochastic: may or may not majorize
                mu = mu - mu.mean() + lam[i].mean()
            else:
                P = sum(c * np.eye(n)[rng.permutation(n)] for c in rng.dirichlet(np.ones(3)))
                mu = P @ lam[i]
            cases.append(mu)
            agree = quatlin.majorizes(mu, lam[i], tol=1e-9) == quatlin.in_permutation_hull(mu, lam[i])
            mismatch.append(0.0 if agree else 1.0)
        props.append(_check(f"majorizes matches permutation-hull oracle (n={n})", mismatch, 0.5,
                            lambda i: {"mu": cases[i].tolist(), "lambda": lam[i].tolist()}))
    return props


def operator_list(n):
    ops = [cones.hessian_operator(n, k) for k in range(1, n + 1)]
    if n >= 2:
        ops.append(cones.nm1_operator(n))
    return ops


def interior_samples(op, rng, size):
    """Random points strictly inside the operator's cone: boundary point plus a positive vector."""
    lam = rng.standard_normal((size, op.n))
    return lam - cones.g0(op, lam)[:, None] + rng.uniform(0.05, 1.0, (size, op.n))


def _label(op):
    return f"{op.family}{'' if op.k is None or op.family != 'hessian' else f' k={op.k}'} (n={op.n})"


def cone_suite(rng, trials, ns=(1, 2, 3, 4, 5, 6), fd_step=1e-6):
    props = []
    if trials == 0:
        return props
    for n in ns:
        for op in operator_list(n):
            lam = interior_samples(op, rng, trials)
            dump = lambda i, lam=lam: {"lambda": lam[i].tolist()}  # noqa: E731
            grad = op.grad_f(lam)
            props.append(_check(f"gradient positivity {_label(op)}", np.where(grad.min(axis=-1) > 0.0, 0.0, 1.0), 0.5, dump))
            hess = op.hess_f(lam)
            top = np.linalg.eigvalsh(hess)[..., -1]
            scale = 1.0 + np.abs(hess).max(axis=(-1, -2))
            props.append(_check(f"concavity {_label(op)}", top / scale, 1e-8, dump))
            fd = np.empty_like(lam)
            for j in range(n):
                e = np.zeros(n)
                e[j] = fd_step
                fd[:, j] = (op.f(lam + e) - op.f(lam - e)) / (2 * fd_step)
            rel = np.abs(fd - grad).max(axis=-1) / np.abs(grad).max(axis=-1)
            props.append(_check(f"gradient matches finite differences {_label(op)}", rel, 1e-6, dump))
            f1 = op.f(lam)
            f3, f6 = op.f(1e3 * lam), op.f(1e6 * lam)
            c3 = np.where((f1 < f3) & (f3 < f6), 0.0, 1.0)
            props.append(_check(f"radial growth {_label(op)}", c3, 0.5, dump))
            perm = lam[:, rng.permutation(n)]
            props.append(_check(f"permutation invariance {_label(op)}", np.abs(op.f(perm) - f1), 1e-12, dump))
    return props


def forms_suite(rng, trials, ns=(2, 3)):
    props = []
    if trials == 0:
        return props
    for n in ns:
        for check in (forms.verify_hodge1, forms.verify_hodge2, forms.verify_hodge3):
            rep = check(n, trials, rng)
            props.append(_property(f"{rep['identity']} (n={n})", [rep["max_abs_error"]], rep["failures"], forms.TOL))
        errs, fails = [], []
        for _ in range(trials):
            lam = rng.uniform(-2.0, 2.0, n)
            for k in range(1, n + 1):
                e = abs(forms.wedge_ratio(lam, k, "explicit") - forms.wedge_ratio(lam, k, "sigma"))
                errs.append(e)
                if e > 1e-12:
                    fails.append({"lambda": lam.tolist(), "k": k})
        props.append(_property(f"wedge ratio equals sigma_k / C(n,k) (n={n})", errs, fails, 1e-12))
    return props


def run_suite(suite, trials, seed):
    """Run one suite (or ``all``) deterministically from ``seed``."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    rng = np.random.default_rng(seed)
    props = []
    if suite in ("algebra", "all"):
        props += algebra_suite(rng, trials)
    if suite in ("cones", "all"):
        props += cone_suite(rng, trials)
    if suite in ("forms", "all"):
        props += forms_suite(rng, trials)
    return {
        "suite": suite,
        "seed": seed,
        "trials": trials,
        "passed": all(p["passed"] for p in props),
        "properties": props,
    }
