"""Symmetric cone operators ``f: Gamma -> R`` acting on eigenvalue vectors.

Three families are provided: the k-Hessian family ``f = log sigma_k`` on
the Garding cone ``Gamma_k`` (``k = n`` is Monge-Ampere), and the
(n-1)-plurisubharmonic Monge-Ampere family ``f = log sigma_n(T lam)`` on
``T^{-1}(Gamma_n)``.  All functions accept batches ``(..., n)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, DomainError

FAMILIES = ("hessian", "ma", "nm1-ma")


def sigma_all(lam, kmax=None):
    """Elementary symmetric functions ``sigma_0 .. sigma_kmax`` along the last axis.

    Uses the product recurrence over the roots of ``prod_i (1 + lam_i t)``.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    kmax = n if kmax is None else kmax
    e = np.zeros(lam.shape[:-1] + (kmax + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        li = lam[..., i:i + 1]
        e[..., 1:] = e[..., 1:] + li * e[..., :-1]
    return e


def sigma(r, lam, method="recurrence"):
    """``r``-th elementary symmetric function; ``method="enumerate"`` sums subsets."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if r == 0:
        return np.ones(lam.shape[:-1])
    if r < 0 or r > n:
        return np.zeros(lam.shape[:-1])
    if method == "enumerate":
        total = np.zeros(lam.shape[:-1])
        for idx in itertools.combinations(range(n), r):
            total = total + np.prod(lam[..., list(idx)], axis=-1)
        return total
    if method != "recurrence":
        raise ValueError(f"unknown method {method!r}")
    return sigma_all(lam, r)[..., r]


def sigma_without(r, lam, drop):
    """``sigma_r`` of ``lam`` with the entries at positions ``drop`` removed."""
    lam = np.asarray(lam, dtype=float)
    keep = [i for i in range(lam.shape[-1]) if i not in set(drop)]
    return sigma(r, lam[..., keep])


def gamma_k_contains(k, lam, margin=0.0):
    """``sigma_1, ..., sigma_k > 0`` at ``lam - margin * 1``."""
    lam = np.asarray(lam, dtype=float) - margin
    e = sigma_all(lam, k)
    return np.all(e[..., 1:k + 1] > 0.0, axis=-1)


def nm1_transform(lam):
    """``T(lam)_m = (sum_i lam_i - lam_m) / (n - 1)``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if n < 2:
        raise ValueError("the (n-1) transform needs n >= 2")
    return (lam.sum(axis=-1, keepdims=True) - lam) / (n - 1)


@dataclass(frozen=True)
class ConeOperator:
    """Membership predicate plus ``f`` and its first two derivatives.

    ``offset`` is the log of the binomial constant absorbed by the solver
    (``log C(n, k)`` for the Hessian family, zero otherwise).
    """

    family: str
    n: int
    membership: Callable
    f: Callable
    grad_f: Optional[Callable] = None
    hess_f: Optional[Callable] = None
    k: Optional[int] = None
    offset: float = 0.0
    g0_exact: Optional[Callable] = field(default=None, repr=False)

    def contains(self, lam, margin=0.0):
        return self.membership(np.asarray(lam, dtype=float) - margin)


def _log_sigma_k(n, k):
    def f(lam):
        return np.log(sigma(k, lam))

    def grad(lam):
        lam = np.asarray(lam, dtype=float)
        sk = sigma(k, lam)
        g = np.empty_like(lam)
        for i in range(n):
            g[..., i] = sigma_without(k - 1, lam, (i,))
        return g / sk[..., None]

    def hess(lam):
        lam = np.asarray(lam, dtype=float)
        sk = sigma(k, lam)
        g = grad(lam)
        Hs = np.zeros(lam.shape + (n,))
        if k >= 2:
            for i in range(n):
                for j in range(i + 1, n):
                    v = sigma_without(k - 2, lam, (i, j)) / sk
                    Hs[..., i, j] = v
                    Hs[..., j, i] = v
        return Hs - g[..., :, None] * g[..., None, :]

    return f, grad, hess


def hessian_operator(n, k):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    f, grad, hess = _log_sigma_k(n, k)
    family = "ma" if k == n else "hessian"
    g0 = None
    if k == n:
        g0 = lambda lam: np.asarray(lam, dtype=float).min(axis=-1)  # noqa: E731
    elif k == 1:
        g0 = lambda lam: np.asarray(lam, dtype=float).mean(axis=-1)  # noqa: E731
    return ConeOperator(
        family=family,
        n=n,
        k=k,
        membership=lambda lam: gamma_k_contains(k, lam),
        f=f,
        grad_f=grad,
        hess_f=hess,
        offset=math.log(math.comb(n, k)),
        g0_exact=g0,
    )


def monge_ampere_operator(n):
    return hessian_operator(n, n)


def nm1_operator(n):
    """``f = log sigma_n(T lam)`` on ``T^{-1}(Gamma_n)``; for ``n = 1`` this is plain MA."""
    if n == 1:
        base = monge_ampere_operator(1)
        return ConeOperator(
            family="nm1-ma", n=1, k=1, membership=base.membership, f=base.f,
            grad_f=base.grad_f, hess_f=base.hess_f, offset=0.0, g0_exact=base.g0_exact,
        )
    c = 1.0 / (n - 1)
    # dT_m / dlam_i = c (1 - delta_mi)
    D = c * (np.ones((n, n)) - np.eye(n))

    def f(lam):
        return np.sum(np.log(nm1_transform(lam)), axis=-1)

    def grad(lam):
        return (1.0 / nm1_transform(lam)) @ D

    def hess(lam):
        inv2 = 1.0 / nm1_transform(lam) ** 2
        return -np.einsum("...m,mi,mj->...ij", inv2, D, D)

    return ConeOperator(
        family="nm1-ma",
        n=n,
        k=n,
        membership=lambda lam: np.all(nm1_transform(lam) > 0.0, axis=-1),
        f=f,
        grad_f=grad,
        hess_f=hess,
        offset=0.0,
        g0_exact=lambda lam: nm1_transform(lam).min(axis=-1),
    )


def make_operator(family, n, k=None):
    """Build an operator from the config-level family tag."""
    if family == "hessian":
        if k is None:
            raise ValueError("family 'hessian' needs k")
        return hessian_operator(n, int(k))
    if family == "ma":
        return monge_ampere_operator(n)
    if family == "nm1-ma":
        return nm1_operator(n)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def _require_member(op, lam):
    inside = op.contains(lam)
    if not np.all(inside):
        raise DomainError(f"{np.size(inside) - np.count_nonzero(inside)} point(s) outside the {op.family} cone")


def f_eval(op, lam):
    _require_member(op, lam)
    return op.f(np.asarray(lam, dtype=float))


def f_grad(op, lam):
    _require_member(op, lam)
    return op.grad_f(np.asarray(lam, dtype=float))


def f_hess(op, lam):
    _require_member(op, lam)
    return op.hess_f(np.asarray(lam, dtype=float))


def g0(op, lam, exact=True, max_iter=200):
    """Shift ``s`` with ``lam - s 1`` on the cone boundary.

    Closed forms are used where known; otherwise vectorized bisection on the
    membership predicate, starting from ``[min lam - 1, max lam + 1]``.
    """
    lam = np.asarray(lam, dtype=float)
    if exact and op.g0_exact is not None:
        return op.g0_exact(lam)
    lo = lam.min(axis=-1) - 1.0
    hi = lam.max(axis=-1) + 1.0
    width = hi - lo
    for _ in range(max_iter):
        bad_lo = ~op.membership(lam - lo[..., None])
        bad_hi = op.membership(lam - hi[..., None])
        if not (np.any(bad_lo) or np.any(bad_hi)):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
        width = 2.0 * width
    else:
        raise ConvergenceError("could not bracket the cone boundary")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        inside = op.membership(lam - mid[..., None])
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * (1.0 + np.abs(mid))):
            return 0.5 * (lo + hi)
    raise ConvergenceError("bisection for g0 did not converge")


def is_c_subsolution_point(op, lam_B, sigma_level, T_probe=1e6):
    """Axis-direction surrogate of the C-subsolution condition at one point.

    Along every coordinate ray ``lam_B + t e_j`` the limit of ``f`` must
    exceed ``sigma_level``.  The limit is probed at ``t = T/4, T/2, T``:
    increments that do not decay geometrically (logarithmic or faster
    growth) count as an infinite limit; otherwise the geometric tail is
    added to ``f(T)`` before comparing.
    """
    lam_B = np.asarray(lam_B, dtype=float)
    _require_member(op, lam_B)
    for j in range(lam_B.size):
        e = np.zeros_like(lam_B)
        e[j] = 1.0
        vals = [float(op.f(lam_B + t * e)) for t in (T_probe / 4, T_probe / 2, T_probe)]
        d_prev, d_last = vals[1] - vals[0], vals[2] - vals[1]
        if d_last < 0.0:
            return False
        if d_last > 0.0 and d_prev > 0.0 and d_last >= 0.5 * d_prev:
            continue  # unbounded growth along this axis
        ratio = d_last / d_prev if d_prev > 0.0 else 0.0
        limit = vals[2] + (d_last * ratio / (1.0 - ratio) if 0.0 < ratio < 1.0 else 0.0)
        if not limit > sigma_level:
            return False
    return True
