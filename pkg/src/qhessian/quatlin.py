"""Quaternionic and hyperhermitian matrix algebra.

Quaternionic matrices are stored as real arrays with a trailing component
axis of length 4 holding ``(w, x, y, z)`` for ``w + x i + y j + z k``.
An ``n x n`` quaternionic matrix therefore has shape ``(n, n, 4)`` and a
field of them shape ``(..., n, n, 4)``.  Every function here broadcasts
over leading axes unless stated otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import GroupingError, SingularError, SymmetryError

HERMITIAN_RTOL = 1e-10
GROUPING_RTOL = 1e-7

_CONJ_SIGN = np.array([1.0, -1.0, -1.0, -1.0])


def _mult_table():
    # (p q)_c = sum_ab p_a q_b T[a, b, c]
    table = np.zeros((4, 4, 4))
    # rows: e_a * e_b = sign * e_c
    prod = {
        (0, 0): (1, 0), (0, 1): (1, 1), (0, 2): (1, 2), (0, 3): (1, 3),
        (1, 0): (1, 1), (1, 1): (-1, 0), (1, 2): (1, 3), (1, 3): (-1, 2),
        (2, 0): (1, 2), (2, 1): (-1, 3), (2, 2): (-1, 0), (2, 3): (1, 1),
        (3, 0): (1, 3), (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (-1, 0),
    }
    for (a, b), (sign, c) in prod.items():
        table[a, b, c] = sign
    return table


MULT = _mult_table()
_MULT_TERMS = [(a, b, int(np.flatnonzero(MULT[a, b])[0])) for a in range(4) for b in range(4)]


@dataclass(frozen=True)
class Quat:
    """A single quaternion ``w + x i + y j + z k``."""

    w: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def from_array(cls, a) -> "Quat":
        w, x, y, z = (float(v) for v in a)
        return cls(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def conj(self) -> "Quat":
        return Quat(self.w, -self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def __add__(self, other):
        if not isinstance(other, Quat):
            return NotImplemented
        return Quat.from_array(self.as_array() + other.as_array())

    def __sub__(self, other):
        if not isinstance(other, Quat):
            return NotImplemented
        return Quat.from_array(self.as_array() - other.as_array())

    def __neg__(self):
        return Quat(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other):
        if isinstance(other, Quat):
            return Quat.from_array(qmul(self.as_array(), other.as_array()))
        if isinstance(other, (int, float)):
            return Quat.from_array(self.as_array() * other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return Quat.from_array(self.as_array() * other)
        return NotImplemented


ONE, I, J, K = Quat(1.0), Quat(0, 1.0), Quat(0, 0, 1.0), Quat(0, 0, 0, 1.0)


def qmul(p, q):
    """Quaternion product of component arrays ``(..., 4)``."""
    return np.einsum("...a,...b,abc->...c", p, q, MULT)


def qconj(p):
    return np.asarray(p) * _CONJ_SIGN


def qmatmul(A, B):
    """Product of quaternionic matrices ``(..., n, m, 4) @ (..., m, l, 4)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    parts = [[None] * 4 for _ in range(4)]
    for a in range(4):
        for b in range(4):
            parts[a][b] = A[..., a] @ B[..., b]
    shape = np.broadcast_shapes(A.shape[:-3], B.shape[:-3]) + (A.shape[-3], B.shape[-2], 4)
    out = np.zeros(shape)
    for a, b, c in _MULT_TERMS:
        out[..., c] += MULT[a, b, c] * parts[a][b]
    return out


def adjoint(A):
    """Quaternionic conjugate transpose ``A*``."""
    return np.swapaxes(qconj(A), -2, -3)


def qeye(n):
    out = np.zeros((n, n, 4))
    out[np.arange(n), np.arange(n), 0] = 1.0
    return out


def qdiag(values):
    """Real diagonal quaternionic matrix from a real vector (batched)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    out = np.zeros(values.shape[:-1] + (n, n, 4))
    out[..., np.arange(n), np.arange(n), 0] = values
    return out


def iota(A):
    """Real ``4n x 4n`` representation of a quaternionic matrix.

    ``A + iB + jC + kD`` maps to the block matrix
    ``[[A, B, C, D], [-B, A, -D, C], [-C, D, A, -B], [-D, -C, B, A]]``.
    """
    A = np.asarray(A, dtype=float)
    a, b, c, d = (A[..., i] for i in range(4))
    return np.concatenate(
        [
            np.concatenate([a, b, c, d], axis=-1),
            np.concatenate([-b, a, -d, c], axis=-1),
            np.concatenate([-c, d, a, -b], axis=-1),
            np.concatenate([-d, -c, b, a], axis=-1),
        ],
        axis=-2,
    )


def iota_inv(M):
    """Inverse of :func:`iota` on its image; other inputs are projected first."""
    M = proj_p(M)
    n = M.shape[-1] // 4
    blocks = [M[..., :n, p * n:(p + 1) * n] for p in range(4)]
    return np.stack(blocks, axis=-1)


def structure_matrices(n):
    """The standard hypercomplex structure ``(I0, J0, K0)`` on R^{4n}."""
    one = np.eye(n)
    zero = np.zeros((n, n))

    def block(rows):
        return np.block([[{0: zero, 1: one, -1: -one}[v] for v in row] for row in rows])

    I0 = block([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]])
    J0 = block([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]])
    K0 = block([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]])
    return I0, J0, K0


def proj_p(H):
    """Projection ``p(H) = (H - I0 H I0 - J0 H J0 - K0 H K0) / 4`` onto V."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1] // 4
    out = H.copy()
    for S in structure_matrices(n):
        out -= S @ H @ S
    return out / 4.0


def in_V(H, tol=1e-12):
    """Whether ``I0 H I0 = J0 H J0 = K0 H K0 = -H`` holds to ``tol``."""
    H = np.asarray(H, dtype=float)
    n = H.shape[-1] // 4
    scale = 1.0 + np.abs(H).max()
    return all(np.abs(S @ H @ S + H).max() <= tol * scale for S in structure_matrices(n))


def hermitian_defect(H):
    """``max |H - H*|`` and the tolerance it is compared against."""
    H = np.asarray(H, dtype=float)
    defect = np.abs(H - adjoint(H)).max() if H.size else 0.0
    return defect, HERMITIAN_RTOL * (1.0 + (np.abs(H).max() if H.size else 0.0))


def is_hyperhermitian(H):
    defect, tol = hermitian_defect(H)
    return bool(defect <= tol)


def check_hyperhermitian(H):
    defect, tol = hermitian_defect(H)
    if defect > tol:
        raise SymmetryError(f"matrix is not hyperhermitian: |H - H*|_max = {defect:.3e} > {tol:.3e}")


def group_spectrum(w, rtol=GROUPING_RTOL):
    """Collapse ascending real spectra ``(..., 4n)`` into ``(..., n)`` quadruple means.

    Raises GroupingError when some quadruple spreads more than
    ``rtol * (1 + spectral radius)``.
    """
    w = np.asarray(w)
    m = w.shape[-1]
    if m % 4:
        raise GroupingError(f"spectrum length {m} is not a multiple of 4")
    quads = w.reshape(w.shape[:-1] + (m // 4, 4))
    spread = quads[..., -1] - quads[..., 0]
    radius = np.abs(w).max(axis=-1, keepdims=True) if m else np.zeros(w.shape[:-1] + (1,))
    bad = spread > rtol * (1.0 + radius)
    if np.any(bad):
        raise GroupingError(
            f"spectrum does not split into quadruples (max spread {spread.max():.3e})"
        )
    return quads.mean(axis=-1)


def eigh_hyp(H, check=True):
    """Eigen-decomposition through the real representation.

    Returns ``(lam, w, V)``: ``lam`` the ``n`` representative eigenvalues in
    descending order, and ``w, V`` the ascending real spectrum and
    orthonormal eigenvectors of ``iota(H)`` (quadruple ``i`` of the
    ascending order occupies columns ``4i .. 4i+3``).
    """
    H = np.asarray(H, dtype=float)
    if check:
        check_hyperhermitian(H)
    w, V = np.linalg.eigh(iota(H))
    lam = group_spectrum(w)[..., ::-1]
    return lam, w, V


def eigenvalues_hyp(H):
    """Real eigenvalues of a hyperhermitian matrix, descending, one per class."""
    H = np.asarray(H, dtype=float)
    check_hyperhermitian(H)
    w = np.linalg.eigvalsh(iota(H))
    return group_spectrum(w)[..., ::-1]


def spectral_projectors(H, rtol=GROUPING_RTOL):
    """Spectral decomposition ``H = sum_i lam_i P_i`` of a single hyperhermitian matrix.

    Eigenvalues closer than the grouping tolerance share one projector of
    higher rank.  Returned in descending eigenvalue order.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 3:
        raise ValueError("spectral_projectors expects a single (n, n, 4) matrix")
    lam, w, V = eigh_hyp(H)
    n = H.shape[0]
    asc = lam[::-1]
    tol = rtol * (1.0 + np.abs(w).max())
    groups = [[0]]
    for i in range(1, n):
        if asc[i] - asc[groups[-1][-1]] < tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    out = []
    for idx in reversed(groups):
        cols = np.concatenate([np.arange(4 * i, 4 * i + 4) for i in idx])
        Vi = V[:, cols]
        out.append((float(asc[idx].mean()), iota_inv(Vi @ Vi.T)))
    return out


def moore_det(H):
    """Moore determinant as the product of the representative eigenvalues."""
    return np.prod(eigenvalues_hyp(H), axis=-1)


def qinv(H):
    """Inverse of a quaternionic matrix through the real representation."""
    M = iota(H)
    cond = np.linalg.cond(M)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
        raise SingularError("matrix is numerically singular")
    return iota_inv(np.linalg.inv(M))


def complement_products(lam):
    """``prod_{j != i} lam_j`` for each ``i`` along the last axis."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    out = np.empty_like(lam)
    for i in range(n):
        out[..., i] = np.prod(np.delete(lam, i, axis=-1), axis=-1)
    return out


def adjugate(H, route="spectral", tol=1e-12):
    """Eigenvalue-level adjugate ``sum_i (prod_{j != i} lam_j) P_i``.

    ``route="inverse"`` computes ``moore_det(H) * H^{-1}`` instead and
    raises SingularError when an eigenvalue is below ``tol`` in magnitude.
    """
    H = np.asarray(H, dtype=float)
    if route == "inverse":
        lam = eigenvalues_hyp(H)
        if np.any(np.abs(lam) < tol * (1.0 + np.abs(lam).max())):
            raise SingularError("adjugate by inversion needs an invertible matrix")
        det = np.prod(lam, axis=-1)
        return det[..., None, None, None] * qinv(H)
    if route != "spectral":
        raise ValueError(f"unknown route {route!r}")
    lam, w, V = eigh_hyp(H)
    comp = complement_products(lam)[..., ::-1]  # ascending order to match V
    weights = np.repeat(comp, 4, axis=-1)
    return iota_inv(np.einsum("...ij,...j,...kj->...ik", V, weights, V))


def majorizes(mu, lam, tol=1e-10):
    """Schur-Horn test: is ``mu`` in the permutation hull of ``lam``?

    Both vectors are sorted descending here; the partial sums of ``mu``
    must not exceed those of ``lam`` and the totals must agree.
    """
    mu = np.sort(np.asarray(mu, dtype=float))[::-1]
    lam = np.sort(np.asarray(lam, dtype=float))[::-1]
    if mu.shape != lam.shape:
        raise ValueError("mu and lambda must have the same length")
    scale = tol * (1.0 + np.abs(lam).sum())
    cm, cl = np.cumsum(mu), np.cumsum(lam)
    return bool(np.all(cm[:-1] <= cl[:-1] + scale) and abs(cm[-1] - cl[-1]) <= scale)


def in_permutation_hull(mu, lam):
    """Brute-force oracle: LP feasibility over convex weights of all permutations of ``lam``."""
    from scipy.optimize import linprog

    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    perms = np.array([lam[list(p)] for p in itertools.permutations(range(lam.size))])
    m = len(perms)
    A_eq = np.vstack([perms.T, np.ones((1, m))])
    b_eq = np.concatenate([mu, [1.0]])
    res = linprog(np.zeros(m), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


# random generators used by tests, property suites and the CLI


def random_quaternion_matrix(rng, n, size=()):
    size = (size,) if isinstance(size, int) else tuple(size)
    return rng.standard_normal(size + (n, n, 4))


def random_hyperhermitian(rng, n, size=()):
    A = random_quaternion_matrix(rng, n, size)
    return 0.5 * (A + adjoint(A))


def random_positive_hyperhermitian(rng, n, size=(), floor=0.5):
    A = random_quaternion_matrix(rng, n, size)
    return qmatmul(A, adjoint(A)) / n + floor * qeye(n)


def random_symplectic(rng, n, size=()):
    """Random quaternionic-unitary matrix via the Cayley transform of a skew matrix."""
    A = random_quaternion_matrix(rng, n, size)
    S = 0.5 * (A - adjoint(A))
    eye = np.eye(4 * n)
    R = iota(S)
    return iota_inv(np.linalg.solve((eye + R).swapaxes(-1, -2), (eye - R).swapaxes(-1, -2)).swapaxes(-1, -2))
