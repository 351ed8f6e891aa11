"""Discrete flat hyperkähler torus ``R^{4n} / (2 pi Z)^{4n}``.

Grid values are stored as real arrays of shape ``(N,) * 4n``.  Real axis
``p * n + r`` carries the coordinate ``x_p^r`` (``p = 0..3`` the quaternion
component, ``r = 0..n-1`` the quaternionic coordinate), i.e. the order
``(x_0^1..x_0^n, x_1^1..x_1^n, x_2^1.., x_3^1..)``.  Indices ``r`` are
zero-based throughout the Python API.

Both difference schemes are applied as Fourier multipliers, which is exact
for periodic stencils:

* ``central2``: ``(u[i+1] - u[i-1]) / 2h`` and ``(u[i+1] - 2u[i] + u[i-1]) / h^2``;
  mixed second derivatives are products of first differences.
* ``spectral``: trigonometric differentiation; the Nyquist mode is dropped
  from first derivatives and kept (as ``-(N/2)^2``) in pure second ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from . import quatlin
from .errors import SymmetryError

SCHEMES = ("central2", "spectral")
HESS_SYMMETRY_TOL = 1e-8

# e_a * conj(e_b) as quaternion components, shape (4, 4, 4)
_UNIT = np.eye(4)
PAIR_TABLE = np.array([[quatlin.qmul(_UNIT[a], quatlin.qconj(_UNIT[b])) for b in range(4)] for a in range(4)])


@dataclass(frozen=True, eq=False)
class TorusGrid:
    n: int
    N: int
    scheme: str = "central2"

    def __post_init__(self):
        if self.n < 1 or self.N < 2:
            raise ValueError(f"bad grid n={self.n}, N={self.N}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    @property
    def dim(self):
        return 4 * self.n

    @property
    def shape(self):
        return (self.N,) * self.dim

    @property
    def npoints(self):
        return self.N ** self.dim

    @property
    def h(self):
        return 2.0 * np.pi / self.N

    @property
    def volume(self):
        return (2.0 * np.pi) ** self.dim

    def axis(self, p, r):
        return p * self.n + r

    def coords(self):
        """Broadcastable coordinate arrays, one per real axis."""
        x = np.arange(self.N) * self.h
        out = []
        for a in range(self.dim):
            shp = [1] * self.dim
            shp[a] = self.N
            out.append(x.reshape(shp))
        return out

    def coordinate(self, p, r):
        return np.broadcast_to(self.coords()[self.axis(p, r)], self.shape)

    # --- Fourier multipliers -------------------------------------------

    @cached_property
    def _spec_shape(self):
        return self.shape[:-1] + (self.N // 2 + 1,)

    def _wavenumbers(self, a):
        if a == self.dim - 1:
            return np.fft.rfftfreq(self.N, 1.0 / self.N)
        return np.fft.fftfreq(self.N, 1.0 / self.N)

    def _bcast(self, vec, a):
        shp = [1] * self.dim
        shp[a] = vec.size
        return vec.reshape(shp)

    @cached_property
    def _first(self):
        out = []
        for a in range(self.dim):
            k = self._wavenumbers(a)
            if self.scheme == "spectral":
                s = 1j * np.where(np.abs(k) == self.N / 2, 0.0, k)
            else:
                s = 1j * np.sin(k * self.h) / self.h
            out.append(self._bcast(s, a))
        return out

    @cached_property
    def _pure_second(self):
        out = []
        for a in range(self.dim):
            k = self._wavenumbers(a)
            if self.scheme == "spectral":
                s = -(k**2)
            else:
                s = -4.0 * np.sin(0.5 * k * self.h) ** 2 / self.h**2
            out.append(self._bcast(s.astype(complex), a))
        return out

    def symbol2(self, a, b):
        """Multiplier of the second derivative ``d_a d_b``."""
        if a == b:
            return self._pure_second[a]
        return self._first[a] * self._first[b]

    def fft(self, u):
        u = np.broadcast_to(u, self.shape)
        return sfft.rfftn(u, axes=range(self.dim))

    def ifft(self, U):
        return sfft.irfftn(U, s=self.shape, axes=range(self.dim))

    # --- derivatives on raw arrays ---------------------------------------

    def d1(self, u, a):
        return self.ifft(self.fft(u) * self._first[a])

    def d2(self, u, a, b):
        return self.ifft(self.fft(u) * self.symbol2(a, b))

    def gradient(self, u):
        U = self.fft(u)
        return np.stack([self.ifft(U * self._first[a]) for a in range(self.dim)], axis=-1)

    def real_hessian(self, u):
        """All second derivatives, shape ``grid.shape + (4n, 4n)``."""
        U = self.fft(u)
        out = np.empty(self.shape + (self.dim, self.dim))
        for a in range(self.dim):
            for b in range(a, self.dim):
                v = self.ifft(U * self.symbol2(a, b))
                out[..., a, b] = v
                out[..., b, a] = v
        return out

    @cached_property
    def _hess_symbols(self):
        # (r, s, c) -> multiplier of component c of Hess_rs, upper triangle only
        n = self.n
        out = {}
        for r in range(n):
            for s in range(r, n):
                comps = (0,) if r == s else (0, 1, 2, 3)
                for c in comps:
                    sym = 0.0
                    for a in range(4):
                        for b in range(4):
                            w = PAIR_TABLE[a, b, c]
                            if w != 0.0:
                                sym = sym + 0.25 * w * self.symbol2(self.axis(a, r), self.axis(b, s))
                    out[(r, s, c)] = sym
        return out

    def quaternionic_hessian(self, u):
        """Hyperhermitian Hessian field, one inverse transform per independent entry."""
        U = self.fft(u)
        n = self.n
        out = np.zeros(self.shape + (n, n, 4))
        for (r, s, c), sym in self._hess_symbols.items():
            v = self.ifft(U * sym)
            out[..., r, s, c] = v
            if r != s:
                out[..., s, r, c] = v if c == 0 else -v
        return out

    def constant_coeff_symbol(self, C):
        """Multiplier of ``psi -> 1/4 sum_ab C_ab d_a d_b psi`` for constant symmetric ``C``."""
        sym = np.zeros(self._spec_shape, dtype=complex)
        for a in range(self.dim):
            for b in range(self.dim):
                if C[a, b] != 0.0:
                    sym = sym + 0.25 * C[a, b] * self.symbol2(a, b)
        return sym

    def solve_symbol(self, rhs, sym):
        """Mean-zero solution of ``op(psi) = rhs - mean(rhs)`` for a multiplier ``sym``."""
        R = self.fft(rhs)
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.where(np.abs(sym) > 1e-14, R / sym, 0.0)
        S.flat[0] = 0.0
        return self.ifft(S)

    def laplacian_symbol(self):
        """Multiplier of the flat quaternionic Laplacian (1/4 of the Euclidean one)."""
        return self.constant_coeff_symbol(np.eye(self.dim))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 0 or (vals.ndim == self.grid.dim and vals.shape != self.grid.shape):
            vals = np.broadcast_to(vals, self.grid.shape).copy()
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        if self.mean_zero:
            vals = vals - vals.mean()
        object.__setattr__(self, "values", vals)

    def mean(self):
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class QuatField:
    """Quaternion-valued grid function, values of shape ``grid.shape + (4,)``."""

    grid: TorusGrid
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class HypMatrixField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == (n, n, 4):
            vals = np.broadcast_to(vals, self.grid.shape + (n, n, 4)).copy()
        if vals.shape != self.grid.shape + (n, n, 4):
            raise ValueError(f"values shape {vals.shape} does not fit grid with n={n}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid, H):
        quatlin.check_hyperhermitian(H)
        return cls(grid, np.asarray(H, dtype=float))

    def check(self):
        quatlin.check_hyperhermitian(self.values)
        return self


def dq(field, r):
    """``d_{q^r} u = sum_a (d_{x_a^r} u) conj(e_a)``; ``u`` real or quaternion-valued."""
    grid = field.grid
    u = field.values
    if isinstance(field, ScalarField):
        parts = [grid.d1(u, grid.axis(a, r)) for a in range(4)]
        return QuatField(grid, np.stack([parts[0], -parts[1], -parts[2], -parts[3]], axis=-1))
    out = np.zeros_like(u)
    for a in range(4):
        da = np.stack([grid.d1(u[..., c], grid.axis(a, r)) for c in range(4)], axis=-1)
        out = out + quatlin.qmul(da, quatlin.qconj(_UNIT[a]))
    return QuatField(grid, out)


def dqbar(field, r):
    """``d_{qbar^r} u = sum_a e_a (d_{x_a^r} u)``; ``u`` real or quaternion-valued."""
    grid = field.grid
    u = field.values
    if isinstance(field, ScalarField):
        return QuatField(grid, np.stack([grid.d1(u, grid.axis(a, r)) for a in range(4)], axis=-1))
    out = np.zeros_like(u)
    for a in range(4):
        da = np.stack([grid.d1(u[..., c], grid.axis(a, r)) for c in range(4)], axis=-1)
        out = out + quatlin.qmul(_UNIT[a], da)
    return QuatField(grid, out)


def hess_from_real(D2, n):
    """Quaternionic Hessian ``1/4 sum_ab e_a conj(e_b) D2[(a,r),(b,s)]`` from real second derivatives."""
    D2 = np.asarray(D2, dtype=float)
    blocks = D2.reshape(D2.shape[:-2] + (4, n, 4, n))
    return 0.25 * np.einsum("...arbs,abc->...rsc", blocks, PAIR_TABLE)


def conjugate_reflection(n):
    """``diag(1, -1, -1, -1)`` on the four real blocks: the real coordinates of ``qbar``.

    With it, ``iota(hess_from_real(D)) = proj_p(S D S)`` for every symmetric ``D``.
    """
    return np.kron(np.diag([1.0, -1.0, -1.0, -1.0]), np.eye(n))


def hess_q(field):
    """Quaternionic Hessian field ``(1/4 d_{qbar^r} d_{q^s} phi)``."""
    grid = field.grid
    H = grid.quaternionic_hessian(field.values)
    defect = np.abs(H - quatlin.adjoint(H)).max()
    if defect > HESS_SYMMETRY_TOL * (1.0 + np.abs(H).max()):
        raise SymmetryError(f"discrete quaternionic Hessian not hyperhermitian (defect {defect:.2e})")
    return HypMatrixField(grid, H)


def re_trace_product(X, Y):
    """``Re tr(X Y)`` for quaternionic matrices (batched)."""
    # Re(p q) = p_w q_w - p_x q_x - p_y q_y - p_z q_z
    sign = np.array([1.0, -1.0, -1.0, -1.0])
    return np.einsum("...rsc,...src,c->...", X, Y, sign)


def laplacian_q(field, g=None):
    """``Re tr(g^{-1} Hess_H phi)``; the flat default is a quarter of the Euclidean Laplacian."""
    grid = field.grid
    if g is None:
        D2 = grid.real_hessian(field.values)
        return ScalarField(grid, 0.25 * np.trace(D2, axis1=-2, axis2=-1))
    ginv = quatlin.qinv(np.asarray(g, dtype=float))
    H = hess_q(field).values
    return ScalarField(grid, re_trace_product(ginv, H))


def grad_supnorm(field):
    g = field.grid.gradient(field.values)
    return float(np.sqrt((g**2).sum(axis=-1)).max())


def c0_norm(field):
    return float(np.abs(field.values).max())


def mean_integral(field):
    """Integral over the torus: uniform (trapezoidal) mean times ``(2 pi)^{4n}``."""
    return float(field.values.mean() * field.grid.volume)
