"""Newton and continuity solver for ``F(A(phi)) = H + log b`` on the discrete torus.

Here ``A = g^{-1}(Omega + Hess_H phi)`` and ``F = f(lambda(A))`` for a cone
operator ``f``.  The unknowns are ``phi`` (mean zero) and ``beta = log b``.

Newton is applied to the exponentiated residual

    G(phi, beta) = exp(f(lambda)) - exp(H + offset + beta),

augmented with the row ``mean(phi) = 0``.  For ``n = 1`` and for the
``k = 1`` Hessian family ``exp(f)`` is linear in the Hessian, so one
Newton step is exact; in general it is simply a smoother merit function
than the logarithmic residual.  Convergence is still measured on the
logarithmic residual ``f - H - offset - beta``.

Eigenvalues of ``g^{-1} X`` are those of the hyperhermitian matrix
``G X G`` with ``G = g^{-1/2}``, which is what gets diagonalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import cones, forms, quatlin, torus
from .errors import (
    AdmissibilityError,
    KrylovError,
    LineSearchError,
    MaxIterError,
    QHessianError,
    StepFailure,
)
from .torus import HypMatrixField, ScalarField

NORMALIZATIONS = ("mean-zero", "sup-zero")

TOL = 1e-10
MAX_ITER = 50
ADMISSIBILITY_MARGIN = 1e-12
ARMIJO = 1e-4
MIN_STEP = 2.0**-30
KRYLOV_RTOL = 1e-3
KRYLOV_RTOL_FINE = 1e-8
FINE_SWITCH = 1e-4
MAX_CONTINUITY_STEPS = 64


def _metric_root(g, n):
    """``g^{-1/2}`` for a constant positive hyperhermitian metric, ``None`` for the identity."""
    if g is None:
        return None
    g = np.asarray(g, dtype=float)
    if np.allclose(g, quatlin.qeye(n), rtol=0, atol=1e-15):
        return None
    quatlin.check_hyperhermitian(g)
    w, V = np.linalg.eigh(quatlin.iota(g))
    if w.min() <= 0.0:
        raise ValueError("metric g must be positive definite")
    return quatlin.iota_inv((V / np.sqrt(w)) @ V.T)


def _sandwich(G, X):
    return X if G is None else quatlin.qmatmul(quatlin.qmatmul(G, X), G)


@dataclass(frozen=True, eq=False)
class EquationSpec:
    """Everything that defines one equation instance.

    ``omega`` must be admissible for the family at every grid point, so
    that ``phi = 0`` is an admissible starting point and a C-subsolution.
    """

    grid: torus.TorusGrid
    op: cones.ConeOperator
    omega: HypMatrixField
    H: ScalarField
    g: Optional[np.ndarray] = None
    normalization: str = "mean-zero"
    steps: int = 4
    tol: float = TOL
    max_iter: int = MAX_ITER

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.op.n != self.grid.n:
            raise ValueError(f"operator is for n={self.op.n}, grid has n={self.grid.n}")
        if self.steps < 1:
            raise ValueError("continuity steps must be >= 1")
        self.omega.check()
        lam = _eigs(self, self.omega.values)
        if not np.all(self.op.contains(lam)):
            raise AdmissibilityError(f"background form is not {self.op.family}-admissible everywhere")

    @property
    def offset(self):
        return self.op.offset

    @property
    def metric_root(self):
        return _metric_root(self.g, self.grid.n)

    @property
    def ginv(self):
        n = self.grid.n
        return quatlin.qeye(n) if self.g is None else quatlin.qinv(np.asarray(self.g, dtype=float))

    def with_H(self, H):
        return replace(self, H=H if isinstance(H, ScalarField) else ScalarField(self.grid, H))


def nm1_background(grid, omega1, g=None):
    """``Re tr(g^{-1} Omega_1) g - (n - 1) Omega_1`` pointwise.

    With this background the (n-1)-MA operator applied to ``Omega + Hess phi``
    becomes ``det(Omega_1 + (Delta phi I - Hess phi) / (n - 1))``.
    """
    n = grid.n
    O1 = omega1.values if isinstance(omega1, HypMatrixField) else HypMatrixField(grid, omega1).values
    gm = quatlin.qeye(n) if g is None else np.asarray(g, dtype=float)
    ginv = quatlin.qeye(n) if g is None else quatlin.qinv(gm)
    tr = torus.re_trace_product(np.broadcast_to(ginv, O1.shape), O1)
    return HypMatrixField(grid, tr[..., None, None, None] * gm - (n - 1) * O1)


def nm1_spec(grid, omega1, H, g=None, **kwargs):
    """Spec for the (n-1)-plurisubharmonic Monge-Ampere equation with form ``Omega_1``."""
    n = grid.n
    omega = nm1_background(grid, omega1, g) if n > 1 else (
        omega1 if isinstance(omega1, HypMatrixField) else HypMatrixField(grid, omega1)
    )
    return EquationSpec(grid, cones.nm1_operator(n), omega, H, g=g, **kwargs)


class Assembly:
    """``A = g^{-1}(Omega + Hess phi)`` with the eigen data of ``G (Omega + Hess phi) G``."""

    def __init__(self, spec, X):
        self.spec = spec
        self.X = X
        self.sym, self.lam, self.w, self.V = _eigs(spec, X, with_vectors=True)

    @cached_property
    def A(self):
        ginv = np.broadcast_to(self.spec.ginv, self.X.shape)
        return HypMatrixField(self.spec.grid, quatlin.qmatmul(ginv, self.X))

    def projectors(self, index):
        """Spectral projectors of the symmetrized matrix at one grid point."""
        return quatlin.spectral_projectors(self.sym[index])


def _eigs(spec, X, with_vectors=False):
    S = _sandwich(spec.metric_root, X)
    if with_vectors:
        w, V = np.linalg.eigh(quatlin.iota(S))
        return S, quatlin.group_spectrum(w)[..., ::-1], w, V
    return quatlin.group_spectrum(np.linalg.eigvalsh(quatlin.iota(S)))[..., ::-1]


def _phi_values(spec, phi):
    if phi is None:
        return np.zeros(spec.grid.shape)
    return phi.values if isinstance(phi, ScalarField) else np.broadcast_to(phi, spec.grid.shape)


def assemble_A(spec, phi):
    X = spec.omega.values + spec.grid.quaternionic_hessian(_phi_values(spec, phi))
    return Assembly(spec, X)


def _log_residual(spec, lam, beta):
    inside = spec.op.contains(lam)
    if not np.all(inside):
        bad = inside.size - np.count_nonzero(inside)
        raise AdmissibilityError(f"{bad} grid point(s) outside the {spec.op.family} cone")
    return spec.op.f(lam) - spec.H.values - spec.offset - beta


@dataclass(eq=False)
class SolverState:
    """Iterate ``(phi, b)`` with residual, history and trace rows."""

    spec: EquationSpec
    phi: ScalarField
    b: float
    residual: ScalarField
    history: list = field(default_factory=list)
    margin: float = float("nan")
    iterations: int = 0
    trace: list = field(default_factory=list)
    t: float = 1.0
    shift: float = 0.0
    path: list = field(default_factory=list)

    @property
    def residual_sup(self):
        return float(np.abs(self.residual.values).max())


def _margin(spec, lam):
    return float(np.min(cones.g0(spec.op, lam)))


def make_state(spec, phi=None, b=1.0, t=1.0):
    """State at ``(phi, b)``; raises AdmissibilityError outside the cone."""
    vals = np.array(_phi_values(spec, phi), dtype=float)
    asm = assemble_A(spec, vals)
    r = _log_residual(spec, asm.lam, math.log(b))
    return SolverState(
        spec=spec, phi=ScalarField(spec.grid, vals), b=float(b),
        residual=ScalarField(spec.grid, r), margin=_margin(spec, asm.lam), t=t,
    )


def residual(spec, state):
    """Logarithmic residual ``f(lambda(A)) - H - log b - offset``."""
    asm = assemble_A(spec, state.phi)
    return ScalarField(spec.grid, _log_residual(spec, asm.lam, math.log(state.b)))


def _coefficient(spec, asm):
    """Quaternionic coefficient field ``G F G`` with ``F = sum_i f_i(lambda) P_i``."""
    grads = spec.op.grad_f(asm.lam)[..., ::-1]  # ascending, to match the eigenvector order
    d = np.repeat(grads, 4, axis=-1)
    W = (asm.V * d[..., None, :]) @ np.swapaxes(asm.V, -1, -2)
    G = spec.metric_root
    if G is not None:
        iG = quatlin.iota(G)
        W = iG @ W @ iG
    return _first_block_row(W, spec.grid.n)


def _first_block_row(W, n):
    # W lies in the image of iota up to rounding, so no projection is needed
    return np.stack([W[..., :n, p * n:(p + 1) * n] for p in range(4)], axis=-1)


def linearization_coefficient(spec, state):
    return _coefficient(spec, assemble_A(spec, state.phi))


def _apply(grid, coeff, psi):
    return torus.re_trace_product(coeff, grid.quaternionic_hessian(psi))


def apply_linearization(spec, state, psi):
    """``Re tr(F g^{-1} Hess psi)``: derivative of the residual in direction ``psi``."""
    coeff = linearization_coefficient(spec, state)
    vals = psi.values if isinstance(psi, ScalarField) else psi
    return ScalarField(spec.grid, _apply(spec.grid, coeff, vals))


def b_from_integral(spec, phi=None):
    """``b = int F-ratio / int exp(H)`` by uniform quadrature.

    The ratio is ``exp(f - offset)``: ``sigma_k / C(n, k)`` (the wedge ratio)
    for the Hessian family and ``det`` of the transformed matrix for the
    (n-1)-MA family.
    """
    lam = assemble_A(spec, phi).lam
    if spec.op.family in ("hessian", "ma"):
        ratio = forms.wedge_ratio(lam, spec.op.k)
    else:
        ratio = np.exp(spec.op.f(lam) - spec.offset)
    return float(np.mean(ratio) / np.mean(np.exp(spec.H.values)))


class _Newton:
    """One Newton iterate's linear algebra at ``(phi, beta)``."""

    def __init__(self, spec, phi, beta, asm=None):
        self.spec = spec
        grid = spec.grid
        asm = assemble_A(spec, phi) if asm is None else asm
        self.lam = asm.lam
        self.logres = _log_residual(spec, asm.lam, beta)
        self.ef = np.exp(spec.op.f(asm.lam))
        self.w = np.exp(spec.H.values + spec.offset + beta)
        self.G = self.ef - self.w
        self.coeff = _coefficient(spec, asm) * self.ef[..., None, None, None]
        S = torus.conjugate_reflection(grid.n)
        Cbar = S @ quatlin.iota(self.coeff.reshape(-1, grid.n, grid.n, 4).mean(axis=0)) @ S
        self.sym = grid.constant_coeff_symbol(Cbar)
        self.wbar = float(self.w.mean())

    def operator(self):
        grid, coeff, w = self.spec.grid, self.coeff, self.w
        m = grid.npoints

        def matvec(x):
            psi = x[:m].reshape(grid.shape)
            out = np.empty(m + 1)
            out[:m] = (_apply(grid, coeff, psi) - w * x[m]).ravel()
            out[m] = psi.mean()
            return out

        def precond(y):
            r = y[:m].reshape(grid.shape)
            dbeta = -r.mean() / self.wbar
            out = np.empty(m + 1)
            out[:m] = (grid.solve_symbol(r, self.sym) + y[m]).ravel()
            out[m] = dbeta
            return out

        shape = (m + 1, m + 1)
        return LinearOperator(shape, matvec=matvec), LinearOperator(shape, matvec=precond)

    def direction(self, rtol):
        m = self.spec.grid.npoints
        A, M = self.operator()
        rhs = np.concatenate([-self.G.ravel(), [0.0]])
        x, info = gmres(A, rhs, rtol=rtol, atol=0.0, restart=60, maxiter=10, M=M)
        if not np.all(np.isfinite(x)):
            raise KrylovError("Krylov solve produced non-finite values")
        rel = np.linalg.norm(A.matvec(x) - rhs) / np.linalg.norm(rhs)
        if info != 0 and rel > 0.5:
            raise KrylovError(f"Krylov solve stagnated (relative residual {rel:.2e})")
        return x[:m].reshape(self.spec.grid.shape), float(x[m])

    def merit(self):
        return float(np.sqrt(np.mean(self.G**2)))


def _trace_row(spec, t, it, phi, b, logres, lam):
    row = {"t": t, "iter": it, "residual_sup": float(np.abs(logres).max()), "b": b}
    row.update(_norms(spec, phi, lam))
    return row


def newton_solve(spec, phi0=None, b0=None, t=1.0, trace=True):
    """Augmented Newton-Krylov solve for ``(phi, b)`` with ``mean(phi) = 0``.

    Raises LineSearchError, MaxIterError or KrylovError on failure; the
    initial iterate must be admissible (AdmissibilityError otherwise).
    """
    grid = spec.grid
    phi = np.array(_phi_values(spec, phi0), dtype=float)
    phi -= phi.mean()
    b = b_from_integral(spec, phi) if b0 is None else float(b0)
    beta = math.log(b)
    it = _Newton(spec, phi, beta)
    history = [float(np.abs(it.logres).max())]
    rows = [_trace_row(spec, t, 0, phi, b, it.logres, it.lam)] if trace else []
    k = 0
    while history[-1] > spec.tol:
        if k >= spec.max_iter:
            raise MaxIterError(f"no convergence in {spec.max_iter} Newton steps (residual {history[-1]:.2e})")
        rtol = KRYLOV_RTOL if history[-1] > FINE_SWITCH else KRYLOV_RTOL_FINE
        psi, dbeta = it.direction(rtol)
        merit0 = it.merit()
        floor = 64 * np.finfo(float).eps * float(np.abs(it.w).max())
        alpha = 1.0
        while True:
            trial_phi = phi + alpha * psi
            trial_phi -= trial_phi.mean()
            trial_beta = beta + alpha * dbeta
            asm = assemble_A(spec, trial_phi)
            if np.all(spec.op.contains(asm.lam, ADMISSIBILITY_MARGIN)):
                trial = _Newton(spec, trial_phi, trial_beta, asm)
                if trial.merit() <= max((1.0 - ARMIJO * alpha) * merit0, floor):
                    break
            alpha *= 0.5
            if alpha < MIN_STEP:
                raise LineSearchError(
                    f"no admissible decreasing step >= 2^-30 at Newton step {k + 1} "
                    f"(residual {history[-1]:.2e})"
                )
        phi, beta, it = trial_phi, trial_beta, trial
        k += 1
        history.append(float(np.abs(it.logres).max()))
        if trace:
            rows.append(_trace_row(spec, t, k, phi, math.exp(beta), it.logres, it.lam))
    return SolverState(
        spec=spec,
        phi=ScalarField(grid, phi),
        b=math.exp(beta),
        residual=ScalarField(grid, it.logres),
        history=history,
        margin=_margin(spec, it.lam),
        iterations=k,
        trace=rows,
        t=t,
    )


def initial_datum(spec):
    """``H_0 = f(lambda(g^{-1} Omega)) - offset``, solved by ``(phi, b) = (0, 1)``."""
    lam = _eigs(spec, spec.omega.values)
    return ScalarField(spec.grid, spec.op.f(lam) - spec.offset)


def normalize(state):
    """Apply the equation's normalization; ``sup-zero`` shifts ``phi`` only, ``b`` is unchanged."""
    if state.spec.normalization != "sup-zero":
        return state
    shift = float(state.phi.values.max())
    return replace(state, phi=ScalarField(state.spec.grid, state.phi.values - shift), shift=shift)


def continuity_solve(spec, steps=None, trace=True):
    """March ``H_t = t H + (1 - t) H_0`` from ``t = 0`` to ``1``, warm-starting Newton.

    A failed step is retried on halved increments until the step count
    would exceed 64; then StepFailure carries ``t`` and the last good state.
    """
    steps = spec.steps if steps is None else steps
    H0 = initial_datum(spec)
    Hv, H0v = spec.H.values, H0.values

    def at(t):
        return spec.with_H(t * Hv + (1.0 - t) * H0v)

    state = newton_solve(at(0.0), b0=1.0, t=0.0, trace=trace)
    rows = list(state.trace)
    path = [_path_entry(state)]
    dt_min = 1.0 / MAX_CONTINUITY_STEPS
    dt = 1.0 / steps
    t = 0.0
    while t < 1.0:
        t_next = min(1.0, t + dt)
        if 1.0 - t_next < 1e-12:
            t_next = 1.0
        try:
            new = newton_solve(at(t_next), phi0=state.phi, t=t_next, trace=trace)
        except (QHessianError, FloatingPointError) as exc:
            if dt / 2.0 < dt_min * (1.0 - 1e-12):
                last = replace(state, trace=rows, path=path)
                raise StepFailure(f"continuity step to t={t_next:g} failed: {exc}", t=t_next, last_state=last) from exc
            dt /= 2.0
            continue
        rows.extend(new.trace)
        path.append(_path_entry(new))
        state, t = new, t_next
    state = replace(state, spec=spec, trace=rows, path=path)
    return normalize(state)


def _path_entry(state):
    return {"t": state.t, "iterations": state.iterations, "residual_history": list(state.history), "b": state.b}


def _norms(spec, phi, lam):
    grid = spec.grid
    ph = ScalarField(grid, phi)
    c0 = torus.c0_norm(ph)
    grad = torus.grad_supnorm(ph)
    ginv = np.broadcast_to(spec.ginv, grid.shape + spec.ginv.shape)
    lap = float(np.abs(torus.re_trace_product(ginv, grid.quaternionic_hessian(phi))).max())
    margin = _margin(spec, lam)
    fl = float(np.max(np.sum(spec.op.grad_f(lam) * lam, axis=-1)))
    return {
        "c0": c0,
        "grad_sup": grad,
        "lap_sup": lap,
        "ratio": lap / (grad**2 + 1.0),
        "margin": margin,
        "sum_f_lambda": fl,
    }


def diagnostics(state):
    """A priori-estimate monitors for ``state``; observational only."""
    lam = assemble_A(state.spec, state.phi).lam
    return _norms(state.spec, state.phi.values, lam)


def linear_poisson_solve(spec):
    """Direct solve of the ``n = 1`` equation ``Hess phi = g e^{H + log b} - Omega``.

    For ``n = 1`` every family reduces to ``A = e^{H + log b}`` (offsets vanish),
    a linear mean-zero Poisson problem.  Returns ``(phi, b)``.
    """
    grid = spec.grid
    if grid.n != 1:
        raise ValueError("the direct linear solve is only valid for n = 1")
    g = 1.0 if spec.g is None else float(np.asarray(spec.g)[0, 0, 0])
    om = spec.omega.values[..., 0, 0, 0]
    eH = np.exp(spec.H.values + spec.offset)
    b = float(om.mean() / (g * eH.mean()))
    phi = grid.solve_symbol(g * b * eH - om, grid.laplacian_symbol())
    return ScalarField(grid, phi), b
