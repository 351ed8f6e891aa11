"""Command-line entry point: JSON-configured solves and seeded verification sweeps."""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import cones, io, quatlin, solver, torus, verify
from .errors import QHessianError, StepFailure

SCHEMA_VERSION = 1
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

CSV_COLUMNS = ("t", "iter", "residual_sup", "b", "c0", "grad_sup", "lap_sup", "ratio", "margin")

OUTPUT_DOC = """\
outputs of a solve (written to --out, default the current directory):
  phi.qht            solution field: header <4sIIII (b"QHT1", n, N, scheme code,
                     components) then float64 little-endian values in C order
  phi.json           sidecar repeating the header fields
  manifest.json      run manifest:
    schema_version     integer format version
    status             "ok" or "failed"
    family, k, n, N    equation family and discretization
    scheme             derivative scheme
    steps              configured continuity steps
    iterations[]       Newton iterations per accepted continuity step
    residual_history[] per step, sup-norm log residual after each Newton iterate
    t[]                continuity parameter of each accepted step
    b                  solved constant (mean-zero normalization)
    b_integral         quadrature value of b at the returned solution
    normalization      "mean-zero" or "sup-zero"; shift is the constant removed
    manufactured_sup_error  sup |phi - phi*| (manufactured configs only)
    diagnostics[]      the rows of diagnostics.csv as objects
    error              failure message (status "failed" only)
  diagnostics.csv    one row per Newton iterate with columns
    t             continuity parameter
    iter          Newton iteration within the step (0 = initial iterate)
    residual_sup  sup |f(lambda(A)) - H - log b - offset|
    b             current constant
    c0            sup |phi|
    grad_sup      sup of the Euclidean gradient norm of phi
    lap_sup       sup |quaternionic Laplacian of phi|
    ratio         lap_sup / (grad_sup^2 + 1)
    margin        min over grid points of the cone-boundary shift g0(lambda)

exit status: 0 success, 1 verification failure, 2 configuration error,
3 solver failure (last good artifacts are still written)
"""


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"config field '{field_name}': {message}")
        self.field = field_name


# --- trigonometric expression mini-language ---------------------------------
#
#   expr   := term (("+" | "-") term)*
#   term   := number | [number "*"] factor ("*" factor)*
#   factor := ("cos" | "sin") "(" [int "*"] "x" p "_" r ")"
#
# ``x{p}_{r}`` is the real coordinate x_p^r with p in 0..3 and r in 1..n.

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<fn>cos|sin)\(\s*(?:(?P<freq>\d+)\s*\*\s*)?x(?P<p>[0-3])_(?P<r>\d+)\s*\)"
    r"|(?P<op>[+\-*]))"
)


@dataclass(frozen=True)
class Factor:
    fn: str
    freq: int
    p: int
    r: int  # 1-based, as written


@dataclass(frozen=True)
class Term:
    coef: float
    factors: tuple = ()


def parse_expression(text):
    """Parse a trig-monomial sum into a tuple of Terms."""
    pos, tokens = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse expression at {text[pos:]!r}")
        tokens.append(m)
        pos = m.end()
    if not tokens:
        raise ValueError("empty expression")
    terms, sign, i = [], 1.0, 0
    while i < len(tokens):
        if tokens[i].group("op") in ("+", "-"):
            sign = -1.0 if tokens[i].group("op") == "-" else 1.0
            i += 1
        coef, factors, expect_factor = 1.0, [], True
        if i < len(tokens) and tokens[i].group("num"):
            coef = float(tokens[i].group("num"))
            i += 1
            expect_factor = i < len(tokens) and tokens[i].group("op") == "*"
            if expect_factor:
                i += 1
        while expect_factor:
            if i >= len(tokens) or not tokens[i].group("fn"):
                raise ValueError("expected cos(...) or sin(...)")
            m = tokens[i]
            factors.append(Factor(m.group("fn"), int(m.group("freq") or 1), int(m.group("p")), int(m.group("r"))))
            i += 1
            expect_factor = i < len(tokens) and tokens[i].group("op") == "*"
            if expect_factor:
                i += 1
        terms.append(Term(sign * coef, tuple(factors)))
        if i < len(tokens) and tokens[i].group("op") not in ("+", "-"):
            raise ValueError("terms must be joined by + or -")
        if i < len(tokens) and i == len(tokens) - 1:
            raise ValueError("dangling operator at end of expression")
    return tuple(terms)


def emit_expression(terms):
    """Canonical text of parsed terms; ``emit(parse(emit(t))) == emit(t)``."""
    if not terms:
        return "0"
    parts = []
    for idx, term in enumerate(terms):
        mag = abs(term.coef)
        body = [repr(mag)] + [
            f"{f.fn}({'' if f.freq == 1 else f'{f.freq}*'}x{f.p}_{f.r})" for f in term.factors
        ]
        text = "*".join(body)
        if idx == 0:
            parts.append(("-" if term.coef < 0 else "") + text)
        else:
            parts.append(("- " if term.coef < 0 else "+ ") + text)
    return " ".join(parts)


def normalize_expression(text):
    return emit_expression(parse_expression(text))


def evaluate_expression(terms, grid):
    out = np.zeros(grid.shape)
    for term in terms:
        val = np.full(grid.shape, term.coef)
        for f in term.factors:
            if not 1 <= f.r <= grid.n:
                raise ValueError(f"coordinate x{f.p}_{f.r} does not exist for n={grid.n}")
            trig = np.cos if f.fn == "cos" else np.sin
            val = val * trig(f.freq * grid.coordinate(f.p, f.r - 1))
        out += val
    return out


# --- configuration ----------------------------------------------------------

@dataclass
class RunConfig:
    """Solve configuration, read from and written to JSON.

    ``H`` is an expression string or ``{"file": path}``; ``omega`` is
    ``{"constant": (n, n, 4) nested list}``, ``{"eigenvalues": [expr, ...]}``
    (a diagonal field) or ``{"file": path}``; ``manufactured`` optionally
    names a solution expression from which ``H`` is generated instead.
    """

    family: str
    n: int
    N: int
    k: Optional[int] = None
    scheme: str = "central2"
    H: object = "0"
    omega: dict = field(default_factory=lambda: {"eigenvalues": ["1"]})
    metric: Optional[list] = None
    manufactured: Optional[str] = None
    steps: int = 4
    tol: float = solver.TOL
    max_iter: int = solver.MAX_ITER
    normalization: str = "mean-zero"
    out: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        for key in ("family", "n", "N"):
            if key not in data:
                raise ConfigError(key, "missing required field")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.H, str):
            d["H"] = normalize_expression(self.H)
        if self.manufactured is not None:
            d["manufactured"] = normalize_expression(self.manufactured)
        if "eigenvalues" in self.omega:
            d["omega"] = {"eigenvalues": [normalize_expression(str(e)) for e in self.omega["eigenvalues"]]}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def validate(self):
        if self.family not in cones.FAMILIES:
            raise ConfigError("family", f"must be one of {list(cones.FAMILIES)}, got {self.family!r}")
        for key in ("n", "N", "steps", "max_iter", "seed"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if key == "seed" else 1):
                raise ConfigError(key, f"must be a positive integer, got {v!r}")
        if self.family == "hessian":
            if not isinstance(self.k, int) or not 1 <= self.k <= self.n:
                raise ConfigError("k", f"hessian family needs integer 1 <= k <= n, got {self.k!r}")
        if self.scheme not in torus.SCHEMES:
            raise ConfigError("scheme", f"must be one of {list(torus.SCHEMES)}")
        if self.normalization not in solver.NORMALIZATIONS:
            raise ConfigError("normalization", f"must be one of {list(solver.NORMALIZATIONS)}")
        if not (isinstance(self.tol, (int, float)) and self.tol > 0):
            raise ConfigError("tol", "must be a positive number")
        for key in ("H", "manufactured"):
            v = getattr(self, key)
            if isinstance(v, str):
                try:
                    parse_expression(v)
                except ValueError as exc:
                    raise ConfigError(key, str(exc)) from exc
            elif key == "H" and not (isinstance(v, dict) and set(v) == {"file"}):
                raise ConfigError("H", "must be an expression string or {\"file\": path}")
        if not isinstance(self.omega, dict) or len(self.omega) != 1 or \
                next(iter(self.omega)) not in ("constant", "eigenvalues", "file"):
            raise ConfigError("omega", "must be {\"constant\": ...}, {\"eigenvalues\": [...]} or {\"file\": path}")
        if "eigenvalues" in self.omega:
            eig = self.omega["eigenvalues"]
            if not isinstance(eig, list) or len(eig) not in (1, self.n):
                raise ConfigError("omega", f"eigenvalues must list 1 or n={self.n} expressions")
            for e in eig:
                try:
                    parse_expression(str(e))
                except ValueError as exc:
                    raise ConfigError("omega", str(exc)) from exc


def _constant_matrix(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n, n, 4):
        raise ConfigError(name, f"expected an ({n}, {n}, 4) nested list, got shape {arr.shape}")
    if not quatlin.is_hyperhermitian(arr):
        raise ConfigError(name, "matrix is not hyperhermitian")
    return arr


def build_spec(cfg, base=Path(".")):
    """EquationSpec and the manufactured solution (or ``None``) for a config."""
    grid = torus.TorusGrid(cfg.n, cfg.N, cfg.scheme)
    op = cones.make_operator(cfg.family, cfg.n, cfg.k)
    g = None if cfg.metric is None else _constant_matrix(cfg.metric, cfg.n, "metric")

    kind, value = next(iter(cfg.omega.items()))
    if kind == "constant":
        om = torus.HypMatrixField(grid, _constant_matrix(value, cfg.n, "omega"))
    elif kind == "eigenvalues":
        exprs = list(value) * (cfg.n if len(value) == 1 else 1)
        diag = np.stack([evaluate_expression(parse_expression(str(e)), grid) for e in exprs], axis=-1)
        om = torus.HypMatrixField(grid, quatlin.qdiag(diag))
    else:
        raw = io.read_array(base / value, grid)
        om = torus.HypMatrixField(grid, raw.reshape(grid.shape + (cfg.n, cfg.n, 4)))

    kwargs = dict(g=g, normalization=cfg.normalization, steps=cfg.steps, tol=cfg.tol, max_iter=cfg.max_iter)
    zero = torus.ScalarField(grid, 0.0)
    spec = solver.EquationSpec(grid, op, om, zero, **kwargs)
    phi_star = None
    if cfg.manufactured is not None:
        phi_star = evaluate_expression(parse_expression(cfg.manufactured), grid)
        lam = solver.assemble_A(spec, phi_star).lam
        H = op.f(lam) - op.offset
    elif isinstance(cfg.H, str):
        H = evaluate_expression(parse_expression(cfg.H), grid)
    else:
        H = io.read_field(base / cfg.H["file"], grid).values
    return spec.with_H(H), phi_star


def _write_outputs(out, state, cfg, phi_star=None, error=None):
    out.mkdir(parents=True, exist_ok=True)
    io.write_field(out / "phi.qht", state.phi, extra={"b": state.b, "t": state.t})
    rows = [{k: r[k] for k in CSV_COLUMNS} for r in state.trace]
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "status": "failed" if error else "ok",
        "family": cfg.family,
        "k": cfg.k,
        "n": cfg.n,
        "N": cfg.N,
        "scheme": cfg.scheme,
        "steps": cfg.steps,
        "t": [p["t"] for p in state.path],
        "iterations": [p["iterations"] for p in state.path],
        "residual_history": [p["residual_history"] for p in state.path],
        "b": state.b,
        "b_integral": solver.b_from_integral(state.spec, state.phi),
        "normalization": cfg.normalization,
        "shift": state.shift,
        "diagnostics": rows,
        "config": cfg.to_dict(),
    }
    if phi_star is not None:
        ref = phi_star - (phi_star.max() if cfg.normalization == "sup-zero" else phi_star.mean())
        manifest["manufactured_sup_error"] = float(np.abs(state.phi.values - ref).max())
    if error:
        manifest["error"] = error
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, allow_nan=True))
    return manifest


def run_solve(cfg, out_dir, base=Path(".")):
    """Solve one configured equation; returns ``(exit_code, manifest or None)``."""
    out = Path(out_dir)
    try:
        spec, phi_star = build_spec(cfg, base)
    except (ConfigError, ValueError, OSError, QHessianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    try:
        state = solver.continuity_solve(spec)
    except StepFailure as exc:
        print(f"solver failure at t={exc.t}: {exc}", file=sys.stderr)
        if exc.last_state is not None:
            _write_outputs(out, exc.last_state, cfg, error=str(exc))
        return EXIT_SOLVER, None
    except QHessianError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER, None
    return EXIT_OK, _write_outputs(out, state, cfg, phi_star)


def run_verify(suite, trials, seed, out_dir=None):
    report = verify.run_suite(suite, trials, seed)
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{suite}.json").write_text(text)
    if report["passed"]:
        print(f"verify {suite}: {len(report['properties'])} properties passed")
        return EXIT_OK, report
    print(text)
    for prop in report["properties"]:
        if not prop["passed"]:
            print(f"FAILED: {prop['name']} ({prop['failure_count']} failing trials)", file=sys.stderr)
    return EXIT_VERIFY, report


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qhessian",
        description="Solve quaternionic Hessian-type equations on the flat torus, or run property sweeps.",
        epilog=OUTPUT_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--config", metavar="PATH", help="JSON run configuration")
    mode.add_argument("--verify", metavar="SUITE", choices=verify.SUITES, help="property suite: %(choices)s")
    parser.add_argument("--trials", type=int, default=100, help="random trials per property (default 100)")
    parser.add_argument("--seed", type=int, default=None, help="seed (default: config seed, or 0)")
    parser.add_argument("--out", metavar="DIR", default=None, help="output directory")
    parser.add_argument("--scheme", choices=torus.SCHEMES, default=None, help="override the derivative scheme")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.verify:
        if args.trials < 0:
            print("error: --trials must be >= 0", file=sys.stderr)
            return EXIT_CONFIG
        code, _ = run_verify(args.verify, args.trials, 0 if args.seed is None else args.seed, args.out)
        return code
    path = Path(args.config)
    try:
        cfg = RunConfig.from_json(path.read_text())
        if args.scheme:
            cfg.scheme = args.scheme
        if args.seed is not None:
            cfg.seed = args.seed
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.out or "."
    code, _ = run_solve(cfg, out, base=path.parent)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
