"""
Subcommands of the batch front-end

Each command body turns a RunConfig into a CommandResult (pass flag, metrics,
CSV tables, arrays). `run` writes the result atomically under
<out>/<command>/ and maps errors to exit codes:

    0  every check passed
    1  a numerical check failed or an operation raised a CalculusError
    2  an input did not parse
"""

import json
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy
from pydantic import ValidationError

from calculus.enveloping_calculus import (
    FilteredDiffOp,
    apply_operator,
    compose,
    cosymbol_compose,
    format_cosymbol,
    format_kernel_family,
    format_operator,
    is_homogeneous_on_nose,
    kernel_family,
    principal_cosymbol,
    sublaplacian,
)
from calculus.errors import CalculusError, MalformedInputError
from calculus.expansion_parametrix import (
    expansion_report,
    extract_expansion,
    hypoellipticity_demo,
    invert_cosymbol,
    parametrix,
)
from calculus.filtered_patch import (
    PATCH_CATALOG,
    FilteredPatch,
    check_filtration,
    osculating_at,
    parse_coefficient,
    sample_injectivity,
)
from calculus.graded_nilpotent import GradedLieAlgebra, bch_multiply, dilate, validate
from calculus.heisenberg import heisenberg_report
from calculus.kernel_zoom import (
    SymbolFamily,
    cocycle,
    cosymbol_limit,
    decay_report,
    essential_homogeneity_test,
    expression_family,
    family_from_operator,
    log_kernel_family,
    pseudolocality_report,
    regularity_check,
    regularity_order,
    sqrt_family,
)
from calculus.lattice import TGrid, TorusGrid
from cli.models import AlgebraSpec, OperatorSpec, PatchSpec, RunConfig, SymbolSpec
from cli.validation import load_spec, resolve_reference, safe_name
from storage.artifacts import artifact_transaction, write_array, write_csv, write_json

logger = logging.getLogger(__name__)

# (n_x, n_eta) per torus dimension; n_x applies to x-dependent families only
DEFAULT_GRIDS = {1: (256, 256), 2: (64, 64), 3: (8, 32)}
ALGEBRA_SWEEP = 1000
ZOOM_LAMBDAS = (2.0, 4.0, 8.0)
HEISENBERG_TOL = 1e-4
LOG_KERNEL_CUTOFF = 2.0


@dataclass
class CommandResult:
    passed: bool
    metrics: Dict[str, Any]
    tables: Dict[str, Tuple[Sequence[str], List[Sequence[Any]]]] = field(default_factory=dict)
    arrays: Dict[str, Any] = field(default_factory=dict)
    lines: List[str] = field(default_factory=list)


# Spec -> calculus objects

def build_algebra(spec: AlgebraSpec) -> GradedLieAlgebra:
    brackets = {
        (entry.i, entry.j): {k: Fraction(v) for k, v in entry.coefficients.items()}
        for entry in spec.brackets
    }
    return GradedLieAlgebra.from_brackets(spec.weights, brackets, tuple(spec.names), spec.name)


def build_patch(spec: PatchSpec) -> FilteredPatch:
    if spec.catalog is not None:
        if spec.catalog not in PATCH_CATALOG:
            raise MalformedInputError(f"unknown catalog patch {spec.catalog!r}", location=spec.name)
        return PATCH_CATALOG[spec.catalog]()
    if not spec.coords or not spec.orders:
        raise MalformedInputError("explicit patches need coords, frame and orders", location=spec.name)
    coords = tuple(sympy.Symbol(c, real=True) for c in spec.coords)
    frame = tuple(
        tuple(parse_coefficient(entry, coords, location=f"{spec.name}.frame[{j}][{k}]") for k, entry in enumerate(row))
        for j, row in enumerate(spec.frame)
    )
    return FilteredPatch(
        coords, frame, tuple(spec.orders), spec.depth or max(spec.orders), periodic=spec.periodic,
        extent=tuple(tuple(box) for box in spec.extent), injectivity_radius=spec.injectivity_radius,
        frame_names=tuple(spec.frame_names), name=spec.name,
    )


def load_patch(reference: str, base_dir: Path) -> FilteredPatch:
    path = resolve_reference(reference, base_dir)
    if path is None:
        if reference not in PATCH_CATALOG:
            raise MalformedInputError(f"unknown patch {reference!r}")
        return PATCH_CATALOG[reference]()
    spec, _ = load_spec(str(path), PatchSpec)
    return build_patch(spec)


def build_operator(spec: OperatorSpec, base_dir: Path) -> FilteredDiffOp:
    patch = load_patch(spec.patch, base_dir)
    terms: Dict[Tuple[int, ...], sympy.Expr] = {}
    for n, term in enumerate(spec.terms):
        if len(term.multi_index) != patch.dim:
            raise MalformedInputError(
                f"multi-index {term.multi_index} does not match patch dimension {patch.dim}",
                location=f"{spec.name}.terms[{n}]",
            )
        a = tuple(term.multi_index)
        c = parse_coefficient(term.coefficient, patch.coords, location=f"{spec.name}.terms[{n}]")
        terms[a] = terms.get(a, sympy.Integer(0)) + c
    op = FilteredDiffOp.from_terms(patch, terms)
    if spec.sublaplacian:
        op = sublaplacian(patch) + op
    return op


def _grid(cfg: RunConfig, d: int, x_dependent: bool, spec: Optional[SymbolSpec] = None) -> TorusGrid:
    default_x, default_eta = DEFAULT_GRIDS[d]
    n_eta = cfg.grid_eta or (spec.grid_eta if spec is not None and spec.grid_eta else default_eta)
    n_x = 1
    if x_dependent:
        n_x = cfg.grid_x or (spec.grid_x if spec is not None and spec.grid_x else default_x)
    return TorusGrid(d, n_x, n_eta)


def _tgrid(cfg: RunConfig) -> TGrid:
    return TGrid(cfg.t_levels, cfg.t_up)


def _operator_x_dependent(op: FilteredDiffOp) -> bool:
    coords = set(op.patch.coords)
    return op.patch.is_coordinate_frame() and any(c.free_symbols & coords for _, c in op.terms)


def operator_family(op: FilteredDiffOp, cfg: RunConfig, name: str) -> SymbolFamily:
    grid = _grid(cfg, op.patch.dim, _operator_x_dependent(op))
    return family_from_operator(op, grid, _tgrid(cfg), name)


def build_family(spec: SymbolSpec, cfg: RunConfig, base_dir: Path) -> SymbolFamily:
    tgrid = _tgrid(cfg)
    if spec.family == "operator":
        if not spec.operator:
            raise MalformedInputError("operator families need an operator reference", location=spec.name)
        op_spec, op_path = load_spec(str(resolve_reference(spec.operator, base_dir) or spec.operator), OperatorSpec)
        return operator_family(build_operator(op_spec, op_path.parent), cfg, spec.name)
    if spec.family == "expression":
        x_dependent = re.search(r"\bx\d", spec.expression) is not None
        grid = _grid(cfg, spec.d, x_dependent, spec)
        return expression_family(spec.expression, grid, tgrid, spec.weight, spec.weights, spec.name)
    grid = _grid(cfg, spec.d, False, spec)
    if spec.family == "sqrt":
        return sqrt_family(grid, tgrid)
    return log_kernel_family(grid, tgrid, spec.cutoff_radius)


def load_operator(path: str) -> Tuple[OperatorSpec, FilteredDiffOp]:
    spec, resolved = load_spec(path, OperatorSpec)
    return spec, build_operator(spec, resolved.parent)


def load_family(path: str, cfg: RunConfig) -> Tuple[Any, SymbolFamily]:
    """A symbol family from either a symbol spec or an operator spec."""
    spec, resolved = load_spec(path)
    if isinstance(spec, OperatorSpec):
        return spec, operator_family(build_operator(spec, resolved.parent), cfg, spec.name)
    if isinstance(spec, SymbolSpec):
        return spec, build_family(spec, cfg, resolved.parent)
    raise MalformedInputError(f"expected a symbol or operator spec, got kind {spec.kind!r}", location=path)


def _require_inputs(cfg: RunConfig, count: int) -> List[str]:
    if len(cfg.inputs) != count:
        raise MalformedInputError(f"{cfg.command} takes {count} input file(s), got {len(cfg.inputs)}")
    return list(cfg.inputs)


def _seminorm_rows(entries) -> List[Sequence[Any]]:
    return [
        (" ".join(map(str, e.a)), " ".join(map(str, e.b)), e.k, e.slope, e.tail_slope, e.bound, e.passed)
        for e in entries
    ]


SEMINORM_HEADER = ("a", "b", "k", "slope", "tail_slope", "bound", "passed")


# Commands

def _random_fraction(rng: np.random.Generator) -> Fraction:
    return Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 6)))


def validate_algebra_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    spec, _ = load_spec(path, AlgebraSpec)
    alg = build_algebra(spec)
    report = validate(alg)
    metrics: Dict[str, Any] = {
        "algebra": alg.name, "dim": alg.dim, "step": alg.step,
        "homogeneous_dimension": alg.homogeneous_dimension, "validation": report.model_dump(),
    }
    lines = [f"{'✓' if report.ok else '❌'} structure identities: {report.violation or 'ok'}"]
    if not report.ok:
        return CommandResult(False, metrics, lines=lines)

    rng = np.random.default_rng(cfg.seed)
    assoc_failures = dilation_failures = 0
    for _ in range(ALGEBRA_SWEEP):
        a, b, c = ([_random_fraction(rng) for _ in range(alg.dim)] for _ in range(3))
        left = bch_multiply(alg, bch_multiply(alg, a, b), c)
        right = bch_multiply(alg, a, bch_multiply(alg, b, c))
        if tuple(left) != tuple(right):
            assoc_failures += 1
        lam = Fraction(int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        if tuple(dilate(alg, lam, bch_multiply(alg, a, b))) != tuple(
            bch_multiply(alg, dilate(alg, lam, a), dilate(alg, lam, b))
        ):
            dilation_failures += 1
    metrics.update({
        "sweep_triples": ALGEBRA_SWEEP, "associativity_failures": assoc_failures,
        "dilation_failures": dilation_failures,
    })
    passed = assoc_failures == 0 and dilation_failures == 0
    lines.append(f"{'✓' if assoc_failures == 0 else '❌'} BCH associativity on {ALGEBRA_SWEEP} rational triples")
    lines.append(f"{'✓' if dilation_failures == 0 else '❌'} dilations are group automorphisms")
    return CommandResult(passed, metrics, lines=lines)


def check_filtration_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    spec, _ = load_spec(path, PatchSpec)
    patch = build_patch(spec)
    report = check_filtration(patch)
    metrics: Dict[str, Any] = {"patch": patch.name, "orders": list(patch.orders), "depth": patch.depth,
                               "filtration": report.model_dump()}
    rows = [(key, " ; ".join(values)) for key, values in sorted(report.brackets.items())]
    tables = {"brackets.csv": (("pair", "frame_coefficients"), rows)}
    lines = [f"{'✓' if report.ok else '❌'} filtration closure: {report.message or 'ok'}"]
    if not report.ok:
        return CommandResult(False, metrics, tables, lines=lines)

    centre = [0.5 * (lo + hi) for lo, hi in patch.extent]
    fibre = osculating_at(patch, centre)
    nonzero = {
        f"{i},{j}->{k}": str(c)
        for i, plane in enumerate(fibre.algebra.structure_constants)
        for j, row in enumerate(plane) if i < j
        for k, c in enumerate(row) if c != 0
    }
    injectivity = sample_injectivity(patch, centre, seed=cfg.seed)
    metrics.update({
        "base_point": centre, "osculating_brackets": nonzero,
        "injectivity": injectivity.model_dump(),
    })
    lines.append(f"✓ osculating algebra at {centre}: {len(nonzero)} nonzero bracket(s)")
    lines.append(f"{'✓' if injectivity.ok else '❌'} exponential chart injective on {injectivity.samples} samples")
    return CommandResult(injectivity.ok, metrics, tables, lines=lines)


def cosymbol_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    spec, op = load_operator(path)
    sigma = principal_cosymbol(op)
    family = kernel_family(op)
    nose = is_homogeneous_on_nose(family, sigma.weight)
    metrics = {
        "operator": format_operator(op), "h_order": op.h_order, "cosymbol": format_cosymbol(sigma),
        "kernel_family": format_kernel_family(family), "nose_homogeneous": nose,
    }
    lines = [
        f"✓ sigma_{sigma.weight}({spec.name}) = {metrics['cosymbol']}",
        f"{'✓' if nose else '❌'} kernel family homogeneous on the nose at order {sigma.weight}",
    ]
    return CommandResult(nose, metrics, lines=lines)


def _test_function(patch: FilteredPatch) -> sympy.Expr:
    coords = patch.coords
    linear = sum(sympy.Rational(k + 1, 3) * x for k, x in enumerate(coords))
    return sympy.exp(linear) + sum(x ** 2 for x in coords)


def compose_command(cfg: RunConfig) -> CommandResult:
    first, second = _require_inputs(cfg, 2)
    _, A = load_operator(first)
    _, B = load_operator(second)
    C = compose(A, B)
    sa, sb = principal_cosymbol(A), principal_cosymbol(B)
    product = cosymbol_compose(sa, sb)
    top = sa.weight + sb.weight
    sigma = principal_cosymbol(C, order=top)
    difference = {a: sympy.simplify(dict(product.terms).get(a, 0) - dict(sigma.terms).get(a, 0))
                  for a in set(dict(product.terms)) | set(dict(sigma.terms))}
    morphism = all(v == 0 for v in difference.values())
    cancelled = product.is_zero()
    order_drop = cancelled and (C.h_order is None or C.h_order < top)
    f = _test_function(A.patch)
    sequential = sympy.simplify(apply_operator(C, f) - apply_operator(A, apply_operator(B, f))) == 0
    metrics = {
        "composition": format_operator(C), "h_order": C.h_order, "expected_order": top,
        "cosymbol_product": format_cosymbol(product), "cosymbol_of_composition": format_cosymbol(sigma),
        "morphism": morphism, "cancelled": cancelled, "order_drop": order_drop,
        "matches_sequential_application": sequential,
    }
    passed = morphism and sequential and (order_drop or not cancelled)
    lines = [
        f"{'✓' if morphism else '❌'} sigma(AB) = sigma(A) sigma(B)" + (" (cancellation, order drops)" if cancelled else ""),
        f"{'✓' if sequential else '❌'} composition agrees with sequential application",
    ]
    return CommandResult(passed, metrics, lines=lines)


def _cocycle_rows(family: SymbolFamily, expected_log: bool) -> Tuple[List[Sequence[Any]], float]:
    rows, worst = [], 0.0
    for lam in ZOOM_LAMBDAS:
        value = cocycle(family, lam, max_degree=0, max_k=0).zero_frequency(1.0)
        expected = -math.log(lam) / lam * family.grid.volume if expected_log else None
        error = None
        if expected is not None:
            error = abs(value - expected) / abs(expected)
            worst = max(worst, error)
        rows.append((lam, value.real, value.imag, expected, error))
    return rows, worst


def zoom_test_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    spec, family = load_family(path, cfg)
    m = getattr(spec, "homogeneous_weight", None)
    homogeneity = essential_homogeneity_test(family, m)
    decay = decay_report(family)
    is_log = isinstance(spec, SymbolSpec) and spec.family == "log_kernel" and spec.cutoff_radius is None
    rows, worst = _cocycle_rows(family, is_log)
    metrics: Dict[str, Any] = {
        "family": family.name, "weight": homogeneity.weight, "homogeneity": homogeneity.model_dump(),
        "decay_passed": decay.passed,
        "cocycle_zero_frequency": [{"lam": r[0], "re": r[1], "im": r[2], "expected": r[3]} for r in rows],
    }
    passed = homogeneity.passed and decay.passed
    lines = [
        f"{'✓' if homogeneity.passed else '❌'} essentially homogeneous of weight {homogeneity.weight:g}",
        f"{'✓' if decay.passed else '❌'} decay exponents within m + |a| - |b| - k + {decay.slack:g}",
    ]
    if is_log:
        ok = worst <= cfg.tol
        metrics["cocycle_relative_error"] = worst
        passed = passed and ok
        lines.append(f"{'✓' if ok else '❌'} log-kernel cocycle -log(lam)/lam * volume (rel. error {worst:.2e})")
    order = regularity_order(family)
    metrics["regularity"] = None
    if order is not None and family.source is not None:
        regularity = regularity_check(family.source, family.grid, order)
        metrics["regularity"] = regularity.model_dump()
        passed = passed and regularity.passed
        lines.append(
            f"{'✓' if regularity.passed else '❌'} kernel C^{order} under refinement (growth {regularity.growth:.3g})"
        )
    tables = {
        "homogeneity.csv": (("lam", "skipped", "passed", "worst_tail_slope"),
                            [(c.lam, c.skipped, c.passed, c.worst_tail_slope) for c in homogeneity.checks]),
        "decay.csv": (SEMINORM_HEADER, _seminorm_rows(decay.entries)),
        "cocycle.csv": (("lam", "re", "im", "expected", "relative_error"), rows),
    }
    return CommandResult(passed, metrics, tables, lines=lines)


def expand_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    _, family = load_family(path, cfg)
    expansion = extract_expansion(family, terms=cfg.terms)
    report = expansion_report(expansion)
    rows = [
        (j, w, o, b, e) for j, (w, o, b, e) in enumerate(zip(
            report.term_weights, report.remainder_orders, report.remainder_bounds,
            report.extrapolation_discrepancies,
        ))
    ]
    arrays = {f"term_{j}.bin": term for j, term in enumerate(expansion.terms)}
    lines = [f"✓ extracted {len(expansion.terms)} term(s) of weights {report.term_weights}"]
    lines.append(f"{'✓' if report.passed else '❌'} remainder orders {report.remainder_orders}")
    tables = {"expansion.csv": (("term", "weight", "remainder_order", "bound", "extrapolation_discrepancy"), rows)}
    return CommandResult(report.passed, {"family": family.name, "expansion": report.model_dump()}, tables, arrays, lines)


def _analytic_rhs(grid: TorusGrid) -> np.ndarray:
    x = np.arange(grid.n_eta) * grid.period / grid.n_eta
    return np.exp(np.cos(x)).astype(complex)


def parametrix_command(cfg: RunConfig) -> CommandResult:
    (path,) = _require_inputs(cfg, 1)
    _, family = load_family(path, cfg)
    state = parametrix(family, k=cfg.k)
    report = state.report()
    metrics: Dict[str, Any] = {"family": family.name, "parametrix": report.model_dump()}
    rows = list(zip(report.shells, report.right_sups, report.left_sups))
    tables = {"residual_shells.csv": (("shell", "right_sup", "left_sup"), rows)}
    lines = [
        f"{'✓' if report.passed else '❌'} residual orders right {report.right_order}, "
        f"left {report.left_order} (bound {report.bound} + slack)",
    ]
    passed = report.passed
    if family.grid.d == 1:
        demo = hypoellipticity_demo(family, _analytic_rhs(family.grid), k=cfg.k, tol=cfg.tol)
        metrics["hypoellipticity"] = demo.model_dump()
        tables["parametrix_residual.csv"] = (
            ("shell", "residual_sup"), list(zip(demo.parametrix_residual_shells, demo.parametrix_residual_sups))
        )
        tables["solve_residual.csv"] = (("shell", "residual_sup"), list(zip(demo.residual_shells, demo.residual_sups)))
        passed = passed and demo.passed
        lines.append(f"{'✓' if demo.parametrix_residual_tail < cfg.tol else '❌'} f - P Q'f smooth: "
                     f"tail {demo.parametrix_residual_tail:.2e} (u = Q'f off by {demo.parametrix_relative_error:.2e})")
        lines.append(f"{'✓' if demo.passed else '❌'} refined P u = f solve: relative error "
                     f"{demo.relative_error:.2e}, residual tail {demo.residual_tail:.2e}")
    return CommandResult(passed, metrics, tables, {"parametrix.bin": state.Q}, lines)


def demo_heisenberg_command(cfg: RunConfig) -> CommandResult:
    report = heisenberg_report(tol=HEISENBERG_TOL)
    op = sublaplacian(PATCH_CATALOG["heis"]())
    family = family_from_operator(op, _grid(cfg, 3, False), _tgrid(cfg), "heis_sublaplacian")
    gamma = invert_cosymbol(cosymbol_limit(family), filtration="heisenberg")
    homogeneity = essential_homogeneity_test(family)
    axis, values = gamma.tabulate(n=17)
    rows = [
        (float(axis[i]), float(axis[j]), float(axis[k]), float(values[i, j, k]))
        for i in range(axis.size) for j in range(axis.size) for k in range(axis.size)
    ]
    passed = report.passed and homogeneity.passed
    metrics = {"heisenberg": report.model_dump(), "symbol_homogeneity": homogeneity.passed}
    lines = [
        f"✓ fundamental solution constant {report.constant:.10g} (weak-form mass oracle)",
        f"{'✓' if report.residual_max < HEISENBERG_TOL else '❌'} |L Gamma| max {report.residual_max:.2e} "
        f"on {report.residual_points} points",
        f"{'✓' if report.homogeneity_error < 1e-10 else '❌'} Gamma homogeneous of weight {gamma.weight}",
        f"{'✓' if (report.convolution_error or 0.0) < HEISENBERG_TOL else '❌'} "
        f"L(f * Gamma) = f, max error {report.convolution_error:.2e}",
        f"{'✓' if homogeneity.passed else '❌'} sublaplacian symbol family essentially homogeneous",
    ]
    return CommandResult(passed, metrics, {"gamma.csv": (("x", "y", "z", "gamma"), rows)}, lines=lines)


def demo_log_kernel_command(cfg: RunConfig) -> CommandResult:
    grid = _grid(cfg, 1, False)
    tgrid = _tgrid(cfg)
    uncut = log_kernel_family(grid, tgrid)
    cut = log_kernel_family(grid, tgrid, cutoff_radius=LOG_KERNEL_CUTOFF)
    rows, worst = _cocycle_rows(uncut, True)
    homogeneity = essential_homogeneity_test(cut)
    local_cut = pseudolocality_report(cut)
    local_uncut = pseudolocality_report(uncut)
    cocycle_ok = worst <= cfg.tol
    passed = cocycle_ok and homogeneity.passed and local_cut.passed
    metrics = {
        "cocycle_relative_error": worst,
        "cocycle_zero_frequency": [{"lam": r[0], "re": r[1], "im": r[2], "expected": r[3]} for r in rows],
        "cut_homogeneity": homogeneity.model_dump(),
        "cut_pseudolocality": local_cut.model_dump(),
        "uncut_pseudolocality": local_uncut.model_dump(),
    }
    lines = [
        f"{'✓' if cocycle_ok else '❌'} cocycle zero frequency -log(lam)/lam * volume (rel. error {worst:.2e})",
        f"{'✓' if homogeneity.passed else '❌'} cut-off log kernel essentially homogeneous of weight -1",
        f"{'✓' if local_cut.passed else '❌'} cut-off log kernel smooth off the diagonal",
        f"{'✓' if not local_uncut.passed else '·'} uncut kernel flagged by the off-diagonal test",
    ]
    tables = {
        "cocycle.csv": (("lam", "re", "im", "expected", "relative_error"), rows),
        "pseudolocality.csv": (
            ("kernel", "laplacian_power", "slope", "bound", "passed"),
            [("cut", e.order, e.slope, e.bound, e.passed) for e in local_cut.entries]
            + [("uncut", e.order, e.slope, e.bound, e.passed) for e in local_uncut.entries],
        ),
    }
    return CommandResult(passed, metrics, tables, lines=lines)


COMMAND_REGISTRY: Dict[str, Callable[[RunConfig], CommandResult]] = {
    "validate-algebra": validate_algebra_command,
    "check-filtration": check_filtration_command,
    "cosymbol": cosymbol_command,
    "compose": compose_command,
    "zoom-test": zoom_test_command,
    "expand": expand_command,
    "parametrix": parametrix_command,
    "demo-heisenberg": demo_heisenberg_command,
    "demo-log-kernel": demo_log_kernel_command,
}


def _config_echo(cfg: RunConfig) -> Dict[str, Any]:
    return cfg.model_dump(exclude={"out", "verbose", "inputs", "command"})


def _write(cfg: RunConfig, result: CommandResult, error: Optional[Dict[str, Any]] = None) -> Path:
    out_dir = Path(cfg.out) / safe_name(cfg.command)
    summary = {
        "command": cfg.command, "inputs": [Path(p).name for p in cfg.inputs], "passed": result.passed,
        "metrics": result.metrics, "config": _config_echo(cfg),
    }
    if error is not None:
        summary["error"] = error
    with artifact_transaction(out_dir) as stage:
        write_json(stage / "summary.json", summary)
        for name, (header, rows) in result.tables.items():
            write_csv(stage / name, header, rows)
        for name, data in result.arrays.items():
            write_array(stage / name, data)
    return out_dir / "summary.json"


def run(cfg: RunConfig) -> int:
    """Run one command; returns the process exit status."""
    body = COMMAND_REGISTRY[cfg.command]
    logger.info("running %s on %s", cfg.command, cfg.inputs)
    try:
        result = body(cfg)
    except (ValidationError, json.JSONDecodeError, MalformedInputError) as exc:
        location = getattr(exc, "location", None)
        print(f"❌ input error{f' in {location}' if location else ''}: {exc}")
        return 2
    except CalculusError as exc:
        error = {"type": type(exc).__name__, "message": str(exc)}
        for attribute in ("witness", "diagnostics", "fitted_slope", "errors", "point"):
            if hasattr(exc, attribute):
                error[attribute] = getattr(exc, attribute)
        report = _write(cfg, CommandResult(False, {}), error)
        print(f"❌ {cfg.command} failed: {exc}")
        print(f"   report: {report}")
        return 1
    report = _write(cfg, result)
    for line in result.lines:
        print(line)
    if result.passed:
        print(f"✅ {cfg.command} passed ({report})")
        return 0
    print(f"❌ {cfg.command} failed, report: {report}")
    return 1
