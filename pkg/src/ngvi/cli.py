"""Command-line front end: problem ingestion, runs, and verification suites.

Problem files are versioned JSON (schema tag ``ngvi-problem/1``). A run
writes three files into the output directory, each atomically
(write-then-rename):

* ``trace.txt``    -- per-iteration rows: iter, value, grad norm, accepted, converged
* ``estimate.txt`` -- final mean and vech(precision), 17 significant digits
* ``manifest.json``-- resolved configuration, seed, wall time, exit status

Exit codes: 0 converged, 2 iteration budget exhausted, 1 any error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ._testing import random_gaussian, random_spd, random_symmetric, random_well_conditioned
from .factors import Factor, FactorGraph, SparsityError, optimize_factored
from .fim import PARAM_TAGS, fd_kl_hessian, fim, fim_inverse, reduce_to_unique
from .gaussian import (
    MeanCovariance,
    MeanPrecision,
    NaturalForm,
    NotPositiveDefiniteError,
    convert,
)
from .kronmat import SymmetricMatrix, duplication, half_len, kron, matf, sym, vec
from .ngd import ConfigError, IndefiniteHessianError, NgdConfig, natural_delta, step_hybrid
from .quadrature import EvaluationError, ExpectationRule
from .vloss import LossFunctional, derivatives, fd_check

__all__ = ["main", "load_problem", "parse_estimate", "build_phi", "ProblemSpec"]

SCHEMA = "ngvi-problem/1"
ESTIMATE_SCHEMA = "ngvi-estimate/1"

PHI_KINDS = ("gaussian_quadratic", "logistic_bernoulli", "nonlinear_range", "polynomial")


class ProblemError(ValueError):
    """A problem file is malformed or internally inconsistent."""


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    dimension: int
    init: MeanPrecision
    graph: FactorGraph
    rule: ExpectationRule
    config: NgdConfig


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# phi construction


def build_phi(kind: str, params: dict, n_indices: int, factor_id: str):
    """Build the scalar loss term of one factor from its serialized form."""
    if kind == "gaussian_quadratic":
        m = np.asarray(params["m"], dtype=float).reshape(-1)
        p = np.asarray(params["P"], dtype=float)
        if m.shape[0] != n_indices or p.shape != (n_indices, n_indices):
            raise ProblemError(
                f"factor {factor_id!r}: gaussian_quadratic parameters do not "
                f"match its {n_indices} indices"
            )
        if np.max(np.abs(p - p.T)) > 1e-12 * max(1.0, np.max(np.abs(p))):
            raise ProblemError(f"factor {factor_id!r}: P must be symmetric")

        def phi(u: np.ndarray) -> float:
            d = u - m
            return float(0.5 * d @ p @ d)

        return phi
    if kind == "logistic_bernoulli":
        a = np.asarray(params["feature"], dtype=float).reshape(-1)
        y = int(params["label"])
        if a.shape[0] != n_indices:
            raise ProblemError(
                f"factor {factor_id!r}: feature length {a.shape[0]} does not "
                f"match its {n_indices} indices"
            )
        if y not in (0, 1):
            raise ProblemError(f"factor {factor_id!r}: label must be 0 or 1")

        def phi(u: np.ndarray) -> float:
            t = float(a @ u)
            return float(np.logaddexp(0.0, t) - y * t)

        return phi
    if kind == "nonlinear_range":
        distance = float(params["distance"])
        variance = float(params["variance"])
        if variance <= 0:
            raise ProblemError(f"factor {factor_id!r}: variance must be positive")
        landmark = params.get("landmark")
        if landmark is not None:
            point = np.asarray(landmark, dtype=float).reshape(-1)
            if point.shape[0] != 2 or n_indices != 2:
                raise ProblemError(
                    f"factor {factor_id!r}: fixed-landmark range factors take "
                    f"2 indices and a 2-vector landmark"
                )

            def phi(u: np.ndarray) -> float:
                r = float(np.hypot(u[0] - point[0], u[1] - point[1]))
                return (r - distance) ** 2 / (2.0 * variance)

            return phi
        if n_indices != 4:
            raise ProblemError(
                f"factor {factor_id!r}: variable-landmark range factors take "
                f"4 indices (position pair, landmark pair)"
            )

        def phi(u: np.ndarray) -> float:
            r = float(np.hypot(u[0] - u[2], u[1] - u[3]))
            return (r - distance) ** 2 / (2.0 * variance)

        return phi
    if kind == "polynomial":
        coeffs = np.asarray(params["coefficients"], dtype=float).reshape(-1)
        if n_indices != 1:
            raise ProblemError(f"factor {factor_id!r}: polynomial factors take 1 index")

        def phi(u: np.ndarray) -> float:
            return float(np.polynomial.polynomial.polyval(u[0], coeffs))

        return phi
    raise ProblemError(f"factor {factor_id!r}: unknown phi kind {kind!r}")


# ---------------------------------------------------------------------------
# problem parsing


def _parse_init(raw: dict, dimension: int) -> MeanPrecision:
    form = raw.get("form")
    mean = np.asarray(raw.get("mean", []), dtype=float).reshape(-1)
    half = np.asarray(raw.get("matrix_vech", []), dtype=float).reshape(-1)
    if mean.shape[0] != dimension:
        raise ProblemError(
            f"field 'init.mean': length {mean.shape[0]} != dimension {dimension}"
        )
    if half.shape[0] != half_len(dimension):
        raise ProblemError(
            f"field 'init.matrix_vech': length {half.shape[0]} != "
            f"{half_len(dimension)} for dimension {dimension}"
        )
    matrix = SymmetricMatrix(dimension, half)
    if form == "mean_covariance":
        return convert(MeanCovariance(mean, matrix), "mean_prec")
    if form == "mean_precision":
        return MeanPrecision(mean, matrix)
    if form == "natural":
        return convert(NaturalForm(mean, matrix), "mean_prec")
    raise ProblemError(f"field 'init.form': unknown form {form!r}")


def parse_problem(raw: dict, name: str = "<unnamed>") -> ProblemSpec:
    if raw.get("schema") != SCHEMA:
        raise ProblemError(
            f"field 'schema': expected {SCHEMA!r}, found {raw.get('schema')!r}"
        )
    try:
        dimension = int(raw["dimension"])
    except KeyError:
        raise ProblemError("field 'dimension' is missing") from None
    if dimension < 1:
        raise ProblemError("field 'dimension' must be a positive integer")
    init = _parse_init(raw.get("init", {}), dimension)

    factors = []
    for entry in raw.get("factors", []):
        factor_id = entry.get("id")
        if not factor_id:
            raise ProblemError("every factor needs a nonempty 'id'")
        indices = [int(i) for i in entry.get("indices", [])]
        if any(i < 0 or i >= dimension for i in indices):
            raise ProblemError(
                f"factor {factor_id!r}: index out of range for dimension {dimension}"
            )
        phi_raw = dict(entry.get("phi", {}))
        kind = phi_raw.pop("kind", None)
        phi = build_phi(kind, phi_raw, len(indices), factor_id)
        try:
            factors.append(Factor(factor_id, tuple(indices), phi))
        except ValueError as exc:
            raise ProblemError(str(exc)) from None
    if not factors:
        raise ProblemError("field 'factors': at least one factor is required")
    graph = FactorGraph(dimension, tuple(factors))

    rule_raw = raw.get("rule", {})
    try:
        rule = ExpectationRule(
            kind=rule_raw.get("kind", "gauss_hermite"),
            order=int(rule_raw.get("order", 5)),
            seed=int(rule_raw.get("seed", 0)),
        )
    except ValueError as exc:
        raise ProblemError(f"field 'rule': {exc}") from None

    cfg_raw = raw.get("config", {})
    try:
        config = NgdConfig(
            max_iters=int(cfg_raw.get("max_iters", 100)),
            rel_tol=float(cfg_raw.get("rel_tol", 1e-9)),
            step_scale=float(cfg_raw.get("step_scale", 1.0)),
            jitter=float(cfg_raw.get("jitter", 0.0)),
            rule=rule,
        )
    except ConfigError as exc:
        raise ProblemError(f"field 'config': {exc}") from None

    return ProblemSpec(
        name=raw.get("name", name),
        dimension=dimension,
        init=init,
        graph=graph,
        rule=rule,
        config=config,
    )


def bundled_problem_names() -> list[str]:
    root = resources.files("ngvi") / "problems"
    return sorted(path.name[: -len(".json")] for path in root.iterdir() if path.name.endswith(".json"))


def load_problem(spec_arg: str) -> ProblemSpec:
    """Load a problem from a file path or a bundled problem name."""
    if os.path.exists(spec_arg):
        with open(spec_arg, encoding="utf-8") as handle:
            raw = json.load(handle)
        return parse_problem(raw, name=os.path.basename(spec_arg))
    bundled = resources.files("ngvi") / "problems" / f"{spec_arg}.json"
    if bundled.is_file():
        return parse_problem(json.loads(bundled.read_text(encoding="utf-8")), name=spec_arg)
    raise ProblemError(
        f"no such problem file {spec_arg!r}; bundled problems: {bundled_problem_names()}"
    )


# ---------------------------------------------------------------------------
# output files


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(text)
    os.replace(tmp, path)


def write_trace(path: str, trace) -> None:
    lines = ["# iter\tvalue\tgrad_norm\taccepted\tconverged"]
    last = len(trace.records) - 1
    for i, rec in enumerate(trace.records):
        converged = 1 if (trace.converged and i == last) else 0
        lines.append(
            f"{rec.iteration}\t{_fmt(rec.value)}\t{_fmt(rec.grad_norm)}"
            f"\t{int(rec.accepted)}\t{converged}"
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_estimate(path: str, q: MeanPrecision) -> None:
    lines = [
        f"# {ESTIMATE_SCHEMA}",
        f"# dimension {q.dim}",
        "mean " + " ".join(_fmt(x) for x in q.mean),
        "prec_vech " + " ".join(_fmt(x) for x in q.prec.half),
    ]
    _atomic_write(path, "\n".join(lines) + "\n")


def parse_estimate(path: str) -> MeanPrecision:
    mean = None
    half = None
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            values = np.array([float(tok) for tok in rest.split()])
            if key == "mean":
                mean = values
            elif key == "prec_vech":
                half = values
    if mean is None or half is None:
        raise ProblemError(f"estimate file {path!r} is missing mean or prec_vech")
    return MeanPrecision(mean, SymmetricMatrix(mean.shape[0], half))


# ---------------------------------------------------------------------------
# run command


def _apply_overrides(spec: ProblemSpec, args) -> ProblemSpec:
    rule = spec.rule
    if args.rule is not None or args.order is not None or args.seed is not None:
        rule = ExpectationRule(
            kind=args.rule if args.rule is not None else rule.kind,
            order=args.order if args.order is not None else rule.order,
            seed=args.seed if args.seed is not None else rule.seed,
            point_budget=rule.point_budget,
        )
    cfg = spec.config
    config = NgdConfig(
        max_iters=args.max_iters if args.max_iters is not None else cfg.max_iters,
        rel_tol=args.rel_tol if args.rel_tol is not None else cfg.rel_tol,
        step_scale=args.step_scale if args.step_scale is not None else cfg.step_scale,
        jitter=args.jitter if args.jitter is not None else cfg.jitter,
        rule=rule,
    )
    return ProblemSpec(spec.name, spec.dimension, spec.init, spec.graph, rule, config)


def run_command(args) -> int:
    try:
        spec = load_problem(args.problem)
        spec = _apply_overrides(spec, args)
    except json.JSONDecodeError as exc:
        print(f"error: problem file is not valid JSON (line {exc.lineno}): {exc.msg}", file=sys.stderr)
        return 1
    except (ProblemError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.output, exist_ok=True)
    started = time.perf_counter()
    try:
        q_final, trace = optimize_factored(spec.graph, spec.init, spec.config)
    except IndefiniteHessianError as exc:
        iteration = len(exc.trace.records) if exc.trace is not None else 0
        print(f"error at iteration {iteration}: {exc}", file=sys.stderr)
        return 1
    except (SparsityError, NotPositiveDefiniteError, EvaluationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    wall = time.perf_counter() - started

    write_trace(os.path.join(args.output, "trace.txt"), trace)
    write_estimate(os.path.join(args.output, "estimate.txt"), q_final)
    manifest = {
        "schema": "ngvi-manifest/1",
        "problem": spec.name,
        "dimension": spec.dimension,
        "rule": {"kind": spec.rule.kind, "order": spec.rule.order, "seed": spec.rule.seed},
        "config": {
            "max_iters": spec.config.max_iters,
            "rel_tol": spec.config.rel_tol,
            "step_scale": spec.config.step_scale,
            "jitter": spec.config.jitter,
        },
        "iterations": len(trace.records),
        "converged": trace.converged,
        "wall_time_s": wall,
    }
    _atomic_write(
        os.path.join(args.output, "manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )
    if not trace.converged:
        print(
            f"did not converge within {spec.config.max_iters} iterations", file=sys.stderr
        )
        return 2
    return 0


# ---------------------------------------------------------------------------
# verification suites


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.residual <= self.tol


def _resid(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def kron_checks(trials: int = 10, seed: int = 20240317) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for n in range(1, 6):
        pair = duplication(n)
        d, dp = pair.dup, pair.pinv
        worst = {key: 0.0 for key in ("dup1", "dup2", "dup3", "dup4", "sym", "mixed", "inverse", "transpose", "det", "trace", "quadform", "vec_abc")}
        for _ in range(trials):
            a = random_well_conditioned(n, rng)
            b = random_well_conditioned(n, rng)
            c = random_well_conditioned(n, rng)
            s = random_spd(n, rng)
            worst["dup1"] = max(worst["dup1"], _resid(dp @ d, np.eye(half_len(n))))
            worst["dup2"] = max(worst["dup2"], _resid(dp.T @ d.T, d @ dp))
            worst["dup3"] = max(worst["dup3"], _resid(d @ dp @ vec(s), vec(s)))
            worst["dup4"] = max(worst["dup4"], _resid(d @ dp @ kron(a, a) @ d, kron(a, a) @ d))
            worst["sym"] = max(worst["sym"], _resid(d @ d.T @ vec(a), vec(sym(a))))
            worst["mixed"] = max(worst["mixed"], _resid(kron(a, b) @ kron(c, s), kron(a @ c, b @ s)))
            worst["inverse"] = max(
                worst["inverse"],
                _resid(np.linalg.inv(kron(a, b)), kron(np.linalg.inv(a), np.linalg.inv(b))),
            )
            worst["transpose"] = max(worst["transpose"], _resid(kron(a, b).T, kron(a.T, b.T)))
            det_expected = np.linalg.det(a) ** n * np.linalg.det(b) ** n
            worst["det"] = max(
                worst["det"],
                abs(np.linalg.det(kron(a, b)) - det_expected) / max(1.0, abs(det_expected)),
            )
            worst["trace"] = max(worst["trace"], abs(np.trace(kron(a, b)) - np.trace(a) * np.trace(b)))
            u = rng.standard_normal(n)
            w = rng.standard_normal(n)
            worst["quadform"] = max(
                worst["quadform"],
                abs(float(u @ b @ c @ b.T @ w) - float(vec(b) @ kron(c.T, np.outer(w, u)) @ vec(b))),
            )
            worst["vec_abc"] = max(worst["vec_abc"], _resid(vec(a @ b @ c), kron(c.T, a) @ vec(b)))
        for key, value in worst.items():
            results.append(CheckResult(f"kron/dim{n}/{key}", value, 1e-12))
    return results


def fim_checks(seed: int = 20240318) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for tag in PARAM_TAGS:
        for n in (1, 2, 3):
            g = random_gaussian(n, rng)
            closed = fim(g, tag).matrix
            numeric = fd_kl_hessian(g, tag, step=1e-3)
            closed_r = reduce_to_unique(closed, tag, n)
            numeric_r = reduce_to_unique(numeric, tag, n)
            rel = float(np.linalg.norm(numeric_r - closed_r) / np.linalg.norm(closed_r))
            results.append(CheckResult(f"fim/{tag}/n{n}/fd_hessian", rel, 1e-4))
            product = fim_inverse(g, tag).matrix @ closed
            resid = float(np.max(np.abs(product - np.eye(product.shape[0]))))
            results.append(CheckResult(f"fim/{tag}/n{n}/inverse", resid, 1e-9))
    return results


def deriv_checks(seed: int = 20240319) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    n = 2
    g = MeanPrecision.from_dense(rng.standard_normal(n), random_spd(n, rng))

    # quartic loss, exact under order-7 quadrature
    def quartic(x: np.ndarray) -> float:
        return float(0.25 * np.sum(x**4) + 0.5 * x @ x + x[0] * x[1])

    loss = LossFunctional(n, quartic)
    rule = ExpectationRule("gauss_hermite", 7)
    bundle = derivatives(loss, g, rule)
    sigma = np.linalg.inv(g.prec.full())
    sigma = 0.5 * (sigma + sigma.T)
    relation = 0.5 * sigma - 0.5 * sigma @ bundle.hess_mu.full() @ sigma
    results.append(
        CheckResult(
            "deriv/relation/quartic",
            float(np.max(np.abs(bundle.grad_prec.full() - relation))),
            1e-8,
        )
    )

    def quadratic(x: np.ndarray) -> float:
        d = x - np.array([0.3, -0.2])
        return float(0.5 * d @ np.array([[2.0, 0.5], [0.5, 1.5]]) @ d)

    report = fd_check(LossFunctional(n, quadratic), g, ExpectationRule("gauss_hermite", 5))
    worst = max(report.grad_mu_error, report.hess_mu_error, report.grad_prec_error)
    results.append(CheckResult("deriv/fd/quadratic", worst, 1e-5))

    g1 = MeanPrecision.from_dense([0.4], [[1.8]])
    report = fd_check(
        LossFunctional(1, lambda x: float(np.cos(x[0]))),
        g1,
        ExpectationRule("gauss_hermite", 15),
    )
    worst = max(report.grad_mu_error, report.hess_mu_error, report.grad_prec_error)
    results.append(CheckResult("deriv/fd/cosine", worst, 1e-6))
    return results


def ngd_checks(trials: int = 20, seed: int = 20240320) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    worst_canon = 0.0
    worst_hybrid = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 4))
        g = random_gaussian(n, rng)
        grad_mu = rng.standard_normal(n)
        grad_matrix = 1e-2 * random_symmetric(n, rng)
        dpair = duplication(n)
        blind = np.concatenate([grad_mu, vec(grad_matrix)])
        aware = np.concatenate([grad_mu, dpair.dup.T @ vec(grad_matrix)])
        delta_blind = natural_delta(g, "theta", blind)[n:].reshape((n, n), order="F")
        delta_aware = matf(natural_delta(g, "gamma", aware)[n:], n).full()
        worst_canon = max(worst_canon, _resid(delta_blind, delta_aware))
        delta_blind = natural_delta(g, "alpha", blind)[n:].reshape((n, n), order="F")
        delta_aware = matf(natural_delta(g, "beta", aware)[n:], n).full()
        worst_hybrid = max(worst_hybrid, _resid(delta_blind, delta_aware))
    results.append(CheckResult("ngd/equivalence/canonical", worst_canon, 1e-10))
    results.append(CheckResult("ngd/equivalence/hybrid", worst_hybrid, 1e-10))

    # one-step exactness on a quadratic loss
    n = 3
    target_prec = random_spd(n, rng)
    target_mean = rng.standard_normal(n)

    def phi(x: np.ndarray) -> float:
        d = x - target_mean
        return float(0.5 * d @ target_prec @ d)

    loss = LossFunctional(n, phi)
    q0 = MeanPrecision.from_dense(rng.standard_normal(n), random_spd(n, rng))
    bundle = derivatives(loss, q0, ExpectationRule("gauss_hermite", 5))
    q1 = step_hybrid(q0, bundle)
    resid = max(_resid(q1.mean, target_mean), _resid(q1.prec.full(), target_prec))
    results.append(CheckResult("ngd/one_step_exactness", resid, 1e-10))
    return results


_SCOPES = {
    "kron": kron_checks,
    "fim": fim_checks,
    "deriv": deriv_checks,
    "ngd": ngd_checks,
}


def verify_command(args) -> int:
    scopes = list(_SCOPES) if args.scope == "all" else [args.scope]
    all_ok = True
    for scope in scopes:
        for result in _SCOPES[scope]():
            status = "PASS" if result.ok else "FAIL"
            print(f"{status} {result.name}: residual={result.residual:.3e} tol={result.tol:.1e}")
            all_ok = all_ok and result.ok
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ngvi",
        description="Natural-gradient Gaussian variational inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="optimize a problem file")
    run.add_argument("problem", help="problem file path or bundled problem name")
    run.add_argument("--output", "-o", default=".", help="output directory")
    run.add_argument("--rule", choices=("gauss_hermite", "monte_carlo"))
    run.add_argument("--order", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--max-iters", type=int, dest="max_iters")
    run.add_argument("--rel-tol", type=float, dest="rel_tol")
    run.add_argument("--step-scale", type=float, dest="step_scale")
    run.add_argument("--jitter", type=float)
    run.set_defaults(func=run_command)

    verify = sub.add_parser("verify", help="run the built-in verification suites")
    verify.add_argument("--scope", choices=("all", *_SCOPES), default="all")
    verify.set_defaults(func=verify_command)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
