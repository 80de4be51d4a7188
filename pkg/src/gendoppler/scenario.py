"""Scenario files: loading, running, sweeping and invariant checks.

A scenario is a TOML document::

    name = "sr-receding"

    [parameters]            # named numbers usable in every expression below
    v2 = 0.5

    [metric]                # builtin + params, or coordinates + components
    builtin = "minkowski"
    params = { n = 4, c = 1.0 }

    [constants]
    c = 1.0
    tol_abs = 1e-10
    tol_rel = 1e-10
    seed = 0

    [transport]
    kind = "parallel"       # or "linear" with coefficients = [[...], ...]

    [paths.gamma]           # coordinates in `parameter`, or geodesic = {x0, v0}
    parameter = "r"
    coordinates = ["r", "r", "0", "0"]
    interval = [0, 2]

    [paths.observer1] ...
    [paths.observer2] ...

    [intersections]         # r1, s1, r2, s2 or solve = true
    r1 = 0
    ...

    [momentum.free]         # exactly one of explicit / free / mass
    p0 = [1, 1, 0, 0]
    r0 = 0

    [outputs]
    format = "text"
    sweep = { axis = "parameters.v2", values = [0, 0.25, 0.5] }

Numbers may be written as expression strings over the parameters
(``"1/sqrt(1 - v2^2)"``).
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import catalog
from .doppler import (SCALAR_FIELDS, VECTOR_FIELDS, DopplerReport, DopplerScenario, ExplicitMomentum,
                      FreeMomentum, MassMomentum, check_free_particle, consistency_bound,
                      delta_p_reversal, doppler_energy, energy_along, energy_change,
                      ensure_consistent, normal_vector, relative_energy, solve_intersection)
from .errors import ExprSyntaxError, GenDopplerError, ScenarioError
from .expr import parse
from .geometry import MetricField, TangentVector, epsilon
from .transport import (AnalyticWorldLine, LinearTransport, ParallelTransport, TransportEngine,
                        isometry_violation)

STRICT_RESIDUAL = 1e-7
DEFAULT_SEED = 0
FORMATS = ("text", "json", "table")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % x


# ---------------------------------------------------------------------------
# loading


class _Builder:
    def __init__(self, doc: dict):
        self.doc = doc
        params = doc.get("parameters", {})
        if not isinstance(params, dict):
            raise ScenarioError("parameters: must be a table of numbers")
        self.params = {}
        for k, v in params.items():
            self.params[k] = self.number(v, f"parameters.{k}")

    def number(self, value, where: str) -> float:
        if isinstance(value, bool):
            raise ScenarioError(f"{where}: expected a number, got a boolean")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            names = list(getattr(self, "params", {}))
            try:
                e = parse(value, names)
                return e.eval(self.params)
            except GenDopplerError as exc:
                raise ScenarioError(f"{where}: {exc}") from exc
        raise ScenarioError(f"{where}: expected a number or expression string, got {value!r}")

    def numbers(self, values, where: str, length=None) -> list:
        if not isinstance(values, list):
            raise ScenarioError(f"{where}: expected a list")
        if length is not None and len(values) != length:
            raise ScenarioError(f"{where}: expected {length} entries, got {len(values)}")
        return [self.number(v, f"{where}[{i}]") for i, v in enumerate(values)]

    def expression(self, text, variables, where):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        if not isinstance(text, str):
            raise ScenarioError(f"{where}: expected an expression string")
        try:
            e = parse(text, list(variables) + list(self.params))
        except ExprSyntaxError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
        return e.substitute(self.params)

    # -- sections ---------------------------------------------------------

    def metric(self) -> MetricField:
        sec = self.doc.get("metric")
        if not isinstance(sec, dict):
            raise ScenarioError("metric: section missing")
        if "builtin" in sec:
            if "components" in sec:
                raise ScenarioError("metric: give either builtin or components, not both")
            raw = sec.get("params", {})
            params = {k: self.number(v, f"metric.params.{k}") for k, v in raw.items()}
            const = self.doc.get("constants", {})
            takes_c = "c" in catalog.BUILTINS.get(sec["builtin"], (None, {}))[1]
            if takes_c and "c" not in params and "c" in const:
                params["c"] = self.number(const["c"], "constants.c")
            return catalog.builtin(sec["builtin"], **params)
        coords = sec.get("coordinates")
        comps = sec.get("components")
        if not isinstance(coords, list) or not isinstance(comps, list):
            raise ScenarioError("metric: needs builtin, or coordinates and components")
        if len(set(coords)) != len(coords):
            raise ScenarioError("metric: coordinate names must be unique")
        clash = set(coords) & set(self.params)
        if clash:
            raise ScenarioError(f"metric: coordinate names clash with parameters {sorted(clash)}")
        n = len(coords)
        if len(comps) != n or any(not isinstance(r, list) or len(r) != n for r in comps):
            raise ScenarioError(f"metric: components must be a {n}x{n} array")
        rows = [[self.expression(c, coords, f"metric.components[{i}][{j}]") for j, c in enumerate(r)]
                for i, r in enumerate(comps)]
        return MetricField(rows, coords, name=sec.get("name", "custom"))

    def engine(self, gamma_parameter: str) -> TransportEngine:
        const = self.doc.get("constants", {})
        atol = self.number(const.get("tol_abs", 1e-10), "constants.tol_abs")
        rtol = self.number(const.get("tol_rel", 1e-10), "constants.tol_rel")
        if atol <= 0 or rtol <= 0:
            raise ScenarioError("constants: tolerances must be positive")
        sec = self.doc.get("transport", {"kind": "parallel"})
        kind = sec.get("kind", "parallel")
        if kind == "parallel":
            if "coefficients" in sec:
                raise ScenarioError("transport: parallel transport takes no coefficients")
            return ParallelTransport(self._metric, atol, rtol)
        if kind == "linear":
            coeffs = sec.get("coefficients")
            if not isinstance(coeffs, list):
                raise ScenarioError("transport: linear transport needs a coefficients matrix")
            n = self._metric.dimension
            if len(coeffs) != n or any(not isinstance(r, list) or len(r) != n for r in coeffs):
                raise ScenarioError(f"transport: coefficients must be a {n}x{n} array")
            rows = [[self.expression(c, [gamma_parameter], f"transport.coefficients[{i}][{j}]")
                     for j, c in enumerate(r)] for i, r in enumerate(coeffs)]
            return LinearTransport(rows, gamma_parameter, atol, rtol)
        raise ScenarioError(f"transport: unknown kind {kind!r} (parallel | linear)")

    def path(self, label: str, default_parameter: str):
        paths = self.doc.get("paths", {})
        sec = paths.get(label)
        if not isinstance(sec, dict):
            raise ScenarioError(f"paths: section paths.{label} missing")
        n = self._metric.dimension
        param = sec.get("parameter", default_parameter)
        if param in self.params or param in self._metric.coordinates:
            raise ScenarioError(f"paths.{label}: parameter name {param!r} is already declared")
        if "interval" not in sec:
            raise ScenarioError(f"paths.{label}: interval missing")
        interval = self.numbers(sec["interval"], f"paths.{label}.interval", 2)
        if "geodesic" in sec:
            if "coordinates" in sec:
                raise ScenarioError(f"paths.{label}: give either coordinates or geodesic, not both")
            seed = sec["geodesic"]
            x0 = self.numbers(seed.get("x0"), f"paths.{label}.geodesic.x0", n)
            v0 = self.numbers(seed.get("v0"), f"paths.{label}.geodesic.v0", n)
            return param, ("geodesic", x0, v0, interval)
        coords = sec.get("coordinates")
        if not isinstance(coords, list) or len(coords) != n:
            raise ScenarioError(f"paths.{label}: needs {n} coordinate expressions or a geodesic seed")
        exprs = [self.expression(c, [param], f"paths.{label}.coordinates[{i}]") for i, c in enumerate(coords)]
        return param, AnalyticWorldLine(exprs, param, interval)

    def momentum(self, gamma_parameter: str):
        sec = self.doc.get("momentum")
        if not isinstance(sec, dict):
            raise ScenarioError("momentum: exactly one required")
        present = [k for k in ("explicit", "free", "mass") if k in sec]
        unknown = set(sec) - {"explicit", "free", "mass"}
        if unknown:
            raise ScenarioError(f"momentum: unknown kinds {sorted(unknown)} (explicit | free | mass)")
        if len(present) != 1:
            raise ScenarioError("momentum: exactly one required")
        kind = present[0]
        body = sec[kind]
        n = self._metric.dimension
        if kind == "explicit":
            comps = body.get("components")
            if not isinstance(comps, list) or len(comps) != n:
                raise ScenarioError(f"momentum.explicit: needs {n} component expressions")
            exprs = [self.expression(c, [gamma_parameter], f"momentum.explicit.components[{i}]")
                     for i, c in enumerate(comps)]
            return ExplicitMomentum(tuple(exprs), gamma_parameter)
        if kind == "free":
            p0 = self.numbers(body.get("p0"), "momentum.free.p0", n)
            if "r0" not in body:
                raise ScenarioError("momentum.free: r0 missing")
            return FreeMomentum(tuple(p0), self.number(body["r0"], "momentum.free.r0"))
        if "mu" not in body:
            raise ScenarioError("momentum.mass: mu missing")
        return MassMomentum(self.expression(body["mu"], [gamma_parameter], "momentum.mass.mu"), gamma_parameter)

    def build(self) -> DopplerScenario:
        self._metric = self.metric()
        c = self.number(self.doc.get("constants", {}).get("c", 1.0), "constants.c")
        if c <= 0:
            raise ScenarioError("constants: c must be positive")
        gparam, gamma = self.path("gamma", "r")
        engine = self.engine(gparam)
        lines = {"gamma": gamma}
        names = {"gamma": gparam}
        for label in ("observer1", "observer2"):
            names[label], lines[label] = self.path(label, "s")
        for label, line in lines.items():
            if isinstance(line, tuple):
                _, x0, v0, interval = line
                lines[label] = engine.geodesic(x0, TangentVector(x0, v0), interval)
        sec = self.doc.get("intersections")
        if not isinstance(sec, dict):
            raise ScenarioError("intersections: section missing")
        values = {}
        if sec.get("solve", False):
            for a in (1, 2):
                rg = self.number(sec[f"r{a}"], f"intersections.r{a}") if f"r{a}" in sec else None
                sg = self.number(sec[f"s{a}"], f"intersections.s{a}") if f"s{a}" in sec else None
                values[f"r{a}"], values[f"s{a}"] = solve_intersection(
                    lines["gamma"], lines[f"observer{a}"], rg, sg)
        else:
            for key in ("r1", "s1", "r2", "s2"):
                if key not in sec:
                    raise ScenarioError(f"intersections: {key} missing (or set solve = true)")
                values[key] = self.number(sec[key], f"intersections.{key}")
        momentum = self.momentum(gparam)
        return DopplerScenario(
            metric=self._metric, engine=engine, gamma=lines["gamma"],
            observer1=lines["observer1"], observer2=lines["observer2"],
            momentum=momentum, c=c, name=self.doc.get("name"), **values)


@dataclass
class Loaded:
    """A scenario together with the document it was built from."""

    scenario: DopplerScenario
    document: dict
    seed: int = DEFAULT_SEED
    outputs: dict = field(default_factory=dict)


def from_document(doc: dict) -> Loaded:
    doc = copy.deepcopy(doc)
    builder = _Builder(doc)
    scenario = builder.build()
    seed = doc.get("constants", {}).get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("constants: seed must be an integer")
    outputs = doc.get("outputs", {})
    fmt = outputs.get("format", "text")
    if fmt not in FORMATS:
        raise ScenarioError(f"outputs: format must be one of {FORMATS}")
    unknown = [f for f in outputs.get("fields", []) if f not in SCALAR_FIELDS + VECTOR_FIELDS + ("ratio",)]
    if unknown:
        raise ScenarioError(f"outputs: unknown fields {unknown}")
    return Loaded(scenario, doc, seed, outputs)


def loads(text: str) -> Loaded:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from exc
    return from_document(doc)


def load(source) -> Loaded:
    """Load from a path, or from TOML text when ``source`` is not an existing file."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source):
        path = Path(source)
        if not path.is_file():
            raise ScenarioError(f"scenario file {str(path)!r} not found")
        return loads(path.read_text(encoding="utf-8"))
    return loads(source)


def serialize(loaded: Loaded) -> str:
    return tomli_w.dumps(loaded.document)


def with_overrides(doc: dict, *, tol_abs=None, tol_rel=None, seed=None, solve=None) -> dict:
    doc = copy.deepcopy(doc)
    const = doc.setdefault("constants", {})
    if tol_abs is not None:
        const["tol_abs"] = tol_abs
    if tol_rel is not None:
        const["tol_rel"] = tol_rel
    if seed is not None:
        const["seed"] = seed
    if solve:
        doc.setdefault("intersections", {})["solve"] = True
    return doc


# ---------------------------------------------------------------------------
# running


@dataclass
class RunResult:
    report: DopplerReport
    output: str
    exit_code: int = 0
    message: str = ""


def report_record(report: DopplerReport, fields=None) -> dict:
    record = {"ratio": report.ratio if report.E1 != 0 else math.nan}
    record.update(report.scalars())
    record.update(report.vectors())
    if fields:
        record = {k: record[k] for k in fields}
    return record


def format_report(report: DopplerReport, fmt: str = "text", fields=None, header=None) -> str:
    record = report_record(report, fields)
    if fmt == "json":
        return json.dumps(record, indent=2)
    if fmt == "table":
        scalars = {k: v for k, v in record.items() if not isinstance(v, list)}
        return format_table([scalars], header=header)
    lines = []
    if header:
        lines.append(header)
    width = max(len(k) for k in record)
    for k, v in record.items():
        if isinstance(v, list):
            v = "[" + ", ".join(_fmt(x) for x in v) + "]"
        else:
            v = _fmt(v)
        lines.append(f"{k.ljust(width)} = {v}")
    return "\n".join(lines)


def format_table(rows: list[dict], header: str | None = None, delimiter: str = ",") -> str:
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    if rows:
        writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        keys = list(rows[0])
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_fmt(row[k]) if not isinstance(row[k], str) else row[k] for k in keys])
    return buf.getvalue().rstrip("\n")


RATIO_HEADER = "ratio = E2/E1; E1 measured by observer 1 at gamma(r1), E2 by observer 2 at gamma(r2)"


def run(loaded: Loaded, fmt: str | None = None, strict: bool = False, fields=None) -> RunResult:
    fmt = fmt or loaded.outputs.get("format", "text")
    fields = fields or loaded.outputs.get("fields") or None
    report = doppler_energy(loaded.scenario)
    name = loaded.scenario.name
    header = f"scenario: {name}\n{RATIO_HEADER}" if name else RATIO_HEADER
    out = format_report(report, fmt, fields, header if fmt != "json" else None)
    if strict and not report.residual <= STRICT_RESIDUAL:
        return RunResult(report, out, 4, f"consistency residual {report.residual:.3e} exceeds {STRICT_RESIDUAL:g}")
    return RunResult(report, out, 0)


def _set_path(doc: dict, axis: str, value):
    keys = axis.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ScenarioError(f"sweep: invalid axis {axis!r}")
        node = node[k]
    last = keys[-1]
    if not isinstance(node, dict) or last not in node:
        raise ScenarioError(f"sweep: invalid axis {axis!r}")
    current = node[last]
    if isinstance(current, bool) or not isinstance(current, (int, float, str)):
        raise ScenarioError(f"sweep: axis {axis!r} is not a numeric field")
    if isinstance(current, str):
        try:
            float(parse(current, []).eval({}))
        except GenDopplerError:
            raise ScenarioError(f"sweep: axis {axis!r} is not a numeric field") from None
    node[last] = value


def sweep(loaded: Loaded, axis: str, values, workers: int = 1) -> list[dict]:
    """One row per value with every scalar report field; rows keep input order."""
    values = list(values)
    docs = []
    for v in values:
        doc = copy.deepcopy(loaded.document)
        _set_path(doc, axis, v)
        docs.append(doc)
    if not values:
        _set_path(copy.deepcopy(loaded.document), axis, 0.0)

    def row(pair):
        v, doc = pair
        report = doppler_energy(from_document(doc).scenario)
        rec = {axis: v}
        rec.update({k: val for k, val in report_record(report).items() if not isinstance(val, list)})
        return rec

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(row, zip(values, docs)))
    return [row(p) for p in zip(values, docs)]


# ---------------------------------------------------------------------------
# invariant suites


@dataclass
class CheckResult:
    name: str
    value: float
    bound: float
    detail: str = ""
    failure_code: int = 4

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)


@dataclass
class CheckSummary:
    suite: str
    seed: int
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def exit_code(self) -> int:
        failed = [r.failure_code for r in self.results if not r.passed]
        return min(failed) if failed else 0

    def format(self) -> str:
        lines = [f"suite={self.suite} seed={self.seed}"]
        for r in self.results:
            flag = "PASS" if r.passed else "FAIL"
            extra = f"  ({r.detail})" if r.detail else ""
            lines.append(f"{flag} {r.name}: {_fmt(r.value)} <= {_fmt(r.bound)}{extra}")
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _transport_suite(sc: DopplerScenario, rng) -> list:
    line, eng, g = sc.gamma, sc.engine, sc.metric
    a, b = line.interval
    n = line.dimension
    out = []
    s, t, u = np.sort(rng.uniform(a, b, 3))
    A = TangentVector(line.position(s), rng.standard_normal(n))
    B = TangentVector(line.position(s), rng.standard_normal(n))
    scale = 1.0 + A.norm() + B.norm()
    ident = (eng.transport(line, s, s, A) - A).norm()
    out.append(CheckResult("transport.identity", ident, 1e-9 * scale))
    st = eng.transport(line, s, t, A)
    comp = (eng.transport(line, t, u, st) - eng.transport(line, s, u, A)).norm()
    out.append(CheckResult("transport.composition", comp, 1e-9 * scale))
    inv = (eng.transport(line, t, s, st) - A).norm()
    out.append(CheckResult("transport.inversion", inv, 1e-9 * scale))
    al, be = rng.standard_normal(2)
    lin = (eng.transport(line, s, u, A * al + B * be)
           - (eng.transport(line, s, u, A) * al + eng.transport(line, s, u, B) * be)).norm()
    out.append(CheckResult("transport.linearity", lin, 1e-10 * scale * (1 + abs(al) + abs(be))))
    iso = isometry_violation(eng, line, g, samples=8, seed=int(rng.integers(2**31)))
    bound = 1e-9 if isinstance(eng, ParallelTransport) else 1e-6
    out.append(CheckResult("transport.isometry", iso, bound, eng.kind))
    return out


def _doppler_suite(sc: DopplerScenario, rng) -> list:
    out = []
    g = sc.metric
    try:
        ensure_consistent(sc)
    except GenDopplerError as exc:
        return [CheckResult("doppler.metric_consistency", math.inf, 1e-6, str(exc), exc.exit_code)]
    rep = doppler_energy(sc)
    bound = consistency_bound(sc, rep.E2)
    out.append(CheckResult("doppler.master_consistency", rep.residual, bound))
    out.append(CheckResult("doppler.transported_product", rep.transported_residual, bound))
    tele = abs(energy_change(sc) - (energy_along(sc, sc.r2) - energy_along(sc, sc.r1)))
    out.append(CheckResult("doppler.telescoping", tele, bound))
    par, perp = rep.V2_1_parallel, rep.V2_1_perp
    vscale = 1.0 + abs(rep.V1_sq) + abs(rep.V2_1_sq)
    dec = max(abs(g.dot(perp, rep.V1)), abs(g.dot(perp, par)), (par + perp - rep.V2_1).norm())
    out.append(CheckResult("doppler.decomposition", dec, 1e-10 * vscale))
    out.append(CheckResult("doppler.normal_vector", _normal_violation(g, rep.p1, rep.V1), 1e-9))
    worst = 0.0
    for _ in range(16):
        p = TangentVector(rep.p1.base, rng.standard_normal(g.dimension))
        worst = max(worst, _normal_violation(g, p, rep.V1))
    out.append(CheckResult("doppler.normal_vector_random", worst, 1e-9))
    if math.isfinite(rep.red_shift_formula):
        out.append(CheckResult("doppler.red_shift_expanded", abs(rep.red_shift_formula - rep.red_shift), 1e-9))
    rev = delta_p_reversal(sc)
    out.append(CheckResult("doppler.delta_p_reversal", rev.reversal_residual, 1e-9))
    out.append(CheckResult("doppler.energy_change_reversed", rev.reversed_change_residual, 1e-9))
    if isinstance(sc.momentum, FreeMomentum):
        out.append(CheckResult("doppler.free_particle", check_free_particle(sc, 4, int(rng.integers(2**31))), 1e-9))
    return out


def _normal_violation(g, p1, V1) -> float:
    """Largest violation of the N1 contract for one (p1, V1) pair (relative units)."""
    E1 = relative_energy(g, p1, V1)
    V1_sq = g.square(V1)
    N = normal_vector(g, p1, V1, E1)
    q = g.square(p1) - E1 * E1 / V1_sq
    if not np.any(N.components):
        return 0.0
    recon = V1 * (g.dot(V1, p1) / V1_sq) - N * (epsilon(q) * math.sqrt(abs(q)))
    scale = 1.0 + p1.norm()
    return max(abs(g.dot(N, V1)) / (1.0 + V1.norm()),
               abs(g.square(N) - epsilon(q)),
               0.0 if g.dot(N, p1) < 0 else math.inf,
               (recon - p1).norm() / scale)


def check(loaded: Loaded, suite: str = "all", seed: int | None = None) -> CheckSummary:
    if suite not in ("transport", "doppler", "all"):
        raise ScenarioError(f"check: unknown suite {suite!r} (transport | doppler | all)")
    seed = loaded.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    results = []
    if suite in ("transport", "all"):
        results += _transport_suite(loaded.scenario, rng)
    if suite in ("doppler", "all"):
        results += _doppler_suite(loaded.scenario, rng)
    return CheckSummary(suite, seed, results)
