"""Transports along paths realised as linear ODE systems along a world line.

A transport engine supplies, for a world line ``gamma`` and parameter ``u``,
the matrix ``M(u)`` of the linear system ``dV/du = M(u) V``.  The map
``I_{s->t}`` is the propagator of that system.  Two engines ship:

* :class:`ParallelTransport` -- Levi-Civita parallel transport,
  ``M^k_j = -Gamma^k_ij(gamma(u)) gamma'^i(u)``;
* :class:`LinearTransport` -- a user coefficient matrix ``A^k_j(u)`` given
  as expressions in the path parameter.

Every linear transport factors as ``I_{s->t} = Phi(t) Phi(s)^-1`` with
``Phi`` the fundamental matrix of the system started at the beginning of J;
transports are evaluated in that form, so identity and composition hold to
rounding and only the integration of ``Phi`` carries truncation error.
Integration uses the Dormand-Prince 5(4) pair with dense output.  The
engine tolerances are targets for the accumulated error of a transport, so
the per-step tolerances handed to the integrator are ``LOCAL_SAFETY`` times
tighter (step error compounds over the path roughly tenfold).
"""
from __future__ import annotations

import math
import weakref
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (ChartExitError, DegenerateMetricError, ExprDomainError,
                     IntegrationError, ParameterRangeError, ScenarioError)
from .expr import Expression, compile_many, parse
from .geometry import MetricField, TangentVector, same_point, BasePointMismatchError

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-10
LOCAL_SAFETY = 0.01


def _integrate(fun, t0, t1, y0, atol, rtol, dense=False):
    try:
        sol = solve_ivp(fun, (t0, t1), y0, method="RK45", atol=atol * LOCAL_SAFETY,
                        rtol=rtol * LOCAL_SAFETY, dense_output=dense)
    except (ExprDomainError, DegenerateMetricError) as exc:
        raise ChartExitError(f"left the chart while integrating: {exc}") from exc
    if sol.status != 0:
        raise IntegrationError(f"integration from {t0} to {t1} failed: {sol.message}")
    return sol


# ---------------------------------------------------------------------------
# world lines


class WorldLine:
    """A path ``gamma: [a, b] -> M`` in a single chart, with its tangent."""

    interval: tuple[float, float]
    dimension: int

    def position(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def tangent(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def velocity(self, t: float) -> TangentVector:
        t = self.check_parameter(t)
        return TangentVector(self.position(t), self.tangent(t))

    def check_parameter(self, t: float) -> float:
        a, b = self.interval
        t = float(t)
        slack = 1e-12 * max(1.0, abs(a), abs(b))
        if not (a - slack <= t <= b + slack):
            raise ParameterRangeError(f"parameter {t!r} outside [{a!r}, {b!r}]")
        return min(max(t, a), b)


class AnalyticWorldLine(WorldLine):
    """World line with coordinates given as expressions in one parameter."""

    def __init__(self, coordinates: Sequence, parameter: str, interval: Sequence[float]):
        self.parameter = parameter
        self.expressions = [c if isinstance(c, Expression) else parse(str(c), [parameter])
                            for c in coordinates]
        self.derivatives = [e.diff(parameter) for e in self.expressions]
        self.interval = (float(interval[0]), float(interval[1]))
        if not self.interval[0] <= self.interval[1]:
            raise ScenarioError(f"paths: empty interval {list(interval)}")
        self.dimension = len(self.expressions)
        self._pos = compile_many(self.expressions, [parameter])
        self._tan = compile_many(self.derivatives, [parameter])

    def position(self, t):
        return np.array(self._pos(float(t)))

    def tangent(self, t):
        return np.array(self._tan(float(t)))

    def __repr__(self):
        coords = ", ".join(str(e) for e in self.expressions)
        return f"AnalyticWorldLine({self.parameter} -> ({coords}), J={list(self.interval)})"


class NumericWorldLine(WorldLine):
    """World line stored as the dense output of a second-order integration."""

    def __init__(self, solution, dimension: int, interval: Sequence[float]):
        self.solution = solution
        self.dimension = dimension
        self.interval = (float(interval[0]), float(interval[1]))

    def state(self, t):
        t = self.check_parameter(t)
        return self.solution(t)

    def position(self, t):
        return self.state(t)[: self.dimension]

    def tangent(self, t):
        return self.state(t)[self.dimension:]

    def __repr__(self):
        return f"NumericWorldLine(dim={self.dimension}, J={list(self.interval)})"


def straight_line(point, direction, interval, parameter: str = "s", at: float = 0.0) -> AnalyticWorldLine:
    """The coordinate-straight line ``x(s) = point + (s - at) * direction``."""
    exprs = []
    for x0, v in zip(np.asarray(point, float), np.asarray(direction, float)):
        exprs.append(f"({float(x0)!r}) + ({float(v)!r})*({parameter} - ({float(at)!r}))")
    return AnalyticWorldLine(exprs, parameter, interval)


# ---------------------------------------------------------------------------
# engines


class TransportEngine:
    """Base class; subclasses supply :meth:`generator` and :meth:`acceleration`."""

    kind = "abstract"

    def __init__(self, atol: float = DEFAULT_ATOL, rtol: float = DEFAULT_RTOL):
        self.atol = float(atol)
        self.rtol = float(rtol)
        self._fundamentals = weakref.WeakKeyDictionary()

    def generator(self, line: WorldLine, u: float) -> np.ndarray:
        raise NotImplementedError

    def acceleration(self, x: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def with_tolerances(self, atol=None, rtol=None) -> "TransportEngine":
        raise NotImplementedError

    # -- transport --------------------------------------------------------

    def fundamental(self, line: WorldLine, u: float) -> np.ndarray:
        """Fundamental matrix ``Phi(u) = I_{a->u}`` from the start ``a`` of J.

        Always integrated from ``a`` (never from a neighbouring cached value) so
        results do not depend on call order.
        """
        u = line.check_parameter(u)
        a = line.interval[0]
        n = line.dimension
        if u == a:
            return np.eye(n)
        cache = self._fundamentals.setdefault(line, {})
        if u not in cache:
            def rhs(w, y):
                return (self.generator(line, w) @ y.reshape(n, n)).reshape(-1)

            sol = _integrate(rhs, a, u, np.eye(n).reshape(-1), self.atol, self.rtol)
            phi = sol.y[:, -1].reshape(n, n)
            phi.flags.writeable = False
            cache[u] = phi
        return cache[u]

    def propagator(self, line: WorldLine, s: float, t: float) -> np.ndarray:
        """Matrix of ``I_{s->t} = Phi(t) Phi(s)^-1`` in the coordinate bases at gamma(s), gamma(t)."""
        s = line.check_parameter(s)
        t = line.check_parameter(t)
        if s == t:
            return np.eye(line.dimension)
        phi_s = self.fundamental(line, s)
        phi_t = self.fundamental(line, t)
        return np.linalg.solve(phi_s.T, phi_t.T).T

    def transport(self, line: WorldLine, s: float, t: float, A: TangentVector) -> TangentVector:
        s = line.check_parameter(s)
        t = line.check_parameter(t)
        if not same_point(A.base, line.position(s)):
            raise BasePointMismatchError(
                f"vector based at {A.base.tolist()} but gamma({s!r}) = {line.position(s).tolist()}")
        P = self.propagator(line, s, t)
        return TangentVector(line.position(t), P @ A.components)

    def geodesic(self, x0, v0: TangentVector, interval: Sequence[float]) -> NumericWorldLine:
        """Integrate the self-transport condition ``gamma'(t) = I_{a->t} gamma'(a)``."""
        x0 = np.asarray(x0, dtype=float)
        if not same_point(v0.base, x0):
            raise BasePointMismatchError(f"initial velocity based at {v0.base.tolist()}, not {x0.tolist()}")
        a, b = float(interval[0]), float(interval[1])
        n = x0.size

        def rhs(t, y):
            x = y[:n]
            v = y[n:]
            return np.concatenate([v, self.acceleration(x, v, t)])

        y0 = np.concatenate([x0, v0.components])
        if a == b:
            raise ScenarioError("paths: geodesic interval has zero length")
        sol = _integrate(rhs, a, b, y0, self.atol, self.rtol, dense=True)
        return NumericWorldLine(sol.sol, n, (a, b))


class ParallelTransport(TransportEngine):
    kind = "parallel"

    def __init__(self, metric: MetricField, atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
        super().__init__(atol, rtol)
        self.metric = metric

    def with_tolerances(self, atol=None, rtol=None):
        return ParallelTransport(self.metric, self.atol if atol is None else atol,
                                 self.rtol if rtol is None else rtol)

    def generator(self, line, u):
        n = line.dimension
        if self.metric.is_constant:
            return np.zeros((n, n))
        gam = self.metric.christoffel(line.position(u))
        return -np.einsum("kij,i->kj", gam, line.tangent(u))

    def acceleration(self, x, v, t):
        if self.metric.is_constant:
            return np.zeros_like(v)
        gam = self.metric.christoffel(x)
        return -np.einsum("kij,i,j->k", gam, v, v)

    def __repr__(self):
        return f"ParallelTransport({self.metric!r}, atol={self.atol}, rtol={self.rtol})"


class LinearTransport(TransportEngine):
    """General linear transport ``dV^k/du = A^k_j(u) V^j`` along the path parameter."""

    kind = "linear"

    def __init__(self, coefficients, parameter: str = "u", atol=DEFAULT_ATOL, rtol=DEFAULT_RTOL):
        super().__init__(atol, rtol)
        rows = [list(r) for r in coefficients]
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise ScenarioError("transport: coefficient matrix must be square")
        self.parameter = parameter
        self.coefficients = [[c if isinstance(c, Expression) else parse(str(c), [parameter])
                              for c in r] for r in rows]
        self.dimension = n
        self._eval = compile_many([c for r in self.coefficients for c in r], [parameter])

    def with_tolerances(self, atol=None, rtol=None):
        return LinearTransport(self.coefficients, self.parameter,
                               self.atol if atol is None else atol,
                               self.rtol if rtol is None else rtol)

    def matrix(self, u: float) -> np.ndarray:
        return np.array(self._eval(float(u))).reshape(self.dimension, self.dimension)

    def generator(self, line, u):
        if line.dimension != self.dimension:
            raise ScenarioError(f"transport: {self.dimension}x{self.dimension} coefficients "
                                f"on a {line.dimension}-dimensional path")
        return self.matrix(u)

    def acceleration(self, x, v, t):
        return self.matrix(t) @ v

    def __repr__(self):
        return f"LinearTransport({self.dimension}x{self.dimension} in {self.parameter}, atol={self.atol}, rtol={self.rtol})"


# ---------------------------------------------------------------------------
# module-level operations


def transport(engine: TransportEngine, line: WorldLine, s: float, t: float, A: TangentVector) -> TangentVector:
    return engine.transport(line, s, t, A)


def geodesic(engine: TransportEngine, x0, v0: TangentVector, interval) -> NumericWorldLine:
    return engine.geodesic(x0, v0, interval)


def free_momentum(engine: TransportEngine, line: WorldLine, p0: TangentVector, r0: float, r: float) -> TangentVector:
    """Momentum at ``r`` of a particle whose momentum is transported from ``r0``."""
    return engine.transport(line, r0, r, p0)


def isometry_violation(engine: TransportEngine, line: WorldLine, metric: MetricField,
                       samples: int = 8, seed: int = 0) -> float:
    """Largest relative change of a scalar product under transport.

    Random vector pairs at gamma(a) are carried to ``samples`` parameters
    spread over J; the return value is
    ``max |I(A).I(B) - A.B| / (1 + |A.B|)``.
    """
    rng = np.random.default_rng(seed)
    a, b = line.interval
    n = line.dimension
    x0 = line.position(a)
    g0 = metric.at(x0)
    if samples < 1 or a == b:
        return 0.0
    params = a + (b - a) * (np.arange(1, samples + 1) / samples)
    worst = 0.0
    for u in params:
        P = engine.propagator(line, a, u)
        gu = metric.at(line.position(u))
        A = rng.standard_normal(n)
        B = rng.standard_normal(n)
        before = A @ g0 @ B
        after = (P @ A) @ gu @ (P @ B)
        worst = max(worst, abs(after - before) / (1.0 + abs(before)))
    return float(worst)


def holonomy_angle(engine: ParallelTransport, line: WorldLine, vector: TangentVector) -> float:
    """Signed rotation angle of a 2D vector carried once around a closed loop.

    Measured in an orthonormal frame of the metric at the loop's base point.
    The loop may close only modulo a periodic coordinate, so closure is checked
    on the metric components rather than on the coordinates.
    """
    a, b = line.interval
    if not np.allclose(engine.metric.at(line.position(a)), engine.metric.at(line.position(b)),
                       rtol=1e-9, atol=1e-12):
        raise ScenarioError("holonomy needs a closed loop")
    g = engine.metric.at(line.position(a))
    L = np.linalg.cholesky(g)  # g = L L^T, so L^T maps to an orthonormal frame
    end = engine.transport(line, a, b, vector)
    u = L.T @ vector.components
    w = L.T @ end.components
    return math.atan2(u[0] * w[1] - u[1] * w[0], u @ w)
