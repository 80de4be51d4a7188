"""Metric fields on a single coordinate chart, scalar products and Christoffel symbols."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BasePointMismatchError, DegenerateMetricError, ScenarioError
from .expr import Expression, compile_many, parse

COINCIDENCE_TOL = 1e-8
DEGENERACY_FLOOR = 1e-12
_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


def same_point(x, y, tol=COINCIDENCE_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        return False
    scale = np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))
    return bool(np.all(np.abs(x - y) <= tol * scale))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Components of a vector in T_x(M) in the coordinate basis at ``base``."""

    base: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=float).reshape(-1)
        comp = np.array(self.components, dtype=float).reshape(-1)
        if base.shape != comp.shape:
            raise ValueError(f"base has dimension {base.size}, components {comp.size}")
        base.flags.writeable = False
        comp.flags.writeable = False
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "components", comp)

    @property
    def dim(self) -> int:
        return self.components.size

    def _check(self, other):
        if not same_point(self.base, other.base):
            raise BasePointMismatchError(f"vectors based at {self.base} and {other.base}")

    def __add__(self, other):
        self._check(other)
        return TangentVector(self.base, self.components + other.components)

    def __sub__(self, other):
        self._check(other)
        return TangentVector(self.base, self.components - other.components)

    def __neg__(self):
        return TangentVector(self.base, -self.components)

    def __mul__(self, a):
        return TangentVector(self.base, float(a) * self.components)

    __rmul__ = __mul__

    def __truediv__(self, a):
        return TangentVector(self.base, self.components / float(a))

    def rebased(self, base):
        return TangentVector(base, self.components)

    def norm(self) -> float:
        """Euclidean norm of the components (a chart quantity, not the metric norm)."""
        return float(np.linalg.norm(self.components))

    def __repr__(self):
        return f"TangentVector(base={self.base.tolist()}, components={self.components.tolist()})"


def zero_vector(base) -> TangentVector:
    base = np.asarray(base, dtype=float)
    return TangentVector(base, np.zeros_like(base))


def epsilon(lam: float) -> int:
    """+1 for strictly positive arguments, -1 otherwise (including zero)."""
    return 1 if lam > 0 else -1


class MetricField:
    """A symmetric nondegenerate metric given by component functions on one chart.

    ``components`` is an n x n nested sequence of expression strings or
    :class:`Expression` objects in the coordinates.  Alternatively a plain
    callable ``x -> n x n array`` can be wrapped with :meth:`from_callable`;
    Christoffel symbols then fall back to central finite differences.
    """

    def __init__(self, components, coordinates: Sequence[str], name: str | None = None,
                 degeneracy_floor: float = DEGENERACY_FLOOR):
        self.coordinates = tuple(coordinates)
        n = len(self.coordinates)
        self.name = name
        self.degeneracy_floor = degeneracy_floor
        self._callable = None
        if callable(components):
            self._callable = components
            self.components = None
            self.dimension = n
            return
        rows = [list(r) for r in components]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ScenarioError(f"metric: expected {n}x{n} components for coordinates {self.coordinates}")
        self.components = [[c if isinstance(c, Expression) else parse(str(c), self.coordinates)
                            for c in r] for r in rows]
        self.dimension = n
        # structurally different mirror entries are compared numerically at evaluation
        self._mirror_pairs = [(i, j) for i in range(n) for j in range(i + 1, n)
                              if self.components[i][j] != self.components[j][i]]
        flat = [self.components[i][j] for i in range(n) for j in range(n)]
        self._eval_g = compile_many(flat, self.coordinates)
        # dg[k][i][j] = d g_ij / d x^k on the upper triangle, literal zeros skipped
        self._dg_index = []
        dexprs = []
        for k, var in enumerate(self.coordinates):
            for i in range(n):
                for j in range(i, n):
                    d = self.components[i][j].diff(var)
                    if not d.is_zero:
                        self._dg_index.append((k, i, j))
                        dexprs.append(d)
        self.derivative_expressions = dexprs
        self._eval_dg = compile_many(dexprs, self.coordinates) if dexprs else None

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], coordinates: Sequence[str],
                      name: str | None = None) -> "MetricField":
        return cls(fn, coordinates, name=name)

    @property
    def is_tabulated(self) -> bool:
        return self._callable is not None

    @property
    def is_constant(self) -> bool:
        return not self.is_tabulated and self._eval_dg is None

    def __repr__(self):
        label = self.name or "MetricField"
        return f"<{label} on ({', '.join(self.coordinates)})>"

    # -- evaluation -------------------------------------------------------

    def _raw(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"point of dimension {x.size} for a {self.dimension}-dimensional metric")
        if self._callable is not None:
            return np.array(self._callable(x), dtype=float).reshape(self.dimension, self.dimension)
        return np.array(self._eval_g(*x.tolist())).reshape(self.dimension, self.dimension)

    def at(self, x) -> np.ndarray:
        g = self._raw(x)
        n = self.dimension
        scale = float(np.max(np.abs(g)))
        if self._callable is not None or self._mirror_pairs:
            if not np.allclose(g, g.T, rtol=1e-12, atol=1e-12 * max(scale, 1e-300)):
                raise DegenerateMetricError(f"metric not symmetric at {list(x)}")
        det = np.linalg.det(g)
        if scale == 0.0 or abs(det) < self.degeneracy_floor * scale ** n:
            raise DegenerateMetricError(f"metric degenerate at {list(np.asarray(x, float))} (det={det:.3e})")
        return g

    def inverse(self, x) -> np.ndarray:
        return np.linalg.inv(self.at(x))

    def derivatives(self, x, method: str = "auto") -> np.ndarray:
        """Array ``dg[k, i, j] = d g_ij / d x^k``."""
        n = self.dimension
        x = np.asarray(x, dtype=float)
        if method == "fd" or self._callable is not None:
            return self._fd_derivatives(x)
        dg = np.zeros((n, n, n))
        if self._eval_dg is not None:
            values = self._eval_dg(*x.tolist())
            for (k, i, j), v in zip(self._dg_index, values):
                dg[k, i, j] = v
                dg[k, j, i] = v
        return dg

    def _fd_derivatives(self, x) -> np.ndarray:
        n = self.dimension
        dg = np.empty((n, n, n))
        for k in range(n):
            h = _FD_STEP * max(1.0, abs(x[k]))
            xp = x.copy()
            xm = x.copy()
            xp[k] += h
            xm[k] -= h
            dg[k] = (self._raw(xp) - self._raw(xm)) / (xp[k] - xm[k])
        return dg

    def christoffel(self, x, method: str = "auto") -> np.ndarray:
        """Levi-Civita symbols ``G[k, i, j]`` (upper index first)."""
        ginv = self.inverse(x)
        if self.is_constant and method != "fd":
            n = self.dimension
            return np.zeros((n, n, n))
        dg = self.derivatives(x, method)
        # T[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
        t = dg.transpose(2, 0, 1) + dg.transpose(2, 1, 0) - dg
        return 0.5 * np.einsum("kl,lij->kij", ginv, t)

    def dot(self, X: TangentVector, Y: TangentVector) -> float:
        if not same_point(X.base, Y.base):
            raise BasePointMismatchError(f"scalar product of vectors at {X.base} and {Y.base}")
        x, y = X.components, Y.components
        # the symmetrised outer product makes X.Y and Y.X bit-identical
        return 0.5 * float(np.sum(self.at(X.base) * (np.outer(x, y) + np.outer(y, x))))

    def square(self, X: TangentVector) -> float:
        return self.dot(X, X)

    def signature(self, x) -> tuple[int, int]:
        """(number of negative, number of positive) eigenvalues at ``x``."""
        w = np.linalg.eigvalsh(self.at(x))
        return int(np.sum(w < 0)), int(np.sum(w > 0))


def metric_at(g: MetricField, x) -> np.ndarray:
    return g.at(x)


def scalar_product(g: MetricField, X: TangentVector, Y: TangentVector) -> float:
    return g.dot(X, Y)


def christoffel_at(g: MetricField, x, method: str = "auto") -> np.ndarray:
    return g.christoffel(x, method)
