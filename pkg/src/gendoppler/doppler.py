"""Relative energies of a particle seen by two observers linked by a transport.

A particle moves along ``gamma`` and meets observer 1 at ``gamma(r1)`` and
observer 2 at ``gamma(r2)``.  With momenta ``p_a = p(r_a)`` and observer
velocities ``V_a`` the relative energies are ``E_a = eps(V_a^2) p_a . V_a``.
Carrying ``V2`` back to ``gamma(r1)`` with the transport and splitting it
relative to ``V1`` gives ``E2`` in terms of ``E1``, the momentum change
``dp = p2 - I_{r1->r2} p1`` and the recession speed of observer 2 along the
unit normal ``N1``:

    E2 = dE21 + eps(V1^2) eps(V2^2) E1 (V1.(V2)_1)/V1^2
              - eps(V2^2) eps(q) w21 |q|^(1/2),      q = p1^2 - E1^2/V1^2

:func:`doppler_energy` assembles this and compares it with the direct value
of ``E2``; the difference is a pure numerical residual.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (DiagnosticError, InconsistentTransportError, NonCollinearMomentumError,
                     NullObserverError, ScenarioError, ValidationError, ZeroEnergyError)
from .expr import Expression, compile_many, parse
from .geometry import MetricField, TangentVector, epsilon, same_point, zero_vector
from .transport import LinearTransport, TransportEngine, WorldLine, isometry_violation

NULLITY_TOL = 1e-10
COLLINEARITY_TOL = 1e-10
RADICAL_TOL = 1e-8
ISOMETRY_REFUSAL = 1e-6


# ---------------------------------------------------------------------------
# momentum specifications


@dataclass(frozen=True)
class ExplicitMomentum:
    """Components of p(r) as expressions in the path parameter."""

    components: tuple
    parameter: str = "r"

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Expression) else parse(str(c), [self.parameter])
                      for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "_eval", compile_many(comps, [self.parameter]))

    def at(self, scenario, r):
        return TangentVector(scenario.gamma.position(r), self._eval(float(r)))


@dataclass(frozen=True)
class FreeMomentum:
    """p(r) = I_{r0->r} p0: the momentum is carried by the transport."""

    p0: tuple
    r0: float

    def at(self, scenario, r):
        base = scenario.gamma.position(self.r0)
        return scenario.engine.transport(scenario.gamma, self.r0, r, TangentVector(base, self.p0))


@dataclass(frozen=True)
class MassMomentum:
    """p(r) = mu(r) * gamma'(r)."""

    mu: Expression
    parameter: str = "r"

    def __post_init__(self):
        if not isinstance(self.mu, Expression):
            object.__setattr__(self, "mu", parse(str(self.mu), [self.parameter]))

    def at(self, scenario, r):
        mu = self.mu.fast(float(r)) if self.mu.variables else self.mu.eval({})
        return scenario.gamma.velocity(r) * mu


# ---------------------------------------------------------------------------
# scenario


@dataclass(eq=False)
class DopplerScenario:
    metric: MetricField
    engine: TransportEngine
    gamma: WorldLine
    observer1: WorldLine
    observer2: WorldLine
    r1: float
    s1: float
    r2: float
    s2: float
    momentum: ExplicitMomentum | FreeMomentum | MassMomentum
    c: float = 1.0
    name: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.metric.dimension
        for label, line in (("gamma", self.gamma), ("observer1", self.observer1),
                            ("observer2", self.observer2)):
            if line.dimension != n:
                raise ScenarioError(f"paths: {label} has dimension {line.dimension}, metric has {n}")
        if not isinstance(self.momentum, (ExplicitMomentum, FreeMomentum, MassMomentum)):
            raise ScenarioError("momentum: exactly one required")
        if isinstance(self.momentum, ExplicitMomentum) and len(self.momentum.components) != n:
            raise ScenarioError(f"momentum: explicit momentum needs {n} components")
        if isinstance(self.momentum, FreeMomentum) and len(self.momentum.p0) != n:
            raise ScenarioError(f"momentum: free momentum p0 needs {n} components")
        for a, line, r, s in ((1, self.observer1, self.r1, self.s1), (2, self.observer2, self.r2, self.s2)):
            self.gamma.check_parameter(r)
            line.check_parameter(s)
            x_gamma = self.gamma.position(r)
            x_obs = line.position(s)
            if not same_point(x_gamma, x_obs):
                raise ScenarioError(
                    f"intersections: gamma(r{a}) = {x_gamma.tolist()} does not meet "
                    f"observer {a} at s{a}: {x_obs.tolist()}")

    def momentum_at(self, r) -> TangentVector:
        key = ("p", float(r))
        if key not in self._cache:
            self._cache[key] = self.momentum.at(self, r)
        return self._cache[key]

    def observer_velocity(self, a: int) -> TangentVector:
        """V_a, rebased onto gamma(r_a) (the points coincide within tolerance)."""
        line, r, s = ((self.observer1, self.r1, self.s1) if a == 1
                      else (self.observer2, self.r2, self.s2))
        return TangentVector(self.gamma.position(r), line.tangent(s))

    def transport(self, s, t, A: TangentVector) -> TangentVector:
        return self.engine.transport(self.gamma, s, t, A)


def ensure_consistent(scenario: DopplerScenario) -> float:
    """Refuse transports that do not preserve the metric's scalar products.

    Parallel transport is metric compatible by construction; linear engines are
    spot-checked at 8 parameters along gamma.
    """
    if "isometry" not in scenario._cache:
        if isinstance(scenario.engine, LinearTransport):
            violation = isometry_violation(scenario.engine, scenario.gamma, scenario.metric, samples=8)
        else:
            violation = 0.0
        scenario._cache["isometry"] = violation
    violation = scenario._cache["isometry"]
    if violation > ISOMETRY_REFUSAL:
        raise InconsistentTransportError(
            f"transport does not preserve the metric (relative violation {violation:.3e} > {ISOMETRY_REFUSAL:g}); "
            "the energy relations assume a metric-consistent transport")
    return violation


def _require_non_null(g: MetricField, V: TangentVector, label: str) -> float:
    sq = g.square(V)
    G = g.at(V.base)
    scale = float(np.abs(G) @ np.abs(V.components) @ np.abs(V.components))
    if abs(sq) <= NULLITY_TOL * scale or scale == 0.0:
        raise NullObserverError(f"{label} velocity is null")
    return sq


# ---------------------------------------------------------------------------
# elementary quantities


def relative_energy(g: MetricField, p: TangentVector, V: TangentVector) -> float:
    return epsilon(g.square(V)) * g.dot(p, V)


def transported_velocity(scenario: DopplerScenario) -> TangentVector:
    """(V2)_1 = I_{r2->r1} V2, based at gamma(r1)."""
    ensure_consistent(scenario)
    return scenario.transport(scenario.r2, scenario.r1, scenario.observer_velocity(2))


def momentum_change(scenario: DopplerScenario, r1=None, r2=None) -> TangentVector:
    """Delta p(r1, r2; gamma) = p(r2) - I_{r1->r2} p(r1), based at gamma(r2)."""
    r1 = scenario.r1 if r1 is None else r1
    r2 = scenario.r2 if r2 is None else r2
    p1 = scenario.momentum_at(r1)
    p2 = scenario.momentum_at(r2)
    return p2 - scenario.transport(r1, r2, p1)


def energy_change(scenario: DopplerScenario) -> float:
    ensure_consistent(scenario)
    V2 = scenario.observer_velocity(2)
    g = scenario.metric
    return epsilon(g.square(V2)) * g.dot(momentum_change(scenario), V2)


def energy_along(scenario: DopplerScenario, r: float) -> float:
    """E(r, r2; gamma): energy of the particle at gamma(r) carried to observer 2."""
    ensure_consistent(scenario)
    g = scenario.metric
    V2 = scenario.observer_velocity(2)
    p = scenario.transport(r, scenario.r2, scenario.momentum_at(r))
    return epsilon(g.square(V2)) * g.dot(p, V2)


def decompose(g: MetricField, V1: TangentVector, W: TangentVector):
    """Split ``W`` into parts parallel and orthogonal to the non-null ``V1``."""
    sq = _require_non_null(g, V1, "observer 1")
    par = V1 * (g.dot(V1, W) / sq)
    return par, W - par


def _collinearity_scale(p_sq, E1, V1_sq):
    return COLLINEARITY_TOL * max(1.0, abs(p_sq), E1 * E1 / abs(V1_sq))


def normal_vector(g: MetricField, p1: TangentVector, V1: TangentVector, E1: float | None = None) -> TangentVector:
    """Unit vector N1 in span(V1, p1) with N1.V1 = 0, N1^2 = eps(q), N1.p1 < 0.

    Zero when p1 and V1 are collinear (|q| within tolerance).
    """
    V1_sq = _require_non_null(g, V1, "observer 1")
    if E1 is None:
        E1 = relative_energy(g, p1, V1)
    p_sq = g.square(p1)
    q = p_sq - E1 * E1 / V1_sq
    if abs(q) <= _collinearity_scale(p_sq, E1, V1_sq):
        return zero_vector(p1.base)
    transverse = p1 - V1 * (g.dot(V1, p1) / V1_sq)
    return transverse * (-1.0 / (epsilon(q) * math.sqrt(abs(q))))


def recession_speed(g: MetricField, V21: TangentVector, N1: TangentVector) -> float:
    if not np.any(N1.components):
        return 0.0
    return g.dot(V21, N1)


# ---------------------------------------------------------------------------
# the assembled relation


@dataclass(frozen=True, eq=False)
class DopplerReport:
    E1: float
    E2: float                 # direct: eps(V2^2) p2 . V2
    E2_formula: float         # assembled from E1, dE21, bracket and recession term
    delta_E21: float
    delta_p: TangentVector
    p1: TangentVector
    p2: TangentVector
    V1: TangentVector
    V2: TangentVector
    V2_1: TangentVector
    V2_1_parallel: TangentVector
    V2_1_perp: TangentVector
    N1: TangentVector
    omega21: float
    eps_V1: int
    eps_V2: int
    eps_q: int
    q: float                  # p1^2 - E1^2 / V1^2
    V1_sq: float
    V2_1_sq: float
    perp_sq: float
    bracket: float            # (V1.(V2)_1)/V1^2
    bracket_radical: float    # [((V2)_1^2 - perp^2)/V1^2]^(1/2)
    residual: float           # |E2_formula - E2|
    transported_residual: float       # |dE21 + eps(V2^2) p1.(V2)_1 - E2|
    red_shift: float          # (E2 - E1)/E2
    red_shift_formula: float  # expanded red-shift expression evaluated from the fields
    isometry_violation: float = 0.0

    @property
    def ratio(self) -> float:
        """E2 / E1."""
        return self.E2 / self.E1

    def scalars(self) -> dict:
        out = {}
        for name in SCALAR_FIELDS:
            out[name] = getattr(self, name)
        return out

    def vectors(self) -> dict:
        return {name: getattr(self, name).components.tolist() for name in VECTOR_FIELDS}


SCALAR_FIELDS = ("E1", "E2", "E2_formula", "residual", "transported_residual", "delta_E21", "omega21",
                 "red_shift", "red_shift_formula", "bracket", "bracket_radical", "q", "V1_sq",
                 "V2_1_sq", "perp_sq", "eps_V1", "eps_V2", "eps_q", "isometry_violation")
VECTOR_FIELDS = ("p1", "p2", "V1", "V2", "V2_1", "V2_1_parallel", "V2_1_perp", "N1", "delta_p")


def red_shift(report: DopplerReport) -> float:
    """(E2 - E1) / E2."""
    if report.E2 == 0.0:
        raise ZeroEnergyError("red shift undefined for E2 = 0")
    return (report.E2 - report.E1) / report.E2


def red_shift_expanded(*, E1, delta_E21, eps_V1, eps_V2, eps_q, bracket, omega21, p1_sq, V1_sq) -> float:
    """The red shift written through E1 only (no reference to E2)."""
    if E1 == 0.0:
        raise ZeroEnergyError("expanded red shift undefined for E1 = 0")
    root = math.sqrt(abs(p1_sq / (E1 * E1) - 1.0 / V1_sq))
    braces = delta_E21 / E1 + eps_V1 * eps_V2 * bracket - eps_V2 * eps_q * epsilon(E1) * omega21 * root
    if braces == 0.0:
        raise ZeroEnergyError("expanded red shift undefined: E2 = 0")
    return 1.0 - 1.0 / braces


def doppler_energy(scenario: DopplerScenario) -> DopplerReport:
    g = scenario.metric
    violation = ensure_consistent(scenario)
    r1, r2 = scenario.r1, scenario.r2
    V1 = scenario.observer_velocity(1)
    V2 = scenario.observer_velocity(2)
    V1_sq = _require_non_null(g, V1, "observer 1")
    V2_sq = g.square(V2)
    p1 = scenario.momentum_at(r1)
    p2 = scenario.momentum_at(r2)
    E1 = relative_energy(g, p1, V1)
    E2 = relative_energy(g, p2, V2)
    eV1, eV2 = epsilon(V1_sq), epsilon(V2_sq)

    V21 = scenario.transport(r2, r1, V2)
    dp = p2 - scenario.transport(r1, r2, p1)
    dE = eV2 * g.dot(dp, V2)

    par, perp = decompose(g, V1, V21)
    V21_sq = g.square(V21)
    perp_sq = g.square(perp)
    bracket = g.dot(V1, V21) / V1_sq
    radicand = (V21_sq - perp_sq) / V1_sq
    tol = RADICAL_TOL * max(1.0, (abs(V21_sq) + abs(perp_sq)) / abs(V1_sq))
    if radicand < -tol or abs(radicand - bracket * bracket) > tol:
        raise DiagnosticError(
            f"radical check failed: radicand {radicand!r} vs bracket^2 {bracket * bracket!r}; "
            "check metric signature and causal character of the observers")
    bracket_radical = math.sqrt(max(radicand, 0.0))

    N1 = normal_vector(g, p1, V1, E1)
    omega = recession_speed(g, V21, N1)
    p1_sq = g.square(p1)
    q = p1_sq - E1 * E1 / V1_sq
    eq = epsilon(q)
    E2_formula = dE + eV1 * eV2 * E1 * bracket - eV2 * eq * omega * math.sqrt(abs(q))
    E2_transported = dE + eV2 * g.dot(p1, V21)

    z = (E2 - E1) / E2 if E2 != 0.0 else math.nan
    try:
        z18 = red_shift_expanded(E1=E1, delta_E21=dE, eps_V1=eV1, eps_V2=eV2, eps_q=eq,
                                 bracket=bracket, omega21=omega, p1_sq=p1_sq, V1_sq=V1_sq)
    except ZeroEnergyError:
        z18 = math.nan
    return DopplerReport(
        E1=E1, E2=E2, E2_formula=E2_formula, delta_E21=dE, delta_p=dp, p1=p1, p2=p2,
        V1=V1, V2=V2, V2_1=V21, V2_1_parallel=par, V2_1_perp=perp, N1=N1, omega21=omega,
        eps_V1=eV1, eps_V2=eV2, eps_q=eq, q=q, V1_sq=V1_sq, V2_1_sq=V21_sq, perp_sq=perp_sq,
        bracket=bracket, bracket_radical=bracket_radical,
        residual=abs(E2_formula - E2), transported_residual=abs(E2_transported - E2),
        red_shift=z, red_shift_formula=z18, isometry_violation=violation,
    )


def consistency_bound(scenario: DopplerScenario, E2: float) -> float:
    """Ten times the integrator tolerance at the scale of E2."""
    return 10.0 * (scenario.engine.atol + scenario.engine.rtol * abs(E2))


# ---------------------------------------------------------------------------
# closed forms


def gr_photon_doppler(E1: float, omega21: float, perp_sq: float, c: float = 1.0) -> float:
    """Emitted energy for a photon and a parallel transport, observers with V^2 = -c^2."""
    if perp_sq < 0.0:
        raise ValueError(f"perp_sq must be non-negative, got {perp_sq!r}")
    return E1 * (omega21 / c + math.sqrt(1.0 + perp_sq / c ** 2))


def _check_subluminal(c, **velocities):
    for name, v in velocities.items():
        if float(np.dot(v, v)) >= c * c:
            raise ValidationError(f"superluminal observer: |{name}| >= c")


def sr_doppler(E1: float, v, v1, v2, c: float = 1.0) -> float:
    """E2 for constant 3-velocities in flat spacetime (particle v, observers v1, v2)."""
    v, v1, v2 = (np.asarray(a, dtype=float) for a in (v, v1, v2))
    _check_subluminal(c, v1=v1, v2=v2)
    c2 = c * c
    dilation = math.sqrt((1.0 - v1 @ v1 / c2) / (1.0 - v2 @ v2 / c2))
    return E1 * dilation * (1.0 - v2 @ v / c2) / (1.0 - v1 @ v / c2)


def sr_photon_doppler(E0: float, n, v1, v2, c: float = 1.0) -> float:
    """Energy detected by observer 1 of a photon emitted with E0 by observer 2.

    Obtained by solving the constant-velocity relation for E1 with v = c n.
    """
    n, v1, v2 = (np.asarray(a, dtype=float) for a in (n, v1, v2))
    if abs(n @ n - 1.0) > 1e-12:
        raise ValueError("photon direction must be a unit vector")
    _check_subluminal(c, v1=v1, v2=v2)
    c2 = c * c
    dilation = math.sqrt((1.0 - v2 @ v2 / c2) / (1.0 - v1 @ v1 / c2))
    return E0 * dilation * (1.0 - v1 @ n / c) / (1.0 - v2 @ n / c)


# ---------------------------------------------------------------------------
# free particles


def check_free_particle(scenario: DopplerScenario, samples: int = 8, seed: int = 0) -> float:
    """max |p(r') - I_{r->r'} p(r)| over seeded random pairs (r, r') in J."""
    rng = np.random.default_rng(seed)
    a, b = scenario.gamma.interval
    worst = 0.0
    for _ in range(samples):
        r, rp = rng.uniform(a, b, size=2)
        diff = scenario.momentum_at(rp) - scenario.transport(r, rp, scenario.momentum_at(r))
        worst = max(worst, diff.norm())
    return worst


def mass_parameter(scenario: DopplerScenario, r: float, tol: float = 1e-8) -> float:
    """mu with p(r) = mu gamma'(r), by least squares over the components."""
    p = scenario.momentum_at(r).components
    t = scenario.gamma.tangent(r)
    tt = float(t @ t)
    if tt == 0.0:
        raise NonCollinearMomentumError(f"gamma'({r!r}) is the zero vector")
    mu = float(p @ t) / tt
    miss = float(np.linalg.norm(p - mu * t))
    if miss > tol * max(1.0, float(np.linalg.norm(p))):
        raise NonCollinearMomentumError(f"p({r!r}) is not a multiple of gamma'({r!r}) (miss {miss:.3e})")
    return mu


@dataclass(frozen=True)
class ReversalCheck:
    """Residuals of the reversal identities for a linear transport.

    ``reversal_residual`` is ``|Dp(r2,r1) + I_{r2->r1} Dp(r1,r2)|`` and
    ``reversed_change_residual`` compares ``-eps(V2^2) Dp(r2,r1).(V2)_1`` with dE21.
    The ``same_sign_*`` variants drop the minus sign; they vanish only when the
    momentum change itself vanishes.
    """

    reversal_residual: float
    reversed_change_residual: float
    same_sign_reversal_residual: float
    same_sign_change_residual: float
    delta_p_norm: float


def delta_p_reversal(scenario: DopplerScenario) -> ReversalCheck:
    ensure_consistent(scenario)
    g = scenario.metric
    r1, r2 = scenario.r1, scenario.r2
    forward = momentum_change(scenario, r1, r2)        # at gamma(r2)
    backward = momentum_change(scenario, r2, r1)       # at gamma(r1)
    carried = scenario.transport(r2, r1, forward)      # at gamma(r1)
    V2 = scenario.observer_velocity(2)
    V21 = scenario.transport(r2, r1, V2)
    e2 = epsilon(g.square(V2))
    dE = e2 * g.dot(forward, V2)
    dE_back = e2 * g.dot(backward, V21)
    return ReversalCheck(
        reversal_residual=(backward + carried).norm(),
        reversed_change_residual=abs(-dE_back - dE),
        same_sign_reversal_residual=(backward - carried).norm(),
        same_sign_change_residual=abs(dE_back - dE),
        delta_p_norm=forward.norm(),
    )


# ---------------------------------------------------------------------------
# intersections


def solve_intersection(gamma: WorldLine, observer: WorldLine, r_guess=None, s_guess=None,
                       grid: int = 41, max_iter: int = 100):
    """Find (r, s) with gamma(r) = observer(s) by damped Gauss-Newton on |gamma(r) - x(s)|^2.

    A coarse grid over both intervals seeds the iteration when no guess is given.
    """
    ra, rb = gamma.interval
    sa, sb = observer.interval

    def resid(r, s):
        return gamma.position(r) - observer.position(s)

    if r_guess is None or s_guess is None:
        rs = np.linspace(ra, rb, grid)
        ss = np.linspace(sa, sb, grid)
        xs = [observer.position(s) for s in ss]
        best = None
        for r in rs:
            xr = gamma.position(r)
            for s, xo in zip(ss, xs):
                d = float(np.sum((xr - xo) ** 2))
                if best is None or d < best[0]:
                    best = (d, r, s)
        r_guess = best[1] if r_guess is None else r_guess
        s_guess = best[2] if s_guess is None else s_guess
    r, s = float(r_guess), float(s_guess)
    f = resid(r, s)
    cost = float(f @ f)
    for _ in range(max_iter):
        if cost == 0.0:
            break
        J = np.column_stack([gamma.tangent(r), -observer.tangent(s)])
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        lam = 1.0
        improved = False
        while lam > 1e-6:
            rn = min(max(r + lam * step[0], ra), rb)
            sn = min(max(s + lam * step[1], sa), sb)
            fn = resid(rn, sn)
            cn = float(fn @ fn)
            if cn < cost:
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
        converged = abs(rn - r) <= 1e-15 * max(1.0, abs(r)) and abs(sn - s) <= 1e-15 * max(1.0, abs(s))
        r, s, f, cost = rn, sn, fn, cn
        if converged:
            break
    if not same_point(gamma.position(r), observer.position(s)):
        raise ScenarioError(
            f"intersections: no intersection found (closest gap {math.sqrt(cost):.3e} at r={r!r}, s={s!r})")
    return r, s
