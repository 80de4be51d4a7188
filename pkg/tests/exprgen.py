"""Seeded random expressions drawn from the expression grammar, plus an FD oracle."""
import math
import random

import numpy as np

from gendoppler.errors import GenDopplerError
from gendoppler.expr import FUNCTIONS, Expression, parse

VARIABLES = ("x", "y")
H_SCALE = np.finfo(float).eps ** (1.0 / 3.0)
# a binding counts as interior when the expression and its partials stay finite and
# moderate on a neighbourhood much wider than the difference step
PROBE = 1e-3
MAX_VALUE = 1e4
# intermediate values beyond this (e.g. 1/sin(pi)) swamp the variables in rounding
MAX_INTERMEDIATE = 1e6


def random_text(rng: random.Random, depth: int = 4) -> str:
    if depth <= 0 or rng.random() < 0.25:
        roll = rng.random()
        if roll < 0.55:
            return rng.choice(VARIABLES)
        if roll < 0.9:
            return repr(rng.choice([0.5, 1, 2, 3, 1.5, 0.25, 7]))
        return "pi"
    kind = rng.random()
    if kind < 0.45:
        op = rng.choice("+-*/")
        return f"({random_text(rng, depth - 1)} {op} {random_text(rng, depth - 1)})"
    if kind < 0.6:
        base = random_text(rng, depth - 1)
        if rng.random() < 0.7:
            return f"({base})^{rng.choice(['2', '3', '0.5', '-1'])}"
        return f"({base})^({random_text(rng, depth - 2)})"
    if kind < 0.7:
        return f"-({random_text(rng, depth - 1)})"
    return f"{rng.choice(FUNCTIONS)}({random_text(rng, depth - 1)})"


def _value(e, b):
    try:
        v = e.eval(b)
    except (GenDopplerError, OverflowError):
        return None
    return v if math.isfinite(v) and abs(v) <= MAX_VALUE else None


def _largest_intermediate(node, b) -> float:
    """Largest |value| over all subtrees of ``node`` at binding ``b``."""
    try:
        here = abs(Expression(node, VARIABLES).eval(b))
    except (GenDopplerError, OverflowError):
        return math.inf
    children = [getattr(node, k) for k in ("arg", "left", "right") if hasattr(node, k)]
    return max([here] + [_largest_intermediate(c, b) for c in children])


def interior_binding(e, rng: random.Random, tries: int = 20):
    checks = [e] + [e.diff(v) for v in VARIABLES]
    for _ in range(tries):
        b = {v: rng.uniform(-2.5, 2.5) for v in VARIABLES}
        ok = True
        for v in VARIABLES:
            for k in (-1, -0.5, 0, 0.5, 1):
                probe = dict(b)
                probe[v] += k * PROBE * max(1.0, abs(b[v]))
                if any(_value(f, probe) is None for f in checks):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return b
    return None


def central_difference(e, b, var):
    h = H_SCALE * max(1.0, abs(b[var]))
    up, down = dict(b), dict(b)
    up[var] += h
    down[var] -= h
    return (e.eval(up) - e.eval(down)) / (up[var] - down[var])


def derivative_cases(seed: int, count: int):
    """Yield (text, expression, binding, variable) with an interior binding."""
    rng = random.Random(seed)
    made = 0
    while made < count:
        text = random_text(rng)
        e = parse(text, VARIABLES)
        b = interior_binding(e, rng)
        if b is None or _largest_intermediate(e.root, b) > MAX_INTERMEDIATE:
            continue
        made += 1
        yield text, e, b, rng.choice(VARIABLES)


def derivative_error(e, b, var) -> float:
    """|d - fd| / max(1, |d|)."""
    d = e.diff(var).eval(b)
    fd = central_difference(e, b, var)
    return abs(d - fd) / max(1.0, abs(d))


def oracle_converged(e, b, var, tol: float = 1e-7) -> bool:
    """True when the difference quotient is in its asymptotic regime at the prescribed step.

    Decided from the oracle alone (steps h and 2h), never from the symbolic result.
    """
    h = H_SCALE * max(1.0, abs(b[var]))

    def fd(step):
        up, down = dict(b), dict(b)
        up[var] += step
        down[var] -= step
        return (e.eval(up) - e.eval(down)) / (up[var] - down[var])

    a, c = fd(h), fd(2 * h)
    return abs(a - c) <= tol * max(1.0, abs(a))
