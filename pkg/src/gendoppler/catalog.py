"""Built-in metrics: Minkowski, Schwarzschild, Euclidean and the round 2-sphere."""
from __future__ import annotations

from .errors import ScenarioError
from .geometry import MetricField


def _diag(entries, coordinates, name):
    n = len(coordinates)
    comps = [["0"] * n for _ in range(n)]
    for i, e in enumerate(entries):
        comps[i][i] = e
    return MetricField(comps, coordinates, name=name)


def minkowski(n: int = 4, c: float = 1.0) -> MetricField:
    """Signature (-+++...), coordinates (t, x, y, z, x4, ...), g_tt = -c^2."""
    if n < 2:
        raise ScenarioError("metric: minkowski needs n >= 2")
    spatial = ["x", "y", "z"] + [f"x{k}" for k in range(4, n)]
    coords = ["t"] + spatial[: n - 1]
    return _diag([f"-({c!r})^2"] + ["1"] * (n - 1), coords, f"minkowski(n={n}, c={c!r})")


def schwarzschild(M: float = 1.0, c: float = 1.0) -> MetricField:
    """Schwarzschild exterior in (t, r, th, ph) with G = 1."""
    f = f"(1 - 2*{M!r}/(({c!r})^2*r))"
    return _diag([f"-({c!r})^2*{f}", f"1/{f}", "r^2", "r^2*sin(th)^2"],
                 ["t", "r", "th", "ph"], f"schwarzschild(M={M!r}, c={c!r})")


def euclidean(n: int = 3) -> MetricField:
    coords = [f"x{k}" for k in range(1, n + 1)]
    return _diag(["1"] * n, coords, f"euclidean(n={n})")


def sphere2(radius: float = 1.0) -> MetricField:
    return _diag([f"({radius!r})^2", f"({radius!r})^2*sin(th)^2"], ["th", "ph"],
                 f"sphere2(radius={radius!r})")


BUILTINS = {
    "minkowski": (minkowski, {"n": 4, "c": 1.0}),
    "schwarzschild": (schwarzschild, {"M": 1.0, "c": 1.0}),
    "euclidean": (euclidean, {"n": 3}),
    "sphere2": (sphere2, {"radius": 1.0}),
}


def builtin(name: str, **params) -> MetricField:
    try:
        factory, defaults = BUILTINS[name]
    except KeyError:
        raise ScenarioError(f"metric: unknown builtin {name!r}; choose from {sorted(BUILTINS)}") from None
    unknown = set(params) - set(defaults)
    if unknown:
        raise ScenarioError(f"metric: builtin {name!r} has no parameters {sorted(unknown)}")
    kwargs = dict(defaults)
    kwargs.update(params)
    if "n" in kwargs:
        kwargs["n"] = int(kwargs["n"])
    return factory(**kwargs)


def describe() -> list[tuple[str, dict]]:
    return [(name, dict(defaults)) for name, (_, defaults) in BUILTINS.items()]
