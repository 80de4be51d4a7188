"""Parallel transport around latitude circles of the unit sphere.

After one revolution at polar angle th a vector comes back rotated by
2 pi cos(th) (mod 2 pi).  Also shows that transport along a self intersecting
figure eight depends on the parameter interval, not only on the end points.
"""
import math

import numpy as np

from gendoppler import catalog
from gendoppler.geometry import TangentVector
from gendoppler.transport import AnalyticWorldLine, ParallelTransport, holonomy_angle

sphere = catalog.sphere2()
eng = ParallelTransport(sphere)

print(f"{'theta':>7} {'|angle|':>10} {'2 pi cos(th) mod 2pi':>22}")
for th in (0.3, 0.6, math.pi / 3, 1.2, 1.5):
    loop = AnalyticWorldLine([repr(th), "u"], "u", (0.0, 2 * math.pi))
    a = holonomy_angle(eng, loop, TangentVector(loop.position(0.0), [1.0, 0.0]))
    want = (2 * math.pi * math.cos(th) + math.pi) % (2 * math.pi) - math.pi
    print(f"{th:7.4f} {abs(a):10.6f} {abs(want):22.6f}")

eight = AnalyticWorldLine(["pi/2 + 0.3*sin(2*u)", "0.6*sin(u)"], "u", (0.0, 4.0))
A = TangentVector(eight.position(0.0), [1.0, 0.0])
B = eng.transport(eight, 0.0, math.pi, A)
print("figure eight: gamma(0) =", eight.position(0.0), " gamma(pi) =", np.round(eight.position(math.pi), 12))
print("A =", A.components, " I_{0->pi} A =", B.components)
