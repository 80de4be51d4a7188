"""Gravitational redshift between static observers in Schwarzschild (M = 1).

A radial photon falls from r = 10 to r = 4.  Parallel transport along the
numerically integrated null geodesic carries the observer velocities, and the
energy ratio is compared with the Killing oracle sqrt(f(10)/f(4)).
"""
import math
from pathlib import Path

from gendoppler.doppler import doppler_energy, gr_photon_doppler
from gendoppler.scenario import load

here = Path(__file__).resolve().parent
sc = load(str(here.parent / "scenarios" / "schwarzschild_redshift.toml")).scenario
rep = doppler_energy(sc)

f = lambda r: 1 - 2 / r
print("E1 (static observer at r = 4): ", rep.E1)
print("E2 (static observer at r = 10):", rep.E2)
print("E1/E2 pipeline:     ", rep.E1 / rep.E2)
print("E1/E2 Killing oracle:", math.sqrt(f(10) / f(4)))
print("closed form E2:      ", gr_photon_doppler(rep.E1, rep.omega21, rep.perp_sq))
print("recession speed w21:", rep.omega21)
print("consistency residual:", rep.residual)
