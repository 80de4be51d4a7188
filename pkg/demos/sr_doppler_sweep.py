"""Receding observer in flat spacetime.

A photon travels along +x.  Observer 1 is at rest, observer 2 moves along +x
with speed v2.  The assembled energy relation is compared with the closed form
for constant velocities at several speeds.
"""
import math
from pathlib import Path

from gendoppler.doppler import sr_doppler
from gendoppler.scenario import load, sweep

here = Path(__file__).resolve().parent
loaded = load(str(here.parent / "scenarios" / "sr_receding.toml"))

speeds = [0.0, 0.25, 0.5, 0.75, 0.9]
rows = sweep(loaded, "parameters.v2", speeds)

print(f"{'v2':>5} {'E2/E1':>12} {'closed form':>12} {'residual':>10}")
for v2, row in zip(speeds, rows):
    closed = sr_doppler(1.0, [1, 0, 0], [0, 0, 0], [v2, 0, 0])
    print(f"{v2:5.2f} {row['ratio']:12.9f} {closed:12.9f} {row['residual']:10.1e}")

# the textbook longitudinal factor sqrt((1 - b)/(1 + b)) for comparison
print("sqrt((1-b)/(1+b)) at b=0.5:", math.sqrt(0.5 / 1.5))
