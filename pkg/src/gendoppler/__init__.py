"""Generalized Doppler relations for spaces with a transport along paths."""
from .catalog import builtin, euclidean, minkowski, schwarzschild, sphere2
from .doppler import (DopplerReport, DopplerScenario, ExplicitMomentum, FreeMomentum, MassMomentum,
                      check_free_particle, decompose, delta_p_reversal, doppler_energy, energy_along,
                      energy_change, gr_photon_doppler, mass_parameter, momentum_change, normal_vector,
                      recession_speed, red_shift, red_shift_expanded, relative_energy, solve_intersection,
                      sr_doppler, sr_photon_doppler, transported_velocity)
from .errors import GenDopplerError
from .expr import Expression, differentiate, parse
from .geometry import MetricField, TangentVector, christoffel_at, epsilon, metric_at, scalar_product
from .transport import (AnalyticWorldLine, LinearTransport, NumericWorldLine, ParallelTransport,
                        TransportEngine, WorldLine, free_momentum, geodesic, holonomy_angle,
                        isometry_violation, straight_line, transport)

__version__ = "0.1.0"
