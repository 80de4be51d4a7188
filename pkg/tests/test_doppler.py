import math

import numpy as np
import pytest

from gendoppler import catalog
from gendoppler.doppler import (DopplerScenario, ExplicitMomentum, FreeMomentum, MassMomentum,
                                check_free_particle, consistency_bound, decompose, delta_p_reversal,
                                doppler_energy, energy_along, energy_change, gr_photon_doppler,
                                mass_parameter, momentum_change, normal_vector, recession_speed, red_shift,
                                red_shift_expanded, relative_energy, solve_intersection, sr_doppler,
                                sr_photon_doppler, transported_velocity)
from gendoppler.errors import (InconsistentTransportError, NonCollinearMomentumError, NullObserverError,
                               ScenarioError, ValidationError, ZeroEnergyError)
from gendoppler.geometry import MetricField, TangentVector
from gendoppler.transport import AnalyticWorldLine, LinearTransport, ParallelTransport, straight_line

from builders import (boost_observer, flat_nonfree, schwarzschild_nonfree, schwarzschild_static,
                       schwarzschild_timelike, sr_scenario)

MINK = catalog.minkowski()
O = np.zeros(4)


def vec(*c, base=O):
    return TangentVector(base, c)


# -- relative energy ------------------------------------------------------------

def test_relative_energy_of_photon_is_positive():
    E = 2.5
    n = np.array([0.6, 0.0, 0.8])
    assert relative_energy(MINK, vec(E, *(E * n)), vec(1, 0, 0, 0)) == pytest.approx(E, rel=1e-15)


def test_relative_energy_of_zero_momentum():
    assert relative_energy(MINK, vec(0, 0, 0, 0), vec(1, 0.2, 0, 0)) == 0.0


@pytest.mark.parametrize("c", [1.0, 3.0])
def test_relative_energy_massive(c):
    g = catalog.minkowski(c=c)
    mu = 1.3
    v = np.array([0.2, -0.1, 0.3]) * c
    va = np.array([-0.4, 0.25, 0.1]) * c
    p = vec(mu, *(mu * v))        # mu c (1, v/c) in (ct, x) reads mu (1, v) in (t, x)
    gamma_a = 1 / math.sqrt(1 - va @ va / c ** 2)
    V = vec(gamma_a, *(gamma_a * va))
    want = mu * c ** 2 * (1 - va @ v / c ** 2) * gamma_a
    assert relative_energy(g, p, V) == pytest.approx(want, rel=1e-14)


# -- scenario pieces ------------------------------------------------------------

def test_transported_velocity_flat():
    sc = sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0.5, 0, 0])
    V21 = transported_velocity(sc)
    np.testing.assert_array_equal(V21.components, sc.observer_velocity(2).components)
    np.testing.assert_allclose(V21.base, sc.gamma.position(sc.r1))


def test_identical_static_observers():
    sc = sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0, 0, 0])
    np.testing.assert_array_equal(transported_velocity(sc).components, sc.observer_velocity(1).components)


def test_transported_velocity_keeps_norm_in_schwarzschild():
    sc = schwarzschild_static()
    V21 = transported_velocity(sc)
    assert sc.metric.square(V21) == pytest.approx(-1.0, abs=1e-9)
    assert sc.metric.square(sc.observer_velocity(2)) == pytest.approx(-1.0, abs=1e-12)


def test_momentum_change_examples():
    assert momentum_change(sr_scenario(v=[0.3, 0, 0], v1=[0, 0, 0], v2=[0.1, 0, 0])).norm() <= 1e-10
    sc = flat_nonfree()
    assert momentum_change(sc, 0.5, 0.5).norm() == 0.0
    dp = momentum_change(sc)
    np.testing.assert_allclose(dp.components, sc.gamma.tangent(1.0), atol=1e-14)
    np.testing.assert_allclose(dp.base, sc.gamma.position(1.0))


def test_energy_change_examples():
    assert abs(energy_change(schwarzschild_static())) <= 1e-10
    sc = flat_nonfree(static_observer2=True)
    V2 = sc.observer_velocity(2)
    g = sc.metric
    want = -1 * g.dot(TangentVector(V2.base, sc.gamma.tangent(1.0)), V2)
    assert energy_change(sc) == pytest.approx(want, rel=1e-14)
    assert want == 1.0
    same = flat_nonfree(r2=0.0)
    assert energy_change(same) == 0.0


def test_energy_along_examples():
    sc = schwarzschild_nonfree()
    g = sc.metric
    V2 = sc.observer_velocity(2)
    assert energy_along(sc, sc.r2) == pytest.approx(relative_energy(g, sc.momentum_at(sc.r2), V2), rel=1e-12)
    V21 = transported_velocity(sc)
    want = -g.dot(sc.momentum_at(sc.r1), V21)
    assert energy_along(sc, sc.r1) == pytest.approx(want, rel=1e-9)
    free = schwarzschild_static()
    values = [energy_along(free, r) for r in np.linspace(*free.gamma.interval, 7)]
    assert max(values) - min(values) <= 1e-9


def test_energy_change_telescopes():
    for sc in (flat_nonfree(), schwarzschild_nonfree()):
        lhs = energy_change(sc)
        rhs = energy_along(sc, sc.r2) - energy_along(sc, sc.r1)
        assert abs(lhs - rhs) <= 1e-9


# -- decomposition, normal vector, recession speed ------------------------------

def test_decompose_examples():
    V1 = vec(1, 0, 0, 0)
    par, perp = decompose(MINK, V1, V1)
    assert par.components.tolist() == V1.components.tolist() and perp.norm() == 0.0
    par, perp = decompose(MINK, V1, vec(1.25, 0.75, 0, 0))
    assert par.components.tolist() == [1.25, 0, 0, 0]
    assert perp.components.tolist() == [0, 0.75, 0, 0]
    par, perp = decompose(MINK, V1, vec(0, 0.3, 0.2, 0))
    assert par.norm() == 0.0


def test_decompose_null_rejected():
    with pytest.raises(NullObserverError):
        decompose(MINK, vec(1, 1, 0, 0), vec(1, 0, 0, 0))


def test_decomposition_properties():
    rng = np.random.default_rng(1)
    for _ in range(50):
        V1 = vec(*rng.standard_normal(4))
        W = vec(*rng.standard_normal(4))
        if abs(MINK.square(V1)) < 1e-3:
            continue
        par, perp = decompose(MINK, V1, W)
        assert abs(MINK.dot(perp, V1)) <= 1e-10 * (1 + V1.norm() * W.norm())
        assert abs(MINK.dot(perp, par)) <= 1e-10 * (1 + W.norm() ** 2)
        assert (par + perp - W).norm() <= 1e-12 * (1 + W.norm())
        assert MINK.square(par) == pytest.approx(MINK.dot(V1, W) ** 2 / MINK.square(V1), rel=1e-9, abs=1e-12)


def test_normal_vector_examples():
    V1 = vec(1, 0, 0, 0)
    assert not np.any(normal_vector(MINK, V1 * 2.5, V1).components)
    E = 1.7
    n = np.array([0.0, 0.6, 0.8])
    N = normal_vector(MINK, vec(E, *(E * n)), V1)
    np.testing.assert_allclose(N.components, [0, *(-n)], atol=1e-15)


def test_recession_speed_examples():
    V1 = vec(1, 0, 0, 0)
    N = vec(0, -1, 0, 0)
    assert recession_speed(MINK, V1, N) == 0.0
    assert recession_speed(MINK, vec(1.25, 0.75, 0, 0), vec(0, 0, 0, 0)) == 0.0
    assert recession_speed(MINK, vec(1.25, 0.75, 0, 0), N) == -0.75


# -- the assembled relation ---------------------------------------------------

def test_static_flat_photon():
    rep = doppler_energy(sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0, 0, 0]))
    assert rep.E2 == rep.E1
    assert red_shift(rep) == 0.0
    assert rep.bracket == 1.0


def test_sr_worked_value():
    sc = sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0.5, 0, 0])
    rep = doppler_energy(sc)
    assert rep.ratio == pytest.approx(0.5 / math.sqrt(0.75), abs=1e-9)
    assert rep.residual <= consistency_bound(sc, rep.E2)
    assert red_shift(rep) == pytest.approx(1 - math.sqrt(0.75) / 0.5, abs=1e-12)


def test_schwarzschild_redshift_against_killing_oracle():
    sc = schwarzschild_static()
    rep = doppler_energy(sc)
    # E_obs sqrt(1 - 2M/r) is conserved along the ray (timelike Killing field)
    assert rep.E1 / rep.E2 == pytest.approx(math.sqrt(0.8 / 0.5), abs=1e-6)
    assert rep.residual <= consistency_bound(sc, rep.E2)
    assert red_shift(rep) == pytest.approx(1 - math.sqrt(1.6), abs=1e-6)
    assert rep.E2 < rep.E1


def test_red_shift_examples():
    class R:
        pass

    r = R()
    r.E1, r.E2 = 0.57735026918962584, 1.0
    assert red_shift(r) == pytest.approx(0.42265, abs=1e-5)
    r.E1 = r.E2 = 2.0
    assert red_shift(r) == 0.0
    r.E2 = 0.0
    with pytest.raises(ZeroEnergyError):
        red_shift(r)


def test_red_shift_field_identity():
    rep = doppler_energy(schwarzschild_nonfree())
    assert 1 - rep.red_shift == pytest.approx(rep.E1 / rep.E2, rel=1e-15)
    assert abs(rep.red_shift_formula - rep.red_shift) <= 1e-9


def test_red_shift_expanded_matches_ratio_from_fields():
    sc = flat_nonfree()
    rep = doppler_energy(sc)
    z = red_shift_expanded(E1=rep.E1, delta_E21=rep.delta_E21, eps_V1=rep.eps_V1, eps_V2=rep.eps_V2,
                           eps_q=rep.eps_q, bracket=rep.bracket, omega21=rep.omega21,
                           p1_sq=sc.metric.square(rep.p1), V1_sq=rep.V1_sq)
    assert z == pytest.approx(red_shift(rep), abs=1e-12)


def test_master_consistency_collection():
    for sc in (flat_nonfree(), schwarzschild_nonfree(), schwarzschild_static(), schwarzschild_timelike(),
               boost_observer()):
        rep = doppler_energy(sc)
        bound = consistency_bound(sc, rep.E2)
        assert rep.residual <= bound, sc.name
        assert rep.transported_residual <= bound, sc.name


def test_bracket_normalisation_is_plus_one_for_equal_velocities():
    sc = schwarzschild_static(r_obs2=4.0)
    rep = doppler_energy(sc)
    assert rep.bracket == pytest.approx(1.0, abs=1e-12)
    assert rep.bracket_radical == pytest.approx(1.0, abs=1e-9)
    assert rep.ratio == pytest.approx(1.0, abs=1e-12)


def test_free_particle_reduces_to_two_terms():
    rep = doppler_energy(schwarzschild_static())
    assert abs(rep.delta_E21) <= 1e-10
    two_term = rep.eps_V1 * rep.eps_V2 * rep.E1 * rep.bracket - rep.eps_V2 * rep.eps_q * rep.omega21 * math.sqrt(abs(rep.q))
    assert two_term == pytest.approx(rep.E2, abs=1e-9)


def test_null_observer_rejected():
    x1 = AnalyticWorldLine(["s", "-s", "0", "0"], "s", (-1, 1))
    base = sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0, 0, 0])
    sc = DopplerScenario(MINK, base.engine, base.gamma, x1, base.observer2, 0.0, 0.0, base.r2, base.s2,
                         base.momentum)
    with pytest.raises(NullObserverError, match="observer 1 velocity is null"):
        doppler_energy(sc)


def test_intersection_validated():
    base = sr_scenario(v=[1, 0, 0], v1=[0, 0, 0], v2=[0, 0, 0])
    with pytest.raises(ScenarioError, match="intersections"):
        DopplerScenario(MINK, base.engine, base.gamma, base.observer1, base.observer2, 0.5, 0.0,
                        base.r2, base.s2, base.momentum)


def test_inconsistent_linear_engine_refused():
    line = AnalyticWorldLine(["r", "0.2*r"], "r", (0, 3))
    g = catalog.minkowski(n=2)
    eng = LinearTransport([["0.3", "0"], ["0", "0"]], "r")
    x1 = AnalyticWorldLine(["s", "0"], "s", (-1, 1))
    x2 = AnalyticWorldLine(["2 + s", "0.4"], "s", (-1, 1))
    sc = DopplerScenario(g, eng, line, x1, x2, 0.0, 0.0, 2.0, 0.0, FreeMomentum((1.0, 0.2), 0.0))
    with pytest.raises(InconsistentTransportError):
        doppler_energy(sc)
    with pytest.raises(InconsistentTransportError):
        transported_velocity(sc)


# -- closed forms -----------------------------------------------------------------

def test_gr_closed_form_examples():
    assert gr_photon_doppler(1.3, 0.0, 0.0) == 1.3
    assert gr_photon_doppler(1.0, 0.5, 0.0) == 1.5
    with pytest.raises(ValueError):
        gr_photon_doppler(1.0, 0.1, -0.2)


@pytest.mark.parametrize("make", [lambda: schwarzschild_static(), lambda: schwarzschild_static(r_obs2=6.0),
                                  lambda: sr_scenario(v=[1, 0, 0], v1=[0.3, 0, 0], v2=[-0.2, 0.4, 0])])
def test_gr_closed_form_matches_pipeline(make):
    sc = make()
    rep = doppler_energy(sc)
    assert abs(rep.delta_E21) <= 1e-9
    assert abs(sc.metric.square(rep.p1)) <= 1e-9
    assert gr_photon_doppler(rep.E1, rep.omega21, rep.perp_sq, sc.c) == pytest.approx(rep.E2, abs=1e-7)


def test_sr_closed_form_examples():
    assert sr_doppler(2.0, [0.3, 0.1, 0], [0.2, 0.2, 0.1], [0.2, 0.2, 0.1]) == pytest.approx(2.0, rel=1e-15)
    assert sr_doppler(1.0, [1, 0, 0], [0, 0, 0], [0.5, 0, 0]) == pytest.approx(0.57735, abs=1e-5)
    with pytest.raises(ValidationError, match="superluminal"):
        sr_doppler(1.0, [1, 0, 0], [1.0, 0, 0], [0, 0, 0])


def test_sr_photon_closed_form():
    n = [1.0, 0, 0]
    assert sr_photon_doppler(1.0, n, [0, 0, 0], [0, 0, 0]) == 1.0
    E = sr_photon_doppler(1.0, n, [0, 0, 0], [0.5, 0, 0])
    assert E == pytest.approx(1 / 0.5773502691896258, rel=1e-12)
    assert round(E, 5) == 1.73205
    assert sr_photon_doppler(3.0, n, [0.1, 0.2, 0], [0.5, -0.1, 0]) == pytest.approx(
        3.0 * sr_photon_doppler(1.0, n, [0.1, 0.2, 0], [0.5, -0.1, 0]), rel=1e-15)
    # inversion: feeding the detected energy back through the forward relation returns E0
    E1 = sr_photon_doppler(1.0, n, [0.1, 0.2, 0], [0.5, -0.1, 0])
    assert sr_doppler(E1, n, [0.1, 0.2, 0], [0.5, -0.1, 0]) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_sr_pipeline_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    v, v1, v2 = (rng.uniform(-0.5, 0.5, 3) for _ in range(3))
    sc = sr_scenario(v=v, v1=v1, v2=v2)
    rep = doppler_energy(sc)
    assert rep.E2 == pytest.approx(sr_doppler(rep.E1, v, v1, v2), rel=1e-8)


# -- free particles -------------------------------------------------------------

def test_check_free_particle_examples():
    assert check_free_particle(schwarzschild_static()) <= 1e-9
    assert check_free_particle(flat_nonfree()) > 0.1
    assert check_free_particle(schwarzschild_timelike()) <= 1e-8


def test_mass_parameter_examples():
    sc = flat_nonfree(mu="3")
    for r in (0.0, 0.7, 2.0):
        assert mass_parameter(sc, r) == pytest.approx(3.0, rel=1e-15)
    sc = flat_nonfree()
    for r in (0.0, 0.7, 2.0):
        assert mass_parameter(sc, r) == pytest.approx(1 + r, rel=1e-14)
    sc = schwarzschild_timelike(free=True)
    mus = [mass_parameter(sc, r) for r in np.linspace(*sc.gamma.interval, 9)]
    assert max(mus) - min(mus) <= 1e-8
    assert mus[0] == pytest.approx(2.0, rel=1e-12)


def test_mass_parameter_rejects_non_collinear():
    with pytest.raises(NonCollinearMomentumError):
        mass_parameter(schwarzschild_nonfree(), 1.0)


def test_delta_p_reversal_examples():
    rev = delta_p_reversal(schwarzschild_static())
    assert rev.delta_p_norm <= 1e-10 and rev.reversal_residual <= 1e-10
    rev = delta_p_reversal(flat_nonfree())
    assert rev.reversal_residual <= 1e-12
    assert rev.reversed_change_residual <= 1e-12
    # the opposite sign is violated whenever the momentum actually changes
    assert rev.same_sign_reversal_residual > 0.1
    rev = delta_p_reversal(schwarzschild_nonfree())
    assert rev.reversal_residual <= 1e-9
    assert rev.reversed_change_residual <= 1e-9


# -- intersections ---------------------------------------------------------------

def test_solve_intersection():
    gamma = straight_line([0, 0, 0, 0], [1, 1, 0, 0], (0, 2), parameter="r")
    obs = AnalyticWorldLine(["1 + 1.25*s", "1 + 0.75*s", "0", "0"], "s", (-1, 1))
    r, s = solve_intersection(gamma, obs)
    assert r == pytest.approx(1.0, abs=1e-12) and s == pytest.approx(0.0, abs=1e-12)


def test_solve_intersection_failure():
    gamma = straight_line([0, 0, 0, 0], [1, 1, 0, 0], (0, 2), parameter="r")
    obs = AnalyticWorldLine(["s", "5", "0", "0"], "s", (-1, 1))
    with pytest.raises(ScenarioError, match="no intersection"):
        solve_intersection(gamma, obs)
