import numpy as np
import pytest
from hypothesis import given, strategies as st

from agcsim.errors import ConvergenceError, ModelError
from agcsim.sim import STEP_PU, random_system, two_area_system
from agcsim.system import (AreaParams, GeneratorParams, TieLine, build_system, frozen_jacobian,
                           full_derivatives, measurements, steady_state, tie_flows,
                           verify_steady_state_identities)
from oracles import static_balance


def _gen(droop=0.05, alpha=1.0, participant=True, **kw):
    kw.setdefault("u_star", 0.5)
    kw.setdefault("u_min", 0.0)
    kw.setdefault("u_max", 1.0)
    return GeneratorParams(droop=droop, alpha=alpha, participant=participant, **kw)


def test_two_area_frc(two_area):
    assert np.allclose(two_area.beta_vec, [40.0, 40.0])
    assert two_area.beta == pytest.approx(80.0)
    assert two_area.n_states == 5 * 2 + 2 * 4


def test_single_area_frc():
    m = build_system([AreaParams((_gen(droop=1.0),), b=2.0, D=1.0)], [])
    assert m.beta == pytest.approx(2.0)


def test_three_area_frc():
    areas = [AreaParams((_gen(droop=1 / beta),), b=beta) for beta in (30.0, 40.0, 50.0)]
    m = build_system(areas, [TieLine(0, 1), TieLine(1, 2)])
    assert m.beta == pytest.approx(120.0)


@pytest.mark.parametrize("mutate, field", [
    (lambda a: AreaParams(a.generators, b=0.0), "areas[0].b"),
    (lambda a: AreaParams(a.generators, b=1.0, D=-1.0), "areas[0].D"),
    (lambda a: AreaParams(a.generators, b=1.0, tau=0.5), "areas[0].tau"),
    (lambda a: AreaParams((_gen(alpha=0.9),), b=1.0), "areas[0].alpha"),
    (lambda a: AreaParams((_gen(droop=-0.05),), b=1.0), "areas[0].generators[0].droop"),
    (lambda a: AreaParams((_gen(u_star=2.0),), b=1.0), "areas[0].generators[0].u_star"),
    (lambda a: AreaParams((_gen(), _gen(alpha=0.2, participant=False)), b=1.0),
     "areas[0].generators[1].alpha"),
])
def test_rejects_bad_area(mutate, field):
    good = AreaParams((_gen(),), b=20.0)
    with pytest.raises(ModelError) as exc:
        build_system([mutate(good), good], [TieLine(0, 1)])
    assert exc.value.field == field


def test_bias_message():
    with pytest.raises(ModelError, match="frequency_bias must be positive"):
        build_system([AreaParams((_gen(),), b=-1.0)], [])


def test_rejects_disconnected_and_bad_ties():
    a = AreaParams((_gen(),), b=20.0)
    with pytest.raises(ModelError, match="connect"):
        build_system([a, a, a], [TieLine(0, 1)])
    with pytest.raises(ModelError):
        build_system([a, a], [TieLine(0, 0)])
    with pytest.raises(ModelError):
        build_system([a, a], [TieLine(0, 1, p_max=0.0)])


def test_equilibrium_has_zero_derivative(two_area):
    x = two_area.schedule_state()
    for variant in (None, "simplified", "textbook"):
        assert np.all(full_derivatives(two_area, x, np.zeros(2), variant) == 0.0)


def test_load_step_initial_slope(two_area):
    d = full_derivatives(two_area, two_area.schedule_state(), np.array([STEP_PU, 0.0]))
    sl = two_area.slices()
    assert d[sl.freq][0] == pytest.approx(-STEP_PU / (2 * 6.5), rel=1e-14)
    assert d[sl.freq][1] == 0.0


def test_uniform_frequency_offset_decelerates(two_area):
    sl = two_area.slices()
    x = two_area.schedule_state()
    x[sl.freq] = 0.001
    # let the governor/turbine powers take their static response
    x[sl.p_gov] = two_area.u_star - 0.001 / two_area.droop
    x[sl.p_mech] = x[sl.p_gov]
    d = full_derivatives(two_area, x, np.zeros(2))
    expected = -(0.001 * two_area.r_inv_vec + 0.0) / (2 * 6.5)
    assert np.allclose(d[sl.freq], expected, rtol=1e-12)
    assert np.all(d[sl.freq] < 0)


def test_dimension_and_finiteness_checks(two_area):
    with pytest.raises(ValueError):
        full_derivatives(two_area, np.zeros(3), np.zeros(2))
    x = two_area.schedule_state()
    x[0] = np.nan
    with pytest.raises(ValueError):
        full_derivatives(two_area, x, np.zeros(2))


def test_angle_perturbation_flow(two_area):
    x = two_area.schedule_state()
    x[0] += 0.01
    ni = measurements(two_area, x).ni
    assert ni[0] == pytest.approx(2 * np.sin(0.01), rel=1e-14)
    assert ni[1] == -ni[0]


@given(st.lists(st.floats(-1, 1), min_size=18, max_size=18))
def test_interchange_sums_to_zero(vals):
    m = two_area_system(1.5)
    ni = tie_flows(m, np.array(vals))
    assert abs(ni.sum()) <= 1e-15


def test_schedule_measurements(two_area):
    m = measurements(two_area, two_area.schedule_state())
    assert np.all(m.ni == 0) and np.all(m.freq == 0) and np.all(m.ace == 0)
    assert np.allclose(m.power, two_area.u_star)


def test_steady_state_after_step(two_area):
    dpl = np.array([STEP_PU, 0.0])
    x = steady_state(two_area, dpl=dpl)
    m = measurements(two_area, x, u=two_area.u_star)
    assert np.allclose(m.freq, -6.944444444444e-4, atol=1e-12)
    assert m.ni[0] == pytest.approx(-STEP_PU / 2, abs=1e-10)
    rep = verify_steady_state_identities(two_area, x, dpl, u=two_area.u_star)
    assert rep.passed, rep.violations


def test_schedule_is_steady_state(two_area):
    x = steady_state(two_area)
    assert np.allclose(x, two_area.schedule_state(), atol=1e-12)


def test_corrupted_state_reports_violation(two_area):
    x = steady_state(two_area)
    x[two_area.slices().freq.start] += 0.01
    rep = verify_steady_state_identities(two_area, x, np.zeros(2))
    assert rep.violations["synchronism"] == pytest.approx(0.01, abs=1e-15)
    assert not rep.passed


def test_loss_of_synchronism_detected():
    a = AreaParams((_gen(u_min=-5.0, u_max=5.0),), b=20.0)
    m = build_system([a, a], [TieLine(0, 1, p_max=0.2)])
    with pytest.raises(ConvergenceError):
        steady_state(m, dpl=np.array([1.0, 0.0]))


@given(st.integers(0, 10_000))
def test_equilibrium_frequency_law(seed):
    rng = np.random.default_rng(seed)
    m = random_system(rng, int(rng.integers(2, 5)))
    u = np.clip(m.u_star + rng.uniform(-0.1, 0.1, m.n_gens), m.u_min, m.u_max)
    dpl = rng.uniform(-0.1, 0.1, m.n_areas)
    x = steady_state(m, u=u, dpl=dpl)
    u_dev = np.bincount(m.gen_area, weights=u - m.u_star, minlength=m.n_areas)
    df, ni = static_balance(u_dev, dpl, m.beta_vec)
    meas = measurements(m, x, u=u)
    assert np.allclose(meas.freq, df, atol=1e-8)
    assert np.allclose(meas.ni, ni, atol=1e-8)
    assert verify_steady_state_identities(m, x, dpl, u=u).passed


def test_frozen_jacobian_stable(two_area):
    for dpl in (np.zeros(2), np.array([STEP_PU, 0.0])):
        x = steady_state(two_area, dpl=dpl)
        ev = np.linalg.eigvals(frozen_jacobian(two_area, x, dpl, u=two_area.u_star))
        ev = ev[np.argsort(ev.real)]
        assert abs(ev[-1]) < 1e-8  # uniform angle shift
        assert np.all(ev[:-1].real < -0.1)


def test_zero_filter_constant_supported():
    m = two_area_system(1.5, T_f=0.0)
    dpl = np.array([STEP_PU, 0.0])
    x = steady_state(m, dpl=dpl)
    assert verify_steady_state_identities(m, x, dpl, u=m.u_star).passed
    ace = measurements(m, x, u=m.u_star).ace
    assert ace[0] == pytest.approx(-STEP_PU / 2 + 60 * (-STEP_PU / 80), abs=1e-10)
