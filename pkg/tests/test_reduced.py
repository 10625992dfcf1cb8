import numpy as np
import pytest
from hypothesis import given, strategies as st

from agcsim.agc import AgcVariant
from agcsim.analysis import diagonal_certificate, lyapunov_V
from agcsim.errors import InfeasibleError
from agcsim.reduced import (build_matrix, equilibrium, invert_phi, model_matrix, overbias, phi,
                            phi_vector, reduced_ace, reduced_rhs, rhs_compiled,
                            steady_state_freq_and_NI)
from agcsim.sim import STEP_PU, random_feasible_load, random_system, two_area_system
from agcsim.system import AreaParams, GeneratorParams
from oracles import interconnection, invert_bisect, phi_brute, rk4, static_balance

pos = st.floats(0.05, 10.0)


def _area(units):
    """units: (u_star, u_min, u_max, alpha)."""
    gens = tuple(GeneratorParams(droop=0.05, u_star=us, u_min=lo, u_max=hi, alpha=a,
                                 participant=a > 0) for us, lo, hi, a in units)
    return AreaParams(gens, b=20.0)


def test_phi_examples():
    free = _area([(0.5, -10, 10, 1.0)])
    assert phi(0.37, free) == pytest.approx(0.37)
    assert phi(0.0, free) == 0.0
    both = _area([(0.5, 0.0, 0.6, 0.5), (0.5, 0.0, 0.6, 0.5)])
    assert phi(0.5, both) == pytest.approx(0.2)


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(0.01, 0.5), st.floats(0.01, 0.5),
                          st.floats(0.05, 1.0)), min_size=1, max_size=4),
       st.floats(-3, 3), st.floats(-3, 3))
def test_phi_matches_brute_and_is_monotone(raw, e1, e2):
    total = sum(a for *_, a in raw)
    units = [(us, us - dn, us + up, a / total) for us, dn, up, a in raw]
    area = _area(units)
    assert phi(e1, area) == pytest.approx(phi_brute(e1, units), abs=1e-14)
    lo, hi = sorted((e1, e2))
    assert phi(lo, area) <= phi(hi, area) + 1e-15


@given(st.lists(st.tuples(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.floats(0.05, 1.0)),
                min_size=1, max_size=4), st.floats(0.01, 0.99))
def test_invert_phi_breakpoint_walk(raw, frac):
    total = sum(a for *_, a in raw)
    units = [(0.5, 0.5 - dn, 0.5 + up, a / total) for dn, up, a in raw]
    area = _area(units)
    lo = sum(u[1] - u[0] for u in units)
    hi = sum(u[2] - u[0] for u in units)
    target = lo + frac * (hi - lo)
    eta = invert_phi(target, area)
    assert abs(phi(eta, area) - target) <= 1e-12
    assert eta == pytest.approx(invert_bisect(target, units), abs=1e-9)


def test_equilibrium_examples():
    free = _area([(0.5, -10, 10, 1.0)])
    assert invert_phi(0.05, free) == pytest.approx(0.05, abs=1e-15)
    clamped = _area([(0.5, 0.0, 0.54, 0.8), (0.5, 0.0, 1.0, 0.2)])
    assert invert_phi(0.06, clamped) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(InfeasibleError):
        invert_phi(0.04 + 0.5 + 1e-9, clamped)


def test_equilibrium_infeasible_reports_areas(two_area):
    with pytest.raises(InfeasibleError) as exc:
        equilibrium(np.array([0.1, 0.6]), two_area)
    assert tuple(exc.value.areas) == (1,)


def test_matrix_examples():
    assert np.array_equal(build_matrix("ace", [40, 40], [40, 40]).entries, np.eye(2))
    assert np.allclose(build_matrix("ace", [60, 40], [40, 40]).entries, [[1.25, 0.25], [0, 1]],
                       atol=1e-15)
    assert np.allclose(build_matrix("txt", [60, 40], [40, 40], [40, 40]).entries,
                       [[1.75, 0.75], [0.5, 1.5]], atol=1e-15)
    with pytest.raises(ValueError):
        build_matrix("ace", [1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        build_matrix("txt", [1, 2], [1, 2])


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.lists(pos, min_size=n, max_size=n),
                                                       st.lists(pos, min_size=n, max_size=n),
                                                       st.lists(pos, min_size=n, max_size=n))))
def test_rank_one_structure(args):
    b, beta, r_inv = map(np.array, args)
    M = build_matrix("ace", b, beta)
    n = b.size
    assert np.allclose(M.entries, interconnection(b, beta), atol=1e-14, rtol=0)
    assert np.allclose(M.entries, np.eye(n) - np.outer(M.gamma, np.ones(n)), atol=1e-14, rtol=0)
    assert np.allclose(M.entries.sum(axis=0), b.sum() / beta.sum(), atol=1e-13)
    T = build_matrix("txt", b, beta, r_inv)
    assert np.max(np.abs(T.entries - build_matrix("ace", b + r_inv, beta).entries)) <= 1e-14
    assert np.allclose(T.entries, interconnection(b, beta, r_inv), atol=1e-14, rtol=0)


def test_reduced_rhs_examples(two_area):
    dpl = np.array([STEP_PU, 0.0])
    d = reduced_rhs("simplified", np.zeros(2), dpl, two_area.tau_vec, two_area)
    assert np.allclose(d, [1.25 * STEP_PU / 60, 0.0], atol=1e-16)
    assert d[0] == pytest.approx(1.157407e-3, rel=1e-6)
    assert np.allclose(rhs_compiled(two_area, "simplified", np.zeros(2), dpl), d, atol=1e-18)
    eta_bar = equilibrium(dpl, two_area)
    assert np.allclose(reduced_rhs("textbook", eta_bar, dpl, two_area.tau_vec, two_area), 0,
                       atol=1e-15)
    matched = two_area_system(1.0)
    d = reduced_rhs("simplified", np.zeros(2), np.array([0.0, 0.03]), matched.tau_vec, matched)
    assert d[0] == 0.0 and d[1] > 0


def test_reduced_ace_examples(two_area):
    dpl = np.array([STEP_PU, 0.0])
    B = model_matrix(two_area, "simplified")
    assert np.allclose(reduced_ace(np.zeros(2), dpl, B, two_area), [-1.25 * STEP_PU, 0.0])
    assert reduced_ace(np.zeros(2), dpl, B, two_area)[0] == pytest.approx(-0.069444, abs=1e-6)
    assert np.allclose(reduced_ace(np.zeros(2), dpl, np.eye(2)), -dpl)
    assert np.allclose(reduced_ace(equilibrium(dpl, two_area), dpl, B, two_area), 0, atol=1e-15)


def test_steady_state_formula_examples():
    df, ni = steady_state_freq_and_NI([0.03, -0.01], [0.03, -0.01], [40, 40])
    assert df == 0 and np.all(ni == 0)
    df, ni = steady_state_freq_and_NI([0, 0], [STEP_PU, 0], [40, 40])
    assert df == pytest.approx(-6.944444e-4, rel=1e-6)
    assert np.allclose(ni, [-STEP_PU / 2, STEP_PU / 2])


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-1, 1), min_size=n, max_size=n), st.lists(st.floats(-1, 1), min_size=n, max_size=n),
    st.lists(pos, min_size=n, max_size=n))), st.floats(0.1, 10))
def test_steady_state_formula_oracle(args, c):
    u_dev, dpl, beta = map(np.array, args)
    df, ni = steady_state_freq_and_NI(u_dev, dpl, beta)
    df_o, ni_o = static_balance(u_dev, dpl, beta)
    assert df == pytest.approx(df_o, abs=1e-12)
    assert np.allclose(ni, ni_o, atol=1e-12)
    assert abs(ni.sum()) <= 1e-12
    df_c, _ = steady_state_freq_and_NI(u_dev, dpl, c * beta)
    assert df_c == pytest.approx(df / c, rel=1e-12, abs=1e-15)


def test_overbias_vector():
    assert np.allclose(overbias([60, 40], [40, 40]), [0.25, 0])
    assert np.allclose(overbias([20, 40], [40, 40]), [-0.25, 0])


def test_non_interaction_exact():
    m = two_area_system(1.0)
    B = model_matrix(m, "simplified").entries
    dpl = np.array([0.0, 0.04])
    eta = rk4(lambda e: -(B @ (phi_vector(e, m) - dpl)) / m.tau_vec, np.zeros(2), 300.0, 0.5)
    assert eta[0] == 0.0
    assert eta[1] == pytest.approx(0.04 * (1 - np.exp(-300 / 60)), rel=1e-8)


@pytest.mark.parametrize("variant", ["simplified", "textbook"])
@given(seed=st.integers(0, 100_000))
def test_global_convergence_and_lyapunov_decrease(variant, seed):
    rng = np.random.default_rng(seed)
    m = random_system(rng, int(rng.integers(2, 7)))
    dpl = random_feasible_load(rng, m, fraction=0.8)
    eta_bar = equilibrium(dpl, m)
    B = model_matrix(m, AgcVariant(variant)).entries
    d = diagonal_certificate(B)
    assert d is not None
    eta = eta_bar + rng.uniform(-3, 3, m.n_areas)
    V = [lyapunov_V(eta, eta_bar, m, d, B=B)]
    f = lambda e: reduced_rhs(variant, e, dpl, m.tau_vec, m)
    h = 0.2 * m.tau_vec.min() / np.abs(B).sum(axis=1).max()
    rate = 1.0 / m.tau_vec.max()
    for _ in range(60):
        eta = rk4(f, eta, 0.25 / rate, h)
        V.append(lyapunov_V(eta, eta_bar, m, d, B=B))
    V = np.array(V)
    assert np.all(np.diff(V) <= 1e-12 * max(V[0], 1e-300))
    assert V[-1] < V[0]
