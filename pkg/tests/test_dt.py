import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.signal
from hypothesis import assume, given, settings, strategies as st

from dacsim import dt
from dacsim.graph import GRAPH_B, WeightedDigraph, contraction_norm, laplacian, random_connected_graph
from dacsim.signals import Constant, Polynomial, SignalBundle

VARIANTS = ("P", "AccelP", "PI", "AccelPI")


def mode_poly(variant, lam, rho, kI, kp):
    """Characteristic polynomial of one Laplacian mode, derived by z-transform."""
    if variant == "P":
        return [1.0, -1.0 + kI * lam]
    if variant == "AccelP":
        return np.polyadd(np.polymul([1, -rho**2], [1, -1]), [kI * lam, 0])
    if variant == "PI":
        return [1.0, -(1 + rho - kp * lam), rho - kp * lam + kp * kI * lam**2]
    a = np.polymul(np.polymul([1, -rho], [1, -rho]), np.polymul([1, -1], [1, -rho**2]))
    b = np.polymul([kp * lam, 0], np.polymul([1, -1], [1, -rho**2]))
    return np.polyadd(np.polyadd(a, b), [kp * kI * lam**2, 0, 0])


def spec_for(variant, kI, kp, rho):
    return {"P": lambda: dt.P(kI), "AccelP": lambda: dt.AccelP(kI, rho),
            "PI": lambda: dt.PI(kI, kp, rho), "AccelPI": lambda: dt.AccelPI(kI, kp, rho)}[variant]()


def worst_mode_radius(variant, lams, rho, kI, kp):
    return max(np.max(np.abs(np.roots(mode_poly(variant, l, rho, kI, kp)))) for l in lams)


def test_gain_examples():
    r = dt.gains("P", 3.0, 3.0)
    assert r.rho == 0 and r.kI == pytest.approx(1 / 3)
    r = dt.gains("P", 2.0, 4.0)
    assert (r.rho, r.kI) == (pytest.approx(1 / 3), pytest.approx(1 / 3))
    r = dt.gains("AccelP", 2.0, 4.0)
    s2 = math.sqrt(2)
    assert r.rho == pytest.approx((2 - s2) / (2 + s2))
    assert r.rho == pytest.approx(0.171573, abs=1e-6)
    assert r.kI == pytest.approx(4 / (2 + s2) ** 2)
    assert r.kI == pytest.approx(0.343146, abs=1e-6)
    r = dt.gains("PI", 2.0, 4.0)
    assert r.rho == pytest.approx(4.25 / 7.75)
    assert r.rho == pytest.approx(0.548387, abs=1e-6)
    assert dt.gains("PI", 2.0, 4.0).to_dict()["variant"] == "PI"


def test_gain_errors():
    with pytest.raises(dt.DesignError):
        dt.gains("P", 0.0, 4.0)
    with pytest.raises(dt.DesignError):
        dt.gains("Q", 1.0, 4.0)
    with pytest.raises(dt.DesignError):
        dt.optimal_rho("P", 1.5)


@pytest.mark.parametrize("variant", VARIANTS)
def test_complete_graph_limit(variant):
    r = dt.gains(variant, 5.0, 5.0)
    near = dt.gains(variant, 5.0 * (1 - 1e-10), 5.0)
    assert r.rho == pytest.approx(0.0, abs=1e-12)
    assert r.kI == pytest.approx(near.kI, rel=1e-4)
    assert r.kp == pytest.approx(near.kp, rel=1e-4, abs=1e-12)


@pytest.mark.parametrize("variant", VARIANTS)
def test_branch_points_are_continuous(variant):
    for x in (3 - math.sqrt(5), 2 * (math.sqrt(2) - 1)):
        assert dt.optimal_rho(variant, x) == pytest.approx(dt.optimal_rho(variant, x + 1e-9), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(VARIANTS), st.floats(0.02, 1.0), st.floats(0.5, 10.0))
def test_optimal_rho_is_worst_case_mode_radius(variant, lam_r, lamN):
    r = dt.gains(variant, lam_r * lamN, lamN)
    lams = np.linspace(r.lambda2, r.lambdaN, 401)
    assert worst_mode_radius(variant, lams, r.rho, r.kI, r.kp) == pytest.approx(r.rho, abs=2e-5)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(VARIANTS), st.floats(0.05, 0.95), st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
def test_perturbed_gains_are_no_better(variant, lam_r, dk, dp):
    r = dt.gains(variant, lam_r, 1.0)
    kI, kp = r.kI * (1 + dk), r.kp * (1 + dp)
    lams = np.linspace(r.lambda2, r.lambdaN, 201)
    assert worst_mode_radius(variant, lams, r.rho, kI, kp) >= r.rho - 1e-9


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("seed", range(4))
def test_radius_matches_mode_oracle_for_arbitrary_gains(variant, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(int(rng.integers(4, 9)), rng)
    L = laplacian(g)
    lam = np.linalg.eigvalsh(L)[1:]
    kI, kp, rho = rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3), rng.uniform(0.1, 0.9)
    spec = spec_for(variant, kI, kp, rho)
    expected = worst_mode_radius(variant, lam, rho, kI, kp)
    assert dt.closed_loop_disagreement_radius(spec, L, tol=1e-12) == pytest.approx(expected, abs=1e-9)


def test_radius_examples_graph_b():
    L = laplacian(GRAPH_B)
    assert dt.closed_loop_disagreement_radius(dt.P(1 / 3), L) == pytest.approx(1 / 3, abs=1e-9)
    r = dt.gains("AccelP", 2.0, 4.0)
    assert dt.closed_loop_disagreement_radius(dt.AccelP(r.kI, r.rho), L) == pytest.approx(r.rho, abs=1e-8)
    s = dt.scale_for_contraction(L, 0.9)
    assert dt.closed_loop_disagreement_radius(dt.StaticConsensus(), s * L) < 1


def test_cluster_centroids_merge_split_roots():
    eigs = np.array([0.5 + 1e-7, 0.5 - 1e-7, 0.2])
    np.testing.assert_allclose(sorted(dt.cluster_centroids(eigs, 1e-5)), [0.2, 0.5])


def test_p_step_examples():
    L = laplacian(GRAPH_B)
    u = np.full(4, 1.5)
    st0 = dt.initial_state(dt.P(0.3), u)
    st1 = dt.step(dt.P(0.3), st0, L, u)
    np.testing.assert_array_equal(st1.vars["p"], st0.vars["p"])
    np.testing.assert_array_equal(dt.output(dt.P(0.3), st1, L, u), u)

    L2 = laplacian(WeightedDigraph.ring(2))
    u = np.array([0.0, 2.0])
    st1 = dt.step(dt.P(0.5), dt.initial_state(dt.P(0.5), u), L2, u)
    np.testing.assert_array_equal(dt.output(dt.P(0.5), st1, L2, u), [1.0, 1.0])


def test_p_step_exact_rational():
    L = np.array([[Fraction(v) for v in row] for row in laplacian(GRAPH_B).astype(int)], dtype=object)
    u = np.array([Fraction(1), Fraction(-2), Fraction(3), Fraction(5)], dtype=object)
    spec = dt.P(Fraction(1, 3))
    st = dt.initial_state(spec, u)
    for _ in range(5):
        st = dt.step(spec, st, L, u)
    assert sum(st.vars["p"]) == 0
    assert all(isinstance(v, Fraction) for v in st.vars["p"])


@pytest.mark.parametrize("variant", ["P", "AccelP"])
def test_sum_p_conserved(variant):
    rng = np.random.default_rng(1)
    L = laplacian(GRAPH_B)
    r = dt.gains(variant, 2.0, 4.0)
    spec = spec_for(variant, r.kI, r.kp, r.rho)
    st = dt.initial_state(spec, np.zeros(4))
    for _ in range(10_000):
        st = dt.step(spec, st, L, rng.normal(size=4))
    assert abs(np.sum(st.vars["p"])) < 1e-10


def test_pi_robust_to_initial_state():
    r = dt.gains("PI", 2.0, 4.0)
    sig = SignalBundle(tuple(Constant(v) for v in (1.0, -2.0, 3.0, 5.0)))
    init = {"p": [3.0, -1.0, 0.2, 7.0], "q": [1.0, 2.0, -3.0, 0.0]}
    tr = dt.simulate(dt.PI(r.kI, r.kp, r.rho), GRAPH_B, sig, 400, init=init)
    assert np.max(np.abs(tr.error()[-1])) < 1e-9


def test_poly_cascade_zm_constant_inputs():
    sig = SignalBundle(tuple(Constant(v) for v in (1.0, -2.0, 3.0, 5.0)))
    for m in (1, 2, 3):
        tr = dt.simulate(dt.PolyCascadeZM(m), GRAPH_B, sig, 200)
        assert np.all(np.isnan(tr.x[:m]))
        assert np.max(np.abs(tr.x[-1] - 1.75)) < 1e-9


def test_poly_cascade_p_tracks_quadratic_with_three_stages():
    sig = SignalBundle(tuple(Polynomial((c, 0.1 * c, 0.01 * (1 + c))) for c in (1.0, -1.0, 2.0, 0.5)))
    tr = dt.simulate(dt.PolyCascadeP(3), GRAPH_B, sig, 500)
    assert np.max(np.abs(tr.error()[-1])) < 1e-6


def test_divergence_raises():
    sig = SignalBundle(tuple(Constant(v) for v in (1.0, -2.0, 3.0, 5.0)))
    with pytest.raises(FloatingPointError):
        dt.simulate(dt.P(5.0), GRAPH_B, sig, 2000)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        dt.simulate(dt.P(0.3), GRAPH_B, SignalBundle((Constant(1.0),)), 10)


def test_filter_step_matches_lfilter():
    rng = np.random.default_rng(0)
    f = dt.design_prefilter(2, 0.3, 3)
    x = rng.normal(size=(200, 3))
    ref = scipy.signal.lfilter(f.num, f.den, x, axis=0)
    state = f.initial_state(3)
    out = []
    for row in x:
        y, state = f.filter_step(state, row)
        out.append(y)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_prefilter_properties():
    f = dt.design_prefilter(3, 0.3, 3)
    assert f.num[0] == 0.0
    assert f.den[0] == 1.0
    assert abs(f.response(0.0) - 1.0) < 1e-15
    assert dt.passband_deviation(f, 0.3) <= 1e-2 + 1e-12
    a = 0.4
    one = dt.prefilter_from_pole(1, a)
    assert one.response(np.pi) == pytest.approx(1 - 2 / (1 + a))
    adv = f.advanced()
    np.testing.assert_allclose(adv.response(0.7), np.exp(0.7j) * f.response(0.7))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(1, 5), st.floats(1e-3, 0.1))
def test_default_pole_is_largest_meeting_tolerance(theta_c, q, tol):
    try:
        f = dt.design_prefilter(1, theta_c, q, tol)
    except dt.DesignError:
        return
    pole = -f.den[1] / q
    assert dt.passband_deviation(f, theta_c) <= tol * (1 + 1e-9)
    nudged = dt.prefilter_from_pole(q, min(pole + 1e-3, 0.999))
    assert dt.passband_deviation(nudged, theta_c) > tol


def test_pole_near_one_misses_narrow_passband():
    # a slow highpass leaves most of [0, 0.2] outside the unity band
    assert dt.passband_deviation(dt.prefilter_from_pole(3, 0.9), 0.2) > 0.5


def test_scales():
    L = laplacian(GRAPH_B)
    assert dt.best_scale(L) == pytest.approx(1 / 3, abs=1e-8)
    s = dt.scale_for_contraction(L, 0.8)
    assert s == pytest.approx(0.1, abs=1e-12)
    assert contraction_norm(GRAPH_B, s) == pytest.approx(0.8)
    with pytest.raises(dt.DesignError):
        dt.scale_for_contraction(L, 0.1)


def test_admissible_stepsize():
    assert dt.admissible_stepsize([-3.0, -3.0]) == pytest.approx(2 / 3)
    assert dt.admissible_stepsize([-1 + 2j, -1 - 2j]) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        dt.admissible_stepsize([0.1, -1.0])
    eigs = np.linalg.eigvals(dt.directed_pi_generator(1.0, 1.0, laplacian(GRAPH_B)))
    assert dt.admissible_stepsize(eigs) == pytest.approx(0.5, abs=1e-9)


def test_euler_directed_pi_matches_generator():
    L = laplacian(GRAPH_B)
    d = 0.2
    M, _ = dt.state_matrix(dt.EulerDirectedPi(1.0, 1.0, d), L)
    A = dt.directed_pi_generator(1.0, 1.0, L)
    rad = dt.closed_loop_disagreement_radius(dt.EulerDirectedPi(1.0, 1.0, d), L)
    assert rad == pytest.approx(np.max(np.abs(np.linalg.eigvals(np.eye(len(A)) + d * A))), abs=1e-9)
