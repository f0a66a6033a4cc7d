import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rvlab.errors import ConfigurationError, DomainError, RegimeError
from rvlab.oracles import LimitMeasureQuery
from rvlab.rng import stream, substream
from rvlab.rv_core import (
    PointMass,
    RegVarSpec,
    SlowlyVaryingSpec,
    TailIndex,
    radius_moment,
    radius_quantile,
    scaled_to_moment,
    survival,
)
from rvlab.sre import (
    IndependentPairSampler,
    SreModel,
    StationarySample,
    check_conditions,
    iterate_sre,
    majorant_moment,
    nu_measure,
    one_step_check,
    series_truncation,
)


def pareto(alpha=1.0):
    return RegVarSpec(1, TailIndex(alpha))


def log_power_a(target, beta=-4.0, alpha=1.0):
    return scaled_to_moment(RegVarSpec(1, TailIndex(alpha), SlowlyVaryingSpec("log-power", 1.0, beta)), target)


def heavy_a(target=0.5, b=1.0, beta=-4.0):
    return SreModel.from_laws(log_power_a(target, beta), PointMass([b]), 1)


def heavy_b(a=0.5, alpha=1.0):
    return SreModel.from_laws(PointMass([a]), pareto(alpha), 1, regime="heavy-B")


def constant_pair(a, b):
    # both factors deterministic; the declared pair tail is only a placeholder
    return SreModel(1, IndependentPairSampler(PointMass([a]), PointMass([b]), 1), heavy_b().declared_tail, "heavy-B")


# --- model -----------------------------------------------------------------


def test_model_requires_heavy_factor():
    with pytest.raises(ConfigurationError):
        SreModel.from_laws(PointMass([0.5]), PointMass([1.0]), 1)


def test_model_dimension_checked():
    with pytest.raises(ConfigurationError):
        SreModel.from_laws(PointMass(np.eye(2).ravel()), pareto(), 1, regime="heavy-B")


def test_model_dict_roundtrip():
    m = heavy_a()
    back = SreModel.from_dict(m.to_dict())
    assert back.to_dict() == m.to_dict()
    a1, b1 = m.sample_pairs(100, stream(1))
    a2, b2 = back.sample_pairs(100, stream(1))
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)


def test_pair_draws_have_consistent_shapes():
    d = 2
    a_law = RegVarSpec(4, TailIndex(1.5), SlowlyVaryingSpec("log-power", 1.0, -4.0))
    m = SreModel.from_laws(a_law, PointMass([1.0, 0.0]), d)
    a, b = m.sample_pairs(50, stream(2))
    assert a.shape == (50, 2, 2) and b.shape == (50, 2)


# --- conditions ------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.5, 1.0, 3.0])
def test_conditions_constant_a(alpha):
    rep = check_conditions(heavy_b(0.5, alpha), 10**4, stream(3))
    assert rep.ea_alpha == pytest.approx(0.5**alpha, rel=1e-14)
    assert rep.ea_alpha_se == pytest.approx(0.0, abs=1e-15)
    assert rep.c3_ok
    # B carries the whole tail here
    assert not rep.c3_nondegenerate


def test_conditions_infinite_moment():
    m = SreModel.from_laws(pareto(1.0), PointMass([1.0]), 1)
    rep = check_conditions(m, 10**4, stream(4))
    assert not rep.ea_alpha_finite and not rep.c3_ok


def test_conditions_log_power_moment(rng):
    a = log_power_a(0.7, beta=-2.0)
    assert radius_moment(a, 1.0) == pytest.approx(0.7, rel=1e-9)
    # independent numerical integration of E[A] = int S(e^y) e^y dy; past
    # y = 700 the integrand is C / y^2, which leaves g(700) * 700
    g = lambda y: survival(a, math.exp(y)) * math.exp(y)
    direct = sum(integrate.quad(g, lo, hi, limit=500)[0] for lo, hi in ((-50, 200), (200, 700))) + g(700) * 700
    assert direct == pytest.approx(0.7, rel=1e-6)
    rep = check_conditions(SreModel.from_laws(a, PointMass([1.0]), 1), 10**5, rng)
    assert rep.ea_alpha_finite
    assert abs(rep.ea_alpha - 0.7) < 4 * rep.ea_alpha_se


def test_conditions_heavy_a_nondegenerate():
    rep = check_conditions(heavy_a(0.5), 10**5, stream(5))
    assert rep.c3_ok and rep.c3_nondegenerate


# --- truncation ------------------------------------------------------------


def test_truncation_examples():
    assert series_truncation(None, 0.5, 0.5) == 1
    expected = math.ceil(math.log(1e-6) / math.log(0.7))
    assert expected == 39
    assert 0.7**39 <= 1e-6 < 0.7**38
    assert series_truncation(None, 1e-6, 0.7) == 39
    with pytest.raises(RegimeError):
        series_truncation(None, 0.1, 1.0)
    with pytest.raises(DomainError):
        series_truncation(None, 1.5, 0.5)


@given(st.floats(1e-12, 0.99), st.floats(1e-6, 0.999))
def test_truncation_is_smallest(eps, ea):
    n = series_truncation(None, eps, ea)
    assert ea**n <= eps
    assert n == 1 or ea ** (n - 1) > eps


# --- paths -----------------------------------------------------------------


def test_zero_b_gives_zero_paths():
    m = SreModel.from_laws(log_power_a(0.5), PointMass([0.0]), 1)
    s = iterate_sre(m, 100, "series", 20, stream(6))
    assert np.all(s.vectors == 0)


def test_zero_a_gives_single_b():
    m = heavy_b(0.0)
    s = iterate_sre(m, 100, "series", 20, stream(7))
    # the first step's B comes from substream 0 of the same generator
    b = m.sample_pairs(100, substream(stream(7), 0))[1]
    np.testing.assert_array_equal(s.vectors, b)


def test_geometric_series_paths():
    s = iterate_sre(constant_pair(0.5, 1.0), 10, "series", 20, stream(8))
    np.testing.assert_allclose(s.vectors, 2 * (1 - 2.0**-20), rtol=1e-15)


def test_series_and_markov_agree_in_law():
    m = heavy_a(0.5)
    depth = series_truncation(m, 1e-6, 0.5)
    series = iterate_sre(m, 10**4, "series", depth, stream(9)).norms()
    markov = iterate_sre(m, 10**4, "markov", depth, stream(10)).norms()
    res = stats.ks_2samp(series, markov)
    assert res.pvalue > 0.01


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 0.9))
def test_majorant_dominates_pathwise(seed, target):
    m = heavy_a(target)
    s = iterate_sre(m, 500, "series", 15, stream(seed), with_majorant=True)
    assert np.all(s.norms() <= s.majorant * (1 + 1e-12))
    assert np.all(s.norms() ** m.alpha <= (s.majorant * (1 + 1e-12)) ** m.alpha)


def test_bad_modes():
    m = heavy_a()
    with pytest.raises(DomainError):
        iterate_sre(m, 10, "neither", 5, stream(11))
    with pytest.raises(DomainError):
        iterate_sre(m, 10, "markov", 5, stream(11), with_majorant=True)


@pytest.mark.parametrize("suffix", [".npz", ".csv"])
def test_stationary_sample_persistence(tmp_path, suffix):
    s = iterate_sre(heavy_a(), 50, "series", 10, stream(12), seed=12)
    back = StationarySample.load(s.save(tmp_path / f"paths{suffix}"))
    np.testing.assert_array_equal(back.vectors, s.vectors)
    assert (back.mode, back.truncation_depth, back.seed) == ("series", 10, "12")


def test_paths_reproducible():
    m = heavy_a()
    a = iterate_sre(m, 200, "markov", 30, stream(13)).vectors
    b = iterate_sre(m, 200, "markov", 30, stream(13)).vectors
    assert a.tobytes() == b.tobytes()


# --- majorant --------------------------------------------------------------


def test_majorant_geometric():
    res = majorant_moment(constant_pair(0.5, 1.0), 100, 40, stream(14))
    assert abs(res.value - 2.0) <= 1e-10


def test_majorant_zero_a():
    m = heavy_b(0.0, alpha=1.0)
    res = majorant_moment(m, 10**4, 10, stream(15))
    # the first step of the majorant series draws from substream 0 of substream 0
    direct = m.sample_pairs(10**4, substream(substream(stream(15), 0), 0))[1]
    assert res.value == pytest.approx(float(np.mean(np.abs(direct[:, 0]))), rel=1e-12)


def test_majorant_stable_for_heavy_a():
    res = majorant_moment(heavy_a(0.7, beta=-2.0), 10**5, 40, stream(16))
    assert math.isfinite(res.value)
    assert abs(res.details["stability_ratio"] - 1) < 1e-3


def test_majorant_regime_error():
    m = SreModel.from_laws(log_power_a(1.5), PointMass([1.0]), 1)
    with pytest.raises(RegimeError):
        majorant_moment(m, 10**4, 10, stream(17))


# --- limit measure ---------------------------------------------------------


def test_nu_reduction_with_constant_b():
    ea, b = 0.5, 1.0
    m = heavy_a(ea, b)
    res = nu_measure(m, LimitMeasureQuery(1.0), None, 10**5, stream(18), ea_alpha=ea)
    # independent moment of R0: the majorant equals R0 for positive scalars
    mom = majorant_moment(m, 10**5, series_truncation(m, 1e-6, ea), stream(19))
    reduced = mom.value / (1 - ea)
    assert abs(res.value - reduced) < 4 * math.hypot(res.std_error, mom.std_error / (1 - ea)) + res.details["remainder_bound"]
    # with alpha = 1 linearity also gives E[R0] = b / (1 - ea) in closed form
    assert reduced == pytest.approx(b / (1 - ea) ** 2, rel=0.01)


def test_nu_zero_a_keeps_first_term():
    m = heavy_b(0.0, alpha=1.5)
    res = nu_measure(m, LimitMeasureQuery(1.0), 5, 10**4, stream(20), ea_alpha=0.0)
    # theta = (0, 1): the first term is E[(1 / u)^alpha] = 1 exactly
    assert res.details["terms"][0] == pytest.approx(1.0, abs=1e-12)
    assert all(t == 0.0 for t in res.details["terms"][1:])


def test_nu_query_scaling():
    m = heavy_a(0.5)
    base = nu_measure(m, LimitMeasureQuery(1.0), 6, 2000, stream(21), ea_alpha=0.5).value
    for u in (2.0, 0.3, 7.0):
        scaled = nu_measure(m, LimitMeasureQuery(u), 6, 2000, stream(21), ea_alpha=0.5).value
        assert scaled == pytest.approx(base * u ** -m.alpha, rel=1e-9)


def test_nu_terms_decay_geometrically():
    ea = 0.5
    res = nu_measure(heavy_a(ea), LimitMeasureQuery(1.0), 10, 2 * 10**4, stream(22), ea_alpha=ea)
    terms, ses = res.details["terms"], res.details["term_std_errors"]
    for j in range(3, len(terms) - 1):
        assert terms[j + 1] / terms[j] <= ea + 3 * ses[j + 1] / terms[j]


def test_nu_rejects_unstable_regime():
    with pytest.raises(RegimeError):
        nu_measure(heavy_a(0.5), LimitMeasureQuery(1.0), 5, 100, stream(23), ea_alpha=1.2)


# --- one-step identity -----------------------------------------------------


def test_one_step_zero_a():
    m = heavy_b(0.0)
    lhs, rhs = one_step_check(m, pareto(), 1.0, LimitMeasureQuery(1.0), 10**5, stream(24))
    assert lhs.value == 1.0
    assert rhs.value == pytest.approx(1.0, abs=1e-12)
    assert rhs.details["second"] == 0.0


def one_step_setup():
    a = log_power_a(0.5)
    return a, SreModel.from_laws(a, PointMass([1.0]), 1)


def test_one_step_sides_against_independent_oracles():
    a, m = one_step_setup()
    lhs, rhs = one_step_check(m, a, 1.0, LimitMeasureQuery(1.0), 10**6, stream(25))
    # rhs: E[X] + d_x E[A] with both moments 0.5 by construction
    assert abs(rhs.value - 1.0) < 4 * rhs.std_error
    # lhs: exact finite-t ratio P(AX + 1 > t) / P(A + 1 > t) by quadrature
    t = lhs.details["threshold"]
    inner = lambda lu: survival(a, (t - 1) / float(radius_quantile(a, math.exp(lu)))) * math.exp(lu)
    num, _ = integrate.quad(inner, -60, 0, limit=500)
    exact = num / survival(a, t - 1)
    assert abs(lhs.value - exact) < 4 * lhs.std_error


@pytest.mark.xfail(strict=True, reason="log-power tails converge too slowly for the limit at 1e6 draws")
def test_one_step_limit_agreement():
    a, m = one_step_setup()
    lhs, rhs = one_step_check(m, a, 1.0, LimitMeasureQuery(1.0), 10**6, stream(26))
    assert abs(lhs.value - rhs.value) < 4 * math.hypot(lhs.std_error, rhs.std_error)


def test_one_step_rhs_scaling():
    a, m = one_step_setup()
    base = one_step_check(m, a, 1.0, LimitMeasureQuery(1.0), 5000, stream(27))[1]
    for u in (0.5, 3.0):
        r = one_step_check(m, a, 1.0, LimitMeasureQuery(u), 5000, stream(27))[1]
        assert r.value == pytest.approx(base.value * u ** -m.alpha, rel=1e-12)


def test_one_step_preconditions():
    a, m = one_step_setup()
    with pytest.raises(DomainError):
        one_step_check(m, a, 0.0, LimitMeasureQuery(1.0), 100, stream(28))
    with pytest.raises(ConfigurationError):
        one_step_check(m, PointMass([1.0]), 1.0, LimitMeasureQuery(1.0), 100, stream(28))
