import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonloclab.specfun import (
    DegenerateParameters,
    HypergeometricNonconvergence,
    PoleError,
    critical_exponents,
    epstein_zeta,
    frac_lap_constant,
    gamma_fn,
    hbeta_asymptotic,
    hbeta_constant,
    hbeta_flap_exact,
    hyp2f1,
    riesz_constant,
)

# frozen oracle values (mpmath, 30 digits)
GAMMA_ORACLE = {
    0.5: 1.772453850905516104,
    1.5: 0.88622692545275805198,
    -0.5: -3.5449077018110322079,
    4.25: 8.2850851418352196021,
    -2.75: -1.0044979832303122524,
    0.01: 99.432585119150601827,
}


@pytest.mark.parametrize("x,ref", sorted(GAMMA_ORACLE.items()))
def test_gamma_frozen(x, ref):
    assert gamma_fn(x) == pytest.approx(ref, rel=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-20, max_value=60).filter(lambda x: abs(x - round(x)) > 1e-3 or x > 0.5))
def test_gamma_matches_mpmath(x):
    assert gamma_fn(x) == pytest.approx(float(mpmath.gamma(x)), rel=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0, -7.0])
def test_gamma_poles(x):
    with pytest.raises(PoleError):
        gamma_fn(x)


@settings(max_examples=150, deadline=None)
@given(
    st.floats(min_value=-3, max_value=4),
    st.floats(min_value=-3, max_value=4),
    st.floats(min_value=0.2, max_value=5),
    st.floats(min_value=-40, max_value=0),
)
def test_hyp2f1_matches_mpmath(a, b, c, z):
    ref = float(mpmath.hyp2f1(a, b, c, z))
    got = hyp2f1(a, b, c, z)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12 * max(1.0, abs(ref)))


def test_hyp2f1_known_closed_forms():
    # 2F1(1,1;2;z) = -log(1-z)/z
    for z in (-0.5, -3.0, -100.0):
        assert hyp2f1(1, 1, 2, z) == pytest.approx(-math.log(1 - z) / z, rel=1e-12)
    # 2F1(a,b;b;z) = (1-z)^-a
    assert hyp2f1(0.7, 1.3, 1.3, -4.0) == pytest.approx(5.0**-0.7, rel=1e-12)
    assert hyp2f1(0.0, 2.0, 3.0, -9.0) == 1.0


def test_hyp2f1_vectorized():
    z = -np.linspace(0, 50, 11)
    v = hyp2f1(1.5, 2.0, 1.0, z)
    ref = [float(mpmath.hyp2f1(1.5, 2.0, 1.0, zz)) for zz in z]
    np.testing.assert_allclose(v, ref, rtol=1e-10)


def test_hyp2f1_errors():
    with pytest.raises(ValueError):
        hyp2f1(1, 1, -2, -0.5)
    with pytest.raises(ValueError):
        hyp2f1(1, 1, 2, 0.5)
    with pytest.raises(HypergeometricNonconvergence) as ei:
        hyp2f1(1.5, 2.5, 1.0, -8.0, max_terms=20)
    assert ei.value.bound is not None


def test_constants():
    assert frac_lap_constant(1, 0.5) == pytest.approx(1 / math.pi, rel=1e-14)
    assert riesz_constant(3, 2.0) == pytest.approx(1 / (4 * math.pi), rel=1e-14)
    assert riesz_constant(2, 1.0) == pytest.approx(1 / (2 * math.pi), rel=1e-14)
    with pytest.raises(ValueError):
        frac_lap_constant(3, 1.0)


def test_hbeta_lower_case_is_power():
    # beta = N - 2s: (-Delta)^s h_beta = C' h_{N+2s}
    N, s = 3, 0.75
    beta = N - 2 * s
    c = 2 ** (2 * s) * gamma_fn(N / 2 + s) / gamma_fn(N / 2 - s)
    r = np.linspace(0, 30, 31)
    np.testing.assert_allclose(hbeta_flap_exact(r, beta, N, s), c * (1 + r * r) ** (-(N + 2 * s) / 2), rtol=1e-11)
    assert hbeta_constant(beta, N, s) == pytest.approx(c, rel=1e-13)


@pytest.mark.parametrize("beta,N,s", [(1.0, 2, 0.5), (3.0, 2, 0.5), (2.0, 3, 0.75), (1.2, 3, 0.3)])
def test_hbeta_asymptotics_match_closed_form(beta, N, s):
    law = hbeta_asymptotic(beta, N, s)
    assert law.rate == "pure_power"
    assert hbeta_flap_exact(1e4, beta, N, s) / law(1e4) == pytest.approx(1.0, rel=1e-3)


def test_hbeta_log_case_approaches_law():
    law = hbeta_asymptotic(2.0, 2, 0.5)
    assert law.rate == "power_log"
    gaps = [abs(hbeta_flap_exact(r, 2.0, 2, 0.5) / law(r) - 1) for r in (1e2, 1e3, 1e4, 1e6)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 0.05


@pytest.mark.parametrize("a,b,c,z", [(1.5, 2.5, 1.0, -1e6), (1.5, 1.5, 1.0, -1e4), (1.5, -0.5, 1.0, -20.0),
                                     (2.0, 3.0, 1.5, -10.5), (0.25, 2.25, 0.5, -300.0)])
def test_hyp2f1_far_integer_difference(a, b, c, z):
    assert hyp2f1(a, b, c, z) == pytest.approx(float(mpmath.hyp2f1(a, b, c, z)), rel=1e-9)


def test_gamma_ratio_refuses_numerator_pole():
    from nonloclab.specfun import _ratio

    with pytest.raises(DegenerateParameters):
        _ratio([-2.0], [1.5])
    assert _ratio([2.5], [-1.0]) == 0.0


def test_critical_exponents_boson_star():
    ex = critical_exponents(3, 0.5, 2.0)
    assert ex.lower == pytest.approx(5 / 3)
    assert ex.upper == pytest.approx(5 / 2)
    assert ex.l2crit == pytest.approx(2.0)
    assert ex.sobolev == pytest.approx(3.0)
    assert ex.sublinear_threshold == pytest.approx(7 / 4)
    assert math.isinf(critical_exponents(1, 0.5, 0.5).upper)


def test_epstein_zeta():
    assert epstein_zeta(0.0, 3) == -1.0
    assert epstein_zeta(-2.0, 2) == 0.0
    assert epstein_zeta(1.0, 3) == pytest.approx(-2.8372974794806, rel=1e-11)
    assert epstein_zeta(1.0, 2) == pytest.approx(-3.9002649200, rel=1e-9)
    for p in (0.5, 2.5, 4.0):
        assert epstein_zeta(p, 1) == pytest.approx(2 * float(mpmath.zeta(p)), rel=1e-11)
    # p > N: direct lattice sum converges
    j = np.arange(-300, 301)
    r2 = (j[:, None] ** 2 + j[None, :] ** 2).astype(float)
    direct = np.sum(r2[r2 > 0] ** -3.0)
    assert epstein_zeta(6.0, 2) == pytest.approx(direct, rel=1e-9)
    with pytest.raises(ValueError):
        epstein_zeta(3.0, 3)
