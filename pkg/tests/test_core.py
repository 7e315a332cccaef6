import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonloclab.core import (
    ConfigError,
    Field,
    GridSpec,
    Nonlinearity,
    ProblemSpec,
    SolverOptions,
    load_config,
    nonlinearity_eval,
    parse_config,
    parse_nonlinearity,
    radial_profile,
    symmetrize_radial,
)

BOSON = """
[problem]
N = 3
s = 0.5
alpha = 2
mu = 1
nonlinearity = "power(2)"

[grid]
n = 64
L = 40
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_boson_star(tmp_path):
    spec = load_config(write(tmp_path, BOSON))
    assert (spec.N, spec.s, spec.alpha, spec.mu, spec.mode) == (3, 0.5, 2.0, 1.0, "choquard")
    assert spec.nonlinearity == Nonlinearity("power", r=2.0)
    assert spec.grid == GridSpec(64, 40.0, 3)
    # documented defaults
    assert spec.solver.grad_tol == 1e-8 and spec.solver.poho_tol == 1e-6
    assert spec.solver.max_iters == 5000 and spec.solver.step == 0.5


@pytest.mark.parametrize(
    "patch,key",
    [
        (("s = 0.5", "s = 1.5"), "s"),
        (("alpha = 2", "alpha = 3.5"), "alpha"),
        (("n = 64", "n = 60"), "n"),
        (("L = 40", "L = -1"), "L"),
        (('"power(2)"', '"power(0.5)"'), "nonlinearity"),
        (("mu = 1", 'mu = "free"'), "mu"),
    ],
)
def test_validation_names_key(tmp_path, patch, key):
    with pytest.raises(ConfigError) as ei:
        load_config(write(tmp_path, BOSON.replace(*patch)))
    assert ei.value.key == key
    assert key in str(ei.value)


def test_malformed_and_unknown(tmp_path):
    with pytest.raises(ConfigError) as ei:
        load_config(write(tmp_path, "[problem\nN=3"))
    assert ei.value.key == "syntax"
    with pytest.raises(ConfigError) as ei:
        load_config(write(tmp_path, BOSON + "\n[extra]\nx=1\n"))
    assert ei.value.key == "extra"
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_local_mode_and_mass():
    spec = parse_config({"problem": {"N": 2, "s": 0.5, "alpha": "none", "mass_target": 3.0,
                                     "nonlinearity": "power(3)"}})
    assert spec.mode == "local" and spec.alpha is None and spec.mu is None
    assert spec.grid == GridSpec(256, 80.0, 2)


def test_nonlinearity_examples():
    f, F = nonlinearity_eval(parse_nonlinearity("power(2)"), 3.0)
    assert (f, F) == (3.0, 4.5)
    f, F = nonlinearity_eval(parse_nonlinearity("saturable"), 1.0)
    assert f == pytest.approx(0.5) and F == pytest.approx(0.5 * (1 - math.log(2)))
    for text in ("power(2.5)", "combined(2.5,2.2,-)", "saturable", "sqrt_type", "log_power(3)"):
        assert nonlinearity_eval(parse_nonlinearity(text), 0.0) == (0.0, 0.0)
    assert parse_nonlinearity("combined(3, 2.5)").sign == 1
    for bad in ("power", "cubic(3)", "combined(2,2,x)", "saturable(2)"):
        with pytest.raises(ConfigError):
            parse_nonlinearity(bad)


KINDS = ["power(2)", "power(1.7)", "combined(2.5,2.2,-)", "combined(3,2.2,+)", "saturable", "sqrt_type",
         "log_power(3)"]


@pytest.mark.parametrize("text", KINDS)
@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 2.0, 5.0, -0.7, -3.0])
def test_F_prime_is_f(text, t):
    nl = parse_nonlinearity(text)
    h = 1e-5 * max(1.0, abs(t))
    fd = (nl.F(t + h) - nl.F(t - h)) / (2 * h)
    assert fd == pytest.approx(float(nl.f(t)), rel=1e-6, abs=1e-9)


def test_problem_spec_exclusive_mu_mass():
    g = GridSpec(16, 10.0, 2)
    nl = parse_nonlinearity("power(2)")
    with pytest.raises(ConfigError):
        ProblemSpec(2, 0.5, 1.0, "choquard", 1.0, 2.0, nl, g)
    with pytest.raises(ConfigError):
        ProblemSpec(2, 0.5, 1.0, "choquard", None, None, nl, g)
    with pytest.raises(ConfigError):
        SolverOptions(init="box(3)")
    with pytest.raises(ConfigError):
        SolverOptions(grad_tol=0.0)


def test_field_immutable_and_cached_spectrum():
    g = GridSpec(16, 8.0, 2)
    u = Field(np.ones(g.shape), g)
    with pytest.raises(ValueError):
        u.values[0, 0] = 2.0
    assert u.spectrum() is u.spectrum()
    np.testing.assert_allclose(u.spectrum(), np.fft.rfftn(u.values))
    with pytest.raises(ValueError):
        Field(np.full(g.shape, np.nan), g)


def test_grid_coordinates():
    g = GridSpec(32, 8.0, 3)
    assert g.axis[16] == 0.0 and g.axis[0] == -4.0
    assert g.radius()[16, 16, 16] == 0.0
    with pytest.raises(ConfigError):
        GridSpec(8, 1.0, 2)


@pytest.mark.parametrize("N,n", [(1, 64), (2, 32), (3, 16)])
def test_symmetrize_gaussian_fixed_and_odd_killed(N, n):
    g = GridSpec(n, 10.0, N)
    gauss = Field.radial(g, lambda r: np.exp(-r**2))
    np.testing.assert_allclose(symmetrize_radial(gauss).values, gauss.values, atol=1e-12)
    x1 = Field.from_function(g, lambda *xs: xs[0] + 0 * sum(xs))
    out = symmetrize_radial(x1).values
    # only the unpaired -L/2 face survives
    interior = (slice(1, None),) * N
    assert np.abs(out[interior]).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_symmetrize_idempotent_and_permutation_invariant(seed):
    g = GridSpec(32, 6.0, 3)
    u = Field(np.random.default_rng(seed).normal(size=g.shape), g)
    s1 = symmetrize_radial(u)
    np.testing.assert_allclose(symmetrize_radial(s1).values, s1.values, atol=1e-12)
    np.testing.assert_allclose(np.transpose(s1.values, (1, 2, 0)), s1.values, atol=1e-12)
    np.testing.assert_allclose(radial_profile(s1).values, radial_profile(u).values, atol=1e-12)


def test_radial_profile_examples():
    g = GridSpec(64, 20.0, 2)
    p = radial_profile(Field.radial(g, lambda r: (1 + r * r) ** -1.0))
    assert np.all(np.diff(p.radii) > 0) and p.radii[0] > 0 and len(p.radii) >= 8
    # shell average of a radial function evaluated at the mean radius
    np.testing.assert_allclose(p.values, (1 + p.radii**2) ** -1.0, rtol=0.05)
    c = radial_profile(Field(np.full(g.shape, 2.5), g))
    np.testing.assert_allclose(c.values, 2.5)
    text = c.to_csv()
    assert text.splitlines()[0] == "r,u"
