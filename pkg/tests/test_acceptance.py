"""Acceptance run: one PASS/FAIL line per criterion, at full tolerances.

Each test prints its line (with the measured numbers) as soon as it
finishes and ``conftest.py`` repeats all lines in the terminal summary.
The heavy criteria are marked ``slow`` but are selected by default;
``-m "not slow"`` skips them.
"""

import json
import math
import time

import numpy as np
import pytest

from nonloclab.analysis import (
    annuli_cross,
    annuli_interaction,
    annuli_thickness,
    decay_fit,
    duality_scan,
    gagliardo_check,
    hbeta_check,
    riesz_check,
    scaling_fit,
    sharp_constant,
    tail_amplitude,
)
from nonloclab.cli import _centered_fit
from nonloclab.core import Field, GridSpec, ProblemSpec, SolverOptions, parse_nonlinearity, radial_profile
from nonloclab.functionals import (
    FiberCurve,
    energy_breakdown,
    fiber_curve,
    fiber_derivative,
    fiber_maximizer,
    rescale_field,
)
from nonloclab.nonlocal_ops import HalfSpace, bessel_solve, kinetic, polarize, riesz_convolve
from nonloclab.solvers import (
    bowl_potential,
    fiber_descent_solve,
    normalized_flow_solve,
    petviashvili_solve,
    semiclassical_solve,
)
from nonloclab.specfun import critical_exponents

RESULTS = {}


def report(capsys, key, ok, elapsed, budget, **detail):
    """Record and print the verdict; the runtime budget is part of it."""
    within = elapsed <= budget
    passed = bool(ok and within)
    info = ", ".join(f"{k}={_short(v)}" for k, v in detail.items())
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {info}; {elapsed:.1f}s (budget {budget:g}s)"
    RESULTS[key] = line
    with capsys.disabled():
        print("\n" + line)
    return passed


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def choquard3(r, n, L, mu=1.0, **opts):
    return ProblemSpec(N=3, s=0.5, alpha=2.0, mode="choquard", mu=mu, mass_target=None,
                       nonlinearity=parse_nonlinearity(f"power({r})"), grid=GridSpec(n, L, 3),
                       solver=SolverOptions(**opts))


# ---------------------------------------------------------------- 1-3


def test_c01_closed_form_identity(capsys):
    t0 = time.perf_counter()
    c = hbeta_check(GridSpec(256, 80.0, 2), 1.0, 0.5)
    ok = report(capsys, "1", c.passed, time.perf_counter() - t0, 5,
                rel_error=c.error, tol=c.tol, pointwise_max=c.detail["pointwise_max"])
    assert ok


def test_c02_hypergeometric_cross_check(capsys):
    t0 = time.perf_counter()
    checks = [
        hbeta_check(GridSpec(256, 80.0, 2), 2.0, 0.5),
        hbeta_check(GridSpec(256, 80.0, 2), 3.0, 0.5),
        hbeta_check(GridSpec(128, 40.0, 3), 2.0, 0.75),
    ]
    ok = report(capsys, "2", all(c.passed for c in checks), time.perf_counter() - t0, 30,
                rel_errors=[c.error for c in checks], tol=1e-3)
    assert ok


def test_c03_oracle_equivalence(capsys):
    t0 = time.perf_counter()
    g = gagliardo_check(n=32, tol=1e-2)
    r = riesz_check(n=32, tol=2e-2)
    ok = report(capsys, "3", g.passed and r.passed, time.perf_counter() - t0, 60,
                gagliardo=g.error, riesz=r.error)
    assert ok


# ---------------------------------------------------------------- 4


@pytest.mark.slow
def test_c04_boson_star_pohozaev(capsys):
    t0 = time.perf_counter()
    spec = choquard3(2, 64, 30.0)
    pv = petviashvili_solve(spec)
    fd = fiber_descent_solve(spec)
    gap = abs(pv.action - fd.action) / abs(pv.action)
    ok = (pv.converged and fd.converged and pv.pohozaev_rel < 1e-3 and fd.pohozaev_rel < 1e-3
          and gap < 1e-4)
    ok = report(capsys, "4", ok, time.perf_counter() - t0, 120,
                P_petviashvili=pv.pohozaev_rel, P_fiber=fd.pohozaev_rel, action_gap=gap,
                iters=[pv.iterations, fd.iterations])
    assert ok


# ---------------------------------------------------------------- 5

_C5 = {"elapsed": 0.0}


def _bessel_tail(N, n, L, lam=4.0, s=0.5):
    g = GridSpec(n, L, N)
    r = g.radius()
    sigma = 1.5 * g.dx
    d = np.exp(-r**2 / (2 * sigma**2))
    d /= d.sum() * g.dV
    K = bessel_solve(Field(d, g), s, lam)
    return decay_fit(radial_profile(K), L=L).exponent


@pytest.mark.slow
def test_c05a_bessel_kernel_tail(capsys):
    t0 = time.perf_counter()
    slopes = [_bessel_tail(2, 256, 80.0), _bessel_tail(3, 128, 40.0)]
    errs = [abs(k / (N + 1.0) - 1) for k, N in zip(slopes, (2, 3))]
    dt = time.perf_counter() - t0
    _C5["elapsed"] += dt
    ok = report(capsys, "5a", max(errs) <= 0.05, _C5["elapsed"], 900, slopes=slopes, expected=[3.0, 4.0],
                rel_errors=errs)
    assert ok


@pytest.mark.slow
def test_c05b_superlinear_slope(capsys):
    t0 = time.perf_counter()
    rep = petviashvili_solve(choquard3(2, 128, 80.0))
    fit = decay_fit(radial_profile(rep.field), L=80.0)
    err = abs(fit.exponent / 4.0 - 1)
    _C5["elapsed"] += time.perf_counter() - t0
    ok = report(capsys, "5b", rep.converged and err <= 0.10, _C5["elapsed"], 900,
                slope=fit.exponent, expected=4.0, rel_error=err, shells=fit.shells)
    assert ok


@pytest.mark.slow
def test_c05c_sublinear_slope_and_constant(capsys):
    t0 = time.perf_counter()
    r, L = 1.7, 640.0
    rep = petviashvili_solve(choquard3(r, 128, L, max_iters=3000, init="gaussian(15)"))
    q = (3 - 2.0) / (2 - r)
    prof = radial_profile(rep.field)
    fit = decay_fit(prof, L=L)
    c = sharp_constant(rep, r)
    amp = tail_amplitude(prof, q, fit.window, L=L)
    e_slope, e_const = abs(fit.exponent / q - 1), abs(amp / c - 1)
    _C5["elapsed"] += time.perf_counter() - t0
    ok = report(capsys, "5c", rep.converged and e_slope <= 0.10 and e_const <= 0.15, _C5["elapsed"], 900,
                slope=fit.exponent, expected=q, slope_error=e_slope, tail_amplitude=amp, sharp_constant=c,
                constant_error=e_const)
    assert ok


@pytest.mark.slow
def test_c05d_plateau_across_threshold(capsys):
    t0 = time.perf_counter()
    rstar = critical_exponents(3, 0.5, 2.0).sublinear_threshold
    rows, ok = [], True
    for r in (1.7, 1.75, 1.8, 1.9, 2.0):
        # the ground state widens like 2^(10(2-r)) as r drops; the box follows it
        L = 80.0 * 2 ** (10 * (2 - r))
        rep = petviashvili_solve(choquard3(r, 64, L, max_iters=3000))
        k = decay_fit(radial_profile(rep.field), (0.1 * L / 2, 0.45 * L / 2), L=L).exponent
        expect = (3 - 2.0) / (2 - r) if r < rstar else 4.0
        judged = not math.isclose(r, rstar)
        if judged:
            ok &= rep.converged and abs(k / expect - 1) <= 0.10
        rows.append(f"r={r:g}:{k:.3f}/{expect:.3f}{'' if judged else '(info)'}")
    _C5["elapsed"] += time.perf_counter() - t0
    ok = report(capsys, "5d", ok, _C5["elapsed"], 900, r_star=rstar, fitted_over_expected=" ".join(rows))
    assert ok


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_c06_annuli_scalings(capsys):
    t0 = time.perf_counter()
    hs = [0.04, 0.02, 0.01, 0.005]
    N = 2
    ladder = {a: [annuli_interaction(1.0, h, N, a)[0] for h in hs] for a in (1.5, 0.5, 1.0)}
    k15, _ = scaling_fit(hs, ladder[1.5])
    k05, _ = scaling_fit(hs, ladder[0.5])
    growth = [v / h**2 for v, h in zip(ladder[1.0], hs)]
    mono = all(b > a for a, b in zip(growth, growth[1:]))
    Rs = (2.0, 4.0, 8.0)
    ratios, info, cross_ok = {}, {}, True
    for a in (1.5, 1.0, 0.5):
        for n_ in (2, 3):
            band = [annuli_interaction(R, annuli_thickness(R, n_, a), n_, a)[0] for R in Rs]
            if a > 1:
                ratios[f"N{n_}"] = max(band) / min(band)
                cross = [annuli_cross(R, annuli_thickness(R, n_, a), R * R, annuli_thickness(R * R, n_, a), n_, a)[0]
                         for R in Rs]
                cross_ok &= all(b < c for c, b in zip(cross, cross[1:]))
            else:
                info[f"a{a:g}N{n_}"] = max(band) / min(band)
    # the band is asserted for alpha > 1: h_R self-interaction within a factor 2 over R
    band_ok = max(ratios.values()) <= 2.0
    ok = abs(k15 - 2) <= 0.1 and abs(k05 - 1.5) <= 0.1 and mono and band_ok and cross_ok
    ok = report(capsys, "6", ok, time.perf_counter() - t0, 300, exp_a1_5=k15, exp_a0_5=k05,
                log_case_monotone=mono, band_ratios_a1_5=list(ratios.values()), cross_decreasing=cross_ok,
                band_ratios_info=list(info.values()))
    assert ok


# ---------------------------------------------------------------- 7-8


def _normalized_spec(m):
    return ProblemSpec(N=3, s=0.5, alpha=2.0, mode="choquard", mu=None, mass_target=m,
                       nonlinearity=parse_nonlinearity("power(1.9)"), grid=GridSpec(64, 30.0, 3),
                       solver=SolverOptions(max_iters=1500))


@pytest.mark.slow
def test_c07_constrained_existence(capsys):
    t0 = time.perf_counter()
    rows, ok = [], True
    for m in (1.0, 5.0, 20.0):
        rep = normalized_flow_solve(_normalized_spec(m), adapt_box=True)
        ok &= rep.converged and rep.mu > 0 and rep.action < 0
        rows.append(f"m={m:g}:mu={rep.mu:.3g},L={rep.action:.3g}")
    ok = report(capsys, "7", ok, time.perf_counter() - t0, 600, runs=" ".join(rows))
    assert ok


@pytest.mark.slow
def test_c08_duality(capsys):
    t0 = time.perf_counter()
    ms = [1.0, 5.0, 20.0]
    rep = duality_scan(_normalized_spec(1.0), m_grid=ms, bracket=6)
    res_ok = all(np.isfinite(x) and x <= 0.02 for x in rep.duality_residuals)
    ps = [p for p in rep.p_curve if np.isfinite(p)]
    increasing = all(b > a for a, b in zip(ps, ps[1:]))
    kneg = all(k < 0 for k in rep.kappa_curve)
    m0 = rep.m0_estimate
    m0_ok = kneg and m0 is not None and all(m > m0 for m in ms)
    ok = rep.complete and res_ok and increasing and m0_ok
    ok = report(capsys, "8", ok, time.perf_counter() - t0, 1200, residuals=rep.duality_residuals,
                kappa=rep.kappa_curve, p_increasing=increasing, m0_estimate=m0)
    assert ok


# ---------------------------------------------------------------- 9


def _bumps(grid, rng, sign_changing):
    x = grid.coords()
    out = np.zeros(grid.shape)
    for k in range(4):
        c = rng.uniform(-grid.L / 5, grid.L / 5, size=grid.N)
        a = rng.uniform(0.2, 1.0) * ((-1) ** k if sign_changing else 1)
        out = out + a * np.exp(-sum((xi - ci) ** 2 for xi, ci in zip(x, c)) / 4.5)
    for ax in range(grid.N):
        out[(slice(None),) * ax + (0,)] = 0.0
    return Field(out, grid)


def test_c09_property_suites(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    g2 = GridSpec(32, 12.0, 2)
    failed = []

    # Riesz positivity, |u| and polarization, 50 fields each
    for i in range(50):
        u = _bumps(g2, rng, True)
        if u.dot(riesz_convolve(u, (0.5, 1.0, 1.5)[i % 3])) < -1e-12 * u.mass():
            failed.append("riesz_positive")
        s = (0.25, 0.5, 0.9)[i % 3]
        if kinetic(u.like(np.abs(u.values)), s) > kinetic(u, s) * (1 + 1e-12):
            failed.append("modulus_kinetic")
        v = _bumps(g2, rng, False)
        vH = polarize(v, HalfSpace.axis(2, i % 2, (-1, 1)[(i // 2) % 2]))
        if kinetic(vH, 0.5) > kinetic(v, 0.5) * (1 + 1e-12):
            failed.append("polarization_kinetic")
        if vH.dot(riesz_convolve(vH, 1.0)) < v.dot(riesz_convolve(v, 1.0)) * (1 - 1e-12):
            failed.append("polarization_riesz")

    # fiber derivative at 1 equals P, projected maximizer is 1
    spec = choquard3(2, 32, 16.0)
    for amp in (0.5, 2.0, 4.0):
        u = Field.radial(spec.grid, lambda r, a=amp: a * np.exp(-r**2 / 4.5))
        eb = energy_breakdown(u, spec)
        fc = fiber_curve(eb, spec)
        if abs(fiber_derivative(fc, 1.0) - eb.P) > 1e-10 * max(fc.A, fc.B, fc.C, 1.0):
            failed.append("fiber_derivative")
    for _ in range(50):
        A, B, C = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), 3))
        t = fiber_maximizer(FiberCurve(A, B, C, 2.0, 3.0, 5.0))
        if abs(fiber_maximizer(FiberCurve(A * t**2, B * t**3, C * t**5, 2.0, 3.0, 5.0)) - 1) > 1e-8:
            failed.append("projected_maximizer")

    # local shape function g(t) <= 1, equality only at t = 1
    for N, s in [(1, 0.3), (2, 0.5), (3, 0.75)]:
        t = np.linspace(1e-3, 3.0, 30001)
        gt = (N * t ** (N - 2 * s) - (N - 2 * s) * t**N) / (2 * s)
        if gt.max() > 1 + 1e-12 or np.any(gt[np.abs(t - 1) > 1e-3] >= 1):
            failed.append("shape_function")

    # rescale_field scaling laws
    for N, n, L in [(1, 256, 40.0), (2, 64, 24.0), (3, 32, 16.0)]:
        u = Field.radial(GridSpec(n, L, N), lambda r: np.exp(-r**2 / 4.5))
        for t in (0.8, 1.25):
            v = rescale_field(u, t)
            if abs(v.mass() / (t**N * u.mass()) - 1) > 1e-2:
                failed.append("rescale_mass")
            if abs(kinetic(v, 0.5) / (t ** (N - 1) * kinetic(u, 0.5)) - 1) > 2e-2:
                failed.append("rescale_kinetic")

    # determinism of reports
    sp1 = ProblemSpec(N=1, s=0.5, alpha=0.5, mode="choquard", mu=1.0, mass_target=None,
                      nonlinearity=parse_nonlinearity("power(2)"), grid=GridSpec(256, 40.0, 1))
    a = json.dumps(fiber_descent_solve(sp1).to_dict(), sort_keys=True)
    b = json.dumps(fiber_descent_solve(sp1).to_dict(), sort_keys=True)
    if a != b:
        failed.append("determinism")

    ok = report(capsys, "9", not failed, time.perf_counter() - t0, 120,
                failed=sorted(set(failed)) or "none")
    assert ok


# ---------------------------------------------------------------- 10


@pytest.mark.slow
def test_c10_semiclassical_concentration(capsys):
    t0 = time.perf_counter()
    center = [0.5, 0.25]
    spec = ProblemSpec(N=2, s=0.5, alpha=None, mode="local", mu=1.0, mass_target=None,
                       nonlinearity=parse_nonlinearity("power(3)"), grid=GridSpec(512, 160.0, 2))
    dist, slopes, ok = [], [], True
    for eps in (0.5, 0.25, 0.125):
        rep = semiclassical_solve(spec, bowl_potential(center), eps, x_min=center)
        ok &= rep.converged
        dist.append(rep.extra["argmax_distance"])
        slopes.append(_centered_fit(rep).exponent)
    # distances are in the original variable x = eps y, where the grid step is eps dy
    final_ok = dist[-1] <= 2 * 0.125 * spec.grid.dx
    nonincreasing = all(b <= a for a, b in zip(dist, dist[1:]))
    slope_ok = all(abs(k / 3.0 - 1) <= 0.10 for k in slopes)
    ok = report(capsys, "10", ok and final_ok and nonincreasing and slope_ok, time.perf_counter() - t0, 600,
                distances=dist, slopes=slopes, expected_slope=3.0)
    assert ok
