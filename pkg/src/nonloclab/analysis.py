"""Decay fits, expected decay laws, annuli interactions and the duality scan."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Field, GridSpec, Profile, ProblemSpec, radial_profile
from .nonlocal_ops import (
    SpectralResidueError,
    check_kernel_cache,
    frac_laplacian,
    riesz_convolve,
    riesz_direct,
    riesz_kernel,
    seminorm_direct,
    seminorm_gagliardo,
    RESIDUE_TOL,
)
from .solvers import SolveReport, SolverError, fiber_descent_solve, normalized_flow_solve, transfer_field
from .specfun import critical_exponents, hbeta_flap_exact, riesz_constant

__all__ = [
    "DecayFit",
    "decay_fit",
    "default_window",
    "expected_decay",
    "sharp_constant",
    "annuli_interaction",
    "annuli_cross",
    "annuli_thickness",
    "scaling_fit",
    "DualityReport",
    "bracket_mu_grid",
    "duality_scan",
    "thread_budget",
    "tail_amplitude",
    "Check",
    "hbeta_check",
    "gagliardo_check",
    "riesz_check",
    "operator_checks",
]


# --------------------------------------------------------------------------
# operator checks


@dataclass(frozen=True)
class Check:
    name: str
    error: float
    tol: float
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def to_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tol": self.tol, "passed": self.passed,
                "detail": dict(self.detail)}


def hbeta_check(grid: GridSpec, beta: float, s: float, tol: float = 1e-3) -> Check:
    """Spectral ``(-Delta)^s h_beta`` against the closed form on ``|x| < L/4``.

    The error is relative to the sup of the exact values there; the worst
    pointwise relative error is kept in ``detail``.  Pointwise it is
    dominated by the periodic images wherever the exact value is small.
    """
    N = grid.N
    u = Field.radial(grid, lambda r: (1 + r * r) ** (-beta / 2))
    v = frac_laplacian(u, s).values
    r = grid.radius()
    m = r < grid.L / 4
    ex = hbeta_flap_exact(r[m], beta, N, s)
    e = np.abs(v[m] - ex)
    nz = np.abs(ex) > 0
    return Check(
        name=f"hbeta(beta={beta:g},N={N},s={s:g})",
        error=float(e.max() / np.abs(ex).max()),
        tol=tol,
        detail={"pointwise_max": float((e[nz] / np.abs(ex[nz])).max()), "n": grid.n, "L": grid.L},
    )


def _band_limited(grid: GridSpec, rng, kmax: int = 3) -> Field:
    k0 = 2 * math.pi / grid.L
    x = grid.axis
    v = sum(rng.normal() * np.cos(k * k0 * x) + rng.normal() * np.sin(k * k0 * x) for k in range(1, kmax + 1))
    return Field(v, grid)


def gagliardo_check(s_values=(0.1, 0.5, 0.9), samples: int = 3, seed: int = 0, n: int = 32,
                    tol: float = 1e-2) -> Check:
    """FFT kinetic term against the direct Gagliardo double sum (N = 1)."""
    rng = np.random.default_rng(seed)
    g = GridSpec(n, 2 * math.pi, 1)
    worst = 0.0
    for s in s_values:
        for _ in range(samples):
            u = _band_limited(g, rng)
            _, gag = seminorm_gagliardo(u, s)
            direct = seminorm_direct(u, s)
            worst = max(worst, abs(gag - direct) / abs(direct))
    return Check(name="gagliardo_direct(N=1)", error=worst, tol=tol,
                 detail={"n": n, "s_values": list(s_values), "samples": samples})


def riesz_check(alpha: float = 1.0, n: int = 32, L: float = 10.0, seed: int = 0, tol: float = 2e-2) -> Check:
    """Padded-FFT Riesz convolution against the direct quadrature (N = 2)."""
    rng = np.random.default_rng(seed)
    g = GridSpec(n, L, 2)
    u = Field(rng.normal(size=g.shape), g)
    a = riesz_convolve(u, alpha).values
    b = riesz_direct(u, alpha).values
    return Check(name=f"riesz_direct(N=2,alpha={alpha:g})", error=float(np.abs(a - b).max() / np.abs(b).max()),
                 tol=tol, detail={"n": n, "L": L})


def kernel_cache_check(grid: GridSpec, alpha: float) -> Check:
    """Hermitian defect of the cached Riesz kernel spectrum for ``grid``."""
    d = check_kernel_cache(riesz_kernel(grid, float(alpha)))
    return Check(name="kernel_cache_hermitian", error=float(d), tol=RESIDUE_TOL, detail={"n": grid.n, "L": grid.L})


def operator_checks(spec: ProblemSpec | None = None, seed: int = 0) -> list:
    """Closed-form and oracle checks of the discrete operators.

    The reference grids are fixed; with ``spec`` the kernel cache of its grid
    and ``alpha`` is checked as well, as is ``h_beta`` at ``spec.s`` when
    ``spec.N > 1`` and ``s < 1``.
    """
    out = [
        hbeta_check(GridSpec(256, 80.0, 2), 1.0, 0.5),
        hbeta_check(GridSpec(256, 80.0, 2), 2.0, 0.5),
        hbeta_check(GridSpec(256, 80.0, 2), 3.0, 0.5),
        hbeta_check(GridSpec(128, 40.0, 3), 2.0, 0.75),
        gagliardo_check(seed=seed),
    ]
    alpha = spec.alpha if spec is not None and spec.alpha is not None else 1.0
    out.append(riesz_check(alpha if alpha < 2 else 1.0, seed=seed))
    if spec is not None:
        if spec.alpha is not None:
            try:
                out.append(kernel_cache_check(spec.grid, spec.alpha))
            except SpectralResidueError as exc:
                out.append(Check("kernel_cache_hermitian", math.inf, RESIDUE_TOL, {"error": str(exc)}))
        if spec.N > 1 and spec.s < 1:
            g = GridSpec(256, 80.0, 2) if spec.N == 2 else GridSpec(128, 40.0, 3)
            out.append(hbeta_check(g, float(spec.N), spec.s))
    return out


# --------------------------------------------------------------------------
# decay


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit ``u ~ constant * r^-exponent`` over ``window``.

    ``curvature`` is the quadratic coefficient of ``log u`` in ``log r``;
    ``log_case`` flags a visible departure from a pure power law.
    """

    exponent: float
    constant: float
    stderr: float
    window: tuple
    shells: int
    curvature: float = 0.0
    log_case: bool = False

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "constant": self.constant,
            "stderr": self.stderr,
            "window": list(self.window),
            "shells": self.shells,
            "curvature": self.curvature,
            "log_case": self.log_case,
        }


def default_window(L: float) -> tuple:
    return (0.15 * L / 2, 0.40 * L / 2)


def decay_fit(p: Profile, window: tuple | None = None, L: float | None = None) -> DecayFit:
    """Least squares of ``log u`` against ``log r`` on the shells inside ``window``.

    Parameters
    ----------
    p : Profile
        Radial profile, e.g. from :func:`radial_profile`.
    window : (r_lo, r_hi), optional
        Fit range.  Defaults to ``[0.15, 0.40] * L/2``.
    L : float, optional
        Box length.  Needed for the default window and for the ``0.45 L/2``
        cap; when omitted it is taken as twice the outermost shell radius.
    """
    radii, vals = np.asarray(p.radii), np.asarray(p.values)
    if L is None:
        L = 2.0 * float(radii[-1])
    if window is None:
        window = default_window(L)
    lo, hi = float(window[0]), float(window[1])
    if not 0 < lo < hi:
        raise ValueError(f"bad window {window}")
    if hi > 0.45 * L / 2 * (1 + 1e-12):
        raise ValueError(f"window end {hi:g} exceeds 0.45 * L/2 = {0.45 * L / 2:g}")
    sel = (radii >= lo) & (radii <= hi)
    k = int(sel.sum())
    if k < 10:
        raise ValueError(f"only {k} shells in window [{lo:g}, {hi:g}]; need at least 10")
    r, v = radii[sel], vals[sel]
    if np.any(v <= 0):
        raise ValueError("profile has nonpositive values in the fit window")
    x, y = np.log(r), np.log(v)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = k - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    stderr = math.sqrt(max(cov[1, 1], 0.0))
    # curvature in log-log; centred so it does not trade off with the slope
    xc = x - x.mean()
    c2 = np.polyfit(xc, y, 2)[0]
    span = float(xc.max() - xc.min())
    return DecayFit(
        exponent=float(-coef[1]),
        constant=float(math.exp(coef[0])),
        stderr=stderr,
        window=(lo, hi),
        shells=k,
        curvature=float(c2),
        log_case=bool(abs(c2) * span**2 > 1e-3),
    )


def tail_amplitude(p: Profile, exponent: float, window: tuple | None = None, L: float | None = None) -> float:
    """Median of ``u(r) r^exponent`` over the fit window.

    With the predicted exponent this estimates ``lim |x|^exponent u(x)``,
    the quantity the sharp constant predicts; the free-slope fit constant
    is not comparable once the fitted slope differs from the prediction.
    """
    radii, vals = np.asarray(p.radii), np.asarray(p.values)
    if L is None:
        L = 2.0 * float(radii[-1])
    lo, hi = default_window(L) if window is None else window
    sel = (radii >= lo) & (radii <= hi)
    if not sel.any():
        raise ValueError(f"no shells in window [{lo:g}, {hi:g}]")
    return float(np.median(vals[sel] * radii[sel] ** exponent))


def field_decay(rep: SolveReport, window: tuple | None = None) -> DecayFit:
    """Decay fit of a solver's field; also stored on ``rep.decay_fit``."""
    g = rep.field.grid
    fit = decay_fit(radial_profile(rep.field), window, L=g.L)
    rep.decay_fit = fit
    return fit


def expected_decay(N: int, s: float, alpha: float | None, r: float) -> float:
    """Predicted tail exponent of a ground state.

    ``min((N - alpha)/(2 - r), N + 2s)`` for ``r < 2`` and ``N + 2s``
    otherwise; local problems (``alpha=None``) always give ``N + 2s``.
    """
    if alpha is None:
        return N + 2.0 * s
    ex = critical_exponents(N, s, alpha)
    if not ex.lower <= r < ex.sobolev:
        raise ValueError(f"r={r} outside [{ex.lower:.6g}, {ex.sobolev:.6g})")
    if r < 2:
        return min((N - alpha) / (2 - r), N + 2.0 * s)
    return N + 2.0 * s


def sharp_constant(rep: SolveReport, r: float, alpha: float | None = None) -> float:
    """Predicted tail constant ``(C_{N,alpha} ||u||_r^r / (r mu))^(1/(2-r))``.

    The ``1/r`` comes from ``F = |t|^r / r``: the far field of the Riesz
    potential is ``C_{N,alpha} |x|^-(N-alpha) int F(u)``.
    """
    g = rep.field.grid
    N = g.N
    prob = rep.extra.get("problem", {})
    alpha = prob.get("alpha") if alpha is None else alpha
    if alpha is None:
        raise ValueError("sharp constant needs a Choquard problem (alpha)")
    ex = critical_exponents(N, prob.get("s", 0.5), alpha)
    if not ex.lower <= r < ex.sublinear_threshold:
        raise ValueError(f"r={r} outside the sharp range [{ex.lower:.6g}, {ex.sublinear_threshold:.6g})")
    if not rep.converged:
        raise ValueError("sharp constant needs a converged solve")
    if not rep.mu > 0:
        raise ValueError("sharp constant needs a positive frequency")
    norm_rr = float(np.sum(np.abs(rep.field.values) ** r) * g.dV)
    return (riesz_constant(N, alpha) * norm_rr / (r * rep.mu)) ** (1.0 / (2.0 - r))


def scaling_fit(hs, values) -> tuple:
    """Log-log least-squares slope and its standard error."""
    h, v = np.asarray(hs, float), np.asarray(values, float)
    if h.shape != v.shape or len(h) < 4:
        raise ValueError("scaling_fit needs at least 4 paired points")
    if np.any(h <= 0) or np.any(v <= 0):
        raise ValueError("scaling_fit needs positive data")
    x, y = np.log(h), np.log(v)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = float(resid @ resid) / (len(h) - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


# --------------------------------------------------------------------------
# annuli


def annuli_thickness(R: float, N: int, alpha: float) -> float:
    if R < 2:
        raise ValueError("annuli_thickness needs R >= 2")
    if alpha > 1:
        return R ** (-(N - 2 + alpha) / 2)
    if alpha == 1:
        return R ** (-(N - 1) / 2) / math.sqrt(math.log(R))
    return R ** (-(N - 1) / (1 + alpha))


def _sphere(rng, k, N):
    w = rng.standard_normal((k, N))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def _annulus_points(rng, k, N, R, h, stratified=True):
    # radial inverse CDF of r^(N-1) on [R, R + h]
    if stratified:
        u = (np.arange(k) + rng.random(k)) / k
    else:
        u = rng.random(k)
    rad = (R**N + u * ((R + h) ** N - R**N)) ** (1.0 / N)
    return rad[:, None] * _sphere(rng, k, N)


def _annulus_volume(N, R, h):
    omega = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    return omega * ((R + h) ** N - R**N) / N


def _check_annulus(R, h, N):
    if N not in (2, 3):
        raise ValueError("annuli need N in {2, 3}")
    if not 0 < h < R / 2:
        raise ValueError(f"annulus thickness must satisfy 0 < h < R/2 (h={h}, R={R})")


def annuli_interaction(R: float, h: float, N: int, alpha: float, samples: int = 10**6,
                       seed: int = 0, chunk: int = 2**18) -> tuple:
    """``int int I_alpha(x - y) chi_A(x) chi_A(y)`` over ``A = {R <= |x| <= R + h}``.

    ``x`` is drawn on ``A`` (stratified in the radius, uniform direction) and
    the displacement ``y - x = rho w`` from the density ``rho^(alpha-1)`` on
    ``[0, 2(R+h)]`` with a uniform direction ``w``.  This absorbs the kernel
    singularity, so each sample is ``const * chi_A(y)`` and the variance is
    finite for every ``alpha``.

    Returns
    -------
    (estimate, stderr)
    """
    _check_annulus(R, h, N)
    if not 0 < alpha < N:
        raise ValueError("alpha must lie in (0, N)")
    rng = np.random.default_rng(seed)
    vol = _annulus_volume(N, R, h)
    omega = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    rho_max = 2 * (R + h)
    scale = vol * omega * riesz_constant(N, alpha) * rho_max**alpha / alpha
    hits = 0
    done = 0
    xs = _annulus_points(rng, samples, N, R, h)
    while done < samples:
        k = min(chunk, samples - done)
        x = xs[done:done + k]
        rho = rho_max * rng.random(k) ** (1.0 / alpha)
        y = x + rho[:, None] * _sphere(rng, k, N)
        ry = np.linalg.norm(y, axis=1)
        hits += int(np.count_nonzero((ry >= R) & (ry <= R + h)))
        done += k
    p = hits / samples
    return scale * p, scale * math.sqrt(p * (1 - p) / samples)


def annuli_cross(R1: float, h1: float, R2: float, h2: float, N: int, alpha: float,
                 samples: int = 10**6, seed: int = 0) -> tuple:
    """Interaction between two disjoint annuli (plain sampling; the kernel is bounded there)."""
    _check_annulus(R1, h1, N)
    _check_annulus(R2, h2, N)
    if not R1 + h1 < R2:
        raise ValueError("annuli must be disjoint and ordered")
    rng = np.random.default_rng(seed)
    x = _annulus_points(rng, samples, N, R1, h1)
    y = _annulus_points(rng, samples, N, R2, h2, stratified=False)
    k = riesz_constant(N, alpha) * np.linalg.norm(x - y, axis=1) ** (alpha - N)
    scale = _annulus_volume(N, R1, h1) * _annulus_volume(N, R2, h2)
    return scale * float(k.mean()), scale * float(k.std(ddof=1)) / math.sqrt(samples)


# --------------------------------------------------------------------------
# duality


def thread_budget(threads: int | None = None) -> int:
    """``threads`` if given, else ``NONLOC_THREADS``, else the core count."""
    if threads is None:
        env = os.environ.get("NONLOC_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def _ordered_map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class DualityReport:
    mu_grid: list
    p_curve: list
    m_grid: list
    kappa_curve: list
    duality_residuals: list
    m0_estimate: float | None
    mu_grids: dict = field(default_factory=dict)
    kappa_mu: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "mu_grid": list(self.mu_grid),
            "p_curve": list(self.p_curve),
            "m_grid": list(self.m_grid),
            "kappa_curve": list(self.kappa_curve),
            "kappa_mu": list(self.kappa_mu),
            "duality_residuals": list(self.duality_residuals),
            "m0_estimate": self.m0_estimate,
            "mu_grids": {repr(k): list(v) for k, v in self.mu_grids.items()},
            "failures": list(self.failures),
        }


def bracket_mu_grid(mu_center: float, count: int = 6, span: float = 2.0) -> list:
    """Log-spaced ``mu_center * span^t`` for ``t`` evenly in ``[-1, 1]``."""
    if count < 2 or not mu_center > 0 or not span > 1:
        raise ValueError("bracket_mu_grid needs count >= 2, mu_center > 0, span > 1")
    return [float(mu_center * span**t) for t in np.linspace(-1.0, 1.0, count)]


def _power_amplitude(spec: ProblemSpec, mu: float) -> float:
    """Amplitude factor of ``u_mu(x) = A u_1(mu^(1/(2s)) x)`` for power ``F``.

    Exact for pure powers; for other nonlinearities the growth at zero is
    used, which is only a starting guess.
    """
    r = spec.nonlinearity.growth_at_zero()
    s = spec.s
    if spec.mode == "choquard":
        return mu ** ((2 * s + spec.alpha) / (4 * s * (r - 1)))
    return mu ** (1.0 / (r - 2)) if r > 2 else 1.0


def _box_for(spec: ProblemSpec, mu: float):
    # the box of spec.grid suits mu = 1; lengths scale like mu^(-1/(2s))
    return spec.grid.with_(L=spec.grid.L * mu ** (-1.0 / (2 * spec.s)))


def duality_scan(spec: ProblemSpec, mu_grid=None, m_grid=(), threads: int | None = None,
                 bracket: int = 0, span: float = 2.0, adapt_box: bool = True) -> DualityReport:
    """Compare ``kappa(m)`` with ``min_mu (p(mu) - mu m / 2)``.

    ``p(mu)`` is the ground-state action from :func:`fiber_descent_solve`
    and ``kappa(m)`` the constrained action from
    :func:`normalized_flow_solve`.  With ``bracket = k > 0`` every ``m`` gets
    its own ``k``-point grid from :func:`bracket_mu_grid` around the
    frequency of the constrained solve; otherwise the shared ``mu_grid`` is
    used for all masses.  With ``adapt_box`` each fixed-frequency solve runs
    on the box of ``spec.grid`` rescaled like ``mu^(-1/(2s))``.

    Failed solves are recorded in ``failures`` and leave ``nan`` entries.
    """
    m_grid = [float(m) for m in m_grid]
    if not m_grid:
        raise ValueError("duality_scan needs a mass grid")
    if not bracket and (mu_grid is None or len(mu_grid) < 2):
        raise ValueError("duality_scan needs a frequency grid or bracket > 0")
    threads = thread_budget(threads)
    failures = []

    def kappa(m):
        try:
            rep = normalized_flow_solve(spec.with_mass(m), adapt_box=adapt_box)
            return rep.action, rep.mu
        except (SolverError, ValueError) as exc:
            failures.append({"kind": "kappa", "x": m, "error": f"{type(exc).__name__}: {exc}"})
            return math.nan, math.nan

    km = _ordered_map(kappa, m_grid, threads)
    kappa_curve = [k for k, _ in km]
    kappa_mu = [mu for _, mu in km]

    if bracket:
        mu_grids = {m: (bracket_mu_grid(mu, bracket, span) if mu > 0 else []) for m, (_, mu) in zip(m_grid, km)}
    else:
        shared = sorted(float(x) for x in mu_grid)
        mu_grids = {m: shared for m in m_grid}
    all_mu = sorted({mu for g in mu_grids.values() for mu in g})

    # every fixed-frequency solve starts from the mu = 1 ground state carried
    # over by the exact scaling of the pure power case
    try:
        seed = fiber_descent_solve(spec.with_mu(1.0)).field if all_mu else None
    except (SolverError, ValueError) as exc:
        failures.append({"kind": "p", "x": 1.0, "error": f"{type(exc).__name__}: {exc}"})
        seed = None

    def p_of(mu):
        sp = spec.with_mu(mu)
        box = _box_for(spec, mu)
        if adapt_box:
            sp = sp.with_grid(box)
        try:
            u0 = None
            if seed is not None:
                u0 = Field(seed.values * _power_amplitude(spec, mu), box)
                u0 = transfer_field(u0, sp.grid)
            return fiber_descent_solve(sp, u0).action
        except (SolverError, ValueError) as exc:
            failures.append({"kind": "p", "x": mu, "error": f"{type(exc).__name__}: {exc}"})
            return math.nan

    p_vals = _ordered_map(p_of, all_mu, threads)
    p_map = dict(zip(all_mu, p_vals))

    residuals = []
    for m, k in zip(m_grid, kappa_curve):
        vals = [p_map[mu] - mu * m / 2 for mu in mu_grids[m] if np.isfinite(p_map[mu])]
        if not vals or not np.isfinite(k):
            residuals.append(math.nan)
            continue
        residuals.append(abs(k - min(vals)) / abs(k))
    good = [(mu, p) for mu, p in zip(all_mu, p_vals) if np.isfinite(p)]
    m0 = 2 * min(p / mu for mu, p in good) if good else None
    failures.sort(key=lambda d: (d["kind"], d["x"]))
    return DualityReport(
        mu_grid=all_mu,
        p_curve=p_vals,
        m_grid=m_grid,
        kappa_curve=kappa_curve,
        duality_residuals=residuals,
        m0_estimate=m0,
        mu_grids=mu_grids,
        kappa_mu=kappa_mu,
        failures=failures,
    )
