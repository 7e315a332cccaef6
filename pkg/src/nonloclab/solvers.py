"""Ground-state solvers.

``petviashvili_solve``      stabilized fixed point, homogeneous Choquard power case
``fiber_descent_solve``     preconditioned descent on the fiber maximum, fixed mu
``normalized_flow_solve``   projected preconditioned flow on the mass sphere
``semiclassical_solve``     Nehari descent with a slowly varying potential V(eps y)
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import NoConvergence, minimize_scalar, newton_krylov

from .core import Field, GridSpec, ProblemSpec, symmetrize_radial
from .functionals import (
    EnergyBreakdown,
    NoPohozaevProjection,
    _assemble,
    _interaction,
    _potential,
    constrained_action,
    fiber_curve,
    fiber_maximizer,
    fiber_value,
    lagrange_multiplier,
    pohozaev_relative,
    rescale_field,
    source_term,
)
from .nonlocal_ops import bessel_solve, frac_laplacian, kinetic
from .specfun import critical_exponents

__all__ = [
    "SolverError",
    "NonConvergence",
    "CollapseError",
    "RunawayError",
    "SolveReport",
    "initial_field",
    "equation_residual",
    "petviashvili_solve",
    "fiber_descent_solve",
    "normalized_flow_solve",
    "semiclassical_solve",
    "transfer_field",
    "bowl_potential",
]


class SolverError(RuntimeError):
    """Base class; ``report`` holds the last iterate when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NonConvergence(SolverError):
    pass


class CollapseError(SolverError):
    pass


class RunawayError(SolverError):
    pass


@dataclass
class SolveReport:
    solver: str
    field: Field
    breakdown: EnergyBreakdown
    mu: float
    mass: float
    iterations: int
    residual_history: list
    converged: bool
    pohozaev_rel: float
    objective_history: list = field(default_factory=list)
    projections: list = field(default_factory=list)
    action: float | None = None
    decay_fit: object = None
    extra: dict = field(default_factory=dict)
    wallclock: float = 0.0

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.inf

    def to_dict(self) -> dict:
        """JSON-ready summary (no field samples, no timing)."""
        out = {
            "solver": self.solver,
            "converged": self.converged,
            "iterations": self.iterations,
            "mu": self.mu,
            "mass": self.mass,
            "action": self.action,
            "residual": self.residual,
            "pohozaev_rel": self.pohozaev_rel,
            "breakdown": self.breakdown.to_dict(),
            "residual_history": list(self.residual_history),
            "grid": {"n": self.field.grid.n, "L": self.field.grid.L, "N": self.field.grid.N},
            "extra": dict(self.extra),
        }
        if self.decay_fit is not None:
            out["decay_fit"] = self.decay_fit.to_dict()
        return out


# --------------------------------------------------------------------------
# helpers


def initial_field(spec: ProblemSpec, grid: GridSpec | None = None) -> Field:
    grid = spec.grid if grid is None else grid
    kind, arg = spec.solver.parsed_init()
    if kind == "gaussian":
        w = float(arg)
        u = Field.radial(grid, lambda r: np.exp(-(r / w) ** 2))
    elif kind == "hbeta":
        b = float(arg)
        u = Field.radial(grid, lambda r: (1.0 + r * r) ** (-b / 2))
    else:
        vals = np.load(Path(arg))
        u = Field(vals, grid)
    if not np.any(u.values):
        raise ValueError("degenerate initial field (identically zero)")
    return u


def _start(spec: ProblemSpec, u0: Field | None, grid: GridSpec | None = None) -> Field:
    u = initial_field(spec, grid) if u0 is None else u0
    if not np.any(u.values):
        raise ValueError("degenerate initial field (identically zero)")
    return u


def _norm(u: Field) -> float:
    return math.sqrt(max(u.mass(), 0.0))


class _State:
    """One evaluation of everything the iterations need at a field."""

    __slots__ = ("u", "pot", "rhs", "T", "M", "I")

    def __init__(self, u: Field, spec: ProblemSpec):
        self.u = u
        if spec.mode == "choquard":
            self.pot = _potential(u, spec)
        else:
            self.pot = None
        self.rhs = source_term(u, spec, self.pot)
        self.I = _interaction(u, spec, self.pot)
        self.T = kinetic(u, spec.s)
        self.M = u.mass()

    def breakdown(self, spec, mu) -> EnergyBreakdown:
        return _assemble(self.T, self.M, self.I, mu, spec)


def equation_residual(u: Field, rhs: Field, s: float, mu: float) -> float:
    """``|| u - ((-Delta)^s + mu)^-1 RHS(u) || / ||u||``."""
    return _norm(u.like(u.values - bessel_solve(rhs, s, mu).values)) / max(_norm(u), 1e-300)


def _check_power_range(spec: ProblemSpec):
    nl = spec.nonlinearity
    ex = critical_exponents(spec.N, spec.s, spec.alpha)
    if not ex.lower < nl.r < ex.upper:
        raise ValueError(
            f"r={nl.r} outside the admissible range ({ex.lower:.6g}, {ex.upper:.6g}); "
            "no variational ground state"
        )


def _finish(solver, state, spec, mu, it, hist, converged, t0, **kw) -> SolveReport:
    eb = state.breakdown(spec, mu)
    return SolveReport(
        solver=solver,
        field=state.u,
        breakdown=eb,
        mu=mu,
        mass=state.M,
        iterations=it,
        residual_history=hist,
        converged=converged,
        pohozaev_rel=pohozaev_relative(eb, spec),
        action=kw.pop("action", eb.L),
        wallclock=time.perf_counter() - t0,
        extra={"problem": _problem_tag(spec)},
        **kw,
    )


def _problem_tag(spec: ProblemSpec) -> dict:
    return {"N": spec.N, "s": spec.s, "alpha": spec.alpha, "mode": spec.mode,
            "nonlinearity": spec.nonlinearity.label()}


def _record(hist, r):
    hist.append(float(r))


def _check_descent(decreases: list, rep: SolveReport):
    """Every accepted step lowered its objective; recorded and enforced."""
    ok = all(d >= 0.0 for d in decreases)
    rep.extra["objective_monotone"] = ok
    if not ok:
        raise SolverError(f"accepted step raised the objective by {-min(decreases):.3e}", rep)


# --------------------------------------------------------------------------
# Petviashvili


def petviashvili_solve(spec: ProblemSpec, u0: Field | None = None) -> SolveReport:
    """Stabilized fixed point ``u <- gamma^theta K_mu RHS(u)`` for ``F = |u|^r / r``."""
    nl = spec.nonlinearity
    if spec.mode != "choquard":
        raise ValueError("petviashvili_solve needs choquard mode")
    if not nl.homogeneous:
        raise ValueError(f"petviashvili_solve needs a pure power nonlinearity, got {nl.label()}")
    if spec.mu is None:
        raise ValueError("petviashvili_solve needs a fixed frequency mu")
    _check_power_range(spec)
    t0 = time.perf_counter()
    opts, s, mu = spec.solver, spec.s, spec.mu
    r = nl.r
    theta = (2 * r - 1) / (2 * r - 2)
    u = _start(spec, u0)
    hist, gammas = [], []
    state = _State(u, spec)
    for it in range(1, opts.max_iters + 1):
        den = state.rhs.dot(u)
        if state.M < 1e-12 or den <= 0:
            raise CollapseError(f"iteration collapsed at step {it} (M={state.M:.3e})")
        gamma = (state.T + mu * state.M) / den
        w = bessel_solve(state.rhs, s, mu)
        res = _norm(u.like(u.values - w.values)) / _norm(u)
        _record(hist, res)
        gammas.append(float(gamma))
        if res <= opts.grad_tol and abs(gamma - 1.0) <= max(opts.petviashvili_gamma_tol, res):
            break
        vals = gamma**theta * w.values
        u = u.like(vals)
        if it % opts.symmetrize_every == 0:
            u = symmetrize_radial(u)
        state = _State(u, spec)
    else:
        rep = _finish("petviashvili", state, spec, mu, it, hist, False, t0)
        raise NonConvergence(f"Petviashvili did not converge in {opts.max_iters} iterations (residual {res:.3e})", rep)
    u = symmetrize_radial(u)
    state = _State(u, spec)
    hist[-1] = equation_residual(u, state.rhs, s, mu)
    rep = _finish("petviashvili", state, spec, mu, it, hist, hist[-1] <= opts.grad_tol, t0)
    rep.extra["gamma_final"] = gammas[-1]
    return rep


# --------------------------------------------------------------------------
# fiber descent


_ARMIJO_C = 1e-4


def _newton_polish(u: Field, spec: ProblemSpec, mu: float, tol: float, hist: list, maxiter: int = 25,
                   source: Callable | None = None) -> Field:
    """Inexact Newton-Krylov on ``u - K_mu S(u) = 0`` from a nearby iterate.

    ``S`` defaults to the right-hand side ``RHS(u)``.
    """
    s, shape = spec.s, u.grid.shape
    if source is None:
        def source(f):
            return _State(f, spec).rhs

    def R(v):
        f = u.like(v.reshape(shape))
        return (f.values - bessel_solve(source(f), s, mu).values).ravel()

    def cb(x, fx):
        _record(hist, float(np.linalg.norm(fx) / max(np.linalg.norm(x), 1e-300)))

    # max-norm target that implies the relative L2 target
    ftol = tol * float(np.linalg.norm(u.values)) / math.sqrt(u.values.size)
    try:
        v = newton_krylov(R, u.values.ravel(), f_tol=ftol, method="lgmres", inner_maxiter=30,
                          maxiter=maxiter, callback=cb)
    except NoConvergence as exc:
        v = np.asarray(exc.args[0])
    return u.like(np.asarray(v).reshape(shape))


def fiber_descent_solve(spec: ProblemSpec, u0: Field | None = None, mu: float | None = None) -> SolveReport:
    """Ground state at fixed ``mu`` for general ``f`` (Choquard or local mode).

    Stage 1 is preconditioned descent on ``Phi(u) = max_t J_mu(u(./t))``:
    the direction is ``K_mu [t^-2s (-Delta)^s u + mu u - t^alpha RHS(u)]``
    with ``t`` the current fiber maximizer (``t^0`` on the source in local
    mode), with Armijo backtracking on ``Phi``.  Every ``k_proj`` iterations
    the field is moved onto the Pohozaev set by the dilation ``u(./t)``.

    ``Phi`` is dilation invariant in the continuum but not on the grid, so
    its discrete minimizer misses the discrete solution by the
    discretization error.  Once the stage-1 gradient is small against the
    equation residual, stage 2 polishes with Newton-Krylov on the
    preconditioned equation.
    """
    mu = spec.mu if mu is None else float(mu)
    if mu is None or mu <= 0:
        raise ValueError("fiber_descent_solve needs a positive frequency")
    t0 = time.perf_counter()
    opts, s = spec.solver, spec.s
    src_pow = spec.alpha if spec.mode == "choquard" else 0.0
    u = _start(spec, u0)
    it = 0
    hist, obj, projs, phi_hist, res_seq, drops = [], [], [], [], [], []

    def project(st):
        fc = fiber_curve(st.breakdown(spec, mu), spec)
        try:
            return fc, fiber_maximizer(fc)
        except NoPohozaevProjection as exc:
            err = NoPohozaevProjection(f"fiber projection unavailable: {exc}")
            err.report = _finish("fiber_descent", st, spec, mu, it, hist, False, t0)
            raise err from exc

    st = _State(u, spec)
    nl = spec.nonlinearity
    if spec.mode == "local" and nl.homogeneous and nl.r > 2 and st.I <= 0.5 * mu * st.M:
        # a pure power fiber exists once int G > mu M / 2; fix the amplitude so that int G = mu M
        u = u.like(u.values * (mu * st.M / st.I) ** (1.0 / (nl.r - 2)))
        st = _State(u, spec)
    # the initial guess can sit far from the Pohozaev set; move it there first
    for _ in range(8):
        fc, t = project(st)
        if abs(t - 1.0) < 1e-3:
            break
        u = symmetrize_radial(rescale_field(u, min(max(t, 0.2), 5.0)))
        st = _State(u, spec)

    step = opts.step
    converged = False
    for it in range(1, opts.max_iters + 1):
        fc, t = project(st)
        phi = fiber_value(fc, t)
        grad = t ** (-2 * s) * frac_laplacian(u, s).values + mu * u.values - t**src_pow * st.rhs.values
        d = bessel_solve(u.like(grad), s, mu)
        res = equation_residual(u, st.rhs, s, mu)
        _record(hist, res)
        phi_res = _norm(d) / _norm(u)
        phi_hist.append(phi_res)
        if res <= opts.grad_tol:
            converged = True
            break
        res_seq.append(res)
        if phi_res <= max(opts.grad_tol, 1e-2 * res):
            break
        # residual stalled at the discretization gap between Phi and the equation
        if len(res_seq) > 10 and abs(res_seq[-11] - res) <= 1e-2 * res:
            break
        slope = float(np.vdot(grad, d.values)) * u.grid.dV
        tau = step
        accepted = False
        for _ in range(30):
            trial = u.like(u.values - tau * d.values)
            tst = _State(trial, spec)
            try:
                tfc = fiber_curve(tst.breakdown(spec, mu), spec)
                phi_t = fiber_value(tfc, fiber_maximizer(tfc))
            except NoPohozaevProjection:
                tau *= 0.5
                continue
            if phi_t <= phi - _ARMIJO_C * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            # no decrease above roundoff: stage 1 is done
            break
        obj.append(float(phi_t))
        drops.append(phi - phi_t)
        u, st = trial, tst
        step = min(opts.step, 2 * tau) if tau < step else step
        if it % opts.k_proj == 0:
            fc, t = project(st)
            if abs(t - 1.0) > 1e-14:
                u = symmetrize_radial(rescale_field(u, min(max(t, 0.2), 5.0)))
                st = _State(u, spec)
                projs.append(it)
        elif it % opts.symmetrize_every == 0:
            u = symmetrize_radial(u)
            st = _State(u, spec)
    stage1 = it
    if not converged:
        u = _newton_polish(u, spec, mu, opts.grad_tol, hist)
        u = symmetrize_radial(u)
        st = _State(u, spec)
        _record(hist, equation_residual(u, st.rhs, s, mu))
        converged = hist[-1] <= opts.grad_tol
    rep = _finish("fiber_descent", st, spec, mu, it, hist, converged, t0, objective_history=obj, projections=projs)
    rep.extra.update(stage1_iterations=stage1, phi_residual=phi_hist[-1] if phi_hist else None,
                     pohozaev_within_tol=rep.pohozaev_rel <= opts.poho_tol)
    _check_descent(drops, rep)
    if not converged:
        raise NonConvergence(
            f"fiber descent stopped after {it} iterations (residual {hist[-1]:.3e}, "
            f"Pohozaev {rep.pohozaev_rel:.3e})",
            rep,
        )
    return rep


# --------------------------------------------------------------------------
# mass-constrained flow


def _positive_growth(nl) -> float:
    if nl.kind == "combined":
        return max([nl.r] + ([nl.q] if nl.sign > 0 else []))
    return nl.growth_at_infinity()


def transfer_field(u: Field, grid: GridSpec) -> Field:
    """Interpolate a decaying field onto another grid (cubic, zero outside)."""
    from scipy.ndimage import map_coordinates

    if grid == u.grid:
        return u
    src = u.grid
    q = (grid.axis / src.dx) + src.n // 2
    pts = np.meshgrid(*([q] * grid.N), indexing="ij")
    v = map_coordinates(u.values, pts, order=3, mode="grid-constant", cval=0.0)
    return Field(v, grid)


def normalized_flow_solve(
    spec: ProblemSpec,
    m: float | None = None,
    u0: Field | None = None,
    adapt_box: bool = False,
    max_rounds: int = 4,
) -> SolveReport:
    """Mass-constrained ground state ``||u||_2^2 = m`` by a projected flow.

    The tangent gradient ``(-Delta)^s u - RHS(u) + mu(u) u`` with
    ``mu(u) = (<RHS, u> - T) / M`` is preconditioned by ``K_lam``, projected
    onto the tangent space of the sphere and followed by a mass rescaling.
    Armijo backtracking acts on the frequency-free action.  The
    preconditioner uses ``lam = max(mu(u), 0.05 T/M)``.

    With ``adapt_box`` the solve is repeated on a box scaled like
    ``mu^(-1/(2s))`` relative to ``spec.grid.L`` (the box suited to mu = 1)
    whenever the current box is off by more than 25 %.
    """
    m = spec.mass_target if m is None else float(m)
    if m is None or m <= 0:
        raise ValueError("normalized_flow_solve needs a positive mass")
    nl = spec.nonlinearity
    if spec.mode == "choquard":
        crit = critical_exponents(spec.N, spec.s, spec.alpha).l2crit
    else:
        crit = 2.0 + 4.0 * spec.s / spec.N
    if _positive_growth(nl) >= crit:
        raise ValueError(
            f"nonlinearity {nl.label()} is not mass-subcritical (growth {_positive_growth(nl):g} >= {crit:.6g})"
        )
    if not adapt_box:
        return _normalized_flow(spec, m, u0, spec.grid)
    L_ref = spec.grid.L
    u = _start(spec, u0)
    u = _best_dilation(u.like(u.values * math.sqrt(m / u.mass())), spec)
    rep = _normalized_flow(spec, m, u, u.grid)
    for _ in range(max_rounds):
        target = L_ref * rep.mu ** (-1.0 / (2 * spec.s)) if rep.mu > 0 else L_ref
        if abs(math.log(target / rep.field.grid.L)) <= math.log(1.25):
            break
        g2 = rep.field.grid.with_(L=target)
        rep = _normalized_flow(spec, m, transfer_field(rep.field, g2), g2)
    rep.extra["box_L"] = rep.field.grid.L
    return rep


def _best_dilation(u: Field, spec: ProblemSpec) -> Field:
    """Mass-preserving dilation ``l^(N/2) u(l x)`` of least constrained action.

    On the grid the dilation is exact: the samples stay, the box becomes
    ``L / l``.  The flow is then started at the right length scale, which
    can be far from the one of ``u`` when ``mu`` spans decades across masses.
    """
    N = spec.N
    g = u.grid

    def dilate(logl):
        lam = math.exp(logl)
        return Field(u.values * lam ** (N / 2), g.with_(L=g.L / lam))

    def energy(logl):
        return constrained_action(dilate(logl), spec)

    res = minimize_scalar(energy, bounds=(-40.0, 40.0), method="bounded", options={"xatol": 1e-3})
    if abs(res.x) > 39.0 or not res.fun < 0:
        # no interior minimum: leave the field alone and let the flow report it
        return u
    return dilate(float(res.x))


_POLISH_AT = 1e-4


def _newton_polish_mass(u: Field, spec: ProblemSpec, mu: float, m: float, tol: float, hist: list,
                        maxiter: int = 25):
    """Newton-Krylov on ``(u - K_mu RHS(u), ||u||^2 / m - 1) = 0`` in ``(u, mu)``."""
    s, shape = spec.s, u.grid.shape
    A = float(np.abs(u.values).max())

    def split(x):
        return u.like(A * x[:-1].reshape(shape)), mu * x[-1]

    def R(x):
        f, mx = split(x)
        if not mx > 0:
            return np.full(x.shape, 1e3)
        r = (f.values - bessel_solve(_State(f, spec).rhs, s, mx).values) / A
        return np.append(r.ravel(), f.mass() / m - 1.0)

    def cb(x, fx):
        f, _ = split(x)
        _record(hist, float(np.linalg.norm(fx[:-1]) * A / np.linalg.norm(f.values)))

    x0 = np.append(u.values.ravel() / A, 1.0)
    ftol = tol * float(np.linalg.norm(u.values)) / math.sqrt(u.values.size) / A
    try:
        x = newton_krylov(R, x0, f_tol=ftol, method="lgmres", inner_maxiter=30, maxiter=maxiter, callback=cb)
    except NoConvergence as exc:
        x = np.asarray(exc.args[0])
    return split(np.asarray(x))


def _normalized_flow(spec, m, u0, grid) -> SolveReport:
    t0 = time.perf_counter()
    opts, s = spec.solver, spec.s
    u = _start(spec, u0, grid)
    u = u.like(u.values * math.sqrt(m / u.mass()))
    st = _State(u, spec)
    T_init = max(st.T, 1e-300)
    hist, obj, res_seq, drops = [], [], [], []
    step = opts.step
    converged = False
    energy = 0.5 * st.T - (0.5 * st.I if spec.mode == "choquard" else st.I)
    mu = 0.0
    for it in range(1, opts.max_iters + 1):
        mu = (st.rhs.dot(u) - st.T) / st.M
        gvals = frac_laplacian(u, s).values - st.rhs.values + mu * u.values
        lam = max(mu, 0.05 * st.T / st.M)
        d = bessel_solve(u.like(gvals), s, lam).values
        d = d - (float(np.vdot(d, u.values)) * grid.dV / st.M) * u.values
        res = equation_residual(u, st.rhs, s, mu) if mu > 0 else math.inf
        _record(hist, res)
        if res <= opts.grad_tol:
            converged = True
            break
        res_seq.append(res)
        if res <= _POLISH_AT or (len(res_seq) > 10 and abs(res_seq[-11] - res) <= 1e-2 * res):
            break
        slope = float(np.vdot(gvals, d)) * grid.dV
        tau = step
        accepted = False
        for _ in range(30):
            v = u.values - tau * d
            v *= math.sqrt(m / (float(np.vdot(v, v)) * grid.dV))
            trial = u.like(v)
            tst = _State(trial, spec)
            e_t = 0.5 * tst.T - (0.5 * tst.I if spec.mode == "choquard" else tst.I)
            if e_t <= energy - _ARMIJO_C * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        if tst.T > 1e6 * T_init:
            rep = _finish("normalized_flow", tst, spec, mu, it, hist, False, t0, action=e_t)
            raise RunawayError("kinetic energy ran away; the problem looks mass-supercritical", rep)
        obj.append(float(e_t))
        drops.append(energy - e_t)
        u, st, energy = trial, tst, e_t
        step = min(opts.step, 2 * tau) if tau < step else step
        if it % opts.symmetrize_every == 0:
            u = symmetrize_radial(u)
            u = u.like(u.values * math.sqrt(m / u.mass()))
            st = _State(u, spec)
            energy = 0.5 * st.T - (0.5 * st.I if spec.mode == "choquard" else st.I)
    mu = (st.rhs.dot(u) - st.T) / st.M
    if not converged and mu > 0:
        u, mu = _newton_polish_mass(u, spec, mu, m, opts.grad_tol, hist)
        u = symmetrize_radial(u)
        u = u.like(u.values * math.sqrt(m / u.mass()))
        st = _State(u, spec)
        energy = 0.5 * st.T - (0.5 * st.I if spec.mode == "choquard" else st.I)
        _record(hist, equation_residual(u, st.rhs, s, mu))
        converged = hist[-1] <= opts.grad_tol
    rep = _finish("normalized_flow", st, spec, mu, it, hist, converged, t0, objective_history=obj, action=energy)
    _check_descent(drops, rep)
    if not converged:
        raise NonConvergence(f"normalized flow stopped after {it} iterations (residual {hist[-1]:.3e})", rep)
    rep.extra["lagrange_multiplier"] = lagrange_multiplier(u, spec)
    return rep


# --------------------------------------------------------------------------
# semiclassical


def bowl_potential(center=None, weights=None) -> Callable:
    """``V(x) = 1 + q(x-c) / (1 + q(x-c))`` with ``q(z) = sum_i w_i z_i^2``."""

    def V(*xs):
        c = center if center is not None else [0.0] * len(xs)
        w = weights if weights is not None else [1.0] * len(xs)
        q = sum(wi * (x - ci) ** 2 for x, ci, wi in zip(xs, c, w))
        return 1.0 + q / (1.0 + q)

    return V


def semiclassical_solve(spec: ProblemSpec, V: Callable, eps: float, u0: Field | None = None,
                        x_min=None) -> SolveReport:
    """Solve ``(-Delta)^s u + V(eps y) u = f(u)`` (local mode, power f).

    Descent runs on the Nehari level ``max_c J(c u)``, preconditioned with
    ``lam = inf V``, and a Newton-Krylov polish finishes once Armijo steps
    stop registering above roundoff.  The start is the frequency ``min V`` ground state from
    :func:`fiber_descent_solve`, shifted to the grid point nearest the
    minimum of ``V(eps y)``.  ``extra`` records the argmax in both scaled
    (``y``) and original (``x = eps y``) coordinates and its distance to
    ``x_min`` (the minimum point of ``V``; located on the grid if omitted).
    """
    if spec.mode != "local" or not spec.nonlinearity.homogeneous:
        raise ValueError("semiclassical_solve needs local mode with a pure power f")
    q = spec.nonlinearity.r
    if q <= 2:
        raise ValueError("semiclassical_solve needs a superlinear power (r > 2)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    t0 = time.perf_counter()
    g = spec.grid
    W = np.broadcast_to(V(*[eps * c for c in g.coords()]), g.shape).astype(float)
    if not np.all(np.isfinite(W)) or W.min() <= 0:
        raise ValueError("potential must be finite and bounded below by a positive constant")
    lam = float(W.min())
    # ties (flat V) go to the point nearest the origin
    near_min = np.where(W <= lam + 1e-14 * abs(lam), g.radius(), np.inf)
    imin = np.unravel_index(int(np.argmin(near_min)), g.shape)
    opts, s = spec.solver, spec.s

    if u0 is None:
        base = fiber_descent_solve(spec.with_mu(lam).with_solver(grad_tol=max(opts.grad_tol, 1e-8), poho_tol=1.0))
        shift = tuple(i - g.n // 2 for i in imin)
        u0 = base.field.like(np.roll(base.field.values, shift, axis=tuple(range(g.N))))
    u = u0
    dV = g.dV

    def nehari(v):
        Tq = kinetic(u.like(v), s) + float(np.sum(W * v * v)) * dV
        Pq = float(np.sum(np.abs(v) ** q)) * dV
        c = (Tq / Pq) ** (1.0 / (q - 2))
        return c * v, (0.5 - 1.0 / q) * c * c * Tq

    v, psi = nehari(u.values)
    f = spec.nonlinearity.f
    hist, obj, drops = [], [], []
    converged = False
    step = opts.step
    for it in range(1, opts.max_iters + 1):
        uf = u.like(v)
        grad = frac_laplacian(uf, s).values + W * v - f(v)
        # residual of the fixed-point form with the variable zeroth-order term
        res = float(np.sqrt(np.sum(grad**2) * dV)) / float(np.sqrt(np.sum(v * v) * dV)) / lam
        _record(hist, res)
        if res <= opts.grad_tol:
            converged = True
            break
        d = bessel_solve(uf.like(grad), s, lam).values
        slope = float(np.vdot(grad, d)) * dV
        tau = step
        accepted = False
        for _ in range(30):
            vt, psit = nehari(v - tau * d)
            if psit <= psi - _ARMIJO_C * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        obj.append(float(psit))
        drops.append(psi - psit)
        v, psi = vt, psit
        step = min(opts.step, 2 * tau) if tau < step else step
    if not converged:
        def source(w):
            return w.like((lam - W) * w.values + f(w.values))

        v = _newton_polish(u.like(v), spec, lam, opts.grad_tol, hist, source=source).values
        grad = frac_laplacian(u.like(v), s).values + W * v - f(v)
        _record(hist, float(np.sqrt(np.sum(grad**2) / np.sum(v * v))) / lam)
        converged = hist[-1] <= opts.grad_tol
    u = u.like(v)
    T = kinetic(u, s)
    M = u.mass()
    Gloc = float(spec.nonlinearity.F(v).sum() * dV)
    action = 0.5 * T + 0.5 * float(np.sum(W * v * v)) * dV - Gloc
    eb = EnergyBreakdown(T=T, M=M, D=None, Gloc=Gloc, L=action, P=float("nan"), mu=lam)
    iy = np.unravel_index(int(np.argmax(v)), g.shape)
    y = np.array([g.axis[i] for i in iy])
    if x_min is None:
        x_min = np.array([g.axis[i] for i in imin]) * eps
    x_eps = eps * y
    rep = SolveReport(
        solver="semiclassical",
        field=u,
        breakdown=eb,
        mu=lam,
        mass=M,
        iterations=it,
        residual_history=hist,
        converged=converged,
        pohozaev_rel=float("nan"),
        objective_history=obj,
        action=action,
        wallclock=time.perf_counter() - t0,
        extra={
            "problem": _problem_tag(spec),
            "eps": eps,
            "argmax_y": y.tolist(),
            "argmax_x": x_eps.tolist(),
            "argmax_distance": float(np.linalg.norm(x_eps - np.asarray(x_min, float))),
            "argmax_distance_y": float(np.linalg.norm(y - np.asarray(x_min, float) / eps)),
            "V_min": lam,
        },
    )
    _check_descent(drops, rep)
    if not converged:
        raise NonConvergence(f"semiclassical descent stopped after {it} iterations (residual {hist[-1]:.3e})", rep)
    return rep
