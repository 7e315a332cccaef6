"""Action, Pohozaev functional, the dilation fiber and field rescaling."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.optimize import brentq

from .core import Field, GridSpec, ProblemSpec, symmetrize_radial
from .nonlocal_ops import kinetic, riesz_convolve

__all__ = [
    "NoPohozaevProjection",
    "EnergyBreakdown",
    "FiberCurve",
    "source_term",
    "energy_breakdown",
    "constrained_action",
    "fiber_curve",
    "fiber_value",
    "fiber_derivative",
    "fiber_maximizer",
    "rescale_field",
    "lagrange_multiplier",
    "pohozaev_relative",
]


class NoPohozaevProjection(ValueError):
    """The dilation fiber has no interior maximum (interaction not positive)."""


@dataclass(frozen=True)
class EnergyBreakdown:
    T: float
    M: float
    D: float | None
    Gloc: float | None
    L: float
    P: float
    mu: float

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=16)
def face_mask(grid: GridSpec) -> np.ndarray:
    """1 except on the ``x_i = -L/2`` faces.

    The free-space convolution on an even grid is not symmetric under
    ``x -> -x`` unless the unpaired face carries no density; masking it keeps
    the discrete Choquard term invariant under the grid reflections.
    """
    m = np.ones(grid.shape)
    for ax in range(grid.N):
        m[(slice(None),) * ax + (0,)] = 0.0
    m.setflags(write=False)
    return m


def choquard_density(u: Field, spec: ProblemSpec) -> Field:
    """``F(u)`` with the unpaired faces zeroed."""
    return u.like(spec.nonlinearity.F(u.values) * face_mask(u.grid))


def _potential(u: Field, spec: ProblemSpec) -> Field:
    return riesz_convolve(choquard_density(u, spec), spec.alpha)


def source_term(u: Field, spec: ProblemSpec, potential: Field | None = None) -> Field:
    """Right-hand side: ``(I_alpha * F(u)) f(u)`` or ``f(u)`` in local mode."""
    f = spec.nonlinearity.f(u.values)
    if spec.mode == "local":
        return u.like(f)
    if potential is None:
        potential = _potential(u, spec)
    return u.like(potential.values * f * face_mask(u.grid))


def _interaction(u: Field, spec: ProblemSpec, potential: Field | None = None) -> float:
    if spec.mode == "local":
        return float(spec.nonlinearity.F(u.values).sum() * u.grid.dV)
    if potential is None:
        potential = _potential(u, spec)
    return float(np.vdot(potential.values, choquard_density(u, spec).values) * u.grid.dV)


def _assemble(T, M, I, mu, spec) -> EnergyBreakdown:
    N, s = spec.N, spec.s
    if spec.mode == "choquard":
        L = 0.5 * T + 0.5 * mu * M - 0.5 * I
        P = 0.5 * (N - 2 * s) * T + 0.5 * N * mu * M - 0.5 * (N + spec.alpha) * I
        return EnergyBreakdown(T, M, I, None, L, P, mu)
    L = 0.5 * T + 0.5 * mu * M - I
    P = 0.5 * (N - 2 * s) * T + N * (0.5 * mu * M - I)
    return EnergyBreakdown(T, M, None, I, L, P, mu)


def energy_breakdown(u: Field, spec: ProblemSpec, mu: float | None = None) -> EnergyBreakdown:
    """T, M, the interaction, the action and the Pohozaev value at frequency ``mu``.

    ``mu`` defaults to ``spec.mu``; for mass-constrained specs pass it in.
    """
    mu = spec.mu if mu is None else mu
    if mu is None:
        raise ValueError("energy_breakdown needs a frequency")
    T = kinetic(u, spec.s)
    return _assemble(T, u.mass(), _interaction(u, spec), float(mu), spec)


def constrained_action(u: Field, spec: ProblemSpec) -> float:
    """Frequency-free action ``T/2 - D/2`` (``T/2 - int G`` in local mode)."""
    T = kinetic(u, spec.s)
    I = _interaction(u, spec)
    return 0.5 * T - (0.5 * I if spec.mode == "choquard" else I)


def pohozaev_relative(eb: EnergyBreakdown, spec: ProblemSpec) -> float:
    """``|P|`` divided by the sum of the magnitudes of its three terms."""
    N, s = spec.N, spec.s
    if spec.mode == "choquard":
        scale = 0.5 * (N - 2 * s) * eb.T + 0.5 * N * eb.mu * eb.M + 0.5 * (N + spec.alpha) * abs(eb.D)
    else:
        scale = 0.5 * (N - 2 * s) * eb.T + N * (0.5 * eb.mu * eb.M + abs(eb.Gloc))
    return abs(eb.P) / scale if scale > 0 else 0.0


# --------------------------------------------------------------------------
# dilation fiber


@dataclass(frozen=True)
class FiberCurve:
    """``g(t) = A t^a + B t^b - C t^c`` for the dilation ``u(./t)``."""

    A: float
    B: float
    C: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.A < 0 or self.B < 0:
            raise ValueError(f"fiber needs A, B >= 0 (got A={self.A}, B={self.B})")


def fiber_curve(eb: EnergyBreakdown, spec: ProblemSpec) -> FiberCurve:
    N, s = spec.N, spec.s
    A, B = 0.5 * eb.T, 0.5 * eb.mu * eb.M
    if spec.mode == "choquard":
        return FiberCurve(A, B, 0.5 * eb.D, N - 2 * s, N, N + spec.alpha)
    return FiberCurve(A, B, eb.Gloc, N - 2 * s, N, N)


def fiber_value(fc: FiberCurve, t: float) -> float:
    if not t > 0:
        raise ValueError("t must be positive")
    return fc.A * t**fc.a + fc.B * t**fc.b - fc.C * t**fc.c


def fiber_derivative(fc: FiberCurve, t: float) -> float:
    return fc.a * fc.A * t ** (fc.a - 1) + fc.b * fc.B * t ** (fc.b - 1) - fc.c * fc.C * t ** (fc.c - 1)


def fiber_maximizer(fc: FiberCurve, lo: float = 1e-6, hi: float = 1e6) -> float:
    """Unique critical point of the fiber on ``(0, inf)``.

    Raises :class:`NoPohozaevProjection` when no sign change of ``g'`` exists.
    """
    if fc.C <= 0:
        raise NoPohozaevProjection(f"interaction C={fc.C:.6g} is not positive; no Pohozaev projection")
    if fc.b == fc.c and fc.C <= fc.B:
        raise NoPohozaevProjection(
            f"local fiber needs int G > mu M / 2 (C={fc.C:.6g}, B={fc.B:.6g}); no Pohozaev projection"
        )
    if fc.A == 0 and fc.B == 0:
        raise NoPohozaevProjection("fiber has no positive part")

    # g'(t) / t^(a-1) is positive near 0 and eventually negative
    def h(tau):
        t = math.exp(tau)
        return fc.a * fc.A + fc.b * fc.B * t ** (fc.b - fc.a) - fc.c * fc.C * t ** (fc.c - fc.a)

    tlo, thi = math.log(lo), math.log(hi)
    hlo, hhi = h(tlo), h(thi)
    if not (hlo > 0 > hhi):
        raise NoPohozaevProjection(
            f"cannot bracket the fiber maximum on [{lo:g}, {hi:g}]: "
            f"A={fc.A:.6g}, B={fc.B:.6g}, C={fc.C:.6g}, h(lo)={hlo:.3g}, h(hi)={hhi:.3g}"
        )
    tau = brentq(h, tlo, thi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(tau)


# --------------------------------------------------------------------------
# rescaling


@lru_cache(maxsize=32)
def _dilation_matrix(grid: GridSpec, t: float) -> np.ndarray:
    # W[i, j]: weight of sample j in the cubic-spline value at x_i / t
    n = grid.n
    q = (grid.axis / t) / grid.dx + n // 2
    eye = np.eye(n)
    W = np.stack([map_coordinates(eye[:, j], [q], order=3, mode="grid-constant", cval=0.0) for j in range(n)], axis=1)
    W.setflags(write=False)
    return W


def rescale_field(u: Field, t: float) -> Field:
    """``u(x / t)`` by separable cubic-spline interpolation, zero outside the box."""
    if not 0.2 <= t <= 5.0:
        raise ValueError(f"dilation t={t} outside the accuracy envelope [0.2, 5]")
    if t == 1.0:
        return u
    W = _dilation_matrix(u.grid, float(t))
    v = u.values
    for ax in range(u.grid.N):
        v = np.moveaxis(np.tensordot(W, v, axes=([1], [ax])), 0, ax)
    out = u.like(v)
    sym = symmetrize_radial(u)
    if np.abs(sym.values - u.values).max() <= 1e-12 * max(np.abs(u.values).max(), 1e-300):
        out = symmetrize_radial(out)
    return out


def lagrange_multiplier(u: Field, spec: ProblemSpec) -> float:
    """Frequency from the weak form tested against ``u``: ``(<RHS, u> - T) / M``."""
    M = u.mass()
    if M <= 0:
        raise ValueError("zero mass: no Lagrange multiplier")
    rhs = source_term(u, spec)
    return (rhs.dot(u) - kinetic(u, spec.s)) / M
