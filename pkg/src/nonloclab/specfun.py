"""Special functions and exact constants.

Gamma, the Gauss hypergeometric function on the negative real axis, the
closed form of the fractional Laplacian of ``h_beta(x) = (1+|x|^2)^(-beta/2)``
together with its large-|x| asymptotics, the Riesz and fractional-Laplacian
normalization constants, and the table of critical exponents.

Everything here is plain double precision; nothing is tabulated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import exp1, gammaincc

__all__ = [
    "PoleError",
    "HypergeometricNonconvergence",
    "DegenerateParameters",
    "ExponentTable",
    "DecayLaw",
    "gamma_fn",
    "hyp2f1",
    "frac_lap_constant",
    "riesz_constant",
    "hbeta_constant",
    "hbeta_flap_exact",
    "hbeta_asymptotic",
    "critical_exponents",
    "epstein_zeta",
]


class PoleError(ValueError):
    """Gamma evaluated at a nonpositive integer."""


class HypergeometricNonconvergence(ArithmeticError):
    """Series cap reached before the requested tolerance.

    ``value`` holds the partial sum and ``bound`` the a posteriori estimate
    of the neglected tail (both as arrays when the input was an array).
    """

    def __init__(self, message, value, bound):
        super().__init__(message)
        self.value = value
        self.bound = bound


class DegenerateParameters(ValueError):
    """An asymptotic constant hits a Gamma pole for these parameters."""


# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _is_pole(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def gamma_fn(x: float) -> float:
    """Gamma function of a real argument.

    Lanczos (g=7, n=9) for ``x >= 0.5`` and the reflection formula
    ``Gamma(x) Gamma(1-x) = pi / sin(pi x)`` below.  Relative accuracy is
    about 1e-15 away from the poles.

    Raises
    ------
    PoleError
        If ``x`` is zero or a negative integer.
    """
    x = float(x)
    if _is_pole(x):
        raise PoleError(f"Gamma has a pole at x={x:g}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma_fn(1.0 - x))
    x -= 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def _rgamma(x: float) -> float:
    """Reciprocal Gamma, zero at the poles."""
    return 0.0 if _is_pole(x) else 1.0 / gamma_fn(x)


_MAX_TERMS = 10**6


def _series(a, b, c, w, tol, max_terms):
    """Sum 2F1(a, b; c; w) for w in [0, 1) (array), with tail estimate."""
    w = np.asarray(w, dtype=float)
    total = np.ones_like(w)
    term = np.ones_like(w)
    active = np.ones(w.shape, dtype=bool)
    bound = np.zeros_like(w)
    idx = np.arange(w.size).reshape(w.shape)
    n = 0
    while n < max_terms:
        coef = (a + n) * (b + n) / ((c + n) * (n + 1.0))
        if coef == 0.0:
            # terminating series
            bound[...] = 0.0
            return total, bound
        ww = w[active]
        tt = term[active] * coef * ww
        term[active] = tt
        total[active] += tt
        n += 1
        # ratio of successive terms from here on tends to w from the current
        # value; use the larger of the two as the geometric tail rate
        nxt = abs((a + n) * (b + n) / ((c + n) * (n + 1.0)))
        if nxt >= 1.0 and n < 4 * (abs(a) + abs(b) + abs(c) + 10):
            continue
        rate = np.maximum(ww * nxt, ww)
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = np.where(rate < 1.0, np.abs(tt) * rate / (1.0 - rate), np.inf)
        done = tail <= tol * np.abs(total[active])
        sub = idx[active]
        bound.flat[sub[done]] = tail[done]
        bound.flat[sub[~done]] = tail[~done]
        active.flat[sub[done]] = False
        if not active.any():
            return total, bound
    raise HypergeometricNonconvergence(
        f"2F1({a},{b};{c};w) series did not reach tol={tol:g} in {max_terms} terms",
        total,
        bound,
    )


_FAR = 9.0
_EPS_DEGEN = 1e-3


def _hyp2f1_far(a, b, c, z, tol, max_terms):
    # 1/z connection formula, z < -_FAR
    if abs((a - b) - round(a - b)) < 1e-6:
        # integer a - b: the Gamma poles cancel in the limit; symmetric
        # perturbation of b, Richardson-extrapolated (error O(eps^4))
        def sym(e):
            return 0.5 * (_hyp2f1_far(a, b + e, c, z, tol, max_terms) + _hyp2f1_far(a, b - e, c, z, tol, max_terms))

        return (4.0 * sym(_EPS_DEGEN) - sym(2 * _EPS_DEGEN)) / 3.0
    out = 0.0
    for p, q in ((a, b), (b, a)):
        coef = gamma_fn(c) * gamma_fn(q - p) * _rgamma(q) * _rgamma(c - p)
        if coef != 0.0:
            out = out + coef * (-z) ** (-p) * hyp2f1(p, p - c + 1, p - q + 1, 1.0 / z, tol, max_terms)
    return out


def hyp2f1(a: float, b: float, c: float, z, tol: float = 1e-13, max_terms: int = _MAX_TERMS):
    """Gauss hypergeometric function ``2F1(a, b; c; z)`` for real ``z <= 0``.

    Uses the Pfaff transform ``w = z/(z-1)`` so that the power series runs
    in ``w in [0, 1)``.  When ``w > 0.99`` the Euler-transformed variant is
    used instead if its terms decay faster.  For ``z < -9`` the ``1/z``
    connection formula is used; when ``a - b`` is an integer its limit is
    taken by symmetric perturbation of ``b`` with Richardson extrapolation
    (relative accuracy about 1e-11).  Accepts scalars or arrays.

    Raises
    ------
    ValueError
        If ``c`` is a nonpositive integer or some ``z > 0``.
    HypergeometricNonconvergence
        If the series cap is hit before the tolerance.
    """
    if _is_pole(c):
        raise ValueError(f"c={c} is a nonpositive integer")
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z > 0):
        raise ValueError("hyp2f1 is implemented for z <= 0 only")
    if a == 0 or b == 0:
        out = np.ones_like(z)
        return float(out[0]) if scalar else out
    if a == c or b == c:
        out = (1.0 - z) ** (-(b if a == c else a))
        return float(out[0]) if scalar else out
    far = z < -_FAR
    if np.any(far):
        out = np.empty_like(z)
        out[far] = _hyp2f1_far(a, b, c, z[far], tol, max_terms)
        if np.any(~far):
            out[~far] = hyp2f1(a, b, c, z[~far], tol, max_terms)
        return float(out[0]) if scalar else out
    w = z / (z - 1.0)
    one_minus_z = 1.0 - z
    # Pfaff in the first or second parameter; the two differ by one Euler
    # transform.  Terms behave like n^(a'+b'-c-1) w^n.
    pa = (a, c - b, a)  # 2F1 = (1-z)^-a * 2F1(a, c-b; c; w)
    pb = (c - a, b, b)  # 2F1 = (1-z)^-b * 2F1(c-a, b; c; w)
    use_b = np.max(w) > 0.99 and (pb[0] + pb[1]) < (pa[0] + pa[1])
    a1, b1, expo = pb if use_b else pa
    try:
        s, _ = _series(a1, b1, c, w, tol, max_terms)
    except HypergeometricNonconvergence as exc:
        scale = one_minus_z ** (-expo)
        raise HypergeometricNonconvergence(str(exc), exc.value * scale, exc.bound * scale) from None
    out = one_minus_z ** (-expo) * s
    return float(out[0]) if scalar else out


def frac_lap_constant(N: int, s: float) -> float:
    """``C_{N,s} = 4^s Gamma((N+2s)/2) / (pi^{N/2} |Gamma(-s)|)`` for 0 < s < 1."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s={s} must lie in (0, 1)")
    return 4.0**s * gamma_fn((N + 2.0 * s) / 2.0) / (math.pi ** (N / 2.0) * abs(gamma_fn(-s)))


def riesz_constant(N: int, alpha: float) -> float:
    """``C_{N,alpha} = Gamma((N-alpha)/2) / (2^alpha pi^{N/2} Gamma(alpha/2))``.

    Diverges like ``1/(N-alpha)`` as ``alpha -> N``.
    """
    if not 0.0 < alpha < N:
        raise ValueError(f"alpha={alpha} must lie in (0, N={N})")
    return gamma_fn((N - alpha) / 2.0) / (2.0**alpha * math.pi ** (N / 2.0) * gamma_fn(alpha / 2.0))


def _check_beta(beta, N, s):
    if not 0.0 < s < 1.0:
        raise ValueError(f"s={s} must lie in (0, 1)")
    if not 0.0 < beta <= N + 2.0 * s + 1e-14:
        raise ValueError(f"beta={beta} outside (0, N+2s]={0, N + 2 * s}")


def hbeta_constant(beta: float, N: int, s: float) -> float:
    """Prefactor ``C_{beta,N,s}``, the value of ``(-Delta)^s h_beta`` at 0."""
    _check_beta(beta, N, s)
    return (
        2.0 ** (2 * s)
        * gamma_fn(N / 2 + s)
        * gamma_fn(beta / 2 + s)
        / (gamma_fn(N / 2) * gamma_fn(beta / 2))
    )


def hbeta_flap_exact(r, beta: float, N: int, s: float):
    """Exact ``(-Delta)^s h_beta`` at radius ``r`` (scalar or array)."""
    c0 = hbeta_constant(beta, N, s)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    vals = c0 * hyp2f1(N / 2 + s, beta / 2 + s, N / 2, -(r**2))
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass(frozen=True)
class DecayLaw:
    """Large-|x| law ``constant * |x|^-exponent`` (times ``log|x|`` for power_log)."""

    rate: str  # "pure_power" | "power_log"
    exponent: float
    constant: float
    sign: str

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        base = self.constant * r ** (-self.exponent)
        return base * np.log(r) if self.rate == "power_log" else base

    def to_dict(self):
        return asdict(self)


def _ratio(num, den):
    """Product of Gammas over product of Gammas, refusing pole inputs."""
    bad = [x for x in num if _is_pole(x)]
    if bad:
        raise DegenerateParameters(f"Gamma pole in numerator at {bad}")
    out = 1.0
    for x in num:
        out *= gamma_fn(x)
    for x in den:
        out *= _rgamma(x)
    return out


def hbeta_asymptotic(beta: float, N: int, s: float, atol: float = 1e-12) -> DecayLaw:
    """Case-split asymptotic law of ``(-Delta)^s h_beta`` as ``|x| -> inf``."""
    _check_beta(beta, N, s)
    four_s = 2.0 ** (2 * s)
    if abs(beta - (N - 2 * s)) <= atol:
        c = four_s * _ratio([N / 2 + s], [N / 2 - s])
        rate, expo = "pure_power", N + 2 * s
    elif abs(beta - N) <= atol:
        c = 2.0 ** (2 * s + 1) * _ratio([N / 2 + s], [N / 2, -s])
        rate, expo = "power_log", N + 2 * s
    elif beta > N:
        c = four_s * _ratio([N / 2 + s, beta / 2 - N / 2], [beta / 2, -s])
        rate, expo = "pure_power", N + 2 * s
    else:
        c = four_s * _ratio([beta / 2 + s, N / 2 - beta / 2], [beta / 2, N / 2 - beta / 2 - s])
        rate, expo = "pure_power", beta + 2 * s
    if c == 0.0:
        raise DegenerateParameters(f"asymptotic constant vanishes for beta={beta}, N={N}, s={s}")
    return DecayLaw(rate=rate, exponent=expo, constant=c, sign="+" if c > 0 else "-")


@dataclass(frozen=True)
class ExponentTable:
    lower: float
    upper: float
    l2crit: float
    sobolev: float
    sublinear_threshold: float

    def to_dict(self):
        return asdict(self)


def critical_exponents(N: int, s: float, alpha: float) -> ExponentTable:
    """Lower/upper Choquard exponents, L2-critical, Sobolev and ``r*``.

    ``upper`` and ``sobolev`` are ``inf`` when ``N <= 2s``.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"s={s} must lie in (0, 1]")
    if not 0.0 < alpha < N:
        raise ValueError(f"alpha={alpha} must lie in (0, N)")
    gap = N - 2.0 * s
    return ExponentTable(
        lower=(N + alpha) / N,
        upper=(N + alpha) / gap if gap > 0 else math.inf,
        l2crit=(N + alpha + 2 * s) / N,
        sobolev=2.0 * N / gap if gap > 0 else math.inf,
        sublinear_threshold=(N + alpha + 4 * s) / (N + 2 * s),
    )


def _upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """Non-normalized upper incomplete gamma ``Gamma(a, x)`` for real ``a``, ``x > 0``."""
    if a > 0:
        return gammaincc(a, x) * gamma_fn(a)
    m = math.ceil(-a) if not float(a).is_integer() else int(-a)
    b = a + m
    val = exp1(x) if b == 0 else gammaincc(b, x) * gamma_fn(b)
    # Gamma(c, x) = (Gamma(c + 1, x) - x^c e^-x) / c, stepping c down to a
    for k in range(m):
        c = b - 1 - k
        val = (val - x**c * np.exp(-x)) / c
    return val


def epstein_zeta(p: float, N: int, terms: int = 6) -> float:
    """``Z_N(p) = sum_{j in Z^N, j != 0} |j|^-p``, analytically continued in ``p``.

    Theta-function splitting; both lattice sums converge like
    ``exp(-pi |j|^2)``.  ``Z_N(0) = -1``, the trivial zeros at negative even
    ``p`` are returned exactly, and ``p = N`` is the pole.
    """
    if p == N:
        raise ValueError(f"Z_N has a pole at p=N={N}")
    if p == 0:
        return -1.0
    if p < 0 and float(p / 2).is_integer():
        return 0.0
    a, b = p / 2.0, (N - p) / 2.0
    j = np.arange(-terms, terms + 1)
    r2 = 0.0
    for ax in range(N):
        shape = [1] * N
        shape[ax] = j.size
        r2 = r2 + j.reshape(shape) ** 2
    r2 = np.asarray(r2, dtype=float).ravel()
    x = math.pi * r2[r2 > 0]
    acc = -1.0 / a - 1.0 / b
    acc += float(np.sum(_upper_gamma(a, x) / x**a))
    acc += float(np.sum(_upper_gamma(b, x) / x**b))
    return acc * math.pi**a / gamma_fn(a)
