"""Grids, fields, the nonlinearity catalog, radial reduction and config parsing."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

try:  # Python >= 3.11
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as _toml

__all__ = [
    "ConfigError",
    "GridSpec",
    "Field",
    "Nonlinearity",
    "SolverOptions",
    "ProblemSpec",
    "Profile",
    "parse_nonlinearity",
    "nonlinearity_eval",
    "load_config",
    "parse_config",
    "symmetrize_radial",
    "radial_profile",
]


class ConfigError(ValueError):
    """Malformed or invalid configuration. ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --------------------------------------------------------------------------
# grid and field


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[-L/2, L/2)^N`` with ``n`` points per axis.

    Point ``i`` along an axis sits at ``(i - n/2) * dx``, so the origin is
    index ``n/2``.
    """

    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.N not in (1, 2, 3):
            raise ConfigError("N", f"dimension must be 1, 2 or 3, got {self.N}")
        if self.n < 16 or self.n & (self.n - 1):
            raise ConfigError("n", f"points per axis must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ConfigError("L", f"box side must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dV(self) -> float:
        return self.dx**self.N

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.N

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    def coords(self) -> list[np.ndarray]:
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        return _coords(self)

    def radius(self) -> np.ndarray:
        return _radius(self)

    def with_(self, **kw) -> "GridSpec":
        return replace(self, **kw)


@lru_cache(maxsize=32)
def _coords(grid: GridSpec):
    out = []
    for d in range(grid.N):
        shape = [1] * grid.N
        shape[d] = grid.n
        a = grid.axis.reshape(shape)
        a.setflags(write=False)
        out.append(a)
    return out


@lru_cache(maxsize=32)
def _radius(grid: GridSpec):
    r = np.sqrt(sum(c**2 for c in _coords(grid)))
    r = np.broadcast_to(r, grid.shape).copy()
    r.setflags(write=False)
    return r


class Field:
    """Real samples on a :class:`GridSpec`; immutable, with a write-once spectrum."""

    __slots__ = ("_values", "grid", "_spec")

    def __init__(self, values, grid: GridSpec):
        v = np.array(values, dtype=float)
        if v.size != grid.n**grid.N:
            raise ValueError(f"expected {grid.n ** grid.N} values, got {v.size}")
        v = v.reshape(grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        self._values = v
        self.grid = grid
        self._spec = None

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        """Sample ``fn(*coords)`` (broadcasting coordinate arrays)."""
        vals = np.broadcast_to(fn(*grid.coords()), grid.shape)
        return cls(vals, grid)

    @classmethod
    def radial(cls, grid: GridSpec, fn) -> "Field":
        """Sample ``fn(|x|)``."""
        return cls(fn(grid.radius()), grid)

    @property
    def values(self) -> np.ndarray:
        return self._values

    def spectrum(self) -> np.ndarray:
        """Real-input forward transform of the values (cached)."""
        if self._spec is None:
            spec = sfft.rfftn(self._values)
            spec.setflags(write=False)
            self._spec = spec
        return self._spec

    def integral(self) -> float:
        return float(self._values.sum() * self.grid.dV)

    def mass(self) -> float:
        """``||u||_2^2`` as a Riemann sum."""
        return float(np.vdot(self._values, self._values) * self.grid.dV)

    def lp_norm(self, p: float) -> float:
        return float((np.abs(self._values) ** p).sum() * self.grid.dV) ** (1.0 / p)

    def dot(self, other: "Field") -> float:
        return float(np.vdot(self._values, other.values) * self.grid.dV)

    def like(self, values) -> "Field":
        return Field(values, self.grid)

    def __repr__(self):
        return f"Field(grid={self.grid}, max={np.abs(self._values).max():.3g})"


# --------------------------------------------------------------------------
# nonlinearity catalog


_KINDS = ("power", "combined", "saturable", "sqrt_type", "log_power")


@dataclass(frozen=True)
class Nonlinearity:
    """Catalog entry ``(f, F)`` with ``F' = f`` and ``F(0) = 0``.

    kinds:
      power(r)            f = |t|^(r-2) t,              F = |t|^r / r
      combined(r, q, sg)  F = |t|^r / r + sg |t|^q / q  (sg = +1 or -1)
      saturable           f = t^3/(1+t^2),              F = (t^2 - log(1+t^2))/2
      sqrt_type           f = (1 - 1/sqrt(1+t^2)) t,    F = (t^2 - 2 sqrt(1+t^2) + 2)/2
      log_power(r)        f = |t|^(r-2) t log(t^2),     F = |t|^r (log(t^2)/r - 2/r^2)
    """

    kind: str
    r: float | None = None
    q: float | None = None
    sign: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError("nonlinearity", f"unknown kind {self.kind!r}")
        if self.kind in ("power", "combined", "log_power") and (self.r is None or self.r <= 1):
            raise ConfigError("nonlinearity", f"{self.kind} needs an exponent r > 1")
        if self.kind == "combined":
            if self.q is None or self.q <= 1:
                raise ConfigError("nonlinearity", "combined needs a second exponent q > 1")
            if self.sign not in (1, -1):
                raise ConfigError("nonlinearity", "combined sign must be +1 or -1")

    @property
    def homogeneous(self) -> bool:
        return self.kind == "power"

    def growth_at_infinity(self) -> float:
        """Exponent p with F(t) ~ |t|^p as t -> inf (log factors ignored)."""
        if self.kind == "power" or self.kind == "log_power":
            return self.r
        if self.kind == "combined":
            # leading term; a negative leading term still dominates the growth
            return max(self.r, self.q)
        return 2.0

    def growth_at_zero(self) -> float:
        """Exponent p with F(t) ~ |t|^p as t -> 0."""
        if self.kind in ("power", "log_power"):
            return self.r
        if self.kind == "combined":
            return min(self.r, self.q)
        return 4.0

    def f(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        k = self.kind
        if k == "power":
            return _signed_pow(t, a, self.r)
        if k == "combined":
            return _signed_pow(t, a, self.r) + self.sign * _signed_pow(t, a, self.q)
        if k == "saturable":
            return t**3 / (1.0 + t * t)
        if k == "sqrt_type":
            return (1.0 - 1.0 / np.sqrt(1.0 + t * t)) * t
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _signed_pow(t, a, self.r) * np.log(t * t)
        return np.where(a > 0, out, 0.0)

    def F(self, t):
        t = np.asarray(t, dtype=float)
        a = np.abs(t)
        k = self.kind
        if k == "power":
            return a**self.r / self.r
        if k == "combined":
            return a**self.r / self.r + self.sign * a**self.q / self.q
        if k == "saturable":
            return 0.5 * (t * t - np.log1p(t * t))
        if k == "sqrt_type":
            return 0.5 * t * t - np.sqrt(1.0 + t * t) + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a**self.r * (np.log(t * t) / self.r - 2.0 / self.r**2)
        return np.where(a > 0, out, 0.0)

    def label(self) -> str:
        if self.kind in ("power", "log_power"):
            return f"{self.kind}({self.r:g})"
        if self.kind == "combined":
            return f"combined({self.r:g},{self.q:g},{'+' if self.sign > 0 else '-'})"
        return self.kind


def _signed_pow(t, a, r):
    # |t|^(r-2) t without dividing by zero
    return np.sign(t) * a ** (r - 1.0)


_NL_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def parse_nonlinearity(text) -> Nonlinearity:
    """Parse ``"power(2)"``, ``"combined(2.5, 2.2, -)"``, ``"saturable"`` ..."""
    if isinstance(text, Nonlinearity):
        return text
    if isinstance(text, dict):
        return Nonlinearity(**text)
    m = _NL_RE.match(str(text))
    if not m:
        raise ConfigError("nonlinearity", f"cannot parse {text!r}")
    kind, args = m.group(1), m.group(2)
    parts = [a.strip() for a in args.split(",")] if args else []
    try:
        if kind in ("power", "log_power"):
            if len(parts) != 1:
                raise ValueError
            return Nonlinearity(kind, r=float(parts[0]))
        if kind == "combined":
            if len(parts) not in (2, 3):
                raise ValueError
            sign = 1
            if len(parts) == 3:
                sign = {"+": 1, "-": -1, "+1": 1, "-1": -1, "1": 1}.get(parts[2])
                if sign is None:
                    raise ValueError
            return Nonlinearity(kind, r=float(parts[0]), q=float(parts[1]), sign=sign)
        if kind in ("saturable", "sqrt_type"):
            if parts:
                raise ValueError
            return Nonlinearity(kind)
    except ValueError:
        raise ConfigError("nonlinearity", f"bad arguments in {text!r}") from None
    raise ConfigError("nonlinearity", f"unknown kind {kind!r}")


def nonlinearity_eval(nl: Nonlinearity, t: float) -> tuple[float, float]:
    """Return ``(f(t), F(t))``."""
    return float(nl.f(t)), float(nl.F(t))


# --------------------------------------------------------------------------
# problem description


_INIT_RE = re.compile(r"^\s*(gaussian|hbeta|file)\s*\((.*)\)\s*$")


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls shared by all solvers."""

    max_iters: int = 5000
    grad_tol: float = 1e-8
    poho_tol: float = 1e-6
    step: float = 0.5
    petviashvili_gamma_tol: float = 1e-10
    seed: int = 0
    init: str = "gaussian(2.0)"
    k_proj: int = 10
    symmetrize_every: int = 25

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters", "must be >= 1")
        for key in ("grad_tol", "poho_tol", "step", "petviashvili_gamma_tol"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.k_proj < 1 or self.symmetrize_every < 1:
            raise ConfigError("k_proj" if self.k_proj < 1 else "symmetrize_every", "must be >= 1")
        self.parsed_init()

    def parsed_init(self) -> tuple[str, str]:
        m = _INIT_RE.match(self.init)
        if not m:
            raise ConfigError("init", f"expected gaussian(w), hbeta(b) or file(path), got {self.init!r}")
        kind, arg = m.group(1), m.group(2).strip()
        if kind != "file":
            try:
                if float(arg) <= 0:
                    raise ValueError
            except ValueError:
                raise ConfigError("init", f"{kind} needs a positive number") from None
        return kind, arg


@dataclass(frozen=True)
class ProblemSpec:
    """Everything a solve needs.

    ``alpha`` is ``None`` in local mode, ``mu`` is ``None`` for mass-constrained
    runs and ``mass_target`` is ``None`` for fixed-frequency runs.
    """

    N: int
    s: float
    alpha: float | None
    mode: str
    mu: float | None
    mass_target: float | None
    nonlinearity: Nonlinearity
    grid: GridSpec
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ConfigError("s", f"fractional order must lie in (0, 1], got {self.s}")
        if self.mode not in ("choquard", "local"):
            raise ConfigError("mode", f"must be choquard or local, got {self.mode!r}")
        if self.mode == "choquard":
            if self.alpha is None or not 0.0 < self.alpha < self.N:
                raise ConfigError("alpha", f"must lie in (0, N={self.N}) in choquard mode, got {self.alpha}")
        if self.grid.N != self.N:
            raise ConfigError("N", "grid dimension disagrees with N")
        if (self.mu is None) == (self.mass_target is None):
            raise ConfigError("mu", "exactly one of mu and mass_target must be set")
        if self.mu is not None and not self.mu > 0:
            raise ConfigError("mu", f"frequency must be positive, got {self.mu}")
        if self.mass_target is not None and not self.mass_target > 0:
            raise ConfigError("mass_target", f"mass must be positive, got {self.mass_target}")

    def with_mu(self, mu: float) -> "ProblemSpec":
        return replace(self, mu=float(mu), mass_target=None)

    def with_mass(self, m: float) -> "ProblemSpec":
        return replace(self, mu=None, mass_target=float(m))

    def with_grid(self, grid: GridSpec) -> "ProblemSpec":
        return replace(self, grid=grid)

    def with_solver(self, **kw) -> "ProblemSpec":
        return replace(self, solver=replace(self.solver, **kw))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "s": self.s,
            "alpha": self.alpha,
            "mode": self.mode,
            "mu": self.mu,
            "mass_target": self.mass_target,
            "nonlinearity": self.nonlinearity.label(),
            "grid": {"n": self.grid.n, "L": self.grid.L},
            "solver": dict(self.solver.__dict__),
        }


_DEFAULT_GRID = {1: (256, 40.0), 2: (256, 80.0), 3: (64, 40.0)}

_PROBLEM_KEYS = {"N", "s", "alpha", "mode", "mu", "mass_target", "nonlinearity"}
_GRID_KEYS = {"n", "L"}
_SOLVER_TYPES = {
    "max_iters": int,
    "grad_tol": float,
    "poho_tol": float,
    "step": float,
    "petviashvili_gamma_tol": float,
    "seed": int,
    "init": str,
    "k_proj": int,
    "symmetrize_every": int,
}


def _num(sec, key, cast, default=None, none_words=()):
    if key not in sec:
        if default is ConfigError:
            raise ConfigError(key, "required key missing")
        return default
    v = sec[key]
    if isinstance(v, str) and v.strip().lower() in none_words:
        return None
    if isinstance(v, bool):
        raise ConfigError(key, f"expected a number, got {v!r}")
    try:
        out = cast(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {v!r}") from None
    if cast is int and out != v:
        raise ConfigError(key, f"expected an integer, got {v!r}")
    if cast is float and not math.isfinite(out):
        raise ConfigError(key, f"must be finite, got {v!r}")
    return out


def parse_config(data: dict) -> ProblemSpec:
    """Validate a parsed ``{problem, grid, solver}`` mapping into a ProblemSpec."""
    for sec in data:
        if sec not in ("problem", "grid", "solver"):
            raise ConfigError(sec, "unknown section")
    prob = data.get("problem", {})
    grid = data.get("grid", {})
    solv = data.get("solver", {})
    for sec, keys in ((prob, _PROBLEM_KEYS), (grid, _GRID_KEYS), (solv, set(_SOLVER_TYPES))):
        for k in sec:
            if k not in keys:
                raise ConfigError(k, "unknown key")

    N = _num(prob, "N", int, ConfigError)
    s = _num(prob, "s", float, ConfigError)
    alpha = _num(prob, "alpha", float, None, ("none",))
    mode = str(prob.get("mode", "choquard" if alpha is not None else "local"))
    if mode == "local":
        alpha = None
    mu = _num(prob, "mu", float, None, ("free", "none"))
    mass = _num(prob, "mass_target", float, None, ("none",))
    if "nonlinearity" not in prob:
        raise ConfigError("nonlinearity", "required key missing")
    nl = parse_nonlinearity(prob["nonlinearity"])

    if N not in _DEFAULT_GRID:
        raise ConfigError("N", f"dimension must be 1, 2 or 3, got {N}")
    n0, L0 = _DEFAULT_GRID[N]
    gs = GridSpec(n=_num(grid, "n", int, n0), L=_num(grid, "L", float, L0), N=N)

    kw = {}
    for k, cast in _SOLVER_TYPES.items():
        if k in solv:
            kw[k] = str(solv[k]) if cast is str else _num(solv, k, cast)
    opts = SolverOptions(**kw)
    return ProblemSpec(N=N, s=s, alpha=alpha, mode=mode, mu=mu, mass_target=mass,
                       nonlinearity=nl, grid=gs, solver=opts)


def load_config(path) -> ProblemSpec:
    """Read a TOML file with sections ``[problem]``, ``[grid]``, ``[solver]``."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("path", f"cannot read {p}: {exc}") from None
    try:
        data = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError("syntax", f"{p}: {exc}") from None
    return parse_config(data)


# --------------------------------------------------------------------------
# radial reduction


def _periodic_flip(a: np.ndarray, axis: int) -> np.ndarray:
    # i -> (n - i) mod n, i.e. x -> -x on the periodic grid
    return np.roll(np.flip(a, axis), 1, axis)


def symmetrize_radial(u: Field) -> Field:
    """Average ``u`` over the symmetry group of the grid (axis flips and permutations).

    The group orbit average is an exact projection: it is idempotent, commutes
    with every radial Fourier multiplier, leaves radial samples untouched and
    preserves shell averages.  Functions odd in a coordinate go to zero away
    from the ``x = -L/2`` face, which the periodic reflection maps to itself.
    """
    v = np.array(u.values)
    N = u.grid.N
    for ax in range(N):
        v = 0.5 * (v + _periodic_flip(v, ax))
    if N == 2:
        v = 0.5 * (v + v.T)
    elif N == 3:
        perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        v = sum(np.transpose(v, p) for p in perms) / 6.0
    return u.like(v)


@dataclass(frozen=True)
class Profile:
    """Shell-averaged radial profile."""

    radii: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if len(self.radii) < 8:
            raise ValueError("profile needs at least 8 shells")
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")

    def to_csv(self) -> str:
        lines = ["r,u"]
        lines += [f"{r:.17g},{v:.17g}" for r, v in zip(self.radii, self.values)]
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=16)
def _shells(grid: GridSpec):
    r = grid.radius().ravel()
    k = np.floor(r / grid.dx + 1e-9).astype(np.int64)
    keep = (r < grid.L / 2) & (r > 0)
    k = np.where(keep, k, -1)
    nb = grid.n // 2 + 1
    kk = np.where(keep, k, nb)
    counts = np.bincount(kk, minlength=nb + 1)[:nb]
    rsum = np.bincount(kk, weights=r, minlength=nb + 1)[:nb]
    used = counts > 0
    radii = rsum[used] / counts[used]
    # map every grid point to its compact shell index (or -1)
    compact = -np.ones(nb + 1, dtype=np.int64)
    compact[np.flatnonzero(used)] = np.arange(used.sum())
    idx = compact[kk]
    for a in (radii, counts[used], idx):
        a.setflags(write=False)
    return radii, counts[used], idx


def radial_profile(u: Field) -> Profile:
    """Shell average of ``u`` over shells ``[k dx, (k+1) dx)`` with ``0 < r < L/2``.

    Each shell is reported at the mean radius of its grid points (the origin
    point is excluded so that all radii are positive).
    """
    if u.grid.n < 16:
        raise ValueError("degenerate grid: need n >= 16")
    radii, counts, idx = _shells(u.grid)
    keep = idx >= 0
    sums = np.bincount(idx[keep], weights=u.values.ravel()[keep], minlength=len(radii))
    return Profile(radii=np.array(radii), values=sums / counts, counts=np.array(counts))
