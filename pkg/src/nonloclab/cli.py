"""``nonloclab`` command line: subcommand dispatch, report emission, sweeps.

Every run writes ``manifest.json`` into ``--out`` before exiting, on
failure paths too.  Exit codes: 0 success, 2 validation error, 3 solver
nonconvergence, 4 verification failure, 64 unknown subcommand.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    annuli_cross,
    annuli_interaction,
    annuli_thickness,
    decay_fit,
    duality_scan,
    expected_decay,
    field_decay,
    operator_checks,
    scaling_fit,
    sharp_constant,
    tail_amplitude,
    thread_budget,
)
from .core import ConfigError, Nonlinearity, ProblemSpec, load_config, radial_profile
from .functionals import NoPohozaevProjection
from .nonlocal_ops import SpectralResidueError
from .solvers import (
    SolverError,
    bowl_potential,
    fiber_descent_solve,
    normalized_flow_solve,
    petviashvili_solve,
    semiclassical_solve,
)
from .specfun import critical_exponents, frac_lap_constant, hbeta_constant, riesz_constant

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONV, EXIT_VERIFY, EXIT_USAGE = 0, 2, 3, 4, 64

SUBCOMMANDS = ("constants", "verify-operators", "solve", "solve-normalized", "semiclassical", "decay", "annuli",
               "duality")


class VerificationFailure(RuntimeError):
    def __init__(self, failed: list):
        super().__init__("failed checks: " + ", ".join(failed))
        self.failed = failed


# --------------------------------------------------------------------------
# deterministic JSON


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def parse_range(text: str, log: bool) -> list:
    """``lo:hi:count`` to a list; log-spaced when ``log`` (frequencies, h), else linear."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError("range", f"expected lo:hi:count, got {text!r}")
    try:
        lo, hi, k = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError("range", f"bad range {text!r}") from None
    if k < 1 or (k == 1 and lo != hi):
        raise ConfigError("range", f"count must be >= 2 for an interval ({text!r})")
    if log:
        if lo <= 0 or hi <= 0:
            raise ConfigError("range", f"log-spaced range needs positive ends ({text!r})")
        return [float(v) for v in np.geomspace(lo, hi, k)]
    return [float(v) for v in np.linspace(lo, hi, k)]


def _floats(text: str, key: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(key, f"expected comma-separated numbers, got {text!r}") from None


def _grid(text: str, log: bool, key: str) -> list:
    """``lo:hi:count`` range or an explicit comma-separated list."""
    if ":" in text:
        return parse_range(text, log)
    vals = _floats(text, key)
    if not vals:
        raise ConfigError(key, "empty list")
    return vals


def _spec_hash(spec: ProblemSpec) -> str:
    return hashlib.sha256(dumps(spec.to_dict()).encode()).hexdigest()


class _Run:
    """Collects artifacts in the output directory."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list[str] = []

    def write(self, name: str, text: str):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8")
        if name not in self.files:
            self.files.append(name)

    def json(self, name: str, obj):
        self.write(name, dumps(obj) + "\n")


# --------------------------------------------------------------------------
# subcommands


def _choose_solver(spec: ProblemSpec, name: str):
    if name == "auto":
        nl = spec.nonlinearity
        name = "petviashvili" if spec.mode == "choquard" and nl.kind == "power" else "fiber"
    return {"petviashvili": petviashvili_solve, "fiber": fiber_descent_solve}[name], name


def _solve_fixed(spec: ProblemSpec, args):
    if spec.mu is None:
        raise ConfigError("mu", "fixed-frequency solve needs a numeric mu")
    fn, _ = _choose_solver(spec, args.solver)
    return fn(spec)


def _emit_solve(run: _Run, rep):
    run.json("report.json", rep.to_dict())
    run.write("profile.csv", radial_profile(rep.field).to_csv())


def cmd_constants(spec: ProblemSpec, args, run: _Run) -> int:
    N, s, a = spec.N, spec.s, spec.alpha
    out = {"N": N, "s": s, "alpha": a}
    if s < 1:
        out["frac_lap_constant"] = frac_lap_constant(N, s)
    out["hbeta_constant"] = {repr(b): hbeta_constant(b, N, s) for b in (N - 2 * s, float(N), N + 2 * s) if b > 0}
    if a is not None:
        out["riesz_constant"] = riesz_constant(N, a)
        ex = critical_exponents(N, s, a)
        out["exponents"] = {
            "lower": ex.lower,
            "upper": ex.upper,
            "l2crit": ex.l2crit,
            "sobolev": ex.sobolev,
            "sublinear_threshold": ex.sublinear_threshold,
        }
        nl = spec.nonlinearity
        if nl.kind == "power" and ex.lower <= nl.r < ex.sobolev:
            out["expected_decay"] = expected_decay(N, s, a, nl.r)
    run.json("report.json", out)
    return EXIT_OK


def cmd_verify(spec: ProblemSpec, args, run: _Run) -> int:
    checks = operator_checks(spec, seed=args.seed or 0)
    run.json("report.json", {"checks": [c.to_dict() for c in checks], "passed": all(c.passed for c in checks)})
    failed = [c.name for c in checks if not c.passed]
    if failed:
        raise VerificationFailure(failed)
    return EXIT_OK


def cmd_solve(spec: ProblemSpec, args, run: _Run) -> int:
    try:
        rep = _solve_fixed(spec, args)
    except SolverError as exc:
        if exc.report is not None:
            _emit_solve(run, exc.report)
        raise
    _emit_solve(run, rep)
    return EXIT_OK


def cmd_solve_normalized(spec: ProblemSpec, args, run: _Run) -> int:
    m = args.mass if args.mass is not None else spec.mass_target
    if m is None:
        raise ConfigError("mass_target", "normalized solve needs a mass")
    try:
        rep = normalized_flow_solve(spec.with_mass(m), adapt_box=args.adapt_box)
    except SolverError as exc:
        if exc.report is not None:
            _emit_solve(run, exc.report)
        raise
    _emit_solve(run, rep)
    return EXIT_OK


def cmd_semiclassical(spec: ProblemSpec, args, run: _Run) -> int:
    if spec.mu is None:
        spec = spec.with_mu(1.0)
    center = _floats(args.center, "center") if args.center else [0.0] * spec.N
    if len(center) != spec.N:
        raise ConfigError("center", f"need {spec.N} coordinates")
    V = bowl_potential(center)
    rows = []
    for eps in _floats(args.eps, "eps"):
        try:
            rep = semiclassical_solve(spec, V, eps, x_min=center)
        except SolverError as exc:
            if exc.report is not None:
                run.json("report.json", {"runs": rows + [exc.report.to_dict()]})
            raise
        d = rep.to_dict()
        fit = _centered_fit(rep)
        d["decay_fit"] = fit.to_dict()
        rows.append(d)
        last = rep
    run.json("report.json", {"runs": rows})
    run.write("profile.csv", radial_profile(_centered(last)).to_csv())
    return EXIT_OK


def _centered(rep):
    g = rep.field.grid
    iy = np.unravel_index(int(np.argmax(rep.field.values)), g.shape)
    shift = tuple(g.n // 2 - i for i in iy)
    return rep.field.like(np.roll(rep.field.values, shift, axis=tuple(range(g.N))))


def _centered_fit(rep, window=None):
    u = _centered(rep)
    return decay_fit(radial_profile(u), window, L=u.grid.L)


def cmd_decay(spec: ProblemSpec, args, run: _Run) -> int:
    window = tuple(_floats(args.window, "window")) if args.window else None
    rs = _grid(args.r, False, "r") if args.r else [None]
    entries = []
    ok = True
    for r in rs:
        sp = spec
        if r is not None:
            if spec.nonlinearity.kind != "power":
                raise ConfigError("r", "an r sweep needs a power nonlinearity")
            sp = replace(spec, nonlinearity=Nonlinearity("power", r=r))
        rep = _solve_fixed(sp, args)
        fit = field_decay(rep, window)
        rr = sp.nonlinearity.r if sp.nonlinearity.kind == "power" else None
        if sp.mode == "choquard" and rr is not None:
            expect = expected_decay(sp.N, sp.s, sp.alpha, rr)
        elif sp.mode == "local":
            expect = expected_decay(sp.N, sp.s, None, 0.0)
        else:
            expect = None
        e = {"r": rr, "fit": fit.to_dict(), "expected": expect, "mu": rep.mu, "converged": rep.converged,
             "pohozaev_rel": rep.pohozaev_rel}
        if expect is not None:
            e["relative_error"] = abs(fit.exponent - expect) / expect
            e["passed"] = e["relative_error"] <= args.tol
            ok &= e["passed"]
        if sp.mode == "choquard" and rr is not None:
            ex = critical_exponents(sp.N, sp.s, sp.alpha)
            if rr < ex.sublinear_threshold:
                c = sharp_constant(rep, rr)
                amp = tail_amplitude(radial_profile(rep.field), expect, fit.window, L=rep.field.grid.L)
                e["sharp_constant"] = c
                e["tail_amplitude"] = amp
                e["sharp_constant_error"] = abs(amp - c) / c
        entries.append(e)
    run.json("decay.json", {"entries": entries})
    run.json("summary.json", {"passed": ok, "tol": args.tol})
    if not ok:
        raise VerificationFailure([f"decay(r={e['r']})" for e in entries if not e.get("passed", True)])
    return EXIT_OK


def _expected_annuli_exponent(alpha: float):
    if alpha > 1:
        return 2.0
    if alpha < 1:
        return 1.0 + alpha
    return None


def cmd_annuli(spec: ProblemSpec, args, run: _Run) -> int:
    if spec.alpha is None:
        raise ConfigError("alpha", "annuli need alpha")
    N, a = spec.N, spec.alpha
    seed = args.seed or 0
    hs = _grid(args.h, True, "h")
    threads = thread_budget(args.threads)
    from concurrent.futures import ThreadPoolExecutor

    def one(h):
        return annuli_interaction(args.R0, h, N, a, samples=args.samples, seed=seed)

    with ThreadPoolExecutor(max_workers=threads) as ex:
        ests = list(ex.map(one, hs))
    lines = ["R,h,estimate,stderr"]
    lines += [f"{_fmt(args.R0)},{_fmt(h)},{_fmt(e)},{_fmt(se)}" for h, (e, se) in zip(hs, ests)]
    summary = {"N": N, "alpha": a, "R0": args.R0, "samples": args.samples}
    failed = []
    vals = [e for e, _ in ests]
    expect = _expected_annuli_exponent(a)
    if expect is None:
        ratio = [v / h**2 for v, h in sorted(zip(vals, hs), key=lambda t: -t[1])]
        mono = all(b > c for c, b in zip(ratio, ratio[1:]))
        summary["log_case"] = {"value_over_h2": ratio, "monotone_growth": mono}
        if not mono:
            failed.append("annuli_log_growth")
    else:
        k, se = scaling_fit(hs, vals)
        summary["scaling"] = {"exponent": k, "stderr": se, "expected": expect, "passed": abs(k - expect) <= 0.1}
        if abs(k - expect) > 0.1:
            failed.append("annuli_scaling")
    Rs = _floats(args.R, "R")
    band, cross = [], []
    for R in Rs:
        h = annuli_thickness(R, N, a)
        e, se = annuli_interaction(R, h, N, a, samples=args.samples, seed=seed)
        band.append(e)
        lines.append(f"{_fmt(R)},{_fmt(h)},{_fmt(e)},{_fmt(se)}")
        c, cse = annuli_cross(R, h, R * R, annuli_thickness(R * R, N, a), N, a, samples=args.samples, seed=seed)
        cross.append({"R": R, "R2": R * R, "estimate": c, "stderr": cse})
    if band:
        summary["band"] = {"R": Rs, "values": band, "min": min(band), "max": max(band),
                           "ratio": max(band) / min(band)}
        dec = all(b["estimate"] < a_["estimate"] for a_, b in zip(cross, cross[1:]))
        summary["cross"] = {"values": cross, "decreasing": dec}
        if not dec:
            failed.append("annuli_cross_decreasing")
    summary["passed"] = not failed
    run.write("annuli.csv", "\n".join(lines) + "\n")
    run.json("summary.json", summary)
    if failed:
        raise VerificationFailure(failed)
    return EXIT_OK


def cmd_duality(spec: ProblemSpec, args, run: _Run) -> int:
    ms = _grid(args.m, False, "m")
    mus = _grid(args.mu, True, "mu") if args.mu else None
    if mus is None and not args.bracket:
        raise ConfigError("mu", "give --mu lo:hi:count or --bracket K")
    rep = duality_scan(spec, mus, ms, threads=thread_budget(args.threads), bracket=args.bracket or 0)
    lines = ["kind,x,value"]
    lines += [f"p,{_fmt(mu)},{_fmt(p)}" for mu, p in zip(rep.mu_grid, rep.p_curve)]
    lines += [f"kappa,{_fmt(m)},{_fmt(k)}" for m, k in zip(rep.m_grid, rep.kappa_curve)]
    run.write("duality.csv", "\n".join(lines) + "\n")
    ps = [p for p in rep.p_curve if np.isfinite(p)]
    increasing = all(b > a for a, b in zip(ps, ps[1:]))
    res_ok = all(np.isfinite(r) and r <= args.tol for r in rep.duality_residuals)
    kneg = all(np.isfinite(k) and k < 0 for k in rep.kappa_curve)
    m0 = rep.m0_estimate
    m0_ok = kneg and m0 is not None and all(m > m0 for m in rep.m_grid)
    summary = {**rep.to_dict(), "p_increasing": increasing, "residuals_ok": res_ok, "kappa_negative": kneg,
               "m0_consistent": m0_ok, "tol": args.tol}
    summary["passed"] = increasing and res_ok and m0_ok and rep.complete
    run.json("summary.json", summary)
    if rep.failures:
        raise SolverError(f"{len(rep.failures)} constituent solves failed", None)
    if not summary["passed"]:
        raise VerificationFailure([k for k in ("p_increasing", "residuals_ok", "m0_consistent") if not summary[k]])
    return EXIT_OK


_HANDLERS = {
    "constants": cmd_constants,
    "verify-operators": cmd_verify,
    "solve": cmd_solve,
    "solve-normalized": cmd_solve_normalized,
    "semiclassical": cmd_semiclassical,
    "decay": cmd_decay,
    "annuli": cmd_annuli,
    "duality": cmd_duality,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonloclab", description="Ground states of fractional Choquard and NLS equations.")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML file with [problem], [grid], [solver]")
        sp.add_argument("--out", default="out", help="output directory (default ./out)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None, help="thread budget (default NONLOC_THREADS or cores)")
        if name in ("solve", "decay"):
            sp.add_argument("--solver", choices=("auto", "petviashvili", "fiber"), default="auto")
        if name == "solve-normalized":
            sp.add_argument("--mass", type=float, default=None)
            sp.add_argument("--adapt-box", action="store_true")
        if name == "semiclassical":
            sp.add_argument("--eps", default="0.5,0.25,0.125", help="comma-separated eps ladder")
            sp.add_argument("--center", default=None, help="minimum point of V, comma-separated")
        if name == "decay":
            sp.add_argument("--window", default=None, help="r_lo,r_hi")
            sp.add_argument("--r", default=None, help="power sweep lo:hi:count (linear) or a list")
            sp.add_argument("--tol", type=float, default=0.10)
        if name == "annuli":
            sp.add_argument("--h", default="0.005:0.04:4", help="thickness ladder lo:hi:count (log) or a list")
            sp.add_argument("--R0", type=float, default=1.0, help="radius for the h ladder")
            sp.add_argument("--R", default="2,4,8", help="radii for the band and cross checks")
            sp.add_argument("--samples", type=int, default=10**6)
        if name == "duality":
            sp.add_argument("--mu", default=None, help="frequency grid lo:hi:count (log) or a list")
            sp.add_argument("--m", required=True, help="mass grid lo:hi:count (linear) or a list")
            sp.add_argument("--bracket", type=int, default=0, help="per-mass K-point grid around its frequency")
            sp.add_argument("--tol", type=float, default=0.02)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or argv[0] not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        bad = argv[0] if argv else "(none)"
        print(f"nonloclab: unknown subcommand {bad!r}; choose from {', '.join(SUBCOMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    out = Path(args.out)
    run = _Run(out)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    manifest = {
        "subcommand": args.command,
        "argv": argv,
        "tool_version": __version__,
        "start": started,
        "spec_hash": None,
        "ranges": {k: getattr(args, k) for k in ("mu", "m", "h", "r", "eps") if getattr(args, k, None)},
        "threads": thread_budget(args.threads),
    }
    code = EXIT_OK
    try:
        spec = load_config(args.config)
        if args.seed is not None:
            spec = spec.with_solver(seed=args.seed)
        manifest["spec_hash"] = _spec_hash(spec)
        code = _HANDLERS[args.command](spec, args, run)
    except ConfigError as exc:
        code = EXIT_VALIDATION
        manifest["error"] = {"kind": "validation", "key": exc.key, "message": str(exc)}
    except VerificationFailure as exc:
        code = EXIT_VERIFY
        manifest["error"] = {"kind": "verification", "failed": exc.failed, "message": str(exc)}
    except SolverError as exc:
        code = EXIT_NONCONV
        manifest["error"] = {"kind": "nonconvergence", "message": str(exc)}
    except NoPohozaevProjection as exc:
        code = EXIT_NONCONV
        manifest["error"] = {"kind": "no_projection", "message": str(exc)}
        rep = getattr(exc, "report", None)
        if rep is not None:
            run.json("report.json", rep.to_dict())
    except SpectralResidueError as exc:
        code = EXIT_VERIFY
        manifest["error"] = {"kind": "verification", "failed": ["kernel_cache_hermitian"], "message": str(exc)}
    except ValueError as exc:
        code = EXIT_VALIDATION
        manifest["error"] = {"kind": "validation", "message": str(exc)}
    except Exception as exc:
        code = 1
        manifest["error"] = {"kind": "internal", "message": f"{type(exc).__name__}: {exc}"}
        raise
    finally:
        manifest["end"] = datetime.now(timezone.utc).isoformat()
        manifest["wallclock"] = time.perf_counter() - t0
        manifest["exit_code"] = code
        manifest["artifacts"] = list(run.files)
        run.json("manifest.json", manifest)
    if "error" in manifest:
        print(f"nonloclab {args.command}: {manifest['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
