"""``seglab`` command-line front end.

Exit codes: 0 success, 1 usage or configuration error (nothing written),
2 a solve did not converge, 3 a verification criterion failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, asdict
from importlib import metadata

import numpy as np

from . import exact as ex
from .frequency import frequency_profile, geometric_ladder, pohozaev_residual, profile_summary
from .geometry import GridError, build_grid, constant_trace, dump_field, harmonic_extension, load_field, sample_boundary
from .solver import ConfigError, Mode, SolverConfig, solve_hard_constraint, solve_penalized, sweep_beta

log = logging.getLogger("seglab")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VERIFY = 0, 1, 2, 3
COMMANDS = ("exact", "solve", "sweep", "frequency", "nodal", "verify")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")
DEFAULT_N = 128


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


@dataclass(frozen=True)
class RunManifest:
    command: str
    configPath: str | None
    outputDir: str
    timestamp: str
    toolVersion: str
    threads: int | None = None

    def write(self, outdir: str) -> str:
        path = os.path.join(outdir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


# --- configuration ----------------------------------------------------------


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1:1: top level must be a JSON object")
    return data


def _load_trace_csv(path: str):
    """Periodic piecewise-linear trace from ``theta,psi1,psi2,psi3`` rows."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["theta", "psi1", "psi2", "psi3"]:
        raise ConfigError(f"{path}:1: header must be theta,psi1,psi2,psi3")
    data = []
    for k, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise ConfigError(f"{path}:{k}: {exc}") from exc
        if len(vals) != 4:
            raise ConfigError(f"{path}:{k}: expected 4 columns")
        if any(v < 0 for v in vals[1:]):
            raise ConfigError(f"{path}:{k}: negative trace value")
        if vals[1] * vals[2] * vals[3] != 0.0:
            raise ConfigError(f"{path}:{k}: psi1*psi2*psi3 must vanish")
        data.append(vals)
    if len(data) < 2:
        raise ConfigError(f"{path}: need at least two samples")
    arr = np.array(data)
    theta = np.mod(arr[:, 0], 2 * math.pi)
    order = np.argsort(theta)
    theta, comps = theta[order], arr[order, 1:].T

    def trace(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([np.interp(t, theta, c, period=2 * math.pi) for c in comps])

    return trace


def _trace_from_spec(spec: str, constant_value=None):
    if spec == "tr_mer":
        return ex.psi
    if spec == "constant" or spec.startswith("constant:"):
        value = constant_value if spec == "constant" else spec.split(":", 1)[1].split(",")
        value = [1.0, 1.0, 0.0] if value is None else value
        try:
            c = [float(v) for v in value]
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad constant trace {value!r}") from exc
        if len(c) != 3 or min(c) < 0 or c[0] * c[1] * c[2] != 0:
            raise ConfigError("constant trace needs three nonnegative values with a zero product")
        return constant_trace(c)
    if spec.startswith("csv:"):
        return _load_trace_csv(spec[4:])
    raise ConfigError(f"unknown trace {spec!r}; use tr_mer, constant[:a,b,c] or csv:PATH")


@dataclass
class RunSetup:
    n: int
    trace: str
    solver: SolverConfig
    trace_fn: object


def _solver_setup(args) -> RunSetup:
    """Merge the config file with command-line overrides; raises ConfigError."""
    raw = _read_config(args.config)
    raw = dict(raw)
    n = raw.pop("n", DEFAULT_N)
    trace = raw.pop("trace", "tr_mer")
    constant_value = raw.pop("constantValue", None)
    if args.n is not None:
        n = args.n
    if args.trace is not None:
        trace = args.trace
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.beta:
        raw["betaLadder"] = list(args.beta)
    if not isinstance(n, int) or n < 16:
        raise ConfigError(f"n must be an integer >= 16, got {n!r}")
    cfg = SolverConfig.from_dict(raw)
    return RunSetup(n, trace, cfg, _trace_from_spec(trace, constant_value))


# --- output directory -------------------------------------------------------


def _prepare_outdir(args, command: str) -> str:
    """Create the output directory atomically (if new) and write the manifest into it."""
    out = os.path.abspath(args.out)
    if not os.path.isdir(out):
        parent = os.path.dirname(out)
        os.makedirs(parent, exist_ok=True)
        tmp = tempfile.mkdtemp(prefix=".seglab-", dir=parent)
        try:
            os.rename(tmp, out)
        except OSError:
            os.rmdir(tmp)
            if not os.path.isdir(out):
                raise
    RunManifest(
        command=command,
        configPath=os.path.abspath(args.config) if getattr(args, "config", None) else None,
        outputDir=out,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        toolVersion=_version(),
        threads=_thread_cap(),
    ).write(out)
    return out


def _thread_cap() -> int | None:
    raw = os.environ.get("SEGLAB_THREADS")
    if raw is None:
        return None
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"SEGLAB_THREADS must be a positive integer, got {raw!r}") from None
    if k < 1:
        raise ConfigError(f"SEGLAB_THREADS must be a positive integer, got {raw!r}")
    return k


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- commands ---------------------------------------------------------------


def cmd_exact(args) -> int:
    n = args.n if args.n is not None else DEFAULT_N
    if n < 16:
        raise ConfigError("n must be >= 16")
    radii = np.asarray(args.radii, dtype=float) if args.radii else geometric_ladder(0.1, 0.9, 16)
    if np.any(radii <= 0) or np.any(radii > 1):
        raise ConfigError("radii must lie in (0, 1]")
    out = _prepare_outdir(args, "exact")
    grid = build_grid("disc", n)
    dump_field(ex.exact_field(grid), os.path.join(out, "exact_field.csv"))
    with open(os.path.join(out, "frequency.csv"), "w") as fh:
        fh.write("r,E,H,N\n")
        for r in radii:
            E, H, N = ex.exact_frequency_values(float(r))
            fh.write(f"{r:.17g},{E:.17g},{H:.17g},{N:.17g}\n")
    E, H, N = ex.exact_frequency_values(1.0)
    _write_json(os.path.join(out, "exact.json"), {"c_infty": ex.C_INFTY, "E": E, "H": H, "N": N, "n": n})
    return EXIT_OK


def _boundary(setup: RunSetup):
    grid = build_grid("disc", setup.n)
    try:
        bdata = sample_boundary(grid, setup.trace_fn)
    except GridError as exc:
        raise ConfigError(f"trace {setup.trace!r}: {exc}") from exc
    return grid, bdata


def cmd_solve(args) -> int:
    setup = _solver_setup(args)
    grid, bdata = _boundary(setup)
    out = _prepare_outdir(args, "solve")
    init = harmonic_extension(grid, bdata)
    if setup.solver.mode is Mode.HARD_CONSTRAINT:
        rep = solve_hard_constraint(grid, bdata, init, setup.solver)
    else:
        rep = solve_penalized(grid, bdata, setup.solver.beta_ladder[-1], init, setup.solver)
    with open(os.path.join(out, "report.json"), "w") as fh:
        fh.write(rep.to_json() + "\n")
    dump_field(rep.field, os.path.join(out, "field.csv"))
    log.info("solve: converged=%s sweeps=%d energy=%.8f", rep.converged, rep.sweeps, rep.energy.total)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    setup = _solver_setup(args)
    if setup.solver.mode is not Mode.PENALIZED:
        raise ConfigError("sweep needs mode PENALIZED")
    grid, bdata = _boundary(setup)
    out = _prepare_outdir(args, "sweep")
    reports = sweep_beta(grid, bdata, setup.solver)
    summary = []
    for k, rep in enumerate(reports):
        with open(os.path.join(out, f"report_{k:02d}.json"), "w") as fh:
            fh.write(rep.to_json() + "\n")
        dump_field(rep.field, os.path.join(out, f"field_{k:02d}.csv"))
        summary.append({
            "beta": rep.beta,
            "total": rep.energy.total,
            "penaltyResidual": rep.penalty_residual,
            "converged": rep.converged,
            "sweeps": rep.sweeps,
        })
    _write_json(os.path.join(out, "sweep.json"), {"n": setup.n, "trace": setup.trace, "ladder": summary})
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NONCONVERGED


def _load_input_field(path: str | None):
    if path is None:
        raise ConfigError("--field is required")
    try:
        return load_field(path)
    except (OSError, GridError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_frequency(args) -> int:
    f = _load_input_field(args.field)
    center = tuple(args.center)
    rmax = args.rmax
    if rmax is None:
        rmax = 0.9 * (1.0 - math.hypot(*center)) if f.grid.domain.kind == "disc" else None
    if rmax is None or not (0 < args.rmin < rmax):
        raise ConfigError("need 0 < rmin < rmax")
    try:
        prof = frequency_profile(f, center, args.rmin, rmax, K=args.K,
                                 include_penalty=args.include_penalty, beta=args.beta_value)
    except (GridError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = _prepare_outdir(args, "frequency")
    with open(os.path.join(out, "profile.csv"), "w") as fh:
        fh.write(prof.to_csv())
    poh = max(pohozaev_residual(f, center, float(r)) for r in prof.radii)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        fh.write(profile_summary(prof, args.slack, poh) + "\n")
    return EXIT_OK


def cmd_nodal(args) -> int:
    from .nodal import DEFAULT_TAU, classify, holder_tau

    f = _load_input_field(args.field)
    if args.tau == "holder":
        tau = holder_tau(f.grid)
    else:
        try:
            tau = float(args.tau)
        except ValueError:
            raise ConfigError(f"--tau must be a number or 'holder', got {args.tau!r}") from None
        if tau <= 0:
            raise ConfigError("--tau must be positive")
    out = _prepare_outdir(args, "nodal")
    nc = classify(f, tau, partition_tau=DEFAULT_TAU if args.tau == "holder" else None)
    nc.write(out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_verify, verify_json

    out = _prepare_outdir(args, "verify")
    results = run_verify(args.level, report=lambda r: print(r.line(), flush=True))
    text = verify_json(args.level, results)
    with open(os.path.join(out, "verify.json"), "w") as fh:
        fh.write(text + "\n")
    return EXIT_OK if all(r.status != "fail" for r in results) else EXIT_VERIFY


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seglab", description="Partial-segregation numerical laboratory.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=False):
        sp.add_argument("--out", default="seglab-out", help="output directory")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--n", type=int, help="cells per side")
        sp.add_argument("--seed", type=int)
        if solver:
            sp.add_argument("--beta", type=float, nargs="+", help="penalty value(s); overrides betaLadder")
            sp.add_argument("--trace", help="tr_mer, constant[:a,b,c] or csv:PATH")

    sp = sub.add_parser("exact", help="sample the exact minimiser and its closed-form profile")
    common(sp)
    sp.add_argument("--radii", type=float, nargs="+", help="radius ladder for the frequency CSV")
    sp.set_defaults(func=cmd_exact)

    for name, fn, help_ in (("solve", cmd_solve, "single solve (last beta, or hard constraint)"),
                            ("sweep", cmd_sweep, "penalised solves along the beta ladder")):
        sp = sub.add_parser(name, help=help_)
        common(sp, solver=True)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("frequency", help="Almgren profile of a field CSV")
    common(sp)
    sp.add_argument("--field", help="field CSV written by solve/sweep/exact")
    sp.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    sp.add_argument("--rmin", type=float, default=0.05)
    sp.add_argument("--rmax", type=float)
    sp.add_argument("--K", type=int, default=16)
    sp.add_argument("--include-penalty", action="store_true")
    sp.add_argument("--beta-value", type=float, default=0.0, help="beta for --include-penalty")
    sp.add_argument("--slack", type=float, default=0.02)
    sp.set_defaults(func=cmd_frequency)

    sp = sub.add_parser("nodal", help="nodal-set classification of a field CSV")
    common(sp)
    sp.add_argument("--field")
    sp.add_argument("--tau", default="0.01", help="relative zero threshold, or 'holder' for h^(3/4)")
    sp.set_defaults(func=cmd_nodal)

    sp = sub.add_parser("verify", help="run the acceptance criteria")
    common(sp)
    sp.add_argument("--level", choices=("quick", "full"), default="quick")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cap = _thread_cap()
        if cap is not None:
            for var in THREAD_VARS:
                os.environ[var] = str(cap)
        return args.func(args)
    except ConfigError as exc:
        print(f"seglab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
