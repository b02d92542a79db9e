"""Command-line front end: run, verify, oracle-compare, fit-decay.

Exit codes: 0 on success (a density-floor halt counts as success), 1 when a
run ends in a numerical halt or a verification/fit fails, 2 on
configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from . import diagnostics as dg
from .config import ConfigError, RunConfig, format_config, load_config
from .dynamics import run
from .spectral import TorusGrid
from .state import make_initial_data, write_snapshot

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
HALT_REASONS = ("horizon", "density_floor", "numerical_halt", "error")
CSV_NAME = "diagnostics.csv"
MANIFEST_NAME = "manifest.json"

PREDICTIONS = {"S": lambda p: -2.0 / p, "Z": lambda p: -(1.0 + 2.0 / p)}


class _Printer:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


def _versions() -> dict:
    return {"pitaevskii": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def _prepare_output(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    probe = path / ".write_probe"
    probe.write_text("")
    probe.unlink()
    return path


def _initial_state(cfg: RunConfig):
    grid = TorusGrid(cfg.nx, cfg.ny)
    return make_initial_data(cfg.initial, grid, cfg.params, seed=cfg.seed)


def cmd_run(cfg: RunConfig, out: Optional[Path] = None, quiet: bool = False) -> int:
    """Run the solver; write the diagnostics CSV, snapshots and a manifest."""
    say = _Printer(quiet)
    out = Path(out or cfg.output_dir)
    try:
        _prepare_output(out)
    except OSError as exc:
        print(f"error: cannot write to output directory {out}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    manifest = {"halt_reason": "error", "existence_time": None, "versions": _versions(),
                "seed": cfg.seed, "params": asdict(cfg.params),
                "stepper": asdict(cfg.stepper),
                "initial": {k: _jsonable(v) for k, v in asdict(cfg.initial).items()},
                "config": format_config(cfg)}
    snaps: list[str] = []
    snap_times: list[float] = []
    next_snap = [0.0]

    def write(state):
        name = f"snapshot_{len(snaps):05d}.bin"
        write_snapshot(out / name, state, cfg.params)
        snaps.append(name)
        snap_times.append(state.t)

    def snapshot(state, record):
        every = cfg.snapshot_every
        if every is None or state.t < next_snap[0] - 1e-9 * every:
            return
        write(state)
        while next_snap[0] <= state.t + 1e-9 * every:
            next_snap[0] += every

    try:
        state = _initial_state(cfg)
        next_snap[0] = state.t
        res = run(state, cfg.params, cfg.stepper, cfg.horizon,
                  callbacks=[snapshot], cadence=cfg.cadence)
        dg.write_csv(out / CSV_NAME, res.records)
        if cfg.snapshot_every is not None and (not snap_times or snap_times[-1] != res.state.t):
            write(res.state)  # the final state is always kept
        manifest.update(halt_reason=res.halt_reason, existence_time=res.existence_time,
                        final_time=res.state.t, steps=res.steps, message=res.message,
                        csv=CSV_NAME, rows=len(res.records), snapshots=snaps)
    except (OSError, ValueError) as exc:
        manifest["message"] = str(exc)
        _write_manifest(out, manifest)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _write_manifest(out, manifest)
    say(f"halt reason: {res.halt_reason}  t = {res.state.t:.6g}  steps = {res.steps}")
    if res.existence_time is not None:
        say(f"existence time (density floor): {res.existence_time:.17g}")
    say(f"wrote {out / CSV_NAME} ({len(res.records)} rows), {len(snaps)} snapshots")
    return EXIT_FAIL if res.halt_reason == "numerical_halt" else EXIT_OK


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_verify(cfg: RunConfig, quiet: bool = False) -> int:
    """Property suite on the configured grid, parameters and initial data."""
    from .verify import run_suite

    checks = run_suite(cfg.params, cfg.nx, cfg.ny, seed=cfg.seed, stepper=cfg.stepper,
                       initial=cfg.initial, horizon=cfg.horizon)
    for c in checks:
        if not quiet or not c.passed:
            print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAIL
    if not quiet:
        print(f"all {len(checks)} checks passed")
    return EXIT_OK


def default_kmax(nx: int, ny: int) -> int:
    """Largest square band |j_i| <= K inside the dealias mask 3|j| <= n."""
    return min(nx, ny) // 3


def cmd_oracle_compare(cfg: RunConfig, quiet: bool = False) -> int:
    """Run the solver and the reference solver side by side; print the discrepancies."""
    from .galerkin import (GalerkinBasis, assemble_mass_matrix, coefficients_from_state,
                           compare_with_solver, oracle_run)

    say = _Printer(quiet)
    oc = cfg.oracle
    kmax = oc.kmax if oc.kmax is not None else default_kmax(cfg.nx, cfg.ny)
    horizon = oc.horizon if oc.horizon is not None else cfg.horizon
    ratio = oc.sample_every / oc.dt
    if abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise ConfigError("oracle.sample_every must be a whole multiple of oracle.dt")
    basis = GalerkinBasis(kmax, oc.quad_factor)
    identity = assemble_mass_matrix(np.ones(basis.quad_n ** 2), basis)
    r_err = float(np.abs(identity - np.eye(identity.shape[0])).max())

    state = _initial_state(cfg)
    d0, c0, rho0 = coefficients_from_state(state, basis)
    snaps = []
    res = run(state, cfg.params, cfg.stepper, horizon, cadence=oc.sample_every,
              callbacks=[lambda s, r: snaps.append(s)])
    orc = oracle_run(d0, c0, rho0, basis, cfg.params, oc.dt, horizon)
    keep = [s for s in snaps if s.t <= orc.t[-1] + 1e-9]
    rep = compare_with_solver(keep, orc, cfg.params, compare_density=True)
    say(f"oracle basis: kmax = {kmax}, {len(basis.scalar_modes)} scalar and "
        f"{len(basis.vector_modes)} vector functions, quadrature {basis.quad_n}^2")
    say(f"solver halt: {res.halt_reason}; oracle halt: {orc.halt_reason}")
    print(f"{'quantity':<24} {'discrepancy':>24}")
    print(f"{'mass matrix R(1) - I':<24} {r_err:>24.17g}")
    for name, val in rep.rows():
        print(f"{name:<24} {val:>24.17g}")
    return EXIT_OK


def cmd_fit_decay(csv_path, cfg: RunConfig, functional: Optional[str] = None,
                  window: Optional[tuple] = None, quiet: bool = False) -> int:
    """Fit a decay exponent to a diagnostics CSV and print it next to the prediction."""
    try:
        records = dg.read_csv(csv_path)
    except OSError as exc:
        print(f"error: cannot read {csv_path}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: malformed diagnostics CSV: {exc}", file=sys.stderr)
        return EXIT_ERROR
    name = functional or cfg.fit.functional
    if name not in ("S", "E", "X", "Z", "W"):
        print(f"error: unknown functional {name!r}", file=sys.stderr)
        return EXIT_ERROR
    if window is None and (cfg.fit.window_start is not None or cfg.fit.window_end is not None):
        t = dg.series(records, "t")
        window = (cfg.fit.window_start if cfg.fit.window_start is not None else t[0],
                  cfg.fit.window_end if cfg.fit.window_end is not None else t[-1])
    p = cfg.params.p
    S0 = records[0].S
    try:
        fit = dg.fit_decay_exponent(dg.series(records, "t"), dg.series(records, name),
                                    S0, p, window)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    pred = PREDICTIONS.get(name)
    print(f"functional {name}: fitted exponent {fit.exponent:.17g} +- {fit.fit_error:.3g} "
          f"over t in [{fit.window[0]:.6g}, {fit.window[1]:.6g}] ({fit.n_points} samples)")
    if pred is not None:
        kind = "expected" if name == "S" else "upper bound"
        print(f"predicted exponent ({kind}): {pred(p):.17g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pitaevskii", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="configuration file")
    common.add_argument("--output", type=Path, help="output directory (overrides run.output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides initial.seed)")
    common.add_argument("--quiet", action="store_true", help="print only results and errors")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="integrate and write CSV, snapshots, manifest")
    sub.add_parser("verify", parents=[common], help="operator identities and short-run checks")
    sub.add_parser("oracle-compare", parents=[common], help="compare with the reference solver")
    fit = sub.add_parser("fit-decay", parents=[common], help="fit a decay exponent to a CSV")
    fit.add_argument("csv", type=Path, help="diagnostics CSV written by 'run'")
    fit.add_argument("--functional", choices=("S", "E", "X", "Z", "W"))
    fit.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.command == "run":
            return cmd_run(cfg, args.output, args.quiet)
        if args.command == "verify":
            return cmd_verify(cfg, args.quiet)
        if args.command == "oracle-compare":
            return cmd_oracle_compare(cfg, args.quiet)
        return cmd_fit_decay(args.csv, cfg, args.functional,
                             tuple(args.window) if args.window else None, args.quiet)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
