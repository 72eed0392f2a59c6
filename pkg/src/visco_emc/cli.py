"""Command-line interface: ``visco-emc run|converge|material-point|verify-tangent``.

Exit codes: 0 success, 2 configuration error, 3 non-convergence (or an
inverted element), 4 verification failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path


from . import __version__
from . import diagnostics as dg
from .config import RunConfig, parse_config, serialize_config
from .errors import ConfigError, ConvergenceError, MeshError, NonPositiveJacobianError, ViscoEMCError
from .fem import MixedAssembler, QPState, TaylorHoodSpace
from .integrators import SchemeKind
from .output import ProbeSet, write_fields
from .solver import initial_state, load_state, run_simulation, save_state

log = logging.getLogger("visco_emc")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_VERIFY = 0, 1, 2, 3, 4

DEFAULT_DTS = "4e-3,2e-3,1e-3,5e-4,2.5e-4"


def _float_list(text: str) -> list:
    try:
        vals = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("step sizes must be positive")
    return vals


def _scheme(text: str) -> SchemeKind:
    try:
        return SchemeKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="visco-emc", description="Energy-momentum consistent viscoelastodynamics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        if config_required:
            sp.add_argument("config", help="configuration file or bundled name (lblock, shear_test, unit_cube)")
        else:
            sp.add_argument("config", nargs="?", default="lblock", help="configuration providing the material (default: lblock)")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
        sp.add_argument("--scheme", type=_scheme, help="1, 2 or mp (overrides [solver] scheme)")
        sp.add_argument("--gamma", type=float, help="grad-div parameter (overrides [solver] gamma)")
        sp.add_argument("--dt", type=float, help="time step (overrides [solver] dt)")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.add_argument("-q", "--quiet", action="store_true")

    r = sub.add_parser("run", help="time-march a configuration, writing diagnostics CSV and snapshots")
    common(r)
    r.add_argument("--T", type=float, help="final time (overrides [solver] T)")
    r.add_argument("--steps", type=int, help="number of steps to take (default: up to T)")
    r.add_argument("--restart", type=Path, help="continue from a restart file written by a previous run")

    c = sub.add_parser("converge", help="temporal convergence of the FEM solution against an overkill run")
    common(c)
    c.add_argument("--dts", type=_float_list, default=_float_list(DEFAULT_DTS))
    c.add_argument("--overkill", type=float, default=1e-5)
    c.add_argument("--t-probe", type=float, default=0.1)
    c.add_argument("--min-corrections", type=int, default=2, help="Newton corrections always taken per step (default 2)")

    m = sub.add_parser("material-point", help="temporal convergence of the constitutive update on a smooth isochoric path")
    common(m, config_required=False)
    m.add_argument("--dts", type=_float_list, default=_float_list(DEFAULT_DTS))
    m.add_argument("--overkill", type=float, default=1e-5)
    m.add_argument("--t-probe", type=float, default=0.1)
    m.add_argument("--amplitude", type=float, default=0.3)
    m.add_argument("--omega", type=float, default=2 * math.pi)

    v = sub.add_parser("verify-tangent", help="finite-difference check of the consistent tangents")
    common(v, config_required=False)
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--tol", type=float, default=1e-6, help="material tangent tolerance (default 1e-6)")
    v.add_argument("--global-tol", type=float, default=1e-5, help="assembled block tolerance (default 1e-5)")
    v.add_argument("--seed", type=int, default=0)
    return p


def _load(args) -> RunConfig:
    cfg = parse_config(args.config)
    overrides = {"dt": args.dt, "gamma": args.gamma, "scheme": args.scheme, "T": getattr(args, "T", None)}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        try:
            cfg = replace(cfg, solver=replace(cfg.solver, **overrides))
        except ValueError as exc:
            raise ConfigError([f"command-line override: {exc}"]) from None
    return cfg


def make_assembler(cfg: RunConfig, mesh=None) -> MixedAssembler:
    space = TaylorHoodSpace(mesh if mesh is not None else cfg.mesh.build())
    s = cfg.solver
    return MixedAssembler(space, cfg.material, cfg.loads, s.scheme, gamma=s.gamma, z_cut=s.z_cut)


def _load_columns(cfg: RunConfig) -> list:
    cols = []
    for name in cfg.loads.tractions:
        cols += [f"traction_{name}_{c}" for c in "xyz"]
    if cfg.loads.body is not None:
        cols += [f"body_{c}" for c in "xyz"]
    return cols


def _load_values(cfg: RunConfig, t: float) -> list:
    vals = []
    for load in cfg.loads.tractions.values():
        vals += list(load(t))
    if cfg.loads.body is not None:
        vals += list(cfg.loads.body(t))
    return vals


def cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(serialize_config(cfg))
    asm = make_assembler(cfg)
    scfg = cfg.solver
    if args.restart is not None:
        Y, qp, t0, step0 = load_state(args.restart)
        if Y.U.shape != (asm.space.n_nodes, 3) or qp.committed.shape[:1] != (cfg.material.m,):
            raise ConfigError([f"restart file {args.restart} does not match the configured mesh/material"])
    else:
        Y = initial_state(asm, cfg.initial_velocity, cfg.initial_angular_velocity)
        qp = QPState(cfg.material.m, asm.space.n_elements, asm.space.n_qp)
        t0, step0 = 0.0, 0
    n_steps = args.steps if args.steps is not None else max(scfg.n_steps - step0, 0)

    probes = ProbeSet(asm.space, cfg.output.probes) if cfg.output.probes else None
    csv_path = out / cfg.output.csv
    writer = dg.CSVWriter(csv_path, append=args.restart is not None)
    probe_fh = probe_w = None
    if probes is not None:
        probe_path = out / "probes.csv"
        fresh = args.restart is None or not probe_path.exists()
        probe_fh = probe_path.open("w" if fresh else "a", newline="")
        probe_w = csv.writer(probe_fh)
        if fresh:
            probe_w.writerow(["step", "t"] + probes.columns() + _load_columns(cfg))
            probe_w.writerow([step0, repr(t0)] + [repr(float(x)) for x in probes.row(Y) + _load_values(cfg, t0)])

    t_start = time.perf_counter()
    every = max(1, n_steps // 20)

    def on_step(report, record):
        writer.write(record)
        if not args.quiet and (report.step - step0) % every == 0:
            print(
                f"step {report.step:6d}  t = {report.t:10.4f}  iters = {report.iterations}  "
                f"H = {record['H']:.6e}  balance = {record['balance_residual']:.2e}",
                file=sys.stderr,
            )

    def on_snapshot(t, Yt):
        write_fields(asm.space, Yt, out / f"fields_t{t:010.4f}.vtk", t)

    def on_state(step, t, Yt, qpt):
        if probe_w is not None:
            probe_w.writerow([step, repr(t)] + [repr(float(x)) for x in probes.row(Yt) + _load_values(cfg, t)])
        if cfg.output.restart_every and step % cfg.output.restart_every == 0:
            save_state(out / "restart.npz", Yt, qpt, t, step)

    # a restarted run has already written the snapshots at or before t0
    snaps = [s for s in cfg.output.snapshots if args.restart is None or s > t0 + 1e-9 * scfg.dt]
    code = EXIT_OK
    try:
        res = run_simulation(asm, scfg, Y, qp, t0, step0, n_steps, on_step=on_step,
                             snapshot_times=snaps, on_snapshot=on_snapshot, on_state=on_state)
        save_state(out / "restart.npz", res.state, res.qp, res.t, res.step)
        if not args.quiet:
            print(f"done: {n_steps} steps in {time.perf_counter() - t_start:.1f} s -> {csv_path}", file=sys.stderr)
    except (ConvergenceError, NonPositiveJacobianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_CONVERGENCE
    finally:
        writer.close()
        if probe_fh is not None:
            probe_fh.close()
    return code


def cmd_converge(args) -> int:
    cfg = _load(args)
    mesh = cfg.mesh.build()
    scfg = cfg.solver
    if args.overkill > min(args.dts):
        raise ConfigError([f"--overkill {args.overkill} must not exceed the smallest step {min(args.dts)}"])
    for dt in args.dts + [args.overkill]:
        n = round(args.t_probe / dt)
        if abs(n * dt - args.t_probe) > 1e-9 * args.t_probe:
            raise ConfigError([f"step {dt:g} does not divide the probe time {args.t_probe:g}"])
    kw = dict(tol_R=scfg.tol_R, tol_A=scfg.tol_A, l_max=scfg.l_max, z_cut=scfg.z_cut, min_corrections=args.min_corrections)
    make = lambda: make_assembler(cfg, mesh)  # noqa: E731
    ref_run = dg.fem_probe_runner(make, args.t_probe, SchemeKind.SCHEME2, scfg.gamma, **kw)
    run = dg.fem_probe_runner(make, args.t_probe, scfg.scheme, scfg.gamma, **kw)
    if not args.quiet:
        print(f"overkill run (Scheme-2, dt = {args.overkill:g}) ...", file=sys.stderr)
    try:
        ref = ref_run(args.overkill)
    except (ConvergenceError, NonPositiveJacobianError) as exc:
        print(f"error: overkill run failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    table = dg.convergence_study(run, args.dts, reference=ref)
    return _report_rates(args, table, f"FEM, scheme {scfg.scheme.value}, probe t = {args.t_probe:g}")


def cmd_material_point(args) -> int:
    cfg = _load(args)
    scheme = args.scheme or cfg.solver.scheme
    path = dg.isochoric_shear_path(args.amplitude, args.omega)
    run = dg.material_point_runner(path, scheme, cfg.material, args.t_probe)
    for dt in args.dts + [args.overkill]:
        n = round(args.t_probe / dt)
        if abs(n * dt - args.t_probe) > 1e-9 * args.t_probe:
            raise ConfigError([f"step {dt:g} does not divide the probe time {args.t_probe:g}"])
    ref = dg.material_point_runner(path, SchemeKind.SCHEME2, cfg.material, args.t_probe)(args.overkill)
    table = dg.convergence_study(run, args.dts, reference=ref)
    return _report_rates(args, table, f"material point, scheme {SchemeKind.parse(scheme).value}, probe t = {args.t_probe:g}")


def _report_rates(args, table: dg.RateTable, title: str) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    text = f"# {title}\n{table.format()}\n"
    print(text, end="")
    (args.out / "rates.txt").write_text(text)
    with (args.out / "rates.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        names = list(table.errors)
        w.writerow(["dt"] + names)
        for i, dt in enumerate(table.dts):
            w.writerow([repr(dt)] + [repr(table.errors[n][i]) for n in names])
        w.writerow(["slope"] + [repr(table.slopes[n]) for n in names])
    return EXIT_CONVERGENCE if table.failed else EXIT_OK


def cmd_verify_tangent(args) -> int:
    cfg = _load(args)
    mats = {"config": cfg.material}
    ok = True
    lines = []
    for scheme in (SchemeKind.SCHEME1, SchemeKind.SCHEME2, SchemeKind.MIDPOINT):
        for label, mat in mats.items():
            if mat.m == 0 and scheme is not SchemeKind.SCHEME2:
                continue
            err = dg.tangent_check(scheme, mat, args.samples, args.seed)
            gerr = dg.global_tangent_check(mat, scheme, args.seed, gamma=cfg.solver.gamma)
            passed = err <= args.tol and gerr <= args.global_tol
            ok &= passed
            kinds = ",".join(sorted({b.kind for b in mat.branches})) or "elastic"
            lines.append(
                f"{'PASS' if passed else 'FAIL'}  scheme {scheme.value:>2}  [{kinds}]  "
                f"material {err:.2e} (tol {args.tol:g}, {args.samples} samples)  assembled {gerr:.2e} (tol {args.global_tol:g})"
            )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "tangent_check.txt").write_text(text)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "run": cmd_run,
    "converge": cmd_converge,
    "material-point": cmd_material_point,
    "verify-tangent": cmd_verify_tangent,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * args.verbose if not args.quiet else logging.ERROR
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ViscoEMCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
