"""Command-line entry point.

Every run writes ``resolved_config.json`` plus at least one certificate or time
series into the output directory. Exit codes: 0 success, 1 usage or
configuration error, 2 numerical failure, 3 failed certificate.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import Command, ConfigError, RunConfig, apply_overrides, config_from_dict, parse_config
from .experiments import collapse_arrest_run, stability_run
from .geometry import GeometryError, GridKind, WaveField, seed_field, normalize_mass
from .groundstate import (
    FlowOptions,
    GroundStateError,
    ShootingError,
    ThresholdError,
    critical_mass,
    energy_curve,
    solve_ground_state,
    solve_qm,
)
from .io import read_snapshot, write_report, write_snapshot, write_table, write_timeseries, SnapshotError
from .operators import SolverError
from .propagation import Flow, PropagationError, PropagatorConfig, Scheme, evolve
from .verify import drift_report, mass_bound, omega_window, pohozaev, report_lines

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CERTIFICATE = 0, 1, 2, 3
NUMERICAL_ERRORS = (GroundStateError, SolverError, PropagationError, ShootingError, ThresholdError)

log = logging.getLogger("lhyvortex")


class UsageError(Exception):
    pass


def _flow_options(cfg: RunConfig) -> FlowOptions:
    n = cfg.numerics
    return FlowOptions(tol=n.tol, max_iter=n.max_iter, dtau0=n.dtau0, dtau_max=n.dtau_max, seed_width=n.seed_width)


def _rho(cfg: RunConfig) -> float:
    p = cfg.physics
    if p.rho is not None:
        return p.rho
    if p.rho_factor is not None:
        if cfg.grid().kind is GridKind.CYLINDRICAL_3D:
            raise UsageError("physics.rho_factor needs the 2D threshold; give physics.rho in 3D")
        return p.rho_factor * solve_qm(p.m).mass
    raise ConfigError("required for this command (or give physics.rho_factor)", "physics.rho")


def _ground_state(cfg: RunConfig):
    grid = cfg.grid()
    initial = None
    if cfg.io.input:
        initial = read_snapshot(cfg.io.input)
    return solve_ground_state(grid, cfg.physics.m, _rho(cfg), _flow_options(cfg), initial)


def _certificates(cfg: RunConfig, psi: WaveField, omega: float | None = None) -> tuple[list[str], bool]:
    tol = cfg.numerics.pohozaev_tol
    rep = pohozaev(psi, psi.m, omega, tol=tol, l5_tol=10.0 * tol)
    lines = rep.as_lines()
    win = omega_window(rep.omega)
    lines += [f"omega_window_pass: {win.passed}", f"omega_star: {win.omega_star:.17g}"]
    ok = rep.passed and win.passed
    if psi.grid.kind is GridKind.RADIAL_2D:
        mb = mass_bound(psi, psi.m)
        lines += [f"mass_bound_pass: {mb.passed}", f"qm_mass: {mb.qm_mass:.17g}"]
        ok = ok and mb.passed
    return lines, ok


def cmd_groundstate(cfg: RunConfig, out: Path) -> int:
    res = _ground_state(cfg)
    write_snapshot(res.psi, out / "groundstate.nlsf")
    lines = [
        f"rho: {res.rho:.17g}",
        f"e_value: {res.e_value:.17g}",
        f"omega: {res.omega:.17g}",
        f"iterations: {res.iterations}",
        f"final_update: {res.final_update:.17g}",
        f"residual: {res.residual:.17g}",
        f"below_threshold: {res.below_threshold}",
    ]
    cert, ok = _certificates(cfg, res.psi, res.omega)
    write_report(out / "groundstate.txt", lines + cert)
    write_table(out / "flow_trace.csv", ("iteration", "dtau", "energy", "update"), res.trace)
    return EXIT_OK if ok else EXIT_CERTIFICATE


def _initial_field(cfg: RunConfig) -> WaveField:
    grid = cfg.grid()
    if cfg.io.input:
        u0 = read_snapshot(cfg.io.input)
        if u0.grid != grid:
            raise UsageError("io.input snapshot grid differs from the configured geometry")
        return u0
    u0 = seed_field(grid, cfg.physics.m, 1.0, cfg.numerics.seed_width)
    if cfg.physics.rho is not None or cfg.physics.rho_factor is not None:
        u0 = normalize_mass(u0, _rho(cfg))
    return u0


def cmd_evolve(cfg: RunConfig, out: Path) -> int:
    u0 = _initial_field(cfg)
    scheme = Scheme.STRANG_FFT if u0.grid.kind is GridKind.CARTESIAN_2D else Scheme.STRANG_CN
    flow = Flow.PLAIN_NLS if u0.grid.kind is GridKind.CARTESIAN_2D else Flow(cfg.physics.flow)
    pc = PropagatorConfig(
        dt=cfg.numerics.dt,
        t_end=cfg.numerics.t_end,
        scheme=scheme,
        snapshot_stride=cfg.io.snapshot_stride,
        diagnostics_stride=cfg.io.diagnostics_stride,
        cubic_only=cfg.physics.cubic_only,
    )
    snaps = out / "snapshots"
    if pc.snapshot_stride:
        snaps.mkdir(exist_ok=True)

    def save(t: float, u: WaveField) -> None:
        write_snapshot(u, snaps / f"t_{t:012.6f}.nlsf")

    traj = evolve(u0, pc, flow, on_snapshot=save if pc.snapshot_stride else None, keep_snapshots=False)
    write_timeseries(traj.rows, out / "timeseries.csv")
    if traj.final is not None:
        write_snapshot(traj.final, out / "final.nlsf")
    names = ["mass", "energy_total", "angmom"]
    drifts = drift_report({k: traj.series(k) for k in names}, floor=1e-300)
    lines = [f"completed: {traj.completed}", f"steps: {pc.steps}"]
    lines += [f"drift_{k}: {v:.17g}" for k, v in drifts.items()]
    if traj.error:
        lines += [f"error: {traj.error}", f"failed_step: {traj.failed_step}"]
    write_report(out / "evolve.txt", lines)
    return EXIT_OK if traj.completed else EXIT_NUMERICAL


def cmd_stability(cfg: RunConfig, out: Path) -> int:
    if cfg.grid().kind is not GridKind.RADIAL_2D:
        raise UsageError("the stability study runs on Radial2D grids")
    ground = _ground_state(cfg)
    ex = cfg.experiment
    trace = stability_run(ground, ex.delta, ex.horizon, cfg.numerics.dt, cfg.io.diagnostics_stride, ex.ratio_cap)
    write_table(out / "stability.csv", ("t", "distance"), trace.rows())
    write_report(out / "stability.txt", [
        f"delta: {trace.delta:.17g}",
        f"sup_distance: {trace.sup_distance:.17g}",
        f"ratio_cap: {trace.ratio_cap:.17g}",
        f"omega: {trace.omega:.17g}",
        f"completed: {trace.completed}",
        f"verdict: {trace.verdict}",
    ])
    if not trace.completed:
        return EXIT_NUMERICAL
    return EXIT_OK if trace.verdict else EXIT_CERTIFICATE


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    if cfg.io.input:
        psi = read_snapshot(cfg.io.input)
        omega = None
    else:
        res = _ground_state(cfg)
        psi, omega = res.psi, res.omega
    lines, ok = _certificates(cfg, psi, omega)
    write_report(out / "verify.txt", lines)
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_threshold(cfg: RunConfig, out: Path) -> int:
    p = cfg.physics
    grid = cfg.grid() if p.d == 3 else None
    if grid is not None and grid.kind is not GridKind.CYLINDRICAL_3D:
        raise UsageError("a 3D threshold needs a Cylindrical3D geometry")
    res = critical_mass(p.m, p.d, grid=grid, rho_start=cfg.experiment.rho_start)
    lines = [f"rho_star: {res.rho_star:.17g}", f"method: {res.method.value}"]
    if res.qm_mass is not None:
        lines.append(f"qm_mass: {res.qm_mass:.17g}")
    if res.bracket is not None:
        lines += [f"bracket_lo: {res.bracket[0]:.17g}", f"bracket_hi: {res.bracket[1]:.17g}"]
    write_report(out / "threshold.txt", lines)
    if res.scan:
        write_table(out / "threshold_scan.csv", ("rho", "energy"), res.scan)
    return EXIT_OK


def cmd_curve(cfg: RunConfig, out: Path) -> int:
    rhos = cfg.experiment.rho_list
    if not rhos:
        raise ConfigError("needs at least one mass", "experiment.rho_list")
    pts = energy_curve(cfg.grid(), cfg.physics.m, rhos, _flow_options(cfg))
    write_table(out / "curve.csv", ("rho", "energy", "omega", "converged"),
                [(p.rho, p.e_value, p.omega, float(p.converged)) for p in pts])
    ok = all(p.converged for p in pts)
    write_report(out / "curve.txt", [f"points: {len(pts)}", f"all_converged: {ok}"])
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_collapse(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid()
    if grid.kind is not GridKind.CARTESIAN_2D:
        raise UsageError("the collapse experiment runs on Cartesian2D grids")
    ex = cfg.experiment
    rep = collapse_arrest_run(ex.mass_factor, ex.horizon, ex.cubic_horizon, grid, cfg.numerics.dt, cfg.io.diagnostics_stride)
    write_table(out / "collapse_cubic.csv", ("t", "grad_norm"), zip(rep.cubic_times, rep.cubic_grad))
    write_table(out / "collapse_lhy.csv", ("t", "grad_norm"), zip(rep.lhy_times, rep.lhy_grad))
    write_report(out / "collapse.txt", [
        f"mass: {rep.mass:.17g}",
        f"energy0: {rep.energy0:.17g}",
        f"ceiling: {rep.ceiling:.17g}",
        f"cubic_growth: {rep.cubic_growth:.17g}",
        f"cubic_blowup_time: {rep.cubic_blowup_time}",
        f"cubic_aborted: {rep.cubic_aborted}",
        f"lhy_max_ratio: {rep.lhy_max_ratio:.17g}",
        f"cubic_verdict: {rep.cubic_verdict}",
        f"lhy_verdict: {rep.lhy_verdict}",
    ])
    return EXIT_OK if rep.passed else EXIT_CERTIFICATE


COMMANDS = {
    Command.GROUNDSTATE: cmd_groundstate,
    Command.EVOLVE: cmd_evolve,
    Command.STABILITY: cmd_stability,
    Command.VERIFY: cmd_verify,
    Command.THRESHOLD: cmd_threshold,
    Command.CURVE: cmd_curve,
    Command.COLLAPSE: cmd_collapse,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lhyvortex", description="Vortex ground states and dynamics of the cubic-quartic NLS.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--out", help="output directory (overrides io.output_dir)")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-key override, value parsed as JSON when possible (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        data = parse_config(text).model_dump(exclude_unset=True)
        if data.get("command", args.command) != args.command:
            raise ConfigError(f"config is for '{data['command']}', command line asks for '{args.command}'", "command")
    data["command"] = args.command
    data = apply_overrides(data, args.override)
    if args.out:
        data.setdefault("io", {})["output_dir"] = args.out
    return config_from_dict(json.loads(json.dumps(data, default=str)))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        cfg.grid()
    except (ConfigError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(cfg.io.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n")
    try:
        code = COMMANDS[cfg.command](cfg, out)
    except (ConfigError, UsageError, GeometryError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
