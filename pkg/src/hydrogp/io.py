"""Network/scenario ingestion, results emission, and the command line.

The network reader understands a small whitespace-delimited subset of the
common INP section format (documented in the README); demands come either
from pattern multipliers in the network file or from a separate CSV of
(step, junction, value) rows.  All I/O values default to GPM/hours and are
converted to cfs/seconds at this boundary.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import units
from .errors import (
    HydrogpError,
    InpSyntaxError,
    IoFailureError,
    UnsupportedSectionError,
)
from .mpc import MPCTrajectory, SCAConfig, evaluate_objectives, run_mpc
from .network import (
    DemandPattern,
    Junction,
    Link,
    Network,
    Node,
    Pipe,
    Pump,
    Reservoir,
    Tank,
    build_network,
    incidence_matrices,
    validate,
)

KNOWN_SECTIONS = (
    "TITLE",
    "JUNCTIONS",
    "RESERVOIRS",
    "TANKS",
    "PIPES",
    "PUMPS",
    "PATTERNS",
    "DEMANDS",
)

FORMULA_TAGS = {
    "HW": "hazen-williams",
    "HAZEN-WILLIAMS": "hazen-williams",
    "DW": "darcy-weisbach",
    "DARCY-WEISBACH": "darcy-weisbach",
    "CM": "chezy-manning",
    "CHEZY-MANNING": "chezy-manning",
}


@dataclass
class ScenarioConfig:
    """Everything a closed-loop run needs beyond the network itself."""

    network_path: Path
    demands_path: Path | None = None
    out_dir: Path = Path("out")
    plant: str = "nominal"
    io_units: str = "gpm"  # unit system for files: gpm/hours or cfs/seconds
    flow_bound_gpm: float = 1000.0
    sca: SCAConfig = field(default_factory=SCAConfig)

    def __post_init__(self):
        if self.io_units not in ("gpm", "cfs"):
            raise ValueError("io_units must be 'gpm' or 'cfs'")
        if self.plant not in ("nominal", "oracle"):
            raise ValueError("plant must be 'nominal' or 'oracle'")

    def flow_to_internal(self, value: float) -> float:
        return units.gpm_to_cfs(value) if self.io_units == "gpm" else value

    def flow_to_io(self, value: float) -> float:
        return units.cfs_to_gpm(value) if self.io_units == "gpm" else value


def _tokens(line: str) -> list[str]:
    return line.split(";", 1)[0].split()


def parse_network(
    text: str, flow_bound_gpm: float = 1000.0
) -> tuple[list[Node], list[Link], DemandPattern]:
    """Parse the INP subset into nodes, links and expanded demand series.

    Raises ``InpSyntaxError`` with the position, or ``UnsupportedSectionError``
    for valve sections (no valve model in this version).  Unknown sections
    are skipped.
    """
    nodes: list[Node] = []
    links: list[Link] = []
    base_demand: dict[str, float] = {}
    demand_pattern_of: dict[str, str] = {}
    patterns: dict[str, list[float]] = {}

    q_box = units.gpm_to_cfs(flow_bound_gpm)
    section = None
    known = set(KNOWN_SECTIONS)

    def syntax(lineno: int, col: int, expected: str) -> InpSyntaxError:
        return InpSyntaxError(lineno, col, expected)

    def need_floats(parts: list[str], start: int, count: int, lineno: int):
        out = []
        for offset in range(count):
            idx = start + offset
            if idx >= len(parts):
                raise syntax(lineno, idx + 1, f"{count} numeric fields")
            try:
                out.append(float(parts[idx]))
            except ValueError:
                raise syntax(lineno, idx + 1, f"number, got {parts[idx]!r}") from None
        return out

    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = _tokens(raw)
        if not parts:
            continue
        if parts[0].startswith("["):
            name = raw.strip().strip("[]").upper()
            if name == "VALVES":
                raise UnsupportedSectionError(
                    "VALVES", "no valve hydraulic model in this version"
                )
            if name == "END":
                section = None
                continue
            section = name if name in known else f"?{name}"
            continue
        if section is None:
            raise syntax(lineno, 1, "a [SECTION] header before data")
        if section.startswith("?") or section == "TITLE":
            continue

        if section == "JUNCTIONS":
            if len(parts) < 2:
                raise syntax(lineno, 2, "id and elevation")
            (elev,) = need_floats(parts, 1, 1, lineno)
            jid = parts[0]
            nodes.append(Junction(id=jid, elevation=elev))
            if len(parts) >= 3:
                (demand,) = need_floats(parts, 2, 1, lineno)
                base_demand[jid] = demand
            if len(parts) >= 4:
                demand_pattern_of[jid] = parts[3]
        elif section == "RESERVOIRS":
            if len(parts) < 2:
                raise syntax(lineno, 2, "id and head")
            (head,) = need_floats(parts, 1, 1, lineno)
            nodes.append(Reservoir(id=parts[0], fixed_head=head))
        elif section == "TANKS":
            if len(parts) < 7:
                raise syntax(
                    lineno, len(parts) + 1,
                    "id elev init_lvl min_lvl max_lvl diam safety_lvl",
                )
            elev, init_l, min_l, max_l, diam, safety_l = need_floats(
                parts, 1, 6, lineno
            )
            nodes.append(
                Tank(
                    id=parts[0],
                    elevation=elev,
                    cross_section=math.pi * diam * diam / 4.0,
                    initial_head=elev + init_l,
                    head_min=elev + min_l,
                    head_max=elev + max_l,
                    safety_head=elev + safety_l,
                )
            )
        elif section == "PIPES":
            if len(parts) < 6:
                raise syntax(
                    lineno, len(parts) + 1, "id node1 node2 length diameter roughness"
                )
            length, diam_in, rough = need_floats(parts, 3, 3, lineno)
            formula = "hazen-williams"
            friction = None
            if len(parts) >= 7:
                tag = parts[6].upper()
                if tag not in FORMULA_TAGS:
                    raise syntax(lineno, 7, f"formula tag, one of {sorted(FORMULA_TAGS)}")
                formula = FORMULA_TAGS[tag]
            if formula == "darcy-weisbach":
                if len(parts) < 8:
                    raise syntax(lineno, 8, "constant friction factor")
                (friction,) = need_floats(parts, 7, 1, lineno)
            links.append(
                Pipe(
                    id=parts[0],
                    from_node=parts[1],
                    to_node=parts[2],
                    length=length,
                    diameter=units.inches_to_feet(diam_in),
                    roughness=rough,
                    headloss_formula=formula,
                    friction_factor=friction,
                    flow_min=-q_box,
                    flow_max=q_box,
                )
            )
        elif section == "PUMPS":
            if len(parts) < 7 or parts[3].upper() != "HEAD":
                raise syntax(
                    lineno, 4, "id node1 node2 HEAD h0 r nu [GPM|CFS]"
                )
            h0, r, nu = need_floats(parts, 4, 3, lineno)
            curve_units = parts[7].lower() if len(parts) >= 8 else "gpm"
            if curve_units not in ("gpm", "cfs"):
                raise syntax(lineno, 8, "curve units GPM or CFS")
            links.append(
                Pump(
                    id=parts[0],
                    from_node=parts[1],
                    to_node=parts[2],
                    shutoff_head=h0,
                    curve_coefficient=units.pump_curve_coeff_to_cfs(r, nu, curve_units),
                    curve_exponent=nu,
                    flow_min=0.0,
                    flow_max=q_box,
                )
            )
        elif section == "PATTERNS":
            if len(parts) < 2:
                raise syntax(lineno, 2, "pattern id and multipliers")
            values = need_floats(parts, 1, len(parts) - 1, lineno)
            patterns.setdefault(parts[0], []).extend(values)
        elif section == "DEMANDS":
            if len(parts) < 2:
                raise syntax(lineno, 2, "junction, base demand[, pattern]")
            (demand,) = need_floats(parts, 1, 1, lineno)
            base_demand[parts[0]] = demand
            if len(parts) >= 3:
                demand_pattern_of[parts[0]] = parts[2]

    series: dict[str, np.ndarray] = {}
    horizon = max((len(v) for v in patterns.values()), default=1)
    for jid, base in base_demand.items():
        if base == 0 and jid not in demand_pattern_of:
            continue
        pid = demand_pattern_of.get(jid)
        if pid is not None:
            if pid not in patterns:
                raise InpSyntaxError(0, 0, f"pattern {pid!r} referenced but not defined")
            mult = np.asarray(patterns[pid], dtype=float)
        else:
            mult = np.ones(horizon)
        series[jid] = units.gpm_to_cfs(base) * mult

    return nodes, links, DemandPattern(series)


def load_network(path: str | Path, flow_bound_gpm: float = 1000.0) -> Network:
    text = Path(path).read_text(encoding="utf-8")
    nodes, links, patterns = parse_network(text, flow_bound_gpm)
    return build_network(nodes, links, patterns)


def read_demand_csv(
    path: str | Path, io_units: str = "gpm"
) -> DemandPattern:
    """(step, junction, value) rows into per-junction series, internal units."""
    rows: dict[str, dict[int, float]] = {}
    max_step = -1
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            if not row or row[0].strip().startswith("#"):
                continue
            if i == 0 and not _is_number(row[0]):
                continue  # header
            if len(row) < 3:
                raise InpSyntaxError(i + 1, 1, "step,junction,value")
            try:
                step = int(row[0])
                value = float(row[2])
            except ValueError as exc:
                raise InpSyntaxError(i + 1, 1, f"numeric step/value: {exc}") from None
            jid = row[1].strip()
            rows.setdefault(jid, {})[step] = (
                units.gpm_to_cfs(value) if io_units == "gpm" else value
            )
            max_step = max(max_step, step)
    series = {}
    for jid, vals in rows.items():
        seq = np.zeros(max_step + 1)
        for step, v in vals.items():
            seq[step] = v
        series[jid] = seq
    return DemandPattern(series)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def emit_results(
    traj: MPCTrajectory, out_dir: str | Path, io_units: str = "gpm"
) -> dict[str, Path]:
    """Write trajectory/iterations/residuals CSVs plus the column schema.

    Column order is deterministic; numbers carry 9 significant digits so
    reruns produce identical files.  Returns the file manifest.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create {out}: {exc}") from exc

    def flow_out(v: float) -> float:
        return units.cfs_to_gpm(v) if io_units == "gpm" else v

    flow_unit = "gpm" if io_units == "gpm" else "cfs"
    traj_cols = (
        ["step"]
        + [f"tank_{t}_ft" for t in traj.tank_ids]
        + [f"junction_{j}_ft" for j in traj.junction_ids]
        + [f"pipe_{p}_{flow_unit}" for p in traj.pipe_ids]
        + [f"pump_{m}_{flow_unit}" for m in traj.pump_ids]
        + [f"speed_{m}" for m in traj.pump_ids]
    )
    manifest: dict[str, Path] = {}

    def write(name: str, header: list[str], rows) -> None:
        path = out / name
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
        except OSError as exc:
            raise IoFailureError(f"cannot write {path}: {exc}") from exc
        manifest[name] = path

    rows = []
    for k in range(traj.n_steps):
        rows.append(
            [k]
            + [_fmt(v) for v in traj.x[k + 1]]
            + [_fmt(v) for v in traj.l[k]]
            + [_fmt(flow_out(v)) for v in traj.v[k]]
            + [_fmt(flow_out(v)) for v in traj.u[k]]
            + [_fmt(v) for v in traj.s[k]]
        )
    write("trajectory.csv", traj_cols, rows)

    rows = []
    for k, errors in enumerate(traj.error_series):
        for n, err in enumerate(errors, start=1):
            rows.append([k, n, _fmt(err)])
    write("iterations.csv", ["step", "n", "error"], rows)

    rows = [
        [k, _fmt(traj.residual_tank[k]), _fmt(traj.residual_mass[k]),
         _fmt(traj.residual_energy[k])]
        for k in range(traj.n_steps)
    ]
    write("residuals.csv", ["step", "r_tank_ft", "r_mass_cfs", "r_energy_ft"], rows)

    schema = {
        "trajectory.csv": traj_cols,
        "iterations.csv": ["step", "n", "error"],
        "residuals.csv": ["step", "r_tank_ft", "r_mass_cfs", "r_energy_ft"],
        "units": {"head": "ft", "flow": flow_unit, "speed": "relative"},
        "digits": 9,
    }
    path = out / "schema.json"
    path.write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")
    manifest["schema.json"] = path
    return manifest


def read_trajectory_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Columns and data of an emitted trajectory file (for round trips)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hydrogp",
        description="Pump-speed scheduling for water networks via "
        "geometric-programming MPC",
    )
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="closed-loop MPC simulation")
    run.add_argument("--network", required=True, help="network file (INP subset)")
    run.add_argument("--demands", help="demand CSV (step,junction,value)")
    run.add_argument("--horizon", type=int, default=10, help="prediction steps")
    run.add_argument("--base", type=float, default=1.005, help="exponential base")
    run.add_argument("--threshold", type=float, default=0.5, help="SCA stop error")
    run.add_argument("--max-iter", type=int, default=40, help="SCA iteration cap")
    run.add_argument("--dt", type=float, default=3600.0, help="sampling step, seconds")
    run.add_argument("--t-final", type=int, default=24, help="simulation steps")
    run.add_argument("--plant", choices=("nominal", "oracle"), default="nominal")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--units", choices=("gpm", "cfs"), default="gpm",
                     help="unit system of input/output files")
    run.add_argument("--flow-bound", type=float, default=1000.0,
                     help="symmetric link flow box, GPM")
    run.add_argument("--flow-scale", type=float, default=60.0,
                     help="hat-space flow scaling (SCA damping)")

    wfp = sub.add_parser("wfp", help="one steady-state water-flow solve")
    wfp.add_argument("--network", required=True)
    wfp.add_argument("--demands", help="demand CSV; first step row is used")
    wfp.add_argument("--step", type=int, default=0, help="demand row to use")
    wfp.add_argument("--speed", type=float, default=1.0,
                     help="relative speed applied to every pump")
    wfp.add_argument("--flow-bound", type=float, default=1000.0)
    wfp.add_argument("--units", choices=("gpm", "cfs"), default="gpm")
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code.

    0 on success, 2 on input/parse problems, 3 on solver failures.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0].startswith("-"):
        argv = ["run"] + argv
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2

    try:
        net = load_network(args.network, flow_bound_gpm=args.flow_bound)
    except FileNotFoundError as exc:
        print(f"error: network file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (HydrogpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    patterns = net.patterns
    if args.demands:
        try:
            patterns = read_demand_csv(args.demands, io_units=args.units)
        except FileNotFoundError as exc:
            print(f"error: demand file not found: {exc.filename}", file=sys.stderr)
            return 2
        except HydrogpError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        unknown = set(patterns.series) - set(net.junction_ids)
        if unknown:
            print(f"error: demand rows for unknown junctions {sorted(unknown)}",
                  file=sys.stderr)
            return 2

    diagnostics = validate(net)
    for diag in diagnostics:
        print(f"warning: {diag.kind}: {diag.message}", file=sys.stderr)

    if args.command == "wfp":
        return _run_wfp(net, patterns, args)

    cfg = SCAConfig(
        base=args.base,
        threshold=args.threshold,
        max_iter=args.max_iter,
        horizon=args.horizon,
        dt=args.dt,
        flow_scale=args.flow_scale,
    )
    try:
        traj = run_mpc(net, args.t_final, cfg, patterns=patterns, plant=args.plant)
    except HydrogpError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return 3
    manifest = emit_results(traj, args.out, io_units=args.units)

    x_sf = np.array([net.tank(t).safety_head for t in net.tank_ids])
    gamma1, gamma2 = evaluate_objectives(traj, x_sf)
    print(f"wrote {len(manifest)} files to {args.out}")
    print(
        f"steps={traj.n_steps} iterations={sum(traj.iterations)} "
        f"storage-deficit={gamma1.sum():.6g} control-change={gamma2.sum():.6g}"
    )
    return 0


def _run_wfp(net: Network, patterns: DemandPattern, args) -> int:
    from .hydraulics import solve_wfp_newton

    mats = incidence_matrices(net, 3600.0)
    demands = patterns.at(list(net.junction_ids), args.step)
    speeds = np.full(net.n_pumps, args.speed)
    try:
        state = solve_wfp_newton(
            net, net.initial_tank_heads(), speeds, demands, mats=mats
        )
    except HydrogpError as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return 3

    def fl(v: float) -> str:
        return _fmt(units.cfs_to_gpm(v) if args.units == "gpm" else v)

    flow_unit = "GPM" if args.units == "gpm" else "cfs"
    for i, jid in enumerate(net.junction_ids):
        print(f"junction {jid}: head {_fmt(state.l[i])} ft")
    for t, tid in enumerate(net.tank_ids):
        print(f"tank {tid}: head {_fmt(state.x[t])} ft")
    for i, pid in enumerate(net.pipe_ids):
        print(f"pipe {pid}: flow {fl(state.v[i])} {flow_unit}")
    for j, mid in enumerate(net.pump_ids):
        print(f"pump {mid}: flow {fl(state.u[j])} {flow_unit} speed {args.speed}")
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
