"""Command-line pipeline driver and design-space exploration harness.

Subcommands: gen (spec -> graph + RTL + config map, structurally
verified), pnr (pack/place/route an application), bitstream, sim
(bitstream vs. routed expectation), verify (exhaustive connection
sweep), dse (sweep architecture knobs, emit CSV).

Exit codes: 2 spec parse error, 3 graph validation, 4 structural
mismatch, 5 placement capacity, 6 routing failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import io as _io
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import bench
from .appgraph import parse_app, pack
from .arch import (
    ArchSpec,
    PortConnPolicy,
    SBTopology,
    create_uniform_interconnect,
    parse_arch_spec,
)
from .bitstream import (
    configure,
    exhaustive_sweep,
    functional_sim,
    generate_bitstream,
    parse_bitstream,
    serialize_bitstream,
)
from .errors import (
    FabricError,
    InsufficientCapacity,
    ParseError,
    RoutingFailed,
    UnroutableSink,
)
from .ir import RoutingGraph, Side, deserialize_graph, serialize_graph
from .netlist import (
    area_proxy,
    emit_config_map,
    emit_rtl,
    lower_ready_valid,
    lower_static,
    parse_config_map,
    verify_structure,
)
from .place import (
    FabricInfo,
    PlaceParams,
    alpha_sweep,
    assign_io_sites,
    detailed_place,
    global_place,
    legalize,
    parse_placement,
    serialize_placement,
)
from .route import (
    RouteParams,
    parse_routes,
    route,
    serialize_routes,
)

log = logging.getLogger("cgrafab")

EXIT_SPEC_PARSE = 2
EXIT_VALIDATION = 3
EXIT_STRUCTURAL = 4
EXIT_CAPACITY = 5
EXIT_ROUTING = 6

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = [
    "schema", "topology", "tracks", "sb_out_sides", "cb_sides", "fifo",
    "reg_density", "benchmark", "seed", "success", "critical_path",
    "wall_ms", "mux_inputs", "sb_mux_inputs", "cb_mux_inputs",
    "config_bits", "storage_bits", "gate_estimate",
]

# side sets for the port-connection sweep: east removed first, then south
SIDES_BY_COUNT = {
    4: (Side.North, Side.East, Side.South, Side.West),
    3: (Side.North, Side.South, Side.West),
    2: (Side.North, Side.West),
}


def _setup_logging():
    level = os.environ.get("CGRAFAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _read(path: str) -> str:
    return Path(path).read_text()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _load_app(name_or_path: str):
    if name_or_path in bench.BENCHMARKS:
        return bench.benchmark(name_or_path), name_or_path
    text = _read(name_or_path)
    return parse_app(text), Path(name_or_path).stem


# --- gen -----------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        spec = parse_arch_spec(_read(args.spec))
    except (ParseError, FabricError, OSError) as exc:
        print(f"error: spec: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    try:
        g = create_uniform_interconnect(spec)
        diags = g.validate()
        if diags:
            for d in diags:
                print(f"error: {d}", file=sys.stderr)
            return EXIT_VALIDATION
    except FabricError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.rv:
        netlist = lower_ready_valid(g, args.fifo_mode)
    else:
        netlist = lower_static(g)
    report = verify_structure(g, netlist)
    out = Path(args.out_dir)
    _write(out / "fabric.graph", serialize_graph(g))
    _write(out / "fabric.rtl", emit_rtl(netlist))
    _write(out / "fabric.cfgmap", emit_config_map(netlist.config_map))
    print(report.summary())
    if not report.passed:
        return EXIT_STRUCTURAL
    m = area_proxy(netlist)
    print(f"generated {g.width}x{g.height} fabric: {g.num_nodes()} nodes, "
          f"{g.num_edges()} edges, {m.config_bits} config bits")
    return 0


# --- pnr -----------------------------------------------------------------------


def run_pnr(g: RoutingGraph, packed, seed: int, alpha: float, gamma: float,
            alphas: Optional[Sequence[float]] = None,
            route_params: Optional[RouteParams] = None):
    """Shared pack->place->route flow. Returns (placement, routes,
    timing, used_alpha)."""
    fabric = FabricInfo.from_graph(g)
    params = PlaceParams(seed=seed, alpha=alpha, gamma=gamma)
    anchors = assign_io_sites(packed, fabric)
    gp = global_place(packed, fabric, params, anchors)
    legal = legalize(gp.positions, packed, fabric, anchors)
    rp = route_params or RouteParams(seed=seed)

    if alphas:
        def route_fn(placement):
            routes, timing = route(g, placement, packed, rp)
            return (routes, timing), timing.critical_path
        result = alpha_sweep(legal, packed, fabric, route_fn, alphas, params)
        routes, timing = result.route_result
        return result.placement, routes, timing, result.alpha
    placement = detailed_place(legal, packed, fabric, params)
    routes, timing = route(g, placement, packed, rp)
    return placement, routes, timing, alpha


def _timing_report(timing) -> str:
    lines = [f"critical_path {timing.critical_path}"]
    for key in sorted(timing.net_slack):
        lines.append(f"net {key} slack {timing.net_slack[key]}")
    return "\n".join(lines) + "\n"


def cmd_pnr(args) -> int:
    try:
        g = deserialize_graph(_read(args.graph)).freeze()
        app, app_name = _load_app(args.app)
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    packed = pack(app)
    alphas = [float(a) for a in args.alpha_sweep.split(",")] \
        if args.alpha_sweep else None
    try:
        placement, routes, timing, used_alpha = run_pnr(
            g, packed, args.seed, args.alpha, args.gamma, alphas)
    except InsufficientCapacity as exc:
        print(f"error: capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (RoutingFailed, UnroutableSink, FabricError) as exc:
        if isinstance(exc, RoutingFailed):
            print(f"error: routing failed after {exc.iterations} "
                  f"iterations ({exc.remaining_overuse} overused)",
                  file=sys.stderr)
        else:
            print(f"error: routing: {exc}", file=sys.stderr)
        return EXIT_ROUTING
    out = Path(args.out_dir)
    _write(out / f"{app_name}.place", serialize_placement(placement))
    _write(out / f"{app_name}.route", serialize_routes(routes))
    _write(out / f"{app_name}.timing", _timing_report(timing))
    print(f"pnr ok: alpha={used_alpha} critical_path={timing.critical_path}")
    return 0


# --- bitstream / sim --------------------------------------------------------------


def cmd_bitstream(args) -> int:
    try:
        g = deserialize_graph(_read(args.graph)).freeze()
        config_map = parse_config_map(_read(args.cfgmap))
        app, app_name = _load_app(args.app)
        placement = parse_placement(_read(args.place))
        routes = parse_routes(_read(args.route))
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    packed = pack(app)
    try:
        bs = generate_bitstream(g, routes, config_map, packed, placement)
    except FabricError as exc:
        print(f"error: bitstream: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    _write(Path(args.out), serialize_bitstream(bs))
    print(f"bitstream: {len(bs.words)} words -> {args.out}")
    return 0


def cmd_sim(args) -> int:
    try:
        g = deserialize_graph(_read(args.graph)).freeze()
        config_map = parse_config_map(_read(args.cfgmap))
        bs = parse_bitstream(_read(args.bitstream))
        routes = parse_routes(_read(args.route))
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    fabric = configure(g, config_map, bs)
    failures = 0
    for key in sorted(routes.trees):
        tree = routes.trees[key]
        result = functional_sim(fabric, {tree.root: key})
        for sink_ep in sorted(tree.sink_nodes):
            got = result.get(tree.sink_nodes[sink_ep])
            if got is None or got[0] != key:
                print(f"FAIL {key} -> {sink_ep}")
                failures += 1
    total = sum(len(t.sink_nodes) for t in routes.trees.values())
    print(f"sim: {total - failures}/{total} net sinks received their token")
    return 1 if failures else 0


def cmd_verify(args) -> int:
    try:
        g = deserialize_graph(_read(args.graph)).freeze()
        config_map = parse_config_map(_read(args.cfgmap))
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    report = exhaustive_sweep(g, config_map)
    print(report.summary())
    return 0 if report.passed else 1


# --- dse -----------------------------------------------------------------------


@dataclass(frozen=True)
class DseCell:
    topology: str
    tracks: int
    sb_out_sides: int
    cb_sides: int
    fifo: str
    reg_density: float


@dataclass
class DseSweep:
    width: int = 8
    height: int = 8
    bitwidth: int = 16
    topologies: Tuple[str, ...] = ("wilton",)
    tracks: Tuple[int, ...] = (5,)
    sb_out_sides: Tuple[int, ...] = (4,)
    cb_sides: Tuple[int, ...] = (4,)
    fifos: Tuple[str, ...] = ("none",)
    reg_densities: Tuple[float, ...] = (0.0,)
    benchmarks: Tuple[str, ...] = ("pipeline", "tree", "stencil", "shuffle")
    seeds: Tuple[int, ...] = (1,)
    alpha: float = 2.0
    gamma: float = 1.0

    def cells(self) -> List[DseCell]:
        out = []
        for topo in self.topologies:
            for tr in self.tracks:
                for sb in self.sb_out_sides:
                    for cb in self.cb_sides:
                        for fifo in self.fifos:
                            for rd in self.reg_densities:
                                out.append(DseCell(topo, tr, sb, cb, fifo, rd))
        return out


def parse_sweep_spec(text: str) -> DseSweep:
    cp = configparser.ConfigParser()
    try:
        cp.read_file(_io.StringIO(text))
    except configparser.Error as exc:
        raise ParseError(f"bad sweep spec: {exc.message.splitlines()[0]}",
                         line=getattr(exc, "lineno", None))

    def split(section, key, default, conv):
        if not cp.has_option(section, key):
            return default
        return tuple(conv(v.strip())
                     for v in cp.get(section, key).split(","))

    sweep = DseSweep()
    if cp.has_section("base"):
        sweep.width = cp.getint("base", "width", fallback=8)
        sweep.height = cp.getint("base", "height", fallback=8)
        sweep.bitwidth = cp.getint("base", "bitwidth", fallback=16)
    if cp.has_section("axes"):
        sweep.topologies = split("axes", "topology", sweep.topologies, str)
        sweep.tracks = split("axes", "tracks", sweep.tracks, int)
        sweep.sb_out_sides = split("axes", "sb_out_sides",
                                   sweep.sb_out_sides, int)
        sweep.cb_sides = split("axes", "cb_sides", sweep.cb_sides, int)
        sweep.fifos = split("axes", "fifo", sweep.fifos, str)
        sweep.reg_densities = split("axes", "reg_density",
                                    sweep.reg_densities, float)
    if cp.has_section("run"):
        sweep.benchmarks = split("run", "benchmarks", sweep.benchmarks, str)
        sweep.seeds = split("run", "seeds", sweep.seeds, int)
        sweep.alpha = cp.getfloat("run", "alpha", fallback=sweep.alpha)
        sweep.gamma = cp.getfloat("run", "gamma", fallback=sweep.gamma)
    return sweep


def arch_for_cell(sweep: DseSweep, cell: DseCell) -> ArchSpec:
    return ArchSpec(
        width=sweep.width, height=sweep.height,
        layers=((sweep.bitwidth, cell.tracks),),
        sb_topology=SBTopology(cell.topology),
        reg_density=cell.reg_density,
        port_policy=PortConnPolicy(
            cb_sides=SIDES_BY_COUNT[cell.cb_sides],
            sb_out_sides=SIDES_BY_COUNT[cell.sb_out_sides]))


def area_metrics_for_cell(sweep: DseSweep, cell: DseCell):
    g = create_uniform_interconnect(arch_for_cell(sweep, cell))
    if cell.fifo == "none":
        netlist = lower_static(g)
    else:
        netlist = lower_ready_valid(g, cell.fifo)
    return g, area_proxy(netlist)


def run_dse_job(sweep: DseSweep, cell: DseCell, bench_name: str,
                seed: int, graph: Optional[RoutingGraph] = None) -> dict:
    if graph is None:
        graph = create_uniform_interconnect(arch_for_cell(sweep, cell))
    packed = pack(bench.benchmark(bench_name))
    row = dict(schema=CSV_SCHEMA_VERSION, topology=cell.topology,
               tracks=cell.tracks, sb_out_sides=cell.sb_out_sides,
               cb_sides=cell.cb_sides, fifo=cell.fifo,
               reg_density=cell.reg_density, benchmark=bench_name,
               seed=seed)
    t0 = time.monotonic()
    try:
        _, _, timing, _ = run_pnr(graph, packed, seed, sweep.alpha,
                                  sweep.gamma)
        row["success"] = 1
        row["critical_path"] = timing.critical_path
        row["wall_ms"] = round((time.monotonic() - t0) * 1000.0, 1)
    except FabricError as exc:
        log.info("dse %s/%s/seed%d failed: %s", cell, bench_name, seed, exc)
        row["success"] = 0
        row["critical_path"] = ""
        row["wall_ms"] = ""
    return row


def _dse_worker(payload):
    sweep, cell, bench_name, seed = payload
    return run_dse_job(sweep, cell, bench_name, seed)


def run_sweep(sweep: DseSweep, jobs: int = 1) -> List[dict]:
    cells = sweep.cells()
    area: Dict[DseCell, object] = {}
    graphs: Dict[DseCell, RoutingGraph] = {}
    for cell in cells:
        g, m = area_metrics_for_cell(sweep, cell)
        graphs[cell] = g
        area[cell] = m
    work = [(sweep, cell, b, s) for cell in cells
            for b in sweep.benchmarks for s in sweep.seeds]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_dse_worker, work))
    else:
        rows = [run_dse_job(sweep, cell, b, s, graphs[cell])
                for (_, cell, b, s) in work]
    for row in rows:
        cell = DseCell(row["topology"], row["tracks"], row["sb_out_sides"],
                       row["cb_sides"], row["fifo"], row["reg_density"])
        m = area[cell]
        row.update(mux_inputs=m.mux_input_count,
                   sb_mux_inputs=m.sb_mux_input_count,
                   cb_mux_inputs=m.cb_mux_input_count,
                   config_bits=m.config_bits,
                   storage_bits=m.storage_bits,
                   gate_estimate=m.gate_count_estimate)
    rows.sort(key=lambda r: (r["topology"], r["tracks"], r["sb_out_sides"],
                             r["cb_sides"], r["fifo"], r["reg_density"],
                             r["benchmark"], r["seed"]))
    return rows


def rows_to_csv(rows: List[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row.get(c, "")) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> List[dict]:
    lines = [l for l in text.splitlines() if l.strip()]
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def summarize_csv(rows: List[dict]) -> str:
    """Median critical path per knob tuple, successes only."""
    import statistics
    groups: Dict[tuple, List[float]] = {}
    for r in rows:
        key = (r["topology"], r["tracks"], r["sb_out_sides"], r["cb_sides"],
               r["fifo"], r["reg_density"])
        if str(r["success"]) == "1" and r["critical_path"] != "":
            groups.setdefault(key, []).append(float(r["critical_path"]))
    lines = ["topology tracks sb cb fifo regd n median_cp"]
    for key in sorted(groups):
        vals = groups[key]
        lines.append(" ".join(str(k) for k in key)
                     + f" {len(vals)} {statistics.median(vals)}")
    return "\n".join(lines) + "\n"


def cmd_dse(args) -> int:
    try:
        sweep = parse_sweep_spec(_read(args.sweep)) if args.sweep \
            else DseSweep()
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC_PARSE
    rows = run_sweep(sweep, jobs=args.jobs)
    csv_text = rows_to_csv(rows)
    _write(Path(args.out), csv_text)
    print(summarize_csv(parse_csv(csv_text)), end="")
    n_fail = sum(1 for r in rows if r["success"] == 0)
    print(f"dse: {len(rows)} runs, {n_fail} failed -> {args.out}")
    return 0


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgrafab",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate fabric graph, RTL, config map")
    g.add_argument("--spec", required=True)
    g.add_argument("--out-dir", default="out")
    g.add_argument("--rv", action="store_true",
                   help="ready-valid fabric instead of static")
    g.add_argument("--fifo-mode", choices=("split", "full2"),
                   default="split")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("pnr", help="pack, place, and route an application")
    r.add_argument("--graph", required=True)
    r.add_argument("--app", required=True,
                   help="app netlist file or bundled benchmark name")
    r.add_argument("--out-dir", default="out")
    r.add_argument("--seed", type=int, default=1)
    r.add_argument("--alpha", type=float, default=2.0)
    r.add_argument("--gamma", type=float, default=1.0)
    r.add_argument("--alpha-sweep", default=None,
                   help="comma list of alphas; best post-route wins")
    r.set_defaults(func=cmd_pnr)

    b = sub.add_parser("bitstream", help="encode routes as config words")
    b.add_argument("--graph", required=True)
    b.add_argument("--cfgmap", required=True)
    b.add_argument("--app", required=True)
    b.add_argument("--place", required=True)
    b.add_argument("--route", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bitstream)

    s = sub.add_parser("sim", help="simulate a bitstream against routes")
    s.add_argument("--graph", required=True)
    s.add_argument("--cfgmap", required=True)
    s.add_argument("--bitstream", required=True)
    s.add_argument("--route", required=True)
    s.set_defaults(func=cmd_sim)

    v = sub.add_parser("verify", help="exhaustive connection sweep")
    v.add_argument("--graph", required=True)
    v.add_argument("--cfgmap", required=True)
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("dse", help="design-space sweep to CSV")
    d.add_argument("--sweep", default=None,
                   help="sweep spec file; defaults to a small demo sweep")
    d.add_argument("--out", default="dse.csv")
    d.add_argument("--jobs", type=int, default=1)
    d.set_defaults(func=cmd_dse)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
