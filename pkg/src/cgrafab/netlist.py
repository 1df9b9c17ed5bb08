"""Lowering from the routing graph to a structural netlist.

Lowering rules: a node with two or more incoming edges becomes a mux
whose select bits live in a per-tile config register; a single incoming
edge becomes a plain wire; register nodes become registers (or FIFO
registers on the ready-valid fabric); port nodes attach to a core shell
instance. Undriven signals are tied to a shared constant-zero.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    InvalidGraph,
    MalformedOneHot,
    ParseError,
    UnknownPrimitive,
)
from .ir import IrNode, NodeId, NodeKind, RoutingGraph, SBDir, Side

log = logging.getLogger(__name__)

CONFIG_WORD_BITS = 32
CORE_FEATURE = 15

# Gate-estimate constants: gates per stored bit and per ready-join gate.
GATES_PER_STORAGE_BIT = 8
GATES_PER_JOIN_GATE = 1

# Storage bits per register slot, by primitive flavor. A plain register
# stores the word; a split FIFO register adds a valid bit and a role
# latch; a self-contained depth-2 FIFO doubles the word storage.
def _storage_bits(width: int, primitive: str, mode: Optional[str]) -> int:
    if primitive == "REG":
        return width
    if primitive == "FIFO_REG":
        if mode == "full2":
            return 2 * width + 2
        return width + 2
    return 0


PRIMITIVES = ("MUX", "REG", "FIFO_REG", "CFG_REG", "CORE", "CONST")

_SIDE_LETTER = {Side.North: "n", Side.East: "e", Side.South: "s", Side.West: "w"}


def node_tag(n: IrNode) -> str:
    """Stable, name-scheme identity of a node inside the netlist."""
    base = f"x{n.x:02d}y{n.y:02d}b{n.bitwidth}"
    if n.kind is NodeKind.Port:
        return f"{base}_p_{n.port_name}"
    s = _SIDE_LETTER[n.side]
    if n.kind is NodeKind.SwitchBox:
        io = "i" if n.io is SBDir.Incoming else "o"
        return f"{base}_sb{io}{s}t{n.track}"
    if n.kind is NodeKind.Register:
        return f"{base}_rg{s}t{n.track}"
    return f"{base}_rm{s}t{n.track}"


def tile_instance(x: int, y: int, role: str) -> str:
    return f"core_x{x:02d}y{y:02d}"


def cfg_instance(x: int, y: int, feature: int, reg: int) -> str:
    return f"cfg_x{x:02d}y{y:02d}_f{feature}_r{reg}"


@dataclass(frozen=True)
class Instance:
    name: str
    primitive: str
    params: Tuple[Tuple[str, str], ...] = ()
    tile: Optional[Tuple[int, int]] = None

    def param(self, key: str, default: Optional[str] = None) -> Optional[str]:
        for k, v in self.params:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class ConfigField:
    x: int
    y: int
    feature: int
    reg: int
    offset: int
    width: int
    target: str           # "<instance>.<port>" the field drives
    meaning: str          # MuxSelect | FifoMode | SplitFifoRole | CoreConfig

    def address(self) -> int:
        return ((self.x & 0xFF) << 24) | ((self.y & 0xFF) << 16) | \
               ((self.feature & 0xFF) << 8) | (self.reg & 0xFF)


class StructNetlist:
    def __init__(self):
        self.instances: Dict[str, Instance] = {}
        self.wires: Dict[str, List[str]] = {}
        self.config_map: List[ConfigField] = []

    def add_instance(self, inst: Instance) -> Instance:
        existing = self.instances.get(inst.name)
        if existing is not None:
            if existing != inst:
                raise InvalidGraph(f"instance {inst.name} redefined")
            return existing
        self.instances[inst.name] = inst
        return inst

    def add_wire(self, driver: str, sink: str) -> None:
        sinks = self.wires.setdefault(driver, [])
        if sink in sinks:
            raise InvalidGraph(f"duplicate sink {sink} on {driver}")
        sinks.append(sink)

    def wire_pairs(self) -> set:
        return {(d, s) for d, sinks in self.wires.items() for s in sinks}

    def muxes(self) -> List[Instance]:
        return [i for i in self.instances.values() if i.primitive == "MUX"]

    def same_structure(self, other: "StructNetlist") -> bool:
        """Instance multiset and wire connectivity equality; the config
        map travels in a sidecar file and is compared separately."""
        if set(self.instances) != set(other.instances):
            return False
        for name, inst in self.instances.items():
            o = other.instances[name]
            if (inst.primitive, dict(inst.params), inst.tile) != \
                    (o.primitive, dict(o.params), o.tile):
                return False
        return self.wire_pairs() == other.wire_pairs()


# --- lowering ------------------------------------------------------------------


class _Lowering:
    def __init__(self, g: RoutingGraph, ready_valid: bool, fifo_mode: str):
        self.g = g
        self.ready_valid = ready_valid
        self.fifo_mode = fifo_mode
        self.n = StructNetlist()
        self._driver_cache: Dict[NodeId, str] = {}
        self._consts_used: set = set()

    # Signal source endpoint of a node, following single-input chains.
    def driver_of(self, nid: NodeId, _stack: Optional[set] = None) -> str:
        cached = self._driver_cache.get(nid)
        if cached is not None:
            return cached
        node = self.g.node(nid)
        fan_in = self.g.fan_in(nid)
        if node.kind is NodeKind.Register:
            ep = f"reg_{node_tag(node)}.out"
        elif node.kind is NodeKind.Port and not fan_in:
            ep = f"{tile_instance(node.x, node.y, '')}.{node.port_name}"
        elif len(fan_in) >= 2:
            ep = f"mux_{node_tag(node)}.out"
        elif len(fan_in) == 1:
            stack = _stack or set()
            if nid in stack:
                raise InvalidGraph(f"combinational alias cycle at {node!r}")
            stack.add(nid)
            ep = self.driver_of(fan_in[0], stack)
        else:
            ep = self.const_endpoint(node.bitwidth)
        self._driver_cache[nid] = ep
        return ep

    def valid_of(self, endpoint: str) -> str:
        """Valid-channel counterpart of a data endpoint."""
        inst, port = endpoint.split(".", 1)
        if inst.startswith("mux_"):
            return f"v{inst}.{port}"
        if inst.startswith("reg_"):
            return f"{inst}.vout"
        if inst.startswith("core_"):
            return f"{inst}.v_{port}"
        if inst.startswith("const0_"):
            return f"{self.const_endpoint(1)}"
        raise InvalidGraph(f"no valid counterpart for {endpoint}")

    def const_endpoint(self, bitwidth: int) -> str:
        name = f"const0_b{bitwidth}"
        if name not in self._consts_used:
            self._consts_used.add(name)
            self.n.add_instance(Instance(name, "CONST",
                                         (("w", str(bitwidth)),), None))
        return f"{name}.out"

    def run(self) -> StructNetlist:
        g, n = self.g, self.n
        diags = g.validate()
        if diags:
            raise InvalidGraph("graph does not validate: "
                               + "; ".join(str(d) for d in diags[:3]))
        layer_index = {bw: i for i, bw in enumerate(g.bitwidths())}

        # Core shells: one per tile that hosts port nodes.
        tile_ports: Dict[Tuple[int, int], List[IrNode]] = {}
        for node in g.nodes():
            if node.kind is NodeKind.Port:
                tile_ports.setdefault((node.x, node.y), []).append(node)
        for (x, y), ports in sorted(tile_ports.items()):
            role = ports[0].port_name.split("_", 1)[0]
            n.add_instance(Instance(tile_instance(x, y, role), "CORE",
                                    (("name", role),), (x, y)))

        if self.ready_valid and not any(
                node.kind is NodeKind.Register for node in g.nodes()):
            log.warning("NoRegisters: ready-valid fabric has no register "
                        "nodes; cyclic backpressure cannot be buffered")

        # Per-tile config packing state: (x, y, feature) -> (reg, offset).
        pack_state: Dict[Tuple[int, int, int], Tuple[int, int]] = {}

        def alloc_field(x, y, feature, width, target, meaning):
            reg, off = pack_state.get((x, y, feature), (0, 0))
            if off + width > CONFIG_WORD_BITS:
                reg, off = reg + 1, 0
            fld = ConfigField(x, y, feature, reg, off, width, target, meaning)
            pack_state[(x, y, feature)] = (reg, off + width)
            n.config_map.append(fld)
            cfg = cfg_instance(x, y, feature, reg)
            n.add_instance(Instance(cfg, "CFG_REG",
                                    (("b", str(CONFIG_WORD_BITS)),), (x, y)))
            n.add_wire(f"{cfg}.q{fld.offset}w{width}", target)
            return fld

        # Main pass in canonical node order: muxes, registers, port hookups.
        for node in g.nodes():
            fan_in = g.fan_in(node.id)
            k = len(fan_in)
            tag = node_tag(node)
            feature = layer_index[node.bitwidth]
            tile = (node.x, node.y)

            if node.kind is NodeKind.Register:
                if k != 1:
                    raise InvalidGraph(f"register {node!r} needs exactly one "
                                       f"driver, has {k}")
                if self.ready_valid:
                    prim, params = "FIFO_REG", (("mode", self.fifo_mode),
                                                ("w", str(node.bitwidth)))
                else:
                    prim, params = "REG", (("w", str(node.bitwidth)),)
                inst = f"reg_{tag}"
                n.add_instance(Instance(inst, prim, params, tile))
                n.add_wire(self.driver_of(fan_in[0]), f"{inst}.in")
                if self.ready_valid:
                    n.add_wire(self.valid_of(self.driver_of(fan_in[0])),
                               f"{inst}.vin")
                    alloc_field(node.x, node.y, feature, 1,
                                f"{inst}.mode", "FifoMode")
                    if self.fifo_mode == "split":
                        alloc_field(node.x, node.y, feature, 1,
                                    f"{inst}.role", "SplitFifoRole")
                continue

            if k >= 2:
                mux = f"mux_{tag}"
                sel_bits = max(1, math.ceil(math.log2(k)))
                n.add_instance(Instance(
                    mux, "MUX", (("k", str(k)), ("w", str(node.bitwidth))),
                    tile))
                for i, src in enumerate(fan_in):
                    n.add_wire(self.driver_of(src), f"{mux}.in{i}")
                fld = alloc_field(node.x, node.y, feature, sel_bits,
                                  f"{mux}.sel", "MuxSelect")
                if self.ready_valid:
                    vmux = f"v{mux}"
                    n.add_instance(Instance(
                        vmux, "MUX", (("k", str(k)), ("w", "1")), tile))
                    for i, src in enumerate(fan_in):
                        n.add_wire(self.valid_of(self.driver_of(src)),
                                   f"{vmux}.in{i}")
                    # shared select: same config slice drives both muxes
                    cfg = cfg_instance(fld.x, fld.y, fld.feature, fld.reg)
                    n.add_wire(f"{cfg}.q{fld.offset}w{fld.width}",
                               f"{vmux}.sel")

            if node.kind is NodeKind.Port and k >= 1:
                core = tile_instance(node.x, node.y, "")
                n.add_wire(self.driver_of(node.id),
                           f"{core}.{node.port_name}")
                if self.ready_valid:
                    n.add_wire(self.valid_of(self.driver_of(node.id)),
                               f"{core}.v_{node.port_name}")

        # Core config fields for packed constants and input registers.
        for (x, y), ports in sorted(tile_ports.items()):
            core = tile_instance(x, y, "")
            for p in sorted(ports, key=lambda q: q.port_name):
                if g.fan_in(p.id):
                    alloc_field(x, y, CORE_FEATURE, 1,
                                f"{core}.cfg_{p.port_name}_const_en",
                                "CoreConfig")
                    alloc_field(x, y, CORE_FEATURE, p.bitwidth,
                                f"{core}.cfg_{p.port_name}_const",
                                "CoreConfig")
                    alloc_field(x, y, CORE_FEATURE, 1,
                                f"{core}.cfg_{p.port_name}_registered",
                                "CoreConfig")

        # Split-FIFO control chaining between adjacent registers.
        if self.ready_valid and self.fifo_mode == "split":
            self._chain_split_fifos()

        self.n.config_map.sort(key=lambda f: (f.y, f.x, f.feature, f.reg,
                                              f.offset))
        return n

    def _chain_split_fifos(self):
        """Pair registers on the same (side, track) in adjacent tiles:
        the upstream register exports its FIFO control into the
        downstream one. Chains are capped at length two by pairing on
        position parity along the data direction."""
        g = self.g
        vec = {Side.North: (0, -1), Side.East: (1, 0),
               Side.South: (0, 1), Side.West: (-1, 0)}
        regs = {(r.x, r.y, r.bitwidth, r.side, r.track): r
                for r in g.nodes() if r.kind is NodeKind.Register}
        for key in sorted(regs, key=lambda k: (k[1], k[0], k[2], k[3].value,
                                               k[4])):
            head = regs[key]
            dx, dy = vec[head.side]
            along = head.x if dx else head.y
            if along % 2 != 0:
                continue
            tail = regs.get((head.x + dx, head.y + dy, head.bitwidth,
                             head.side, head.track))
            if tail is None:
                continue
            self.n.add_wire(f"reg_{node_tag(head)}.ctl_out",
                            f"reg_{node_tag(tail)}.ctl_in")


def lower_static(g: RoutingGraph) -> StructNetlist:
    """Lower to the fully static mesh: muxes, plain registers, wires."""
    return _Lowering(g, ready_valid=False, fifo_mode="none").run()


def lower_ready_valid(g: RoutingGraph, fifo_mode: str = "split") -> StructNetlist:
    """Lower to the statically configured ready-valid fabric: every data
    mux gains a 1-bit valid mux sharing its select bits, registers become
    FIFO registers, and (in split mode) adjacent registers share FIFO
    control across the tile boundary."""
    if fifo_mode not in ("full2", "split"):
        raise ValueError(f"fifo_mode must be full2 or split, got {fifo_mode!r}")
    return _Lowering(g, ready_valid=True, fifo_mode=fifo_mode).run()


# --- ready joining -----------------------------------------------------------------


def ready_join(sel_onehots: Sequence[Sequence[int]],
               readies: Sequence[int],
               src_bits: Sequence[int]) -> int:
    """Join per-direction ready signals for one source using the one-hot
    mux select vectors: AND over directions of (NOT sel_oh[src] OR ready).
    A direction that does not route this source contributes 1."""
    if len(sel_onehots) != len(readies) or len(readies) != len(src_bits):
        raise ValueError("sel_onehots, readies, src_bits must align")
    result = 1
    for oh, ready, bit in zip(sel_onehots, readies, src_bits):
        if sum(oh) > 1:
            raise MalformedOneHot(f"select vector {list(oh)} has multiple "
                                  "bits set")
        routed = oh[bit]
        result &= (1 - routed) | (ready & 1)
    return result


# --- text emission ------------------------------------------------------------------
#
# Structural subset, one top-level block per tile plus "top":
#   module tile_x00_y01
#     inst <name> <PRIMITIVE> [key=value ...]
#     wire <driver>.<port> -> <sink>.<port>[, <sink>.<port> ...]
#   endmodule
# Instances print inside their tile's module; wires print inside the
# module of their driver tile (top when the driver is tile-less or the
# wire crosses tiles). '//' starts a comment.

def _wire_module(n: StructNetlist, driver: str, sinks: List[str]):
    def tile_of(ep):
        inst = n.instances.get(ep.split(".", 1)[0])
        return inst.tile if inst is not None else None
    t = tile_of(driver)
    if t is None:
        return None
    for s in sinks:
        if tile_of(s) != t:
            return None
    return t


def emit_rtl(n: StructNetlist) -> str:
    tiles = sorted({i.tile for i in n.instances.values() if i.tile is not None},
                   key=lambda t: (t[1], t[0]))
    by_tile_inst: Dict[Optional[tuple], List[Instance]] = {}
    for inst in n.instances.values():
        by_tile_inst.setdefault(inst.tile, []).append(inst)
    by_tile_wire: Dict[Optional[tuple], List[Tuple[str, List[str]]]] = {}
    for driver in sorted(n.wires):
        sinks = sorted(n.wires[driver])
        by_tile_wire.setdefault(_wire_module(n, driver, sinks), []) \
            .append((driver, sinks))

    lines = ["// cgrafab structural netlist v1"]

    def emit_module(name, key):
        lines.append(f"module {name}")
        for inst in sorted(by_tile_inst.get(key, []), key=lambda i: i.name):
            params = " ".join(f"{k}={v}" for k, v in sorted(inst.params))
            lines.append(f"  inst {inst.name} {inst.primitive}"
                         + (f" {params}" if params else ""))
        for driver, sinks in by_tile_wire.get(key, []):
            lines.append(f"  wire {driver} -> " + ", ".join(sinks))
        lines.append("endmodule")

    for t in tiles:
        emit_module(f"tile_x{t[0]:02d}_y{t[1]:02d}", t)
    emit_module("top", None)
    return "\n".join(lines) + "\n"


def parse_rtl(text: str) -> StructNetlist:
    n = StructNetlist()
    current: Optional[tuple] = None
    in_module = False
    saw_module = False
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("//", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "module":
            if len(tokens) != 2:
                raise ParseError("module expects a name", line=lineno)
            name = tokens[1]
            if name == "top":
                current = None
            elif name.startswith("tile_x"):
                try:
                    xs, ys = name[len("tile_"):].split("_")
                    current = (int(xs[1:]), int(ys[1:]))
                except ValueError:
                    raise ParseError(f"bad tile module name {name!r}",
                                     line=lineno)
            else:
                raise ParseError(f"unknown module {name!r}", line=lineno)
            in_module = True
            saw_module = True
        elif tokens[0] == "endmodule":
            if not in_module:
                raise ParseError("endmodule outside module", line=lineno)
            in_module = False
        elif tokens[0] == "inst":
            if not in_module or len(tokens) < 3:
                raise ParseError("malformed inst line", line=lineno)
            prim = tokens[2]
            if prim not in PRIMITIVES:
                raise UnknownPrimitive(f"line {lineno}: unknown primitive "
                                       f"{prim!r}")
            params = []
            for tok in tokens[3:]:
                if "=" not in tok:
                    raise ParseError(f"bad parameter {tok!r}", line=lineno)
                k, v = tok.split("=", 1)
                params.append((k, v))
            n.add_instance(Instance(tokens[1], prim, tuple(sorted(params)),
                                    current))
        elif tokens[0] == "wire":
            body = line[len("wire"):].strip()
            if "->" not in body:
                raise ParseError("wire expects '->'", line=lineno)
            driver, sinks = body.split("->", 1)
            driver = driver.strip()
            if "." not in driver:
                raise ParseError(f"bad endpoint {driver!r}", line=lineno)
            for sink in sinks.split(","):
                sink = sink.strip()
                if "." not in sink:
                    raise ParseError(f"bad endpoint {sink!r}", line=lineno)
                n.add_wire(driver, sink)
        else:
            raise ParseError(f"unknown directive {tokens[0]!r}", line=lineno)
    if in_module:
        raise ParseError("unterminated module", line=lineno)
    if not saw_module:
        raise ParseError("no module blocks found", line=1)
    return n


# --- config map sidecar ----------------------------------------------------------

def emit_config_map(fields: Iterable[ConfigField]) -> str:
    lines = ["# field x y feature reg offset width meaning target"]
    for f in fields:
        lines.append(f"field {f.x} {f.y} {f.feature} {f.reg} {f.offset} "
                     f"{f.width} {f.meaning} {f.target}")
    return "\n".join(lines) + "\n"


def parse_config_map(text: str) -> List[ConfigField]:
    fields = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "field" or len(tokens) != 9:
            raise ParseError("expected: field x y feature reg offset width "
                             "meaning target", line=lineno)
        try:
            x, y, feature, reg, off, width = map(int, tokens[1:7])
        except ValueError:
            raise ParseError("field coordinates must be integers", line=lineno)
        fields.append(ConfigField(x, y, feature, reg, off, width,
                                  tokens[8], tokens[7]))
    return fields


# --- structural verification --------------------------------------------------------


@dataclass
class VerifyReport:
    passed: bool = True
    findings: List[str] = field(default_factory=list)

    def add(self, finding: str):
        self.passed = False
        self.findings.append(finding)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        body = "".join(f"\n  {f}" for f in self.findings[:40])
        more = len(self.findings) - 40
        if more > 0:
            body += f"\n  ... {more} more"
        return f"verify_structure: {status} ({len(self.findings)} findings){body}"


def _is_ready_valid(n: StructNetlist) -> bool:
    return any(i.name.startswith("vmux_") or i.primitive == "FIFO_REG"
               for i in n.instances.values())


def verify_structure(g: RoutingGraph, n: StructNetlist) -> VerifyReport:
    """Compare a netlist's mux-expanded connectivity against the graph's
    lowering image under the deterministic naming scheme."""
    report = VerifyReport()
    rv = _is_ready_valid(n)
    expected = lower_ready_valid(g, _guess_fifo_mode(n)) if rv \
        else lower_static(g)

    exp_inst = {i.name: i for i in expected.instances.values()}
    got_inst = {i.name: i for i in n.instances.values()}
    for name in sorted(set(exp_inst) - set(got_inst)):
        report.add(f"missing instance {name} ({exp_inst[name].primitive})")
    for name in sorted(set(got_inst) - set(exp_inst)):
        report.add(f"extra instance {name} ({got_inst[name].primitive})")
    for name in sorted(set(exp_inst) & set(got_inst)):
        a, b = exp_inst[name], got_inst[name]
        if (a.primitive, dict(a.params)) != (b.primitive, dict(b.params)):
            report.add(f"instance {name}: expected {a.primitive} "
                       f"{dict(a.params)}, found {b.primitive} "
                       f"{dict(b.params)}")

    exp_wires = expected.wire_pairs()
    got_wires = n.wire_pairs()
    for d, s in sorted(exp_wires - got_wires):
        report.add(f"missing wire {d} -> {s}")
    for d, s in sorted(got_wires - exp_wires):
        report.add(f"extra wire {d} -> {s}")

    if rv:
        _check_valid_mirror(n, report)
    return report


def _guess_fifo_mode(n: StructNetlist) -> str:
    for i in n.instances.values():
        if i.primitive == "FIFO_REG":
            return i.param("mode", "split")
    return "split"


def _check_valid_mirror(n: StructNetlist, report: VerifyReport) -> None:
    """Valid-path connectivity must mirror data-path connectivity: every
    data mux has a 1-bit twin with the same arity, fed by the valid
    counterparts of the same sources, selected by the same config slice."""
    data_muxes = [i for i in n.instances.values()
                  if i.primitive == "MUX" and i.name.startswith("mux_")]
    wire_map: Dict[str, str] = {}
    for d, sinks in n.wires.items():
        for s in sinks:
            wire_map[s] = d
    for m in data_muxes:
        twin = n.instances.get(f"v{m.name}")
        if twin is None:
            report.add(f"no valid mux for {m.name}")
            continue
        if twin.param("k") != m.param("k") or twin.param("w") != "1":
            report.add(f"valid mux v{m.name} arity/width mismatch")
        if wire_map.get(f"v{m.name}.sel") != wire_map.get(f"{m.name}.sel"):
            report.add(f"valid mux v{m.name} does not share {m.name}'s select")
        k = int(m.param("k"))
        for i in range(k):
            data_src = wire_map.get(f"{m.name}.in{i}")
            valid_src = wire_map.get(f"v{m.name}.in{i}")
            if data_src is None or valid_src is None:
                report.add(f"unwired input {i} on {m.name} pair")
                continue
            if _valid_name_of(data_src) != valid_src:
                report.add(f"valid path diverges at {m.name}.in{i}: "
                           f"{valid_src} !~ {data_src}")


def _valid_name_of(data_endpoint: str) -> str:
    inst, port = data_endpoint.split(".", 1)
    if inst.startswith("mux_"):
        return f"v{inst}.{port}"
    if inst.startswith("reg_"):
        return f"{inst}.vout"
    if inst.startswith("core_"):
        return f"{inst}.v_{port}"
    if inst.startswith("const0_"):
        return "const0_b1.out"
    return data_endpoint


# --- area proxy ------------------------------------------------------------------


@dataclass
class Metrics:
    mux_input_count: int = 0
    sb_mux_input_count: int = 0
    cb_mux_input_count: int = 0
    config_bits: int = 0
    storage_bits: int = 0
    join_gate_count: int = 0
    gate_count_estimate: int = 0


def area_proxy(n: StructNetlist) -> Metrics:
    """Exact censuses of the netlist plus a documented gate estimate:
    sum(mux inputs x width) + storage_bits x GATES_PER_STORAGE_BIT
    + join gates x GATES_PER_JOIN_GATE."""
    m = Metrics()
    rv = _is_ready_valid(n)
    weighted = 0
    for inst in n.instances.values():
        if inst.primitive == "MUX":
            k = int(inst.param("k"))
            w = int(inst.param("w"))
            m.mux_input_count += k
            weighted += k * w
            if inst.name.startswith("mux_"):
                if "_p_" in inst.name:
                    m.cb_mux_input_count += k
                else:
                    m.sb_mux_input_count += k
                if rv:
                    m.join_gate_count += 2 * k - 1
        elif inst.primitive in ("REG", "FIFO_REG"):
            m.storage_bits += _storage_bits(int(inst.param("w")),
                                            inst.primitive,
                                            inst.param("mode"))
    m.config_bits = sum(f.width for f in n.config_map)
    m.gate_count_estimate = (weighted
                             + m.storage_bits * GATES_PER_STORAGE_BIT
                             + m.join_gate_count * GATES_PER_JOIN_GATE)
    return m
