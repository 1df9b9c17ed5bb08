"""Bitstream generation and configuration-level functional simulation.

A bitstream is a sorted list of 32-bit (address, data) words addressing
per-tile config registers. The simulator propagates tokens through the
configured fabric at the selection level: a mux forwards only its
selected input, registers add a tick, FIFO-mode registers buffer with
bounded occupancy under sink backpressure.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .appgraph import PackedGraph
from .errors import (
    BadAddress,
    FieldConflict,
    ParseError,
    SelectOutOfRange,
    UnknownField,
)
from .ir import NodeId, NodeKind, RoutingGraph
from .netlist import ConfigField, node_tag
from .place import Placement
from .route import RouteSet, _ROLE_OF_KIND, _REG_PORT_MAP


@dataclass
class Bitstream:
    words: List[Tuple[int, int]] = field(default_factory=list)

    def sort(self) -> "Bitstream":
        self.words.sort()
        return self

    def data_at(self, address: int) -> int:
        for a, d in self.words:
            if a == address:
                return d
        return 0


def serialize_bitstream(b: Bitstream) -> str:
    return "".join(f"{a:08X} {d:08X}\n" for a, d in sorted(b.words))


def parse_bitstream(text: str) -> Bitstream:
    words = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 or len(parts[0]) != 8 or len(parts[1]) != 8:
            raise ParseError("expected 'ADDRESS DATA' as 8-digit hex pairs",
                             line=lineno)
        try:
            words.append((int(parts[0], 16), int(parts[1], 16)))
        except ValueError:
            raise ParseError("bad hex word", line=lineno)
    return Bitstream(words).sort()


# --- field indexing -------------------------------------------------------------


class FieldIndex:
    """Config-map lookups by target endpoint and by register address."""

    def __init__(self, config_map: Sequence[ConfigField]):
        self.by_target: Dict[str, ConfigField] = {}
        self.by_word: Dict[int, List[ConfigField]] = defaultdict(list)
        for f in config_map:
            self.by_target[f.target] = f
            self.by_word[f.address()].append(f)

    def field_for(self, target: str) -> ConfigField:
        f = self.by_target.get(target)
        if f is None:
            raise UnknownField(f"no config field drives {target}")
        return f


class _WordBuilder:
    def __init__(self):
        self.words: Dict[int, int] = {}
        self.owner: Dict[Tuple[int, int], str] = {}

    def set_field(self, f: ConfigField, value: int, owner: str) -> None:
        key = (f.address(), f.offset)
        prev = self.owner.get(key)
        if prev is not None and prev != owner:
            raise FieldConflict(f"{f.target} claimed by both {prev} "
                                f"and {owner}")
        self.owner[key] = owner
        if value >= (1 << f.width):
            raise SelectOutOfRange(f"{f.target}: value {value} exceeds "
                                   f"{f.width} bits")
        self.words.setdefault(f.address(), 0)
        self.words[f.address()] |= (value & ((1 << f.width) - 1)) << f.offset


def generate_bitstream(g: RoutingGraph, routes: RouteSet,
                       config_map: Sequence[ConfigField],
                       packed: Optional[PackedGraph] = None,
                       placement: Optional[Placement] = None,
                       include_defaults: bool = False) -> Bitstream:
    """Encode a routing result (and packed core annotations, when given)
    into configuration words. Only non-default words are emitted unless
    include_defaults is set."""
    index = FieldIndex(config_map)
    builder = _WordBuilder()
    for key in sorted(routes.trees):
        tree = routes.trees[key]
        for child, parent in sorted(tree.parent.items()):
            fan_in = g.fan_in(child)
            if len(fan_in) < 2:
                continue
            sel = fan_in.index(parent)
            target = f"mux_{node_tag(g.node(child))}.sel"
            if sel == 0:
                # default selection; claim ownership to catch conflicts
                f = index.by_target.get(target)
                if f is not None:
                    builder.set_field(f, 0, key)
                continue
            builder.set_field(index.field_for(target), sel, key)

    if packed is not None and placement is not None:
        for name in sorted(packed.instances):
            inst = packed.instances[name]
            x, y = placement.coords[name]
            role = _ROLE_OF_KIND[inst.kind]
            core = f"core_x{x:02d}y{y:02d}"

            def core_field(port, suffix):
                fabric_port = _REG_PORT_MAP.get(port, port) \
                    if inst.kind == "REG" else port
                return index.field_for(
                    f"{core}.cfg_{role}_{fabric_port}_{suffix}")

            for port in sorted(packed.input_registers.get(name, ())):
                builder.set_field(core_field(port, "registered"), 1, name)
            for port, value in sorted(
                    packed.const_operands.get(name, {}).items()):
                builder.set_field(core_field(port, "const_en"), 1, name)
                builder.set_field(core_field(port, "const"),
                                  int(value) & 0xFFFF, name)
            if inst.kind == "REG":
                builder.set_field(core_field("in", "registered"), 1, name)

    words = {a: d for a, d in builder.words.items() if d != 0}
    if include_defaults:
        for addr in {f.address() for f in config_map}:
            words.setdefault(addr, 0)
    return Bitstream(sorted(words.items()))


# --- configuration --------------------------------------------------------------


@dataclass
class ConfiguredFabric:
    graph: RoutingGraph
    selections: Dict[NodeId, int] = field(default_factory=dict)
    reg_modes: Dict[NodeId, str] = field(default_factory=dict)
    core_config: Dict[str, int] = field(default_factory=dict)
    # per-register FIFO depth: 2 for self-contained depth-2 FIFOs, 1 for
    # split-FIFO members (the chained pair provides depth 2 together)
    fifo_reg_depth: int = 2

    def selected_input(self, node_id: NodeId) -> Optional[NodeId]:
        fan_in = self.graph.fan_in(node_id)
        if not fan_in:
            return None
        sel = self.selections.get(node_id, 0)
        return fan_in[sel]

    def edge_active(self, src: NodeId, dst: NodeId) -> bool:
        fan_in = self.graph.fan_in(dst)
        if len(fan_in) < 2:
            return True
        return self.selected_input(dst) == src

    def register_capacity(self, node_id: NodeId) -> int:
        if self.reg_modes.get(node_id) == "fifo":
            return self.fifo_reg_depth
        return 1


class Configurer:
    """Reusable address decoder for one (graph, config_map) pair."""

    def __init__(self, g: RoutingGraph, config_map: Sequence[ConfigField]):
        self.g = g
        self.index = FieldIndex(config_map)
        self.node_by_tag = {node_tag(n): n.id for n in g.nodes()}
        self.split_fifos = any(f.meaning == "SplitFifoRole"
                               for f in config_map)

    def configure(self, b: Bitstream) -> ConfiguredFabric:
        fabric = ConfiguredFabric(
            self.g, fifo_reg_depth=1 if self.split_fifos else 2)
        for address, data in b.words:
            fields = self.index.by_word.get(address)
            if not fields:
                raise BadAddress(f"address {address:08X} decodes to no "
                                 f"config register")
            for f in fields:
                value = (data >> f.offset) & ((1 << f.width) - 1)
                if value == 0:
                    continue
                self._apply(fabric, f, value)
        return fabric

    def _apply(self, fabric: ConfiguredFabric, f: ConfigField,
               value: int) -> None:
        inst, port = f.target.split(".", 1)
        if f.meaning == "MuxSelect":
            tag = inst[len("mux_"):]
            nid = self.node_by_tag.get(tag)
            if nid is None:
                raise BadAddress(f"{f.target}: no such mux node")
            k = len(self.g.fan_in(nid))
            if value >= max(k, 1):
                raise SelectOutOfRange(f"{f.target}: select {value} of "
                                       f"{k} inputs")
            fabric.selections[nid] = value
        elif f.meaning in ("FifoMode", "SplitFifoRole"):
            tag = inst[len("reg_"):]
            nid = self.node_by_tag.get(tag)
            if nid is None:
                raise BadAddress(f"{f.target}: no such register node")
            if f.meaning == "FifoMode":
                fabric.reg_modes[nid] = "fifo" if value else "register"
            else:
                fabric.core_config[f.target] = value
        else:
            fabric.core_config[f.target] = value


def configure(g: RoutingGraph, config_map: Sequence[ConfigField],
              b: Bitstream) -> ConfiguredFabric:
    return Configurer(g, config_map).configure(b)


# --- functional simulation --------------------------------------------------------


def functional_sim(fabric: ConfiguredFabric,
                   stimulus: Dict[NodeId, object],
                   sink_ready: Optional[Dict[NodeId, Sequence[bool]]] = None,
                   max_ticks: int = 64) -> Dict[NodeId, Tuple[object, int]]:
    """Propagate tokens along configured selections. Returns, per
    reachable node, the first arriving token and its tick (registers add
    one tick). With sink_ready schedules, FIFO-mode registers buffer
    blocked tokens with occupancy bounded by their configured depth."""
    if sink_ready:
        return _sim_with_backpressure(fabric, stimulus, sink_ready, max_ticks)
    g = fabric.graph
    result: Dict[NodeId, Tuple[object, int]] = {}
    queue = deque()
    for nid, token in stimulus.items():
        if nid not in result:
            result[nid] = (token, 0)
            queue.append(nid)
    while queue:
        nid = queue.popleft()
        token, tick = result[nid]
        is_reg = g.node(nid).kind is NodeKind.Register
        for dst in g.fan_out(nid):
            if dst in result or not fabric.edge_active(nid, dst):
                continue
            result[dst] = (token, tick + (1 if is_reg else 0))
            queue.append(dst)
    return result


def _sim_with_backpressure(fabric, stimulus, sink_ready, max_ticks):
    """Tick-stepped token flow. Registers hold tokens in queues bounded
    by their configured depth; terminal nodes consume only when their
    ready schedule allows; a blocked branch holds the token upstream
    (retried next tick), stalling sources and register chains."""
    g = fabric.graph
    result: Dict[NodeId, Tuple[object, int]] = {}
    reg_queues: Dict[NodeId, deque] = defaultdict(deque)
    delivered: Set[Tuple[NodeId, int]] = set()
    injections: List[List] = []
    serial = 0
    for nid, tok in sorted(stimulus.items()):
        values = tok if isinstance(tok, list) else [(0, tok)]
        for due, v in values:
            injections.append([due, nid, serial, v])
            serial += 1
    injections.sort(key=lambda e: (e[0], e[2]))

    def sink_is_ready(nid, tick):
        sched = sink_ready.get(nid)
        if sched is None:
            return True
        return bool(sched[tick]) if tick < len(sched) else True

    def deliver(nid, serial_no, token, tick) -> bool:
        """Offer one token to node nid; False when the node (or any
        consumer downstream of a combinational node) cannot accept."""
        if (nid, serial_no) in delivered:
            return True
        node = g.node(nid)
        if node.kind is NodeKind.Register:
            q = reg_queues[nid]
            if len(q) >= fabric.register_capacity(nid):
                return False
            q.append((serial_no, token))
            delivered.add((nid, serial_no))
            result.setdefault(nid, (token, tick + 1))
            return True
        consumers = [d for d in g.fan_out(nid)
                     if fabric.edge_active(nid, d)]
        if not consumers:
            if not sink_is_ready(nid, tick):
                return False
            delivered.add((nid, serial_no))
            result.setdefault(nid, (token, tick))
            return True
        ok = True
        for dst in consumers:
            if not deliver(dst, serial_no, token, tick):
                ok = False
        if ok:
            delivered.add((nid, serial_no))
            result.setdefault(nid, (token, tick))
        return ok

    for tick in range(max_ticks):
        # drain register heads first, deterministic node order
        for nid in sorted(reg_queues):
            q = reg_queues[nid]
            if not q:
                continue
            serial_no, token = q[0]
            ok = True
            for dst in g.fan_out(nid):
                if not fabric.edge_active(nid, dst):
                    continue
                if not deliver(dst, serial_no, token, tick):
                    ok = False
            if ok:
                q.popleft()
        remaining = []
        for entry in injections:
            due, nid, serial_no, token = entry
            if due > tick or not deliver(nid, serial_no, token, tick):
                if due <= tick:
                    entry[0] = tick + 1   # source stalls and retries
                remaining.append(entry)
        injections = remaining
        if not injections and not any(reg_queues.values()):
            break
    return result


# --- exhaustive connection sweep ----------------------------------------------------


@dataclass
class SweepReport:
    total: int = 0
    failures: List[Tuple[NodeId, NodeId, str]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"exhaustive sweep: {status} "
                 f"({self.total - len(self.failures)}/{self.total} edges)"]
        for a, b, reason in self.failures[:20]:
            lines.append(f"  edge {a}->{b}: {reason}")
        if len(self.failures) > 20:
            lines.append(f"  ... {len(self.failures) - 20} more")
        return "\n".join(lines)


def exhaustive_sweep(g: RoutingGraph, config_map: Sequence[ConfigField],
                     decode_map: Optional[Sequence[ConfigField]] = None
                     ) -> SweepReport:
    """For every edge (a, b): synthesize the minimal bitstream selecting
    a at b, inject a unique token at a, and check it arrives at b. The
    optional decode_map configures the fabric through a different map,
    modeling mis-wired hardware for fault-injection tests."""
    gen_index = FieldIndex(config_map)
    configurer = Configurer(g, decode_map if decode_map is not None
                            else config_map)
    report = SweepReport()
    for a, b in g.edges():
        report.total += 1
        token = f"tok_{a}_{b}"
        fan_in = g.fan_in(b)
        try:
            words = []
            if len(fan_in) >= 2:
                sel = fan_in.index(a)
                if sel != 0:
                    f = gen_index.field_for(
                        f"mux_{node_tag(g.node(b))}.sel")
                    words.append((f.address(), sel << f.offset))
            fabric = configurer.configure(Bitstream(words))
            result = functional_sim(fabric, {a: token})
            got = result.get(b)
            if got is None:
                report.failures.append((a, b, "token did not arrive"))
            elif got[0] != token:
                report.failures.append((a, b, f"wrong token {got[0]!r}"))
        except Exception as exc:
            report.failures.append((a, b, f"{type(exc).__name__}: {exc}"))
    return report
