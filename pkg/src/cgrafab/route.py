"""Timing-driven negotiated-congestion routing over the fabric graph.

Each iteration rips up and reroutes every net in decreasing criticality
order, growing per-net arborescences sink by sink with A*. Node costs
blend delay (weighted by criticality) with a congestion price that
grows with present overuse and accumulated history, until no routing
node carries more than one net.
"""
from __future__ import annotations

import heapq
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple

from .appgraph import Net, PackedGraph, split_ep
from .errors import (
    CombinationalLoop,
    ParseError,
    RoutingFailed,
    Unreachable,
    UnroutableSink,
)
from .ir import NodeId, NodeKind, RoutingGraph
from .place import Placement, hpwl

log = logging.getLogger(__name__)

ROUTE_BITWIDTH = 16

# Fabric port names for application instance pins. Unpacked REG
# instances occupy a PE tile configured as a registered pass-through.
_ROLE_OF_KIND = {"PE": "pe", "MEM": "mem", "IO": "io", "REG": "pe"}
_REG_PORT_MAP = {"in": "in0", "out": "out0"}


@dataclass
class RouteParams:
    max_iterations: int = 50
    p_fac: float = 0.5          # initial present-congestion factor
    p_growth: float = 1.5       # present factor growth per iteration
    h_inc: float = 0.5          # history increment on overused nodes
    crit_exp: float = 1.0
    unused_tile_penalty: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.p_fac, self.p_growth, self.h_inc) <= 0:
            raise ValueError("cost factors must be > 0")


@dataclass
class TimingInfo:
    critical_path: float
    net_slack: Dict[str, float]
    arrival: Dict[str, float]
    required: Dict[str, float]

    def criticality(self, net_key: str, exponent: float = 1.0) -> float:
        if self.critical_path <= 0:
            return 0.0
        slack = self.net_slack.get(net_key, self.critical_path)
        crit = 1.0 - slack / self.critical_path
        return min(max(crit, 0.0) ** exponent, 0.99)


@dataclass
class RouteTree:
    net: str
    root: NodeId
    parent: Dict[NodeId, NodeId] = field(default_factory=dict)
    sink_nodes: Dict[str, NodeId] = field(default_factory=dict)

    def nodes(self) -> Set[NodeId]:
        return {self.root, *self.parent.keys()}

    def edges(self) -> List[Tuple[NodeId, NodeId]]:
        return [(p, c) for c, p in self.parent.items()]

    def path_to(self, node: NodeId) -> List[NodeId]:
        path = [node]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return list(reversed(path))


@dataclass
class RouteSet:
    trees: Dict[str, RouteTree] = field(default_factory=dict)
    # overused-node count after each negotiation iteration
    overuse_history: List[int] = field(default_factory=list)

    def all_nodes(self) -> Dict[NodeId, int]:
        usage: Dict[NodeId, int] = defaultdict(int)
        for tree in self.trees.values():
            for nid in tree.nodes():
                usage[nid] += 1
        return dict(usage)


def port_node_of(g: RoutingGraph, packed: PackedGraph, placement: Placement,
                 endpoint: str) -> NodeId:
    inst_name, port = split_ep(endpoint)
    inst = packed.instances[inst_name]
    role = _ROLE_OF_KIND[inst.kind]
    if inst.kind == "REG":
        port = _REG_PORT_MAP[port]
    x, y = placement.coords[inst_name]
    nid = g.find(NodeKind.Port, x, y, ROUTE_BITWIDTH,
                 port_name=f"{role}_{port}")
    if nid is None:
        raise UnroutableSink(f"{endpoint}: no fabric port {role}_{port} "
                             f"at tile ({x},{y})")
    return nid


# --- static timing analysis -----------------------------------------------------


def sta(packed: PackedGraph, placement: Placement, g: RoutingGraph,
        routes: Optional[RouteSet] = None,
        unit_wire_delay: float = 1.0) -> TimingInfo:
    """Longest-path arrival/required times over the application. Before
    routing, net delay is HPWL x unit wire delay; after routing it is the
    sum of fabric node delays along each sink's tree path. Paths cut at
    registers (REG instances and packed input registers) and at IO."""
    insts = packed.instances
    net_of_source: Dict[str, Net] = {n.source: n for n in packed.nets}
    driver_of_sink: Dict[str, Net] = {}
    for net in packed.nets:
        for s in net.sinks:
            driver_of_sink[s] = net

    core_delay: Dict[str, float] = {}
    for name, inst in insts.items():
        if inst.kind == "REG":
            core_delay[name] = 0.0
            continue
        x, y = placement.coords[name]
        role = _ROLE_OF_KIND[inst.kind]
        nid = g.find(NodeKind.Port, x, y, ROUTE_BITWIDTH,
                     port_name=f"{role}_out0")
        core_delay[name] = float(g.node(nid).delay) if nid is not None else 0.0

    def net_delay(net: Net, sink_ep: str) -> float:
        if routes is None or net.source not in routes.trees:
            return hpwl(net, placement) * unit_wire_delay
        tree = routes.trees[net.source]
        sink_node = tree.sink_nodes[sink_ep]
        path = tree.path_to(sink_node)
        return float(sum(g.node(nid).delay for nid in path[1:]))

    def is_cut_sink(sink_ep: str) -> bool:
        inst_name, port = split_ep(sink_ep)
        kind = insts[inst_name].kind
        if kind in ("REG", "IO"):
            return True
        return packed.registered(inst_name, port)

    arrival_out: Dict[str, float] = {}
    visiting: Set[str] = set()

    def arr_out(source_ep: str) -> float:
        if source_ep in arrival_out:
            return arrival_out[source_ep]
        if source_ep in visiting:
            raise CombinationalLoop(f"combinational cycle through "
                                    f"{source_ep}")
        visiting.add(source_ep)
        inst_name, _ = split_ep(source_ep)
        kind = insts[inst_name].kind
        worst_in = 0.0
        if kind not in ("REG", "IO"):
            for net in packed.nets:
                for s in net.sinks:
                    si, sp = split_ep(s)
                    if si != inst_name or is_cut_sink(s):
                        continue
                    worst_in = max(worst_in,
                                   arr_out(net.source) + net_delay(net, s))
        visiting.discard(source_ep)
        value = worst_in + (core_delay[inst_name] if kind != "REG" else 0.0)
        arrival_out[source_ep] = value
        return value

    arrival: Dict[str, float] = {}
    for net in packed.nets:
        src_arr = arr_out(net.source)
        arrival[net.source] = src_arr
        for s in net.sinks:
            arrival[s] = src_arr + net_delay(net, s)
    # paths end inside their terminal combinational block, so unloaded
    # outputs still contribute their core delay
    for name, inst in insts.items():
        if inst.kind in ("PE", "MEM"):
            arrival.setdefault(f"{name}.out0", arr_out(f"{name}.out0"))

    d_max = max(arrival.values(), default=0.0)

    required: Dict[str, float] = {}

    def req_in(sink_ep: str) -> float:
        if sink_ep in required:
            return required[sink_ep]
        if is_cut_sink(sink_ep):
            required[sink_ep] = d_max
            return d_max
        inst_name, _ = split_ep(sink_ep)
        downstream = []
        for out_ep, net in net_of_source.items():
            oi, _ = split_ep(out_ep)
            if oi != inst_name:
                continue
            for s in net.sinks:
                downstream.append(req_in(s) - net_delay(net, s))
        # unloaded combinational output: the path still traverses the core
        value = (min(downstream) if downstream else d_max) \
            - core_delay[inst_name]
        required[sink_ep] = value
        return value

    net_slack: Dict[str, float] = {}
    for net in packed.nets:
        slacks = [req_in(s) - arrival[s] for s in net.sinks]
        net_slack[net.source] = min(slacks) if slacks else d_max

    return TimingInfo(critical_path=d_max, net_slack=net_slack,
                      arrival=arrival, required=required)


# --- cost model -----------------------------------------------------------------


def edge_cost(node, crit: float, history: float, present: float,
              base: float) -> float:
    """Cost of entering a routing node: delay weighted by criticality
    plus congestion-priced base cost. Monotone in history and present."""
    return crit * node.delay + (1.0 - crit) * base * \
        (1.0 + history) * (1.0 + present)


# --- shortest path -----------------------------------------------------------------


def astar(g: RoutingGraph, sources, sink: NodeId, cost_of,
          h_scale: float = 1.0) -> Tuple[List[NodeId], float]:
    """Minimum-cost path from any source to sink; cost_of(nid) prices
    entering a node. The Manhattan-distance heuristic scaled by the
    minimum per-hop cost keeps the search admissible and consistent, so
    the result cost equals Dijkstra's."""
    if isinstance(sources, int):
        sources = [sources]
    target = g.node(sink)

    def h(nid: NodeId) -> float:
        n = g.node(nid)
        return h_scale * (abs(n.x - target.x) + abs(n.y - target.y))

    tie = itertools.count()
    dist: Dict[NodeId, float] = {}
    came: Dict[NodeId, Optional[NodeId]] = {}
    heap = []
    for s in sources:
        dist[s] = 0.0
        came[s] = None
        heapq.heappush(heap, (h(s), next(tie), s))
    closed: Set[NodeId] = set()
    while heap:
        _, _, nid = heapq.heappop(heap)
        if nid in closed:
            continue
        closed.add(nid)
        if nid == sink:
            path = [nid]
            while came[path[-1]] is not None:
                path.append(came[path[-1]])
            return list(reversed(path)), dist[nid]
        for nxt in g.fan_out(nid):
            if nxt in closed:
                continue
            nd = dist[nid] + cost_of(nxt)
            if nd < dist.get(nxt, float("inf")) - 1e-15:
                dist[nxt] = nd
                came[nxt] = nid
                heapq.heappush(heap, (nd + h(nxt), next(tie), nxt))
    raise Unreachable(f"no path to node {sink}")


# --- the negotiation loop -----------------------------------------------------------


@dataclass
class _RouteNet:
    key: str
    src_node: NodeId
    sinks: List[Tuple[str, NodeId]]


def route(g: RoutingGraph, placement: Placement, packed: PackedGraph,
          params: Optional[RouteParams] = None
          ) -> Tuple[RouteSet, TimingInfo]:
    """PathFinder negotiation until every node carries at most one net.
    Returns the legal route set and post-route timing."""
    params = params or RouteParams()
    nets: List[_RouteNet] = []
    for net in packed.nets:
        src = port_node_of(g, packed, placement, net.source)
        sinks = [(s, port_node_of(g, packed, placement, s))
                 for s in sorted(net.sinks)]
        nets.append(_RouteNet(net.source, src, sinks))

    timing = sta(packed, placement, g, None)
    crit = {n.key: timing.criticality(n.key, params.crit_exp) for n in nets}

    usage: Dict[NodeId, int] = defaultdict(int)
    history: Dict[NodeId, float] = defaultdict(float)
    placed_tiles = {xy for xy in placement.coords.values()}
    routes = RouteSet()

    overused_count = 0
    for iteration in range(1, params.max_iterations + 1):
        p_fac = params.p_fac * params.p_growth ** (iteration - 1)
        used_tiles = set(placed_tiles)
        for tree in routes.trees.values():
            used_tiles.update((g.node(n).x, g.node(n).y)
                              for n in tree.nodes())
        order = sorted(nets, key=lambda n: (-crit[n.key], n.key))
        for rnet in order:
            old = routes.trees.pop(rnet.key, None)
            if old is not None:
                for nid in old.nodes():
                    usage[nid] -= 1
            tree = _route_net(g, rnet, crit[rnet.key], usage, history,
                              p_fac, used_tiles, params)
            routes.trees[rnet.key] = tree
            for nid in tree.nodes():
                usage[nid] += 1
                used_tiles.add((g.node(nid).x, g.node(nid).y))
        overused = [nid for nid, c in usage.items() if c > 1]
        overused_count = len(overused)
        routes.overuse_history.append(overused_count)
        if not overused:
            timing = sta(packed, placement, g, routes)
            log.info("routing converged in %d iteration(s), D_max=%s",
                     iteration, timing.critical_path)
            return routes, timing
        for nid in overused:
            history[nid] += params.h_inc
        timing = sta(packed, placement, g, routes)
        crit = {n.key: timing.criticality(n.key, params.crit_exp)
                for n in nets}
        log.debug("iteration %d: %d overused nodes", iteration,
                  overused_count)
    raise RoutingFailed("no legal routing", params.max_iterations,
                        overused_count)


def _route_net(g: RoutingGraph, rnet: _RouteNet, crit: float,
               usage: Dict[NodeId, int], history: Dict[NodeId, float],
               p_fac: float, used_tiles: Set[Tuple[int, int]],
               params: RouteParams) -> RouteTree:
    tree = RouteTree(rnet.key, rnet.src_node)
    tree_nodes: Set[NodeId] = {rnet.src_node}

    def cost_of(nid: NodeId) -> float:
        node = g.node(nid)
        base = 1.0
        if (node.x, node.y) not in used_tiles:
            base += params.unused_tile_penalty
        present = p_fac * usage[nid]
        return edge_cost(node, crit, history[nid], present, base)

    for sink_ep, sink_node in rnet.sinks:
        try:
            path, _ = astar(g, sorted(tree_nodes), sink_node, cost_of,
                            h_scale=(1.0 - crit))
        except Unreachable:
            raise UnroutableSink(f"net {rnet.key}: sink {sink_ep} "
                                 f"(node {sink_node}) unreachable")
        prev = path[0]
        for nid in path[1:]:
            if nid not in tree_nodes:
                tree.parent[nid] = prev
                tree_nodes.add(nid)
            prev = nid
        tree.sink_nodes[sink_ep] = sink_node
    return tree


def check_route_legality(g: RoutingGraph, routes: RouteSet) -> List[str]:
    """Global legality census: at most one net per node and at most one
    selected input per mux site."""
    problems = []
    usage = routes.all_nodes()
    for nid, count in sorted(usage.items()):
        if count > 1:
            problems.append(f"node {nid} carried by {count} nets")
    selections: Dict[NodeId, Set[NodeId]] = defaultdict(set)
    for tree in routes.trees.values():
        for child, parent in tree.parent.items():
            if len(g.fan_in(child)) >= 2:
                selections[child].add(parent)
    for nid, chosen in sorted(selections.items()):
        if len(chosen) > 1:
            problems.append(f"mux node {nid} selects {len(chosen)} inputs")
    return problems


def wirelength(g: RoutingGraph, tree: RouteTree) -> int:
    """Inter-tile hop count of a routing tree."""
    hops = 0
    for child, parent in tree.parent.items():
        a, b = g.node(parent), g.node(child)
        if (a.x, a.y) != (b.x, b.y):
            hops += 1
    return hops


def pass_through_tiles(g: RoutingGraph, routes: RouteSet,
                       placement: Placement) -> Set[Tuple[int, int]]:
    """Tiles used only for routing: powered on without hosting an
    instance."""
    placed = set(placement.coords.values())
    used: Set[Tuple[int, int]] = set()
    for tree in routes.trees.values():
        for nid in tree.nodes():
            node = g.node(nid)
            used.add((node.x, node.y))
    return used - placed


# --- route files --------------------------------------------------------------------
#   route <net-source-endpoint>
#     <node-id> <node-id> ...     (one chain per sink: root -> sink path)

def serialize_routes(routes: RouteSet) -> str:
    lines = []
    for key in sorted(routes.trees):
        tree = routes.trees[key]
        lines.append(f"route {key}")
        for sink_ep in sorted(tree.sink_nodes):
            path = tree.path_to(tree.sink_nodes[sink_ep])
            lines.append(f"  {sink_ep} : " + " ".join(str(n) for n in path))
    return "\n".join(lines) + "\n"


def parse_routes(text: str) -> RouteSet:
    routes = RouteSet()
    current: Optional[RouteTree] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        if raw.startswith("route "):
            key = raw[len("route "):].strip()
            current = RouteTree(key, root=-1)
            routes.trees[key] = current
            continue
        if current is None:
            raise ParseError("chain before any route header", line=lineno)
        body = raw.strip()
        if " : " not in body:
            raise ParseError("expected '<sink> : <id> <id> ...'", line=lineno)
        sink_ep, chain = body.split(" : ", 1)
        try:
            ids = [int(t) for t in chain.split()]
        except ValueError:
            raise ParseError("node ids must be integers", line=lineno)
        if not ids:
            raise ParseError("empty node chain", line=lineno)
        if current.root == -1:
            current.root = ids[0]
        elif current.root != ids[0]:
            raise ParseError("chains disagree on the tree root", line=lineno)
        for prev, nid in zip(ids, ids[1:]):
            existing = current.parent.get(nid)
            if existing is not None and existing != prev:
                raise ParseError(f"node {nid} has two parents", line=lineno)
            current.parent[nid] = prev
        current.sink_nodes[sink_ep.strip()] = ids[-1]
    return routes
