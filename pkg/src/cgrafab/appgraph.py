"""Application dataflow graphs and the packing pass.

Packing folds constants into their consumers' operand annotations and
absorbs pipeline registers that feed exactly one PE input into that PE,
so neither occupies fabric resources.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import DanglingPort, MultiplyDrivenNet, ParseError

KINDS = ("PE", "MEM", "IO", "CONST", "REG")

# Port vocabulary per kind; fabric capacity is checked later, at placement.
_PORT_RULES = {
    "PE": (re.compile(r"in\d+$"), re.compile(r"out\d+$")),
    "MEM": (re.compile(r"in\d+$"), re.compile(r"out\d+$")),
    "IO": (re.compile(r"in\d+$"), re.compile(r"out\d+$")),
    "CONST": (None, re.compile(r"out$")),
    "REG": (re.compile(r"in$"), re.compile(r"out$")),
}


@dataclass
class AppInstance:
    name: str
    kind: str
    attrs: Dict[str, str] = field(default_factory=dict)


@dataclass
class Net:
    source: str                  # "<inst>.<port>"
    sinks: List[str]

    def endpoints(self):
        return [self.source] + self.sinks


def split_ep(endpoint: str) -> Tuple[str, str]:
    if "." not in endpoint:
        raise DanglingPort(f"malformed endpoint {endpoint!r}")
    inst, port = endpoint.split(".", 1)
    return inst, port


@dataclass
class AppGraph:
    instances: Dict[str, AppInstance] = field(default_factory=dict)
    nets: List[Net] = field(default_factory=list)

    def add_instance(self, name: str, kind: str, **attrs) -> AppInstance:
        if name in self.instances:
            raise MultiplyDrivenNet(f"instance {name} already defined")
        if kind not in KINDS:
            raise DanglingPort(f"unknown instance kind {kind}")
        inst = AppInstance(name, kind, {k: str(v) for k, v in attrs.items()})
        self.instances[name] = inst
        return inst

    def add_net(self, source: str, sinks: List[str]) -> Net:
        net = Net(source, list(sinks))
        self.nets.append(net)
        return net

    def check(self) -> None:
        driven: Dict[str, str] = {}
        for net in self.nets:
            for ep in net.endpoints():
                inst_name, port = split_ep(ep)
                inst = self.instances.get(inst_name)
                if inst is None:
                    raise DanglingPort(f"{ep}: unknown instance {inst_name}")
                in_rule, out_rule = _PORT_RULES[inst.kind]
                is_src = ep == net.source
                rule = out_rule if is_src else in_rule
                if rule is None or not rule.match(port):
                    raise DanglingPort(
                        f"{ep}: {inst.kind} has no "
                        f"{'output' if is_src else 'input'} port {port!r}")
            for sink in net.sinks:
                if sink in driven:
                    raise MultiplyDrivenNet(
                        f"{sink} driven by both {driven[sink]} and "
                        f"{net.source}")
                driven[sink] = net.source
        sources = [n.source for n in self.nets]
        for src, count in _dupes(sources):
            raise MultiplyDrivenNet(f"{src} drives {count} nets; merge them")

    def driver_of(self, sink: str) -> Optional[Net]:
        for net in self.nets:
            if sink in net.sinks:
                return net
        return None

    def net_from(self, source: str) -> Optional[Net]:
        for net in self.nets:
            if net.source == source:
                return net
        return None


def _dupes(items):
    seen: Dict[str, int] = {}
    for it in items:
        seen[it] = seen.get(it, 0) + 1
    return [(k, c) for k, c in seen.items() if c > 1]


@dataclass
class PackedGraph(AppGraph):
    # per-PE annotations produced by packing
    input_registers: Dict[str, set] = field(default_factory=dict)
    const_operands: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def registered(self, inst: str, port: str) -> bool:
        return port in self.input_registers.get(inst, set())

    def const_on(self, inst: str, port: str) -> Optional[str]:
        return self.const_operands.get(inst, {}).get(port)


def pack(a: AppGraph) -> PackedGraph:
    """Fold constants and absorb single-sink PE-input registers."""
    a.check()
    p = PackedGraph(
        instances={n: AppInstance(i.name, i.kind, dict(i.attrs))
                   for n, i in a.instances.items()},
        nets=[Net(n.source, list(n.sinks)) for n in a.nets])
    if isinstance(a, PackedGraph):
        p.input_registers = {k: set(v) for k, v in a.input_registers.items()}
        p.const_operands = {k: dict(v) for k, v in a.const_operands.items()}

    # Registers first: a REG whose only fanout is one PE input and which
    # has a driver gets absorbed as an input-register annotation; its
    # input net is spliced through to the PE port.
    for name in sorted(p.instances):
        inst = p.instances[name]
        if inst.kind != "REG":
            continue
        out_net = p.net_from(f"{name}.out")
        in_net = p.driver_of(f"{name}.in")
        if out_net is None or in_net is None or len(out_net.sinks) != 1:
            continue
        sink_inst_name, sink_port = split_ep(out_net.sinks[0])
        sink_inst = p.instances.get(sink_inst_name)
        if sink_inst is None or sink_inst.kind != "PE":
            continue
        if p.registered(sink_inst_name, sink_port):
            continue  # one absorbable register per PE input
        in_net.sinks[in_net.sinks.index(f"{name}.in")] = out_net.sinks[0]
        p.nets.remove(out_net)
        del p.instances[name]
        p.input_registers.setdefault(sink_inst_name, set()).add(sink_port)

    # Constants: fold the driven value into each consumer's operand
    # annotation and drop the instance and its net.
    for name in sorted(p.instances):
        inst = p.instances[name]
        if inst.kind != "CONST":
            continue
        net = p.net_from(f"{name}.out")
        value = inst.attrs.get("value", "0")
        if net is not None:
            for sink in net.sinks:
                sink_inst, sink_port = split_ep(sink)
                p.const_operands.setdefault(sink_inst, {})[sink_port] = value
            p.nets.remove(net)
        del p.instances[name]

    return p


# --- text format --------------------------------------------------------------
#   inst <name> <kind> [key=value ...]
#   net <src>.<port> -> <sink>.<port>[, <sink>.<port> ...]

def parse_app(text: str) -> AppGraph:
    a = AppGraph()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "inst":
            if len(tokens) < 3:
                raise ParseError("inst expects: inst <name> <kind> "
                                 "[attr=val ...]", line=lineno)
            name, kind = tokens[1], tokens[2]
            attrs = {}
            for tok in tokens[3:]:
                if "=" not in tok:
                    raise ParseError(f"bad attribute {tok!r}", line=lineno)
                k, v = tok.split("=", 1)
                attrs[k] = v
            try:
                a.add_instance(name, kind, **attrs)
            except (MultiplyDrivenNet, DanglingPort) as exc:
                raise ParseError(str(exc), line=lineno)
        elif tokens[0] == "net":
            body = line[len("net"):].strip()
            if "->" not in body:
                raise ParseError("net expects '->'", line=lineno)
            src, sinks = body.split("->", 1)
            sink_list = [s.strip() for s in sinks.split(",") if s.strip()]
            if not sink_list:
                raise ParseError("net has no sinks", line=lineno)
            a.add_net(src.strip(), sink_list)
        else:
            raise ParseError(f"unknown directive {tokens[0]!r}", line=lineno)
    a.check()
    return a


def serialize_app(a: AppGraph) -> str:
    lines = []
    for name in sorted(a.instances):
        inst = a.instances[name]
        attrs = "".join(f" {k}={v}" for k, v in sorted(inst.attrs.items()))
        lines.append(f"inst {name} {inst.kind}{attrs}")
    for net in a.nets:
        lines.append(f"net {net.source} -> " + ", ".join(net.sinks))
    return "\n".join(lines) + "\n"
