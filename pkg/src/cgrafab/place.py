"""Two-stage placement onto the fabric grid.

Global placement relaxes instance positions continuously and minimizes a
smoothed wirelength (plus a pull toward legal memory columns) with
conjugate gradient. Legalization snaps to free compatible tiles, then
simulated annealing refines the legal placement under a wirelength cost
that discounts routing over already-occupied tiles and penalizes long
nets with a tunable exponent.
"""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .appgraph import PackedGraph, split_ep
from .errors import (
    AllFailed,
    FabricError,
    InsufficientCapacity,
    ParseError,
    UnplacedPin,
)
from .ir import NodeKind, RoutingGraph

log = logging.getLogger(__name__)

Coord = Tuple[int, int]

_KIND_ROLE = {"PE": "pe", "MEM": "mem", "IO": "io", "REG": "pe"}


@dataclass
class FabricInfo:
    """Tile roles and capacity, extracted from a routing graph."""
    width: int
    height: int
    roles: Dict[Coord, str]
    inputs_per_role: Dict[str, int]
    outputs_per_role: Dict[str, int]

    @staticmethod
    def from_graph(g: RoutingGraph) -> "FabricInfo":
        roles: Dict[Coord, str] = {}
        n_in: Dict[str, set] = {}
        n_out: Dict[str, set] = {}
        for node in g.nodes():
            if node.kind is not NodeKind.Port:
                continue
            role = node.port_name.split("_", 1)[0]
            roles[(node.x, node.y)] = role
            port = node.port_name.split("_", 1)[1]
            bucket = n_in if port.startswith("in") else n_out
            bucket.setdefault(role, set()).add(port)
        return FabricInfo(
            width=g.width, height=g.height, roles=roles,
            inputs_per_role={r: len(s) for r, s in n_in.items()},
            outputs_per_role={r: len(s) for r, s in n_out.items()})

    def slots(self, role: str) -> List[Coord]:
        return sorted((xy for xy, r in self.roles.items() if r == role),
                      key=lambda xy: (xy[1], xy[0]))

    def slots_for_kind(self, kind: str) -> List[Coord]:
        return self.slots(_KIND_ROLE[kind])

    def mem_columns(self) -> List[int]:
        return sorted({x for (x, _), r in self.roles.items() if r == "mem"})


@dataclass
class Placement:
    coords: Dict[str, Coord] = field(default_factory=dict)
    legal: bool = False

    def copy(self) -> "Placement":
        return Placement(dict(self.coords), self.legal)


@dataclass
class PlaceParams:
    gamma: float = 1.0
    alpha: float = 1.0
    seed: int = 0
    # simulated annealing schedule
    sa_t0: Optional[float] = None      # None: calibrate for ~80% acceptance
    sa_decay: float = 0.95
    sa_moves_per_instance: int = 10
    sa_min_accept: float = 0.01
    sa_t_min: float = 1e-6
    sa_max_sweeps: int = 60
    # conjugate gradient
    cg_max_iters: int = 200
    cg_tol: float = 1e-4
    cg_tau_schedule: Tuple[float, ...] = (2.0, 1.0, 0.5, 0.25)
    # the column pull must dominate wirelength (gradient magnitude ~1)
    # near convergence so memory instances land on legal columns
    mem_weight: float = 10.0

    def __post_init__(self):
        if not 1.0 <= self.alpha <= 20.0:
            raise ValueError("alpha must be within [1, 20]")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0.0 < self.sa_decay < 1.0:
            raise ValueError("decay must be in (0, 1)")


# --- wirelength ------------------------------------------------------------------


def _pin_coords(net, placement: Dict[str, Tuple[float, float]]):
    pins = []
    for ep in net.endpoints():
        inst, _ = split_ep(ep)
        if inst not in placement:
            raise UnplacedPin(f"{ep}: instance {inst} not placed")
        pins.append(placement[inst])
    return pins


def hpwl(net, placement) -> float:
    """Half-perimeter wirelength: bounding box width plus height."""
    pins = _pin_coords(net, placement if isinstance(placement, dict)
                       else placement.coords)
    xs = [p[0] for p in pins]
    ys = [p[1] for p in pins]
    return (max(xs) - min(xs)) + (max(ys) - min(ys))


def _lse_spans(arr: np.ndarray, tau: float):
    """Smooth max-min span per axis with softmax/softmin weights."""
    hi = arr.max(axis=0)
    lo = arr.min(axis=0)
    wmax = np.exp((arr - hi) / tau)
    wmin = np.exp((lo - arr) / tau)
    smax = hi + tau * np.log(wmax.sum(axis=0))
    smin = lo - tau * np.log(wmin.sum(axis=0))
    return smax - smin, wmax / wmax.sum(axis=0), wmin / wmin.sum(axis=0)


def smooth_hpwl(net, placement, tau: float = 0.5) -> float:
    """Differentiable wirelength surrogate: the L2 norm of log-sum-exp
    smoothed bounding-box spans."""
    pins = np.asarray(_pin_coords(net, placement if isinstance(placement, dict)
                                  else placement.coords), dtype=float)
    return _smooth_hpwl_value(pins, tau)


def _smooth_hpwl_value(pins: np.ndarray, tau: float) -> float:
    if len(pins) < 2:
        return 0.0
    spans, _, _ = _lse_spans(pins, tau)
    return float(math.hypot(spans[0], spans[1]))


def _smooth_hpwl_grad(pins: np.ndarray, tau: float):
    """Returns (value, gradient) of the smooth wirelength for one net."""
    if len(pins) < 2:
        return 0.0, np.zeros_like(pins)
    spans, pmax, pmin = _lse_spans(pins, tau)
    value = math.hypot(spans[0], spans[1])
    # spans are at least tau*ln2 > 0 for two or more pins, so value > 0
    dspan = (pmax - pmin)      # d span_axis / d pin coordinate
    grad = dspan * (spans / value)
    return float(value), grad


# --- global placement -----------------------------------------------------------


@dataclass
class GlobalPlaceResult:
    positions: Dict[str, Tuple[float, float]]
    # one history per smoothing stage; line search keeps each stage's
    # objective non-increasing (stages use different temperatures, so
    # values are not comparable across them)
    stage_histories: List[List[float]]
    iterations: int
    converged: bool


def assign_io_sites(packed: PackedGraph, fabric: FabricInfo) -> Dict[str, Coord]:
    """Spread IO instances evenly over the boundary IO tiles, in name
    order. These become the fixed anchors for global placement."""
    ios = sorted(n for n, i in packed.instances.items() if i.kind == "IO")
    sites = _ring_ordered(fabric.slots("io"), fabric)
    if not ios:
        return {}
    if len(ios) > len(sites):
        raise InsufficientCapacity(
            f"{len(ios)} IO instances but only {len(sites)} IO sites")
    step = len(sites) / len(ios)
    return {name: sites[int(i * step)] for i, name in enumerate(ios)}


def _ring_ordered(sites: List[Coord], fabric: FabricInfo) -> List[Coord]:
    """Boundary sites in clockwise perimeter order starting at (0,0)."""
    def ring_key(xy):
        x, y = xy
        w, h = fabric.width, fabric.height
        if y == 0:
            return (0, x)
        if x == w - 1:
            return (1, y)
        if y == h - 1:
            return (2, w - 1 - x)
        return (3, h - 1 - y)
    return sorted(sites, key=ring_key)


def global_place(packed: PackedGraph, fabric: FabricInfo,
                 params: PlaceParams,
                 anchors: Optional[Dict[str, Coord]] = None) -> GlobalPlaceResult:
    """Conjugate-gradient minimization of smoothed wirelength plus the
    squared distance of each MEM instance to its nearest legal column.
    The smoothing temperature anneals over the CG stages; every accepted
    line-search step decreases the objective."""
    if anchors is None:
        anchors = assign_io_sites(packed, fabric)
    names = sorted(packed.instances)
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    pos = np.zeros((n, 2), dtype=float)
    movable = np.ones(n, dtype=bool)

    rng = random.Random(params.seed)
    if anchors:
        cx = sum(x for x, _ in anchors.values()) / len(anchors)
        cy = sum(y for _, y in anchors.values()) / len(anchors)
    else:
        log.warning("NoAnchors: no fixed IO instances; anchoring at the "
                    "grid centroid")
        cx, cy = (fabric.width - 1) / 2.0, (fabric.height - 1) / 2.0
    for i, name in enumerate(names):
        if name in anchors:
            pos[i] = anchors[name]
            movable[i] = False
        else:
            pos[i] = (cx + rng.uniform(-0.5, 0.5),
                      cy + rng.uniform(-0.5, 0.5))

    nets = [np.array([index[split_ep(ep)[0]] for ep in net.endpoints()])
            for net in packed.nets]
    mem_rows = np.array([index[m] for m in names
                         if packed.instances[m].kind == "MEM"], dtype=int)
    mem_cols = np.array(fabric.mem_columns(), dtype=float)
    use_mem = len(mem_rows) > 0 and len(mem_cols) > 0
    centering = not anchors

    def objective_and_grad(p: np.ndarray, tau: float):
        total = 0.0
        grad = np.zeros_like(p)
        for net_idx in nets:
            v, g_net = _smooth_hpwl_grad(p[net_idx], tau)
            total += v
            np.add.at(grad, net_idx, g_net)
        if use_mem:
            xs = p[mem_rows, 0]
            d = xs[:, None] - mem_cols[None, :]
            nearest = np.argmin(np.abs(d), axis=1)
            dx = d[np.arange(len(mem_rows)), nearest]
            total += params.mem_weight * float((dx ** 2).sum())
            grad[mem_rows, 0] += 2.0 * params.mem_weight * dx
        if centering:
            d = p - np.array([cx, cy])
            total += 0.01 * float((d ** 2).sum())
            grad += 0.02 * d
        grad[~movable] = 0.0
        return total, grad

    stage_histories: List[List[float]] = []
    iters_per_stage = max(1, params.cg_max_iters // len(params.cg_tau_schedule))
    total_iters = 0
    converged = False
    for tau in params.cg_tau_schedule:
        f, g = objective_and_grad(pos, tau)
        history = [f]
        stage_histories.append(history)
        direction = -g
        step = 1.0
        for _ in range(iters_per_stage):
            total_iters += 1
            if np.abs(g).max() < params.cg_tol:
                converged = True
                break
            slope = float((g * direction).sum())
            if slope >= 0:
                direction = -g
                slope = float((g * direction).sum())
            # Armijo backtracking: accepted steps never increase f
            alpha = step
            for _ in range(40):
                f_new, g_new = objective_and_grad(pos + alpha * direction, tau)
                if f_new <= f + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                break
            pos = pos + alpha * direction
            step = min(alpha * 2.0, 4.0)
            beta = float((g_new * (g_new - g)).sum() /
                         max((g * g).sum(), 1e-12))
            beta = max(0.0, beta)   # Polak-Ribiere with restart
            direction = -g_new + beta * direction
            f, g = f_new, g_new
            history.append(f)

    positions = {name: (float(pos[i, 0]), float(pos[i, 1]))
                 for i, name in enumerate(names)}
    return GlobalPlaceResult(positions, stage_histories, total_iters, converged)


# --- legalization ------------------------------------------------------------------


def legalize(continuous: Dict[str, Tuple[float, float]],
             packed: PackedGraph, fabric: FabricInfo,
             anchors: Optional[Dict[str, Coord]] = None) -> Placement:
    """Snap each instance to the nearest free tile of a compatible role.
    Instances are processed in (kind, name) order; candidate slots are
    ranked by squared distance with (y, x) tie-breaks."""
    placement = Placement(legal=True)
    free: Dict[str, List[Coord]] = {role: fabric.slots(role)
                                    for role in ("pe", "mem", "io")}
    taken: set = set()

    if anchors:
        for name, xy in anchors.items():
            placement.coords[name] = xy
            taken.add(xy)

    order = sorted((n for n in packed.instances if n not in placement.coords),
                   key=lambda n: (packed.instances[n].kind, n))
    for name in order:
        kind = packed.instances[name].kind
        role = _KIND_ROLE[kind]
        px, py = continuous.get(name, (fabric.width / 2, fabric.height / 2))
        candidates = [xy for xy in free[role] if xy not in taken]
        if not candidates:
            raise InsufficientCapacity(
                f"no free {role} tile for {name} "
                f"({len(fabric.slots(role))} total)")
        best = min(candidates,
                   key=lambda xy: ((xy[0] - px) ** 2 + (xy[1] - py) ** 2,
                                   xy[1], xy[0]))
        placement.coords[name] = best
        taken.add(best)
    return placement


def check_legal(placement: Placement, packed: PackedGraph,
                fabric: FabricInfo) -> List[str]:
    problems = []
    seen: Dict[Coord, str] = {}
    for name, xy in placement.coords.items():
        kind = packed.instances[name].kind
        role = fabric.roles.get(xy)
        if role is None:
            problems.append(f"{name}: tile {xy} hosts no core")
        elif role != _KIND_ROLE[kind]:
            problems.append(f"{name}: {kind} placed on {role} tile {xy}")
        if xy in seen:
            problems.append(f"{name}: tile {xy} already holds {seen[xy]}")
        seen[xy] = name
    return problems


# --- detailed placement --------------------------------------------------------------


def eq2_cost(net, placement, gamma: float, alpha: float,
             occupied: Optional[set] = None) -> float:
    """Net cost with a pass-through discount: the part of the bounding
    box overlapping occupied tiles is discounted at weight gamma, the
    remainder is raised to the alpha power (clamped at zero first, since
    a large discount would otherwise produce a negative base)."""
    coords = placement if isinstance(placement, dict) else placement.coords
    if occupied is None:
        occupied = set(coords.values())
    pins = _pin_coords(net, coords)
    xs = [p[0] for p in pins]
    ys = [p[1] for p in pins]
    length = (max(xs) - min(xs)) + (max(ys) - min(ys))
    overlap = sum(1 for (ox, oy) in occupied
                  if min(xs) <= ox <= max(xs) and min(ys) <= oy <= max(ys))
    return max(length - gamma * overlap, 0.0) ** alpha


def total_cost(packed: PackedGraph, placement: Placement,
               gamma: float, alpha: float) -> float:
    occupied = set(placement.coords.values())
    return sum(eq2_cost(net, placement.coords, gamma, alpha, occupied)
               for net in packed.nets)


class _SAState:
    """Incremental cost bookkeeping for annealing: an occupancy grid for
    fast bounding-box overlap counts and per-net cached costs."""

    def __init__(self, packed: PackedGraph, placement: Placement,
                 fabric: FabricInfo, gamma: float, alpha: float):
        self.packed = packed
        self.coords = dict(placement.coords)
        self.gamma = gamma
        self.alpha = alpha
        self.grid = np.zeros((fabric.width, fabric.height), dtype=np.int32)
        self.holder: Dict[Coord, str] = {}
        for n, xy in self.coords.items():
            self.grid[xy] += 1
            self.holder[xy] = n
        self.net_pins: List[List[str]] = [
            [split_ep(ep)[0] for ep in net.endpoints()]
            for net in packed.nets]
        self.nets_of: Dict[str, List[int]] = {}
        for i, pins in enumerate(self.net_pins):
            for inst in pins:
                self.nets_of.setdefault(inst, []).append(i)
        self.net_cost = [self._cost(i) for i in range(len(packed.nets))]

    def _cost(self, net_idx: int) -> float:
        xs, ys = zip(*(self.coords[i] for i in self.net_pins[net_idx]))
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        length = (x1 - x0) + (y1 - y0)
        overlap = int(self.grid[x0:x1 + 1, y0:y1 + 1].sum())
        return max(length - self.gamma * overlap, 0.0) ** self.alpha

    def total(self) -> float:
        return sum(self.net_cost)

    def _affected(self, insts: List[str], cells: Iterable[Coord]):
        nets = set()
        for inst in insts:
            nets.update(self.nets_of.get(inst, ()))
        cells = list(cells)
        for i, pins in enumerate(self.net_pins):
            if i in nets:
                continue
            xs, ys = zip(*(self.coords[p] for p in pins))
            for cx, cy in cells:
                if min(xs) <= cx <= max(xs) and min(ys) <= cy <= max(ys):
                    nets.add(i)
                    break
        return nets

    def evaluate(self, insts_cells):
        """Cost delta of a move or swap without committing it. Returns
        (delta, token); pass the token to commit() to apply."""
        old_cells = [(inst, self.coords[inst]) for inst, _ in insts_cells]
        changed = {c for _, c in old_cells} | {c for _, c in insts_cells}
        nets = self._affected([i for i, _ in insts_cells], changed)
        before = sum(self.net_cost[i] for i in nets)
        self._displace(insts_cells)
        after = {i: self._cost(i) for i in nets}
        self._displace(old_cells)
        delta = sum(after.values()) - before
        return delta, (insts_cells, after)

    def commit(self, token) -> None:
        insts_cells, after = token
        self._displace(insts_cells)
        for i, c in after.items():
            self.net_cost[i] = c

    def _displace(self, insts_cells) -> None:
        for inst, _ in insts_cells:
            xy = self.coords[inst]
            self.grid[xy] -= 1
            del self.holder[xy]
        for inst, cell in insts_cells:
            self.coords[inst] = cell
            self.grid[cell] += 1
            self.holder[cell] = inst


def metropolis_accept(delta: float, t: float, rng: random.Random) -> bool:
    """Accept improving moves always; worsening moves with probability
    exp(-delta/t). At t=0 a worsening move is never accepted."""
    if delta <= 0:
        return True
    return t > 0 and rng.random() < math.exp(-delta / t)


def detailed_place(legal: Placement, packed: PackedGraph,
                   fabric: FabricInfo, params: PlaceParams) -> Placement:
    """Simulated annealing over same-role moves and swaps with Metropolis
    acceptance on the summed net cost. Deterministic for a fixed seed;
    returns the best placement visited."""
    rng = random.Random(params.seed)
    state = _SAState(packed, legal, fabric, params.gamma, params.alpha)
    movables = sorted(n for n, i in packed.instances.items()
                      if i.kind != "IO")
    if not movables:
        return legal.copy()
    slot_pool = {role: fabric.slots(role) for role in ("pe", "mem", "io")}

    def propose():
        inst = rng.choice(movables)
        role = _KIND_ROLE[packed.instances[inst].kind]
        target = rng.choice(slot_pool[role])
        if target == state.coords[inst]:
            return None
        holder = state.holder.get(target)
        if holder is None:
            return [(inst, target)]
        if holder == inst or holder not in movables:
            return None
        if _KIND_ROLE[packed.instances[holder].kind] != role:
            return None
        return [(inst, target), (holder, state.coords[inst])]

    # temperature calibration: aim for ~80% initial acceptance
    if params.sa_t0 is None:
        worsens = []
        for _ in range(100):
            move = propose()
            if move:
                d, _ = state.evaluate(move)
                if d > 0:
                    worsens.append(d)
        t = (sum(worsens) / len(worsens)) / -math.log(0.8) if worsens else 1.0
    else:
        t = params.sa_t0

    best_coords = dict(state.coords)
    best_cost = state.total()
    current = best_cost
    moves_per_sweep = params.sa_moves_per_instance * len(movables)
    for _ in range(params.sa_max_sweeps):
        accepted = attempted = 0
        for _ in range(moves_per_sweep):
            move = propose()
            if move is None:
                continue
            attempted += 1
            delta, token = state.evaluate(move)
            if metropolis_accept(delta, t, rng):
                state.commit(token)
                current += delta
                accepted += 1
                if current < best_cost - 1e-12:
                    best_cost = current
                    best_coords = dict(state.coords)
        if t <= params.sa_t_min:
            break
        if attempted and accepted / attempted < params.sa_min_accept:
            break
        t *= params.sa_decay
    return Placement(best_coords, legal=True)


# --- alpha sweep ------------------------------------------------------------------


@dataclass
class SweepResult:
    alpha: float
    placement: Placement
    route_result: object
    critical_path: float
    tried: Dict[float, Optional[float]]


def alpha_sweep(legal: Placement, packed: PackedGraph, fabric: FabricInfo,
                route_fn: Callable[[Placement], Tuple[object, float]],
                alphas: Sequence[float],
                params: PlaceParams) -> SweepResult:
    """Run detailed placement and routing per alpha; keep the placement
    with the shortest post-route critical path. Alphas whose routing
    fails are skipped."""
    if not alphas:
        raise ValueError("alpha range must be non-empty")
    best: Optional[SweepResult] = None
    tried: Dict[float, Optional[float]] = {}
    for alpha in alphas:
        p = PlaceParams(**{**params.__dict__, "alpha": float(alpha)})
        placement = detailed_place(legal, packed, fabric, p)
        try:
            route_result, critical = route_fn(placement)
        except FabricError as exc:  # routing failure skips this alpha
            log.info("alpha %s failed to route: %s", alpha, exc)
            tried[alpha] = None
            continue
        tried[alpha] = critical
        if best is None or critical < best.critical_path:
            best = SweepResult(alpha, placement, route_result, critical, tried)
    if best is None:
        raise AllFailed("every alpha in the sweep failed to route")
    best.tried = tried
    return best


# --- placement files ----------------------------------------------------------------


def serialize_placement(p: Placement) -> str:
    lines = [f"place {name} {x} {y}"
             for name, (x, y) in sorted(p.coords.items())]
    return "\n".join(lines) + "\n"


def parse_placement(text: str) -> Placement:
    p = Placement(legal=True)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] != "place" or len(tokens) != 4:
            raise ParseError("expected: place <inst> <x> <y>", line=lineno)
        try:
            p.coords[tokens[1]] = (int(tokens[2]), int(tokens[3]))
        except ValueError:
            raise ParseError("coordinates must be integers", line=lineno)
    return p
