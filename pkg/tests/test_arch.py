import itertools

import pytest

from cgrafab import errors
from cgrafab.arch import (
    ArchSpec,
    PortConnPolicy,
    SBTopology,
    apply_port_policy,
    create_uniform_interconnect,
    disjoint_map,
    insert_registers,
    parse_arch_spec,
    registered_tracks,
    wilton_map,
)
from cgrafab.ir import NodeKind, SBDir, Side, serialize_graph

ALL_SIDES = (Side.North, Side.East, Side.South, Side.West)


def side_pairs():
    return [(a, b) for a in Side for b in Side if a != b]


class TestDisjointMap:
    def test_identity(self):
        assert disjoint_map(Side.West, Side.East, 3, 5) == 3

    def test_single_track(self):
        assert disjoint_map(Side.North, Side.South, 0, 1) == 0

    def test_identity_everywhere(self):
        for a, b in side_pairs():
            for t in range(5):
                assert disjoint_map(a, b, t, 5) == t

    def test_same_side(self):
        with pytest.raises(errors.SameSide):
            disjoint_map(Side.North, Side.North, 0, 5)


class TestWiltonMap:
    def test_straight_through_identity(self):
        assert wilton_map(Side.West, Side.East, 2, 5) == 2
        for a in Side:
            for t in range(5):
                assert wilton_map(a, a.opposite(), t, 5) == t

    def test_bijection_per_side_pair(self):
        for a, b in side_pairs():
            image = {wilton_map(a, b, t, 5) for t in range(5)}
            assert image == set(range(5))

    def test_same_side(self):
        with pytest.raises(errors.SameSide):
            wilton_map(Side.East, Side.East, 1, 5)

    def test_turn_non_closure(self):
        # Some two-turn composition must change the track index (W=5).
        changed = False
        for b in Side:
            for a in Side:
                if a == b:
                    continue
                for c in Side:
                    if c == b.opposite():
                        continue
                    for t in range(5):
                        mid = wilton_map(a, b, t, 5)
                        out = wilton_map(b.opposite(), c, mid, 5)
                        if out != t:
                            changed = True
        assert changed


def small_spec(**kw):
    defaults = dict(width=3, height=3, layers=((16, 2),),
                    sb_topology=SBTopology.Disjoint, reg_density=0.0)
    defaults.update(kw)
    return ArchSpec(**defaults)


def sb_fanin_split(g, nid):
    """Fan-in of a switch box node, split into routing vs core sources."""
    routing, core = [], []
    for src in g.fan_in(nid):
        (core if g.node(src).kind is NodeKind.Port else routing).append(src)
    return routing, core


class TestCreateUniformInterconnect:
    def test_large_fabric_builds(self):
        spec = ArchSpec(width=32, height=32, layers=((16, 5),),
                        sb_topology=SBTopology.Wilton, reg_density=1.0)
        g = create_uniform_interconnect(spec)
        assert g.validate() == []
        assert g.frozen

    def test_degenerate_1x1(self):
        spec = small_spec(width=1, height=1, layers=((16, 1),))
        g = create_uniform_interconnect(spec)
        sbs = [n for n in g.nodes() if n.kind is NodeKind.SwitchBox]
        assert len(sbs) == 8
        for n in sbs:
            routing, core = sb_fanin_split(g, n.id)
            if n.io is SBDir.Outgoing:
                # three same-tile incoming sides + the io core output
                assert len(routing) == 3
                assert len(core) == len(spec.io_core.outputs)
            else:
                # no neighbors on a 1x1 fabric
                assert g.fan_in(n.id) == []

    def test_center_tile_fanin_matches_combinatorial_count(self):
        spec = small_spec()
        g = create_uniform_interconnect(spec)
        out_edges = 0
        for n in g.nodes():
            if (n.kind is NodeKind.SwitchBox and n.io is SBDir.Outgoing
                    and (n.x, n.y) == (1, 1)):
                routing, core = sb_fanin_split(g, n.id)
                assert len(routing) == 3
                assert len(core) == len(spec.pe_core.outputs)
                out_edges += len(g.fan_in(n.id))
        # independent count: 4 sides x W tracks x (3 + |outputs|)
        w = 2
        assert out_edges == 4 * w * (3 + len(spec.pe_core.outputs))

    def test_fanin_law_both_topologies(self):
        for topo in SBTopology:
            g = create_uniform_interconnect(small_spec(sb_topology=topo))
            for n in g.nodes():
                if n.kind is NodeKind.SwitchBox and n.io is SBDir.Outgoing:
                    routing, _ = sb_fanin_split(g, n.id)
                    assert len(routing) == 3

    def test_idempotent_construction(self):
        spec = small_spec(width=4, height=3, reg_density=0.5)
        a = create_uniform_interconnect(spec)
        b = create_uniform_interconnect(spec)
        assert a.same_structure(b)
        assert serialize_graph(a) == serialize_graph(b)

    def test_disjoint_fanin_same_track_per_side(self):
        g = create_uniform_interconnect(small_spec(layers=((16, 5),)))
        for n in g.nodes():
            if n.kind is NodeKind.SwitchBox and n.io is SBDir.Outgoing:
                routing, _ = sb_fanin_split(g, n.id)
                srcs = [g.node(s) for s in routing]
                assert {s.side for s in srcs} == set(Side) - {n.side}
                assert all(s.track == n.track for s in srcs)

    def test_randomized_specs_serialize_round_trip(self):
        import random
        from cgrafab.ir import deserialize_graph
        rng = random.Random(29)
        for _ in range(6):
            spec = small_spec(
                width=rng.randint(1, 4), height=rng.randint(1, 4),
                layers=((16, rng.randint(1, 4)),),
                sb_topology=rng.choice(list(SBTopology)),
                reg_density=rng.choice([0.0, 0.5, 1.0]))
            g = create_uniform_interconnect(spec)
            text = serialize_graph(g)
            g2 = deserialize_graph(text)
            assert g.same_structure(g2)
            assert serialize_graph(g2) == text

    def test_generated_graph_validates(self):
        for topo, density in itertools.product(SBTopology, (0.0, 1.0)):
            g = create_uniform_interconnect(
                small_spec(sb_topology=topo, reg_density=density))
            assert g.validate() == []

    def test_cb_taps_all_policy_sides(self):
        spec = small_spec(layers=((16, 3),))
        g = create_uniform_interconnect(spec)
        pid = g.find(NodeKind.Port, 1, 1, 16, port_name="pe_in0")
        srcs = [g.node(s) for s in g.fan_in(pid)]
        assert len(srcs) == 4 * 3
        assert all(s.kind is NodeKind.SwitchBox and s.io is SBDir.Incoming
                   for s in srcs)

    def test_disjoint_track_closure(self):
        g = create_uniform_interconnect(small_spec(layers=((16, 3),)))
        for start in g.nodes():
            if start.kind is not NodeKind.SwitchBox:
                continue
            seen, stack = set(), [start.id]
            while stack:
                nid = stack.pop()
                if nid in seen:
                    continue
                seen.add(nid)
                node = g.node(nid)
                assert node.track == start.track
                for dst in g.fan_out(nid):
                    if g.node(dst).kind is NodeKind.SwitchBox:
                        stack.append(dst)

    def test_mem_column_roles(self):
        spec = small_spec(width=6, height=5, mem_column_stride=2)
        assert spec.tile_role(0, 2) == "io"
        assert spec.tile_role(2, 2) == "mem"
        assert spec.tile_role(4, 2) == "mem"
        assert spec.tile_role(3, 2) == "pe"
        assert spec.tile_role(3, 0) == "io"
        g = create_uniform_interconnect(spec)
        assert g.find(NodeKind.Port, 2, 2, 16, port_name="mem_in0") is not None
        assert g.find(NodeKind.Port, 3, 2, 16, port_name="pe_in0") is not None
        assert g.find(NodeKind.Port, 0, 2, 16, port_name="io_in0") is not None


class TestApplyPortPolicy:
    def count_core_to_sb(self, g, x, y):
        n = 0
        for a, b in g.edges():
            na, nb = g.node(a), g.node(b)
            if (na.kind is NodeKind.Port and nb.kind is NodeKind.SwitchBox
                    and (na.x, na.y) == (x, y)):
                n += 1
        return n

    def test_removing_one_side_drops_w_times_outputs(self):
        spec = small_spec(layers=((16, 5),))
        g4 = create_uniform_interconnect(spec)
        spec3 = small_spec(layers=((16, 5),), port_policy=PortConnPolicy(
            sb_out_sides=(Side.North, Side.South, Side.West)))
        g3 = apply_port_policy(g4, spec3)
        before = self.count_core_to_sb(g4, 1, 1)
        after = self.count_core_to_sb(g3, 1, 1)
        assert before - after == 5 * 2  # W tracks x two PE outputs

    def test_cb_sides_halved(self):
        spec = small_spec(layers=((16, 5),))
        g4 = create_uniform_interconnect(spec)
        spec2 = small_spec(layers=((16, 5),), port_policy=PortConnPolicy(
            cb_sides=(Side.North, Side.West)))
        g2 = apply_port_policy(g4, spec2)
        pid4 = g4.find(NodeKind.Port, 1, 1, 16, port_name="pe_in0")
        pid2 = g2.find(NodeKind.Port, 1, 1, 16, port_name="pe_in0")
        assert len(g4.fan_in(pid4)) == 20
        assert len(g2.fan_in(pid2)) == 10

    def test_full_policy_is_identity(self):
        spec = small_spec()
        g = create_uniform_interconnect(spec)
        g2 = apply_port_policy(g, spec)
        assert g.same_structure(g2)

    def test_empty_policy_rejected(self):
        with pytest.raises(errors.EmptyPolicy):
            PortConnPolicy(cb_sides=())


class TestInsertRegisters:
    def test_density_zero_unchanged(self):
        spec = small_spec()
        g = create_uniform_interconnect(spec)
        g2 = insert_registers(g, spec)
        assert g.same_structure(g2)

    def test_density_one_counts(self):
        spec = small_spec(layers=((16, 5),), reg_density=1.0)
        g = create_uniform_interconnect(spec)
        regs = [n for n in g.nodes() if n.kind is NodeKind.Register
                and (n.x, n.y) == (1, 1)]
        rmuxes = [n for n in g.nodes() if n.kind is NodeKind.RegMux
                  and (n.x, n.y) == (1, 1)]
        assert len(regs) == 20   # 4 sides x 5 tracks on an interior tile
        assert len(rmuxes) == 20

    def test_regmux_fanin_exactly_two(self):
        spec = small_spec(reg_density=1.0)
        g = create_uniform_interconnect(spec)
        rmuxes = [n for n in g.nodes() if n.kind is NodeKind.RegMux]
        assert rmuxes
        for n in rmuxes:
            srcs = [g.node(s).kind for s in g.fan_in(n.id)]
            assert len(srcs) == 2
            assert srcs == [NodeKind.SwitchBox, NodeKind.Register]

    def test_half_density_track_selection(self):
        assert registered_tracks(5, 1.0) == [0, 1, 2, 3, 4]
        assert registered_tracks(5, 0.5) == [0, 2, 4]
        assert registered_tracks(5, 0.25) == [0, 4]
        assert registered_tracks(5, 0.0) == []

    def test_boundary_has_fewer_registers(self):
        spec = small_spec(layers=((16, 2),), reg_density=1.0)
        g = create_uniform_interconnect(spec)
        corner = [n for n in g.nodes() if n.kind is NodeKind.Register
                  and (n.x, n.y) == (0, 0)]
        # only east and south neighbors exist at the north-west corner
        assert {n.side for n in corner} == {Side.East, Side.South}


class TestMuxCensus:
    def expected_census(self, spec):
        """Closed-form count of mux sites (fan-in >= 2 nodes)."""
        w, h = spec.width, spec.height
        total = 0
        for bw, tracks in spec.layers:
            total += w * h * 4 * tracks  # every SB-out has fan-in 3
            for y in range(h):
                for x in range(w):
                    role = spec.tile_role(x, y)
                    core = spec.core_for_role(role)
                    # io hookups are exempt from the port policy
                    n_cb_sides = 4 if role == "io" \
                        else len(spec.port_policy.cb_sides)
                    cb_fanin = n_cb_sides * tracks
                    if cb_fanin >= 2:
                        total += sum(1 for _, pbw in core.inputs if pbw == bw)
                    # registers: one 2-input bypass mux per registered
                    # (side, track) with a neighbor on that side
                    n_sides = sum(1 for s in ALL_SIDES
                                  if 0 <= x + {Side.North: 0, Side.East: 1,
                                               Side.South: 0, Side.West: -1}[s] < w
                                  and 0 <= y + {Side.North: -1, Side.East: 0,
                                                Side.South: 1, Side.West: 0}[s] < h)
                    total += n_sides * len(registered_tracks(tracks,
                                                             spec.reg_density))
        return total

    def observed_census(self, g):
        return sum(1 for n in g.nodes() if len(g.fan_in(n.id)) >= 2)

    @pytest.mark.parametrize("tracks", [1, 2, 3])
    @pytest.mark.parametrize("density", [0.0, 0.5, 1.0])
    def test_census_matches(self, tracks, density):
        spec = small_spec(layers=((16, tracks),), reg_density=density)
        g = create_uniform_interconnect(spec)
        assert self.observed_census(g) == self.expected_census(spec)

    def test_census_with_trimmed_policy(self):
        spec = small_spec(layers=((16, 2),), port_policy=PortConnPolicy(
            cb_sides=(Side.North,), sb_out_sides=(Side.North, Side.West)))
        g = create_uniform_interconnect(spec)
        assert self.observed_census(g) == self.expected_census(spec)


SPEC_TEXT = """ \
[array]
width = 8
height = 8

[layer.16]
tracks = 5
topology = wilton
reg_density = 1.0

[core.pe]
in = 4x16
out = 2x16
delay = 2

[core.io]
in = 1x16
out = 1x16
delay = 0

[policy]
cb_sides = N,E,S,W
sb_out_sides = N,E,S,W

[mem]
column_stride = 4
"""


class TestSpecFile:
    def test_parse_full_spec(self):
        spec = parse_arch_spec(SPEC_TEXT)
        assert (spec.width, spec.height) == (8, 8)
        assert spec.layers == ((16, 5),)
        assert spec.sb_topology is SBTopology.Wilton
        assert spec.reg_density == 1.0
        assert spec.mem_column_stride == 4
        assert len(spec.pe_core.inputs) == 4
        assert spec.pe_core.delay == 2
        assert spec.port_policy.sb_out_sides == ALL_SIDES

    def test_defaults(self):
        spec = parse_arch_spec("[array]\nwidth=4\nheight=4\n"
                               "[layer.16]\ntracks=2\n")
        assert spec.sb_topology is SBTopology.Wilton
        assert spec.reg_density == 0.0
        assert spec.mem_column_stride == 0

    def test_unknown_section(self):
        with pytest.raises(errors.InvalidSpec):
            parse_arch_spec("[array]\nwidth=2\nheight=2\n"
                            "[layer.16]\ntracks=2\n[bogus]\nx=1\n")

    def test_malformed_file(self):
        with pytest.raises(errors.ParseError):
            parse_arch_spec("width=8\n[array\n")

    def test_bad_track_count(self):
        with pytest.raises(errors.InvalidSpec):
            parse_arch_spec("[array]\nwidth=2\nheight=2\n[layer.16]\ntracks=0\n")

    def test_short_and_long_side_names(self):
        spec = parse_arch_spec("[array]\nwidth=2\nheight=2\n"
                               "[layer.16]\ntracks=1\n"
                               "[policy]\ncb_sides=North,east\n")
        assert spec.port_policy.cb_sides == (Side.North, Side.East)
