"""cgrafab: CGRA interconnect generation, place and route, and bitstreams."""

from .ir import (
    Diagnostic,
    IrNode,
    NodeId,
    NodeKind,
    RoutingGraph,
    SBDir,
    Side,
    deserialize_graph,
    serialize_graph,
)
from .arch import (
    ArchSpec,
    CoreSpec,
    PortConnPolicy,
    SBTopology,
    apply_port_policy,
    create_uniform_interconnect,
    disjoint_map,
    insert_registers,
    parse_arch_spec,
    wilton_map,
)
from .netlist import (
    ConfigField,
    Instance,
    Metrics,
    StructNetlist,
    area_proxy,
    emit_config_map,
    emit_rtl,
    lower_ready_valid,
    lower_static,
    parse_config_map,
    parse_rtl,
    ready_join,
    verify_structure,
)
from .appgraph import AppGraph, PackedGraph, pack, parse_app, serialize_app
from .place import (
    FabricInfo,
    PlaceParams,
    Placement,
    alpha_sweep,
    assign_io_sites,
    detailed_place,
    eq2_cost,
    global_place,
    hpwl,
    legalize,
    parse_placement,
    serialize_placement,
    smooth_hpwl,
)
from .route import (
    RouteParams,
    RouteSet,
    TimingInfo,
    astar,
    edge_cost,
    parse_routes,
    route,
    serialize_routes,
    sta,
)
from .bitstream import (
    Bitstream,
    ConfiguredFabric,
    configure,
    exhaustive_sweep,
    functional_sim,
    generate_bitstream,
    parse_bitstream,
    serialize_bitstream,
)

__version__ = "0.1.0"
