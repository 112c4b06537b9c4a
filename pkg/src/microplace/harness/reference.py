"""The reference cloud-edge-network topology used by the evaluation runs."""

from __future__ import annotations

from ..topology import NodeKind, PhysicalLink, PhysicalNode, Topology

CAPACITY = {
    NodeKind.NETWORK_DEVICE: 250.0,
    NodeKind.BASE_STATION: 500.0,
    NodeKind.EDGE_SERVER: 1000.0,
    NodeKind.CLOUD_SERVER: 10000.0,
}

# (delay ms, cost) per link tier
DEFAULT_TIERS = {
    "edge": (2.0, 1.0),
    "core": (5.0, 2.0),
    "cloud": (20.0, 5.0),
}

CORE_GRID = ("nd1", "nd2", "nd3", "nd4", "nd5", "nd6")  # two rows of three


def build_reference_topology(tiers: dict[str, tuple[float, float]] | None = None) -> Topology:
    """Four end users and four content generators behind two base stations.

    Each base station serves two users and two generators, links to its own
    edge server and also straight into the core.  The six network devices
    form a 2x3 grid; the cloud server hangs off the top-middle device and
    hosts the initial service registry.
    """
    t = dict(DEFAULT_TIERS)
    t.update(tiers or {})

    def link(a, b, tier):
        delay, cost = t[tier]
        return PhysicalLink(a, b, delay, cost)

    nodes, links = [], []
    sides = (("bs1", "es1", "nd1", "nd4", ("eu1", "eu2"), ("cn1", "cn2")),
             ("bs2", "es2", "nd3", "nd6", ("eu3", "eu4"), ("cn3", "cn4")))
    for bs, es, es_uplink, bs_uplink, users, generators in sides:
        nodes.append(PhysicalNode(bs, NodeKind.BASE_STATION, CAPACITY[NodeKind.BASE_STATION]))
        nodes.append(PhysicalNode(es, NodeKind.EDGE_SERVER, CAPACITY[NodeKind.EDGE_SERVER]))
        for u in users:
            nodes.append(PhysicalNode(u, NodeKind.END_USER))
            links.append(link(u, bs, "edge"))
        for g in generators:
            nodes.append(PhysicalNode(g, NodeKind.CONTENT_GENERATOR))
            links.append(link(g, bs, "edge"))
        links.append(link(bs, es, "edge"))
        links.append(link(es, es_uplink, "edge"))
        links.append(link(bs, bs_uplink, "core"))
    for nd in CORE_GRID:
        nodes.append(PhysicalNode(nd, NodeKind.NETWORK_DEVICE, CAPACITY[NodeKind.NETWORK_DEVICE]))
    top, bottom = CORE_GRID[:3], CORE_GRID[3:]
    for row in (top, bottom):
        links += [link(a, b, "core") for a, b in zip(row, row[1:])]
    links += [link(a, b, "core") for a, b in zip(top, bottom)]
    nodes.append(PhysicalNode("cloud", NodeKind.CLOUD_SERVER, CAPACITY[NodeKind.CLOUD_SERVER],
                              hosts_registry=True))
    links.append(link("cloud", "nd2", "cloud"))
    return Topology.build(nodes, links)
