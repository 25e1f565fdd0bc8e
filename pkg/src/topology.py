"""
Agent networks, dominating sets and dominating-set partitions.

A partition splits the agent graph into star-shaped blocks, each led by one
dominant vertex (the hub) that is adjacent to every other member of its block.
"""

import logging
from typing import Iterable, Set, Tuple

import networkx as nx

try:
    from .models import AgentGraph, NotDominatingError, Partition, PartitionReport
except ImportError:
    from models import AgentGraph, NotDominatingError, Partition, PartitionReport


logger = logging.getLogger(__name__)


def make_graph(n: int, edges: Iterable[Tuple[int, int]]) -> AgentGraph:
    """
    Build an agent graph on vertices 1..n.

    Raises:
        ValueError: On n < 1, self-loops, or vertices out of range.
    """
    if n < 1:
        raise ValueError(f"a graph needs at least one vertex, got n={n}")
    normalized = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"self-loop on vertex {u}")
        if not (1 <= u <= n and 1 <= v <= n):
            raise ValueError(f"edge ({u}, {v}) has a vertex outside 1..{n}")
        normalized.add((min(u, v), max(u, v)))
    graph = AgentGraph(n=n, edges=frozenset(normalized))
    if not is_connected(graph):
        logger.info(f"agent graph with {n} vertices is disconnected; components are dominated independently")
    return graph


def to_networkx(g: AgentGraph) -> nx.Graph:
    G = nx.Graph()
    G.add_nodes_from(range(1, g.n + 1))
    G.add_edges_from(g.edges)
    return G


def is_connected(g: AgentGraph) -> bool:
    return nx.is_connected(to_networkx(g))


def star_graph(n: int) -> AgentGraph:
    """Vertex 1 joined to every other vertex."""
    return make_graph(n, ((1, v) for v in range(2, n + 1)))


def greedy_dominating_set(g: AgentGraph) -> Set[int]:
    """
    Greedy dominating set.

    Repeatedly picks the vertex whose closed neighbourhood covers the most
    undominated vertices. Ties prefer a vertex that is itself still
    undominated, then the lowest index.
    """
    G = to_networkx(g)
    undominated = set(G.nodes)
    chosen: Set[int] = set()
    while undominated:
        def key(v: int):
            gain = len(({v} | set(G.neighbors(v))) & undominated)
            return (-gain, v not in undominated, v)

        v = min(G.nodes, key=key)
        chosen.add(v)
        undominated -= {v} | set(G.neighbors(v))
    logger.debug(f"greedy dominating set of size {len(chosen)} on {g.n} vertices")
    return chosen


def build_partition(g: AgentGraph, dom: Iterable[int]) -> Partition:
    """
    Assign every vertex to one dominant vertex's block.

    Dominant vertices lead their own blocks; every other vertex joins the
    lowest-index adjacent dominant vertex.

    Raises:
        NotDominatingError: If some vertex has no adjacent dominant vertex.
    """
    G = to_networkx(g)
    hubs = sorted(set(int(v) for v in dom))
    for h in hubs:
        if h not in G:
            raise NotDominatingError(f"dominant vertex {h} is not in the graph")
    members = {h: [h] for h in hubs}
    hub_set = set(hubs)
    for v in sorted(G.nodes):
        if v in hub_set:
            continue
        adjacent = sorted(hub_set.intersection(G.neighbors(v)))
        if not adjacent:
            raise NotDominatingError(f"vertex {v} has no adjacent dominant vertex")
        members[adjacent[0]].append(v)
    return Partition(
        blocks=tuple(tuple(sorted(members[h])) for h in hubs),
        hubs=tuple(hubs),
    )


def validate_partition(g: AgentGraph, p: Partition) -> PartitionReport:
    """
    Check every partition invariant; never raises.

    Returns:
        A report naming the first violated check: "shape", "vertex range",
        "disjointness", "coverage", "hub membership" or "hub adjacency".
    """
    if len(p.blocks) != len(p.hubs) or not p.blocks:
        return PartitionReport(False, "shape", f"{len(p.blocks)} blocks but {len(p.hubs)} hubs")
    seen: Set[int] = set()
    for block in p.blocks:
        for v in block:
            if not 1 <= v <= g.n:
                return PartitionReport(False, "vertex range", f"vertex {v} outside 1..{g.n}")
            if v in seen:
                return PartitionReport(False, "disjointness", f"vertex {v} is in more than one block")
            seen.add(v)
    missing = set(range(1, g.n + 1)) - seen
    if missing:
        return PartitionReport(False, "coverage", f"vertices {sorted(missing)} are in no block")
    for block, hub in zip(p.blocks, p.hubs):
        if hub not in block:
            return PartitionReport(False, "hub membership", f"hub {hub} is not in its block")
        neighbors = g.neighbors(hub)
        for v in block:
            if v != hub and v not in neighbors:
                return PartitionReport(False, "hub adjacency", f"vertex {v} is not adjacent to hub {hub}")
    return PartitionReport(True)
