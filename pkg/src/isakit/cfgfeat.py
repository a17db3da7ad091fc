"""Control-flow-graph features for a class, aggregated over its methods.

Distance and connectivity metrics are taken on the undirected simple view of
each method graph; cyclomatic complexity uses the directed simple view.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import networkx as nx
import numpy as np

# Output order of the class-level feature row.
FEATURE_NAMES = (
    "vertices_avg", "vertices_min", "vertices_max",
    "edges_avg", "edges_min", "edges_max",
    "avg_rad", "avg_diam", "avg_center", "avg_periphery",
    "avg_spl", "alg_conn", "avg_deg", "std_deg", "avg_density",
    "vertex_conn", "edge_conn", "transitivity",
    "per_cc10", "avg_cc", "std_cc",
)


class CfgError(ValueError):
    pass


@dataclass(frozen=True)
class CfgGraph:
    method_id: str
    node_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.node_count < 1:
            raise CfgError(f"{self.method_id}: node_count must be >= 1")
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise CfgError(f"{self.method_id}: edge ({u}, {v}) out of range [0, {self.node_count})")
            if u != v:
                norm.add((u, v))
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    def directed(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.edges)
        return g

    def undirected(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True)
class MethodMetrics:
    vertices: int
    edges: int
    radius: float
    diameter: float
    center_size: int
    periphery_size: int
    avg_shortest_path: float
    algebraic_connectivity: float
    avg_degree: float
    density: float
    vertex_connectivity: float
    edge_connectivity: float
    transitivity: float
    cc: int


@dataclass(frozen=True)
class ClassCfgFeatures:
    vertices_avg: float
    vertices_min: float
    vertices_max: float
    edges_avg: float
    edges_min: float
    edges_max: float
    avg_rad: float
    avg_diam: float
    avg_center: float
    avg_periphery: float
    avg_spl: float
    alg_conn: float
    avg_deg: float
    std_deg: float
    avg_density: float
    vertex_conn: float
    edge_conn: float
    transitivity: float
    per_cc10: float
    avg_cc: float
    std_cc: float

    def as_row(self) -> dict[str, float]:
        return asdict(self)


def algebraic_connectivity(g: nx.Graph) -> float:
    """Second-smallest eigenvalue of the combinatorial Laplacian."""
    n = g.number_of_nodes()
    if n < 2:
        return 0.0
    L = nx.laplacian_matrix(g, nodelist=sorted(g.nodes)).toarray().astype(float)
    vals = np.linalg.eigvalsh(L)
    return float(max(vals[1], 0.0))


def method_metrics(g: CfgGraph) -> MethodMetrics:
    ug = g.undirected()
    n = g.node_count
    e_dir = len(g.edges)
    cc = e_dir - n + 2
    if n == 1:
        # a single statement: distances and connectivity are 0 by convention
        return MethodMetrics(vertices=1, edges=e_dir, radius=0.0, diameter=0.0, center_size=1,
                             periphery_size=1, avg_shortest_path=0.0, algebraic_connectivity=0.0,
                             avg_degree=0.0, density=0.0, vertex_connectivity=0.0,
                             edge_connectivity=0.0, transitivity=0.0, cc=cc)
    if not nx.is_connected(ug):
        comps = sorted(sorted(c) for c in nx.connected_components(ug))
        raise CfgError(f"{g.method_id}: graph is disconnected, components {comps}")

    ecc = nx.eccentricity(ug)
    radius = min(ecc.values())
    diameter = max(ecc.values())
    dist = dict(nx.all_pairs_shortest_path_length(ug))
    total = sum(d for src in dist.values() for d in src.values())
    m_u = ug.number_of_edges()
    return MethodMetrics(
        vertices=n,
        edges=e_dir,
        radius=float(radius),
        diameter=float(diameter),
        center_size=sum(1 for v in ecc.values() if v == radius),
        periphery_size=sum(1 for v in ecc.values() if v == diameter),
        avg_shortest_path=total / (n * (n - 1)),
        algebraic_connectivity=algebraic_connectivity(ug),
        avg_degree=2.0 * m_u / n,
        density=2.0 * m_u / (n * (n - 1)),
        vertex_connectivity=float(nx.node_connectivity(ug)),
        edge_connectivity=float(nx.edge_connectivity(ug)),
        transitivity=float(nx.transitivity(ug)),
        cc=cc,
    )


def class_features(methods, method_cc=None) -> ClassCfgFeatures:
    """Aggregate per-method metrics into one class-level feature row.

    ``method_cc`` overrides the graph-derived cyclomatic complexities, e.g.
    when they come from an external metrics tool.
    """
    methods = list(methods)
    if not methods:
        raise CfgError("class has no methods")
    mm = [method_metrics(g) for g in methods]
    cc = np.asarray([m.cc for m in mm] if method_cc is None else method_cc, dtype=float)
    if cc.shape != (len(methods),):
        raise CfgError("method_cc must have one entry per method")
    return _aggregate(mm, cc)


def _aggregate(mm, cc) -> ClassCfgFeatures:
    def col(attr):
        return np.array([getattr(m, attr) for m in mm], dtype=float)

    v, e, deg = col("vertices"), col("edges"), col("avg_degree")
    return ClassCfgFeatures(
        vertices_avg=float(v.mean()), vertices_min=float(v.min()), vertices_max=float(v.max()),
        edges_avg=float(e.mean()), edges_min=float(e.min()), edges_max=float(e.max()),
        avg_rad=float(col("radius").mean()),
        avg_diam=float(col("diameter").mean()),
        avg_center=float(col("center_size").mean()),
        avg_periphery=float(col("periphery_size").mean()),
        avg_spl=float(col("avg_shortest_path").mean()),
        alg_conn=float(col("algebraic_connectivity").mean()),
        avg_deg=float(deg.mean()),
        std_deg=float(deg.std()),
        avg_density=float(col("density").mean()),
        vertex_conn=float(col("vertex_connectivity").mean()),
        edge_conn=float(col("edge_connectivity").mean()),
        transitivity=float(col("transitivity").mean()),
        per_cc10=float(100.0 * np.count_nonzero(cc > 10) / len(cc)),
        avg_cc=float(cc.mean()),
        std_cc=float(cc.std()),
    )


def cc_summary(method_cc) -> dict[str, float]:
    """avg/std of cyclomatic complexity and the share of methods above 10."""
    cc = np.asarray(method_cc, dtype=float)
    if cc.size == 0:
        raise CfgError("empty cc list")
    return {"avg_cc": float(cc.mean()), "std_cc": float(cc.std()),
            "per_cc10": float(100.0 * np.count_nonzero(cc > 10) / cc.size)}


def load_class_graphs(path) -> tuple[str, list[CfgGraph]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return parse_class_graphs(doc)


def parse_class_graphs(doc: dict) -> tuple[str, list[CfgGraph]]:
    try:
        name = str(doc["class"])
        methods = [CfgGraph(str(m["id"]), int(m["n"]), tuple(tuple(e) for e in m.get("edges", [])))
                   for m in doc["methods"]]
    except (KeyError, TypeError) as exc:
        raise CfgError(f"malformed class graph document: {exc}") from None
    return name, methods
