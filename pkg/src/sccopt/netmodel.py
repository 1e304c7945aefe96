"""Network data model, EPANET-INP subset reader, and graph decomposition.

The network is a directed graph: links (pipes and valves) join demand nodes
and fixed-head source nodes. All quantities are stored in SI units
(m, m^3/s); the INP flow-unit header is converted at parse time.
"""
from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
import scipy.sparse as sp

from .errors import ParseError

PIPE = "pipe"
VALVE = "valve"

# m^3/s per INP flow unit; US customary units imply ft lengths / inch diameters
_FLOW_UNITS = {
    "CFS": (0.028316846592, True),
    "GPM": (6.30901964e-5, True),
    "MGD": (0.043812636574, True),
    "IMGD": (0.052616782407, True),
    "AFD": (0.014276410185, True),
    "LPS": (1e-3, False),
    "LPM": (1.0 / 60000.0, False),
    "MLD": (1000.0 / 86400.0, False),
    "CMH": (1.0 / 3600.0, False),
    "CMD": (1.0 / 86400.0, False),
}


class ParserWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Link:
    """A pipe or valve joining two nodes; positive flow runs from_node -> to_node."""

    id: str
    from_node: str
    to_node: str
    kind: str = PIPE
    length: float = 0.0
    diameter: float = 0.1
    hw_coefficient: float = 100.0
    valve_loss: float = 0.0
    is_existing_prv: bool = False
    is_existing_dbv: bool = False

    @property
    def area(self) -> float:
        return math.pi * self.diameter**2 / 4.0

    def validate(self):
        if self.from_node == self.to_node:
            raise ValueError(f"link {self.id}: joins a node to itself")
        if self.kind == PIPE:
            if self.length <= 0 or self.diameter <= 0 or self.hw_coefficient <= 0:
                raise ValueError(f"pipe {self.id}: L, D and C must be positive")
        elif self.kind == VALVE:
            if self.diameter <= 0 or self.valve_loss < 0:
                raise ValueError(f"valve {self.id}: D must be positive and K >= 0")
        else:
            raise ValueError(f"link {self.id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class DemandNode:
    id: str
    elevation: float


@dataclass(frozen=True)
class SourceNode:
    id: str


@dataclass(eq=False)
class NetworkModel:
    """Immutable directed-graph water network with per-timestep demands and heads.

    demands has shape (n_t, n_n) in m^3/s; source_heads has shape (n_t, n_0) in m.
    """

    links: list[Link]
    nodes: list[DemandNode]
    sources: list[SourceNode]
    demands: np.ndarray
    source_heads: np.ndarray

    def __post_init__(self):
        self.demands = np.atleast_2d(np.asarray(self.demands, dtype=float))
        self.source_heads = np.atleast_2d(np.asarray(self.source_heads, dtype=float))
        self.demands.setflags(write=False)
        self.source_heads.setflags(write=False)
        self._node_index = {n.id: i for i, n in enumerate(self.nodes)}
        self._source_index = {s.id: i for i, s in enumerate(self.sources)}
        self._build_incidence()

    # -- sizes ---------------------------------------------------------------
    @property
    def n_p(self) -> int:
        return len(self.links)

    @property
    def n_n(self) -> int:
        return len(self.nodes)

    @property
    def n_0(self) -> int:
        return len(self.sources)

    @property
    def n_t(self) -> int:
        return self.demands.shape[0]

    # -- derived arrays ------------------------------------------------------
    @property
    def elevations(self) -> np.ndarray:
        return np.array([n.elevation for n in self.nodes])

    @property
    def lengths(self) -> np.ndarray:
        return np.array([lk.length for lk in self.links])

    @property
    def areas(self) -> np.ndarray:
        return np.array([lk.area for lk in self.links])

    def node_index(self, node_id: str) -> int:
        return self._node_index[node_id]

    def _build_incidence(self):
        # A12[j, i] = +1 if link j enters demand node i, -1 if it leaves it;
        # A10 likewise for source nodes.  Energy rows then read h_to - h_from.
        r12, c12, v12 = [], [], []
        r10, c10, v10 = [], [], []
        for j, lk in enumerate(self.links):
            for node_id, sign in ((lk.to_node, 1.0), (lk.from_node, -1.0)):
                if node_id in self._node_index:
                    r12.append(j)
                    c12.append(self._node_index[node_id])
                    v12.append(sign)
                elif node_id in self._source_index:
                    r10.append(j)
                    c10.append(self._source_index[node_id])
                    v10.append(sign)
                else:
                    raise ValueError(f"link {lk.id}: unknown node {node_id!r}")
        self.A12 = sp.csr_matrix((v12, (r12, c12)), shape=(self.n_p, self.n_n))
        self.A10 = sp.csr_matrix((v10, (r10, c10)), shape=(self.n_p, self.n_0))

    def validate(self):
        if self.n_t < 1:
            raise ValueError("need at least one timestep")
        if self.demands.shape != (self.n_t, self.n_n):
            raise ValueError("demands shape mismatch")
        if self.source_heads.shape != (self.n_t, self.n_0):
            raise ValueError("source_heads shape mismatch")
        if not np.all(np.isfinite(self.demands)) or np.any(self.demands < 0):
            raise ValueError("demands must be finite and non-negative")
        for lk in self.links:
            lk.validate()
        if not self.is_connected():
            raise ValueError("network graph is disconnected")

    def is_connected(self) -> bool:
        """True when every demand node is reachable from some source."""
        if self.n_0 == 0:
            return False
        adj: dict[str, list[str]] = {}
        for lk in self.links:
            adj.setdefault(lk.from_node, []).append(lk.to_node)
            adj.setdefault(lk.to_node, []).append(lk.from_node)
        seen = set()
        stack = [s.id for s in self.sources]
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(adj.get(u, ()))
        return all(n.id in seen for n in self.nodes)

    # -- serialization -------------------------------------------------------
    def to_json(self) -> str:
        payload = {
            "links": [asdict(lk) for lk in self.links],
            "nodes": [asdict(n) for n in self.nodes],
            "sources": [asdict(s) for s in self.sources],
            "demands": self.demands.tolist(),
            "source_heads": self.source_heads.tolist(),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NetworkModel":
        payload = json.loads(text)
        return cls(
            links=[Link(**d) for d in payload["links"]],
            nodes=[DemandNode(**d) for d in payload["nodes"]],
            sources=[SourceNode(**d) for d in payload["sources"]],
            demands=np.array(payload["demands"]),
            source_heads=np.array(payload["source_heads"]),
        )

    def __eq__(self, other):
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return (
            self.links == other.links
            and self.nodes == other.nodes
            and self.sources == other.sources
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.source_heads, other.source_heads)
        )


# ---------------------------------------------------------------------------
# EPANET-INP subset parser
# ---------------------------------------------------------------------------

_SUPPORTED_SECTIONS = {
    "JUNCTIONS", "RESERVOIRS", "PIPES", "VALVES", "DEMANDS", "PUMPS",
    "PATTERNS", "COORDINATES", "TIMES", "OPTIONS", "TITLE", "END",
}


def _tokenize(stream):
    """Yield (lineno, tokens) for non-empty, non-comment lines."""
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split(";", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_inp(text, timestep_indices=None) -> NetworkModel:
    """Read the supported EPANET-INP subset into a validated NetworkModel.

    ``timestep_indices`` selects demand-pattern snapshots; by default the
    four pattern steps with the highest total network demand are used (or a
    single snapshot when no patterns are present).
    """
    stream = io.StringIO(text) if isinstance(text, str) else text

    junctions: dict[str, tuple[float, float, str | None, int]] = {}
    reservoirs: dict[str, tuple[float, str | None, int]] = {}
    pipes = []
    valves = []
    extra_demands: list[tuple[str, float, str | None, int]] = []
    patterns: dict[str, list[float]] = {}
    options: dict[str, str] = {}
    warned_sections = set()
    pump_entries = 0

    section = None
    for lineno, tok in _tokenize(stream):
        if tok[0].startswith("["):
            name = " ".join(tok).strip("[]").upper()
            section = name
            if name not in _SUPPORTED_SECTIONS and name not in warned_sections:
                warnings.warn(f"unsupported section [{name}] ignored", ParserWarning)
                warned_sections.add(name)
            continue
        if section is None:
            raise ParseError("content before first section header", lineno)
        try:
            if section == "JUNCTIONS":
                elev = float(tok[1])
                demand = float(tok[2]) if len(tok) > 2 else 0.0
                pat = tok[3] if len(tok) > 3 else None
                junctions[tok[0]] = (elev, demand, pat, lineno)
            elif section == "RESERVOIRS":
                head = float(tok[1])
                pat = tok[2] if len(tok) > 2 else None
                reservoirs[tok[0]] = (head, pat, lineno)
            elif section == "PIPES":
                if len(tok) < 6:
                    raise ParseError("pipe needs id, nodes, length, diameter, roughness", lineno)
                pipes.append((tok[0], tok[1], tok[2], float(tok[3]), float(tok[4]), float(tok[5]), lineno))
            elif section == "VALVES":
                if len(tok) < 6:
                    raise ParseError("valve needs id, nodes, diameter, type, setting", lineno)
                valves.append((tok[0], tok[1], tok[2], float(tok[3]), tok[4].upper(), float(tok[5]), lineno))
            elif section == "DEMANDS":
                pat = tok[2] if len(tok) > 2 else None
                extra_demands.append((tok[0], float(tok[1]), pat, lineno))
            elif section == "PATTERNS":
                patterns.setdefault(tok[0], []).extend(float(v) for v in tok[1:])
            elif section == "OPTIONS":
                if len(tok) >= 2:
                    options[tok[0].upper()] = tok[1].upper()
            elif section == "PUMPS":
                pump_entries += 1
        except ParseError:
            raise
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), lineno) from exc

    headloss = options.get("HEADLOSS", "H-W")
    if headloss not in ("H-W", "HW"):
        raise ParseError(f"only Hazen-Williams head loss is supported, got {headloss}")
    flow_unit = options.get("UNITS", "LPS")
    if flow_unit not in _FLOW_UNITS:
        raise ParseError(f"unknown flow unit {flow_unit}")
    q_scale, us_units = _FLOW_UNITS[flow_unit]
    len_scale = 0.3048 if us_units else 1.0
    dia_scale = 0.0254 if us_units else 1e-3

    if not junctions or not reservoirs or not (pipes or valves):
        raise ParseError("file must define junctions, reservoirs and links")
    if pump_entries:
        # Dropped from the model; a graph left disconnected without them is
        # rejected by validate() below.
        warnings.warn(f"{pump_entries} pump link(s) ignored", ParserWarning)

    def pattern_of(name, lineno):
        if name is None:
            return None
        if name not in patterns:
            raise ParseError(f"unknown pattern {name!r}", lineno)
        return patterns[name]

    # Base demands per node (m^3/s) and optional pattern multipliers.
    base_demand = {nid: 0.0 for nid in junctions}
    demand_patterns: dict[str, list[tuple[float, list[float] | None]]] = {nid: [] for nid in junctions}
    for nid, (elev, demand, pat, lineno) in junctions.items():
        if demand:
            demand_patterns[nid].append((demand * q_scale, pattern_of(pat, lineno)))
    for nid, demand, pat, lineno in extra_demands:
        if nid not in junctions:
            raise ParseError(f"demand for unknown junction {nid!r}", lineno)
        demand_patterns[nid].append((demand * q_scale, pattern_of(pat, lineno)))

    n_steps = max((len(p) for p in patterns.values()), default=1)
    if timestep_indices is None:
        if n_steps == 1:
            timestep_indices = [0]
        else:
            totals = np.zeros(n_steps)
            for entries in demand_patterns.values():
                for base, pat in entries:
                    mult = np.array([(pat[k % len(pat)] if pat else 1.0) for k in range(n_steps)])
                    totals += base * mult
            timestep_indices = sorted(np.argsort(totals)[-4:].tolist())
    for k in timestep_indices:
        if not 0 <= k < n_steps:
            raise ParseError(f"timestep index {k} outside pattern length {n_steps}")

    nodes = [DemandNode(nid, elev * len_scale) for nid, (elev, _, _, _) in junctions.items()]
    source_list = [SourceNode(rid) for rid in reservoirs]

    n_t = len(timestep_indices)
    demands = np.zeros((n_t, len(nodes)))
    for i, nid in enumerate(junctions):
        for base, pat in demand_patterns[nid]:
            for ti, k in enumerate(timestep_indices):
                mult = pat[k % len(pat)] if pat else 1.0
                demands[ti, i] += base * mult
    heads = np.zeros((n_t, len(source_list)))
    for s, (rid, (head, pat, lineno)) in enumerate(reservoirs.items()):
        p = pattern_of(pat, lineno)
        for ti, k in enumerate(timestep_indices):
            mult = p[k % len(p)] if p else 1.0
            heads[ti, s] = head * len_scale * mult

    links = []
    for pid, n1, n2, length, diam, rough, lineno in pipes:
        links.append(Link(pid, n1, n2, PIPE, length * len_scale, diam * dia_scale, rough))
    for vid, n1, n2, diam, vtype, setting, lineno in valves:
        if vtype not in ("TCV", "PRV", "DBV"):
            raise ParseError(f"unsupported valve type {vtype}", lineno)
        # TCV setting is a loss coefficient; PRV/DBV settings are operational
        # and modelled through the control variable instead.
        k_loss = setting if vtype == "TCV" else 0.0
        links.append(Link(vid, n1, n2, VALVE, 0.0, diam * dia_scale, 0.0, k_loss,
                          is_existing_prv=(vtype == "PRV"),
                          is_existing_dbv=(vtype == "DBV")))

    known = set(junctions) | set(reservoirs)
    for lk in links:
        for nid in (lk.from_node, lk.to_node):
            if nid not in known:
                raise ParseError(f"link {lk.id} references unknown node {nid!r}")

    net = NetworkModel(links, nodes, source_list, demands, heads)
    try:
        net.validate()
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    return net


# ---------------------------------------------------------------------------
# Forest-core decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForestCoreDecomposition:
    """Partition of links into tree-like branches and the looped core.

    ``forest_sign[j]`` is +1 when positive flow on forest link j runs toward
    its pruned (downstream) side; ``forest_downstream[j]`` lists the demand
    node indices fed through link j.
    """

    core_links: tuple[int, ...]
    forest_links: tuple[int, ...]
    forest_sign: dict[int, int]
    forest_downstream: dict[int, tuple[int, ...]]


def forest_core(net: NetworkModel) -> ForestCoreDecomposition:
    """Classify links by iterative degree-1 pruning of non-source nodes."""
    alive = [True] * net.n_p
    incident: dict[str, set[int]] = {}
    for j, lk in enumerate(net.links):
        incident.setdefault(lk.from_node, set()).add(j)
        incident.setdefault(lk.to_node, set()).add(j)
    source_ids = {s.id for s in net.sources}

    forest = []
    sign: dict[int, int] = {}
    downstream: dict[int, tuple[int, ...]] = {}
    # demand node ids fed through each pruned node
    fed: dict[str, list[int]] = {}

    queue = [nid for nid, js in incident.items()
             if nid not in source_ids and len(js) == 1]
    while queue:
        nid = queue.pop()
        js = incident.get(nid, set())
        if len(js) != 1:
            continue
        (j,) = js
        lk = net.links[j]
        alive[j] = False
        forest.append(j)
        served = list(fed.get(nid, []))
        if nid in net._node_index:
            served.append(net._node_index[nid])
        sign[j] = 1 if lk.to_node == nid else -1
        downstream[j] = tuple(sorted(served))
        other = lk.from_node if lk.to_node == nid else lk.to_node
        incident[other].discard(j)
        incident[nid].discard(j)
        fed.setdefault(other, []).extend(served)
        if other not in source_ids and len(incident[other]) == 1:
            queue.append(other)

    core = tuple(j for j in range(net.n_p) if alive[j])
    return ForestCoreDecomposition(core, tuple(sorted(forest)), sign, downstream)


# ---------------------------------------------------------------------------
# Problem-size statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemStats:
    continuous: int
    binary: int
    nonconvex: int


def count_variables(n_p: int, n_n: int, n_t: int) -> ProblemStats:
    return ProblemStats(
        continuous=n_t * (3 * n_p + 2 * n_n),
        binary=2 * n_t * n_p + n_p + n_n,
        nonconvex=2 * n_t * n_p,
    )


def problem_stats(net: NetworkModel, n_t: int | None = None) -> ProblemStats:
    return count_variables(net.n_p, net.n_n, net.n_t if n_t is None else n_t)
