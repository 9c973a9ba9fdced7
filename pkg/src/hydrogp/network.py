"""Typed water-network graph and its constant incidence matrices.

Nodes are partitioned into junctions, tanks and reservoirs; links into
pipes and pumps (valves are rejected upstream).  The link orientation is
whatever the input declared; negative flow means reverse direction, so
no flow-direction assumption is baked into the matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    DanglingReferenceError,
    DuplicateIdError,
    InvariantViolationError,
)

HAZEN_WILLIAMS = "hazen-williams"
DARCY_WEISBACH = "darcy-weisbach"
CHEZY_MANNING = "chezy-manning"
HEADLOSS_FORMULAS = (HAZEN_WILLIAMS, DARCY_WEISBACH, CHEZY_MANNING)


@dataclass(frozen=True)
class Junction:
    id: str
    elevation: float
    demand_pattern_id: str | None = None

    kind = "junction"


@dataclass(frozen=True)
class Tank:
    """Storage node; head evolves with net inflow.

    ``cross_section`` is the horizontal area in ft^2; all head fields are
    absolute hydraulic heads in ft (elevation + water level).
    """

    id: str
    elevation: float
    cross_section: float
    initial_head: float
    head_min: float
    head_max: float
    safety_head: float

    kind = "tank"

    def check(self) -> None:
        if self.cross_section <= 0:
            raise InvariantViolationError(
                f"tank {self.id}", "cross_section", "must be > 0"
            )
        if not self.head_min <= self.initial_head <= self.head_max:
            raise InvariantViolationError(
                f"tank {self.id}",
                "initial_head",
                f"{self.initial_head} outside [{self.head_min}, {self.head_max}]",
            )
        if not self.head_min <= self.safety_head <= self.head_max:
            raise InvariantViolationError(
                f"tank {self.id}",
                "safety_head",
                f"{self.safety_head} outside [{self.head_min}, {self.head_max}]",
            )


@dataclass(frozen=True)
class Reservoir:
    id: str
    fixed_head: float

    kind = "reservoir"


@dataclass(frozen=True)
class Pipe:
    """Friction link. ``roughness`` is interpreted per ``headloss_formula``;
    ``friction_factor`` is only meaningful for darcy-weisbach, where it is
    taken as a user-supplied constant."""

    id: str
    from_node: str
    to_node: str
    length: float
    diameter: float
    roughness: float
    headloss_formula: str = HAZEN_WILLIAMS
    friction_factor: float | None = None
    flow_min: float = -np.inf
    flow_max: float = np.inf

    kind = "pipe"

    def check(self) -> None:
        if self.from_node == self.to_node:
            raise InvariantViolationError(
                f"pipe {self.id}", "to_node", "self-loop not allowed"
            )
        if self.length <= 0:
            raise InvariantViolationError(f"pipe {self.id}", "length", "must be > 0")
        if self.diameter <= 0:
            raise InvariantViolationError(f"pipe {self.id}", "diameter", "must be > 0")
        if self.headloss_formula not in HEADLOSS_FORMULAS:
            raise InvariantViolationError(
                f"pipe {self.id}",
                "headloss_formula",
                f"unknown formula {self.headloss_formula!r}",
            )
        if self.headloss_formula == DARCY_WEISBACH and (
            self.friction_factor is None or self.friction_factor <= 0
        ):
            raise InvariantViolationError(
                f"pipe {self.id}",
                "friction_factor",
                "darcy-weisbach needs a positive constant friction factor",
            )
        if not self.flow_min < self.flow_max:
            raise InvariantViolationError(
                f"pipe {self.id}", "flow_min", "flow_min must be < flow_max"
            )


@dataclass(frozen=True)
class Pump:
    """Head-gain link with curve  gain = s^2 (h0 - r (q/s)^nu).

    ``curve_coefficient`` must already be in internal units (flow in cfs);
    use :func:`hydrogp.units.pump_curve_coeff_to_cfs` for curves fitted in
    GPM.  Flow through a pump is constrained nonnegative.
    """

    id: str
    from_node: str
    to_node: str
    shutoff_head: float
    curve_coefficient: float
    curve_exponent: float
    flow_min: float = 0.0
    flow_max: float = np.inf

    kind = "pump"

    def check(self) -> None:
        if self.from_node == self.to_node:
            raise InvariantViolationError(
                f"pump {self.id}", "to_node", "self-loop not allowed"
            )
        if self.shutoff_head <= 0:
            raise InvariantViolationError(
                f"pump {self.id}", "shutoff_head", "must be > 0"
            )
        if self.curve_coefficient <= 0:
            raise InvariantViolationError(
                f"pump {self.id}", "curve_coefficient", "must be > 0"
            )
        if self.curve_exponent <= 1:
            raise InvariantViolationError(
                f"pump {self.id}", "curve_exponent", "must be > 1"
            )
        if self.flow_min < 0:
            raise InvariantViolationError(
                f"pump {self.id}",
                "flow_min",
                "pump flow is one-directional; flow_min must be >= 0",
            )
        if not self.flow_min < self.flow_max:
            raise InvariantViolationError(
                f"pump {self.id}", "flow_min", "flow_min must be < flow_max"
            )


Node = Junction | Tank | Reservoir
Link = Pipe | Pump


@dataclass(frozen=True)
class DemandPattern:
    """Per-junction demand series, cfs per sampling step.

    Junctions absent from ``series`` draw zero demand.
    """

    series: dict[str, np.ndarray]

    def __post_init__(self):
        lengths = {len(v) for v in self.series.values()}
        if len(lengths) > 1:
            raise InvariantViolationError(
                "demand pattern", "series", f"unequal lengths {sorted(lengths)}"
            )
        for jid, vals in self.series.items():
            arr = np.asarray(vals, dtype=float)
            if np.any(arr < 0):
                raise InvariantViolationError(
                    "demand pattern", jid, "demands must be >= 0"
                )
            self.series[jid] = arr

    @property
    def n_steps(self) -> int:
        if not self.series:
            return 0
        return len(next(iter(self.series.values())))

    def at(self, junction_ids: list[str], k: int, pad: bool = True) -> np.ndarray:
        """Demand vector (cfs) for the listed junctions at step ``k``.

        Steps past the end of the pattern hold the last value when ``pad``.
        """
        out = np.zeros(len(junction_ids))
        n = self.n_steps
        for i, jid in enumerate(junction_ids):
            seq = self.series.get(jid)
            if seq is None or n == 0:
                continue
            if k < n:
                out[i] = seq[k]
            elif pad:
                out[i] = seq[-1]
        return out


@dataclass(frozen=True)
class Network:
    """Validated, immutable network with partition index maps."""

    nodes: dict[str, Node]
    links: dict[str, Link]
    patterns: DemandPattern

    junction_ids: tuple[str, ...] = field(init=False, default=())
    tank_ids: tuple[str, ...] = field(init=False, default=())
    reservoir_ids: tuple[str, ...] = field(init=False, default=())
    pipe_ids: tuple[str, ...] = field(init=False, default=())
    pump_ids: tuple[str, ...] = field(init=False, default=())

    def __post_init__(self):
        object.__setattr__(
            self,
            "junction_ids",
            tuple(n.id for n in self.nodes.values() if n.kind == "junction"),
        )
        object.__setattr__(
            self,
            "tank_ids",
            tuple(n.id for n in self.nodes.values() if n.kind == "tank"),
        )
        object.__setattr__(
            self,
            "reservoir_ids",
            tuple(n.id for n in self.nodes.values() if n.kind == "reservoir"),
        )
        object.__setattr__(
            self,
            "pipe_ids",
            tuple(l.id for l in self.links.values() if l.kind == "pipe"),
        )
        object.__setattr__(
            self,
            "pump_ids",
            tuple(l.id for l in self.links.values() if l.kind == "pump"),
        )

    @property
    def n_junctions(self) -> int:
        return len(self.junction_ids)

    @property
    def n_tanks(self) -> int:
        return len(self.tank_ids)

    @property
    def n_reservoirs(self) -> int:
        return len(self.reservoir_ids)

    @property
    def n_pipes(self) -> int:
        return len(self.pipe_ids)

    @property
    def n_pumps(self) -> int:
        return len(self.pump_ids)

    def links_in(self, node_id: str) -> list[Link]:
        return [l for l in self.links.values() if l.to_node == node_id]

    def links_out(self, node_id: str) -> list[Link]:
        return [l for l in self.links.values() if l.from_node == node_id]

    def tank(self, tank_id: str) -> Tank:
        node = self.nodes[tank_id]
        assert isinstance(node, Tank)
        return node

    def reservoir_heads(self) -> np.ndarray:
        return np.array(
            [self.nodes[r].fixed_head for r in self.reservoir_ids], dtype=float
        )

    def initial_tank_heads(self) -> np.ndarray:
        return np.array(
            [self.tank(t).initial_head for t in self.tank_ids], dtype=float
        )


@dataclass(frozen=True)
class DAEMatrices:
    """Constant matrices of the discrete tank/mass/energy model.

    Shapes: A (n_t, n_t); B_u (n_t, n_m); B_v (n_t, n_p); E_u (n_j, n_m);
    E_v (n_j, n_p); E_d (n_j, n_j); E_x (n_p + n_m, n_t);
    E_l (n_p + n_m, n_j).  Energy rows are ordered pipes first, then pumps.
    E_r (n_p + n_m, n_r) carries the fixed reservoir heads that also appear
    in energy balances; it plays the same selection role as E_x / E_l.
    """

    A: sp.csr_matrix
    B_u: sp.csr_matrix
    B_v: sp.csr_matrix
    E_u: sp.csr_matrix
    E_v: sp.csr_matrix
    E_d: sp.csr_matrix
    E_x: sp.csr_matrix
    E_l: sp.csr_matrix
    E_r: sp.csr_matrix
    dt: float


class _Diagnostic:
    def __init__(self, kind: str, message: str):
        self.kind = kind
        self.message = message

    def __repr__(self):
        return f"Diagnostic({self.kind}: {self.message})"

    def __eq__(self, other):
        return isinstance(other, _Diagnostic) and (self.kind, self.message) == (
            other.kind,
            other.message,
        )


Diagnostic = _Diagnostic


def build_network(
    nodes: list[Node], links: list[Link], patterns: DemandPattern | None = None
) -> Network:
    """Assemble and validate a network from its parts.

    Raises ``DuplicateIdError``, ``DanglingReferenceError`` or
    ``InvariantViolationError`` naming the offending element.
    """
    node_map: dict[str, Node] = {}
    for node in nodes:
        if node.id in node_map:
            raise DuplicateIdError("node", node.id)
        if isinstance(node, Tank):
            node.check()
        node_map[node.id] = node

    link_map: dict[str, Link] = {}
    for link in links:
        if link.id in link_map:
            raise DuplicateIdError("link", link.id)
        link.check()
        for endpoint in (link.from_node, link.to_node):
            if endpoint not in node_map:
                raise DanglingReferenceError(endpoint, f"{link.kind} {link.id}")
        link_map[link.id] = link

    patterns = patterns or DemandPattern({})
    for jid in patterns.series:
        if jid not in node_map:
            raise DanglingReferenceError(jid, "demand pattern")
        if node_map[jid].kind != "junction":
            raise InvariantViolationError(
                "demand pattern", jid, "demands may only target junctions"
            )

    return Network(nodes=node_map, links=link_map, patterns=patterns)


def incidence_matrices(net: Network, dt: float) -> DAEMatrices:
    """Build the constant matrices for sampling interval ``dt`` (seconds).

    Sign convention: a link oriented into a node contributes +1 to that
    node's row, out of it -1.  Tank rows additionally scale by dt / area.
    """
    if dt <= 0:
        raise InvariantViolationError("incidence", "dt", "must be > 0")

    jidx = {j: i for i, j in enumerate(net.junction_ids)}
    tidx = {t: i for i, t in enumerate(net.tank_ids)}
    ridx = {r: i for i, r in enumerate(net.reservoir_ids)}
    pidx = {p: i for i, p in enumerate(net.pipe_ids)}
    midx = {m: i for i, m in enumerate(net.pump_ids)}

    n_t, n_j, n_r = net.n_tanks, net.n_junctions, net.n_reservoirs
    n_p, n_m = net.n_pipes, net.n_pumps

    B_u = sp.lil_matrix((n_t, n_m))
    B_v = sp.lil_matrix((n_t, n_p))
    E_u = sp.lil_matrix((n_j, n_m))
    E_v = sp.lil_matrix((n_j, n_p))
    E_x = sp.lil_matrix((n_p + n_m, n_t))
    E_l = sp.lil_matrix((n_p + n_m, n_j))
    E_r = sp.lil_matrix((n_p + n_m, n_r))

    for link in net.links.values():
        if link.kind == "pipe":
            col, node_mat, tank_mat = pidx[link.id], E_v, B_v
            row = pidx[link.id]
        else:
            col, node_mat, tank_mat = midx[link.id], E_u, B_u
            row = n_p + midx[link.id]

        for node_id, sign in ((link.from_node, -1.0), (link.to_node, +1.0)):
            node = net.nodes[node_id]
            if node.kind == "junction":
                node_mat[jidx[node_id], col] += sign
            elif node.kind == "tank":
                tank_mat[tidx[node_id], col] += sign * dt / node.cross_section

        # energy row: + head(from) - head(to)
        for node_id, sign in ((link.from_node, +1.0), (link.to_node, -1.0)):
            node = net.nodes[node_id]
            if node.kind == "tank":
                E_x[row, tidx[node_id]] += sign
            elif node.kind == "junction":
                E_l[row, jidx[node_id]] += sign
            else:
                E_r[row, ridx[node_id]] += sign

    return DAEMatrices(
        A=sp.identity(n_t, format="csr"),
        B_u=B_u.tocsr(),
        B_v=B_v.tocsr(),
        E_u=E_u.tocsr(),
        E_v=E_v.tocsr(),
        E_d=(-sp.identity(n_j)).tocsr(),
        E_x=E_x.tocsr(),
        E_l=E_l.tocsr(),
        E_r=E_r.tocsr(),
        dt=float(dt),
    )


def validate(net: Network) -> list[Diagnostic]:
    """Structural diagnostics; empty list means the graph is sound.

    Checks connectivity (undirected), reachability of every junction from
    some fixed-head or storage source, and the per-element invariants.
    """
    diags: list[Diagnostic] = []

    for node in net.nodes.values():
        if isinstance(node, Tank):
            try:
                node.check()
            except InvariantViolationError as exc:
                diags.append(Diagnostic("InvariantViolation", str(exc)))
    for link in net.links.values():
        try:
            link.check()
        except InvariantViolationError as exc:
            diags.append(Diagnostic("InvariantViolation", str(exc)))

    if not net.nodes:
        diags.append(Diagnostic("EmptyNetwork", "no nodes"))
        return diags

    adjacency: dict[str, set[str]] = {nid: set() for nid in net.nodes}
    for link in net.links.values():
        if link.from_node in adjacency and link.to_node in adjacency:
            adjacency[link.from_node].add(link.to_node)
            adjacency[link.to_node].add(link.from_node)

    sources = {
        nid for nid, n in net.nodes.items() if n.kind in ("tank", "reservoir")
    }
    reached: set[str] = set()
    frontier = list(sources)
    while frontier:
        nid = frontier.pop()
        if nid in reached:
            continue
        reached.add(nid)
        frontier.extend(adjacency[nid] - reached)

    for jid in net.junction_ids:
        if jid not in reached:
            diags.append(
                Diagnostic("UnreachableNode", f"junction {jid} has no path to a source")
            )

    # overall connectivity, independent of where the sources sit
    start = next(iter(net.nodes))
    component = {start}
    frontier = [start]
    while frontier:
        nid = frontier.pop()
        for nxt in adjacency[nid]:
            if nxt not in component:
                component.add(nxt)
                frontier.append(nxt)
    if len(component) != len(net.nodes):
        missing = sorted(set(net.nodes) - component)
        diags.append(
            Diagnostic("DisconnectedComponent", f"nodes not connected: {missing}")
        )

    return diags
