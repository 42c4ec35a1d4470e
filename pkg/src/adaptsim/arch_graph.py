"""Typed directed-graph model of an application architecture.

Two abstraction levels are represented by the same :class:`ArchGraph` value:

* ``Level.ABSTRACT``: nodes (communication devices) and typed flow edges
  between them, no entities.
* ``Level.REFINED``: every node is split into a communication entity, one
  processing entity per data kind and, in the mediated style, an event
  dispatcher. Entities are wired with push/pull links.

Graphs are frozen; every transformation returns a new graph.
"""

from __future__ import annotations

import dataclasses
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional

from adaptsim.errors import DuplicateNode, UnknownNode


class DataKind(enum.Enum):
    D = "D"  # descriptive data (audio/video), high priority
    P = "P"  # produced analysis data (audio), low priority

    @property
    def priority(self) -> int:
        return 1 if self is DataKind.D else 0


class EntityKind(enum.Enum):
    COMMUNICATION = "C"
    PROCESSING_D = "T_D"
    PROCESSING_P = "T_P"
    DISPATCHER = "EVD"

    @classmethod
    def processing_for(cls, kind: DataKind) -> "EntityKind":
        return cls.PROCESSING_D if kind is DataKind.D else cls.PROCESSING_P

    @property
    def is_processing(self) -> bool:
        return self in (EntityKind.PROCESSING_D, EntityKind.PROCESSING_P)

    @property
    def data_kind(self) -> Optional[DataKind]:
        if self is EntityKind.PROCESSING_D:
            return DataKind.D
        if self is EntityKind.PROCESSING_P:
            return DataKind.P
        return None


class InteractionMode(enum.Enum):
    PUSH = "push"
    PULL = "pull"


class Level(enum.Enum):
    ABSTRACT = "abstract"
    REFINED = "refined"


class Style(enum.Enum):
    UNREFINED = "unrefined"
    DIRECT = "direct"
    MEDIATED = "mediated"


class Scope(enum.Enum):
    INTRA_NODE = "intra"
    INTER_NODE = "inter"


def entity_id(node: str, kind: EntityKind) -> str:
    """Deterministic entity identifier, e.g. ``A1.T_D``."""
    return f"{node}.{kind.value}"


@dataclass(frozen=True)
class NodeRecord:
    id: str
    role: str = ""
    profile: Optional[str] = None
    # kinds for which a processing entity is installed even without flows
    hosts: frozenset = frozenset()


@dataclass(frozen=True)
class FlowEdge:
    producer: str
    consumer: str
    kind: DataKind
    priority: Optional[int] = None

    def __post_init__(self):
        if self.priority is None:
            object.__setattr__(self, "priority", self.kind.priority)

    @property
    def key(self) -> tuple:
        return (self.producer, self.consumer, self.kind)


@dataclass(frozen=True)
class Entity:
    id: str
    owner: str
    kind: EntityKind
    active: bool = True


@dataclass(frozen=True)
class Link:
    source: str
    target: str
    kind: DataKind
    scope: Scope
    mode: Optional[InteractionMode] = None
    priority_degree: int = 0
    negotiated_rate: Optional[float] = None

    @property
    def id(self) -> str:
        return f"{self.source}->{self.target}:{self.kind.value}"

    @property
    def sort_key(self) -> tuple:
        return (self.source, self.target, self.kind.value)


@dataclass(frozen=True)
class Violation:
    code: str
    element: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.element} {self.message}".rstrip()


@dataclass(frozen=True)
class ArchGraph:
    level: Level
    nodes: tuple
    flows: tuple = ()
    entities: tuple = ()
    links: tuple = ()
    style: Style = Style.UNREFINED
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n.id: n for n in self.nodes})

    @property
    def node_ids(self) -> list:
        return sorted(self._index)

    def node(self, node_id: str) -> NodeRecord:
        try:
            return self._index[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    def entity(self, eid: str) -> Entity:
        for e in self.entities:
            if e.id == eid:
                return e
        raise KeyError(eid)

    def entities_of(self, node_id: str) -> list:
        self.node(node_id)
        return [e for e in self.entities if e.owner == node_id]

    def inter_links(self) -> list:
        return sorted((l for l in self.links if l.scope is Scope.INTER_NODE), key=lambda l: l.sort_key)

    def intra_links(self) -> list:
        return sorted((l for l in self.links if l.scope is Scope.INTRA_NODE), key=lambda l: l.sort_key)

    def owner_of(self, eid: str) -> str:
        return eid.split(".", 1)[0]

    def replace(self, **changes) -> "ArchGraph":
        return dataclasses.replace(self, **changes)

    def with_activation(self, states: Iterable) -> "ArchGraph":
        """Return a copy with ``(entity_id, active)`` pairs applied."""
        states = dict(states)
        entities = tuple(
            dataclasses.replace(e, active=states[e.id]) if e.id in states else e
            for e in self.entities
        )
        return self.replace(entities=entities)

    def exchanged_kinds(self, node_id: str) -> set:
        """Data kinds the node sends or receives over its flows."""
        return {f.kind for f in self.flows if node_id in (f.producer, f.consumer)}


def build_abstract(nodes, flows) -> ArchGraph:
    """Build an abstract graph from ``(id, role)`` pairs (or NodeRecords) and flow edges."""
    records = []
    seen = set()
    for n in nodes:
        rec = n if isinstance(n, NodeRecord) else NodeRecord(*n)
        if rec.id in seen:
            raise DuplicateNode(rec.id)
        seen.add(rec.id)
        records.append(rec)
    flows = tuple(flows)
    for f in flows:
        for end in (f.producer, f.consumer):
            if end not in seen:
                raise UnknownNode(end)
    return ArchGraph(level=Level.ABSTRACT, nodes=tuple(records), flows=flows)


def active_entities(graph: ArchGraph, node: str) -> set:
    return {e.id for e in graph.entities_of(node) if e.active}


def validate(graph: ArchGraph) -> list:
    """Check structural invariants; returns a list of :class:`Violation` (empty if valid)."""
    out = []
    ids = Counter(n.id for n in graph.nodes)
    for nid, count in ids.items():
        if count > 1:
            out.append(Violation("duplicate-node", nid))

    for f in graph.flows:
        if f.producer == f.consumer:
            out.append(Violation("self-flow", f"{f.producer}->{f.consumer}:{f.kind.value}"))
        for end in (f.producer, f.consumer):
            if end not in ids:
                out.append(Violation("unknown-node", end, "flow endpoint"))
        if f.priority < 0:
            out.append(Violation("negative-priority", f"{f.producer}->{f.consumer}:{f.kind.value}"))

    if graph.level is Level.ABSTRACT:
        if graph.entities or graph.links:
            out.append(Violation("abstract-has-entities", "graph"))
        if graph.style is not Style.UNREFINED:
            out.append(Violation("abstract-style", graph.style.value))
        return out

    entity_ids = {e.id for e in graph.entities}
    per_node = {nid: Counter() for nid in ids}
    for e in graph.entities:
        if e.owner not in per_node:
            out.append(Violation("unknown-node", e.id, "entity owner"))
            continue
        per_node[e.owner][e.kind] += 1

    for nid in sorted(per_node):
        counts = per_node[nid]
        if counts[EntityKind.COMMUNICATION] != 1:
            out.append(Violation("entity-count", nid, "needs exactly one communication entity"))
        for kind in (EntityKind.PROCESSING_D, EntityKind.PROCESSING_P, EntityKind.DISPATCHER):
            if counts[kind] > 1:
                out.append(Violation("entity-count", nid, f"more than one {kind.value}"))
        if graph.style is Style.DIRECT and counts[EntityKind.DISPATCHER]:
            out.append(Violation("direct-has-dispatcher", nid))
        if graph.style is Style.MEDIATED:
            wants = 1 if len(graph.exchanged_kinds(nid)) > 1 else 0
            if counts[EntityKind.DISPATCHER] != wants:
                out.append(Violation("mediated-dispatcher-count", nid, f"expected {wants}"))
        if graph.style is Style.UNREFINED and counts[EntityKind.DISPATCHER]:
            out.append(Violation("direct-has-dispatcher", nid, "dispatcher before mediated refinement"))

    for l in graph.links:
        for end in (l.source, l.target):
            if end not in entity_ids:
                out.append(Violation("unknown-entity", l.id))
        if l.kind is DataKind.D and l.mode is InteractionMode.PULL:
            out.append(Violation("D-must-push", l.id))
        if l.kind is DataKind.P and l.mode is InteractionMode.PUSH:
            out.append(Violation("P-must-pull", l.id))
        if l.mode is None and graph.style is not Style.UNREFINED:
            out.append(Violation("mode-unassigned", l.id))
        if l.priority_degree < 0:
            out.append(Violation("negative-priority", l.id))
        if l.negotiated_rate is not None and not l.negotiated_rate >= 0:
            out.append(Violation("negative-rate", l.id))

    if graph.style is not Style.UNREFINED:
        realized = {
            (graph.owner_of(l.source), graph.owner_of(l.target), l.kind)
            for l in graph.links
            if l.scope is Scope.INTER_NODE
        }
        for f in graph.flows:
            if f.key not in realized:
                out.append(Violation("flow-not-realized", f"{f.producer}->{f.consumer}:{f.kind.value}"))
    return out


def to_dot(graph: ArchGraph) -> str:
    """Graphviz rendering: one vertex per entity, edges labelled ``kind/mode/rate``."""
    lines = ["digraph arch {", "  rankdir=LR;"]
    if graph.level is Level.ABSTRACT:
        for n in graph.nodes:
            lines.append(f'  "{n.id}" [label="{n.id}\\n{n.role}"];')
        for f in graph.flows:
            lines.append(f'  "{f.producer}" -> "{f.consumer}" [label="{f.kind.value}/p{f.priority}"];')
    else:
        for nid in graph.node_ids:
            lines.append(f'  subgraph "cluster_{nid}" {{')
            lines.append(f'    label="{nid}";')
            for e in graph.entities_of(nid):
                style = "" if e.active else ", style=dashed"
                lines.append(f'    "{e.id}" [label="{e.kind.value}"{style}];')
            lines.append("  }")
        for l in sorted(graph.links, key=lambda l: l.sort_key):
            mode = l.mode.value if l.mode else "-"
            rate = "-" if l.negotiated_rate is None else f"{l.negotiated_rate:g}"
            lines.append(f'  "{l.source}" -> "{l.target}" [label="{l.kind.value}/{mode}/{rate}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
