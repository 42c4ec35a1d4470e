"""Abstract-to-refined transformations.

``decompose`` splits each node into functional entities; ``refine_direct``
and ``refine_mediated`` wire them in the direct or mediated Producer-Consumer
style; ``assign_modes`` chooses push for D and pull for P; and
``deactivate_unused`` switches off processing entities with nothing to do.
"""

from __future__ import annotations

import dataclasses

from adaptsim.arch_graph import (
    ArchGraph,
    DataKind,
    Entity,
    EntityKind,
    InteractionMode,
    Level,
    Link,
    Scope,
    Style,
    entity_id,
)
from adaptsim.errors import WrongLevel

KIND_ORDER = (DataKind.D, DataKind.P)


def decompose(abstract: ArchGraph) -> ArchGraph:
    if abstract.level is not Level.ABSTRACT:
        raise WrongLevel("decompose expects an abstract graph")
    entities = []
    for nid in abstract.node_ids:
        node = abstract.node(nid)
        kinds = abstract.exchanged_kinds(nid) | set(node.hosts)
        entities.append(Entity(entity_id(nid, EntityKind.COMMUNICATION), nid, EntityKind.COMMUNICATION))
        for kind in KIND_ORDER:
            if kind in kinds:
                ek = EntityKind.processing_for(kind)
                entities.append(Entity(entity_id(nid, ek), nid, ek))
    return abstract.replace(level=Level.REFINED, entities=tuple(entities), links=(), style=Style.UNREFINED)


def _check_decomposed(graph: ArchGraph):
    if graph.level is not Level.REFINED or graph.style is not Style.UNREFINED:
        raise WrongLevel("expected the output of decompose")


def _inter_node_links(graph: ArchGraph) -> list:
    links = []
    for f in sorted(graph.flows, key=lambda f: (f.producer, f.consumer, f.kind.value)):
        links.append(
            Link(
                source=entity_id(f.producer, EntityKind.COMMUNICATION),
                target=entity_id(f.consumer, EntityKind.COMMUNICATION),
                kind=f.kind,
                scope=Scope.INTER_NODE,
            )
        )
    # one link per (pair, kind) even if the abstract graph repeats a flow
    return list(dict.fromkeys(links))


def _directions(graph: ArchGraph, nid: str) -> list:
    """(kind, outbound) pairs for the node: outbound means the node produces that kind."""
    out = set()
    for f in graph.flows:
        if f.producer == nid:
            out.add((f.kind, True))
        if f.consumer == nid:
            out.add((f.kind, False))
    return sorted(out, key=lambda p: (p[0].value, not p[1]))


def refine_direct(decomposed: ArchGraph) -> ArchGraph:
    _check_decomposed(decomposed)
    links = []
    for nid in decomposed.node_ids:
        comm = entity_id(nid, EntityKind.COMMUNICATION)
        for kind, outbound in _directions(decomposed, nid):
            proc = entity_id(nid, EntityKind.processing_for(kind))
            src, dst = (proc, comm) if outbound else (comm, proc)
            links.append(Link(src, dst, kind, Scope.INTRA_NODE))
    links.extend(_inter_node_links(decomposed))
    return assign_modes(decomposed.replace(links=tuple(links), style=Style.DIRECT))


def refine_mediated(decomposed: ArchGraph) -> ArchGraph:
    _check_decomposed(decomposed)
    entities = list(decomposed.entities)
    links = []
    for nid in decomposed.node_ids:
        comm = entity_id(nid, EntityKind.COMMUNICATION)
        directions = _directions(decomposed, nid)
        filtering = len(decomposed.exchanged_kinds(nid)) > 1
        if filtering:
            disp = entity_id(nid, EntityKind.DISPATCHER)
            entities.append(Entity(disp, nid, EntityKind.DISPATCHER))
        for kind, outbound in directions:
            proc = entity_id(nid, EntityKind.processing_for(kind))
            if not filtering:
                src, dst = (proc, comm) if outbound else (comm, proc)
                links.append(Link(src, dst, kind, Scope.INTRA_NODE))
            elif outbound:
                links.append(Link(proc, disp, kind, Scope.INTRA_NODE))
                links.append(Link(disp, comm, kind, Scope.INTRA_NODE))
            else:
                links.append(Link(comm, disp, kind, Scope.INTRA_NODE))
                links.append(Link(disp, proc, kind, Scope.INTRA_NODE))
    links.extend(_inter_node_links(decomposed))
    return assign_modes(
        decomposed.replace(entities=tuple(entities), links=tuple(links), style=Style.MEDIATED)
    )


def assign_modes(refined: ArchGraph) -> ArchGraph:
    """Push for high-priority D links, pull for low-priority P links."""
    links = tuple(
        dataclasses.replace(
            l, mode=InteractionMode.PUSH if l.kind is DataKind.D else InteractionMode.PULL
        )
        for l in refined.links
    )
    return refined.replace(links=links)


def unused_processing(graph: ArchGraph) -> set:
    """Processing entities with no incident link of their own data kind."""
    used = set()
    for l in graph.links:
        used.add((l.source, l.kind))
        used.add((l.target, l.kind))
    return {
        e.id
        for e in graph.entities
        if e.kind.is_processing and (e.id, e.kind.data_kind) not in used
    }


def deactivate_unused(refined: ArchGraph) -> ArchGraph:
    return refined.with_activation((eid, False) for eid in unused_processing(refined))


def refine(abstract: ArchGraph, style) -> ArchGraph:
    """Decompose and wire ``abstract`` in the requested style (``Style`` or its string value)."""
    style = Style(style) if not isinstance(style, Style) else style
    decomposed = decompose(abstract)
    if style is Style.DIRECT:
        return refine_direct(decomposed)
    if style is Style.MEDIATED:
        return refine_mediated(decomposed)
    raise ValueError(f"cannot refine to style {style.value!r}")
