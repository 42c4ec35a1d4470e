"""Scenario documents: strict JSON parsing and graph (de)serialization.

A scenario file is a JSON object validated against ``data/scenario.schema.json``.
Unknown keys are rejected. Inter-node links are named ``PRODUCER->CONSUMER:KIND``
in files (e.g. ``A2->A1:D``); relative memory-trace paths resolve against the
scenario file's directory.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from adaptsim.adaptation import DEFAULT_SCALES, ActivationPolicy, NodeProfile, ThresholdScale
from adaptsim.arch_graph import (
    ArchGraph,
    DataKind,
    EntityKind,
    FlowEdge,
    NodeRecord,
    Style,
    build_abstract,
    entity_id,
)
from adaptsim.context import EnergyCostModel, LinkStochastics, MemoryTrace, StochasticParams
from adaptsim.errors import AdaptSimError, ScenarioError
from adaptsim.refinement import deactivate_unused, refine
from adaptsim.sim_engine import Scenario, ScheduledEvent

DEFAULTS = {
    "style": "direct",
    "duration": 0.0,
    "dt": 1.0,
    "adaptation_interval": 10.0,
    "adaptive": True,
    "seed": 0,
    "initial_rate": 1.0,
    "queue_bound": 100,
    "message_size": 1.0,
}

BUNDLED = {"ema4": "ema4.scenario"}


class ScenarioParseError(ScenarioError):
    def __init__(self, msg, line=None, column=None):
        super().__init__(msg)
        self.line = line
        self.column = column


def schema() -> dict:
    return json.loads(resources.files("adaptsim").joinpath("data/scenario.schema.json").read_text())


def bundled_path(name: str = "ema4") -> Path:
    return Path(str(resources.files("adaptsim").joinpath("data", BUNDLED[name])))


def resolve_path(path) -> Path:
    """Accept a file path or the name of a bundled scenario."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return bundled_path(str(path))
    return p


def link_name(producer: str, consumer: str, kind: DataKind) -> str:
    return f"{producer}->{consumer}:{kind.value}"


def link_id_from_name(name: str) -> str:
    """``A2->A1:D`` to the refined link id ``A2.C->A1.C:D``."""
    try:
        pair, kind = name.rsplit(":", 1)
        a, b = pair.split("->")
        DataKind(kind)
    except ValueError:
        raise ScenarioError(f"bad link name {name!r}, expected PRODUCER->CONSUMER:KIND") from None
    comm = EntityKind.COMMUNICATION
    return f"{entity_id(a, comm)}->{entity_id(b, comm)}:{kind}"


def graph_to_document(graph: ArchGraph) -> dict:
    """The ``nodes``/``flows``/``style`` part of a scenario document."""
    doc = {
        "nodes": [],
        "flows": [
            {"producer": f.producer, "consumer": f.consumer, "kind": f.kind.value, "priority": f.priority}
            for f in graph.flows
        ],
    }
    for n in graph.nodes:
        rec = {"id": n.id, "role": n.role}
        if n.profile:
            rec["profile"] = n.profile
        if n.hosts:
            rec["hosts"] = sorted(k.value for k in n.hosts)
        doc["nodes"].append(rec)
    if graph.style is not Style.UNREFINED:
        doc["style"] = graph.style.value
    return doc


def graph_from_document(doc: dict) -> ArchGraph:
    """Abstract graph from ``doc``, refined when the document names a style."""
    abstract = build_abstract(
        [
            NodeRecord(
                n["id"],
                n.get("role", ""),
                n.get("profile"),
                frozenset(DataKind(k) for k in n.get("hosts", ())),
            )
            for n in doc["nodes"]
        ],
        [
            FlowEdge(f["producer"], f["consumer"], DataKind(f["kind"]), f.get("priority"))
            for f in doc["flows"]
        ],
    )
    if "style" not in doc:
        return abstract
    return refine(abstract, doc["style"])


def _scale(entry, name: str) -> ThresholdScale:
    if entry is None:
        return DEFAULT_SCALES[name]
    return ThresholdScale.from_breaks(entry["breaks"], entry["rates"])


def _profile(entry: dict, base: dict) -> NodeProfile:
    merged = {**base, **{k: v for k, v in entry.items() if k != "scales"}}
    scales = {**base.get("scales", {}), **entry.get("scales", {})}
    return NodeProfile(
        alpha=merged.get("alpha", 1.0),
        beta=merged.get("beta", 1.0),
        gamma=merged.get("gamma", 1.0),
        mu=merged.get("mu", 1.0),
        **{name: _scale(scales.get(name), name) for name in DEFAULT_SCALES},
        priority_full_scale=merged.get("priority_full_scale", 1),
    )


def _memory_trace(entry, base_dir: Path) -> MemoryTrace:
    if isinstance(entry, str):
        p = Path(entry)
        return MemoryTrace.from_csv(p if p.is_absolute() else base_dir / p)
    if isinstance(entry, (int, float)):
        return MemoryTrace.constant(float(entry))
    return MemoryTrace(tuple(tuple(s) for s in entry))


def parse_document(doc: dict, base_dir=".") -> Scenario:
    """Validate ``doc`` against the schema and build a checked :class:`Scenario`.

    Schema and reference errors raise :class:`ScenarioError`; domain checks
    (profiles, scales, cost models) raise their own ``AdaptSimError`` subclass.
    """
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {e.message}")
    base_dir = Path(base_dir)
    try:
        return _build(doc, base_dir)
    except AdaptSimError:
        raise
    except (ValueError, OSError) as exc:
        raise ScenarioError(f"{type(exc).__name__}: {exc}") from exc


def _build(doc: dict, base_dir: Path) -> Scenario:
    d = {**DEFAULTS, **doc}
    # static runs switch everything back on, see sim_engine.init_state
    graph = deactivate_unused(graph_from_document(d))
    node_ids = graph.node_ids

    profiles_doc = d.get("profiles", {})
    base = profiles_doc.get("default", {})
    profiles = {}
    for n in graph.nodes:
        key = n.profile or n.id
        if n.profile and n.profile not in profiles_doc:
            raise ScenarioError(f"node {n.id} references unknown profile {n.profile!r}")
        profiles[n.id] = _profile(profiles_doc.get(key, {}), base)

    production = {}
    for nid, rates in d.get("production", {}).items():
        if nid not in node_ids:
            raise ScenarioError(f"production for unknown node {nid}")
        for kind, lam in rates.items():
            production[entity_id(nid, EntityKind.processing_for(DataKind(kind)))] = float(lam)

    bw_doc = d.get("bandwidth", {})

    def gaussian(g):
        return LinkStochastics(float(g["mean"]), float(g["sigma"]), float(g.get("capacity", 100.0)))

    stochastic = StochasticParams(
        production=production,
        bandwidth={link_id_from_name(k): gaussian(v) for k, v in bw_doc.get("links", {}).items()},
        default_bandwidth=gaussian(bw_doc["default"]) if "default" in bw_doc else LinkStochastics(100.0, 0.0, 100.0),
        memory_per_message=float(d.get("memory", {}).get("per_message", 0.0)),
    )
    traces = {
        nid: _memory_trace(entry, base_dir) for nid, entry in d.get("memory", {}).get("traces", {}).items()
    }

    cost_model = EnergyCostModel(**d.get("cost_model", {}))
    base_costs = d.get("cost_model", {})
    node_costs = {
        nid: EnergyCostModel(**{**base_costs, **c}) for nid, c in d.get("node_cost_models", {}).items()
    }

    events = []
    for ev in d.get("events", []):
        if ev["kind"] == "weights":
            values = {k: ev[k] for k in ("alpha", "beta", "gamma", "mu") if k in ev}
            events.append(ScheduledEvent(float(ev["time"]), "weights", ev["node"], values))
        else:
            events.append(
                ScheduledEvent(float(ev["time"]), "priority", link_id_from_name(ev["link"]), {"degree": ev["degree"]})
            )
    events.sort(key=lambda e: e.time)

    scenario = Scenario(
        graph=graph,
        profiles=profiles,
        stochastic=stochastic,
        memory_traces=traces,
        cost_model=cost_model,
        node_cost_models=node_costs,
        activation=ActivationPolicy(**d.get("activation", {})),
        duration=float(d["duration"]),
        dt=float(d["dt"]),
        adaptation_interval=float(d["adaptation_interval"]),
        adaptive=bool(d["adaptive"]),
        seed=int(d["seed"]),
        scheduled_events=tuple(events),
        initial_energy={k: float(v) for k, v in d.get("initial_energy", {}).items()},
        initial_rate=float(d["initial_rate"]),
        queue_bound=int(d["queue_bound"]),
        message_size=float(d["message_size"]),
        name=d.get("name", "scenario"),
    )
    scenario.check()
    return scenario


def read_document(path) -> dict:
    path = resolve_path(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ScenarioParseError(f"{path}: top level must be an object", 1, 1)
    return doc


def load_scenario(path, *, style=None) -> Scenario:
    """Parse and validate a scenario file; ``style`` overrides the file's style."""
    path = resolve_path(path)
    doc = read_document(path)
    if style is not None:
        doc = {**doc, "style": Style(style).value if not isinstance(style, Style) else style.value}
    return parse_document(doc, Path(path).parent)
