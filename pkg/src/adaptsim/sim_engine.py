"""Fixed-step simulation of a refined architecture under changing context.

One run owns a single ``numpy.random.Generator``. Random context is drawn in
blocks of ``DRAW_BLOCK`` steps: first every bandwidth sample of the block
(step-major, links sorted by id), then every Poisson production count
(step-major, producer entities sorted by id). Draws happen whether or not
an entity is active, so adaptive and static runs with the same seed see the
same random context.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from adaptsim.adaptation import (
    PR1,
    ActivationPolicy,
    NodeProfile,
    activation_decision,
    link_endpoints,
    negotiate_link,
)
from adaptsim.arch_graph import (
    ArchGraph,
    EntityKind,
    InteractionMode,
    Level,
    entity_id,
    validate,
)
from adaptsim.context import (
    ContextSnapshot,
    EnergyCostModel,
    MemoryTrace,
    NodeActivityState,
    StochasticParams,
    classify_state,
    consume_energy,
)
from adaptsim.errors import IncomparableTraces, ScenarioError, UnknownNode
from adaptsim.refinement import deactivate_unused, unused_processing

log = logging.getLogger(__name__)

STATE_CODES = {
    NodeActivityState.PRODUCING: 0,
    NodeActivityState.CONSUMING: 1,
    NodeActivityState.IDLE: 2,
    NodeActivityState.INACTIVE: 3,
}
STATE_NAMES = {code: state.value for state, code in STATE_CODES.items()}

NODE_CSV_HEADER = ("time_s", "node", "energy_pct", "memory_pct", "state", "msgs_sent", "msgs_recv")
LINK_CSV_HEADER = ("time_s", "link", "bandwidth", "rate", "transferred", "dropped")


@dataclass(frozen=True)
class ScheduledEvent:
    """Timed override applied at the first step starting at or after ``time``.

    ``kind="weights"``: ``target`` is a node id, ``values`` a subset of
    alpha/beta/gamma/mu. ``kind="priority"``: ``target`` is a link id,
    ``values`` is ``{"degree": int}``.
    """

    time: float
    kind: str
    target: str
    values: dict


@dataclass
class Scenario:
    graph: ArchGraph
    profiles: dict
    stochastic: StochasticParams = field(default_factory=StochasticParams)
    memory_traces: dict = field(default_factory=dict)
    cost_model: EnergyCostModel = field(default_factory=EnergyCostModel)
    node_cost_models: dict = field(default_factory=dict)
    activation: ActivationPolicy = field(default_factory=ActivationPolicy)
    duration: float = 0.0
    dt: float = 1.0
    adaptation_interval: float = 10.0
    adaptive: bool = True
    seed: int = 0
    scheduled_events: tuple = ()
    initial_energy: dict = field(default_factory=dict)
    initial_rate: float = PR1
    queue_bound: int = 100
    message_size: float = 1.0
    name: str = "scenario"

    def check(self) -> None:
        """Raise :class:`ScenarioError` naming the first violated constraint."""
        if self.graph.level is not Level.REFINED:
            raise ScenarioError("graph must be refined")
        problems = validate(self.graph)
        if problems:
            raise ScenarioError("graph invalid: " + "; ".join(map(str, problems)))
        if not self.dt > 0:
            raise ScenarioError("dt must be > 0")
        if not self.duration >= 0:
            raise ScenarioError("duration must be >= 0")
        if not self.adaptation_interval >= self.dt:
            raise ScenarioError("adaptation_interval must be >= dt")
        if not self.initial_rate >= 0:
            raise ScenarioError("initial_rate must be >= 0")
        if self.queue_bound < 0:
            raise ScenarioError("queue_bound must be >= 0")
        if not self.message_size > 0:
            raise ScenarioError("message_size must be > 0")
        nodes = set(self.graph.node_ids)
        for nid in nodes:
            if nid not in self.profiles:
                raise ScenarioError(f"no profile for node {nid}")
            if not isinstance(self.profiles[nid], NodeProfile):
                raise ScenarioError(f"profile for {nid} is not a NodeProfile")
        for nid, e in self.initial_energy.items():
            if nid not in nodes:
                raise ScenarioError(f"initial_energy for unknown node {nid}")
            if not 0 <= e <= 100:
                raise ScenarioError(f"initial_energy of {nid} out of [0, 100]")
        link_ids = {l.id for l in self.graph.inter_links()}
        entity_ids = {e.id for e in self.graph.entities}
        for eid in self.stochastic.production:
            if eid not in entity_ids:
                raise ScenarioError(f"production rate for unknown entity {eid}")
        for lid in self.stochastic.bandwidth:
            if lid not in link_ids:
                raise ScenarioError(f"bandwidth params for unknown link {lid}")
        for nid in self.node_cost_models:
            if nid not in nodes:
                raise ScenarioError(f"cost model for unknown node {nid}")
        for nid in self.memory_traces:
            if nid not in nodes:
                raise ScenarioError(f"memory trace for unknown node {nid}")
        for ev in self.scheduled_events:
            if ev.kind == "weights":
                if ev.target not in nodes:
                    raise ScenarioError(f"weights event for unknown node {ev.target}")
                try:
                    self.profiles[ev.target].with_weights(**ev.values)
                except Exception as exc:
                    raise ScenarioError(f"bad weights event at t={ev.time}: {exc}") from None
            elif ev.kind == "priority":
                if ev.target not in link_ids:
                    raise ScenarioError(f"priority event for unknown link {ev.target}")
                if int(ev.values.get("degree", -1)) < 0:
                    raise ScenarioError("priority event needs a non-negative degree")
            else:
                raise ScenarioError(f"unknown event kind {ev.kind!r}")

    def cost_model_of(self, node: str) -> EnergyCostModel:
        return self.node_cost_models.get(node, self.cost_model)

    def with_adaptive(self, adaptive: bool) -> "Scenario":
        return dataclasses.replace(self, adaptive=adaptive)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))


@dataclass
class _LinkPlan:
    link: object
    id: str
    src: int
    dst: int
    push: bool
    producer: int  # entity index of the producing processing entity
    consumer: int
    mean: float
    sigma: float
    capacity: float


@dataclass
class _Plan:
    """Index tables derived once per run from the scenario."""

    scenario: Scenario
    graph: ArchGraph
    node_ids: list
    entity_ids: list
    links: list
    producers: list  # (entity index, node index, [link indices])
    lambdas: np.ndarray
    bw_mean: list
    bw_sigma: list
    processing: list  # per node: entity indices of processing entities
    owned: list  # per node: all entity indices
    low_priority: list  # per node: index of a policy-governed T_P, or None
    traces: list
    costs: list  # per node EnergyCostModel
    node_links: list  # per node: outgoing link indices
    interval_steps: int


def _plan(scenario: Scenario, graph: ArchGraph) -> _Plan:
    node_ids = graph.node_ids
    nidx = {n: i for i, n in enumerate(node_ids)}
    entity_ids = sorted(e.id for e in graph.entities)
    eidx = {e: i for i, e in enumerate(entity_ids)}
    st = scenario.stochastic
    links = []
    for l in graph.inter_links():
        a, b = link_endpoints(l)
        ek = EntityKind.processing_for(l.kind)
        bw = st.link(l.id)
        links.append(
            _LinkPlan(
                link=l,
                id=l.id,
                src=nidx[a],
                dst=nidx[b],
                push=l.mode is InteractionMode.PUSH,
                producer=eidx[entity_id(a, ek)],
                consumer=eidx[entity_id(b, ek)],
                mean=bw.mean,
                sigma=bw.sigma,
                capacity=bw.capacity,
            )
        )
    feeds = {}
    for i, lp in enumerate(links):
        feeds.setdefault(entity_ids[lp.producer], []).append(i)
    producers = [(eidx[eid], nidx[graph.owner_of(eid)], feeds[eid]) for eid in sorted(feeds)]
    unused = unused_processing(graph)
    low_priority = []
    for n in node_ids:
        tp = entity_id(n, EntityKind.PROCESSING_P)
        low_priority.append(eidx[tp] if tp in eidx and tp not in unused else None)
    return _Plan(
        scenario=scenario,
        graph=graph,
        node_ids=node_ids,
        entity_ids=entity_ids,
        links=links,
        producers=producers,
        lambdas=np.array([st.production.get(entity_ids[e], 0.0) for e, _, _ in producers], dtype=float),
        bw_mean=[lp.mean for lp in links],
        bw_sigma=[lp.sigma for lp in links],
        processing=[[eidx[e.id] for e in graph.entities_of(n) if e.kind.is_processing] for n in node_ids],
        owned=[[eidx[e.id] for e in graph.entities_of(n)] for n in node_ids],
        low_priority=low_priority,
        traces=[scenario.memory_traces.get(n, MemoryTrace.constant(0.0)) for n in node_ids],
        costs=[scenario.cost_model_of(n) for n in node_ids],
        node_links=[[i for i, lp in enumerate(links) if lp.src == k] for k in range(len(node_ids))],
        interval_steps=max(1, int(round(scenario.adaptation_interval / scenario.dt))),
    )


@dataclass
class SimState:
    """Mutable run state. Per-node lists follow ``plan.node_ids``, per-link
    lists follow ``plan.links``, ``active`` follows ``plan.entity_ids``."""

    plan: _Plan
    step_index: int
    time: float
    energy: list
    memory: list
    active: list
    rates: list
    queues: list
    credits: list
    priority: dict
    profiles: dict
    mem_cursor: list
    next_event: int = 0
    # written by step() and copied into the trace
    bandwidth: list = field(default_factory=list)
    states: list = field(default_factory=list)
    sent: list = field(default_factory=list)
    recv: list = field(default_factory=list)
    transferred: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    offered: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    draws: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def active_map(self) -> dict:
        return dict(zip(self.plan.entity_ids, self.active))

    def record(self) -> None:
        row = [self.time]
        for part in (
            self.energy, self.memory, self.states, self.sent, self.recv, self.bandwidth,
            self.rates, self.transferred, self.dropped, self.offered, self.queues, self.active,
        ):
            row += part
        self.rows.append(row)


def _read_memory(s: SimState, t: float) -> list:
    plan = s.plan
    per_msg = plan.scenario.stochastic.memory_per_message
    out = []
    for k, trace in enumerate(plan.traces):
        samples = trace.samples
        c = s.mem_cursor[k]
        while c + 1 < len(samples) and samples[c + 1][0] <= t:
            c += 1
        s.mem_cursor[k] = c
        m = samples[c][1]
        if per_msg:
            m = min(100.0, m + per_msg * sum(s.queues[i] for i in plan.node_links[k]))
        out.append(m)
    return out


def init_state(scenario: Scenario) -> SimState:
    """Build the t=0 state (already recorded) for ``scenario``.

    Adaptive runs start from the graph with unused processing entities
    switched off; static runs keep every structurally present entity on.
    """
    scenario.check()
    if scenario.adaptive:
        graph = deactivate_unused(scenario.graph)
    else:
        graph = scenario.graph.with_activation((e.id, True) for e in scenario.graph.entities)
    plan = _plan(scenario, graph)
    n_nodes, n_links = len(plan.node_ids), len(plan.links)
    flags = {e.id: e.active for e in graph.entities}
    s = SimState(
        plan=plan,
        step_index=0,
        time=0.0,
        energy=[float(scenario.initial_energy.get(n, 100.0)) for n in plan.node_ids],
        memory=[],
        active=[flags[e] for e in plan.entity_ids],
        rates=[float(scenario.initial_rate)] * n_links,
        queues=[0] * n_links,
        credits=[0.0] * n_links,
        priority={lp.id: lp.link.priority_degree for lp in plan.links},
        profiles=dict(scenario.profiles),
        mem_cursor=[0] * n_nodes,
    )
    s.memory = _read_memory(s, 0.0)
    s.bandwidth = [max(0.0, m) for m in plan.bw_mean]
    s.states = [
        STATE_CODES[classify_state(0, 0, any(s.active[e] for e in procs))] for procs in plan.processing
    ]
    s.sent = [0] * n_nodes
    s.recv = [0] * n_nodes
    s.transferred = [0] * n_links
    s.dropped = [0] * n_links
    s.offered = [0] * n_links
    s.record()
    return s


def _apply_events(s: SimState) -> None:
    events = s.plan.scenario.scheduled_events
    while s.next_event < len(events) and events[s.next_event].time <= s.time + 1e-9:
        ev = events[s.next_event]
        if ev.kind == "weights":
            s.profiles[ev.target] = s.profiles[ev.target].with_weights(**ev.values)
        else:
            s.priority[ev.target] = int(ev.values["degree"])
        log.debug("t=%s applied %s event on %s", s.time, ev.kind, ev.target)
        s.next_event += 1


_INACTIVE = STATE_CODES[NodeActivityState.INACTIVE]
DRAW_BLOCK = 512


def _refill(s: SimState, rng: np.random.Generator, dt: float) -> None:
    """Pre-draw the random context for the next ``DRAW_BLOCK`` steps.

    Per block: all Gaussian bandwidth draws (step-major, links sorted by id),
    then all Poisson production counts (step-major, producers sorted by id).
    """
    plan = s.plan
    bw = rng.normal(plan.bw_mean, plan.bw_sigma, size=(DRAW_BLOCK, len(plan.links)))
    bw = np.maximum(bw, 0.0).tolist()
    counts = rng.poisson(plan.lambdas * dt, size=(DRAW_BLOCK, len(plan.producers))).tolist()
    s.draws = list(zip(bw, counts))[::-1]


def step(s: SimState, scenario: Scenario, rng: np.random.Generator) -> SimState:
    """Advance ``s`` by one ``dt`` in place and return it."""
    plan = s.plan
    dt = scenario.dt
    links = plan.links
    n_links = len(links)
    n_nodes = len(plan.node_ids)
    if s.next_event < len(scenario.scheduled_events):
        _apply_events(s)
    t_new = (s.step_index + 1) * dt

    # (1) context
    if not s.draws:
        _refill(s, rng, dt)
    bw, counts = s.draws.pop()
    memory = _read_memory(s, t_new)

    energy = s.energy
    active = s.active
    alive = [e > 0.0 for e in energy]

    # (2) production, copied onto every outgoing link of the entity
    offered = [0] * n_links
    for (e, k, feeds), n in zip(plan.producers, counts):
        if n and alive[k] and active[e]:
            for i in feeds:
                offered[i] = n

    # (3) transfers
    push_sent = [0] * n_nodes
    push_recv = [0] * n_nodes
    pull_req = [0] * n_nodes
    pull_served = [0] * n_nodes
    pull_recv = [0] * n_nodes
    transferred = [0] * n_links
    dropped = [0] * n_links
    size = scenario.message_size
    bound = scenario.queue_bound
    queues = s.queues
    credits = s.credits
    rates = s.rates
    for i, lp in enumerate(links):
        q = queues[i] + offered[i]
        n = 0
        if alive[lp.src] and alive[lp.dst] and active[lp.consumer]:
            budget = rates[i] * dt
            credit = min(credits[i] + budget, math.ceil(budget))
            allowed = int(credit + 1e-9)
            bw_cap = int(bw[i] * dt / size)
            if lp.push:
                n = min(q, allowed, bw_cap)
                credit -= n
                push_sent[lp.src] += n
                push_recv[lp.dst] += n
            else:
                # the consumer spends its whole request budget
                credit -= allowed
                n = min(q, allowed, bw_cap)
                pull_req[lp.dst] += allowed
                pull_served[lp.src] += n
                pull_recv[lp.dst] += n
            credits[i] = max(credit, 0.0)
        q -= n
        if q > bound:
            dropped[i] = q - bound
            q = bound
        queues[i] = q
        transferred[i] = n

    # (4) energy
    costs = plan.costs
    states = [_INACTIVE] * n_nodes
    sent = [a + b for a, b in zip(push_sent, pull_served)]
    recv = [a + b for a, b in zip(push_recv, pull_recv)]
    for k in range(n_nodes):
        if not alive[k]:
            continue
        n_active = 0
        for e in plan.processing[k]:
            if active[e]:
                n_active += 1
        state = classify_state(sent[k], recv[k], n_active > 0)
        states[k] = STATE_CODES[state]
        energy[k] = consume_energy(
            energy[k], state, push_sent[k], push_recv[k], dt, costs[k],
            pull_requests=pull_req[k], pull_served=pull_served[k], active_entities=n_active,
        )
        if energy[k] <= 0.0:
            for e in plan.owned[k]:
                active[e] = False

    s.step_index += 1
    s.time = t_new
    s.memory = memory
    s.bandwidth = bw
    s.states = states
    s.sent = sent
    s.recv = recv
    s.transferred = transferred
    s.dropped = dropped
    s.offered = offered

    # (5) adaptation
    if scenario.adaptive and s.step_index % plan.interval_steps == 0:
        _adapt(s, scenario)

    # (6) record
    s.record()
    return s


def snapshot(s: SimState) -> ContextSnapshot:
    plan = s.plan
    return ContextSnapshot(
        time=s.time,
        energy=dict(zip(plan.node_ids, s.energy)),
        memory=dict(zip(plan.node_ids, s.memory)),
        bandwidth={lp.id: b for lp, b in zip(plan.links, s.bandwidth)},
        priority_degree=dict(s.priority),
        capacity={lp.id: lp.capacity for lp in plan.links},
    )


def _adapt(s: SimState, scenario: Scenario) -> None:
    plan = s.plan
    ctx = snapshot(s)
    for i, lp in enumerate(plan.links):
        a, b = plan.node_ids[lp.src], plan.node_ids[lp.dst]
        gr_a, gr_b, rate = negotiate_link(lp.link, ctx, s.profiles[a], s.profiles[b])
        if rate != s.rates[i]:
            s.events.append((s.time, lp.id, gr_a, gr_b, rate))
        s.rates[i] = rate
    for k, tp in enumerate(plan.low_priority):
        if tp is not None and s.energy[k] > 0.0:
            s.active[tp] = activation_decision(s.active[tp], s.energy[k], scenario.activation)


@dataclass
class SimTrace:
    """Per-step record of one run. Row ``r`` of every array is time ``time[r]``."""

    node_ids: list
    link_ids: list
    entity_ids: list
    time: np.ndarray
    energy: np.ndarray
    memory: np.ndarray
    state: np.ndarray
    sent: np.ndarray
    recv: np.ndarray
    bandwidth: np.ndarray
    rate: np.ndarray
    transferred: np.ndarray
    dropped: np.ndarray
    offered: np.ndarray
    queued: np.ndarray
    active: np.ndarray
    events: list
    meta: dict

    def __len__(self) -> int:
        return len(self.time)

    def node_index(self, node: str) -> int:
        try:
            return self.node_ids.index(node)
        except ValueError:
            raise UnknownNode(node) from None

    def energy_of(self, node: str) -> np.ndarray:
        return self.energy[:, self.node_index(node)]

    def write_nodes_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(NODE_CSV_HEADER)
            times = self.time.tolist()
            energy, memory = self.energy.tolist(), self.memory.tolist()
            state, sent, recv = self.state.tolist(), self.sent.tolist(), self.recv.tolist()
            for r, t in enumerate(times):
                for k, nid in enumerate(self.node_ids):
                    w.writerow(
                        (repr(t), nid, repr(energy[r][k]), repr(memory[r][k]),
                         STATE_NAMES[state[r][k]], sent[r][k], recv[r][k])
                    )

    def write_links_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LINK_CSV_HEADER)
            times = self.time.tolist()
            bw, rate = self.bandwidth.tolist(), self.rate.tolist()
            tr, dr = self.transferred.tolist(), self.dropped.tolist()
            for r, t in enumerate(times):
                for i, lid in enumerate(self.link_ids):
                    w.writerow((repr(t), lid, repr(bw[r][i]), repr(rate[r][i]), tr[r][i], dr[r][i]))


def _finish(s: SimState, scenario: Scenario) -> SimTrace:
    plan = s.plan
    n, m, e = len(plan.node_ids), len(plan.links), len(plan.entity_ids)
    table = np.array(s.rows, dtype=float).reshape(len(s.rows), 1 + 5 * n + 6 * m + e)
    cols = {}
    pos = 1
    for name, width, dtype in (
        ("energy", n, float), ("memory", n, float), ("state", n, np.int8),
        ("sent", n, np.int64), ("recv", n, np.int64), ("bandwidth", m, float),
        ("rate", m, float), ("transferred", m, np.int64), ("dropped", m, np.int64),
        ("offered", m, np.int64), ("queued", m, np.int64), ("active", e, bool),
    ):
        cols[name] = table[:, pos:pos + width].astype(dtype)
        pos += width
    return SimTrace(
        node_ids=list(plan.node_ids),
        link_ids=[lp.id for lp in plan.links],
        entity_ids=list(plan.entity_ids),
        time=table[:, 0].copy(),
        events=list(s.events),
        meta={
            "scenario": scenario.name,
            "seed": scenario.seed,
            "adaptive": scenario.adaptive,
            "duration": scenario.duration,
            "dt": scenario.dt,
            "queue_bound": scenario.queue_bound,
            "message_size": scenario.message_size,
        },
        **cols,
    )


def run(scenario: Scenario) -> SimTrace:
    """Simulate ``scenario`` from t=0 to its duration."""
    s = init_state(scenario)
    rng = np.random.default_rng(scenario.seed)
    for _ in range(scenario.n_steps):
        step(s, scenario, rng)
    return _finish(s, scenario)


def lifetime(trace: SimTrace, node: str) -> float:
    """First record time at which the node's energy is 0, else the run duration."""
    series = trace.energy_of(node)
    dead = np.flatnonzero(series <= 0.0)
    if dead.size:
        return float(trace.time[dead[0]])
    return float(trace.meta["duration"])


@dataclass(frozen=True)
class NodeLifetime:
    adaptive_s: float
    static_s: float

    @property
    def delta_seconds(self) -> float:
        return self.adaptive_s - self.static_s

    @property
    def delta_percent(self) -> float:
        if self.static_s == 0:
            return 0.0 if self.adaptive_s == 0 else math.inf
        return 100.0 * self.delta_seconds / self.static_s


@dataclass(frozen=True)
class LifetimeReport:
    seed: int
    nodes: dict  # node id -> NodeLifetime

    def rows(self) -> list:
        return [
            (nid, lt.static_s, lt.adaptive_s, lt.delta_seconds, lt.delta_percent)
            for nid, lt in sorted(self.nodes.items())
        ]


def compare(adaptive_trace: SimTrace, static_trace: SimTrace) -> LifetimeReport:
    if adaptive_trace.node_ids != static_trace.node_ids:
        raise IncomparableTraces(
            f"node sets differ: {adaptive_trace.node_ids} vs {static_trace.node_ids}"
        )
    for key in ("seed", "duration", "dt"):
        if adaptive_trace.meta[key] != static_trace.meta[key]:
            raise IncomparableTraces(f"{key} differs between traces")
    return LifetimeReport(
        seed=adaptive_trace.meta["seed"],
        nodes={
            nid: NodeLifetime(lifetime(adaptive_trace, nid), lifetime(static_trace, nid))
            for nid in adaptive_trace.node_ids
        },
    )
