"""Context snapshots and generators, plus the state-based energy model."""

from __future__ import annotations

import bisect
import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from adaptsim.errors import EmptyTrace, InvalidParam

MEMORY_TRACE_HEADER = ("time_s", "saturation_pct")


@dataclass
class ContextSnapshot:
    """Per-node energy/memory and per-link bandwidth/priority at one instant.

    Link-keyed maps use ``Link.id``. ``capacity`` gives the bandwidth that
    counts as 100 %; links without an entry use 100 units/s.
    """

    time: float
    energy: dict
    memory: dict
    bandwidth: dict = field(default_factory=dict)
    priority_degree: dict = field(default_factory=dict)
    capacity: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("energy", "memory"):
            for node, v in getattr(self, name).items():
                if not 0 <= v <= 100:
                    raise InvalidParam(f"{name} of {node} out of [0, 100]: {v}")


@dataclass(frozen=True)
class LinkStochastics:
    mean: float
    sigma: float
    capacity: float = 100.0


@dataclass(frozen=True)
class StochasticParams:
    """``production`` maps a producer entity id to its Poisson rate (msgs/s);
    ``bandwidth`` maps a link id to its Gaussian parameters."""

    production: dict = field(default_factory=dict)
    bandwidth: dict = field(default_factory=dict)
    default_bandwidth: LinkStochastics = LinkStochastics(100.0, 0.0, 100.0)
    memory_per_message: float = 0.0

    def __post_init__(self):
        for k, lam in self.production.items():
            if not lam >= 0:
                raise InvalidParam(f"lambda for {k} must be >= 0")
        for k, bw in list(self.bandwidth.items()) + [("default", self.default_bandwidth)]:
            if not bw.sigma >= 0:
                raise InvalidParam(f"sigma for {k} must be >= 0")
            if not bw.capacity > 0:
                raise InvalidParam(f"capacity for {k} must be > 0")
        if self.memory_per_message < 0:
            raise InvalidParam("memory_per_message must be >= 0")

    def link(self, link_id: str) -> LinkStochastics:
        return self.bandwidth.get(link_id, self.default_bandwidth)


def sample_production(lam: float, dt: float, rng: np.random.Generator) -> int:
    """Number of messages produced in ``dt`` seconds at Poisson rate ``lam``."""
    if lam < 0 or dt <= 0:
        raise InvalidParam(f"need lambda >= 0 and dt > 0, got {lam}, {dt}")
    return int(rng.poisson(lam * dt))


def sample_bandwidth(m: float, sigma: float, rng: np.random.Generator) -> float:
    if sigma < 0:
        raise InvalidParam(f"sigma must be >= 0, got {sigma}")
    return max(0.0, float(rng.normal(m, sigma)))


@dataclass(frozen=True)
class MemoryTrace:
    samples: tuple

    def __post_init__(self):
        samples = tuple((float(t), float(s)) for t, s in self.samples)
        object.__setattr__(self, "samples", samples)
        for (t0, _), (t1, _) in zip(samples, samples[1:]):
            if not t1 > t0:
                raise InvalidParam("memory trace times must be strictly increasing")
        for t, s in samples:
            if not 0 <= s <= 100:
                raise InvalidParam(f"saturation {s} at t={t} out of [0, 100]")
        object.__setattr__(self, "_times", [t for t, _ in samples])

    @classmethod
    def constant(cls, saturation: float) -> "MemoryTrace":
        return cls(((0.0, saturation),))

    @classmethod
    def from_csv(cls, path) -> "MemoryTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != MEMORY_TRACE_HEADER:
                raise InvalidParam(f"{path}: expected header {','.join(MEMORY_TRACE_HEADER)}")
            rows = [(float(t), float(s)) for t, s in reader if t.strip()]
        return cls(tuple(rows))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MEMORY_TRACE_HEADER)
            for t, s in self.samples:
                w.writerow([repr(t), repr(s)])


def memory_at(trace: MemoryTrace, t: float) -> float:
    """Step-hold lookup: value of the last sample at or before ``t``."""
    if not trace.samples:
        raise EmptyTrace("memory trace has no samples")
    i = bisect.bisect_right(trace._times, t) - 1
    return trace.samples[max(i, 0)][1]


class NodeActivityState(enum.Enum):
    PRODUCING = "producing"
    CONSUMING = "consuming"
    IDLE = "idle"
    INACTIVE = "inactive"


def classify_state(sent: int, received: int, any_processing_active: bool) -> NodeActivityState:
    if not any_processing_active:
        return NodeActivityState.INACTIVE
    if sent:
        return NodeActivityState.PRODUCING
    if received:
        return NodeActivityState.CONSUMING
    return NodeActivityState.IDLE


@dataclass(frozen=True)
class EnergyCostModel:
    """Drain in percent of battery capacity, per second or per message.

    ``entity_cost`` is charged per active processing entity per second on
    top of the state cost; it is 0 by default.
    """

    idle_cost: float = 0.005
    inactive_cost: float = 0.002
    active_base_cost: float = 0.01
    push_send_cost: float = 0.02
    push_recv_cost: float = 0.01
    pull_request_cost: float = 0.005
    pull_transfer_cost: float = 0.015
    entity_cost: float = 0.0

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (math.isfinite(v) and v >= 0):
                raise InvalidParam(f"{name} must be finite and >= 0")
        if not self.inactive_cost <= self.idle_cost <= self.active_base_cost:
            raise InvalidParam("need inactive_cost <= idle_cost <= active_base_cost")

    def base(self, state: NodeActivityState) -> float:
        if state is NodeActivityState.INACTIVE:
            return self.inactive_cost
        if state is NodeActivityState.IDLE:
            return self.idle_cost
        return self.active_base_cost


def consume_energy(
    energy: float,
    state: NodeActivityState,
    msgs_sent: int,
    msgs_recv: int,
    dt: float,
    model: EnergyCostModel,
    *,
    pull_requests: int = 0,
    pull_served: int = 0,
    active_entities: int = 0,
) -> float:
    """Energy left after one step.

    ``msgs_sent``/``msgs_recv`` count push messages. Pulled data is charged
    through ``pull_requests`` (consumer side, per request issued) and
    ``pull_served`` (producer side, per message delivered).
    """
    drain = (
        model.base(state) * dt
        + model.entity_cost * active_entities * dt
        + model.push_send_cost * msgs_sent
        + model.push_recv_cost * msgs_recv
        + model.pull_request_cost * pull_requests
        + model.pull_transfer_cost * pull_served
    )
    return max(0.0, energy - drain)
