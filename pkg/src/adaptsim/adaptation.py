"""Context-driven rate adaptation.

Each node turns its context (energy, memory saturation, link bandwidth, link
priority) into four required rates through threshold scales, blends them with
its profile weights into a global rate, and a link runs at the smaller of its
two endpoints' global rates.
"""

from __future__ import annotations

import bisect
import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from adaptsim.arch_graph import ArchGraph, EntityKind, Link, entity_id
from adaptsim.context import ContextSnapshot
from adaptsim.errors import InvalidParam, InvalidProfile, MissingContext, OutOfDomain
from adaptsim.refinement import unused_processing

PR1, PR2, PR3 = 1.0, 0.5, 0.1


@dataclass(frozen=True)
class Band:
    lower: float
    upper: float
    rate: float


@dataclass(frozen=True)
class ThresholdScale:
    """Contiguous percentage bands over [0, 100]; 100 belongs to the last band."""

    bands: tuple

    def __post_init__(self):
        bands = tuple(b if isinstance(b, Band) else Band(*b) for b in self.bands)
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "_uppers", [b.upper for b in bands[:-1]])
        if not bands:
            raise InvalidParam("threshold scale needs at least one band")
        if bands[0].lower != 0 or bands[-1].upper != 100:
            raise InvalidParam("threshold bands must cover [0, 100]")
        for prev, cur in zip(bands, bands[1:]):
            if prev.upper != cur.lower:
                raise InvalidParam(f"bands not contiguous at {prev.upper} / {cur.lower}")
        for b in bands:
            if not b.lower < b.upper:
                raise InvalidParam(f"empty band [{b.lower}, {b.upper})")
            if not (math.isfinite(b.rate) and b.rate >= 0):
                raise InvalidParam(f"band rate must be finite and >= 0, got {b.rate}")

    @classmethod
    def from_breaks(cls, breaks: Sequence[float], rates: Sequence[float]) -> "ThresholdScale":
        """``breaks=[0, 40, 80, 100], rates=[0.1, 0.5, 1.0]`` gives three bands."""
        if len(breaks) != len(rates) + 1:
            raise InvalidParam("need exactly one more break than rates")
        return cls(tuple(Band(lo, hi, r) for lo, hi, r in zip(breaks, breaks[1:], rates)))

    @property
    def rates(self) -> tuple:
        return tuple(b.rate for b in self.bands)

    def band_index(self, value: float) -> int:
        if not 0 <= value <= 100:
            raise OutOfDomain(f"{value} not in [0, 100]")
        return bisect.bisect_right(self._uppers, value)


def lookup_rate(scale: ThresholdScale, value: float) -> float:
    return scale.bands[scale.band_index(value)].rate


def energy_scale(pr1=PR1, pr2=PR2, pr3=PR3) -> ThresholdScale:
    # 20-40 % is folded into the low band
    return ThresholdScale.from_breaks([0, 40, 80, 100], [pr3, pr2, pr1])


def memory_scale(pr1=PR1, pr2=PR2, pr3=PR3) -> ThresholdScale:
    # input is saturation: reflection of the energy bands
    return ThresholdScale.from_breaks([0, 20, 60, 100], [pr1, pr2, pr3])


def bandwidth_scale(pr1=PR1, pr2=PR2, pr3=PR3) -> ThresholdScale:
    return ThresholdScale.from_breaks([0, 40, 80, 100], [pr3, pr2, pr1])


def priority_scale(pr1=PR1) -> ThresholdScale:
    return ThresholdScale.from_breaks([0, 50, 100], [pr1, pr1])


# scales are immutable, so profiles can share one default instance of each
DEFAULT_SCALES = {
    "energy": energy_scale(),
    "memory": memory_scale(),
    "bandwidth": bandwidth_scale(),
    "priority": priority_scale(),
}


def priority_percent(degree: int, full_scale: int = 1) -> float:
    """Map an integer priority degree onto the [0, 100] scale domain."""
    if degree < 0:
        raise InvalidParam("priority degree must be >= 0")
    return min(100.0, 100.0 * degree / full_scale)


@dataclass(frozen=True)
class NodeProfile:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    mu: float = 1.0
    energy: ThresholdScale = DEFAULT_SCALES["energy"]
    memory: ThresholdScale = DEFAULT_SCALES["memory"]
    bandwidth: ThresholdScale = DEFAULT_SCALES["bandwidth"]
    priority: ThresholdScale = DEFAULT_SCALES["priority"]
    priority_full_scale: int = 1

    def __post_init__(self):
        w = self.weights
        if any(not (math.isfinite(x) and x >= 0) for x in w):
            raise InvalidProfile(f"weights must be finite and non-negative: {w}")
        if sum(w) <= 0:
            raise InvalidProfile("weights alpha+beta+gamma+mu must be > 0")

    @property
    def weights(self) -> tuple:
        return (self.alpha, self.beta, self.gamma, self.mu)

    def with_weights(self, **weights) -> "NodeProfile":
        return dataclasses.replace(self, **weights)


@dataclass(frozen=True)
class FactorRates:
    er: float
    mr: float
    br: float
    pr_link: float

    def as_tuple(self) -> tuple:
        return (self.er, self.mr, self.br, self.pr_link)


def factor_rates(
    profile: NodeProfile,
    energy: float,
    memory: float,
    bandwidth_pct: float,
    priority_degree: int = 0,
) -> FactorRates:
    return FactorRates(
        er=lookup_rate(profile.energy, energy),
        mr=lookup_rate(profile.memory, memory),
        br=lookup_rate(profile.bandwidth, bandwidth_pct),
        pr_link=lookup_rate(profile.priority, priority_percent(priority_degree, profile.priority_full_scale)),
    )


def global_rate(profile: NodeProfile, rates: FactorRates) -> float:
    """Weighted mean of the four factor rates under the profile weights."""
    a, b, g, m = profile.alpha, profile.beta, profile.gamma, profile.mu
    total = a + b + g + m
    if total <= 0:
        raise InvalidProfile("zero weight sum")
    er, mr, br, lr = rates.er, rates.mr, rates.br, rates.pr_link
    gr = (a * er + b * mr + g * br + m * lr) / total
    # keep rounding error inside the weighted-mean bounds
    return min(max(gr, min(er, mr, br, lr)), max(er, mr, br, lr))


def negotiate(gr_a: float, gr_b: float) -> float:
    return min(gr_a, gr_b)


def link_endpoints(link: Link) -> tuple:
    return link.source.split(".", 1)[0], link.target.split(".", 1)[0]


def bandwidth_percent(bandwidth: float, capacity: float) -> float:
    if capacity <= 0:
        return 0.0
    return min(100.0, max(0.0, 100.0 * bandwidth / capacity))


def negotiate_link(
    link: Link, ctx: ContextSnapshot, profile_a: NodeProfile, profile_b: NodeProfile
) -> tuple:
    """Return ``(gr_a, gr_b, new_rate)`` for an inter-node link."""
    a, b = link_endpoints(link)
    lid = link.id
    try:
        bw = ctx.bandwidth[lid]
        grs = []
        for node, profile in ((a, profile_a), (b, profile_b)):
            rates = factor_rates(
                profile,
                ctx.energy[node],
                ctx.memory[node],
                bandwidth_percent(bw, ctx.capacity.get(lid, 100.0)),
                ctx.priority_degree.get(lid, link.priority_degree),
            )
            grs.append(global_rate(profile, rates))
    except KeyError as exc:
        raise MissingContext(f"no context entry for {exc.args[0]!r}") from None
    return grs[0], grs[1], negotiate(grs[0], grs[1])


def adapt_link(link: Link, ctx: ContextSnapshot, profile_a: NodeProfile, profile_b: NodeProfile) -> Link:
    _, _, rate = negotiate_link(link, ctx, profile_a, profile_b)
    return dataclasses.replace(link, negotiated_rate=rate)


@dataclass(frozen=True)
class ActivationPolicy:
    deactivate_below: float = 20.0
    reactivate_above: float = 30.0

    def __post_init__(self):
        if self.reactivate_above < self.deactivate_below:
            raise InvalidParam("reactivate_above must be >= deactivate_below")


def activation_decision(active: bool, energy: float, policy: ActivationPolicy) -> bool:
    """Hysteresis rule for one low-priority processing entity."""
    if energy < policy.deactivate_below:
        return False
    if energy > policy.reactivate_above:
        return True
    return active


def apply_activation(
    graph: ArchGraph,
    node: str,
    ctx: ContextSnapshot,
    policy: ActivationPolicy,
    _unused: Optional[set] = None,
) -> set:
    """Hysteresis switch for the node's low-priority processing entity.

    Returns ``{(entity_id, active)}`` for every processing entity of ``node``.
    T_D is left as is; a T_P with no P links stays off.
    """
    try:
        energy = ctx.energy[node]
    except KeyError:
        raise MissingContext(f"no energy for node {node!r}") from None
    unused = unused_processing(graph) if _unused is None else _unused
    tp = entity_id(node, EntityKind.PROCESSING_P)
    out = set()
    for e in graph.entities_of(node):
        if not e.kind.is_processing:
            continue
        active = e.active
        if e.id == tp and tp not in unused:
            active = activation_decision(active, energy, policy)
        out.add((e.id, active))
    return out
