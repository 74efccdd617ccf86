"""Simulated data plane: topology graph, links with queues and byte
counters, per-switch forwarding tables, and host attachment points.

Switches are identified by string ids.  Every switch port is either the
end of an inter-switch link or a host attachment; ports are numbered
from 1 in allocation order.  Links are bidirectional with independent
per-direction FIFO drop-tail queues and tx byte counters.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field


DEFAULT_CAPACITY_BPS = 100_000_000.0
DEFAULT_PROP_DELAY_S = 0.001
DEFAULT_QUEUE_LIMIT = 100


class TopologyError(Exception):
    """Malformed or infeasible topology input."""


class RuleError(Exception):
    """Forwarding-rule delta rejected; tables are unchanged."""


class LinkDirection:
    """One direction of a link: FIFO drop-tail queue plus counters."""

    __slots__ = ("busy_until", "in_service", "tx_bytes", "drops")

    def __init__(self):
        self.busy_until = 0.0
        # serialization-end times of packets not yet fully transmitted
        self.in_service = deque()
        self.tx_bytes = 0
        self.drops = 0

    def occupancy(self, now):
        q = self.in_service
        while q and q[0] <= now:
            q.popleft()
        return len(q)


class Link:
    """Bidirectional link between two switch ports.

    Direction 0 carries traffic a->b, direction 1 carries b->a.
    """

    __slots__ = ("sw_a", "port_a", "sw_b", "port_b", "capacity_bps",
                 "prop_delay_s", "queue_limit", "dirs")

    def __init__(self, sw_a, port_a, sw_b, port_b,
                 capacity_bps=DEFAULT_CAPACITY_BPS,
                 prop_delay_s=DEFAULT_PROP_DELAY_S,
                 queue_limit=DEFAULT_QUEUE_LIMIT):
        if capacity_bps <= 0:
            raise TopologyError("link capacity must be positive")
        self.sw_a = sw_a
        self.port_a = port_a
        self.sw_b = sw_b
        self.port_b = port_b
        self.capacity_bps = capacity_bps
        self.prop_delay_s = prop_delay_s
        self.queue_limit = queue_limit
        self.dirs = (LinkDirection(), LinkDirection())

    def direction_from(self, sw):
        if sw == self.sw_a:
            return 0
        if sw == self.sw_b:
            return 1
        raise KeyError(sw)

    def peer_of(self, sw):
        return self.sw_b if sw == self.sw_a else self.sw_a

    @property
    def ends(self):
        return (self.sw_a, self.sw_b)

    def transmit(self, direction, size_bytes, now):
        """Serialize one packet onto this direction.

        Returns the arrival time at the far end, or None when the queue
        is full and the packet is dropped.  The byte counter advances
        only for serialized packets.
        """
        d = self.dirs[direction]
        if d.occupancy(now) >= self.queue_limit:
            d.drops += 1
            return None
        start = d.busy_until if d.busy_until > now else now
        end = start + size_bytes * 8.0 / self.capacity_bps
        d.busy_until = end
        d.in_service.append(end)
        d.tx_bytes += size_bytes
        return end + self.prop_delay_s


@dataclass(frozen=True)
class ForwardingRule:
    flow: str
    ports: frozenset
    priority: int = 0

    def __post_init__(self):
        if not self.ports:
            raise RuleError("rule action set must be non-empty")


@dataclass
class Topology:
    switches: list = field(default_factory=list)
    links: list = field(default_factory=list)
    hosts: dict = field(default_factory=dict)        # host -> (switch, port)
    port_map: dict = field(default_factory=dict)     # switch -> {port: ("link", Link) | ("host", host)}
    tables: dict = field(default_factory=dict)       # switch -> {flow: ForwardingRule}
    _next_port: dict = field(default_factory=dict)
    _link_index: dict = field(default_factory=dict)  # frozenset({a,b}) -> Link

    def add_switch(self, sw):
        if sw in self.port_map:
            raise TopologyError(f"duplicate switch {sw}")
        self.switches.append(sw)
        self.port_map[sw] = {}
        self.tables[sw] = {}
        self._next_port[sw] = 1

    def _alloc_port(self, sw):
        p = self._next_port[sw]
        self._next_port[sw] = p + 1
        return p

    def add_link(self, a, b, capacity_bps=DEFAULT_CAPACITY_BPS,
                 prop_delay_s=DEFAULT_PROP_DELAY_S,
                 queue_limit=DEFAULT_QUEUE_LIMIT):
        if a == b:
            raise TopologyError(f"self-loop link on {a}")
        for sw in (a, b):
            if sw not in self.port_map:
                raise TopologyError(f"unknown switch {sw}")
        key = frozenset((a, b))
        if key in self._link_index:
            raise TopologyError(f"duplicate link {a}-{b}")
        pa, pb = self._alloc_port(a), self._alloc_port(b)
        link = Link(a, pa, b, pb, capacity_bps, prop_delay_s, queue_limit)
        self.links.append(link)
        self._link_index[key] = link
        self.port_map[a][pa] = ("link", link)
        self.port_map[b][pb] = ("link", link)
        return link

    def add_host(self, host, sw):
        if host in self.hosts:
            raise TopologyError(f"duplicate host {host}")
        if sw not in self.port_map:
            raise TopologyError(f"unknown switch {sw}")
        p = self._alloc_port(sw)
        self.hosts[host] = (sw, p)
        self.port_map[sw][p] = ("host", host)
        return (sw, p)

    def link_between(self, a, b):
        return self._link_index.get(frozenset((a, b)))

    def neighbors(self, sw):
        out = []
        for entry in self.port_map[sw].values():
            if entry[0] == "link":
                out.append(entry[1].peer_of(sw))
        return out

    def port_towards(self, sw, peer):
        """Output port on `sw` of the link to adjacent switch `peer`."""
        link = self.link_between(sw, peer)
        if link is None:
            raise TopologyError(f"no link {sw}-{peer}")
        return link.port_a if sw == link.sw_a else link.port_b

    def is_connected(self):
        if not self.switches:
            return True
        seen = {self.switches[0]}
        frontier = [self.switches[0]]
        while frontier:
            sw = frontier.pop()
            for nb in self.neighbors(sw):
                if nb not in seen:
                    seen.add(nb)
                    frontier.append(nb)
        return len(seen) == len(self.switches)

    def avg_degree(self):
        return 2.0 * len(self.links) / len(self.switches)

    # -- forwarding tables ------------------------------------------------

    def apply_rules(self, delta):
        """Apply a list of (switch, "install"|"remove", ForwardingRule).

        All-or-nothing: any invalid entry leaves every table untouched.
        Within one delta a remove may precede an install of the same
        flow (rule replacement).
        """
        staged = {}
        for sw, action, rule in delta:
            if sw not in self.tables:
                raise RuleError(f"unknown switch {sw}")
            table = staged.get(sw)
            if table is None:
                table = dict(self.tables[sw])
                staged[sw] = table
            if action == "install":
                if rule.flow in table:
                    raise RuleError(f"duplicate flow {rule.flow} on {sw}")
                table[rule.flow] = rule
            elif action == "remove":
                if rule.flow not in table:
                    raise RuleError(f"remove of absent flow {rule.flow} on {sw}")
                del table[rule.flow]
            else:
                raise RuleError(f"unknown action {action}")
        for sw, table in staged.items():
            self.tables[sw] = table

    def forward(self, sw, flow):
        """Output ports for `flow` at `sw`; empty set means drop."""
        rule = self.tables[sw].get(flow)
        if rule is None:
            return frozenset()
        return rule.ports

    def poll_port_stats(self):
        """Snapshot of directed per-link tx byte counters.

        Keys are ordered switch pairs (from, to).
        """
        snap = {}
        for link in self.links:
            snap[(link.sw_a, link.sw_b)] = link.dirs[0].tx_bytes
            snap[(link.sw_b, link.sw_a)] = link.dirs[1].tx_bytes
        return snap


def load_topology(text):
    """Parse the edge-list topology format.

    Lines: ``switch <id>``, ``link <id1> <id2> <capacity_bps>
    <prop_delay_s>``, ``host <hid> <switch_id>``; ``#`` comments.
    """
    topo = Topology()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if fields[0] == "switch" and len(fields) == 2:
                topo.add_switch(fields[1])
            elif fields[0] == "link" and len(fields) == 5:
                topo.add_link(fields[1], fields[2],
                              capacity_bps=float(fields[3]),
                              prop_delay_s=float(fields[4]))
            elif fields[0] == "host" and len(fields) == 3:
                topo.add_host(fields[1], fields[2])
            else:
                raise TopologyError(f"unknown directive {fields[0]!r}")
        except TopologyError as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
    if not topo.is_connected():
        raise TopologyError("topology graph is not connected")
    return topo


def generate_topology(n_switches, avg_degree, seed,
                      capacity_bps=DEFAULT_CAPACITY_BPS,
                      prop_delay_s=DEFAULT_PROP_DELAY_S,
                      queue_limit=DEFAULT_QUEUE_LIMIT):
    """Seeded random connected graph with the requested average degree.

    A random spanning tree guarantees connectivity; the remaining edges
    are drawn uniformly without duplicates.  Edge count is
    round(n_switches * avg_degree / 2).
    """
    if n_switches < 2:
        raise TopologyError("need at least 2 switches")
    if avg_degree < 2 or avg_degree >= n_switches - 1 + 1e-9:
        raise TopologyError(
            f"infeasible avg_degree {avg_degree} for {n_switches} switches")
    n_edges = round(n_switches * avg_degree / 2.0)
    max_edges = n_switches * (n_switches - 1) // 2
    if n_edges < n_switches - 1 or n_edges > max_edges:
        raise TopologyError("infeasible edge count")

    rng = random.Random(seed)
    names = [f"s{i:02d}" for i in range(n_switches)]
    topo = Topology()
    for sw in names:
        topo.add_switch(sw)

    # random spanning tree: attach each new node to a uniformly chosen
    # already-connected node
    order = names[:]
    rng.shuffle(order)
    chosen = set()
    for i in range(1, n_switches):
        anchor = order[rng.randrange(i)]
        chosen.add(frozenset((order[i], anchor)))
    remaining = n_edges - (n_switches - 1)
    while remaining > 0:
        a, b = rng.sample(names, 2)
        key = frozenset((a, b))
        if key not in chosen:
            chosen.add(key)
            remaining -= 1
    for key in sorted(chosen, key=lambda k: tuple(sorted(k))):
        a, b = sorted(key)
        topo.add_link(a, b, capacity_bps=capacity_bps,
                      prop_delay_s=prop_delay_s, queue_limit=queue_limit)
    return topo
