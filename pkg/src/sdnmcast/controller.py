"""Streaming-video multicast control application and ALM baselines.

The multicast controller keeps one rooted tree per description
provider (DP), maps subscribers to the best DP under the configured
routing algorithm, grafts and prunes branches on join/leave, reacts to
DP failures by re-homing affected subscribers, and periodically
migrates subscribers whose serving DP is no longer the best.

The ALM controllers install per-client unicast paths instead: the SDN
variant routes each client over current link weights, the
learning-switch variant uses static min-hop paths that ignore load.

Every control action is appended to a structured line-delimited
control log for post-hoc analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .routing import (Path, Unreachable, min_hop_path, path_cost,
                      select_best_dp)
from .topology import ForwardingRule

STANDARD = "standard"
PREMIUM = "premium"

MCAST_PRIORITY = 10
UNICAST_PRIORITY = 20


class ControlError(Exception):
    pass


@dataclass
class DescriptionProvider:
    dp_id: str
    description_id: int
    attachment: tuple          # (switch, port)
    alive: bool = True


@dataclass
class SubscriberRecord:
    sub_id: str
    cls: str                   # standard | premium
    attachment: tuple
    serving: dict = field(default_factory=dict)   # description_id -> dp_id
    state: str = "idle"
    subscribe_time: float = -1.0


class MulticastTree:
    """Per-DP delivery tree: switch -> set of output ports, plus
    member bookkeeping.  Edges are derived from the link ports in
    out_ports; member host ports make switches leaves."""

    def __init__(self, dp_id, root):
        self.dp_id = dp_id
        self.root = root
        self.out_ports = {}        # switch -> set(port)
        self.members = {}          # sub_id -> (switch, port)

    @property
    def flow(self):
        return f"mc:{self.dp_id}"

    def switches(self, topology):
        """All switches in the tree (root plus every edge endpoint)."""
        seen = {self.root}
        for sw, ports in self.out_ports.items():
            seen.add(sw)
            for p in ports:
                kind, obj = topology.port_map[sw][p]
                if kind == "link":
                    seen.add(obj.peer_of(sw))
        return seen

    def edges(self, topology):
        out = []
        for sw, ports in self.out_ports.items():
            for p in sorted(ports):
                kind, obj = topology.port_map[sw][p]
                if kind == "link":
                    out.append((sw, obj.peer_of(sw)))
        return out

    def parent_map(self, topology):
        return {child: parent for parent, child in self.edges(topology)}

    def rules(self):
        """The forwarding rules this tree implies, one per switch."""
        return {sw: ForwardingRule(self.flow, frozenset(ports),
                                   MCAST_PRIORITY)
                for sw, ports in self.out_ports.items() if ports}


def _rule_delta(flow, before, after, priority):
    """Installs/removals turning per-switch port sets `before` into
    `after` for one flow."""
    delta = []
    for sw in sorted(set(before) | set(after)):
        old = before.get(sw) or frozenset()
        new = after.get(sw) or frozenset()
        if old == new:
            continue
        if old:
            delta.append((sw, "remove", ForwardingRule(flow, frozenset(old),
                                                       priority)))
        if new:
            delta.append((sw, "install", ForwardingRule(flow, frozenset(new),
                                                        priority)))
    return delta


class ControllerBase:
    """Registry, subscriber records, and logging shared by the
    multicast controller and the ALM baselines."""

    def __init__(self, topology, algorithm="minmax", hysteresis=1.1):
        self.topology = topology
        self.algorithm = algorithm
        self.hysteresis = hysteresis
        self.dps = {}
        self.subscribers = {}
        self.weights = {}
        self.control_log = []
        self.now = 0.0
        # closed serving intervals (sub, desc, dp, start, end) plus the
        # currently open ones, for post-hoc QoE accounting
        self.serve_intervals = []
        self.open_serves = {}
        # service outages forced by DP failures (sub, start, end|None):
        # each one is a playback pause until service resumes
        self.outages = []
        self.open_outages = {}

    def _open_serve(self, sub_id, desc, dp_id):
        self.open_serves[(sub_id, desc)] = (dp_id, self.now)

    def _close_serve(self, sub_id, desc):
        entry = self.open_serves.pop((sub_id, desc), None)
        if entry is not None:
            dp_id, start = entry
            self.serve_intervals.append((sub_id, desc, dp_id, start,
                                         self.now))

    def close_all_serves(self):
        for sub_id, desc in sorted(self.open_serves):
            self._close_serve(sub_id, desc)
        for sub_id, start in sorted(self.open_outages.items()):
            self.outages.append((sub_id, start, None))
        self.open_outages.clear()

    def log(self, kind, **fields):
        parts = [f"{self.now:.6f}", kind]
        parts += [f"{k}={v}" for k, v in fields.items()]
        self.control_log.append(" ".join(parts))

    def add_subscriber(self, sub_id, cls, attachment):
        self.subscribers[sub_id] = SubscriberRecord(sub_id, cls, attachment)

    def set_weights(self, weights):
        self.weights = weights

    def alive_dps(self, description_id=None):
        return [dp for dp in self.dps.values()
                if dp.alive and (description_id is None
                                 or dp.description_id == description_id)]

    def _authorized(self, sub_id):
        if sub_id not in self.subscribers:
            raise ControlError(f"unauthorized subscriber {sub_id}")
        return self.subscribers[sub_id]

    def _select(self, sub, description_id=None):
        """Best (dp, path) for one description, or over both
        descriptions for a standard user (equidistant descriptions go
        to the smaller description_id)."""
        if description_id is not None:
            cands = self.alive_dps(description_id)
            if not cands:
                raise Unreachable(f"no DP for description {description_id}")
            return select_best_dp(sub.attachment[0], cands, self.algorithm,
                                  self.topology, self.weights)
        best = None
        for desc in (0, 1):
            cands = self.alive_dps(desc)
            if not cands:
                continue
            try:
                dp, path = select_best_dp(sub.attachment[0], cands,
                                          self.algorithm, self.topology,
                                          self.weights)
            except Unreachable:
                continue
            cost = path_cost(path, self.algorithm, self.weights)
            if best is None or cost < best[0]:
                best = (cost, dp, path)
        if best is None:
            raise Unreachable("no reachable DP")
        return best[1], best[2]

    def _wanted_descriptions(self, sub):
        if sub.cls == PREMIUM:
            return (0, 1)
        if sub.serving:
            return tuple(sub.serving)
        return (None,)

    # hooks implemented by concrete controllers
    def _attach(self, sub, dp, path):
        raise NotImplementedError

    def _detach(self, sub, description_id):
        raise NotImplementedError

    def _installed_path(self, sub, description_id):
        """The path the subscriber's traffic actually takes right now
        (which may have gone stale since it was installed)."""
        raise NotImplementedError

    def register_dp(self, dp_id, description_id, attachment):
        if dp_id in self.dps:
            raise ControlError(f"duplicate DP id {dp_id}")
        dp = DescriptionProvider(dp_id, description_id, attachment)
        self.dps[dp_id] = dp
        self._on_register(dp)
        self.log("dp_announce", dp=dp_id, desc=description_id,
                 switch=attachment[0])
        return dp

    def _on_register(self, dp):
        pass

    def handle_join(self, sub_id):
        """Serve a subscriber: pick the best DP per needed description,
        graft or route, push rules.  No-op when already fully served."""
        sub = self._authorized(sub_id)
        wanted = [d for d in self._wanted_descriptions(sub)
                  if d is None or d not in sub.serving]
        if sub.state == "served" and not wanted:
            return 0
        installed = 0
        for desc in wanted:
            if desc is not None and desc in sub.serving:
                continue
            try:
                dp, path = self._select(sub, desc)
            except Unreachable:
                continue
            if dp.description_id in sub.serving:
                continue
            n = self._attach(sub, dp, path)
            installed += n
            sub.serving[dp.description_id] = dp.dp_id
            self._open_serve(sub_id, dp.description_id, dp.dp_id)
            self.log("join", sub=sub_id, dp=dp.dp_id,
                     desc=dp.description_id, delta=n)
        if sub.serving:
            if sub.state != "served":
                sub.state = "served"
                sub.subscribe_time = self.now
            start = self.open_outages.pop(sub_id, None)
            if start is not None:
                self.outages.append((sub_id, start, self.now))
        else:
            self.log("join_denied", sub=sub_id)
        return installed

    def handle_leave(self, sub_id, reason="message"):
        """Remove a subscriber from every serving tree/flow; prune
        branches it alone used.  Idle subscribers are a no-op."""
        sub = self._authorized(sub_id)
        if sub.state != "served":
            return 0
        removed = 0
        for desc in sorted(sub.serving):
            n = self._detach(sub, desc)
            removed += n
            self._close_serve(sub_id, desc)
            self.log("leave", sub=sub_id, dp=sub.serving[desc], desc=desc,
                     reason=reason, delta=n)
        sub.serving.clear()
        sub.state = "idle"
        return removed

    def handle_dp_failure(self, dp_id):
        """Reactive recovery: tear down the dead DP's state and re-join
        every affected subscriber against the remaining DPs."""
        dp = self.dps.get(dp_id)
        if dp is None:
            raise ControlError(f"unknown DP {dp_id}")
        if not dp.alive:
            raise ControlError(f"DP {dp_id} already dead")
        dp.alive = False
        affected = self._teardown_dp(dp)
        self.log("dp_fail", dp=dp_id, affected=len(affected))
        for sub_id in affected:
            sub = self.subscribers[sub_id]
            if not sub.serving:
                sub.state = "idle"
            self.handle_join(sub_id)
            if not self.subscribers[sub_id].serving:
                self.open_outages.setdefault(sub_id, self.now)
                self.log("idle_after_failure", sub=sub_id)
        return affected

    def _teardown_dp(self, dp):
        raise NotImplementedError

    def migration_check(self):
        """Leave-then-rejoin any subscriber whose serving path cost
        exceeds the current best by more than the hysteresis factor."""
        migrations = []
        for sub_id in sorted(self.subscribers):
            sub = self.subscribers[sub_id]
            if sub.state != "served":
                continue
            for desc, dp_id in sorted(sub.serving.items()):
                sel_desc = desc if sub.cls == PREMIUM else None
                try:
                    cur_path = self._installed_path(sub, desc)
                    best_dp, best_path = self._select(sub, sel_desc)
                except Unreachable:
                    continue
                cur = path_cost(cur_path, self.algorithm, self.weights)
                best = path_cost(best_path, self.algorithm, self.weights)
                if cur > self.hysteresis * best:
                    self._detach(sub, desc)
                    self._close_serve(sub_id, desc)
                    del sub.serving[desc]
                    if not sub.serving:
                        sub.state = "idle"
                    self.handle_join(sub_id)
                    migrations.append((sub_id, dp_id, best_dp.dp_id))
                    self.log("migrate", sub=sub_id, old=dp_id,
                             new=best_dp.dp_id, desc=desc)
                    break  # serving changed; re-evaluate next period
        return migrations


class MulticastController(ControllerBase):
    """IP-multicast control application: one shared tree per DP."""

    def __init__(self, topology, algorithm="minmax", hysteresis=1.1):
        super().__init__(topology, algorithm, hysteresis)
        self.trees = {}

    def _on_register(self, dp):
        self.trees[dp.dp_id] = MulticastTree(dp.dp_id, dp.attachment[0])

    def _attach(self, sub, dp, path):
        """Graft: walk the DP->subscriber path from the subscriber end
        toward the root, stop at the first on-tree switch, then add the
        new branch and the subscriber's duplication port."""
        tree = self.trees[dp.dp_id]
        before = {sw: frozenset(ports)
                  for sw, ports in tree.out_ports.items()}
        on_tree = tree.switches(self.topology)
        nodes = path.nodes
        graft_idx = len(nodes) - 1
        while graft_idx > 0 and nodes[graft_idx] not in on_tree:
            graft_idx -= 1
        for a, b in zip(nodes[graft_idx:], nodes[graft_idx + 1:]):
            port = self.topology.port_towards(a, b)
            tree.out_ports.setdefault(a, set()).add(port)
        sub_switch, host_port = sub.attachment
        tree.out_ports.setdefault(sub_switch, set()).add(host_port)
        tree.members[sub.sub_id] = sub.attachment
        delta = _rule_delta(tree.flow, before, tree.out_ports,
                            MCAST_PRIORITY)
        self.topology.apply_rules(delta)
        return len({sw for sw, _, _ in delta})

    def _detach(self, sub, description_id):
        dp_id = sub.serving[description_id]
        tree = self.trees[dp_id]
        before = {sw: frozenset(ports)
                  for sw, ports in tree.out_ports.items()}
        parent = tree.parent_map(self.topology)
        del tree.members[sub.sub_id]
        sw, host_port = sub.attachment
        ports = tree.out_ports.get(sw)
        if ports is None or host_port not in ports:
            return 0
        # other members on the same switch port keep the port alive
        if any(att == sub.attachment for att in tree.members.values()):
            return 0
        ports.discard(host_port)
        # prune empty branches back to the nearest replication point
        while sw != tree.root and not tree.out_ports.get(sw):
            tree.out_ports.pop(sw, None)
            up = parent.get(sw)
            if up is None:
                break
            tree.out_ports[up].discard(self.topology.port_towards(up, sw))
            sw = up
        if sw == tree.root and not tree.out_ports.get(sw):
            tree.out_ports.pop(sw, None)
        delta = _rule_delta(tree.flow, before, tree.out_ports,
                            MCAST_PRIORITY)
        self.topology.apply_rules(delta)
        return len({s for s, _, _ in delta})

    def _teardown_dp(self, dp):
        tree = self.trees.pop(dp.dp_id)
        before = {sw: frozenset(ports)
                  for sw, ports in tree.out_ports.items()}
        self.topology.apply_rules(
            _rule_delta(tree.flow, before, {}, MCAST_PRIORITY))
        affected = sorted(tree.members)
        for sub_id in affected:
            sub = self.subscribers[sub_id]
            for desc, dp_id in list(sub.serving.items()):
                if dp_id == dp.dp_id:
                    self._close_serve(sub_id, desc)
                    del sub.serving[desc]
        return affected

    def _installed_path(self, sub, description_id):
        tree = self.trees[sub.serving[description_id]]
        parent = tree.parent_map(self.topology)
        nodes = [sub.attachment[0]]
        while nodes[-1] != tree.root:
            up = parent.get(nodes[-1])
            if up is None or up in nodes:
                raise Unreachable(f"{sub.sub_id} detached from "
                                  f"{tree.dp_id}")
            nodes.append(up)
        return Path(tuple(reversed(nodes)))

    # -- introspection used by the engine and the invariant suite ------

    def emission_targets(self, dp_id):
        """Multicast: one packet enters the network at the tree root."""
        dp = self.dps[dp_id]
        if not dp.alive or not self.trees[dp_id].members:
            return []
        return [(f"mc:{dp_id}", dp.attachment[0])]

    def derived_rules(self):
        merged = {}
        for tree in self.trees.values():
            for sw, rule in tree.rules().items():
                merged.setdefault(sw, {})[rule.flow] = rule
        return merged

    def check_invariants(self):
        """Raise AssertionError when any tree invariant or the
        rule/tree correspondence is violated."""
        topo = self.topology
        for tree in self.trees.values():
            edges = tree.edges(topo)
            children = [b for _, b in edges]
            assert len(children) == len(set(children)), \
                f"tree {tree.dp_id} has converging edges"
            parent = tree.parent_map(topo)
            nodes = tree.switches(topo)
            for node in nodes:
                cur, hops = node, 0
                while cur != tree.root:
                    cur = parent.get(cur)
                    hops += 1
                    assert cur is not None, \
                        f"tree {tree.dp_id}: {node} detached from root"
                    assert hops <= len(nodes), \
                        f"tree {tree.dp_id}: cycle at {node}"
            for sub_id, (sw, port) in tree.members.items():
                assert port in tree.out_ports.get(sw, ()), \
                    f"member {sub_id} port missing in tree {tree.dp_id}"
            # no orphan branches: every leaf must serve a member
            member_switches = {sw for sw, _ in tree.members.values()}
            parents = set(parent.values())
            for sw in tree.out_ports:
                if sw not in parents or not any(
                        topo.port_map[sw][p][0] == "link"
                        for p in tree.out_ports[sw]):
                    has_host = any(topo.port_map[sw][p][0] == "host"
                                   for p in tree.out_ports[sw])
                    assert has_host and sw in member_switches, \
                        f"orphan leaf {sw} in tree {tree.dp_id}"
        derived = self.derived_rules()
        for sw in topo.tables:
            installed = {f: r for f, r in topo.tables[sw].items()
                         if f.startswith("mc:")}
            expected = derived.get(sw, {})
            assert installed == expected, \
                f"rule mismatch on {sw}: {installed} != {expected}"


class AlmController(ControllerBase):
    """ALM baseline: per-client unicast flows.

    mode "sdn" routes each client with the configured algorithm over
    current weights; mode "learning_switch" uses static min-hop paths
    on the unweighted graph, blind to congestion.
    """

    def __init__(self, topology, algorithm="minmax", hysteresis=1.1,
                 mode="sdn"):
        super().__init__(topology, algorithm, hysteresis)
        if mode not in ("sdn", "learning_switch"):
            raise ControlError(f"unknown ALM mode {mode}")
        self.mode = mode
        self.flows = {}   # flow key -> (sub_id, dp_id, path)

    def _select(self, sub, description_id=None):
        if self.mode == "learning_switch":
            # congestion-blind: evaluate candidates on the unweighted graph
            saved, self.weights = self.weights, {}
            saved_alg, self.algorithm = self.algorithm, "min_hop"
            try:
                return super()._select(sub, description_id)
            finally:
                self.weights = saved
                self.algorithm = saved_alg
        return super()._select(sub, description_id)

    def _flow_key(self, sub_id, dp_id):
        return f"uc:{sub_id}:{dp_id}"

    def _installed_path(self, sub, description_id):
        flow = self._flow_key(sub.sub_id, sub.serving[description_id])
        return self.flows[flow][2]

    def _attach(self, sub, dp, path):
        if self.mode == "learning_switch":
            path = min_hop_path(self.topology, dp.attachment[0],
                                sub.attachment[0])
        flow = self._flow_key(sub.sub_id, dp.dp_id)
        delta = []
        for a, b in zip(path.nodes, path.nodes[1:]):
            port = self.topology.port_towards(a, b)
            delta.append((a, "install",
                          ForwardingRule(flow, frozenset({port}),
                                         UNICAST_PRIORITY)))
        sw, host_port = sub.attachment
        delta.append((sw, "install",
                      ForwardingRule(flow, frozenset({host_port}),
                                     UNICAST_PRIORITY)))
        self.topology.apply_rules(delta)
        self.flows[flow] = (sub.sub_id, dp.dp_id, path)
        return len({s for s, _, _ in delta})

    def _detach(self, sub, description_id):
        dp_id = sub.serving[description_id]
        flow = self._flow_key(sub.sub_id, dp_id)
        _, _, path = self.flows.pop(flow)
        delta = []
        seen = set()
        for a, b in zip(path.nodes, path.nodes[1:]):
            port = self.topology.port_towards(a, b)
            delta.append((a, "remove",
                          ForwardingRule(flow, frozenset({port}),
                                         UNICAST_PRIORITY)))
            seen.add(a)
        sw, host_port = sub.attachment
        delta.append((sw, "remove",
                      ForwardingRule(flow, frozenset({host_port}),
                                     UNICAST_PRIORITY)))
        self.topology.apply_rules(delta)
        seen.add(sw)
        return len(seen)

    def _teardown_dp(self, dp):
        affected = []
        for flow, (sub_id, dp_id, _) in list(self.flows.items()):
            if dp_id != dp.dp_id:
                continue
            sub = self.subscribers[sub_id]
            desc = next(d for d, i in sub.serving.items() if i == dp_id)
            self._detach(sub, desc)
            self._close_serve(sub_id, desc)
            del sub.serving[desc]
            affected.append(sub_id)
        return sorted(set(affected))

    def emission_targets(self, dp_id):
        """ALM: one packet copy per subscribed client flow."""
        dp = self.dps[dp_id]
        if not dp.alive:
            return []
        return [(flow, dp.attachment[0])
                for flow, (_, flow_dp, _) in sorted(self.flows.items())
                if flow_dp == dp_id]


def make_controller(mode, topology, algorithm, hysteresis=1.1):
    if mode == "multicast":
        return MulticastController(topology, algorithm, hysteresis)
    if mode == "alm_sdn":
        return AlmController(topology, algorithm, hysteresis, mode="sdn")
    if mode == "alm_learning":
        return AlmController(topology, algorithm, hysteresis,
                             mode="learning_switch")
    raise ControlError(f"unknown delivery mode {mode}")
