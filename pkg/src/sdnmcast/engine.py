"""Deterministic discrete-event engine.

Events dequeue in (time, insertion-sequence) order, so two runs with
the same scenario and seed replay identically.  The engine owns the
clock, the event heap, link transmission with FIFO drop-tail queuing,
the cross-traffic generators, the video sources, the subscriber
behavior process, and the periodic control events (statistics polling,
migration checks, DP announcements and failures).

Timeline defaults follow the experiment phases: cross traffic first,
then the DPs start streaming, then the subscribers begin joining.
"""

from __future__ import annotations

import heapq
import math
import random

from .controller import make_controller
from .routing import WeightEstimator, min_hop_path
from .scenario import CROSS_PATTERNS, PATTERN_BURST
from .topology import ForwardingRule, generate_topology, load_topology

ARRIVAL = "arrival"
FRAME_EMIT = "frame_emit"
CROSS_EMIT = "cross_emit"
BEHAVIOR = "behavior_step"
STATS_POLL = "stats_poll"
MIGRATION = "migration_tick"
DP_FAIL = "dp_fail"
DP_ANNOUNCE = "dp_announce"
SIM_END = "sim_end"

CROSS_PRIORITY = 5


def behavior_step(state, draw, p_join=0.8, p_leave=0.2):
    """Subscriber dwell decision: a served client submits a leave with
    probability p_leave, an idle one submits a join with probability
    p_join; otherwise it stays for another dwell period."""
    if state == "served":
        return "leave" if draw < p_leave else "stay"
    return "join" if draw < p_join else "stay"


class Packet:
    __slots__ = ("flow", "kind", "desc", "frame", "seq", "size", "sent_at")

    def __init__(self, flow, kind, desc, frame, seq, size, sent_at):
        self.flow = flow
        self.kind = kind          # "video" | "cross"
        self.desc = desc
        self.frame = frame
        self.seq = seq
        self.size = size
        self.sent_at = sent_at


class CrossGenerator:
    """UDP cross-traffic source: a fixed destination and a pattern that
    is re-drawn among the other three every PATTERN_BURST packets."""

    __slots__ = ("gen_id", "flow", "src_switch", "rng", "pattern",
                 "left", "scale")

    def __init__(self, gen_id, flow, src_switch, seed, scale=1.0):
        self.gen_id = gen_id
        self.flow = flow
        self.src_switch = src_switch
        self.rng = random.Random(seed)
        self.scale = scale
        self.pattern = self.rng.choice(sorted(CROSS_PATTERNS))
        self.left = PATTERN_BURST

    def next_packet(self, now):
        """Packet to send now, plus the next emission time."""
        size, interval, exponential = CROSS_PATTERNS[self.pattern]
        size = int(size * self.scale)
        interval *= self.scale
        pkt = Packet(self.flow, "cross", -1, 0, 0, size, now)
        self.left -= 1
        if self.left == 0:
            others = [p for p in sorted(CROSS_PATTERNS)
                      if p != self.pattern]
            self.pattern = self.rng.choice(others)
            self.left = PATTERN_BURST
        gap = (self.rng.expovariate(1.0 / interval) if exponential
               else interval)
        return pkt, now + gap


class RunResult:
    def __init__(self):
        self.event_log = []
        self.control_log = []
        self.counters = {}          # flow -> dict of created/delivered/...
        self.manifests = {}         # flow -> [(time, frame, n_packets)]
        self.receptions = {}        # sub_id -> [(flow, desc, frame, seq,
                                    #             size, sent_at, recv_at)]
        self.serve_intervals = []   # (sub, desc, dp, start, end)
        self.outages = []           # failure-forced (sub, start, end|None)
        self.subscribers = {}
        self.link_video_bytes = {}  # (from, to) -> bytes
        self.video_copies = None    # (from, to) -> {(flow_base,frame,seq): n}
        self.end_time = 0.0

    def total(self, field_name):
        return sum(c[field_name] for c in self.counters.values())


class Simulation:
    def __init__(self, scenario, seed=None):
        self.sc = scenario.validate()
        self.seed = self.sc.seed if seed is None else seed
        master = random.Random(self.seed)
        self.topo_seed = master.randrange(2**62)
        self.place_seed = master.randrange(2**62)
        self.cross_seed = master.randrange(2**62)
        self.behavior_seed = master.randrange(2**62)
        self.frame_seed = master.randrange(2**62)

        self.heap = []
        self.seq = 0
        self.now = 0.0
        self.result = RunResult()
        if self.sc.track_video_copies:
            self.result.video_copies = {}
        self._build()

    # -- construction -----------------------------------------------------

    def _build(self):
        sc = self.sc
        if sc.topology_file:
            with open(sc.topology_file, "r", encoding="utf-8") as fh:
                self.topo = load_topology(fh.read())
        else:
            self.topo = generate_topology(
                sc.n_switches, sc.avg_degree, self.topo_seed,
                capacity_bps=sc.link_capacity_bps,
                prop_delay_s=sc.link_prop_delay_s,
                queue_limit=sc.queue_limit)
        place = random.Random(self.place_seed)
        switches = sorted(self.topo.port_map)

        # description providers: ids d0.. alternate descriptions
        self.dp_specs = []
        for i in range(sc.n_dps):
            sw = place.choice(switches)
            host = f"h_d{i}"
            self.topo.add_host(host, sw)
            self.dp_specs.append((f"d{i}", i % 2, self.topo.hosts[host]))

        # subscribers
        n_premium = round(sc.n_clients * sc.premium_fraction)
        classes = ["premium"] * n_premium + \
                  ["standard"] * (sc.n_clients - n_premium)
        place.shuffle(classes)
        self.clients = []
        self.host_to_sub = {}
        for i in range(sc.n_clients):
            sub_id = f"c{i}"
            sw = place.choice(switches)
            self.topo.add_host(sub_id, sw)
            self.clients.append((sub_id, classes[i]))
            self.host_to_sub[sub_id] = sub_id
            self.result.receptions[sub_id] = []

        self.ctrl = make_controller(sc.mode, self.topo, sc.algorithm,
                                    sc.hysteresis)
        for sub_id, cls in self.clients:
            self.ctrl.add_subscriber(sub_id, cls,
                                     self.topo.hosts[sub_id])
        self.estimator = WeightEstimator()
        self.prev_stats = self.topo.poll_port_stats()

        # cross-traffic generators with static min-hop routes
        cross = random.Random(self.cross_seed)
        self.generators = []
        delta = []
        for i in range(sc.n_cross_generators):
            src_sw = place.choice(switches)
            dst_sw = place.choice([s for s in switches if s != src_sw])
            dst_host = f"xr{i}"
            self.topo.add_host(dst_host, dst_sw)
            flow = f"x:{i}"
            path = min_hop_path(self.topo, src_sw, dst_sw)
            for a, b in zip(path.nodes, path.nodes[1:]):
                port = self.topo.port_towards(a, b)
                delta.append((a, "install",
                              ForwardingRule(flow, frozenset({port}),
                                             CROSS_PRIORITY)))
            sw, hp = self.topo.hosts[dst_host]
            delta.append((sw, "install",
                          ForwardingRule(flow, frozenset({hp}),
                                         CROSS_PRIORITY)))
            self.generators.append(CrossGenerator(
                i, flow, src_sw, cross.randrange(2**62),
                scale=sc.cross_size_scale))
        if delta:
            self.topo.apply_rules(delta)

        self.behavior_rngs = {
            sub_id: random.Random(self.behavior_seed + 7919 * i)
            for i, (sub_id, _) in enumerate(self.clients)}
        self.frame_rngs = {
            dp_id: random.Random(self.frame_seed + 104729 * i)
            for i, (dp_id, _, _) in enumerate(self.dp_specs)}
        self.dp_frame_counters = {dp_id: 0 for dp_id, _, _ in self.dp_specs}

        # initial event schedule
        for gen in self.generators:
            self._push(self.sc.cross_start_s, CROSS_EMIT, gen)
        for dp_id, desc, att in self.dp_specs:
            self._push(self.sc.dp_start_s, DP_ANNOUNCE, (dp_id, desc, att))
        for sub_id, _ in self.clients:
            self._push(self.sc.subscribers_start_s, BEHAVIOR, sub_id)
        self._push(self.sc.poll_period_s, STATS_POLL, None)
        self._push(self.sc.dp_start_s + self.sc.migration_period_s,
                   MIGRATION, None)
        for at, dp_id in self.sc.failures():
            self._push(at, DP_FAIL, dp_id)
        self._push(self.sc.duration_s, SIM_END, None)

    # -- event plumbing ---------------------------------------------------

    def _push(self, time, kind, payload):
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, kind, payload))

    def _log(self, line, video=True):
        level = self.sc.log_level
        if level == "full" or (level == "video" and video):
            self.result.event_log.append(line)

    def _counter(self, flow):
        c = self.result.counters.get(flow)
        if c is None:
            c = self.result.counters[flow] = {
                "created": 0, "delivered": 0, "dropped_queue": 0,
                "dropped_no_rule": 0, "in_flight": 0}
        return c

    # -- packet path ------------------------------------------------------

    def _inject(self, sw, pkt):
        c = self._counter(pkt.flow)
        c["created"] += 1
        c["in_flight"] += 1
        self._forward(sw, pkt)

    def _forward(self, sw, pkt):
        ports = self.topo.forward(sw, pkt.flow)
        if not ports:
            c = self._counter(pkt.flow)
            c["dropped_no_rule"] += 1
            c["in_flight"] -= 1
            self._log(f"{self.now:.9f} drop_norule {pkt.flow} {sw}"
                      f" f={pkt.frame} q={pkt.seq}",
                      video=pkt.kind == "video")
            return
        first = True
        for port in sorted(ports):
            kind, obj = self.topo.port_map[sw][port]
            if not first:
                # duplication at a branching switch creates a new copy
                c = self._counter(pkt.flow)
                c["created"] += 1
                c["in_flight"] += 1
            first = False
            if kind == "host":
                self._deliver(obj, pkt)
            else:
                self._transmit(sw, obj, pkt)

    def _transmit(self, sw, link, pkt):
        direction = link.direction_from(sw)
        arrival = link.transmit(direction, pkt.size, self.now)
        peer = link.peer_of(sw)
        if arrival is None:
            c = self._counter(pkt.flow)
            c["dropped_queue"] += 1
            c["in_flight"] -= 1
            self._log(f"{self.now:.9f} drop_queue {pkt.flow} {sw}->{peer}"
                      f" f={pkt.frame} q={pkt.seq}",
                      video=pkt.kind == "video")
            return
        if pkt.kind == "video":
            key = (sw, peer)
            lvb = self.result.link_video_bytes
            lvb[key] = lvb.get(key, 0) + pkt.size
            copies = self.result.video_copies
            if copies is not None:
                per_link = copies.setdefault(key, {})
                ident = (pkt.flow.split(":")[1] if pkt.flow.startswith("mc:")
                         else pkt.flow.split(":")[2], pkt.frame, pkt.seq)
                per_link[ident] = per_link.get(ident, 0) + 1
        self._push(arrival, ARRIVAL, (peer, pkt))

    def _deliver(self, host, pkt):
        c = self._counter(pkt.flow)
        c["delivered"] += 1
        c["in_flight"] -= 1
        sub_id = self.host_to_sub.get(host)
        if sub_id is not None and pkt.kind == "video":
            self.result.receptions[sub_id].append(
                (pkt.flow, pkt.desc, pkt.frame, pkt.seq, pkt.size,
                 pkt.sent_at, self.now))
            self._log(f"{self.now:.9f} deliver {pkt.flow} {host}"
                      f" f={pkt.frame} q={pkt.seq}")
        else:
            self._log(f"{self.now:.9f} deliver {pkt.flow} {host}",
                      video=False)

    # -- sources ----------------------------------------------------------

    def _frame_size(self, dp_id):
        mean = self.sc.mean_frame_bytes()
        sigma = self.sc.frame_size_lognormal_sigma
        if sigma <= 0:
            return max(1, round(mean))
        rng = self.frame_rngs[dp_id]
        # mean-preserving lognormal
        mu = math.log(mean) - sigma * sigma / 2.0
        return max(1, round(rng.lognormvariate(mu, sigma)))

    def _emit_frame(self, dp_id, desc):
        """One video frame from a DP: global frame index 2j+d for the
        DP's j-th frame, segmented into MTU-sized packets."""
        j = self.dp_frame_counters[dp_id]
        self.dp_frame_counters[dp_id] = j + 1
        frame_idx = 2 * j + desc
        size = self._frame_size(dp_id)
        mtu = self.sc.video_mtu
        n_packets = max(1, math.ceil(size / mtu))
        targets = self.ctrl.emission_targets(dp_id)
        if not targets:
            return
        for flow, root_sw in targets:
            manifest = self.result.manifests.setdefault(flow, [])
            manifest.append((self.now, frame_idx, n_packets))
            remaining = size
            for seq in range(n_packets):
                psize = min(mtu, remaining)
                remaining -= psize
                pkt = Packet(flow, "video", desc, frame_idx, seq, psize,
                             self.now)
                self._inject(root_sw, pkt)
        self._log(f"{self.now:.9f} emit {dp_id} f={frame_idx}"
                  f" n={n_packets} sz={size}")

    # -- event handlers ---------------------------------------------------

    def _on_behavior(self, sub_id):
        sub = self.ctrl.subscribers[sub_id]
        draw = self.behavior_rngs[sub_id].random()
        action = behavior_step(sub.state, draw, self.sc.p_join,
                               self.sc.p_leave)
        self._log(f"{self.now:.9f} behavior {sub_id} {action}",
                  video=False)
        if action == "join":
            self.ctrl.handle_join(sub_id)
        elif action == "leave":
            self.ctrl.handle_leave(sub_id, reason="message")
        self._push(self.now + self.sc.dwell_s, BEHAVIOR, sub_id)

    def _on_stats_poll(self):
        snap = self.topo.poll_port_stats()
        self.ctrl.set_weights(dict(
            self.estimator.update(snap, self.prev_stats)))
        self.prev_stats = snap
        self._push(self.now + self.sc.poll_period_s, STATS_POLL, None)

    # -- main loop --------------------------------------------------------

    def run(self):
        sc = self.sc
        while self.heap:
            time, _, kind, payload = heapq.heappop(self.heap)
            self.now = time
            self.ctrl.now = time
            if kind == SIM_END:
                break
            if kind == ARRIVAL:
                sw, pkt = payload
                self._forward(sw, pkt)
            elif kind == CROSS_EMIT:
                gen = payload
                pkt, nxt = gen.next_packet(time)
                self._inject(gen.src_switch, pkt)
                if nxt < sc.duration_s:
                    self._push(nxt, CROSS_EMIT, gen)
            elif kind == FRAME_EMIT:
                dp_id, desc = payload
                dp = self.ctrl.dps.get(dp_id)
                if dp is not None and dp.alive:
                    self._emit_frame(dp_id, desc)
                    self._push(time + sc.frame_interval_s(), FRAME_EMIT,
                               payload)
            elif kind == BEHAVIOR:
                self._on_behavior(payload)
            elif kind == STATS_POLL:
                self._on_stats_poll()
            elif kind == MIGRATION:
                self.ctrl.migration_check()
                self._push(time + sc.migration_period_s, MIGRATION, None)
            elif kind == DP_ANNOUNCE:
                dp_id, desc, att = payload
                self.ctrl.register_dp(dp_id, desc, att)
                self._push(time, FRAME_EMIT, (dp_id, desc))
            elif kind == DP_FAIL:
                self.ctrl.handle_dp_failure(payload)
            else:
                raise RuntimeError(f"unhandled event kind {kind}")
        self.now = sc.duration_s
        self.ctrl.now = self.now
        self.ctrl.close_all_serves()
        res = self.result
        res.end_time = self.now
        res.control_log = list(self.ctrl.control_log)
        res.serve_intervals = list(self.ctrl.serve_intervals)
        res.outages = list(self.ctrl.outages)
        res.subscribers = dict(self.ctrl.subscribers)
        return res


def run(scenario, seed=None):
    """Run one simulation; same (scenario, seed) gives identical logs."""
    return Simulation(scenario, seed).run()
