"""Path computation over dynamically estimated link weights.

Three algorithms: minimum hop, shortest (sum-cost) path, and min-max
(bottleneck) path.  Link weights come from a sliding-window estimator
fed by periodic port-statistic deltas; links with no samples weigh 0.

Tie-breaking is fixed for reproducibility: among equal-cost paths the
lexicographically smallest switch-id sequence wins (min-max first
prefers fewer hops), and server selection ties go to the smallest
server id.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

WINDOW = 10  # samples averaged per link weight


class Unreachable(Exception):
    """No path exists between the requested switches."""


class CounterRegression(Exception):
    """A byte counter decreased between polls; the run is corrupted."""


@dataclass(frozen=True)
class Path:
    nodes: tuple

    @property
    def hop_count(self):
        return len(self.nodes) - 1

    def sum_cost(self, weights):
        return sum(weights.get((a, b), 0.0)
                   for a, b in zip(self.nodes, self.nodes[1:]))

    def max_cost(self, weights):
        if len(self.nodes) < 2:
            return 0.0
        return max(weights.get((a, b), 0.0)
                   for a, b in zip(self.nodes, self.nodes[1:]))


def _search(topology, src, dst, label_of, relax, edge_ok=None):
    """Uniform-cost search popping (label, path) in total order.

    `label_of` gives the edge-extended label; comparison of
    (label, path) tuples realizes the documented tie-breaks.
    `edge_ok(a, b)` may veto edges.
    """
    if src not in topology.port_map or dst not in topology.port_map:
        raise Unreachable(f"unknown switch {src} or {dst}")
    heap = [(relax, (src,))]
    done = set()
    while heap:
        label, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == dst:
            return Path(path)
        for nb in sorted(topology.neighbors(node)):
            if nb in done or nb in path:
                continue
            if edge_ok is not None and not edge_ok(node, nb):
                continue
            heapq.heappush(heap, (label_of(label, node, nb), path + (nb,)))
    raise Unreachable(f"{dst} unreachable from {src}")


def min_hop_path(topology, src, dst):
    """Globally minimum hop count; lexicographic tie-break."""
    return _search(topology, src, dst,
                   label_of=lambda lab, a, b: lab + 1, relax=0)


def dijkstra_path(topology, weights, src, dst):
    """Minimum sum of directed link weights; lexicographic tie-break."""
    return _search(
        topology, src, dst,
        label_of=lambda lab, a, b: lab + weights.get((a, b), 0.0),
        relax=0.0)


def minmax_path(topology, weights, src, dst):
    """Bottleneck-optimal path: minimize the maximum link weight, then
    hop count, then lexicographic order.

    Two phases, because the hop tie-break is not sub-path optimal: a
    cheaper-bottleneck but longer route into an intermediate switch
    would otherwise displace the route that yields the shortest final
    path.  Phase one finds the optimal bottleneck; phase two runs the
    min-hop search over only the links at or below that bottleneck,
    where every remaining path attains it.
    """
    def label_of(lab, a, b):
        w = weights.get((a, b), 0.0)
        return lab if lab > w else w
    bottleneck = _search(topology, src, dst, label_of=label_of,
                         relax=0.0).max_cost(weights)
    return _search(topology, src, dst,
                   label_of=lambda lab, a, b: lab + 1, relax=0,
                   edge_ok=lambda a, b: weights.get((a, b), 0.0)
                   <= bottleneck)


ALGORITHMS = {
    "min_hop": lambda topo, weights, src, dst: min_hop_path(topo, src, dst),
    "dijkstra": dijkstra_path,
    "minmax": minmax_path,
}


def path_cost(path, algorithm, weights):
    if algorithm == "min_hop":
        return path.hop_count
    if algorithm == "dijkstra":
        return path.sum_cost(weights)
    if algorithm == "minmax":
        return path.max_cost(weights)
    raise ValueError(f"unknown algorithm {algorithm}")


class WeightEstimator:
    """Per-directed-link ring buffer of the last WINDOW byte-count
    deltas; the link weight is their arithmetic mean."""

    def __init__(self, window=WINDOW):
        self.window = window
        self.buffers = {}   # (from, to) -> deque of deltas
        self.weights = {}   # (from, to) -> mean

    def update(self, snapshot, prev_snapshot):
        """Append counter deltas between two polls and refresh weights."""
        for key, count in snapshot.items():
            prev = prev_snapshot.get(key, 0)
            if count < prev:
                raise CounterRegression(f"{key}: {count} < {prev}")
            buf = self.buffers.get(key)
            if buf is None:
                buf = self.buffers[key] = deque(maxlen=self.window)
            buf.append(count - prev)
            self.weights[key] = sum(buf) / len(buf)
        return self.weights


def select_best_dp(sub_switch, candidates, algorithm, topology, weights):
    """Choose the reachable server whose path to the subscriber is
    cheapest under the configured algorithm; ties go to the smallest
    server id.  Paths run server -> subscriber (traffic direction).

    `candidates` is an iterable of objects with `.dp_id` and
    `.attachment` (switch, port).  Returns (dp, Path).
    """
    best = None
    for dp in sorted(candidates, key=lambda d: d.dp_id):
        try:
            path = ALGORITHMS[algorithm](topology, weights,
                                         dp.attachment[0], sub_switch)
        except Unreachable:
            continue
        cost = path_cost(path, algorithm, weights)
        if best is None or cost < best[0]:
            best = (cost, dp, path)
    if best is None:
        raise Unreachable(f"no reachable server for {sub_switch}")
    return best[1], best[2]
