import math
import random
from dataclasses import dataclass

import pytest

from sdnmcast.routing import (CounterRegression, Unreachable,
                              WeightEstimator, dijkstra_path, min_hop_path,
                              minmax_path, select_best_dp)
from sdnmcast.topology import Topology


def build(edges, weights=None):
    """Topology from an edge list; returns (topo, directed weights)."""
    topo = Topology()
    nodes = sorted({n for e in edges for n in e[:2]})
    for n in nodes:
        topo.add_switch(n)
    wmap = {}
    for e in edges:
        a, b = e[0], e[1]
        topo.add_link(a, b)
        w = e[2] if len(e) > 2 else 0.0
        wmap[(a, b)] = w
        wmap[(b, a)] = w
    return topo, wmap


def all_simple_paths(topo, src, dst):
    out = []

    def walk(path):
        node = path[-1]
        if node == dst:
            out.append(tuple(path))
            return
        for nb in topo.neighbors(node):
            if nb not in path:
                path.append(nb)
                walk(path)
                path.pop()

    walk([src])
    return out


def oracle_best(topo, weights, src, dst, kind):
    """Exhaustive enumeration: the (cost, tie-break, path) minimum."""
    best = None
    for p in all_simple_paths(topo, src, dst):
        ws = [weights.get((a, b), 0.0) for a, b in zip(p, p[1:])]
        if kind == "hops":
            key = (len(p) - 1, p)
        elif kind == "sum":
            key = (sum(ws), p)
        else:
            key = (max(ws) if ws else 0.0, len(p) - 1, p)
        if best is None or key < best:
            best = key
    return best


def random_graph(rng, max_nodes=12):
    n = rng.randint(4, max_nodes)
    nodes = [f"n{i:02d}" for i in range(n)]
    edges = []
    for i in range(1, n):
        j = rng.randrange(i)
        edges.append((nodes[i], nodes[j], rng.randint(0, 50) * 1.0))
    present = {frozenset(e[:2]) for e in edges}
    free = n * (n - 1) // 2 - len(present)
    extra = min(rng.randint(0, 4), free)
    while extra > 0:
        a, b = rng.sample(nodes, 2)
        if frozenset((a, b)) not in present:
            present.add(frozenset((a, b)))
            edges.append((a, b, rng.randint(0, 50) * 1.0))
            extra -= 1
    return build(edges), nodes


def test_min_hop_direct_edge():
    topo, w = build([("A", "B"), ("B", "C"), ("A", "C")])
    assert min_hop_path(topo, "A", "C").nodes == ("A", "C")


def test_min_hop_identity():
    topo, _ = build([("A", "B")])
    p = min_hop_path(topo, "A", "A")
    assert p.nodes == ("A",)
    assert p.hop_count == 0


def test_unreachable_raises():
    topo = Topology()
    topo.add_switch("A")
    topo.add_switch("B")
    topo.add_link("A", "B")
    with pytest.raises(Unreachable):
        min_hop_path(topo, "A", "Z")


def test_min_hop_matches_bfs_oracle_100_graphs():
    rng = random.Random(7)
    for _ in range(100):
        (topo, w), nodes = random_graph(rng)
        src, dst = rng.sample(nodes, 2)
        got = min_hop_path(topo, src, dst)
        want = oracle_best(topo, w, src, dst, "hops")
        assert got.hop_count == want[0]
        assert got.nodes == want[1]


def test_dijkstra_example():
    topo, w = build([("A", "B", 5.0), ("B", "C", 1.0), ("A", "C", 10.0)])
    p = dijkstra_path(topo, w, "A", "C")
    assert p.nodes == ("A", "B", "C")
    assert p.sum_cost(w) == 6.0


def test_dijkstra_zero_weights_lexicographic():
    topo, _ = build([("A", "B"), ("B", "D"), ("A", "C"), ("C", "D"),
                     ("A", "D")])
    w = {}
    p = dijkstra_path(topo, w, "A", "D")
    assert p.sum_cost(w) == 0.0
    assert p.nodes == ("A", "B", "D") or p.nodes == ("A", "D")
    # lexicographically smallest among all zero-cost paths
    want = oracle_best(topo, w, "A", "D", "sum")
    assert p.nodes == want[1]


def test_dijkstra_matches_enumeration_100_graphs():
    rng = random.Random(11)
    for _ in range(100):
        (topo, w), nodes = random_graph(rng)
        src, dst = rng.sample(nodes, 2)
        got = dijkstra_path(topo, w, src, dst)
        want = oracle_best(topo, w, src, dst, "sum")
        assert got.sum_cost(w) == want[0]
        assert got.nodes == want[1]


def test_minmax_example():
    topo, w = build([("A", "B", 5.0), ("B", "C", 1.0), ("A", "C", 10.0)])
    p = minmax_path(topo, w, "A", "C")
    assert p.nodes == ("A", "B", "C")
    assert p.max_cost(w) == 5.0


def test_minmax_single_edge():
    topo, w = build([("A", "B", 3.0)])
    p = minmax_path(topo, w, "A", "B")
    assert p.nodes == ("A", "B")
    assert p.max_cost(w) == 3.0


def test_minmax_matches_enumeration_100_graphs():
    rng = random.Random(13)
    for _ in range(100):
        (topo, w), nodes = random_graph(rng)
        src, dst = rng.sample(nodes, 2)
        got = minmax_path(topo, w, src, dst)
        want = oracle_best(topo, w, src, dst, "max")
        assert got.max_cost(w) == want[0]
        assert got.nodes == want[2]


def test_paths_simple_and_adjacent():
    rng = random.Random(17)
    for _ in range(30):
        (topo, w), nodes = random_graph(rng)
        src, dst = rng.sample(nodes, 2)
        for p in (min_hop_path(topo, src, dst),
                  dijkstra_path(topo, w, src, dst),
                  minmax_path(topo, w, src, dst)):
            assert len(set(p.nodes)) == len(p.nodes)
            for a, b in zip(p.nodes, p.nodes[1:]):
                assert topo.link_between(a, b) is not None


def test_scaling_invariance():
    rng = random.Random(19)
    for _ in range(30):
        (topo, w), nodes = random_graph(rng)
        src, dst = rng.sample(nodes, 2)
        scaled = {k: 3.5 * v for k, v in w.items()}
        assert dijkstra_path(topo, w, src, dst).nodes == \
            dijkstra_path(topo, scaled, src, dst).nodes
        assert minmax_path(topo, w, src, dst).nodes == \
            minmax_path(topo, scaled, src, dst).nodes


# -- weight estimation --------------------------------------------------

def feed(est, key, deltas):
    total = 0
    prev = {key: 0}
    for d in deltas:
        total += d
        snap = {key: total}
        est.update(snap, prev)
        prev = snap
    return est


def test_window_mean():
    est = feed(WeightEstimator(), ("A", "B"),
               [10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
    assert est.weights[("A", "B")] == 55.0


def test_single_sample_mean():
    est = feed(WeightEstimator(), ("A", "B"), [42])
    assert est.weights[("A", "B")] == 42.0


def test_eviction_recomputes_mean():
    est = feed(WeightEstimator(), ("A", "B"),
               [10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 0])
    assert list(est.buffers[("A", "B")]) == [20, 30, 40, 50, 60, 70, 80,
                                             90, 100, 0]
    assert est.weights[("A", "B")] == 54.0


def test_mean_within_one_ulp_of_direct_recomputation():
    rng = random.Random(23)
    est = WeightEstimator()
    key = ("A", "B")
    deltas = []
    total = 0
    prev = {key: 0}
    for _ in range(200):
        d = rng.randint(0, 10**9)
        deltas.append(d)
        total += d
        snap = {key: total}
        est.update(snap, prev)
        prev = snap
        window = deltas[-10:]
        direct = sum(window) / len(window)
        assert est.weights[key] == pytest.approx(
            direct, abs=math.ulp(direct))


def test_unpolled_link_keeps_its_weight():
    est = WeightEstimator()
    est.update({("A", "B"): 100, ("B", "C"): 7}, {})
    before = est.weights[("B", "C")]
    est.update({("A", "B"): 300}, {("A", "B"): 100})
    assert est.weights[("B", "C")] == before


def test_idle_link_weight_decays():
    est = WeightEstimator()
    est.update({("B", "C"): 7}, {})
    est.update({("B", "C"): 7}, {("B", "C"): 7})
    assert est.weights[("B", "C")] == 3.5


def test_counter_regression_detected():
    est = WeightEstimator()
    with pytest.raises(CounterRegression):
        est.update({("A", "B"): 5}, {("A", "B"): 9})


# -- server selection ---------------------------------------------------

@dataclass
class FakeDP:
    dp_id: str
    attachment: tuple


def test_select_min_hop_line():
    topo, w = build([("A", "B"), ("B", "C"), ("C", "D")])
    dps = [FakeDP("d0", ("A", 9)), FakeDP("d1", ("D", 9))]
    dp, path = select_best_dp("B", dps, "min_hop", topo, w)
    assert dp.dp_id == "d0"
    assert path.nodes == ("A", "B")


def test_select_singleton():
    topo, w = build([("A", "B", 99.0)])
    dps = [FakeDP("d7", ("A", 9))]
    dp, _ = select_best_dp("B", dps, "dijkstra", topo, w)
    assert dp.dp_id == "d7"


def test_select_never_beaten_by_candidate_oracle():
    rng = random.Random(29)
    for _ in range(50):
        (topo, w), nodes = random_graph(rng)
        algorithm = rng.choice(["min_hop", "dijkstra", "minmax"])
        sub = rng.choice(nodes)
        dps = [FakeDP(f"d{i}", (rng.choice(nodes), 9)) for i in range(3)]
        dp, path = select_best_dp(sub, dps, algorithm, topo, w)
        kind = {"min_hop": "hops", "dijkstra": "sum",
                "minmax": "max"}[algorithm]
        chosen_cost = oracle_best(topo, w, dp.attachment[0], sub, kind)[0]
        for cand in dps:
            other = oracle_best(topo, w, cand.attachment[0], sub, kind)
            assert chosen_cost <= other[0]


def test_select_order_invariant():
    topo, w = build([("A", "B", 1.0), ("B", "C", 2.0), ("C", "D", 3.0)])
    dps = [FakeDP("d0", ("A", 9)), FakeDP("d1", ("D", 9))]
    a = select_best_dp("B", dps, "dijkstra", topo, w)[0].dp_id
    b = select_best_dp("B", list(reversed(dps)), "dijkstra", topo, w)[0].dp_id
    assert a == b


def test_select_no_reachable_dp():
    topo, w = build([("A", "B")])
    with pytest.raises(Unreachable):
        select_best_dp("B", [], "min_hop", topo, w)
