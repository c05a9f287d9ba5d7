"""Decentralized set partitioning over an acquaintances graph.

Agents are nodes; directed edges are acquaintances.  Marked edges mean "same
partition", so partitions are the connected components of the marked edges.
Each partition's leader periodically integrates acquainted outsiders or
excludes members when that makes the partition means more homogeneous, and
marks its partition terminated once nothing improves.

Only the outline of the original procedure is public; the concrete choices
here (lowest-id leaders, greedy integration over a sampled candidate set,
exclusion to singletons, "no improving action" as termination) are a
reconstruction.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from sotest import kernels
from sotest.domain import Partitioning, SystemStructure
from sotest.generation import SpadaParams

EPS = 1e-12


@dataclass
class AcquaintancesGraph:
    nodes: set = field(default_factory=set)
    marked: set = field(default_factory=set)  # directed (u, v) pairs
    acquaintances: dict = field(default_factory=dict)  # node -> set of nodes
    leaders: dict = field(default_factory=dict)  # partition id -> agent id
    terminated: set = field(default_factory=set)
    # bookkeeping kept in sync with ``marked``
    members: dict = field(default_factory=dict)  # partition id -> set of agents
    part_of: dict = field(default_factory=dict)  # agent -> partition id
    next_pid: int = 0

    def edges(self) -> list[tuple[int, int, bool]]:
        out = {(u, v): True for u, v in self.marked}
        for u, targets in self.acquaintances.items():
            for v in targets:
                out.setdefault((u, v), False)
        return sorted((u, v, m) for (u, v), m in out.items())

    def neighbours(self, agent) -> set:
        return {v for u, v in self.marked if u == agent} | {u for u, v in self.marked if v == agent}

    def new_partition(self, members: set, leader=None) -> int:
        pid = self.next_pid
        self.next_pid += 1
        self.members[pid] = set(members)
        for a in members:
            self.part_of[a] = pid
        self.leaders[pid] = min(members) if leader is None else leader
        return pid

    def detach(self, agent):
        """Remove ``agent``'s marked edges while keeping the rest of its partition connected."""
        touching = {e for e in self.marked if agent in e}
        former = sorted({u if v == agent else v for u, v in touching} - {agent})
        self.marked -= touching
        for u, v in zip(former, former[1:]):
            self.marked.add((u, v))
        pid = self.part_of.pop(agent)
        self.members[pid].discard(agent)
        if not self.members[pid]:
            del self.members[pid]
            del self.leaders[pid]
            self.terminated.discard(pid)
        elif self.leaders[pid] == agent:
            self.leaders[pid] = min(self.members[pid])
        return pid

    def attach(self, agent, pid):
        self.marked.add((self.leaders[pid], agent))
        self.members[pid].add(agent)
        self.part_of[agent] = pid


def build_graph(structure: SystemStructure, params: SpadaParams, rng: random.Random,
                omit: set | None = None) -> AcquaintancesGraph:
    """Graph whose marked components reproduce ``structure``; AVPPs in ``omit`` are left out."""
    g = AcquaintancesGraph()
    for avpp_id in sorted(structure.avpps):
        if omit and avpp_id in omit:
            continue
        members = sorted(structure.avpps[avpp_id].members)
        g.nodes.update(members)
        for u, v in zip(members, members[1:]):
            g.marked.add((u, v))
        g.new_partition(set(members))
    nodes = sorted(g.nodes)
    k = min(params.acquaintances, len(nodes) - 1)
    for a in nodes:
        if k <= 0:
            g.acquaintances[a] = set()
            continue
        picks = set()
        while len(picks) < k:
            b = nodes[rng.randrange(len(nodes))]
            if b != a:
                picks.add(b)
        g.acquaintances[a] = picks
    return g


def partitions_of(g: AcquaintancesGraph) -> Partitioning:
    """Connected components of the marked edges (undirected), isolated nodes as singletons."""
    parent = {a: a for a in g.nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in g.marked:
        if u in parent and v in parent:
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[max(ru, rv)] = min(ru, rv)
    comps: dict = {}
    for a in g.nodes:
        comps.setdefault(find(a), set()).add(a)
    return Partitioning.of(comps.values())


class _Stats:
    """Running sums of partition means so a move's effect on the fitness is O(1)."""

    def __init__(self, g: AcquaintancesGraph, acc):
        self.acc = acc
        self.sum = {pid: sum(acc[a] for a in m) for pid, m in g.members.items()}
        self.size = {pid: len(m) for pid, m in g.members.items()}
        self.k = len(self.size)
        self.s1 = sum(self.sum[p] / self.size[p] for p in self.size)
        self.s2 = sum((self.sum[p] / self.size[p]) ** 2 for p in self.size)

    @staticmethod
    def _fit(k, s1, s2):
        if k < 2:
            return 1.0
        var = max(s2 / k - (s1 / k) ** 2, 0.0)
        return 1.0 / (1.0 + var ** 0.5)

    def fitness(self):
        return self._fit(self.k, self.s1, self.s2)

    def _after(self, changes):
        """``changes``: {pid or key: (new_sum, new_size)}; size 0 removes, unknown key adds."""
        k, s1, s2 = self.k, self.s1, self.s2
        for pid, (ns, nn) in changes.items():
            if pid in self.size:
                m = self.sum[pid] / self.size[pid]
                k -= 1
                s1 -= m
                s2 -= m * m
            if nn:
                m = ns / nn
                k += 1
                s1 += m
                s2 += m * m
        return k, s1, s2

    def gain_move(self, agent, src, dst):
        a = self.acc[agent]
        ch = {src: (self.sum[src] - a, self.size[src] - 1), dst: (self.sum[dst] + a, self.size[dst] + 1)}
        return self._fit(*self._after(ch)) - self.fitness()

    def gain_exclude(self, agent, src):
        a = self.acc[agent]
        ch = {src: (self.sum[src] - a, self.size[src] - 1), ("new",): (a, 1)}
        return self._fit(*self._after(ch)) - self.fitness()

    def apply(self, changes):
        self.k, self.s1, self.s2 = self._after(changes)
        for pid, (ns, nn) in changes.items():
            if nn:
                self.sum[pid], self.size[pid] = ns, nn
            else:
                self.sum.pop(pid, None)
                self.size.pop(pid, None)


def leader_round(g: AcquaintancesGraph, pid: int, stats: _Stats, params: SpadaParams,
                 rng: random.Random) -> bool:
    """One evaluation by ``pid``'s leader; returns True if the partition changed."""
    if pid not in g.members or pid in g.terminated:
        return False
    acc = stats.acc
    changed = False
    members = g.members[pid]
    outside = sorted({b for a in members for b in g.acquaintances.get(a, ()) if b not in members})
    candidates = rng.sample(outside, min(params.evaluated, len(outside)))
    integrated = 0
    while candidates and integrated < params.max_integrations:
        best, best_gain = None, EPS
        for x in candidates:
            gain = stats.gain_move(x, g.part_of[x], pid)
            if gain > best_gain:
                best, best_gain = x, gain
        if best is None:
            break
        candidates.remove(best)
        src = g.part_of[best]
        a = acc[best]
        src_left = stats.size[src] - 1
        stats.apply({src: (stats.sum[src] - a, src_left), pid: (stats.sum[pid] + a, stats.size[pid] + 1)})
        g.detach(best)
        g.attach(best, pid)
        # changed from outside: the source loses its termination mark
        g.terminated.discard(src)
        integrated += 1
        changed = True

    while len(g.members[pid]) > 1:
        best, best_gain = None, EPS
        for m in sorted(g.members[pid]):
            gain = stats.gain_exclude(m, pid)
            if gain > best_gain:
                best, best_gain = m, gain
        if best is None:
            break
        a = acc[best]
        g.detach(best)
        new_pid = g.new_partition({best})
        stats.apply({pid: (stats.sum[pid] - a, stats.size[pid] - 1), new_pid: (a, 1)})
        changed = True

    if not changed:
        g.terminated.add(pid)
    return changed


ResultTransform = Callable[[Partitioning, random.Random], Partitioning]


def run_spada(structure: SystemStructure, params: SpadaParams, accuracies, rng: random.Random, *,
              omit: set | None = None, transform: ResultTransform | None = None,
              graph_out: list | None = None) -> Partitioning:
    g = build_graph(structure, params, rng, omit=omit)
    if graph_out is not None:
        graph_out.append(g)
    acc = kernels.as_vector(accuracies)
    stats = _Stats(g, acc)
    cap = 50 * max(len(g.nodes), 1)
    rounds = 0
    while rounds < cap:
        active = [pid for pid in sorted(g.members) if pid not in g.terminated]
        if not active:
            break
        for pid in active:
            if rounds >= cap:
                break
            leader_round(g, pid, stats, params, rng)
            rounds += 1
    result = partitions_of(g)
    if transform is not None:
        result = transform(result, rng)
    return result
