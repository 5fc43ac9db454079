"""Network topology, structural identifiability checks and stage scheduling.

Nodes are labelled ``1..node_count``. An edge ``(tail, head)`` carries the
function ``f_{head,tail}`` that feeds the state of ``tail`` into the
derivative of ``head``.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Optional

import numpy as np

from .basis import BasisFunction, EdgeFunction
from .errors import (
    BasisNonzeroAtOrigin,
    CycleDetected,
    Disconnected,
    DuplicateEdge,
    EmptyDictionary,
    LinearOnlyEdge,
    UnmeasuredSink,
    UnsupportedTopology,
)

F_Z = "F_Z"
F_ZNL = "F_ZNL"


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    basis: tuple
    coefficients: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def name(self):
        return f"f_{self.head},{self.tail}"

    def function(self, coefficients=None) -> EdgeFunction:
        coeffs = self.coefficients if coefficients is None else coefficients
        if coeffs is None:
            raise ValueError(f"edge {self.name} has no coefficients")
        return EdgeFunction(self.basis, coeffs)


@dataclass(frozen=True)
class NetworkSpec:
    node_count: int
    edges: tuple
    measured: frozenset = frozenset()
    function_class: str = F_Z

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "measured", frozenset(self.measured))

    @property
    def nodes(self):
        return range(1, self.node_count + 1)

    @property
    def has_truth(self):
        return all(e.coefficients is not None for e in self.edges)

    def in_edges(self, node):
        return [i for i, e in enumerate(self.edges) if e.head == node]

    def out_edges(self, node):
        return [i for i, e in enumerate(self.edges) if e.tail == node]

    def successors(self, node):
        return [e.head for e in self.edges if e.tail == node]

    def edge_index(self, tail, head):
        for i, e in enumerate(self.edges):
            if e.tail == tail and e.head == head:
                return i
        raise KeyError((tail, head))

    def true_coefficients(self):
        return {i: np.asarray(e.coefficients, dtype=float) for i, e in enumerate(self.edges)}

    def relabel(self, perm):
        """Return a copy with node ``v`` renamed to ``perm[v]``."""
        edges = [Edge(perm[e.tail], perm[e.head], e.basis, e.coefficients) for e in self.edges]
        return NetworkSpec(self.node_count, edges, {perm[m] for m in self.measured},
                           self.function_class)


def validate(spec: NetworkSpec) -> list:
    """Check every structural invariant and return a topological order."""
    if spec.node_count < 1:
        raise Disconnected("a network needs at least one node")
    seen = set()
    for e in spec.edges:
        for v in (e.tail, e.head):
            if v not in spec.nodes:
                raise ValueError(f"edge {e.tail}->{e.head} references unknown node {v}")
        if e.tail == e.head:
            raise CycleDetected(f"self-loop on node {e.tail}")
        if (e.tail, e.head) in seen:
            raise DuplicateEdge(f"edge {e.tail}->{e.head} listed twice")
        seen.add((e.tail, e.head))
        if not e.basis:
            raise EmptyDictionary(f"edge {e.tail}->{e.head} has an empty dictionary")
        for b in e.basis:
            if abs(float(b.deriv(0.0, 0))) != 0.0:
                raise BasisNonzeroAtOrigin(f"{b.token} on edge {e.tail}->{e.head} is nonzero at 0")
        if e.coefficients is not None and len(e.coefficients) != len(e.basis):
            raise ValueError(f"edge {e.tail}->{e.head}: {len(e.basis)} basis functions "
                             f"but {len(e.coefficients)} coefficients")
        if spec.function_class == F_ZNL and all(b.is_identity for b in e.basis):
            raise LinearOnlyEdge(f"edge {e.tail}->{e.head} is linear-only in an F_ZNL network")
    if spec.function_class not in (F_Z, F_ZNL):
        raise ValueError(f"unknown function class {spec.function_class!r}")

    sorter = TopologicalSorter({v: set() for v in spec.nodes})
    for e in spec.edges:
        sorter.add(e.head, e.tail)
    try:
        order = list(sorter.static_order())
    except CycleError as exc:
        raise CycleDetected(f"cycle through nodes {exc.args[1]}") from None

    neighbours = {v: set() for v in spec.nodes}
    for e in spec.edges:
        neighbours[e.tail].add(e.head)
        neighbours[e.head].add(e.tail)
    reached, queue = {1}, deque([1])
    while queue:
        for w in neighbours[queue.popleft()] - reached:
            reached.add(w)
            queue.append(w)
    if len(reached) != spec.node_count:
        missing = sorted(set(spec.nodes) - reached)
        raise Disconnected(f"nodes {missing} are not connected to node 1")
    return order


def sinks(spec: NetworkSpec) -> set:
    tails = {e.tail for e in spec.edges}
    return {v for v in spec.nodes if v not in tails}


def sources(spec: NetworkSpec) -> set:
    heads = {e.head for e in spec.edges}
    return {v for v in spec.nodes if v not in heads}


def distances_to(spec: NetworkSpec, target: int) -> dict:
    """Length of the shortest directed path from each node to ``target``."""
    preds = {v: [] for v in spec.nodes}
    for e in spec.edges:
        preds[e.head].append(e.tail)
    dist, queue = {target: 0}, deque([target])
    while queue:
        v = queue.popleft()
        for p in preds[v]:
            if p not in dist:
                dist[p] = dist[v] + 1
                queue.append(p)
    return dist


def _simple_paths(spec, start, target):
    succ = {v: sorted(spec.successors(v)) for v in spec.nodes}
    out, stack = [], [(start, (start,))]
    while stack:
        v, path = stack.pop()
        if v == target:
            out.append(path)
            continue
        for w in succ[v]:
            stack.append((w, path + (w,)))
    return sorted(out)


def _maximal_cliques(n, compatible):
    # Bron-Kerbosch without pivoting; n is tiny here.
    cliques = []

    def expand(r, p, x):
        if not p and not x:
            cliques.append(r)
            return
        for v in list(p):
            expand(r | {v}, p & compatible[v], x & compatible[v])
            p = p - {v}
            x = x | {v}

    expand(frozenset(), frozenset(range(n)), frozenset())
    return cliques


@dataclass(frozen=True)
class PathGroup:
    source: int
    length: int
    paths: tuple

    @property
    def first_edges(self):
        return tuple(sorted({(p[0], p[1]) for p in self.paths}))


def parallel_path_groups(spec: NetworkSpec, sink: int) -> list:
    """Maximal sets of >= 2 equal-length paths into ``sink`` that share only their endpoints."""
    groups = []
    for source in spec.nodes:
        if source == sink:
            continue
        by_length = {}
        for path in _simple_paths(spec, source, sink):
            by_length.setdefault(len(path) - 1, []).append(path)
        for length in sorted(by_length):
            paths = by_length[length]
            if len(paths) < 2:
                continue
            inner = [set(p[1:-1]) for p in paths]
            compatible = {i: frozenset(j for j in range(len(paths))
                                       if j != i and not inner[i] & inner[j])
                          for i in range(len(paths))}
            for clique in _maximal_cliques(len(paths), compatible):
                if len(clique) >= 2:
                    groups.append(PathGroup(source, length,
                                            tuple(sorted(paths[i] for i in clique))))
    return sorted(groups, key=lambda g: (g.source, g.length, g.paths))


def _is_linear_edge(edge: Edge) -> bool:
    if all(b.is_identity for b in edge.basis):
        return True
    if edge.coefficients is None:
        return False
    return all(c == 0.0 for b, c in zip(edge.basis, edge.coefficients) if not b.is_identity)


class NonIdentifiabilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hazard:
    sink: int
    source: int
    edges: tuple

    def __str__(self):
        names = ", ".join(f"f_{h},{t}" for t, h in self.edges)
        return (f"edges {{{names}}} from node {self.source} reach sink {self.sink} through "
                f"equal-length paths with linear downstream functions and a shared dictionary; "
                f"their contributions can be traded against each other, so they are not "
                f"identifiable from the sink alone (use nonlinear merge edges or measure "
                f"an intermediate node)")


def linearity_hazard(spec: NetworkSpec) -> list:
    """Parallel-path groups whose first edges cannot be told apart at the sink."""
    hazards = []
    for s in sorted(sinks(spec)):
        for group in parallel_path_groups(spec, s):
            linear_paths = []
            for path in group.paths:
                downstream = [spec.edges[spec.edge_index(a, b)]
                              for a, b in zip(path[1:-1], path[2:])]
                if all(_is_linear_edge(e) for e in downstream):
                    linear_paths.append(path)
            if len(linear_paths) < 2:
                continue
            firsts = [spec.edges[spec.edge_index(p[0], p[1])] for p in linear_paths]
            shared = set(firsts[0].basis)
            for e in firsts[1:]:
                shared &= set(e.basis)
            if shared:
                hazards.append(Hazard(s, group.source,
                                      tuple(sorted((e.tail, e.head) for e in firsts))))
    return hazards


def required_measurements(spec: NetworkSpec) -> set:
    """Nodes that must be measured: exactly the sinks.

    Emits :class:`NonIdentifiabilityWarning` for each linearity hazard of an
    F_Z network, since measuring the sinks alone is then not enough.
    """
    validate(spec)
    if spec.function_class == F_Z:
        for hazard in linearity_hazard(spec):
            warnings.warn(str(hazard), NonIdentifiabilityWarning, stacklevel=2)
    return sinks(spec)


@dataclass(frozen=True)
class Stage:
    derivative_order: int
    edges: tuple
    sink: int
    zeroed_nodes: frozenset
    paths: tuple = field(default=())

    @property
    def nonzero_nodes(self):
        return frozenset(v for p in self.paths for v in p[:-1])

    def downstream_edges(self, spec):
        """Edges on the designated paths after each stage edge (all known when the stage runs)."""
        out = []
        for p in self.paths:
            for a, b in zip(p[1:-1], p[2:]):
                idx = spec.edge_index(a, b)
                if idx not in out:
                    out.append(idx)
        return out


def _shortest_path(spec, start, target, dist):
    path = [start]
    while path[-1] != target:
        v = path[-1]
        path.append(min(w for w in spec.successors(v) if dist.get(w) == dist[v] - 1))
    return tuple(path)


def identification_schedule(spec: NetworkSpec) -> list:
    """Order in which the edges are identified from sink derivatives.

    Each edge ``(j, i)`` is assigned to the sink it reaches soonest and to
    derivative order ``1 + dist(i, sink)``. A candidate stage is feasible
    once no unidentified edge outside it can influence the sink derivative
    of that order; unidentified edges sharing the tail and order are merged
    into a joint stage (parallel equal-length paths).
    """
    order = validate(spec)
    missing = sinks(spec) - spec.measured
    if missing:
        raise UnmeasuredSink(f"sink node(s) {sorted(missing)} are not measured")

    dist = {s: distances_to(spec, s) for s in sorted(sinks(spec))}
    target, deriv_order, path = {}, {}, {}
    for idx, e in enumerate(spec.edges):
        s = min((d[e.head] + 1, s) for s, d in dist.items() if e.head in d)[1]
        target[idx] = s
        deriv_order[idx] = dist[s][e.head] + 1
        path[idx] = (e.tail,) + _shortest_path(spec, e.head, s, dist[s])

    def conflicts(group, known):
        s = target[group[0]]
        m = deriv_order[group[0]]
        nonzero = {v for g in group for v in path[g][:-1]}
        lag = {}
        for v in order:
            if v in nonzero:
                lag[v] = 0
            else:
                ins = [lag[spec.edges[i].tail] + 1 for i in spec.in_edges(v)]
                lag[v] = min(ins, default=np.inf)
        bad = []
        for idx, e in enumerate(spec.edges):
            if idx in known or idx in group or e.head not in dist[s]:
                continue
            if lag[e.tail] + 1 + dist[s][e.head] <= m:
                bad.append(idx)
        return bad

    known, stages = set(), []
    remaining = set(range(len(spec.edges)))
    while remaining:
        chosen = None
        for idx in sorted(remaining, key=lambda i: (deriv_order[i], i)):
            group = [idx]
            while True:
                bad = conflicts(group, known)
                mergeable = [b for b in bad
                             if spec.edges[b].tail == spec.edges[idx].tail
                             and deriv_order[b] == deriv_order[idx]
                             and target[b] == target[idx]]
                if len(mergeable) < len(bad):
                    group = None
                    break
                if not mergeable:
                    break
                group = sorted(group + mergeable)
            if group is not None:
                chosen = group
                break
        if chosen is None:
            raise UnsupportedTopology(
                f"no identifiable stage for edges {sorted(spec.edges[i].name for i in remaining)}")
        if len(chosen) > 1:
            inner = [set(path[i][1:-1]) for i in chosen]
            for a in range(len(chosen)):
                for b in range(a + 1, len(chosen)):
                    if inner[a] & inner[b]:
                        raise UnsupportedTopology(
                            f"parallel paths {path[chosen[a]]} and {path[chosen[b]]} share "
                            f"intermediate nodes {sorted(inner[a] & inner[b])}")
        paths = tuple(path[i] for i in chosen)
        nonzero = {v for p in paths for v in p[:-1]}
        stages.append(Stage(
            derivative_order=deriv_order[chosen[0]],
            edges=tuple(chosen),
            sink=target[chosen[0]],
            zeroed_nodes=frozenset(v for v in spec.nodes if v not in nonzero),
            paths=paths,
        ))
        known.update(chosen)
        remaining.difference_update(chosen)
    return stages
