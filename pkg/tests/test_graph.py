import itertools
import warnings

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netident.basis import Monomial
from netident.errors import (BasisNonzeroAtOrigin, CycleDetected, Disconnected, DuplicateEdge,
                             EmptyDictionary, LinearOnlyEdge, UnmeasuredSink, UnsupportedTopology)
from netident.graph import (F_Z, F_ZNL, Edge, NetworkSpec, NonIdentifiabilityWarning,
                            identification_schedule, linearity_hazard, parallel_path_groups,
                            required_measurements, sinks, sources, validate)

from conftest import net

QUAD = (Monomial(1), Monomial(2))


def make(n, pairs, measured=None, fclass=F_Z, basis=QUAD):
    edges = [Edge(t, h, basis) for t, h in pairs]
    spec = NetworkSpec(n, edges, set(), fclass)
    return NetworkSpec(n, edges, sinks(spec) if measured is None else measured, fclass)


PATH4 = [(1, 2), (2, 3), (3, 4)]
DIAMOND = [(1, 2), (1, 3), (2, 4), (3, 4)]
TRIANGLE = [(1, 2), (2, 3), (1, 3)]
BRIDGE = [(1, 4), (2, 4), (3, 4), (1, 2), (1, 3)]


def pairs_of(spec, stage):
    return [(spec.edges[i].tail, spec.edges[i].head) for i in stage.edges]


def test_validate_examples():
    assert validate(make(4, PATH4)) == [1, 2, 3, 4]
    assert validate(make(4, DIAMOND)) in ([1, 2, 3, 4], [1, 3, 2, 4])
    with pytest.raises(CycleDetected):
        validate(make(2, [(1, 2), (2, 1)], measured=set()))


def test_validate_errors():
    with pytest.raises(CycleDetected):
        validate(make(2, [(1, 1), (1, 2)], measured=set()))
    with pytest.raises(DuplicateEdge):
        validate(make(2, [(1, 2), (1, 2)]))
    with pytest.raises(Disconnected):
        validate(make(4, [(1, 2), (3, 4)]))
    with pytest.raises(EmptyDictionary):
        validate(make(2, [(1, 2)], basis=()))

    class Shifted:
        token = "shifted"
        is_identity = False

        def deriv(self, x, k=0):
            return np.cos(x) if k == 0 else 0.0

    with pytest.raises(BasisNonzeroAtOrigin):
        validate(make(2, [(1, 2)], basis=(Shifted(),)))
    with pytest.raises(LinearOnlyEdge):
        validate(make(2, [(1, 2)], fclass=F_ZNL, basis=(Monomial(1),)))
    validate(make(2, [(1, 2)], fclass=F_ZNL))


def test_sinks_sources():
    assert sinks(make(4, PATH4)) == {4} and sources(make(4, PATH4)) == {1}
    assert sinks(make(4, DIAMOND)) == {4} and sources(make(4, DIAMOND)) == {1}
    assert sinks(make(3, [(1, 2), (1, 3)])) == {2, 3}


def test_required_measurements():
    assert required_measurements(make(4, BRIDGE)) == {4}
    assert required_measurements(make(4, PATH4)) == {4}
    assert required_measurements(make(3, [(1, 2), (1, 3)])) == {2, 3}


def test_required_measurements_warns_on_linear_diamond():
    spec = net("""nodes 4
edge 2 4 basis=mono:1
edge 3 4 basis=mono:1
edge 1 2 basis=mono:1,mono:2
edge 1 3 basis=mono:1,mono:2
measured 4
""")
    with pytest.warns(NonIdentifiabilityWarning):
        assert required_measurements(spec) == {4}


def test_parallel_path_groups_examples():
    (g,) = parallel_path_groups(make(4, DIAMOND), 4)
    assert (g.source, g.length) == (1, 2)
    assert g.paths == ((1, 2, 4), (1, 3, 4))
    assert g.first_edges == ((1, 2), (1, 3))
    assert parallel_path_groups(make(3, TRIANGLE), 3) == []
    assert parallel_path_groups(make(4, PATH4), 4) == []


def test_linearity_hazard_examples(diamond4):
    linear = net("""nodes 4
edge 2 4 basis=mono:1 coeff=1
edge 3 4 basis=mono:1 coeff=2
edge 1 2 basis=mono:1,mono:2 coeff=1,1
edge 1 3 basis=mono:1,mono:2 coeff=1,1
measured 4
""")
    (h,) = linearity_hazard(linear)
    assert h.edges == ((1, 2), (1, 3))
    assert "f_2,1" in str(h) and "f_3,1" in str(h)
    assert linearity_hazard(diamond4) == []
    assert linearity_hazard(make(4, PATH4)) == []
    assert linearity_hazard(make(3, [(1, 2), (1, 3)])) == []


def test_schedule_examples():
    spec = make(4, PATH4)
    st_ = identification_schedule(spec)
    assert [(s.derivative_order, pairs_of(spec, s)) for s in st_] == [
        (1, [(3, 4)]), (2, [(2, 3)]), (3, [(1, 2)])]
    assert st_[0].zeroed_nodes == {1, 2, 4}
    assert st_[2].nonzero_nodes == {1, 2, 3}

    spec = make(4, [(2, 4), (3, 4), (1, 2), (1, 3)])
    assert [(s.derivative_order, pairs_of(spec, s)) for s in identification_schedule(spec)] == [
        (1, [(2, 4)]), (1, [(3, 4)]), (2, [(1, 2), (1, 3)])]

    spec = make(4, BRIDGE)
    assert [(s.derivative_order, pairs_of(spec, s)) for s in identification_schedule(spec)] == [
        (1, [(1, 4)]), (1, [(2, 4)]), (1, [(3, 4)]), (2, [(1, 2), (1, 3)])]


def test_schedule_triangle_uses_shortest_path():
    spec = make(3, TRIANGLE)
    got = [(s.derivative_order, pairs_of(spec, s)) for s in identification_schedule(spec)]
    assert got == [(1, [(2, 3)]), (1, [(1, 3)]), (2, [(1, 2)])]


def test_schedule_multi_sink_tree_isolates_branches():
    spec = make(5, [(1, 2), (2, 3), (2, 4), (1, 5)])
    stages = identification_schedule(spec)
    for s in stages:
        assert s.sink in {3, 4, 5}
        assert s.zeroed_nodes == set(spec.nodes) - s.nonzero_nodes
    assert sorted(i for s in stages for i in s.edges) == list(range(4))


def test_schedule_errors():
    with pytest.raises(UnmeasuredSink, match="4"):
        identification_schedule(make(4, PATH4, measured={1}))
    # equal-length parallel paths sharing node 4
    spec = make(5, [(1, 2), (1, 3), (2, 4), (3, 4), (4, 5)])
    with pytest.raises(UnsupportedTopology):
        identification_schedule(spec)


# -- random DAG properties ---------------------------------------------------

@st.composite
def dags(draw, max_nodes=8):
    n = draw(st.integers(2, max_nodes))
    perm = draw(st.permutations(range(1, n + 1)))
    pairs = []
    # a random spanning chain keeps the graph weakly connected
    for j in range(1, n):
        i = draw(st.integers(0, j - 1))
        pairs.append((i, j))
    for i, j in itertools.combinations(range(n), 2):
        if (i, j) not in pairs and draw(st.booleans()) and draw(st.booleans()):
            pairs.append((i, j))
    return make(n, [(perm[i], perm[j]) for i, j in pairs])


def brute_force_groups(spec, sink):
    g = nx.DiGraph([(e.tail, e.head) for e in spec.edges])
    out = set()
    for src in spec.nodes:
        if src == sink or not nx.has_path(g, src, sink):
            continue
        paths = [tuple(p) for p in nx.all_simple_paths(g, src, sink)]
        for length in {len(p) - 1 for p in paths}:
            same = [p for p in paths if len(p) - 1 == length]
            ok = []
            for r in range(2, len(same) + 1):
                for combo in itertools.combinations(same, r):
                    inner = [set(p[1:-1]) for p in combo]
                    if all(not a & b for a, b in itertools.combinations(inner, 2)):
                        ok.append(frozenset(combo))
            for c in ok:
                if not any(c < d for d in ok):
                    out.add((src, length, tuple(sorted(c))))
    return out


@settings(max_examples=80, deadline=None)
@given(dags())
def test_groups_match_brute_force(spec):
    for s in sinks(spec):
        got = {(g.source, g.length, g.paths) for g in parallel_path_groups(spec, s)}
        assert got == brute_force_groups(spec, s)


@settings(max_examples=40, deadline=None)
@given(dags(max_nodes=7), st.data())
def test_groups_invariant_under_relabeling(spec, data):
    perm_list = data.draw(st.permutations(list(spec.nodes)))
    perm = dict(zip(spec.nodes, perm_list))
    other = spec.relabel(perm)
    for s in sinks(spec):
        mapped = {(perm[g.source], g.length, tuple(sorted(tuple(perm[v] for v in p) for p in g.paths)))
                  for g in parallel_path_groups(spec, s)}
        assert mapped == {(g.source, g.length, g.paths)
                          for g in parallel_path_groups(other, perm[s])}


@settings(max_examples=80, deadline=None)
@given(dags())
def test_schedule_partition_and_orders(spec):
    try:
        stages = identification_schedule(spec)
    except UnsupportedTopology:
        return
    covered = [i for s in stages for i in s.edges]
    assert sorted(covered) == list(range(len(spec.edges)))
    g = nx.DiGraph([(e.tail, e.head) for e in spec.edges])
    for s in stages:
        for idx, path in zip(s.edges, s.paths):
            e = spec.edges[idx]
            assert path[:2] == (e.tail, e.head) and path[-1] == s.sink
            assert s.derivative_order == len(path) - 1
            assert s.derivative_order == 1 + nx.shortest_path_length(g, e.head, s.sink)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonIdentifiabilityWarning)
        assert required_measurements(spec) == sinks(spec)


@settings(max_examples=150, deadline=None)
@given(dags())
def test_schedule_orders_closer_edges_first(spec):
    try:
        stages = identification_schedule(spec)
    except UnsupportedTopology:
        return
    for pos, s in enumerate(stages):
        for later in stages[pos + 1:]:
            if later.sink == s.sink:
                assert later.derivative_order >= s.derivative_order


def test_joint_stages_cover_group_first_edges(diamond4, bridge4):
    for spec in (diamond4, bridge4):
        joint = [set(pairs_of(spec, s)) for s in identification_schedule(spec) if len(s.edges) > 1]
        groups = [set(g.first_edges) for g in parallel_path_groups(spec, 4)]
        assert joint == groups
