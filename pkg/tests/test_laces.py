import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lacewalk.lattice import LatticeField, act, build_uniform_box, convolve, point_group
from lacewalk.laces import (
    DisconnectedGraph,
    Edge,
    IntervalGraph,
    Lace,
    _j_counts,
    all_edges,
    compatible_edges,
    enumerate_laces,
    j_factor,
    lace_from_graph,
    pi_coefficient,
    pi_tables,
)
from lacewalk.walks import INFINITY, Walk, two_point_tables

import oracles


# ---------------------------------------------------------------------------
# lace construction


def test_lace_from_graph_keeps_a_lace():
    G = IntervalGraph(frozenset({(0, 3), (2, 5), (4, 7)}), 0, 7)
    assert lace_from_graph(G).edges == ((0, 3), (2, 5), (4, 7))


def test_lace_from_graph_hand_trace():
    G = IntervalGraph(frozenset({(0, 2), (0, 4), (3, 6), (2, 6)}), 0, 6)
    assert lace_from_graph(G).edges == ((0, 4), (2, 6))


@pytest.mark.parametrize("edges, b, gap", [({(0, 2), (3, 5)}, 5, 2), ({(0, 2), (2, 4)}, 4, 2), ({(1, 3)}, 3, 0)])
def test_disconnected_graph_names_first_gap(edges, b, gap):
    with pytest.raises(DisconnectedGraph) as info:
        lace_from_graph(IntervalGraph(frozenset(edges), 0, b))
    assert info.value.gap == gap


@pytest.mark.parametrize("b", range(1, 8))
def test_construction_idempotent_on_laces(b):
    for N in range(1, b + 1):
        for L in enumerate_laces(N, INFINITY, 0, b):
            assert lace_from_graph(IntervalGraph(frozenset(L.edges), 0, b)) == L


@st.composite
def connected_graphs(draw):
    b = draw(st.integers(1, 8))
    edges = draw(st.sets(st.sampled_from(all_edges(0, b)), min_size=1, max_size=10))
    chain = [(i, i + 2) for i in range(0, b - 1)] or [(0, 1)]
    return b, frozenset(edges) | frozenset(chain if b > 1 else [(0, 1)])


@settings(max_examples=200)
@given(connected_graphs())
def test_construction_total_on_connected_graphs(bg):
    b, edges = bg
    G = IntervalGraph(edges, 0, b)
    assert G.connected
    L = lace_from_graph(G)
    assert set(L.edges) <= set(edges)
    assert oracles.is_lace(L.edges, 0, b, INFINITY)


def test_lace_rejects_invalid_edge_sets():
    with pytest.raises(ValueError):
        Lace(((0, 3), (1, 4), (2, 5)), 0, 5)
    with pytest.raises(ValueError):
        Lace(((0, 4),), 0, 4, tau=3)


# ---------------------------------------------------------------------------
# enumeration


@pytest.mark.parametrize("tau", [1, 2, 3])
def test_single_edge_laces(tau):
    for b in range(1, 6):
        laces = enumerate_laces(1, tau, 0, b)
        assert [L.edges for L in laces] == ([((0, b),)] if b <= tau else [])


def test_two_edge_laces_on_0_4():
    assert len(enumerate_laces(2, INFINITY, 0, 4)) == 3


@pytest.mark.parametrize("tau", [2, 3, INFINITY])
@pytest.mark.parametrize("b", range(1, 8))
def test_enumeration_matches_subset_filter(b, tau):
    edges = [e for e in all_edges(0, b) if e.length <= tau]
    brute = {}
    for r in range(1, b + 1):
        for sub in itertools.combinations(edges, r):
            if oracles.is_lace(sub, 0, b, tau):
                brute.setdefault(r, set()).add(tuple(sorted(sub)))
    for N in range(1, b + 1):
        got = [L.edges for L in enumerate_laces(N, tau, 0, b)]
        assert got == sorted(got)
        assert set(got) == brute.get(N, set())


def test_enumerate_laces_shifted_interval():
    assert [L.edges for L in enumerate_laces(2, INFINITY, 3, 6)] == [((3, 5), (4, 6))]


# ---------------------------------------------------------------------------
# compatible edges


def test_compatible_edge_examples():
    L = Lace(((0, 4), (2, 6)), 0, 6)
    comp = compatible_edges(L, INFINITY)
    assert Edge(0, 2) in comp
    assert Edge(0, 5) not in comp


@pytest.mark.parametrize("b", range(1, 7))
@pytest.mark.parametrize("tau", [2, 3, INFINITY])
def test_single_edge_lace_compatible_with_every_subedge(b, tau):
    if b > tau:
        return
    L = enumerate_laces(1, tau, 0, b)[0]
    expected = {e for e in all_edges(0, b) if e != (0, b) and e.length <= tau}
    assert compatible_edges(L, tau) == expected


# ---------------------------------------------------------------------------
# J factors


def test_j_factor_single_loop():
    w = Walk(((0, 0), (1, 0), (1, 1), (0, 1), (0, 0)))
    L = Lace(((0, 4),), 0, 4)
    assert j_factor(w, L, INFINITY) == 1


def test_j_factor_unclosed_edge_is_zero():
    w = Walk(((0,), (1,), (2,), (3,)))
    assert j_factor(w, Lace(((0, 3),), 0, 3), INFINITY) == 0


def test_j_factor_length_mismatch():
    with pytest.raises(ValueError):
        j_factor(Walk(((0,), (1,))), Lace(((0, 2),), 0, 2), INFINITY)


@pytest.mark.parametrize("b", range(1, 5))
def test_lace_decomposition_reproduces_graph_sum_exhaustive(b):
    edges = all_edges(0, b)
    for r in range(len(edges) + 1):
        for E in itertools.combinations(edges, r):
            E = frozenset(E)
            gs = oracles.graph_sum(E, b, by_order=True)
            j = oracles.j_from_laces(E, b, INFINITY)
            assert gs == {N: (-1) ** N * c for N, c in j.items()}
            assert dict(_j_counts(b, tuple(sorted(E)), INFINITY)) == j


@settings(max_examples=120, deadline=None)
@given(st.integers(5, 7).flatmap(lambda b: st.tuples(
    st.just(b), st.sets(st.sampled_from(all_edges(0, b)), max_size=9), st.sampled_from([2, 3, INFINITY]))))
def test_lace_decomposition_reproduces_graph_sum_sampled(args):
    b, E, tau = args
    E = frozenset(e for e in E if e.length <= tau)
    gs = oracles.graph_sum(E, b, by_order=True)
    j = oracles.j_from_laces(E, b, tau)
    assert gs == {N: (-1) ** N * c for N, c in j.items()}


# ---------------------------------------------------------------------------
# expansion coefficients


def test_pi1_two_steps_d1():
    t = pi_coefficient(build_uniform_box(1, 1), INFINITY, 1, 2)
    assert dict(t.values.items()) == {(0,): Fraction(1, 2)}


@pytest.mark.parametrize("N, n", [(1, 2), (1, 5), (2, 4), (3, 6)])
def test_memory1_coefficients_vanish(N, n):
    assert not pi_coefficient(build_uniform_box(2, 1), 1, N, n).values


def test_zero_table_beyond_reach():
    t = pi_coefficient(build_uniform_box(2, 1), 2, 1, 3)
    assert t.values == LatticeField.zero(2)


@pytest.mark.parametrize("d, L, n_max", [(1, 1, 7), (1, 2, 5), (2, 1, 4)])
@pytest.mark.parametrize("tau", [2, 3, INFINITY])
def test_pi_matches_graph_sum_oracle(d, L, n_max, tau):
    D = build_uniform_box(d, L)
    P = pi_tables(D, tau, n_max)
    for n in range(2, n_max + 1):
        assert dict(P.signed(n).items()) == oracles.pi_by_graph_sum(D, tau, n)


@pytest.mark.parametrize("tau", [2, 3, 4])
def test_pi_memory_equals_saw_up_to_tau(tau):
    D = build_uniform_box(2, 1)
    a, b = pi_tables(D, tau, 6), pi_tables(D, INFINITY, 6)
    for n in range(2, min(tau, 6) + 1):
        for N in range(1, n):
            assert a.table(N, n).values == b.table(N, n).values


def test_pi_tables_nonnegative_symmetric_and_single_loop_at_origin():
    D = build_uniform_box(2, 1)
    P = pi_tables(D, INFINITY, 6)
    for n in range(2, 7):
        assert set(P.table(1, n).values.support) <= {(0, 0)}
        for N in range(1, P.max_order + 1):
            f = P.table(N, n).values
            assert all(v >= 0 for _, v in f.items())
            assert all(f[act(g, x)] == v for x, v in f.items() for g in point_group(2))


def test_pi1_equals_step_then_return_walk():
    D = build_uniform_box(2, 1)
    P = pi_tables(D, INFINITY, 7)
    C = two_point_tables(D, INFINITY, 6)
    for n in range(2, 8):
        assert P.hat0(1, n) == convolve(D.as_field(), C[n - 1].values)[(0, 0)]


def test_pi_table_dumps():
    t = pi_coefficient(build_uniform_box(1, 1), INFINITY, 2, 3)
    lines = t.to_csv().splitlines()
    assert lines[0] == "N,tau,n,x1,numerator,denominator"
    assert sorted(lines[1:]) == ["2,inf,3,-1,1,8", "2,inf,3,1,1,8"]
    rows = json.loads(t.to_json())
    assert {tuple(r["x"]) for r in rows} == {(-1,), (1,)}


def test_pi_coefficient_rejects_short_lengths():
    with pytest.raises(ValueError):
        pi_coefficient(build_uniform_box(1, 1), INFINITY, 1, 1)
