"""Independent reference implementations used only by the tests.

Each one is written from the defining conditions, without calling the
package routine it is meant to check.
"""
import itertools
from fractions import Fraction

from lacewalk.laces import IntervalGraph, coincidence_edges, compatible_edges, enumerate_laces, lace_from_graph
from lacewalk.walks import Walk


def is_lace(edges, a, b, tau):
    if not edges:
        return False
    edges = sorted(edges)
    if any(t - s > tau for s, t in edges):
        return False
    N = len(edges)
    s = [e[0] for e in edges]
    t = [e[1] for e in edges]
    if s[0] != a or t[-1] != b:
        return False
    if N == 1:
        return True
    if len(set(s)) != N or s[1] <= a:
        return False
    ok = all(s[i + 1] < t[i] <= s[i + 2] for i in range(N - 2))
    return ok and s[N - 1] < t[N - 2] < t[N - 1]


def is_connected(edges, a, b):
    if not edges:
        return False
    covered = set()
    for s, t in edges:
        covered.update(range(s + 1, t))
    return any(s == a for s, _ in edges) and any(t == b for _, t in edges) and covered >= set(range(a + 1, b))


def brute_laces(b, tau, edges):
    """Laces on [0, b] found by filtering every subset of ``edges``, keyed by size."""
    out = {}
    for r in range(1, b + 1):
        for sub in itertools.combinations(edges, r):
            if is_lace(sub, 0, b, tau):
                out.setdefault(r, set()).add(tuple(sorted(sub)))
    return out


def graph_sum(E, b, by_order=False):
    """``sum over connected G subset of E of (-1)^|G|``, optionally split by the size of G's lace."""
    E = sorted(E)
    out = {}
    for r in range(1, len(E) + 1):
        for G in itertools.combinations(E, r):
            if is_connected(G, 0, b):
                key = len(lace_from_graph(IntervalGraph(frozenset(G), 0, b)).edges) if by_order else 0
                out[key] = out.get(key, 0) + (-1) ** r
    return {k: v for k, v in out.items() if v}


def j_from_laces(E, b, tau):
    """``J^(N)`` counted as laces inside E with no compatible edge of E left over."""
    out = {}
    for N in range(1, b + 1):
        for L in enumerate_laces(N, tau, 0, b):
            if set(L.edges) <= E and not (E - set(L.edges)) & compatible_edges(L, tau):
                out[N] = out.get(N, 0) + 1
    return out


def pi_by_graph_sum(D, tau, n):
    """Signed expansion coefficient from the graph expansion of every n-step walk."""
    out = {}
    for steps in itertools.product(D.support, repeat=n):
        w = Walk.from_steps(steps, start=(0,) * D.d)
        total = graph_sum(coincidence_edges(w, tau), n).get(0, 0)
        if total:
            x = w.sites[-1]
            out[x] = out.get(x, 0) + total * Fraction(1, D.M**n)
    return {x: v for x, v in out.items() if v}
