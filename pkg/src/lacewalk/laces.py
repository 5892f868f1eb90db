"""Laces, compatible edges and the expansion coefficients pi^(N)_{1,n}(x).

An edge ``(s, t)`` with ``s < t`` stands for the open interval ``(s, t)``;
for a walk it "closes" when ``w(s) == w(t)``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple

from .lattice import LatticeField, StepDistribution, origin
from .walks import (
    DEFAULT_MAX_NODES,
    INFINITY,
    EnumerationBudgetExceeded,
    SiteCodec,
    Walk,
    _run_parallel,
    check_memory,
    memory_label,
)


class Edge(NamedTuple):
    s: int
    t: int

    @property
    def length(self) -> int:
        return self.t - self.s


class DisconnectedGraph(ValueError):
    def __init__(self, gap: int):
        super().__init__(f"graph is not connected: point {gap} is not covered")
        self.gap = gap


def is_lace(edges: Iterable, a: int, b: int, tau=INFINITY) -> bool:
    """The defining conditions of a lace on ``[a, b]`` with edges of length <= tau."""
    es = [Edge(*e) for e in edges]
    N = len(es)
    if N == 0 or a >= b:
        return False
    if any(e.s >= e.t or e.s < a or e.t > b or e.length > tau for e in es):
        return False
    s = [e.s for e in es]
    t = [e.t for e in es]
    if s[0] != a or t[-1] != b:
        return False
    if N == 1:
        return True
    if not s[1] > a:
        return False
    for i in range(N - 2):
        if not (s[i + 1] < t[i] <= s[i + 2]):
            return False
    return s[N - 1] < t[N - 2] < t[N - 1]


@dataclass(frozen=True)
class Lace:
    edges: tuple
    a: int
    b: int
    tau: float | int = field(default=INFINITY, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))
        if not is_lace(self.edges, self.a, self.b, self.tau):
            raise ValueError(f"{list(self.edges)} is not a lace on [{self.a}, {self.b}] (tau={self.tau})")

    @property
    def N(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


@dataclass(frozen=True)
class IntervalGraph:
    edges: frozenset
    a: int
    b: int

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset(Edge(*e) for e in self.edges))

    def first_gap(self) -> int | None:
        """First point of ``[a, b)`` left uncovered by the union of open edges, or None."""
        return _first_gap(tuple(sorted(self.edges)), self.a, self.b)

    @property
    def connected(self) -> bool:
        return self.first_gap() is None


def _first_gap(edges: tuple, a: int, b: int) -> int | None:
    reach = a
    for s, t in edges:
        if s > reach or (s == reach and reach != a):
            return reach
        reach = max(reach, t)
    return None if reach >= b else reach


@lru_cache(maxsize=1 << 18)
def _lace_of(edges: tuple, a: int, b: int) -> tuple:
    gap = _first_gap(edges, a, b)
    if gap is not None:
        raise DisconnectedGraph(gap)
    t1 = max(t for s, t in edges if s == a)
    out = [(a, t1)]
    ti = t1
    while ti != b:
        nxt = max(t for s, t in edges if s < ti)
        s_nxt = min(s for s, t in edges if t == nxt)
        out.append((s_nxt, nxt))
        ti = nxt
    return tuple(out)


def lace_from_graph(G: IntervalGraph) -> Lace:
    """The lace of a connected graph: take the longest edge from ``a``, then
    repeatedly the edge reaching furthest among those starting before the
    current right end (ties broken by the smallest start)."""
    return Lace(_lace_of(tuple(sorted(G.edges)), G.a, G.b), G.a, G.b)


def all_edges(a: int, b: int, tau=INFINITY) -> list[Edge]:
    return [Edge(s, t) for s in range(a, b) for t in range(s + 1, b + 1) if t - s <= tau]


def enumerate_laces(N: int, tau, a: int, b: int) -> list[Lace]:
    """Every lace on ``[a, b]`` with N edges of length <= tau, in lexicographic order."""
    tau = check_memory(tau)
    if a >= b or N < 1:
        return []
    out: list[Lace] = []

    def rec(chain: list[Edge]):
        last = chain[-1]
        if len(chain) == N:
            if last.t == b:
                out.append(Lace(tuple(chain), a, b, tau))
            return
        if last.t == b:
            return
        prev_t = chain[-2].t if len(chain) >= 2 else None
        lo = last.s + 1 if prev_t is None else max(last.s + 1, prev_t)
        for s in range(lo, last.t):
            for t in range(last.t + 1, min(b, s + tau) + 1):
                chain.append(Edge(s, t))
                rec(chain)
                chain.pop()

    for t1 in range(a + 1, min(b, a + tau) + 1):
        rec([Edge(a, t1)])
    return out


@lru_cache(maxsize=1 << 16)
def _compatible(lace_edges: tuple, tau, a: int, b: int) -> frozenset:
    own = set(lace_edges)
    out = set()
    for e in all_edges(a, b, tau):
        if e in own:
            continue
        if _lace_of(tuple(sorted(own | {e})), a, b) == lace_edges:
            out.add(e)
    return frozenset(out)


def compatible_edges(L: Lace, tau, a: int | None = None, b: int | None = None) -> frozenset:
    """Edges ``st`` not in L, of length <= tau, whose addition leaves the lace unchanged."""
    a = L.a if a is None else a
    b = L.b if b is None else b
    return _compatible(tuple(L.edges), check_memory(tau), a, b)


def coincidence_edges(w: Walk, tau=INFINITY, a: int = 0) -> list[Edge]:
    """All ``(s, t)`` with ``w(s) == w(t)`` and ``t - s <= tau``, times shifted by ``a``."""
    out = []
    sites = w.sites
    for t in range(len(sites)):
        for s in range(max(0, t - tau) if tau != INFINITY else 0, t):
            if sites[s] == sites[t]:
                out.append(Edge(s + a, t + a))
    return out


def j_factor(w: Walk, L: Lace, tau) -> int:
    """``prod_{st in L} (-U_st) prod_{s't' in C_tau(L)} (1 + U_s't')`` evaluated on ``w``.

    ``w`` covers the lace interval, ``w.sites[i]`` being the walk at time ``L.a + i``.
    """
    if w.n != L.b - L.a:
        raise ValueError(f"walk has {w.n} steps but the lace interval has length {L.b - L.a}")
    x = w.sites
    a = L.a
    for s, t in L.edges:
        if x[s - a] != x[t - a]:
            return 0
    for s, t in compatible_edges(L, tau):
        if x[s - a] == x[t - a]:
            return 0
    return 1


# ---------------------------------------------------------------------------
# expansion coefficients


def _sub_laces(m: int, E: tuple) -> Iterator[tuple]:
    """Laces on [0, m] whose edges all lie in E."""
    starts: dict[int, list] = {}
    for e in E:
        starts.setdefault(e[0], []).append(e)

    def rec(chain):
        last = chain[-1]
        if last[1] == m:
            yield tuple(chain)
            return
        prev_t = chain[-2][1] if len(chain) >= 2 else None
        lo = last[0] + 1 if prev_t is None else max(last[0] + 1, prev_t)
        for s in range(lo, last[1]):
            for e in starts.get(s, ()):
                if e[1] > last[1]:
                    chain.append(e)
                    yield from rec(chain)
                    chain.pop()

    for e in starts.get(0, ()):
        yield from rec([e])


@lru_cache(maxsize=1 << 18)
def _j_counts(m: int, E: tuple, tau) -> tuple:
    """``((N, J^(N)), ...)`` for a walk of length m whose closing edges (length <= tau) are E."""
    Eset = set(E)
    counts: dict[int, int] = {}
    for lace in _sub_laces(m, E):
        comp = _compatible(lace, tau, 0, m)
        rest = Eset.difference(lace)
        if rest.isdisjoint(comp):
            counts[len(lace)] = counts.get(len(lace), 0) + 1
    return tuple(sorted(counts.items()))


def _pi_branch(args):
    deltas, coords, wts, tau, n_max, d, L, first = args
    out: dict[tuple[int, int], dict[tuple, int]] = {}
    X = [origin(d)]
    visits: dict[tuple, list[int]] = {origin(d): [0]}
    E: list[tuple[int, int]] = []

    def feasible(t: int, ustar: int) -> bool:
        xt = X[t]
        for s in range(ustar):
            horizon = min(n_max, s + tau) - t
            if horizon <= 0:
                continue
            xs = X[s]
            if max(abs(p - q) for p, q in zip(xs, xt)) <= L * horizon:
                return True
        return False

    def rec(t: int, w: int, u0):
        if t >= 2 and u0 is None:
            for N, c in _j_counts(t, tuple(E), tau):
                tab = out.setdefault((N, t), {})
                x = X[t]
                tab[x] = tab.get(x, 0) + w * c
        if t == n_max:
            return
        if t >= 1 and not feasible(t, u0 if u0 is not None else t):
            return
        t1 = t + 1
        xt = X[t]
        for e, a in zip(coords, wts):
            q = tuple(p + r for p, r in zip(xt, e))
            hist = visits.get(q)
            new = [(s, t1) for s in hist if t1 - s <= tau] if hist else []
            smin = new[0][0] if new else math.inf
            if t == 0:
                u0n = None
            elif u0 is not None and smin >= u0:
                u0n = u0
            elif smin < t:
                u0n = None
            else:
                u0n = t
            X.append(q)
            if hist is None:
                visits[q] = [t1]
            else:
                hist.append(t1)
            E.extend(new)
            rec(t1, w * a, u0n)
            del E[len(E) - len(new) :]
            X.pop()
            if hist is None:
                del visits[q]
            else:
                hist.pop()

    if n_max >= 1:
        e, a = coords[first], wts[first]
        X.append(tuple(e))
        visits[tuple(e)] = [1]
        rec(1, a, None)
    return out


@dataclass(frozen=True)
class PiTable:
    """Unsigned ``pi^{tau,(N)}_{1,n}(x)`` at p = 1 (exact)."""

    tau: float | int
    N: int
    n: int
    values: LatticeField

    def hat0(self) -> Fraction:
        return self.values.total()

    def rows(self) -> list[dict]:
        return [
            {"N": self.N, "tau": memory_label(self.tau), "n": self.n, "x": list(x),
             "numerator": v.numerator, "denominator": v.denominator}
            for x, v in self.values.items()
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        d = self.values.d
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["N", "tau", "n"] + [f"x{i + 1}" for i in range(d)] + ["numerator", "denominator"])
        for r in self.rows():
            wr.writerow([r["N"], r["tau"], r["n"]] + r["x"] + [r["numerator"], r["denominator"]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.rows(), sort_keys=True)


class PiTables:
    """All ``pi^{tau,(N)}_{1,n}`` with ``n <= n_max`` from one pruned enumeration."""

    def __init__(self, D: StepDistribution, tau, n_max: int, raw: dict):
        self.D = D
        self.tau = tau
        self.n_max = n_max
        q = D.common_denominator
        self._fields = {
            key: LatticeField(D.d, {x: Fraction(v, q ** key[1]) for x, v in tab.items()})
            for key, tab in raw.items()
        }

    @property
    def max_order(self) -> int:
        return max((N for N, _ in self._fields), default=0)

    def table(self, N: int, n: int) -> PiTable:
        if n > self.n_max:
            raise ValueError(f"n={n} beyond the enumerated range n_max={self.n_max}")
        f = self._fields.get((N, n), LatticeField.zero(self.D.d))
        return PiTable(self.tau, N, n, f)

    def signed(self, n: int, N_max: int | None = None) -> LatticeField:
        """``pi^tau_{1,n}(x) = sum_N (-1)^N pi^(N)_{1,n}(x)`` (N <= N_max if given)."""
        out = LatticeField.zero(self.D.d)
        for (N, m), f in sorted(self._fields.items()):
            if m == n and (N_max is None or N <= N_max):
                out = out + f.scale((-1) ** N)
        return out

    def hat0(self, N: int, n: int) -> Fraction:
        return self.table(N, n).hat0()


@lru_cache(maxsize=64)
def pi_tables(
    D: StepDistribution, tau, n_max: int, *, max_nodes: int = DEFAULT_MAX_NODES, workers: int = 1
) -> PiTables:
    """Enumerate every walk that can carry a lace, up to length ``n_max``.

    A branch is cut as soon as some point of the time interval can no longer
    be covered by a closing edge of length <= tau within ``n_max`` steps
    (the walk would have to get back to an earlier site too fast).
    """
    tau = check_memory(tau)
    # crude upper estimate: walks that must return to the start within min(n_max, tau) steps
    est = D.M ** min(n_max, 2 + (n_max if tau == INFINITY else min(tau, n_max)))
    if est > max_nodes * 1000:
        raise EnumerationBudgetExceeded(f"pi enumeration to n={n_max} estimated at {est} nodes", est)
    codec_coords = D.support
    jobs = [(None, codec_coords, D.integer_weights, tau, n_max, D.d, D.L, i) for i in range(len(codec_coords))]
    parts = _run_parallel(_pi_branch, jobs, workers) if n_max >= 2 else []
    raw: dict = {}
    for part in parts:
        for key, tab in part.items():
            acc = raw.setdefault(key, {})
            for x, v in tab.items():
                acc[x] = acc.get(x, 0) + v
    return PiTables(D, tau, n_max, raw)


def pi_coefficient(D: StepDistribution, tau, N: int, n: int, **kw) -> PiTable:
    """``pi^{tau,(N)}_{1,n}(x)`` for all x (exact, p = 1)."""
    tau = check_memory(tau)
    if n < 2:
        raise ValueError("pi coefficients start at n = 2")
    if N < 1:
        raise ValueError("N must be >= 1")
    if tau != INFINITY and n > N * tau:
        return PiTable(tau, N, n, LatticeField.zero(D.d))
    return pi_tables(D, tau, n, **kw).table(N, n)
