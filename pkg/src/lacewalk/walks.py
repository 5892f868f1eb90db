"""Memory-tau and self-avoiding walks: weights, exact enumeration, connective constants.

Counts follow the generating-function normalization: ``c_n`` is the
D-weighted number of n-step walks, so ``c_n <= 1`` and ``mu <= 1``.
Memory is an int ``tau >= 1`` or ``math.inf`` (self-avoiding walk).
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import LatticeField, StepDistribution, origin

INFINITY = math.inf

DEFAULT_MAX_NODES = 30_000_000
DEFAULT_MAX_STATES = 3_000_000


class EnumerationBudgetExceeded(RuntimeError):
    def __init__(self, message: str, estimate: int):
        super().__init__(message)
        self.estimate = estimate


class StepOutsideSupport(ValueError):
    def __init__(self, index: int, step):
        super().__init__(f"step {index} ({step}) is outside the support of D")
        self.index = index


class NotConverged(RuntimeError):
    pass


def check_memory(tau) -> float | int:
    if tau == INFINITY:
        return INFINITY
    if int(tau) != tau or tau < 1:
        raise ValueError(f"memory must be an integer >= 1 or inf, got {tau!r}")
    return int(tau)


def memory_label(tau) -> str:
    return "inf" if tau == INFINITY else str(int(tau))


# ---------------------------------------------------------------------------
# single walks


@dataclass(frozen=True)
class Walk:
    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(tuple(x) for x in self.sites))
        if not self.sites:
            raise ValueError("a walk has at least one site")

    @classmethod
    def from_steps(cls, steps: Iterable[Sequence[int]], start=None) -> "Walk":
        steps = [tuple(e) for e in steps]
        d = len(start) if start is not None else (len(steps[0]) if steps else 1)
        cur = tuple(start) if start is not None else origin(d)
        sites = [cur]
        for e in steps:
            cur = tuple(a + b for a, b in zip(cur, e))
            sites.append(cur)
        return cls(tuple(sites))

    @property
    def n(self) -> int:
        return len(self.sites) - 1

    def __len__(self):
        return self.n

    def steps(self) -> list[tuple]:
        return [tuple(b - a for a, b in zip(x, y)) for x, y in zip(self.sites, self.sites[1:])]


def walk_weight(D: StepDistribution, p, w: Walk) -> Fraction:
    """``W_p(w) = prod_i p D(w(i) - w(i-1))``; the 0-step walk has weight 1."""
    p = Fraction(p)
    out = Fraction(1)
    for i, e in enumerate(w.steps(), start=1):
        m = D.mass(e)
        if m == 0:
            raise StepOutsideSupport(i, e)
        out *= p * m
    return out


def memory_factor(w: Walk, tau) -> int:
    """``K_tau[0, n]``: 1 iff no two visits at time distance <= tau coincide."""
    tau = check_memory(tau)
    last: dict = {}
    for t, x in enumerate(w.sites):
        prev = last.get(x)
        if prev is not None and t - prev <= tau:
            return 0
        last[x] = t
    return 1


# ---------------------------------------------------------------------------
# site encoding for the enumerators


class SiteCodec:
    """Packs sites with ``||x||_inf <= R`` into ints so that steps are additions."""

    def __init__(self, d: int, R: int):
        self.d = d
        self.R = R
        self.base = 2 * R + 1
        self.offset = sum(R * self.base**i for i in range(d))

    def encode(self, x) -> int:
        return sum((c + self.R) * self.base**i for i, c in enumerate(x))

    def step(self, e) -> int:
        return sum(c * self.base**i for i, c in enumerate(e))

    def decode(self, code: int) -> tuple:
        out = []
        for _ in range(self.d):
            code, r = divmod(code, self.base)
            out.append(r - self.R)
        return tuple(out)

    def distance(self, a: int, b: int) -> int:
        """sup-norm distance between two encoded sites."""
        best = 0
        for _ in range(self.d):
            a, ra = divmod(a, self.base)
            b, rb = divmod(b, self.base)
            diff = abs(ra - rb)
            if diff > best:
                best = diff
        return best


def _estimate_nodes(M: int, tau, n: int) -> int:
    if tau == 1:
        return sum(M**t for t in range(n + 1))
    return 1 + sum(M * (M - 1) ** (t - 1) for t in range(1, n + 1))


def _dfs_branch(args) -> list[dict[int, int]]:
    """Walks whose first step has index ``first`` (all first steps if None)."""
    deltas, wts, tau, n_max, start, first = args
    tables: list[dict[int, int]] = [dict() for _ in range(n_max + 1)]
    last = {start: 0}
    pairs = list(zip(deltas, wts))

    def rec(pos, t, w):
        tab = tables[t]
        tab[pos] = tab.get(pos, 0) + w
        if t == n_max:
            return
        t1 = t + 1
        for dlt, a in pairs:
            q = pos + dlt
            prev = last.get(q)
            if prev is not None and t1 - prev <= tau:
                continue
            last[q] = t1
            rec(q, t1, w * a)
            if prev is None:
                del last[q]
            else:
                last[q] = prev

    if first is None:
        rec(start, 0, 1)
        return tables
    tables[0][start] = 1
    if n_max >= 1:
        dlt, a = pairs[first]
        q = start + dlt
        last[q] = 1
        rec(q, 1, a)
    return tables


def _merge(parts: list[list[dict[int, int]]], n_max: int) -> list[dict[int, int]]:
    out: list[dict[int, int]] = [dict() for _ in range(n_max + 1)]
    for part in parts:
        for t in range(n_max + 1):
            tab = out[t]
            for k, v in part[t].items():
                tab[k] = tab.get(k, 0) + v
    return out


def _run_parallel(func, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, jobs))


def _dfs_counts(D: StepDistribution, tau, n_max: int, codec: SiteCodec, workers: int):
    deltas = tuple(codec.step(e) for e in D.support)
    start = codec.encode(origin(D.d))
    if n_max == 0:
        return [{start: 1}]
    jobs = [(deltas, D.integer_weights, tau, n_max, start, i) for i in range(len(deltas))]
    parts = _run_parallel(_dfs_branch, jobs, workers)
    tables = _merge(parts, n_max)
    tables[0] = {start: 1}
    return tables


def _window_counts(D: StepDistribution, tau: int, n_max: int, codec: SiteCodec, max_states: int):
    """Transfer over the window of the last ``tau`` positions; merges walks with equal windows."""
    deltas = tuple(zip((codec.step(e) for e in D.support), D.integer_weights))
    start = codec.encode(origin(D.d))
    cur: dict[tuple, int] = {(start,): 1}
    tables = [{start: 1}]
    for _ in range(n_max):
        nxt: dict[tuple, int] = {}
        tab: dict[int, int] = {}
        for win, w in cur.items():
            pos = win[-1]
            for dlt, a in deltas:
                q = pos + dlt
                if q in win:
                    continue
                key = (win + (q,))[-tau:]
                wa = w * a
                nxt[key] = nxt.get(key, 0) + wa
                tab[q] = tab.get(q, 0) + wa
        if len(nxt) > max_states:
            raise EnumerationBudgetExceeded(
                f"window transfer needs {len(nxt)} states > budget {max_states}", len(nxt)
            )
        cur = nxt
        tables.append(tab)
    return tables


@lru_cache(maxsize=64)
def _count_tables(D: StepDistribution, tau, n_max: int, method: str, max_nodes: int, workers: int):
    codec = SiteCodec(D.d, max(1, n_max * D.L))
    if method == "auto":
        method = "window" if tau != INFINITY and tau < n_max else "dfs"
    if method == "window":
        if tau == INFINITY:
            raise ValueError("window transfer needs finite memory")
        raw = _window_counts(D, int(tau), n_max, codec, DEFAULT_MAX_STATES)
    elif method == "dfs":
        est = _estimate_nodes(D.M, tau, n_max)
        if est > max_nodes:
            raise EnumerationBudgetExceeded(
                f"enumeration to n={n_max} needs about {est} nodes > budget {max_nodes}", est
            )
        raw = _dfs_counts(D, tau, n_max, codec, workers)
    else:
        raise ValueError(f"unknown enumeration method {method!r}")
    q = D.common_denominator
    out = []
    for n, tab in enumerate(raw):
        den = q**n
        out.append({codec.decode(k): Fraction(v, den) for k, v in tab.items()})
    return tuple(out)


# ---------------------------------------------------------------------------
# two-point tables


@dataclass(frozen=True)
class TwoPointTable:
    """``C^tau_{1,n}(x)`` at p = 1 (exact)."""

    tau: float | int
    n: int
    values: LatticeField

    @property
    def c(self) -> Fraction:
        return self.values.total()

    def at(self, x) -> Fraction:
        return self.values[x]

    def unweighted(self, D: StepDistribution) -> int:
        """Number of walks; only meaningful for uniform D."""
        if not D.is_uniform:
            raise ValueError("unweighted counts need a uniform D")
        return int(self.c * D.M**self.n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        d = self.values.d
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["numerator", "denominator"])
        for x, v in self.values.items():
            writer.writerow(list(x) + [v.numerator, v.denominator])
        return buf.getvalue()


def two_point_tables(
    D: StepDistribution,
    tau,
    n_max: int,
    *,
    method: str = "auto",
    max_nodes: int = DEFAULT_MAX_NODES,
    workers: int = 1,
) -> list[TwoPointTable]:
    """Tables ``C^tau_{1,n}`` for every ``n = 0..n_max`` from one enumeration.

    ``method="dfs"`` is depth-first with pruning at the first loop of length
    <= tau; ``"window"`` carries the last tau positions forward and merges
    walks that share them (finite tau only). ``"auto"`` picks the window
    transfer when ``tau < n_max``.
    """
    tau = check_memory(tau)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    raw = _count_tables(D, tau, n_max, method, max_nodes, workers)
    return [TwoPointTable(tau, n, LatticeField(D.d, tab)) for n, tab in enumerate(raw)]


def two_point_n(
    D: StepDistribution,
    tau,
    n: int,
    x_filter: Iterable | None = None,
    *,
    method: str = "auto",
    max_nodes: int = DEFAULT_MAX_NODES,
    workers: int = 1,
) -> TwoPointTable:
    """Exact ``C^tau_{1,n}(x)``; ``x_filter`` restricts the returned sites."""
    table = two_point_tables(D, tau, n, method=method, max_nodes=max_nodes, workers=workers)[n]
    if x_filter is None:
        return table
    keep = {tuple(x) for x in x_filter}
    vals = {x: v for x, v in table.values.items() if x in keep}
    return TwoPointTable(table.tau, n, LatticeField(D.d, vals))


def walk_counts(D: StepDistribution, tau, n_max: int, **kw) -> list[Fraction]:
    """``[c_0, ..., c_{n_max}]`` (D-weighted)."""
    return [t.c for t in two_point_tables(D, tau, n_max, **kw)]


def susceptibility_truncated(D: StepDistribution, tau, p, n_max: int, **kw) -> Fraction:
    """``sum_{n=0}^{n_max} p^n c_n^tau`` exactly."""
    p = Fraction(p)
    return sum((p**n * c for n, c in enumerate(walk_counts(D, tau, n_max, **kw))), Fraction(0))


def mu_bounds(D: StepDistribution, tau, n_max: int, **kw) -> list[tuple[int, float]]:
    """``(n, (c_n)^(1/n))`` for n = 1..n_max; each entry bounds mu_tau from above."""
    cs = walk_counts(D, tau, n_max, **kw)
    return [(n, float(cs[n]) ** (1.0 / n)) for n in range(1, n_max + 1)]


# ---------------------------------------------------------------------------
# transfer matrix


@dataclass
class TransferResult:
    mu: float
    iterations: int
    n_states: int
    nnz: int
    symmetry_reduction: bool

    @property
    def pc(self) -> float:
        return 1.0 / self.mu


def _canonical_keys(Y: np.ndarray, active: np.ndarray, base: int, symmetric: bool) -> np.ndarray:
    """Integer keys for a batch of windows ``Y`` (k, d, w) with column masks ``active`` (k, w).

    Under symmetry each row (one coordinate's history) is sign-normalized so
    its first non-zero entry is positive, then rows are sorted; this is the
    orbit representative under the hyperoctahedral group.
    """
    k, d, w = Y.shape
    if symmetric and w:
        nz = Y != 0
        first = np.where(nz.any(axis=2), nz.argmax(axis=2), 0)
        lead = np.take_along_axis(Y, first[..., None], axis=2)[..., 0]
        Y = np.where((lead < 0)[..., None], -Y, Y)
    powers = base ** np.arange(w, dtype=np.int64)
    rows = (Y + (base // 2)) @ powers if w else np.zeros((k, d), dtype=np.int64)
    if symmetric:
        rows = np.sort(rows, axis=1)
    mask = active @ (2 ** np.arange(w, dtype=np.int64)) if w else np.zeros(k, dtype=np.int64)
    return np.concatenate([mask[:, None], rows], axis=1)


def _decode_keys(keys: np.ndarray, d: int, w: int, base: int) -> tuple[np.ndarray, np.ndarray]:
    mask = keys[:, 0]
    active = ((mask[:, None] >> np.arange(w)) & 1).astype(bool)
    rows = keys[:, 1:]
    digits = (rows[..., None] // base ** np.arange(w, dtype=np.int64)) % base - base // 2
    return digits.astype(np.int64), active


def estimate_transfer_states(D: StepDistribution, tau: int, symmetric: bool) -> int:
    """Upper estimate ``M^(tau-1)`` (divided by the point-group order under symmetry)."""
    est = D.M ** (tau - 1)
    if symmetric:
        est //= 2**D.d * math.factorial(D.d)
    return max(est, 1)


def _build_transfer(D: StepDistribution, tau: int, symmetric: bool, prune: bool, max_states: int, batch: int = 2048):
    d, w, L = D.d, tau - 1, D.L
    est = estimate_transfer_states(D, tau, symmetric)
    if est > max_states:
        raise EnumerationBudgetExceeded(
            f"transfer matrix for tau={tau} is estimated at {est} states > budget {max_states}", est
        )
    base = 2 * max(w, 1) * L + 1
    steps = D.steps
    wts = D.weights
    reach = L * (tau - 1 - np.arange(w))  # deadline distance per window column

    init_Y = np.zeros((1, d, w), dtype=np.int64)
    init_A = np.zeros((1, w), dtype=bool)
    index: dict[tuple, int] = {tuple(_canonical_keys(init_Y, init_A, base, symmetric)[0]): 0}
    frontier = [tuple(_canonical_keys(init_Y, init_A, base, symmetric)[0])]
    rows_i, cols_i, vals = [], [], []
    while frontier:
        fresh = []
        for lo in range(0, len(frontier), batch):
            chunk = np.array(frontier[lo : lo + batch], dtype=np.int64)
            Y, A = _decode_keys(chunk, d, w, base)
            src = np.array([index[kk] for kk in frontier[lo : lo + batch]], dtype=np.int32)
            srcs, keys, ws = [], [], []
            for e, a in zip(steps, wts):
                if w:
                    ok = ~(A & (Y == e[None, :, None]).all(axis=1)).any(axis=1)
                    Yn = np.concatenate([np.broadcast_to(-e[None, :, None], (len(Y), d, 1)), Y[:, :, :-1] - e[None, :, None]], axis=2)
                    An = np.concatenate([np.ones((len(Y), 1), dtype=bool), A[:, :-1]], axis=1)
                    if prune:
                        An &= np.abs(Yn).max(axis=1) <= reach[None, :]
                    Yn = np.where(An[:, None, :], Yn, 0)
                else:
                    ok = np.ones(len(Y), dtype=bool)
                    Yn, An = Y, A
                srcs.append(src[ok])
                keys.append(_canonical_keys(Yn[ok], An[ok], base, symmetric))
                ws.append(np.full(int(ok.sum()), a))
            K = np.concatenate(keys)
            uniq, inv = np.unique(K, axis=0, return_inverse=True)
            ids = np.empty(len(uniq), dtype=np.int32)
            for i, kk in enumerate(map(tuple, uniq.tolist())):
                j = index.get(kk)
                if j is None:
                    j = len(index)
                    index[kk] = j
                    fresh.append(kk)
                ids[i] = j
            if len(index) > max_states:
                raise EnumerationBudgetExceeded(
                    f"transfer matrix exceeds {max_states} states (tau={tau})", len(index)
                )
            rows_i.append(np.concatenate(srcs))
            cols_i.append(ids[inv.reshape(-1)])
            vals.append(np.concatenate(ws))
        frontier = fresh
    n = len(index)
    T = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols_i))), shape=(n, n)
    )
    T.sum_duplicates()
    return T


def _matvec_chunked(T: sp.csr_matrix, v: np.ndarray, workers: int, chunk: int = 65536) -> np.ndarray:
    # row blocks are independent, so the result does not depend on the worker count
    n = T.shape[0]
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if workers <= 1 or len(bounds) == 1:
        return T @ v
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda b: T[b[0] : b[1]] @ v, bounds))
    return np.concatenate(parts)


def transfer_matrix_mu(
    D: StepDistribution,
    tau: int,
    tol: float = 1e-12,
    symmetry_reduction: bool | None = None,
    *,
    prune_unreachable: bool = True,
    max_states: int = DEFAULT_MAX_STATES,
    max_iter: int = 100_000,
    workers: int = 1,
) -> TransferResult:
    """Connective constant ``mu_tau`` as the Perron eigenvalue of the window transfer matrix.

    A state is the list of the last ``tau - 1`` positions relative to the
    current one; a step is allowed iff it lands on none of them. With
    ``prune_unreachable`` a remembered position is forgotten once it is too
    far to be reached before it leaves the window (this lumps states with
    identical futures). ``symmetry_reduction`` lumps lattice-symmetric
    states; ``None`` turns it on when the unreduced window count ``M^(tau-1)``
    exceeds 10^4.
    """
    if tau == INFINITY or tau < 2:
        raise ValueError("transfer matrix needs a finite memory tau >= 2")
    tau = int(tau)
    if symmetry_reduction is None:
        symmetry_reduction = D.M ** (tau - 1) > 10_000
    T = _cached_transfer(D, tau, bool(symmetry_reduction), prune_unreachable, max_states)
    n = T.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 0.0
    # shift by the identity so periodic chains still converge
    for it in range(1, max_iter + 1):
        u = _matvec_chunked(T, v, workers) + v
        s = u.sum()
        new = s - 1.0
        u /= s
        if it > 1 and abs(new - lam) <= max(0.01 * tol * abs(new), 4e-16) and np.abs(u - v).max() <= math.sqrt(tol):
            return TransferResult(float(new), it, n, T.nnz, bool(symmetry_reduction))
        v, lam = u, new
    raise NotConverged(f"power iteration did not converge in {max_iter} iterations (tau={tau})")


@lru_cache(maxsize=16)
def _cached_transfer(D, tau, symmetric, prune, max_states):
    return _build_transfer(D, tau, symmetric, prune, max_states)
