"""Step distributions on Z^d, lattice fields and their convolutions.

Sites are tuples of ints. Exact quantities are ``fractions.Fraction``;
float-mode fields carry numpy float64 values.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.signal import fftconvolve

Site = tuple  # tuple[int, ...]

EXACT = "exact"
FLOAT = "float"


class DimensionMismatch(ValueError):
    pass


class ModeMismatch(ValueError):
    pass


class MemoryBudgetExceeded(RuntimeError):
    """Raised when a dense computation would not fit the configured budget."""

    def __init__(self, message: str, n: int | None = None):
        super().__init__(message)
        self.n = n


def origin(d: int) -> Site:
    return (0,) * d


# ---------------------------------------------------------------------------
# lattice symmetries


@lru_cache(maxsize=None)
def point_group(d: int) -> tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]:
    """All (permutation, signs) pairs of the hyperoctahedral group of Z^d."""
    perms = itertools.permutations(range(d))
    signs = list(itertools.product((1, -1), repeat=d))
    return tuple((perm, sg) for perm in perms for sg in signs)


def act(g, x: Site) -> Site:
    perm, sg = g
    return tuple(sg[i] * x[perm[i]] for i in range(len(x)))


def canonical_site(x: Site) -> Site:
    """Orbit representative of ``x`` under coordinate permutations and sign flips."""
    return tuple(sorted(abs(v) for v in x))


# ---------------------------------------------------------------------------
# step distributions


class StepDistribution:
    """A lattice-symmetric probability mass on Z^d with range ``L``.

    Masses are exact rationals. Instances are immutable and hash by
    ``(kind, d, L)``, which identifies them for the enumeration caches.
    """

    def __init__(self, d: int, L: int, masses: Mapping[Site, Fraction], kind: str):
        if d < 1 or L < 1:
            raise ValueError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
        masses = {tuple(x): Fraction(m) for x, m in masses.items() if m != 0}
        if sum(masses.values()) != 1:
            raise ValueError("masses must sum to exactly 1")
        if origin(d) in masses:
            raise ValueError("mass at the origin must be 0")
        for x in masses:
            if len(x) != d:
                raise DimensionMismatch(f"site {x} is not {d}-dimensional")
            if max(abs(v) for v in x) > L:
                raise ValueError(f"site {x} outside range L={L}")
        self.d = d
        self.L = L
        self.kind = kind
        self._masses = masses
        self.sigma2 = sum((sum(v * v for v in x) * m for x, m in masses.items()), Fraction(0))
        self.beta = Fraction(1, L**d)

    @property
    def masses(self) -> Mapping[Site, Fraction]:
        return dict(self._masses)

    def mass(self, x: Site) -> Fraction:
        return self._masses.get(tuple(x), Fraction(0))

    @cached_property
    def support(self) -> tuple[Site, ...]:
        return tuple(sorted(self._masses))

    @cached_property
    def steps(self) -> np.ndarray:
        """Support as an ``(M, d)`` integer array (sorted order)."""
        return np.array(self.support, dtype=np.int64).reshape(len(self.support), self.d)

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([float(self._masses[x]) for x in self.support])

    @cached_property
    def common_denominator(self) -> int:
        return math.lcm(*(m.denominator for m in self._masses.values()))

    @cached_property
    def integer_weights(self) -> tuple[int, ...]:
        """Masses times :attr:`common_denominator`, in support order."""
        q = self.common_denominator
        return tuple(int(self._masses[x] * q) for x in self.support)

    @property
    def is_uniform(self) -> bool:
        return len(set(self._masses.values())) == 1

    @property
    def M(self) -> int:
        return len(self._masses)

    def is_symmetric(self) -> bool:
        return all(self.mass(act(g, x)) == m for x, m in self._masses.items() for g in point_group(self.d))

    def as_field(self) -> "LatticeField":
        return LatticeField(self.d, self._masses, EXACT)

    def __eq__(self, other):
        return isinstance(other, StepDistribution) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    @property
    def key(self):
        return (self.kind, self.d, self.L)

    def __repr__(self):
        return f"StepDistribution(kind={self.kind!r}, d={self.d}, L={self.L}, M={self.M})"


@lru_cache(maxsize=None)
def build_uniform_box(d: int, L: int) -> StepDistribution:
    """Uniform mass on the punctured box ``{x : 0 < ||x||_inf <= L}``."""
    if d < 1 or L < 1:
        raise ValueError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    M = (2 * L + 1) ** d - 1
    u = Fraction(1, M)
    sites = (x for x in itertools.product(range(-L, L + 1), repeat=d) if any(x))
    return StepDistribution(d, L, {x: u for x in sites}, kind="box")


def d_hat(D: StepDistribution, k) -> np.ndarray | float:
    """Fourier transform ``sum_x D(x) exp(i k.x)``; real by lattice symmetry.

    ``k`` may be a single vector of length d or an array of shape (..., d).
    """
    k = np.asarray(k, dtype=float)
    phase = k @ D.steps.T
    re = np.cos(phase) @ D.weights
    im = np.sin(phase) @ D.weights
    assert np.all(np.abs(im) < 1e-12), "imaginary part of D-hat should vanish"
    return float(re) if re.ndim == 0 else re


# ---------------------------------------------------------------------------
# lattice fields


@dataclass(frozen=True)
class LatticeField:
    """Finitely supported function on Z^d, tagged exact (Fraction) or float."""

    d: int
    values: Mapping[Site, object]
    mode: str = EXACT

    def __post_init__(self):
        if self.mode not in (EXACT, FLOAT):
            raise ValueError(f"unknown mode {self.mode!r}")
        conv = Fraction if self.mode == EXACT else float
        vals = {}
        for x, v in self.values.items():
            if len(x) != self.d:
                raise DimensionMismatch(f"site {x} is not {self.d}-dimensional")
            if v != 0:
                vals[tuple(x)] = conv(v)
        object.__setattr__(self, "values", vals)

    @classmethod
    def delta(cls, d: int, mode: str = EXACT) -> "LatticeField":
        return cls(d, {origin(d): 1}, mode)

    @classmethod
    def zero(cls, d: int, mode: str = EXACT) -> "LatticeField":
        return cls(d, {}, mode)

    def __getitem__(self, x: Site):
        return self.values.get(tuple(x), Fraction(0) if self.mode == EXACT else 0.0)

    def __iter__(self) -> Iterator[Site]:
        return iter(sorted(self.values))

    def __len__(self):
        return len(self.values)

    def items(self):
        return sorted(self.values.items())

    @property
    def support(self) -> tuple[Site, ...]:
        return tuple(sorted(self.values))

    def total(self):
        return sum(self.values.values(), Fraction(0) if self.mode == EXACT else 0.0)

    def second_moment(self):
        zero = Fraction(0) if self.mode == EXACT else 0.0
        return sum((sum(c * c for c in x) * v for x, v in self.values.items()), zero)

    def fourier(self, k) -> float:
        """Real part of the Fourier transform at ``k``; fields here are symmetric."""
        if not self.values:
            return 0.0
        xs = np.array(list(self.values), dtype=float)
        vs = np.array([float(v) for v in self.values.values()])
        return float(np.cos(xs @ np.asarray(k, dtype=float)) @ vs)

    def to_float(self) -> "LatticeField":
        return LatticeField(self.d, {x: float(v) for x, v in self.values.items()}, FLOAT)

    def scale(self, c) -> "LatticeField":
        return LatticeField(self.d, {x: c * v for x, v in self.values.items()}, self.mode)

    def __add__(self, other: "LatticeField") -> "LatticeField":
        _check_compatible(self, other)
        out = dict(self.values)
        for x, v in other.values.items():
            out[x] = out.get(x, 0) + v
        return LatticeField(self.d, out, self.mode)

    def __sub__(self, other: "LatticeField") -> "LatticeField":
        return self + other.scale(-1)

    def max_abs(self):
        return max((abs(v) for v in self.values.values()), default=Fraction(0) if self.mode == EXACT else 0.0)

    def symmetric(self) -> bool:
        return all(self[act(g, x)] == v for x, v in self.values.items() for g in point_group(self.d))

    def to_dense(self) -> tuple[np.ndarray, Site]:
        """Dense float array over the bounding box and the site of index 0."""
        if not self.values:
            return np.zeros((1,) * self.d), origin(self.d)
        xs = np.array(list(self.values), dtype=np.int64)
        lo = xs.min(axis=0)
        hi = xs.max(axis=0)
        arr = np.zeros(tuple(hi - lo + 1))
        arr[tuple((xs - lo).T)] = [float(v) for v in self.values.values()]
        return arr, tuple(int(v) for v in lo)


def _check_compatible(f: LatticeField, g: LatticeField):
    if f.d != g.d:
        raise DimensionMismatch(f"dimension mismatch: {f.d} vs {g.d}")
    if f.mode != g.mode:
        raise ModeMismatch(f"mode mismatch: {f.mode} vs {g.mode}")


def convolve(f: LatticeField, g: LatticeField) -> LatticeField:
    """``(f*g)(x) = sum_y f(y) g(x-y)``.

    Exact fields are summed directly. Float fields go through an FFT on a box
    large enough to hold the full linear convolution, so nothing wraps around.
    """
    _check_compatible(f, g)
    if not f.values or not g.values:
        return LatticeField.zero(f.d, f.mode)
    if f.mode == EXACT:
        out: dict[Site, Fraction] = {}
        for y, a in f.values.items():
            for z, b in g.values.items():
                x = tuple(p + q for p, q in zip(y, z))
                out[x] = out.get(x, 0) + a * b
        return LatticeField(f.d, out, EXACT)
    fa, flo = f.to_dense()
    ga, glo = g.to_dense()
    res = fftconvolve(fa, ga, mode="full")
    lo = np.array(flo) + np.array(glo)
    # keep the support exact: only the Minkowski sum of supports can be non-zero
    fs = np.array(list(f.values), dtype=np.int64)
    gs = np.array(list(g.values), dtype=np.int64)
    mink = {tuple(int(c) for c in a + b) for a in fs for b in gs}
    return LatticeField(f.d, {x: res[tuple(np.array(x) - lo)] for x in mink}, FLOAT)


# ---------------------------------------------------------------------------
# Assumption-D style diagnostics


@dataclass
class AssumptionDReport:
    d: int
    L: int
    grid_resolution: int
    epsilon: float
    sigma2_over_L2: float
    sup_D_over_beta: float
    c1: float  # min of (1 - D^(k)) / (L^2 |k|^2) on 0 < ||k||_inf <= 1/L
    c2: float  # max of the same ratio
    eta_low: float  # min of 1 - D^(k) on ||k||_inf >= 1/L
    max_one_minus_dhat: float
    eta_high: float  # 2 - max(1 - D^(k)); must be > 0 for the upper inequality
    moment: float  # sum |x|^(2+2 eps) D(x)
    value_at_zero: float
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings


def _grid(res: int, lo: float, hi: float, d: int) -> np.ndarray:
    axis = np.linspace(lo, hi, res)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def verify_assumption_D(D: StepDistribution, grid_resolution: int = 16, epsilon: float = 0.5) -> AssumptionDReport:
    """Grid-sampled empirical constants for the spread-out assumptions on ``D``.

    This reports what a finite sample of k-space shows; it proves nothing.
    """
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    d, L = D.d, D.L
    warnings: list[str] = []

    full = _grid(grid_resolution, -math.pi, math.pi, d)
    one_minus = 1.0 - d_hat(D, full)
    ninf = np.abs(full).max(axis=1)
    outer = ninf >= 1.0 / L
    if not outer.any():
        outer = ninf >= ninf.max()

    small = _grid(grid_resolution, -1.0 / L, 1.0 / L, d)
    small = small[np.abs(small).max(axis=1) > 0]
    ratio = (1.0 - d_hat(D, small)) / (L**2 * (small**2).sum(axis=1))

    max_om = float(one_minus.max())
    eta_low = float(one_minus[outer].min())
    c1, c2 = float(ratio.min()), float(ratio.max())
    eta_high = 2.0 - max_om
    if c1 <= 0:
        warnings.append(f"lower bound c1 L^2|k|^2 <= 1 - D^(k) fails on the small-k grid (c1={c1:.3g})")
    if eta_low <= 0:
        warnings.append(f"1 - D^(k) > eta fails for ||k||_inf >= 1/L (min={eta_low:.3g})")
    if eta_high <= 0:
        warnings.append(
            f"1 - D^(k) < 2 - eta needs eta <= {eta_high:.3g}: max(1 - D^) = {max_om:.6g} on the grid"
        )
    moment = sum(float(m) * float(sum(v * v for v in x)) ** (1 + epsilon) for x, m in D.masses.items())
    return AssumptionDReport(
        d=d,
        L=L,
        grid_resolution=grid_resolution,
        epsilon=epsilon,
        sigma2_over_L2=float(D.sigma2) / L**2,
        sup_D_over_beta=float(max(D.masses.values()) / D.beta),
        c1=c1,
        c2=c2,
        eta_low=eta_low,
        max_one_minus_dhat=max_om,
        eta_high=eta_high,
        moment=moment,
        value_at_zero=float(1 - sum(D.masses.values())),  # exact: D^(0) is the total mass
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# heat kernel


@dataclass
class HeatKernelProfile:
    d: int
    L: int
    n: list[int]
    sup: list[float]
    normalized: list[float]  # n^(d/2) * sup / beta
    method: str

    @property
    def bound(self) -> float:
        return max(self.normalized)

    def rows(self):
        return list(zip(self.n, self.sup, self.normalized))


def _fft_powers(D: StepDistribution, n_max: int, max_cells: int) -> Iterator[tuple[int, float]]:
    arr, _ = D.as_field().to_dense()
    cur = arr
    for n in range(1, n_max + 1):
        if n > 1:
            cells = (2 * n * D.L + 1) ** D.d
            if cells > max_cells:
                raise MemoryBudgetExceeded(
                    f"D^(*{n}) needs a box of {cells} cells > budget {max_cells}", n=n
                )
            cur = fftconvolve(cur, arr, mode="full")
            cur[cur < 0] = 0.0
        yield n, float(cur.max())


@lru_cache(maxsize=None)
def _box_1d_powers(L: int, n_max: int) -> tuple[tuple[int, ...], ...]:
    """Exact integer k-fold self-convolutions of the indicator of [-L, L], k <= n_max.

    Entry ``j`` of power ``k`` is the value at ``j`` (non-negative side only).
    """
    out = [(1,)]
    full = [1]
    for _ in range(n_max):
        nxt = [0] * (len(full) + 2 * L)
        for i, v in enumerate(full):
            if v:
                for j in range(2 * L + 1):
                    nxt[i + j] += v
        full = nxt
        half = len(full) // 2
        out.append(tuple(full[half:]))
    return tuple(out)


def box_power_at(D: StepDistribution, n: int, x: Site) -> Fraction:
    """Exact ``D^{*n}(x)`` for the uniform box via the product structure of the full box.

    ``D = (B - delta)/M`` with ``B`` the box indicator, so
    ``D^{*n} = M^-n sum_j C(n,j) (-1)^(n-j) B^{*j}`` and ``B^{*j}`` factorises.
    """
    if D.kind != "box":
        raise ValueError("product-structure evaluation needs the uniform box")
    pw = _box_1d_powers(D.L, n)
    total = 0
    for j in range(n + 1):
        row = pw[j]
        prod = 1
        for c in x:
            c = abs(c)
            if c >= len(row):
                prod = 0
                break
            prod *= row[c]
        total += math.comb(n, j) * (-1) ** (n - j) * prod
    return Fraction(total, D.M**n)


def _box_upper_outside(D: StepDistribution, n: int, R: int) -> Fraction:
    # any x with ||x||_inf > R: each B^{*j} is coordinatewise unimodal, so
    # B^{*j}(x) <= B^{*j}((R+1, 0, ..., 0)); drop the signs for an upper bound.
    pw = _box_1d_powers(D.L, n)
    total = 0
    for j in range(n + 1):
        row = pw[j]
        edge = row[R + 1] if R + 1 < len(row) else 0
        total += math.comb(n, j) * edge * row[0] ** (D.d - 1)
    return Fraction(total, D.M**n)


def _box_sup(D: StepDistribution, n: int) -> float:
    d = D.d
    R = 0
    while True:
        best = max(
            box_power_at(D, n, x)
            for x in itertools.combinations_with_replacement(range(R + 1), d)
        )
        if best >= _box_upper_outside(D, n, R):
            return float(best)
        R += 1


def heat_kernel_profile(
    D: StepDistribution, n_max: int, method: str = "auto", max_cells: int = 2_000_000
) -> HeatKernelProfile:
    """``sup_x D^{*n}(x)`` for ``n = 1..n_max`` and the normalized sequence ``n^(d/2) sup / beta``.

    ``method="fft"`` convolves iteratively on dense boxes and raises
    :class:`MemoryBudgetExceeded` once a box would exceed ``max_cells``.
    ``method="box"`` uses the exact product formula of the uniform box and
    locates the supremum with a certified search. ``"auto"`` takes FFT while
    it fits and otherwise falls back to ``"box"`` for box kernels.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if method not in ("auto", "fft", "box"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        fits = (2 * n_max * D.L + 1) ** D.d <= max_cells
        method = "fft" if fits or D.kind != "box" else "box"
    if method == "fft":
        pairs = list(_fft_powers(D, n_max, max_cells))
    else:
        pairs = [(n, _box_sup(D, n)) for n in range(1, n_max + 1)]
    beta = float(D.beta)
    ns = [n for n, _ in pairs]
    sups = [s for _, s in pairs]
    normalized = [n ** (D.d / 2) * s / beta for n, s in pairs]
    return HeatKernelProfile(D.d, D.L, ns, sups, normalized, method)


# ---------------------------------------------------------------------------
# continuum kernel


@dataclass(frozen=True)
class ContinuumKernelSpec:
    name: str
    d: int

    @property
    def sigma_h2(self) -> float:
        return continuum_moments(self).sigma_h2


@dataclass
class ContinuumMoments:
    d: int
    sigma_h2: float
    h_squared_integral: float
    I: dict[int, float]  # n -> (1/2pi) int (sin t / t)^n dt
    U_at_origin: dict[int, float]  # n -> U^{*n}(o) = I_n^d

    def partial_sum(self, L: int, N: int | None = None) -> float:
        """``L^-d sum_{n=2}^{N} U^{*n}(o)``; ``N`` defaults to the whole table."""
        N = max(self.I) if N is None else N
        return L ** (-self.d) * sum(self.U_at_origin[n] for n in range(2, N + 1))


def sinc_power_integral(n: int) -> Fraction:
    """Exact ``(1/2pi) int_R (sin t / t)^n dt`` for n >= 1.

    This is the density at 0 of a sum of n independent uniforms on [-1, 1]:
    half the Irwin-Hall density at n/2.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return Fraction(1, 2)
    x = Fraction(n, 2)
    s = sum(
        (-1) ** k * math.comb(n, k) * (x - k) ** (n - 1)
        for k in range(0, math.floor(x) + 1)
        if x - k > 0
    )
    return s / math.factorial(n - 1) / 2


def _adaptive_simpson(f, a, b, tol, depth=60):
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, tol / 2, depth - 1) + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)


def sinc_power_quadrature(n: int, cutoff: float = 200.0, tol: float = 1e-12) -> tuple[float, float]:
    """Quadrature route for :func:`sinc_power_integral`: value on [0, cutoff] and tail bound.

    Returns ``(value, tail_bound)`` with ``|tail| <= cutoff^(1-n)/(pi (n-1))``.
    """
    if n < 2:
        raise ValueError("quadrature route needs n >= 2")
    f = lambda t: (math.sin(t) / t) ** n if t else 1.0
    # integrate piecewise between zeros of sin, which keeps Simpson honest
    edges = np.arange(0.0, cutoff + 1e-9, math.pi)
    if edges[-1] < cutoff:
        edges = np.append(edges, cutoff)
    val = sum(_adaptive_simpson(f, a, b, tol / len(edges)) for a, b in zip(edges[:-1], edges[1:]))
    return val / math.pi, cutoff ** (1 - n) / (math.pi * (n - 1))


def continuum_moments(spec: ContinuumKernelSpec, n_max: int = 40) -> ContinuumMoments:
    """Moments of the continuum box kernel ``h = 2^-d 1{||x||_inf <= 1}``."""
    if spec.name not in ("box", "uniform-box", "U"):
        raise ValueError(f"unsupported kernel {spec.name!r}; only the uniform box is implemented")
    d = spec.d
    I = {n: float(sinc_power_integral(n)) for n in range(1, n_max + 1)}
    return ContinuumMoments(
        d=d,
        sigma_h2=d / 3.0,
        h_squared_integral=2.0 ** (-d),
        I=I,
        U_at_origin={n: v**d for n, v in I.items()},
    )
