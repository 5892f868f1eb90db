"""Large-tau behaviour: the leading constant, the single-loop tail sum,
p_c^tau scans with exponent fits, and a local-CLT collapse diagnostic."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .expansion import (
    CriticalPointEstimate,
    EffectiveDiffusion,
    Truncation,
    fourier_C_sequence,
    geometric_tail,
    pc_transfer,
    pi_hat_sequence,
    solve_pc_fixed_point,
)
from .lattice import ContinuumKernelSpec, StepDistribution, continuum_moments, convolve, d_hat, origin
from .laces import pi_tables
from .walks import INFINITY, check_memory, memory_label, two_point_tables


def theorem_constant(d: int, L: int, SigmaH2: float) -> float:
    """``A(d, L) = 2/(d-2) * (d / (2 pi SigmaH2))^(d/2) * L^-d``."""
    if SigmaH2 <= 0:
        raise ValueError("SigmaH2 must be positive")
    if d <= 2:
        raise ValueError("the constant needs d > 2")
    if d <= 4:
        warnings.warn(f"d={d}: the leading-order statement is for d > 4", stacklevel=2)
    return 2.0 / (d - 2) * (d / (2.0 * math.pi * SigmaH2)) ** (d / 2.0) * float(L) ** (-d)


# ---------------------------------------------------------------------------
# single-loop tail


@dataclass(frozen=True)
class LoopTailSum:
    value: float
    tail_bound: float
    via_two_point: tuple  # (n, (D*C_{1,n-1})(o)) exact
    via_pi1: tuple  # (n, pi_hat^(1)_{1,n}) exact

    @property
    def paths_agree(self) -> bool:
        return self.via_two_point == self.via_pi1


def tail_pi1_sum(D: StepDistribution, p: float, tau: int, n_max: int, workers: int = 1) -> LoopTailSum:
    """``sum_{n=tau+1}^{n_max} p^n pi_hat^(1)_{1,n}`` for the self-avoiding walk.

    Each coefficient is computed twice: as ``(D*C_{1,n-1})(o)`` (a loop is a
    step followed by a walk back that avoids itself) and from the single-lace
    table. The tail bound extrapolates the terms up to ``n_max``.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    C = two_point_tables(D, INFINITY, n_max - 1, workers=workers)
    P = pi_tables(D, INFINITY, n_max, workers=workers)
    o = origin(D.d)
    via_c, via_pi = [], []
    for n in range(2, n_max + 1):
        via_c.append((n, Fraction(convolve(D.as_field(), C[n - 1].values)[o])))
        via_pi.append((n, Fraction(P.hat0(1, n))))
    terms = [p**n * float(v) for n, v in via_c]
    value = sum(t for (n, _), t in zip(via_c, terms) if n > tau)
    _, bound = geometric_tail(terms)
    return LoopTailSum(float(value), bound, tuple(via_c), tuple(via_pi))


# ---------------------------------------------------------------------------
# tau scans


@dataclass(frozen=True)
class ScanRow:
    tau: float | int
    pc: float | None
    method: str
    diff_double: float | None = None  # p_c^{2 tau} - p_c^tau when 2 tau was scanned
    diff_next: float | None = None  # p_c^{next tau} - p_c^tau
    error: str | None = None

    def as_dict(self) -> dict:
        log_diff = math.log(self.diff_double) if self.diff_double and self.diff_double > 0 else None
        return {"tau": memory_label(self.tau), "pc_estimate": self.pc, "method": self.method,
                "diff": self.diff_double, "diff_next": self.diff_next,
                "log_tau": math.log(self.tau) if self.tau != INFINITY else None,
                "log_diff": log_diff, "error": self.error}


def _pc_row(D, tau, method, trunc, tol, workers) -> CriticalPointEstimate:
    if method == "transfer":
        return pc_transfer(D, tau, tol, workers=workers)
    if method == "fixed-point":
        if trunc is None:
            trunc = Truncation() if tau == INFINITY else Truncation(2, max(2, 2 * int(tau)))
        return solve_pc_fixed_point(D, tau, trunc, tol, workers=workers)
    raise ValueError(f"unknown scan method {method!r}")


def scaling_scan(
    D: StepDistribution,
    tau_list,
    method: str = "transfer",
    trunc: Truncation | None = None,
    tol: float = 1e-12,
    workers: int = 1,
    progress=None,
) -> list[ScanRow]:
    """``p_c^tau`` per tau with successive and doubled differences; failures are kept as rows."""
    taus = sorted({check_memory(t) for t in tau_list})
    if not taus:
        raise ValueError("tau_list is empty")
    pcs: dict = {}
    errors: dict = {}
    for tau in taus:
        try:
            pcs[tau] = _pc_row(D, tau, method, trunc, tol, workers).value
        except (RuntimeError, ValueError, MemoryError) as exc:
            errors[tau] = f"{type(exc).__name__}: {exc}"
        if progress:
            progress(tau, pcs.get(tau), errors.get(tau))
    rows = []
    for i, tau in enumerate(taus):
        pc = pcs.get(tau)
        dd = pcs[2 * tau] - pc if pc is not None and 2 * tau in pcs else None
        nxt = taus[i + 1] if i + 1 < len(taus) else None
        dn = pcs[nxt] - pc if pc is not None and nxt in pcs else None
        rows.append(ScanRow(tau, pc, method, dd, dn, errors.get(tau)))
    return rows


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual_norm: float
    points: int


def fit_exponent(rows) -> FitResult:
    """Least squares of ``log(p_c^{2 tau} - p_c^tau)`` on ``log tau``."""
    pts = [(math.log(r.tau), math.log(r.diff_double)) for r in rows
           if r.diff_double is not None and r.diff_double > 0 and r.tau != INFINITY]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 positive doubled differences, got {len(pts)}")
    x, y = np.array(pts).T
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.linalg.norm(A @ np.array([slope, intercept]) - y))
    return FitResult(float(slope), float(intercept), resid, len(pts))


# ---------------------------------------------------------------------------
# local CLT collapse


@dataclass(frozen=True)
class CollapseRow:
    n: int
    k: float
    value: float
    target: float
    deviation: float
    flagged: bool


def gaussian_collapse(
    D: StepDistribution,
    p: float,
    n_list,
    k_list,
    diffusion: EffectiveDiffusion,
    tau=INFINITY,
    trunc: Truncation | None = None,
) -> list[CollapseRow]:
    """``C_hat_{p,n}(k / sqrt(v sigma^2 n)) / C_hat_{p,n}(0)`` against ``exp(-k^2 / 2d)``.

    The wave vector points along the first axis. Rows whose scaled wave
    vector leaves ``||k||_inf <= 1/L`` are flagged as outside the small-k
    window. For tau = 1 the expansion coefficients vanish and the sequence is
    the exact random-walk transform.
    """
    tau = check_memory(tau)
    trunc = trunc or diffusion.truncation
    n_top = max(n_list)
    scale = diffusion.v * float(D.sigma2)
    if scale <= 0:
        raise ValueError("v sigma^2 must be positive")
    rows = []
    zero = np.zeros(D.d)
    for n in sorted(n_list):
        for k in k_list:
            kv = np.zeros(D.d)
            kv[0] = k / math.sqrt(scale * n)
            seqs = []
            for kk in (kv, zero):
                ph = np.zeros(1) if tau == 1 else pi_hat_sequence(D, tau, p, kk, trunc)
                seqs.append(fourier_C_sequence(D, p, ph, kk, n_top))
            val = seqs[0][n] / seqs[1][n]
            target = math.exp(-k * k / (2 * D.d))
            rows.append(CollapseRow(n, float(k), float(val), target, float(abs(val - target)), bool(abs(kv[0]) * D.L > 1)))
    return rows


# ---------------------------------------------------------------------------
# first-order p_c


@dataclass(frozen=True)
class FirstOrderPrediction:
    value: float
    partial: float
    tail_estimate: float
    N: int


def pc_first_order_terms(d: int, L: int, N: int = 40) -> FirstOrderPrediction:
    """``1 + L^-d sum_{n>=2} U^{*n}(o)`` truncated at N plus a tail estimate.

    ``U^{*n}(o) = I_n^d`` decays like ``(3 / (2 pi n))^(d/2)``, a power law, so
    the tail beyond N is estimated by integrating that law rescaled to match
    the last computed term.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    mom = continuum_moments(ContinuumKernelSpec("box", d), n_max=N)
    partial = mom.partial_sum(L, N)
    last = mom.U_at_origin[N]
    # sum_{n>N} c n^{-d/2} ~ c N^{1-d/2} / (d/2 - 1) with c = last * N^{d/2}
    tail = L ** (-d) * last * N / (d / 2.0 - 1.0) if d > 2 else math.inf
    return FirstOrderPrediction(1.0 + partial + tail, partial, tail, N)


def pc_first_order_prediction(d: int, L: int, N: int = 40) -> float:
    """First-order prediction of p_c for the box model (tail included)."""
    return pc_first_order_terms(d, L, N).value
