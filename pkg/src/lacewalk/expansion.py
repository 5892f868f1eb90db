"""The lace-expansion recursion, its Fourier side, the critical-point fixed
point and the effective diffusion constants.

Expansion coefficients are stored at p = 1; the p-dependence
``pi_{p,n} = p^n pi_{1,n}`` is applied here.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .lattice import LatticeField, StepDistribution, convolve, d_hat
from .laces import pi_tables
from .walks import (
    INFINITY,
    NotConverged,
    check_memory,
    memory_label,
    mu_bounds,
    transfer_matrix_mu,
    two_point_tables,
)

TAIL_POLICIES = ("drop", "geometric-bound")


class SupercriticalError(ValueError):
    """Raised when ``1 - J_p(k)`` is not positive, i.e. p is past the truncated critical point."""


class DivergentIteration(RuntimeError):
    pass


@dataclass(frozen=True)
class Truncation:
    N_max: int = 2
    n_max: int = 4
    tail_policy: str = "drop"

    def __post_init__(self):
        if self.N_max < 1:
            raise ValueError("N_max must be >= 1")
        if self.n_max < 2:
            raise ValueError("n_max must be >= 2")
        if self.tail_policy not in TAIL_POLICIES:
            raise ValueError(f"tail_policy must be one of {TAIL_POLICIES}")


@dataclass(frozen=True)
class CriticalPointEstimate:
    value: float
    tau: float | int
    method: str
    truncation: Truncation | None = None
    bracket: tuple | None = None
    iterations: int = 0

    def __post_init__(self):
        if self.bracket is not None:
            lo, hi = self.bracket
            if not lo <= self.value <= hi:
                raise ValueError(f"estimate {self.value} outside its bracket {self.bracket}")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["tau"] = memory_label(self.tau)
        return out


@dataclass(frozen=True)
class EffectiveDiffusion:
    sigmaJ2: float
    v: float
    p: float
    truncation: Truncation
    sigma2: float = 0.0
    pi_second_moment: float = 0.0
    dpi_hat: float = 0.0


@dataclass
class IdentityReport:
    check: str
    params: dict
    residual: object
    bound: object
    verdict: str
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def as_dict(self) -> dict:
        return {"check": self.check, "params": self.params, "residual": self.residual,
                "bound": self.bound, "verdict": self.verdict, **({"details": self.details} if self.details else {})}


# ---------------------------------------------------------------------------
# exact recursion


def signed_pi_fields(D: StepDistribution, tau, n_max: int, N_max: int | None = None, workers: int = 1) -> list[LatticeField]:
    """``[pi_{1,m}]_{m=0..n_max}`` with ``pi = sum_N (-1)^N pi^(N)`` (zero for m < 2)."""
    tau = check_memory(tau)
    zero = LatticeField.zero(D.d)
    if n_max < 2:
        return [zero] * (n_max + 1)
    P = pi_tables(D, tau, n_max, workers=workers)
    return [zero, zero] + [P.signed(m, N_max) for m in range(2, n_max + 1)]


def recursion_rhs(D: StepDistribution, C: list[LatticeField], pis: list[LatticeField], n: int) -> LatticeField:
    """``(D*C_n) + sum_{m=2}^{n+1} pi_m * C_{n+1-m}`` at p = 1."""
    out = convolve(D.as_field(), C[n])
    for m in range(2, n + 2):
        if pis[m].values:
            out = out + convolve(pis[m], C[n + 1 - m])
    return out


def verify_recursion(D: StepDistribution, tau, n: int, workers: int = 1) -> Fraction:
    """Largest ``|C_{n+1}(x) - RHS(x)|`` over x, in exact arithmetic (should be 0)."""
    tau = check_memory(tau)
    C = [t.values for t in two_point_tables(D, tau, n + 1, workers=workers)]
    pis = signed_pi_fields(D, tau, n + 1, workers=workers)
    diff = C[n + 1] - recursion_rhs(D, C, pis, n)
    return Fraction(diff.max_abs())


# ---------------------------------------------------------------------------
# Fourier side


def pi_hat_sequence(D: StepDistribution, tau, p: float, k, trunc: Truncation, workers: int = 1) -> np.ndarray:
    """``pi_hat_{p,m}(k)`` for m = 0..n_max with loop orders N <= N_max."""
    pis = signed_pi_fields(D, tau, trunc.n_max, trunc.N_max, workers)
    return np.array([p**m * f.fourier(k) for m, f in enumerate(pis)])


def fourier_C_sequence(D: StepDistribution, p: float, pi_hats, k, n_max: int, strict: bool = False) -> np.ndarray:
    """``C_hat_{p,n}(k)`` for n = 0..n_max from the Fourier recursion.

    ``pi_hats[m]`` is ``pi_hat_{p,m}(k)``; entries beyond its length count as
    zero unless ``strict``.
    """
    pi_hats = np.asarray(pi_hats, dtype=float)
    if strict and len(pi_hats) < n_max + 1:
        raise ValueError(f"pi_hat known up to m={len(pi_hats) - 1}, need m={n_max}")
    dk = float(d_hat(D, k))
    out = np.zeros(n_max + 1)
    out[0] = 1.0
    for n in range(n_max):
        acc = p * dk * out[n]
        for m in range(2, min(n + 1, len(pi_hats) - 1) + 1):
            acc += pi_hats[m] * out[n + 1 - m]
        out[n + 1] = acc
    return out


def Pi_hat(D: StepDistribution, tau, p: float, trunc: Truncation, k=None, workers: int = 1) -> float:
    """Truncated ``Pi_hat_p(k) = sum_m pi_hat_{p,m}(k)``."""
    k = np.zeros(D.d) if k is None else k
    return float(pi_hat_sequence(D, tau, p, k, trunc, workers).sum())


def g_hat(D: StepDistribution, p: float, Pi_hat_k: float, k) -> float:
    """``1 / (1 - p D_hat(k) - Pi_hat_p(k))``."""
    den = 1.0 - p * float(d_hat(D, k)) - Pi_hat_k
    if den <= 0:
        raise SupercriticalError(f"1 - J_hat = {den!r} <= 0 at p={p}: beyond the truncated critical point")
    return 1.0 / den


def geometric_tail(terms) -> tuple[float, float]:
    """Per-step ratio ``r`` from the last terms and a bound on the sum of everything after them.

    Ratios are taken two steps apart, ``r^2 = max |a_n / a_{n-2}|`` over the
    last three n, so sequences that alternate in sign or vanish every other
    step (lattice parity) are handled. Assuming the decay persists, the rest
    is at most ``(|a_{N-1}| + |a_N|) r^2 / (1 - r^2)``.
    """
    a = np.abs(np.asarray(terms, dtype=float))
    if len(a) < 2:
        return 0.0, 0.0
    scale = a.max()
    if scale == 0:
        return 0.0, 0.0
    floor = 1e-13 * scale
    ratios = [a[n] / a[n - 2] for n in range(max(2, len(a) - 3), len(a)) if a[n - 2] > floor]
    if not ratios:
        return 0.0, float(a[-2:].sum())
    r2 = max(max(ratios), 0.0)
    if r2 >= 1:
        return math.sqrt(r2), math.inf
    return math.sqrt(r2), float(a[-2:].sum() * r2 / (1 - r2))


def tail_identity_check(
    D: StepDistribution,
    tau: int,
    p: float,
    k,
    n_max: int,
    memory=INFINITY,
    workers: int = 1,
) -> IdentityReport:
    """Check ``sum_{n>=tau} C_hat_n = G_hat [C_hat_tau - pi_hat_tau + E_hat]``.

    ``tau`` is the split point of the sum; the walk model is set by
    ``memory`` (self-avoiding by default). Both sides are built from the
    exact tables up to length ``n_max``. With pi cut at ``n_max`` the right
    side equals the full series of the truncated recursion, so the two sides
    differ by that series' tail beyond ``n_max``; the bound is the explicit
    sum of the next ``n_max`` continuation terms plus a geometric estimate
    for the rest.
    """
    if tau < 2:
        raise ValueError("the tail identity needs tau >= 2")
    if n_max <= tau:
        raise ValueError("n_max must exceed tau")
    memory = check_memory(memory)
    k = np.asarray(k, dtype=float)
    C = [t.values for t in two_point_tables(D, memory, n_max, workers=workers)]
    Ch = np.array([p**n * f.fourier(k) for n, f in enumerate(C)])
    pis = signed_pi_fields(D, memory, n_max, workers=workers)
    ph = np.array([p**m * f.fourier(k) for m, f in enumerate(pis)])

    lhs = float(Ch[tau:].sum())
    E = 0.0
    for m in range(2, tau):
        for n in range(tau + 1 - m, tau):
            E += ph[m] * Ch[n]
    for m in range(tau, n_max + 1):
        for n in range(tau):
            E += ph[m] * Ch[n]
    params = {"d": D.d, "L": D.L, "tau": tau, "memory": memory_label(memory), "p": p,
              "k": [float(c) for c in k], "n_max": n_max}
    try:
        G = g_hat(D, p, float(ph.sum()), k)
    except SupercriticalError as exc:
        raise ValueError(f"p={p} is too close to the truncated critical point: {exc}") from exc
    rhs = G * (Ch[tau] - ph[tau] + E)

    # continuation of the truncated recursion past the enumerated range
    cont = np.concatenate([Ch, np.zeros(n_max)])
    dk = float(d_hat(D, k))
    for n in range(n_max, 2 * n_max):
        acc = p * dk * cont[n]
        for m in range(2, min(n + 1, n_max) + 1):
            acc += ph[m] * cont[n + 1 - m]
        cont[n + 1] = acc
    extra = cont[n_max + 1 :]
    r, geo = geometric_tail(extra)
    if not math.isfinite(geo):
        raise ValueError(f"p={p} is too close to the truncated critical point (tail ratio {r:.3f} >= 1)")
    bound = float(np.abs(extra).sum() + geo)
    residual = abs(lhs - rhs)
    verdict = "PASS" if residual <= bound + 1e-9 else "FAIL"
    return IdentityReport("tail-identity", params, residual, bound, verdict,
                          {"lhs": lhs, "rhs": rhs, "ratio": r, "G_hat": G, "E_hat": E})


# ---------------------------------------------------------------------------
# critical point


def _pi_hat0_polys(D: StepDistribution, tau, trunc: Truncation, workers: int = 1) -> np.ndarray:
    """Coefficients ``a_n`` with ``Pi_hat_p(0) = sum_n a_n p^n`` (truncated)."""
    pis = signed_pi_fields(D, tau, trunc.n_max, trunc.N_max, workers)
    return np.array([float(f.total()) for f in pis])


def solve_pc_fixed_point(
    D: StepDistribution,
    tau,
    trunc: Truncation,
    tol: float = 1e-12,
    max_iter: int = 1000,
    workers: int = 1,
) -> CriticalPointEstimate:
    """Iterate ``p <- 1 - Pi_hat_p(0)`` from p = 1, damping by 1/2 once the steps oscillate."""
    tau = check_memory(tau)
    a = _pi_hat0_polys(D, tau, trunc, workers)
    powers = np.arange(len(a))

    def phi(p):
        return 1.0 - float(a @ p**powers)

    p, damp, prev_step = 1.0, 1.0, 0.0
    for it in range(1, max_iter + 1):
        step = phi(p) - p
        if prev_step * step < 0:
            damp = 0.5
        new = p + damp * step
        if not 0.5 <= new <= 2.0 or not math.isfinite(new):
            raise DivergentIteration(f"fixed-point iteration left [0.5, 2] (p={new}) at step {it}")
        if abs(new - p) < tol:
            return CriticalPointEstimate(new, tau, "fixed-point", trunc, iterations=it)
        p, prev_step = new, step
    raise DivergentIteration(f"fixed-point iteration did not settle in {max_iter} steps (last p={p})")


def pc_transfer(D: StepDistribution, tau: int, tol: float = 1e-12, symmetry_reduction=None, workers: int = 1) -> CriticalPointEstimate:
    """``p_c^tau = 1/mu_tau`` from the transfer matrix (tau = 1 is exactly 1)."""
    tau = check_memory(tau)
    if tau == 1:
        return CriticalPointEstimate(1.0, 1, "transfer-matrix")
    res = transfer_matrix_mu(D, tau, tol, symmetry_reduction, workers=workers)
    return CriticalPointEstimate(float(res.pc), tau, "transfer-matrix", iterations=res.iterations)


def pc_series_bound(D: StepDistribution, tau, n_max: int, workers: int = 1) -> CriticalPointEstimate:
    """Rigorous lower bound ``max_n c_n^(-1/n)`` on p_c^tau from exact counts."""
    tau = check_memory(tau)
    vals = [1.0 / v for _, v in mu_bounds(D, tau, n_max, workers=workers)]
    lo = float(max(vals))
    return CriticalPointEstimate(lo, tau, "series-bound", Truncation(1, max(n_max, 2)), bracket=(lo, math.inf))


# ---------------------------------------------------------------------------
# diffusion constants


def effective_diffusion(D: StepDistribution, p: float, trunc: Truncation, tau=INFINITY, workers: int = 1) -> EffectiveDiffusion:
    """``sigma_J^2 = p sigma^2 + sum |x|^2 Pi_p(x)`` and
    ``v = (sigma^2 + p^-1 sum |x|^2 Pi_p(x)) / (sigma^2 (1 + d/dp Pi_hat_p))``."""
    tau = check_memory(tau)
    pis = signed_pi_fields(D, tau, trunc.n_max, trunc.N_max, workers)
    sigma2 = float(D.sigma2)
    moment = sum(p**m * float(f.second_moment()) for m, f in enumerate(pis))
    dpi = sum(m * p ** (m - 1) * float(f.total()) for m, f in enumerate(pis) if m >= 1)
    sigmaJ2 = p * sigma2 + moment
    v = (sigma2 + moment / p) / (sigma2 * (1.0 + dpi))
    return EffectiveDiffusion(sigmaJ2, v, p, trunc, sigma2, moment, dpi)
