"""Memory-tau and self-avoiding walks on spread-out lattices: exact
enumeration, lace combinatorics, the lace-expansion recursion and
critical-point estimates."""

__version__ = "0.1.0"

from .lattice import (
    EXACT,
    FLOAT,
    ContinuumKernelSpec,
    LatticeField,
    StepDistribution,
    build_uniform_box,
    continuum_moments,
    convolve,
    d_hat,
    heat_kernel_profile,
    verify_assumption_D,
)
from .walks import (
    INFINITY,
    TwoPointTable,
    Walk,
    memory_factor,
    mu_bounds,
    susceptibility_truncated,
    transfer_matrix_mu,
    two_point_n,
    two_point_tables,
    walk_counts,
    walk_weight,
)
from .laces import (
    Edge,
    IntervalGraph,
    Lace,
    PiTable,
    compatible_edges,
    enumerate_laces,
    j_factor,
    lace_from_graph,
    pi_coefficient,
    pi_tables,
)
from .expansion import (
    CriticalPointEstimate,
    EffectiveDiffusion,
    Truncation,
    effective_diffusion,
    fourier_C_sequence,
    g_hat,
    pc_transfer,
    solve_pc_fixed_point,
    tail_identity_check,
    verify_recursion,
)
from .asymptotics import (
    fit_exponent,
    gaussian_collapse,
    pc_first_order_prediction,
    scaling_scan,
    tail_pi1_sum,
    theorem_constant,
)
from .reports import emit_report


def clear_caches() -> None:
    """Drop every memoized table so the next call recomputes from scratch."""
    from . import laces, lattice, walks

    for fn in (walks._count_tables, walks._cached_transfer, laces.pi_tables, laces._lace_of,
               laces._compatible, laces._j_counts, lattice._box_1d_powers):
        fn.cache_clear()
