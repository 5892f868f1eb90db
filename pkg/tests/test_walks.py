import csv
import io
import itertools
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lacewalk.lattice import act, build_uniform_box, point_group
from lacewalk.walks import (
    INFINITY,
    EnumerationBudgetExceeded,
    StepOutsideSupport,
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


def brute_two_point(D, tau, n):
    """Every step sequence, checked pair by pair."""
    out = {}
    for steps in itertools.product(D.support, repeat=n):
        sites = [(0,) * D.d]
        for e in steps:
            sites.append(tuple(a + b for a, b in zip(sites[-1], e)))
        if any(sites[s] == sites[t] for t in range(n + 1) for s in range(t) if t - s <= tau):
            continue
        w = Fraction(1)
        for e in steps:
            w *= D.mass(e)
        out[sites[-1]] = out.get(sites[-1], 0) + w
    return out


# ---------------------------------------------------------------------------
# weights and memory factors


def test_zero_step_walk_has_weight_one():
    assert walk_weight(build_uniform_box(2, 1), Fraction(3, 2), Walk(((0, 0),))) == 1


def test_back_and_forth_weight():
    assert walk_weight(build_uniform_box(1, 1), 1, Walk(((0,), (1,), (0,)))) == Fraction(1, 4)


@settings(max_examples=30)
@given(st.lists(st.sampled_from(build_uniform_box(2, 1).support), max_size=8),
       st.fractions(min_value=0, max_value=3, max_denominator=9))
def test_weight_scales_as_p_to_the_length(steps, p):
    D = build_uniform_box(2, 1)
    w = Walk.from_steps(steps, start=(0, 0))
    assert walk_weight(D, p, w) == p ** w.n * walk_weight(D, 1, w)


def test_step_outside_support_names_index():
    with pytest.raises(StepOutsideSupport) as info:
        walk_weight(build_uniform_box(1, 1), 1, Walk(((0,), (1,), (3,))))
    assert info.value.index == 2


@pytest.mark.parametrize(
    "sites, tau, expected",
    [
        (((0,), (1,), (0,)), 2, 0),
        (((0,), (1,), (0,)), 1, 1),
        (((0,), (1,), (2,), (1,)), INFINITY, 0),
        (((0,), (1,), (2,), (1,)), 2, 0),
        (((0,), (1,), (2,), (1,)), 1, 1),
        (((0,),), 3, 1),
    ],
)
def test_memory_factor_examples(sites, tau, expected):
    assert memory_factor(Walk(sites), tau) == expected


@pytest.mark.parametrize("tau", [0, -1, 2.5])
def test_invalid_memory_rejected(tau):
    with pytest.raises(ValueError):
        memory_factor(Walk(((0,),)), tau)


# ---------------------------------------------------------------------------
# two-point tables


def test_zero_step_table_is_delta():
    t = two_point_n(build_uniform_box(2, 1), 3, 0)
    assert dict(t.values.items()) == {(0, 0): 1}
    assert t.c == 1


def test_d1_memory2_three_steps_straight_only():
    t = two_point_n(build_uniform_box(1, 1), 2, 3)
    assert t.c == Fraction(1, 4)
    assert set(t.values.support) == {(-3,), (3,)}


def test_memory1_is_simple_random_walk():
    assert two_point_n(build_uniform_box(1, 1), 1, 2).c == 1


@pytest.mark.parametrize("d, n_max", [(1, 8), (2, 4)])
@pytest.mark.parametrize("tau", [1, 2, 3, INFINITY])
@pytest.mark.parametrize("method", ["dfs", "window"])
def test_tables_match_brute_force(d, n_max, tau, method):
    if method == "window" and tau == INFINITY:
        pytest.skip("window transfer needs finite memory")
    D = build_uniform_box(d, 1)
    tables = two_point_tables(D, tau, n_max, method=method)
    for n in range(n_max + 1):
        assert dict(tables[n].values.items()) == {k: v for k, v in brute_two_point(D, tau, n).items() if v}


def test_tables_match_brute_force_spread_out():
    D = build_uniform_box(1, 2)
    for n, t in enumerate(two_point_tables(D, INFINITY, 5)):
        assert dict(t.values.items()) == brute_two_point(D, INFINITY, n)


def test_unweighted_counts_king_lattice_saw():
    # 8 * 7 * ... by direct count of self-avoiding walks on the king graph
    D = build_uniform_box(2, 1)
    counts = [t.unweighted(D) for t in two_point_tables(D, INFINITY, 4)]
    brute = [int(sum(brute_two_point(D, INFINITY, n).values()) * 8**n) for n in range(5)]
    assert counts == brute
    assert counts[:3] == [1, 8, 56]


def test_counts_nonincreasing_in_memory():
    D = build_uniform_box(2, 1)
    by_tau = [walk_counts(D, tau, 6) for tau in (1, 2, 3, 4, 5, INFINITY)]
    for a, b in zip(by_tau, by_tau[1:]):
        assert all(x >= y for x, y in zip(a, b))


@pytest.mark.parametrize("tau", [2, 3, INFINITY])
def test_tables_point_group_invariant(tau):
    t = two_point_n(build_uniform_box(2, 1), tau, 5)
    for g in point_group(2):
        for x, v in t.values.items():
            assert t.at(act(g, x)) == v


def test_memory_at_least_length_equals_self_avoidance():
    D = build_uniform_box(2, 1)
    saw = two_point_tables(D, INFINITY, 6)
    for tau in (6, 7, 10):
        assert [t.values for t in two_point_tables(D, tau, 6)] == [t.values for t in saw]


def test_d1_memory2_counts_are_exact_powers():
    for n, c in enumerate(walk_counts(build_uniform_box(1, 1), 2, 12)):
        if n >= 1:
            assert c == 2 * Fraction(1, 2) ** n


def test_enumeration_budget_names_estimate():
    with pytest.raises(EnumerationBudgetExceeded) as info:
        two_point_tables(build_uniform_box(3, 1), INFINITY, 12, method="dfs", max_nodes=1000)
    assert info.value.estimate > 1000


def test_table_csv_has_exact_columns():
    t = two_point_n(build_uniform_box(1, 1), INFINITY, 2)
    rows = list(csv.reader(io.StringIO(t.to_csv())))
    assert rows[0] == ["x1", "numerator", "denominator"]
    assert sorted(rows[1:]) == [["-2", "1", "4"], ["2", "1", "4"]]


# ---------------------------------------------------------------------------
# susceptibility


def test_susceptibility_memory1_geometric():
    D = build_uniform_box(2, 1)
    p = Fraction(1, 3)
    for N in range(6):
        assert susceptibility_truncated(D, 1, p, N) == (1 - p ** (N + 1)) / (1 - p)


def test_susceptibility_at_p_zero():
    assert susceptibility_truncated(build_uniform_box(2, 1), INFINITY, 0, 5) == 1


def test_susceptibility_d1_memory2_closed_form():
    D = build_uniform_box(1, 1)
    for N in range(1, 10):
        assert susceptibility_truncated(D, 2, 1, N) == 1 + 2 * (1 - Fraction(1, 2**N))


# ---------------------------------------------------------------------------
# transfer matrix and connective constants


@pytest.mark.parametrize("tau", [2, 4])
def test_transfer_d1_is_one_half(tau):
    assert transfer_matrix_mu(build_uniform_box(1, 1), tau).mu == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("d, L", [(1, 3), (2, 1), (2, 2), (3, 1)])
def test_transfer_memory2_closed_form(d, L):
    D = build_uniform_box(d, L)
    assert transfer_matrix_mu(D, 2).mu == pytest.approx((D.M - 1) / D.M, rel=1e-12)


@pytest.mark.parametrize("tau", [3, 4, 5])
def test_transfer_eigenvalue_invariant_under_reductions(tau):
    D = build_uniform_box(2, 1)
    ref = transfer_matrix_mu(D, tau, symmetry_reduction=False, prune_unreachable=False).mu
    for sym in (False, True):
        for prune in (False, True):
            got = transfer_matrix_mu(D, tau, symmetry_reduction=sym, prune_unreachable=prune)
            assert got.mu == pytest.approx(ref, rel=1e-11)


def test_transfer_rejects_infinite_or_unit_memory():
    D = build_uniform_box(2, 1)
    for tau in (1, INFINITY):
        with pytest.raises(ValueError):
            transfer_matrix_mu(D, tau)


def test_transfer_state_budget_checked_before_building():
    with pytest.raises(EnumerationBudgetExceeded) as info:
        transfer_matrix_mu(build_uniform_box(5, 1), 6, max_states=1000)
    assert info.value.estimate > 1000


def test_pc_nondecreasing_in_memory():
    D = build_uniform_box(2, 1)
    pcs = [transfer_matrix_mu(D, tau).pc for tau in (2, 3, 4, 5)]
    assert all(b >= a - 1e-10 for a, b in zip(pcs, pcs[1:]))


@pytest.mark.parametrize("tau", [2, 3, 4])
def test_mu_bounds_dominate_transfer(tau):
    D = build_uniform_box(2, 1)
    mu = transfer_matrix_mu(D, tau).mu
    assert all(v >= mu - 1e-12 for _, v in mu_bounds(D, tau, 8))


def test_mu_bounds_memory1_all_one():
    assert all(v == 1.0 for _, v in mu_bounds(build_uniform_box(2, 1), 1, 5))


def test_mu_bounds_monotone_in_memory():
    D = build_uniform_box(2, 1)
    for tau in (1, 2, 3, 4):
        lo = mu_bounds(D, tau + 1, 6)
        hi = mu_bounds(D, tau, 6)
        assert all(a[1] <= b[1] for a, b in zip(lo, hi))


def test_enumeration_approaches_transfer():
    D = build_uniform_box(2, 1)
    mu = transfer_matrix_mu(D, 3).mu
    gaps = [abs(math.log(v) - math.log(mu)) for _, v in mu_bounds(D, 3, 10)]
    assert gaps[-1] < gaps[2]
