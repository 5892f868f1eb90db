"""How the memory tau pushes the critical point up toward the self-avoiding value.

Prints exact weighted counts c_n for the nearest-neighbour box in d = 2 and
the transfer-matrix p_c^tau for a few memories in d = 2 and d = 5.
"""
from lacewalk import INFINITY, build_uniform_box, walk_counts
from lacewalk.expansion import pc_series_bound, pc_transfer

D = build_uniform_box(2, 1)
print("d=2 L=1, weighted counts c_n (exact)")
for tau in (1, 2, 3, INFINITY):
    counts = walk_counts(D, tau, 6)
    print(f"  tau={tau!s:>3}: " + "  ".join(f"{float(c):.5f}" for c in counts))

print("\nd=2 L=1, critical points")
for tau in (2, 3, 4, 5):
    print(f"  tau={tau}: p_c = {pc_transfer(D, tau).value:.12f}")
print(f"  self-avoiding, rigorous lower bound from n <= 8: {pc_series_bound(D, INFINITY, 8).value:.6f}")

D5 = build_uniform_box(5, 1)
print("\nd=5 L=1 (M = 242), critical points")
for tau in (2, 3, 4):
    print(f"  tau={tau}: p_c = {pc_transfer(D5, tau).value:.12f}")
print(f"  tau=2 closed form M/(M-1) = {D5.M / (D5.M - 1):.12f}")
