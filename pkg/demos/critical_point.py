"""Critical-point estimates side by side for the d = 5 box.

The truncated fixed point p = 1 - Pi_hat_p(0) is compared with the transfer
matrix at memory 2, and the leading large-tau constant is printed together
with the first-order p_c prediction from the continuum kernel.
"""
from lacewalk import Truncation, build_uniform_box, pc_transfer, solve_pc_fixed_point
from lacewalk.asymptotics import pc_first_order_terms, theorem_constant

D = build_uniform_box(5, 1)
fixed = solve_pc_fixed_point(D, 2, Truncation(2, 4)).value
transfer = pc_transfer(D, 2).value
print(f"tau=2: fixed point {fixed:.12f}, transfer {transfer:.12f}, gap {abs(fixed - transfer):.2e}")

print("\nleading constant A(5, L) and first-order p_c:")
for L in (1, 2, 4, 8):
    pred = pc_first_order_terms(5, L)
    print(f"  L={L}: A = {theorem_constant(5, L, 5 / 3):.4e}   p_c ~ {pred.value:.8f}")
