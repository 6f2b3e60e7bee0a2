#!/usr/bin/env python3
"""Every increasing translation-invariant set operator is a union of
erosions by its basis (and an intersection of dilations by the dual basis).

Demonstrated by brute force on the median filter over the 5-point cross:
enumerate the kernel, extract the minimal antichain, rebuild the operator
both ways, and compare all 32 configurations.
"""

from morphnn import representation as rep

window = rep.window_cross()
median = rep.median_table(window)

kernel = rep.kernel_enumerate(median)
basis = rep.minimal_basis(median)
print(f"window: {window}")
print(f"kernel size: {len(kernel)} of {2 ** len(window)} configurations")
print(f"basis size : {len(basis)} (minimal elements, an antichain: "
      f"{basis.is_antichain()})")
for s in basis.point_sets():
    print("  ", sorted(s))

sup = rep.reconstruct_sup_erosions(median, basis.masks)
print("\nsup of erosions equals the median:", sup.equals(median))

dual = rep.dual_table(median)
print("median is self-dual:", dual.equals(median))
dual_basis = rep.minimal_basis(dual)
inf = rep.reconstruct_inf_dilations(median, dual_basis.masks)
print("inf of dilations equals the median:", inf.equals(median))

# truncating the basis still brackets the operator from both sides
half = len(basis) // 2
lower, upper = rep.truncated_bounds(median, basis.masks[:half],
                                    dual_basis.masks[:half])
low_hits = int(lower.table.sum())
true_hits = int(median.table.sum())
up_hits = int(upper.table.sum())
print(f"\ntruncated sandwich with {half} elements per side: "
      f"{low_hits} <= {true_hits} <= {up_hits} accepted configurations")
