#!/usr/bin/env python3
"""Dilation, erosion, and the lattice identities that connect them.

Walks a small 1-d signal through the basic operators and prints each
identity next to the arrays that witness it.
"""

import numpy as np

from morphnn import autodiff as ad
from morphnn.morphops import (PoolSpec, StructuringFunction, dilate, erode,
                              max_pool, min_pool, relu)

f = np.array([0.0, 3.0, -1.0, 2.0, 5.0, -4.0, 1.0, 0.0])
g = StructuringFunction([(-1,), (0,), (1,)], weights=[0.0, 1.0, 0.0])

print("signal f      :", f)
print("dilate(f, g)  :", dilate(f, g).data)
print("erode(f, g)   :", erode(f, g).data)

# erosion is the negation-dual of dilation by the reflected weights
dual = ad.neg(dilate(ad.neg(ad.Tensor(f)), g.transpose())).data
print("\n-dilate(-f, g~) :", dual, "(equals erode)")
assert np.array_equal(dual, erode(f, g).data)

# the adjunction: dilate(f, g) <= h exactly when f <= erode(h, g)
rng = ad.make_rng(1)
for h in (dilate(f, g).data + 0.5, rng.normal(size=f.shape) * 3):
    left = bool(np.all(dilate(f, g).data <= h))
    right = bool(np.all(f <= erode(h, g).data))
    print(f"\nadjunction: dilate(f,g) <= h is {left}, "
          f"f <= erode(h,g) is {right}")
    assert left == right

# max-pooling is a strided dilation by a flat window; min-pooling its dual
pool = PoolSpec((2,), (2,))
flat = StructuringFunction.pool_window((2,))
print("\nmax_pool(f)   :", max_pool(f, pool).data)
print("min_pool(f)   :", min_pool(f, pool).data)
print("relu(f)       :", relu(f).data)

# a weighted structuring function is trainable: gradients reach its weights
w = ad.Tensor(np.zeros(3), requires_grad=True)
out = dilate(ad.Tensor(f), StructuringFunction([(-1,), (0,), (1,)], weights=w))
out.sum().backward()
print("\nweight gradient of sum(dilate):", w.grad,
      "(counts how often each offset won)")
