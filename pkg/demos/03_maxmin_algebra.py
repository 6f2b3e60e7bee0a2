#!/usr/bin/env python3
"""Max-min algebra of piecewise-linear functions.

A continuous PL function is a max of mins of its affine components; its
value is always one of those components (the selector property); and it
splits into a difference of two concave PL functions.
"""

import numpy as np

from morphnn.autodiff import make_rng
from morphnn.representation import PLFunction, dc_decompose, pl_eval

# |x| as a max of two affine pieces, then a clipped variant via min families
absval = PLFunction(slopes=np.array([[1.0], [-1.0]]),
                    intercepts=np.array([0.0, 0.0]),
                    families=((0,), (1,)))
clipped = PLFunction(slopes=np.array([[1.0], [-1.0], [0.0]]),
                     intercepts=np.array([0.0, 0.0, 2.0]),
                     families=((0, 2), (1, 2)))

xs = np.linspace(-4, 4, 9)[:, None]
print("x        :", xs.ravel())
print("|x|      :", pl_eval(absval, xs))
print("min(|x|,2):", pl_eval(clipped, xs))

# selector: each value is bitwise equal to one affine component
comp = clipped.components(xs)
hits = (pl_eval(clipped, xs)[:, None] == comp).any(axis=1)
print("\nselector property at every point:", bool(hits.all()))

# difference-of-concave split: f = part1 - part2, both concave
part1, part2 = dc_decompose(clipped)
recon = part1(xs) - part2(xs)
print("DC identity max error:", float(np.abs(recon - pl_eval(clipped, xs)).max()))

# random stress: the identity holds for any max-min arrangement
rng = make_rng(7)
slopes = rng.normal(size=(5, 2))
intercepts = rng.normal(size=5)
f = PLFunction(slopes, intercepts, families=((0, 1), (2, 3), (4,)))
pts = rng.normal(size=(1000, 2)) * 3
p1, p2 = dc_decompose(f)
err = float(np.abs(p1(pts) - p2(pts) - pl_eval(f, pts)).max())
print(f"random 2-d PL function at 1000 points: DC max error {err:.2e}")
