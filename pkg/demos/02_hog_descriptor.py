"""Poke at the gradient-histogram descriptor used for every 24x24 window.

The layout: 6x6 cells of 4px, 2x2-cell blocks overlapping at one-cell
stride (5x5 blocks), 9 unsigned orientation bins, L2 block normalization.
That gives 5*5*36 = 900 dimensions. A few probe patches show how gradient
structure lands in the orientation bins.
"""

import numpy as np

from multikernel import HogConfig, compute_hog, hog_dim

cfg = HogConfig()
print(f"descriptor length: {hog_dim(cfg)}")

flat = np.full((24, 24), 0.5)
print("constant patch  ->  nonzero entries:", np.count_nonzero(compute_hog(flat, cfg)))

edge = np.zeros((24, 24))
edge[:, 12:] = 1.0
desc = compute_hog(edge, cfg)
per_bin = desc.reshape(-1, cfg.bins).sum(axis=0)
print("vertical step edge, mass per orientation bin:")
for b, mass in enumerate(per_bin):
    bar = "#" * int(40 * mass / per_bin.max()) if per_bin.max() > 0 else ""
    print(f"  bin {b} ({b * 20:3d} deg): {mass:7.3f} {bar}")

diag = np.add.outer(np.arange(24), np.arange(24)) / 46.0
per_bin = compute_hog(diag, cfg).reshape(-1, cfg.bins).sum(axis=0)
print("diagonal ramp, dominant bin:", int(per_bin.argmax()),
      "(45 deg gradient straddles bins 2 and 3)")

rng = np.random.default_rng(0)
noisy = rng.random((24, 24))
d = compute_hog(noisy, cfg)
print(f"random patch: entries within [0, 1]: {bool((d >= 0).all() and (d <= 1).all())}")
