"""
Spatially correlated process variations
=======================================

Generates width and thickness maps at two correlation lengths, checks their
statistics and samples the deviations seen by each MZI of a 16x16 mesh.
"""

import numpy as np

from spnn_fpv import mesh
from spnn_fpv.varmap import VariationParams, correlation_length, generate_map

for l in (100.0, 1000.0):
    m = generate_map(VariationParams(sigma_w=5, sigma_t=2, corr_length=l, seed=1), 20 * l, 8 * l)
    print(f"l={l:6g} um  grid {m.shape}  sigma_w {m.width_dev.std():.2f} nm  sigma_t {m.thick_dev.std():.2f} nm"
          f"  fitted l {correlation_length(m.width_dev, m.mesh_size):.0f} um")

# place a 16x16 mesh and cover it with a die map
pl = mesh.place_oiu(16)
x0, y0, x1, y1 = pl.extent
print(f"mesh footprint {x1 - x0:.0f} x {y1 - y0:.0f} um, {len(pl)} MZIs")

for l in (100.0, 1000.0):
    vmap = generate_map(VariationParams(corr_length=l, seed=2), x1 - x0 + 20, y1 - y0 + 20, (x0 - 10, y0 - 10))
    v = mesh.sample_mzi_vars(pl, vmap)
    w = v.arms[..., 0]
    # arms of one MZI sit 15 um apart, so they track each other
    intra = np.mean(np.std(w, axis=1))
    print(f"l={l:6g}: spread across MZIs {w.mean(axis=1).std():.2f} nm, within an MZI {intra:.2f} nm")
