"""A walk around the single slit map.

Shows the capacity/length dictionary, where the boundary lands, how small the
derivative gets near the tip, and that the map factors through the upper
half-plane.

    python3 demos/01_slit_map_tour.py
"""

import numpy as np

from alegrowth.slitgeom import (
    LogPolarPoint,
    base_angle,
    length_from_capacity,
    mobius_to_disk,
    mobius_to_halfplane,
    scaled_halfplane_slit,
    slit_map,
    slit_map_deriv,
)

print("capacity      length d      base half-angle")
for t in (1e-8, 1e-4, 1e-2, np.log(2), 1.0):
    print(f"{t:10.3g}  {length_from_capacity(t):12.6g}  {base_angle(t):12.6g}")

t = 0.01
d, b = length_from_capacity(t), base_angle(t)
print(f"\nt = {t}: slit (1, {1 + d:.6f}], base arc |theta| < {b:.6f}")

# the base arc folds onto the slit; the rest of the circle stays on the circle
for th in (0.0, 0.5 * b, 0.999 * b, 1.5 * b, 2.0):
    w = slit_map(t, LogPolarPoint(0.0, th))
    print(f"  theta = {th:8.5f} -> {w.real:+.6f}{w.imag:+.6f}i   |w| = {abs(w):.6f}")

print("\n|f'| at radius 1 + sigma above the tip preimage")
for sig in (1e-2, 1e-4, 1e-6, 1e-8):
    print(f"  sigma = {sig:7.0e}: {abs(slit_map_deriv(t, LogPolarPoint(np.log1p(sig), 0.0))):.4e}")

rng = np.random.default_rng(0)
z = np.exp(rng.uniform(0.01, 1.0, 8) + 1j * rng.uniform(-np.pi, np.pi, 8))
err = np.max(np.abs(slit_map(t, z) - mobius_to_disk(scaled_halfplane_slit(d, mobius_to_halfplane(z)))))
print(f"\nhalf-plane factorisation, max deviation on 8 random points: {err:.2e}")
