"""Two independent ways to evaluate a cluster map.

A random cluster is evaluated by composing slit maps and by integrating the
reverse Loewner flow driven by the same angles and capacities.  The ancestry
of each particle is printed as well.

    python3 demos/02_composition_vs_loewner.py
"""

import numpy as np

from alegrowth.cluster import ClusterState, map_deriv, map_point, parent_of
from alegrowth.loewner import DrivingFunction, reverse_flow, reverse_flow_deriv

rng = np.random.default_rng(4)
n = 25
angles = np.cumsum(rng.normal(0.0, 0.02, n))
caps = np.full(n, 2e-3)
state = ClusterState.from_arrays(angles, caps)
xi = DrivingFunction.from_cluster(state)
T = state.total_capacity

z = np.exp(rng.uniform(np.log(1.1), 1.0, 6) + 1j * rng.uniform(-np.pi, np.pi, 6))
w_comp, w_ode = map_point(state, z), reverse_flow(xi, T, z)
dw_comp, dw_ode = map_deriv(state, z), reverse_flow_deriv(xi, T, z)

print(f"{n} particles, total capacity {T:.4f}")
print("      |z|    composition             ODE                  rel. diff   deriv rel. diff")
for zi, a, b, da, db in zip(z, w_comp, w_ode, dw_comp, dw_ode):
    print(f"  {abs(zi):6.3f}  {a.real:+.6f}{a.imag:+.6f}i  {b.real:+.6f}{b.imag:+.6f}i"
          f"  {abs(a / b - 1):.1e}     {abs(da / db - 1):.1e}")

parents = [parent_of(state, j) for j in range(1, n + 1)]
print("\nparents:", parents)
print("every particle on its predecessor:", parents == list(range(n)))
