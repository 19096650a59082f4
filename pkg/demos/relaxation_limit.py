"""Relaxation limit: the kinetic solution approaches the isentropic Euler solution.

A Riemann problem in a closed pipe is run for a sweep of relaxation times and
compared in L1 with the kinetic flux-vector splitting reference on the same
mesh. The distance should shrink as epsilon goes to zero.

    python3 demos/relaxation_limit.py
"""
import numpy as np

from bgknet import (Junction, MacroField, NetworkTopology, Pipe, PipeGrid, ReflectionWall, VelocityGrid,
                    derive_constants, macro_solve, simulate)
from bgknet.diagnostics import l1_distance
from bgknet.pipeline import field_moments

params = derive_constants(2.0, 1.0)
vgrid = VelocityGrid.uniform(128, -3.6, 3.6)
grid = PipeGrid(0.0, 1.0, 200)
blocks = [(0.0, 0.5, 1.0, 0.0), (0.5, 1.0, 0.25, 0.0)]
t_end = 0.15

topology = NetworkTopology(
    [Pipe("p", grid, (-3.0, 3.0))],
    [Junction("left", [("p", "minus")], ReflectionWall()), Junction("right", [("p", "plus")], ReflectionWall())])

ref = macro_solve(params, vgrid, MacroField.from_blocks(grid, blocks), t_end)

print(f"{'eps':>8} {'L1 rho':>12} {'L1 rho u':>12}")
for eps in (1e-1, 3e-2, 1e-2, 3e-3, 1e-3):
    state = simulate(topology, params, vgrid, {"p": blocks}, eps, t_end=t_end)
    rho, u = field_moments(vgrid, state.fields["p"])
    d_rho, d_q = l1_distance(grid.dx, rho, rho * u, ref.rho, ref.q)
    print(f"{eps:8.0e} {d_rho:12.3e} {d_q:12.3e}")

# the reference itself carries the mesh error: halving dx shows its size
fine = macro_solve(params, vgrid, MacroField.from_blocks(PipeGrid(0.0, 1.0, 400), blocks), t_end)
d_rho, _ = l1_distance(grid.dx, ref.rho, ref.q, fine.rho, fine.q)
print(f"reference mesh error (200 vs 400 cells): {d_rho:.3e}")
print(f"density range of the reference: [{np.min(ref.rho):.3f}, {np.max(ref.rho):.3f}]")
