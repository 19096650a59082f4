"""Entropy bookkeeping at a three-pipe junction.

A trunk feeds two half-area branches through a mass-conserving linear
coupling. The ledger reports, per junction, the mass and energy slacks and the
area-weighted entropy trace sums. For a dissipative coupling the sum for
S(v) = v^2 stays non-positive.

    python3 demos/junction_entropy.py
"""
import numpy as np

from bgknet import (S_ENERGY, S_ONE, S_SQUARE, Junction, LinearCoupling, MaxwellianWall, NetworkTopology,
                    Pipe, PipeGrid, ReflectionWall, TraceLedger, VelocityGrid, derive_constants, simulate)

params = derive_constants(2.0, 1.0)
vgrid = VelocityGrid.uniform(96, -3.6, 3.6)
hull = (-3.0, 3.0)

pipes = [Pipe("in", PipeGrid(0.0, 1.0, 100), hull),
         Pipe("a", PipeGrid(0.0, 1.0, 100, area=0.5), hull),
         Pipe("b", PipeGrid(0.0, 1.0, 100, area=0.5), hull)]
split = LinearCoupling([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
junctions = [Junction("J", [("in", "plus"), ("a", "minus"), ("b", "minus")], split),
             Junction("in-", [("in", "minus")], ReflectionWall()),
             Junction("a+", [("a", "plus")], MaxwellianWall()),
             Junction("b+", [("b", "plus")], ReflectionWall())]
initial = {"in": [(0.0, 1.0, 1.0, 0.1)], "a": [(0.0, 1.0, 0.4, 0.0)], "b": [(0.0, 1.0, 0.25, -0.2)]}

ledger = TraceLedger(params, vgrid, (S_ONE, S_ENERGY, S_SQUARE))
simulate(NetworkTopology(pipes, junctions), params, vgrid, initial, 1e-2, n_steps=600, recorder=ledger)
summary = ledger.summary()

rows = [r for r in ledger.junction_rows if r.junction == "J"]
psi2 = np.array([r.psi_sum["v^2"] for r in rows])
print(f"steps recorded at J: {len(rows)}")
print(f"max |mass slack| at J:      {max(abs(r.mass_slack) for r in rows):.2e}")
print(f"max energy slack at J:      {max(r.energy_slack for r in rows):.2e}")
print(f"max psi_sum[v^2] at J:      {psi2.max():.2e}  (non-positive means dissipative)")
print(f"mass ledger residual:       {summary.mass_residual:.2e}")
print(f"energy: {summary.energy[0]:.6f} -> {summary.energy[-1]:.6f}")
print(f"max invariant violation:    {summary.max_violation:.2e}")
