"""A closed ring of three pipes joined by three different couplings.

The junctions use a plain swap, a Maxwellian projection of the swap and the
degenerate convolution kernel of the swap. The ring is closed, so mass must
be conserved to roundoff while the energy decreases and the Riemann
invariants stay inside the initial hull.

    python3 demos/ring_stability.py
"""
from bgknet import (ConvolutionCoupling, Junction, LinearCoupling, MaxwellianProjection, NetworkTopology, Pipe,
                    PipeGrid, S_ENERGY, S_SQUARE, TraceLedger, VelocityGrid, derive_constants, simulate)

params = derive_constants(1.4, 1.0)
hull = (-7.0, 7.0)
vgrid = VelocityGrid.uniform(96, -8.4, 8.4)
swap = [[0, 1], [1, 0]]

pipes = [Pipe(k, PipeGrid(0.0, 1.0, 50), hull) for k in ("r1", "r2", "r3")]
junctions = [Junction("r1-r2", [("r1", "plus"), ("r2", "minus")], LinearCoupling(swap)),
             Junction("r2-r3", [("r2", "plus"), ("r3", "minus")], MaxwellianProjection(LinearCoupling(swap))),
             Junction("r3-r1", [("r3", "plus"), ("r1", "minus")],
                      ConvolutionCoupling.from_linear(swap, vgrid, (1.0, 1.0)))]
initial = {"r1": [(0.0, 1.0, 1.0, 0.5)],
           "r2": [(0.0, 0.5, 0.5, 0.0), (0.5, 1.0, 0.8, 0.1)],
           "r3": [(0.0, 1.0, 0.7, -0.3)]}

ledger = TraceLedger(params, vgrid, (S_ENERGY, S_SQUARE), every=50)
simulate(NetworkTopology(pipes, junctions), params, vgrid, initial, 1e-2, n_steps=1000, recorder=ledger)
s = ledger.summary()

print(f"{'t':>8} {'mass':>14} {'energy':>14}")
for t, m, e in zip(s.t, s.mass, s.energy):
    print(f"{t:8.4f} {m:14.10f} {e:14.10f}")
print(f"mass drift:             {s.mass_drift:.2e}")
print(f"largest energy increase in one step: {s.max_step_energy_increase:.2e}")
print(f"max invariant violation: {s.max_violation:.2e}")
for jid, (m, e) in s.junction_slacks.items():
    print(f"{jid:>6}: integrated mass slack {m:+.2e}, energy slack {e:+.2e}")
