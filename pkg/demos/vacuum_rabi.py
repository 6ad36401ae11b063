"""
Vacuum Rabi oscillations in a lossy resonance
=============================================

One emitter at 2 eV couples to a single Lorentzian resonance (half-width
0.05 eV) strongly enough to split the line by 0.1 eV. The emitter
population oscillates while the excitation leaks into the continuum;
the discretised continuum reproduces the damped-Rabi closed form.

Run with ``python demos/vacuum_rabi.py``.
"""
import numpy as np
from scipy import constants

from ecmodes import dynamics, greens, units
from ecmodes.modes import Emitter, EmitterSet

###############################################################################
# Choose the resonance amplitude so that the spectral density integrates
# to g^2 with g = 0.05 eV. At the centre J = mu^2 * COUPLING_SQ * w^2 * Im G.
g, kappa, mu, w0 = 0.05, 0.05, 0.1, 2.0
peak_J = g**2 / (np.pi * kappa)
amplitude = peak_J / (mu**2 * units.COUPLING_SQ * w0**2)
provider = greens.LorentzianModel(["e1"], [greens.LorentzianTerm(w0, kappa, [[amplitude]])])
emitters = EmitterSet([Emitter("e1", mu, w0)])

###############################################################################
# Discretise the continuum on a uniform grid and start with e1 excited.
grid = dynamics.build_grid(0.5, 3.5, 1200)
system = dynamics.assemble(provider, emitters, grid)
series = dynamics.propagate(system, dynamics.wigner_weisskopf_initial(system), 200.0,
                            propagator="eigen", n_samples=40)

###############################################################################
# Compare with c_e(t) = exp(-kt/2) [cos(Wt) + k/(2W) sin(Wt)], W^2 = g^2 - k^2/4.
hbar = constants.hbar / constants.e * 1e15
tau = series.times / hbar
W = np.sqrt(g**2 - kappa**2 / 4)
exact = (np.exp(-kappa * tau / 2) * (np.cos(W * tau) + kappa / (2 * W) * np.sin(W * tau))) ** 2

print(" t (fs)   P_e (numeric)   P_e (closed form)")
for t, p, q in zip(series.times[::4], series.emitter_populations[::4, 0], exact[::4]):
    print(f"{t:7.1f}   {p:.6f}        {q:.6f}")
print("max deviation:", np.max(np.abs(series.emitter_populations[:, 0] - exact)))
