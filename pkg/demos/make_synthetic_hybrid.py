"""
Synthetic "hybrid" Green's function data
========================================

Writes ``src/ecmodes/data/synthetic_hybrid_greens.csv``: a SYNTHETIC
Lorentzian mixture with one broad resonance concentrated on emitter e1
(a gap-plasmon stand-in) and several narrow resonances shared by e1, e2
and the observation point p3 (stand-ins for dielectric cavity modes).
Each resonance contributes ``f(omega) u u^T``, so the 3x3 matrix is
positive semidefinite at every frequency. The e1-e2 element changes sign
across the window.

This is NOT solver output for any real structure; it only exercises the
pipeline on data with sharp multi-peak structure.
"""
from pathlib import Path

import numpy as np

from ecmodes import greens

NAMES = ["e1", "e2", "p3"]

# (center eV, half-width eV, amplitude vector sqrt(1/m) over e1, e2, p3)
RESONANCES = [
    (2.05, 0.12, [3.5e6, 2.0e4, 1.5e4]),
    (1.96, 0.006, [4.0e5, 1.2e4, 2.0e4]),
    (2.00, 0.004, [-3.0e5, 1.5e4, -1.0e4]),
    (2.04, 0.005, [2.5e5, -1.0e4, 1.8e4]),
    (1.90, 0.008, [3.0e5, 0.8e4, 1.2e4]),
    (2.11, 0.007, [-2.0e5, 1.0e4, 1.5e4]),
]


def synthetic_provider():
    terms = [
        greens.LorentzianTerm(w0, k, np.outer(u, u)) for w0, k, u in RESONANCES
    ]
    return greens.LorentzianModel(NAMES, terms)


def main(path=None):
    path = Path(path or Path(__file__).resolve().parents[1] / "src/ecmodes/data/synthetic_hybrid_greens.csv")
    omega = np.round(np.linspace(1.0, 3.0, 2001), 6)
    comment = (
        "SYNTHETIC data: Lorentzian mixture mimicking a hybrid plasmonic/dielectric\n"
        "structure. Not computed by an EM solver. Regenerate with demos/make_synthetic_hybrid.py.\n"
        "Columns: n_a . Im G(r_a, r_b, omega) . n_b in 1/m; points e1, e2 (emitters), p3 (observation)."
    )
    with open(path, "w", encoding="utf-8") as fh:
        greens.write_tabulated(fh, synthetic_provider(), omega, comment)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
