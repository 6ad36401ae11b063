"""Emitter-centred mode quantisation for multi-emitter nanophotonics."""
__version__ = "0.1.0"

from .drive import ClassicalPulse, TabulatedPulse, propagate_driven
from .dynamics import (
    FrequencyGrid,
    assemble,
    build_grid,
    continuum_population_density,
    propagate,
    reconstruct_field,
    wigner_weisskopf_initial,
)
from .greens import FreeSpace, LorentzianModel, LorentzianTerm, PointSpec, Tabulated, load_tabulated
from .modes import Emitter, EmitterSet, mode_basis, orthogonalize
