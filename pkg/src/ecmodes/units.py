"""Unit conventions.

Public quantities use eV for energies and frequencies, fs for time, nm for
lengths, e*nm for dipole moments and 1/m for projected Green's function
values. Internally hbar = 1 with energies in eV; the single conversion
factor to time is ``HBAR_EVFS``.

Every SI constant used anywhere in the package lives here.
"""
import numpy as np
from scipy import constants as _c

HBAR_EVFS = 0.6582119569  # eV * fs
E_CHARGE = _c.e
EPS0 = _c.epsilon_0
C_LIGHT = _c.c
HBAR_SI = _c.hbar

# J_i[eV] = (mu[e nm] * G_i)^2 with G_i^2 = COUPLING_SQ * omega_ev^2 * ImG[1/m]
COUPLING_SQ = E_CHARGE * 1e-18 * (E_CHARGE / HBAR_SI) ** 2 / (np.pi * EPS0 * C_LIGHT**2)

# E[V/m] = FIELD_PREFACTOR * omega_ev * sqrt(delta_ev) * ImG_pl / sqrt(ImG_ll)
FIELD_PREFACTOR = (E_CHARGE / HBAR_SI) * np.sqrt(E_CHARGE / (np.pi * EPS0 * C_LIGHT**2))

# mu[e nm] * E[V/m] -> eV
DIPOLE_FIELD_EV = 1e-9


def angular_frequency(omega_ev):
    """Angular frequency in rad/s for an energy in eV."""
    return np.asarray(omega_ev) * E_CHARGE / HBAR_SI


def wavenumber(omega_ev, n_bg=1.0):
    """Wavenumber in 1/nm inside a medium of refractive index ``n_bg``."""
    return n_bg * angular_frequency(omega_ev) / C_LIGHT * 1e-9


def coupling_squared(omega_ev, im_g):
    """G_i(omega)^2 in eV/(e nm)^2 from the projected Im G in 1/m."""
    return COUPLING_SQ * np.asarray(omega_ev) ** 2 * np.asarray(im_g)


def rate_to_per_fs(energy_ev):
    return np.asarray(energy_ev) / HBAR_EVFS


def free_space_decay_rate(omega_ev, mu_enm, n_bg=1.0):
    """Textbook spontaneous emission rate n w^3 mu^2 / (3 pi eps0 hbar c^3), in 1/fs."""
    w = angular_frequency(omega_ev)
    mu = mu_enm * E_CHARGE * 1e-9
    return n_bg * w**3 * mu**2 / (3 * np.pi * EPS0 * HBAR_SI * C_LIGHT**3) * 1e-15
