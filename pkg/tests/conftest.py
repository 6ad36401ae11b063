import numpy as np
import pytest

from ecmodes import greens
from ecmodes.modes import Emitter, EmitterSet

from . import oracles


def lorentzian_amplitude(g, kappa, center, mu):
    """Peak Im G (1/m) giving a Lorentzian spectral density of total weight g^2."""
    return (g * g / (np.pi * kappa)) / float(oracles.coupling_ev(center, 1.0, mu)) ** 2


def single_lorentzian(g=0.05, kappa=0.05, center=2.0, mu=0.1, omega_e=None):
    amp = lorentzian_amplitude(g, kappa, center, mu)
    prov = greens.LorentzianModel(["e1"], [greens.LorentzianTerm(center, kappa, [[amp]])])
    em = EmitterSet([Emitter("e1", mu, center if omega_e is None else omega_e)])
    return prov, em


@pytest.fixture
def lorentzian_single():
    return single_lorentzian()


# every undriven propagation in the suite is checked against the norm budget
NORM_BUDGET = {"rk4": 1e-8, "eigen": 1e-12}
NORM_LOG = []


@pytest.fixture(autouse=True)
def _norm_guard(monkeypatch):
    from ecmodes import cli, drive, dynamics

    original = dynamics.propagate

    def checked(*args, **kwargs):
        series = original(*args, **kwargs)
        drift = series.norm_drift
        NORM_LOG.append((series.propagator, drift))
        assert drift <= NORM_BUDGET[series.propagator], f"{series.propagator} norm drift {drift:.3g}"
        return series

    for mod in (dynamics, drive, cli):
        monkeypatch.setattr(mod, "propagate", checked)
    yield


def pytest_collection_modifyitems(items):
    # acceptance runs last so the norm criterion sees every run of the suite
    items.sort(key=lambda item: item.module.__name__.endswith("test_acceptance"))
