import numpy as np
import pytest
from scipy.optimize import curve_fit

from ecmodes import drive, dynamics, greens, units
from ecmodes.drive import ClassicalPulse, TabulatedPulse, ground_state, propagate_driven
from ecmodes.dynamics import assemble, build_grid
from ecmodes.errors import StepSizeError
from ecmodes.modes import Emitter, EmitterSet

from . import oracles
from .conftest import single_lorentzian


def _bare_emitter(omega_e=2.0, mu=0.1):
    """Emitter whose Im G vanishes: no continuum slots at all."""
    prov = greens.LorentzianModel(["e1"], [greens.LorentzianTerm(2.0, 0.1, [[0.0]])])
    em = EmitterSet([Emitter("e1", mu, omega_e)])
    sys = assemble(prov, em, build_grid(1.0, 3.0, 20))
    assert sys.dimension == 1
    return sys


def _pi_field(mu, width):
    # pulse area mu E0 * width * sqrt(2 pi) / hbar = pi
    return np.pi * units.HBAR_EVFS / (width * np.sqrt(2 * np.pi) * mu * units.DIPOLE_FIELD_EV)


def test_pulse_rwa_choice_and_validation():
    assert ClassicalPulse(2.0, 0.0, 20.0, {"e1": 1.0}).use_rwa
    assert not ClassicalPulse(0.2, 0.0, 20.0, {"e1": 1.0}).use_rwa
    assert not ClassicalPulse(2.0, 0.0, 20.0, {"e1": 1.0}, rwa=False).use_rwa
    with pytest.raises(ValueError):
        ClassicalPulse(2.0, 0.0, 0.0, {"e1": 1.0})
    with pytest.raises(ValueError):
        ClassicalPulse(2.0, 0.0, 1.0, {"e1": np.inf})
    em = EmitterSet([Emitter("e1", 0.1, 2.0)])
    with pytest.raises(KeyError):
        ClassicalPulse(2.0, 0.0, 1.0, {"zz": 1.0}).peak(em)


def test_drive_term_units():
    em = EmitterSet([Emitter("e1", 0.1, 2.0), Emitter("e2", 0.2, 2.0)])
    p = ClassicalPulse(0.0, 0.0, 10.0, {"e1": 1e8})
    # 0.1 e nm * 1e8 V/m = 1e-2 eV
    assert np.allclose(drive.drive_term(p, em, 0.0), [1e-2, 0.0], rtol=1e-14)


def test_zero_pulse_is_bit_identical_to_undriven():
    prov, em = single_lorentzian()
    sys = assemble(prov, em, build_grid(1.0, 3.0, 200))
    init = dynamics.wigner_weisskopf_initial(sys)
    free = dynamics.propagate(sys, init, 100.0, n_samples=20)
    pulse = ClassicalPulse(2.0, 50.0, 10.0, {"e1": 0.0})
    driven = propagate_driven(sys, pulse, init, 100.0, n_samples=20)
    assert np.array_equal(driven.amplitudes[:, 1:], free.amplitudes)
    assert np.all(driven.ground_population == 0.0)
    assert driven.displaced_frame


def test_pi_pulse_inverts_bare_emitter():
    sys = _bare_emitter()
    E0 = _pi_field(0.1, 20.0)
    pulse = ClassicalPulse(2.0, 100.0, 20.0, {"e1": E0})
    s = propagate_driven(sys, pulse, ground_state(sys), 200.0, n_samples=20)
    assert abs(s.emitter_populations[-1, 0] - 1.0) <= 1e-6
    assert s.norm_drift <= 1e-8


@pytest.mark.parametrize("area_scale, detune", [(0.5, 0.0), (1.3, 0.01), (0.2, -0.02)])
def test_driven_two_level_matches_ode_oracle(area_scale, detune):
    sys = _bare_emitter(omega_e=2.0 + detune)
    E0 = area_scale * _pi_field(0.1, 20.0)
    pulse = ClassicalPulse(2.0, 100.0, 20.0, {"e1": E0})
    s = propagate_driven(sys, pulse, ground_state(sys), 200.0, n_samples=10)
    ref = oracles.two_level_driven(2.0 + detune, 2.0, 100.0, 20.0, 0.1 * E0 * 1e-9, 200.0)
    assert s.emitter_populations[-1, 0] == pytest.approx(ref, abs=1e-6)


def test_far_detuned_pulse_barely_excites():
    sys = _bare_emitter(omega_e=2.0)
    pulse = ClassicalPulse(3.0, 100.0, 20.0, {"e1": _pi_field(0.1, 20.0)})
    s = propagate_driven(sys, pulse, ground_state(sys), 200.0, n_samples=10)
    assert s.emitter_populations[-1, 0] <= 1e-4


def test_pulse_after_run_leaves_state_untouched():
    prov, em = single_lorentzian()
    sys = assemble(prov, em, build_grid(1.0, 3.0, 100))
    pulse = ClassicalPulse(2.0, 2000.0, 20.0, {"e1": 1e9})
    s = propagate_driven(sys, pulse, ground_state(sys), 100.0, n_samples=10)
    assert np.all(s.ground_population == 1.0)
    assert not np.any(s.amplitudes[:, 1:])


def test_weak_drive_is_linear():
    prov, em = single_lorentzian()
    sys = assemble(prov, em, build_grid(1.0, 3.0, 300))
    pops = []
    for E0 in (2e6, 1e6):
        pulse = ClassicalPulse(2.0, 60.0, 15.0, {"e1": E0})
        s = propagate_driven(sys, pulse, ground_state(sys), 120.0, n_samples=10)
        pops.append(1.0 - s.ground_population[-1])
    assert pops[1] == pytest.approx(pops[0] / 4, rel=0.05)


def test_full_carrier_drive_close_to_rwa_for_weak_pulse():
    sys = _bare_emitter()
    E0 = 0.3 * _pi_field(0.1, 20.0)
    rwa = propagate_driven(sys, ClassicalPulse(2.0, 100.0, 20.0, {"e1": E0}), ground_state(sys), 200.0, n_samples=10)
    full = propagate_driven(sys, ClassicalPulse(2.0, 100.0, 20.0, {"e1": E0}, rwa=False), ground_state(sys), 200.0,
                            n_samples=10)
    # Bloch-Siegert corrections are of order (Rabi frequency / carrier)
    assert full.emitter_populations[-1, 0] == pytest.approx(rwa.emitter_populations[-1, 0], abs=1e-3)


def test_tabulated_pulse_matches_gaussian():
    sys = _bare_emitter()
    E0 = 0.5 * _pi_field(0.1, 20.0)
    g = ClassicalPulse(2.0, 100.0, 20.0, {"e1": E0}, rwa=False)
    t = np.arange(0.0, 200.0, 0.01)
    tab = TabulatedPulse(t, {"e1": g.field(sys.emitters, t[:, None])[:, 0]})
    a = propagate_driven(sys, g, ground_state(sys), 200.0, n_samples=10)
    b = propagate_driven(sys, tab, ground_state(sys), 200.0, n_samples=10)
    assert b.emitter_populations[-1, 0] == pytest.approx(a.emitter_populations[-1, 0], abs=1e-4)


def test_load_pulse_csv(tmp_path):
    p = tmp_path / "pulse.csv"
    p.write_text("t_fs,e_field_vpm_e1\n0.0,0.0\n1.0,2.0\n2.0,0.0\n")
    pulse = drive.load_pulse_csv(p)
    em = EmitterSet([Emitter("e1", 0.1, 2.0)])
    assert pulse.field(em, 0.5).tolist() == [1.0]
    assert pulse.field(em, 5.0).tolist() == [0.0]
    with pytest.raises(ValueError):
        TabulatedPulse([0.0, 0.0], {"e1": [1.0, 1.0]})


def test_driven_step_too_large_raises():
    sys = _bare_emitter()
    pulse = ClassicalPulse(2.0, 100.0, 20.0, {"e1": _pi_field(0.1, 20.0)}, rwa=False)
    with pytest.raises(StepSizeError):
        propagate_driven(sys, pulse, ground_state(sys), 200.0, dt=0.5, n_samples=10)


def test_field_reconstruction_adds_classical_field():
    prov = greens.LorentzianModel(["e1", "p"], [greens.LorentzianTerm(2.0, 0.1, [[1e6, 5e5], [5e5, 1e6]])])
    em = EmitterSet([Emitter("e1", 0.1, 2.0)])
    sys = assemble(prov, em, build_grid(1.0, 3.0, 100))
    pulse = ClassicalPulse(2.0, 50.0, 10.0, {"e1": 0.0}, observation={"p": 1e6})
    s = propagate_driven(sys, pulse, ground_state(sys), 100.0, n_samples=10)
    f = dynamics.reconstruct_field(s, sys, prov, "p", classical=pulse.observation_field("p"))
    ref = np.array([pulse.observation_field("p")(t) for t in s.times])
    assert np.allclose(f.amplitude, ref, rtol=1e-14, atol=0)
    assert np.allclose(f.intensity, np.abs(ref) ** 2, rtol=1e-14, atol=0)


@pytest.mark.slow
def test_absorption_lineshape_width():
    # free-space emitter with a dipole scaled up so that hbar Gamma = 0.05 eV
    gamma = 0.05
    mu = 0.1 * np.sqrt(gamma / (oracles.HBAR_EVFS * oracles.free_space_rate(2.0, 0.1)))
    prov = greens.FreeSpace([greens.PointSpec("e1", [0, 0, 0])])
    sys = assemble(prov, EmitterSet([Emitter("e1", mu, 2.0)]), build_grid(1.5, 2.5, 600))
    E0 = 2e-4 / (mu * units.DIPOLE_FIELD_EV)  # weak: peak Rabi energy 2e-4 eV
    # the truncated continuum shifts the line, so centre the scan on the fitted peak
    detunings = np.linspace(-0.07, 0.05, 7)
    absorbed = []
    for d in detunings:
        pulse = ClassicalPulse(2.0 + d, 500.0, 150.0, {"e1": E0})
        s = propagate_driven(sys, pulse, ground_state(sys), 1100.0, n_samples=1)
        absorbed.append(1.0 - s.ground_population[-1])
    absorbed = np.array(absorbed)

    def lor(x, a, x0, hw):
        return a * hw**2 / ((x - x0) ** 2 + hw**2)

    (a, x0, hw), _ = curve_fit(lor, detunings, absorbed / absorbed.max(), p0=[1.0, -0.01, gamma / 2])
    assert 2 * abs(hw) == pytest.approx(gamma, rel=0.1)
