"""Classical driving of the emitters.

An incoming classical pulse is removed from the quantum field by a
time-dependent displacement. What remains is a classical field
``E_cl,i(t)`` acting on each emitter; it is supplied here as input (it is
the field a classical solver finds at the emitter position, including any
enhancement by the structure). Field observables computed from a driven
run live in the displaced frame; the classical field at an observation
point must be added back (see :func:`ecmodes.dynamics.reconstruct_field`).

Driven states carry an extra slot for the global ground state.
"""
from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import units
from .dynamics import (
    DEFAULT_SAMPLES,
    NORM_ABORT,
    ObservableSeries,
    SingleExcitationState,
    _recurrence_check,
    _sample_times,
    _spectral_radius_bound,
    auto_time_step,
    propagate,
    reference_energy,
    rk4_run,
)
from .errors import StepSizeError
from .modes import EmitterSet

#: RWA is applied when the carrier exceeds this multiple of the envelope bandwidth
RWA_RATIO = 10.0


@dataclass(frozen=True)
class DisplacementRecord:
    """Marks outputs as displaced-frame quantities.

    Mode amplitudes ``<a_n>`` of the lab frame equal ``<a_n + alpha_n(t)>``
    in the displaced frame; only reconstructed fields at observation points
    with a supplied classical sample receive the correction.
    """

    displaced: bool = True
    note: str = "field observables: add the classical field E_cl(r, t) coherently to <E+>"


@dataclass(frozen=True)
class ClassicalPulse:
    """Gaussian pulse ``E(t) = E0 exp(-(t-t0)^2 / (2 w^2)) cos(wL t + phi)``.

    Parameters
    ----------
    carrier : float
        Carrier frequency in eV.
    center, width : float
        Envelope centre and standard deviation in fs.
    amplitudes : dict
        Peak projected field (V/m) per emitter name; emitters not listed see
        no field.
    phase : float
        Carrier phase in rad.
    observation : dict
        Peak projected classical field (V/m) per observation point, used to
        correct reconstructed fields.
    rwa : bool, optional
        Force the rotating-wave approximation on or off. By default it is
        used when ``carrier > 10 * hbar / width``.
    """

    carrier: float
    center: float
    width: float
    amplitudes: dict
    phase: float = 0.0
    observation: dict = field(default_factory=dict)
    rwa: bool | None = None

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("pulse width must be positive")
        if not self.carrier >= 0:
            raise ValueError("carrier frequency must be >= 0")
        for v in list(self.amplitudes.values()) + list(self.observation.values()):
            if not np.isfinite(v):
                raise ValueError("pulse amplitudes must be finite")

    @property
    def bandwidth(self):
        """Envelope bandwidth ``hbar / width`` in eV."""
        return units.HBAR_EVFS / self.width

    @property
    def use_rwa(self):
        if self.rwa is not None:
            return bool(self.rwa)
        return self.carrier > RWA_RATIO * self.bandwidth

    def envelope(self, t):
        return np.exp(-0.5 * ((t - self.center) / self.width) ** 2)

    def _phase(self, t):
        return self.carrier * t / units.HBAR_EVFS + self.phase

    def peak(self, emitters):
        emitters = EmitterSet(emitters)
        unknown = set(self.amplitudes) - set(emitters.names)
        if unknown:
            raise KeyError(f"pulse amplitudes for unknown emitters: {sorted(unknown)}")
        return np.array([self.amplitudes.get(n, 0.0) for n in emitters.names], dtype=float)

    def field(self, emitters, t):
        """Real projected field (V/m) at each emitter."""
        return self.peak(emitters) * self.envelope(t) * np.cos(self._phase(t))

    def positive_frequency(self, emitters, t):
        """Positive-frequency part ``E0/2 env(t) exp(-i(wL t + phi))`` per emitter."""
        return 0.5 * self.peak(emitters) * self.envelope(t) * np.exp(-1j * self._phase(t))

    def observation_field(self, point):
        """Callable ``t -> E+_cl(t)`` at an observation point (zero if unspecified)."""
        amp = float(self.observation.get(point, 0.0))

        def fn(t):
            return 0.5 * amp * self.envelope(t) * np.exp(-1j * self._phase(t))

        return fn

    def is_zero(self):
        return not any(self.amplitudes.values())

    def coupling(self, emitters, t):
        """Matrix element ``<e_i|H|g>`` in eV (lab frame)."""
        mu = EmitterSet(emitters).dipoles * units.DIPOLE_FIELD_EV
        if self.use_rwa:
            return -mu * self.positive_frequency(emitters, t)
        return -mu * self.field(emitters, t)

    def coupling_function(self, emitters):
        """Fast ``t -> coupling(emitters, t)`` with the emitter data resolved once."""
        emitters = EmitterSet(emitters)
        vec = -emitters.dipoles * units.DIPOLE_FIELD_EV * self.peak(emitters)
        c, w, wl, phi, hb = self.center, self.width, self.carrier, self.phase, units.HBAR_EVFS
        if self.use_rwa:
            vec = 0.5 * vec

            def fn(t):
                return vec * (math.exp(-0.5 * ((t - c) / w) ** 2) * cmath.exp(-1j * (wl * t / hb + phi)))
        else:
            def fn(t):
                return vec * (math.exp(-0.5 * ((t - c) / w) ** 2) * math.cos(wl * t / hb + phi))
        return fn

    def max_frequency(self):
        return self.carrier + 5 * self.bandwidth

    def peak_coupling(self, emitters):
        return float(np.max(EmitterSet(emitters).dipoles * units.DIPOLE_FIELD_EV * np.abs(self.peak(emitters))))

    def time_scale(self):
        return self.width


class TabulatedPulse:
    """Real field samples per emitter, linearly interpolated, zero outside.

    The full carrier is kept (no rotating-wave approximation).
    """

    use_rwa = False

    def __init__(self, times, fields: dict, observation: dict | None = None):
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("pulse times must be strictly increasing")
        self.fields = {k: np.asarray(v, dtype=float) for k, v in fields.items()}
        self.observation = {k: np.asarray(v, dtype=float) for k, v in (observation or {}).items()}
        for v in list(self.fields.values()) + list(self.observation.values()):
            if v.shape != self.times.shape or not np.all(np.isfinite(v)):
                raise ValueError("pulse samples must be finite and match the time column")

    def field(self, emitters, t):
        emitters = EmitterSet(emitters)
        return np.array([
            np.interp(t, self.times, self.fields[n], left=0.0, right=0.0) if n in self.fields else 0.0
            for n in emitters.names
        ])

    def coupling(self, emitters, t):
        return -EmitterSet(emitters).dipoles * units.DIPOLE_FIELD_EV * self.field(emitters, t)

    def coupling_function(self, emitters):
        emitters = EmitterSet(emitters)
        mu = -emitters.dipoles * units.DIPOLE_FIELD_EV
        table = np.array([
            self.fields[n] if n in self.fields else np.zeros_like(self.times) for n in emitters.names
        ])
        times = self.times

        def fn(t):
            if t < times[0] or t > times[-1]:
                return np.zeros(len(mu))
            k = min(int(np.searchsorted(times, t, side="right")) - 1, times.size - 2)
            f = (t - times[k]) / (times[k + 1] - times[k])
            return mu * ((1 - f) * table[:, k] + f * table[:, k + 1])

        return fn

    def observation_field(self, point):
        if point not in self.observation:
            return lambda t: 0.0
        samples = self.observation[point]
        # real samples: the positive-frequency part is not separable, report the full field
        return lambda t: complex(np.interp(t, self.times, samples, left=0.0, right=0.0))

    def is_zero(self):
        return not any(np.any(v) for v in self.fields.values())

    def max_frequency(self, power_fraction=1 - 1e-10):
        """Energy (eV) below which ``power_fraction`` of the field spectrum lies."""
        dt = float(np.min(np.diff(self.times)))
        n = min(int(np.ceil((self.times[-1] - self.times[0]) / dt)) + 1, 2**20)
        grid = np.linspace(self.times[0], self.times[-1], n)
        step = grid[1] - grid[0]
        power = np.zeros(n // 2 + 1)
        for v in self.fields.values():
            power += np.abs(np.fft.rfft(np.interp(grid, self.times, v))) ** 2
        if not power.any():
            return 0.0
        cum = np.cumsum(power) / power.sum()
        k = int(np.searchsorted(cum, power_fraction))
        freq = np.fft.rfftfreq(n, step)[min(k, power.size - 1)]
        return 2 * np.pi * units.HBAR_EVFS * freq

    def peak_coupling(self, emitters):
        emitters = EmitterSet(emitters)
        peaks = [np.abs(self.fields[n]).max() if n in self.fields else 0.0 for n in emitters.names]
        return float(np.max(emitters.dipoles * units.DIPOLE_FIELD_EV * np.array(peaks)))

    def time_scale(self):
        return float(np.min(np.diff(self.times))) * 20


def load_pulse_csv(path):
    """Read ``t_fs,<emitter>,...`` (V/m) into a :class:`TabulatedPulse`.

    Columns may be named ``<emitter>`` or ``e_field_vpm_<emitter>``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    header = [h.strip() for h in rows[0]]
    if header[0] != "t_fs":
        raise ValueError("first pulse column must be 't_fs'")
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    names = [h.removeprefix("e_field_vpm_") for h in header[1:]]
    return TabulatedPulse(data[:, 0], {n: data[:, c + 1] for c, n in enumerate(names)})


def drive_term(pulse, emitters, t):
    """Classical drive energy ``mu_i E_cl,i(t)`` per emitter, in eV."""
    return EmitterSet(emitters).dipoles * units.DIPOLE_FIELD_EV * pulse.field(emitters, t)


def ground_state(system) -> SingleExcitationState:
    """Global ground state in the augmented (ground + single excitation) space."""
    c = np.zeros(system.dimension + 1, dtype=complex)
    c[0] = 1.0
    return SingleExcitationState(c, 0.0, ground=True)


def propagate_driven(system, pulse, state, t_end, dt=None, n_samples=DEFAULT_SAMPLES) -> ObservableSeries:
    """RK4 propagation including the classical drive on the emitters.

    ``state`` may lack the ground slot, in which case a zero ground
    amplitude is prepended. A pulse that is identically zero delegates to
    the undriven propagator, so the emitter and mode amplitudes match it
    exactly. Excitation number is not conserved; the ground population is
    part of the output.
    """
    state = state.with_ground(0.0)
    if state.amplitudes.size != system.dimension + 1:
        raise ValueError("state does not match the system dimension")
    if dt is not None and not dt > 0:
        raise ValueError("dt must be positive")

    if pulse is None or pulse.is_zero():
        inner = SingleExcitationState(state.amplitudes[1:], state.t)
        # the undriven propagator requires a nonzero state only for its norm check
        if np.any(inner.amplitudes):
            series = propagate(system, inner, t_end, dt=dt, n_samples=n_samples)
            amps = series.amplitudes
        else:
            times = _sample_times(state.t, t_end, n_samples)
            amps = np.zeros((times.size, system.dimension), dtype=complex)
            series = ObservableSeries(system, times, amps)
        g = np.full((series.times.size, 1), state.amplitudes[0])
        return ObservableSeries(
            system, series.times, np.hstack([g, amps]), ground=True, displaced_frame=True,
            dt=series.dt, drive=pulse,
        )

    times = _sample_times(state.t, t_end, n_samples)
    duration = t_end - state.t
    _recurrence_check(system, duration)
    n = system.n_emitters
    shift = reference_energy(system)
    H = system.hamiltonian(shift)
    emitters = system.emitters
    if dt is None:
        radius = _spectral_radius_bound(system, shift) + pulse.peak_coupling(emitters)
        if pulse.use_rwa:
            radius += abs(pulse.carrier - shift) + 5 * pulse.bandwidth
        else:
            radius += pulse.max_frequency() + shift
        dt = min(auto_time_step(radius, duration), pulse.time_scale() / 20)
    scale = -1j / units.HBAR_EVFS
    t0 = state.t

    coupling = pulse.coupling_function(emitters)
    has_modes = system.slot_mode.size > 0
    diag0 = complex(system.diagonal[0] - shift) if not has_modes and n == 1 else None

    def apply(t, c):
        out = np.empty_like(c)
        out[1:] = H @ c[1:] if diag0 is None else diag0 * c[1:]
        # rotating frame of the excited manifold at the reference energy
        h = coupling(t) * cmath.exp(1j * shift * (t - t0) / units.HBAR_EVFS)
        out[0] = np.conj(h) @ c[1 : n + 1]
        out[1 : n + 1] += h * c[0]
        return scale * out

    amps = rk4_run(apply, state.amplitudes.astype(complex), times, dt)
    amps[:, 1:] *= np.exp(-1j * shift * (times - t0) / units.HBAR_EVFS)[:, None]
    series = ObservableSeries(system, times, amps, ground=True, displaced_frame=True, dt=dt, drive=pulse)
    drift = series.norm_drift
    if drift > NORM_ABORT:
        raise StepSizeError(f"norm drift {drift:.3g} exceeds {NORM_ABORT}; use a smaller dt (was {dt})")
    return series
