"""Single-excitation dynamics with discretised emitter-centred continua.

The continua ``C_j(omega)`` are sampled on a frequency grid; node ``k`` of
continuum ``j`` becomes one discrete mode with coupling
``mu_i g_ij(omega_k) sqrt(delta_k)`` to emitter ``i``. The resulting
Hamiltonian (rotating-wave approximation, hbar = 1, energies in eV) is
real symmetric with an arrowhead structure: emitter rows couple to all
modes, modes only to emitters.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import units
from .errors import ConfigurationError, FrequencyRangeError, StepSizeError
from .modes import (
    CHOLESKY,
    DEFAULT_EPS_RANK,
    EmitterSet,
    ModeBasisAtFrequency,
    mode_bases,
)

UNIFORM = "uniform"
GAUSS_LEGENDRE = "gauss-legendre"

RK4 = "rk4"
EIGEN = "eigen"
EIGEN_MAX_DIM = 20000

DEFAULT_SAMPLES = 200
#: norm drift that aborts a propagation
NORM_ABORT = 1e-6
#: norm drift targeted when choosing the RK4 step automatically
NORM_TARGET = 1e-10
#: upper bound on |H| dt / hbar for RK4 (0.02 of a period)
MAX_PHASE_STEP = 0.02 * 2 * np.pi
LEAKAGE_WIDTHS = 20


class GridWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str
    omega_min: float
    omega_max: float

    @property
    def bounds(self):
        return self.omega_min, self.omega_max

    @property
    def max_spacing(self):
        return float(self.weights.max())

    @property
    def recurrence_time(self):
        """Revival time ``2 pi hbar / max(delta)`` of the discretised continuum, fs."""
        return 2 * np.pi * units.HBAR_EVFS / self.max_spacing


def build_grid(omega_min, omega_max, n_nodes, scheme=UNIFORM, emitters=None) -> FrequencyGrid:
    """Frequency nodes and quadrature weights on ``[omega_min, omega_max]``.

    ``uniform`` is the midpoint rule; ``gauss-legendre`` uses Legendre
    nodes mapped to the window. With ``emitters`` given, a window that
    contains none of their transition frequencies is rejected.
    """
    if not 0 < omega_min < omega_max:
        raise ConfigurationError(f"need 0 < omega_min < omega_max, got {omega_min}, {omega_max}")
    if int(n_nodes) != n_nodes or n_nodes < 2:
        raise ConfigurationError(f"need at least 2 grid nodes, got {n_nodes}")
    n_nodes = int(n_nodes)
    if emitters is not None:
        freqs = EmitterSet(emitters).frequencies
        if not np.any((freqs >= omega_min) & (freqs <= omega_max)):
            raise ConfigurationError(
                f"grid window [{omega_min}, {omega_max}] eV excludes every emitter frequency"
            )
    width = omega_max - omega_min
    if scheme == UNIFORM:
        d = width / n_nodes
        nodes = omega_min + d * (np.arange(n_nodes) + 0.5)
        weights = np.full(n_nodes, d)
    elif scheme == GAUSS_LEGENDRE:
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        nodes = omega_min + 0.5 * width * (x + 1)
        weights = 0.5 * width * w
    else:
        raise ConfigurationError(f"unknown grid scheme {scheme!r}")
    return FrequencyGrid(nodes, weights, scheme, float(omega_min), float(omega_max))


@dataclass(frozen=True)
class DiscretizedSystem:
    """Assembled single-excitation problem.

    State vectors hold the ``N`` emitter amplitudes first, then one entry
    per discrete mode; ``slot_mode[s]`` and ``slot_node[s]`` give the
    continuum index ``j`` and grid node ``k`` of mode slot ``s``.
    """

    emitters: EmitterSet
    grid: FrequencyGrid
    bases: list
    couplings: np.ndarray  # (N, n_slots), eV
    slot_mode: np.ndarray
    slot_node: np.ndarray
    method: str
    eps_rank: float

    @property
    def n_emitters(self):
        return len(self.emitters)

    @property
    def dimension(self):
        return self.n_emitters + self.slot_mode.size

    @property
    def ranks(self):
        return np.array([b.rank for b in self.bases])

    @property
    def max_rank(self):
        return int(self.ranks.max()) if self.bases else 0

    @property
    def diagonal(self):
        return np.concatenate([self.emitters.frequencies, self.grid.nodes[self.slot_node]])

    def hamiltonian(self, shift=0.0):
        """Sparse (CSR) Hamiltonian in eV, optionally minus ``shift`` on the diagonal."""
        n = self.n_emitters
        d = self.dimension
        rows, cols = np.nonzero(self.couplings)
        vals = -self.couplings[rows, cols]
        cols = cols + n
        H = sp.coo_matrix(
            (
                np.concatenate([self.diagonal - shift, vals, vals]),
                (
                    np.concatenate([np.arange(d), rows, cols]),
                    np.concatenate([np.arange(d), cols, rows]),
                ),
            ),
            shape=(d, d),
        )
        return H.tocsr()

    def dense_hamiltonian(self, shift=0.0):
        n = self.n_emitters
        H = np.diag(self.diagonal - shift)
        H[:n, n:] = -self.couplings
        H[n:, :n] = -self.couplings.T
        return H

    def rank_map(self):
        """Run-length summary ``[(omega_start, omega_end, rank), ...]``."""
        out = []
        for w, r in zip(self.grid.nodes, self.ranks):
            if out and out[-1][2] == r:
                out[-1][1] = float(w)
            else:
                out.append([float(w), float(w), int(r)])
        return [tuple(x) for x in out]


def _leakage_check(provider, emitters, grid):
    widths = list(provider.resonance_widths())
    for e in emitters:
        try:
            diag = provider.projected_im_g(e.point, e.point, e.frequency)
        except FrequencyRangeError:
            continue
        J = e.dipole**2 * units.coupling_squared(e.frequency, max(float(diag), 0.0))
        widths.append(2 * np.pi * J)
    w = max(widths) if widths else 0.0
    freqs = emitters.frequencies
    need_lo = freqs.min() - LEAKAGE_WIDTHS * w
    need_hi = freqs.max() + LEAKAGE_WIDTHS * w
    lo, hi = grid.bounds
    if lo > need_lo or hi < need_hi:
        warnings.warn(
            f"grid window [{lo}, {hi}] eV does not cover [{need_lo:.6g}, {need_hi:.6g}] eV "
            f"(emitter frequencies +- {LEAKAGE_WIDTHS} estimated widths); expect spectral leakage",
            GridWarning,
            stacklevel=3,
        )


def assemble(provider, emitters, grid: FrequencyGrid, method=CHOLESKY, eps_rank=DEFAULT_EPS_RANK) -> DiscretizedSystem:
    """Discretise the emitter-centred continua on ``grid``."""
    emitters = EmitterSet(emitters)
    _leakage_check(provider, emitters, grid)
    bases = mode_bases(provider, emitters, grid.nodes, method, eps_rank)
    mu = emitters.dipoles
    blocks, slot_mode, slot_node = [], [], []
    for k, b in enumerate(bases):
        if b.rank == 0:
            continue
        blocks.append(mu[:, None] * b.g * np.sqrt(grid.weights[k]))
        slot_mode.append(np.arange(b.rank))
        slot_node.append(np.full(b.rank, k))
    n = len(emitters)
    couplings = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return DiscretizedSystem(
        emitters=emitters,
        grid=grid,
        bases=bases,
        couplings=couplings,
        slot_mode=np.concatenate(slot_mode).astype(int) if slot_mode else np.zeros(0, int),
        slot_node=np.concatenate(slot_node).astype(int) if slot_node else np.zeros(0, int),
        method=method,
        eps_rank=eps_rank,
    )


@dataclass
class SingleExcitationState:
    """Amplitudes over emitters and discrete modes at time ``t`` (fs).

    With ``ground=True`` the vector starts with the amplitude of the
    global ground state (used for driven runs).
    """

    amplitudes: np.ndarray
    t: float = 0.0
    ground: bool = False

    @property
    def offset(self):
        return 1 if self.ground else 0

    @property
    def norm(self):
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def with_ground(self, amplitude=0.0):
        if self.ground:
            return self
        return SingleExcitationState(np.concatenate([[amplitude], self.amplitudes]).astype(complex), self.t, True)


def wigner_weisskopf_initial(system: DiscretizedSystem, emitter=0) -> SingleExcitationState:
    """Emitter ``emitter`` excited, all other emitters and the field empty."""
    i = system.emitters.index(emitter)
    c = np.zeros(system.dimension, dtype=complex)
    c[i] = 1.0
    return SingleExcitationState(c)


def emitter_superposition(system: DiscretizedSystem, coefficients) -> SingleExcitationState:
    """Normalised superposition of single-emitter excitations."""
    coeff = np.asarray(coefficients, dtype=complex)
    if coeff.shape != (system.n_emitters,):
        raise ValueError("need one coefficient per emitter")
    c = np.zeros(system.dimension, dtype=complex)
    c[: system.n_emitters] = coeff / np.linalg.norm(coeff)
    return SingleExcitationState(c)


@dataclass
class ObservableSeries:
    """Sampled amplitudes of a propagation run."""

    system: DiscretizedSystem
    times: np.ndarray
    amplitudes: np.ndarray  # (n_samples, offset + dimension)
    ground: bool = False
    displaced_frame: bool = False
    propagator: str = RK4
    dt: float | None = None
    drive: object = None

    @property
    def offset(self):
        return 1 if self.ground else 0

    @property
    def norm(self):
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    @property
    def norm_drift(self):
        n = self.norm
        return float(np.max(np.abs(n - n[0])))

    @property
    def emitter_populations(self):
        o = self.offset
        return np.abs(self.amplitudes[:, o : o + self.system.n_emitters]) ** 2

    @property
    def ground_population(self):
        if not self.ground:
            return np.zeros(self.times.size)
        return np.abs(self.amplitudes[:, 0]) ** 2

    @property
    def mode_amplitudes(self):
        return self.amplitudes[:, self.offset + self.system.n_emitters :]

    def state(self, k=-1) -> SingleExcitationState:
        return SingleExcitationState(self.amplitudes[k].copy(), float(self.times[k]), self.ground)

    def continuum_density(self, k=-1):
        """Continuum population density at sample ``k``; see :func:`continuum_population_density`."""
        return continuum_population_density(self.state(k), self.system)

    def sample_index(self, t):
        return int(np.argmin(np.abs(self.times - t)))


def continuum_population_density(state: SingleExcitationState, system: DiscretizedSystem):
    """``|c_jk|^2 / delta_k`` in 1/eV, shape ``(max_rank, n_nodes)``.

    Entries for continua absent at a node (rank below ``j + 1``) are zero.
    Individual continua depend on the orthogonalisation; only the sum over
    ``j`` is basis independent.
    """
    amps = state.amplitudes[state.offset + system.n_emitters :]
    out = np.zeros((max(system.max_rank, 1), system.grid.nodes.size))
    out[system.slot_mode, system.slot_node] = np.abs(amps) ** 2 / system.grid.weights[system.slot_node]
    return out


# -- propagation ---------------------------------------------------------------

def _spectral_radius_bound(system, shift):
    """Upper bound on ``|H - shift|``: diagonal part plus ``||couplings||_F`` (Weyl)."""
    diag = np.abs(system.diagonal - shift)
    return float(diag.max() + np.linalg.norm(system.couplings))


def reference_energy(system):
    d = system.diagonal
    return 0.5 * (d.min() + d.max())


def auto_time_step(radius, duration, target=NORM_TARGET):
    """RK4 step (fs) whose norm loss over ``duration`` stays near ``target``.

    Per step the RK4 amplification of an oscillation with phase step ``z``
    is ``1 - z^6/72`` to leading order.
    """
    if radius <= 0:
        return max(duration, 1e-3)
    phase_total = duration * radius / units.HBAR_EVFS
    z = (72 * target / max(phase_total, 1e-300)) ** 0.2
    z = min(z, MAX_PHASE_STEP)
    return z * units.HBAR_EVFS / radius


def _sample_times(t0, t_end, n_samples):
    if not t_end > t0:
        raise ValueError("t_end must exceed the state's time")
    return np.linspace(t0, t_end, int(n_samples) + 1)


def rk4_run(apply, c0, times, dt):
    """Integrate ``dc/dt = apply(t, c)`` with fixed-step RK4.

    The step is shrunk so every interval between consecutive ``times`` is
    an integer number of steps. Returns the amplitudes at ``times``.
    """
    out = np.empty((times.size, c0.size), dtype=complex)
    out[0] = c = c0.astype(complex)
    for s in range(1, times.size):
        ta, tb = times[s - 1], times[s]
        n = max(1, math.ceil((tb - ta) / dt - 1e-9))
        h = (tb - ta) / n
        for m in range(n):
            t = ta + m * h
            k1 = apply(t, c)
            k2 = apply(t + 0.5 * h, c + 0.5 * h * k1)
            k3 = apply(t + 0.5 * h, c + 0.5 * h * k2)
            k4 = apply(t + h, c + h * k3)
            c = c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[s] = c
    return out


def _recurrence_check(system, duration):
    if system.slot_mode.size and duration > 0.5 * system.grid.recurrence_time:
        warnings.warn(
            f"run length {duration:.6g} fs exceeds half the continuum recurrence time "
            f"{system.grid.recurrence_time:.6g} fs; refine the frequency grid",
            GridWarning,
            stacklevel=3,
        )


def propagate(system: DiscretizedSystem, state: SingleExcitationState, t_end, dt=None,
              propagator=RK4, n_samples=DEFAULT_SAMPLES) -> ObservableSeries:
    """Evolve ``state`` to ``t_end`` (fs) under the static Hamiltonian.

    Parameters
    ----------
    dt : float, optional
        RK4 step in fs. Chosen from a norm-drift bound when omitted.
    propagator : {'rk4', 'eigen'}
        ``'eigen'`` diagonalises the dense Hamiltonian (``D <= 20000``).
    n_samples : int
        Number of sampling intervals; ``n_samples + 1`` snapshots are kept.
    """
    if state.ground:
        raise ValueError("undriven propagation takes states without a ground slot")
    if state.amplitudes.size != system.dimension:
        raise ValueError("state does not match the system dimension")
    if dt is not None and not dt > 0:
        raise ValueError("dt must be positive")
    times = _sample_times(state.t, t_end, n_samples)
    duration = t_end - state.t
    _recurrence_check(system, duration)
    c0 = state.amplitudes.astype(complex)

    if propagator == EIGEN:
        if system.dimension > EIGEN_MAX_DIM:
            raise ValueError(f"eigendecomposition limited to dimension {EIGEN_MAX_DIM}")
        shift = reference_energy(system)
        lam, U = np.linalg.eigh(system.dense_hamiltonian(shift))
        proj = U.T @ c0
        tau = (times - state.t) / units.HBAR_EVFS
        phases = np.exp(-1j * np.outer(tau, lam))
        amps = (phases * proj) @ U.T
        amps *= np.exp(-1j * shift * tau)[:, None]
        series = ObservableSeries(system, times, amps, propagator=EIGEN)
    elif propagator == RK4:
        shift = reference_energy(system)
        H = system.hamiltonian(shift)
        if dt is None:
            dt = auto_time_step(_spectral_radius_bound(system, shift), duration)
        scale = -1j / units.HBAR_EVFS

        def apply(t, c):
            return scale * (H @ c)

        amps = rk4_run(apply, c0, times, dt)
        amps *= np.exp(-1j * shift * (times - state.t) / units.HBAR_EVFS)[:, None]
        series = ObservableSeries(system, times, amps, propagator=RK4, dt=dt)
    else:
        raise ValueError(f"unknown propagator {propagator!r}")

    drift = series.norm_drift
    if drift > NORM_ABORT:
        raise StepSizeError(f"norm drift {drift:.3g} exceeds {NORM_ABORT}; use a smaller dt (was {dt})")
    return series


def fit_decay_rate(times, population, t_min=None, t_max=None):
    """Exponential decay rate (1/fs) from a least-squares fit of ``log P``."""
    times = np.asarray(times, dtype=float)
    population = np.asarray(population, dtype=float)
    mask = np.ones(times.size, bool)
    if t_min is not None:
        mask &= times >= t_min
    if t_max is not None:
        mask &= times <= t_max
    mask &= population > 0
    slope, _ = np.polyfit(times[mask], np.log(population[mask]), 1)
    return -slope


# -- fields --------------------------------------------------------------------

def field_coefficients(system: DiscretizedSystem, provider, point):
    """Per-slot field amplitude ``sqrt(delta_k) E_j(r_p, omega_k)`` in V/m.

    Built from the projected Im G between ``point`` and each emitter,
    normalised by the bright-mode couplings and combined with ``V``.
    """
    emitters = system.emitters
    nodes = system.grid.nodes
    try:
        cross = np.array([provider.projected_im_g(point, e.point, nodes) for e in emitters])
    except (IndexError, FrequencyRangeError) as exc:
        raise ConfigurationError(f"no Green's function data for observation point {point!r}: {exc}") from None
    cross = np.atleast_2d(cross).reshape(len(emitters), nodes.size)
    coeff = np.zeros(system.slot_mode.size)
    s = 0
    for k, b in enumerate(system.bases):
        if b.rank == 0:
            continue
        diag = np.diag(b.im_g)
        mode_fields = np.zeros(len(emitters))
        act = b.active
        mode_fields[act] = (
            units.FIELD_PREFACTOR * nodes[k] * np.sqrt(system.grid.weights[k])
            * cross[act, k] / np.sqrt(diag[act])
        )
        coeff[s : s + b.rank] = b.V @ mode_fields
        s += b.rank
    return coeff


@dataclass
class FieldSeries:
    times: np.ndarray
    amplitude: np.ndarray  # complex, V/m
    intensity: np.ndarray  # (V/m)^2


def reconstruct_field(series, system: DiscretizedSystem, provider, point, classical=None) -> FieldSeries:
    """Positive-frequency field projected on ``point``'s orientation.

    ``series`` is an :class:`ObservableSeries` or a single
    :class:`SingleExcitationState`. Without a ground slot the amplitude is
    ``<0|E+|psi>`` and the intensity its modulus squared. With a ground
    slot (driven runs) the amplitude is ``<E+>`` and the intensity
    ``<E- E+>``. ``classical(t)``, if given, returns the classical
    positive-frequency field at the point; it is added coherently to the
    amplitude before the intensity is formed.
    """
    if isinstance(series, SingleExcitationState):
        times = np.array([series.t])
        amps = series.amplitudes[None, :]
        offset = series.offset
    else:
        times, amps, offset = series.times, series.amplitudes, series.offset
    coeff = field_coefficients(system, provider, point)
    e_plus = amps[:, offset + system.n_emitters :] @ coeff
    if offset:
        coherent = np.conj(amps[:, 0]) * e_plus
        intensity = np.abs(e_plus) ** 2
        if classical is not None:
            ecl = np.array([classical(t) for t in times], dtype=complex)
            intensity = intensity + 2 * np.real(np.conj(ecl) * coherent) + np.abs(ecl) ** 2
            coherent = coherent + ecl
        return FieldSeries(times, coherent, intensity)
    if classical is not None:
        e_plus = e_plus + np.array([classical(t) for t in times], dtype=complex)
    return FieldSeries(times, e_plus, np.abs(e_plus) ** 2)
