"""Projected imaginary part of the dyadic Green's function.

Every provider answers ``n_a . Im G(r_a, r_b, omega) . n_b`` (in 1/m) for a
fixed, ordered set of registered points. Points can be addressed by index or
by name. All evaluations accept scalar or array frequencies in eV.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import units
from .errors import DataConsistencyError, FrequencyRangeError, ParseError

#: below this kR the closed form is replaced by its Taylor series
SERIES_THRESHOLD = 1e-3
PSD_TOLERANCE = 1e-9


class GreensDataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PointSpec:
    """A named point with a dipole/projection orientation.

    Parameters
    ----------
    name : str
    position : array_like, shape (3,)
        Position in nm.
    orientation : array_like, shape (3,)
        Unit vector; normalised on construction if within 1e-12 of unit
        length, otherwise rejected.
    """

    name: str
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        n = np.asarray(self.orientation, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(
                f"orientation of point {self.name!r} must be a unit vector (|n| = {norm!r})"
            )
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "orientation", n / norm)


def _im_g_coefficients(x):
    """Isotropic and R R coefficients of Im G in units of k/(4 pi)."""
    x = np.asarray(x, dtype=float)
    small = x < SERIES_THRESHOLD
    xs = np.where(small, 1.0, x)  # keep the closed form finite where unused
    s, c = np.sin(xs), np.cos(xs)
    iso = s / xs + c / xs**2 - s / xs**3
    rr = -s / xs - 3 * c / xs**2 + 3 * s / xs**3
    x2 = x * x
    iso_series = 2.0 / 3.0 - 2.0 * x2 / 15.0 + x2 * x2 / 105.0
    rr_series = x2 / 15.0 - x2 * x2 / 210.0
    return np.where(small, iso_series, iso), np.where(small, rr_series, rr)


def free_space_im_g(r, r2, n, n2, omega, n_bg=1.0):
    """``n . Im G(r, r2, omega) . n2`` in a homogeneous medium, in 1/m.

    Uses the standard dyadic ``(I + grad grad / k^2) exp(ikR) / (4 pi R)``,
    whose imaginary part is

        k/(4 pi) [ (j0(x) - j1(x)/x) I + j2(x) R^R^ ],   x = kR.

    For ``kR < SERIES_THRESHOLD`` the Taylor expansion is used, so the
    coincident-point value ``k/(6 pi)`` is returned exactly.
    """
    r = np.asarray(r, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    n = np.asarray(n, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("omega must be positive")
    d = r - r2
    dist = float(np.linalg.norm(d))
    k_nm = units.wavenumber(omega, n_bg)
    iso, rr = _im_g_coefficients(k_nm * dist)
    nn = float(n @ n2)
    if dist > 0:
        rhat = d / dist
        nr = float(n @ rhat) * float(n2 @ rhat)
    else:
        nr = 0.0
    k_m = k_nm * 1e9
    return k_m / (4 * np.pi) * (iso * nn + rr * nr)


class GreensProvider:
    """Base class: an immutable source of projected Im G values."""

    names: tuple

    def index(self, point) -> int:
        if isinstance(point, (int, np.integer)):
            if not 0 <= point < len(self.names):
                raise IndexError(f"point index {point} not registered")
            return int(point)
        try:
            return self.names.index(point)
        except ValueError:
            raise IndexError(f"point {point!r} not registered") from None

    def check_frequency(self, omega):
        omega = np.asarray(omega, dtype=float)
        if np.any(omega <= 0):
            raise ValueError("omega must be positive")
        return omega

    def _pair(self, a: int, b: int, omega):
        raise NotImplementedError

    def projected_im_g(self, a, b, omega):
        """Projected Im G between points ``a`` and ``b`` (1/m)."""
        ia, ib = self.index(a), self.index(b)
        omega = self.check_frequency(omega)
        if ia > ib:
            ia, ib = ib, ia
        return self._pair(ia, ib, omega)

    def matrix(self, omega, points=None):
        """Projected Im G between ``points`` (default: all).

        Returns an array of shape ``np.shape(omega) + (P, P)``.
        """
        idx = range(len(self.names)) if points is None else [self.index(p) for p in points]
        idx = list(idx)
        omega = self.check_frequency(omega)
        out = np.empty(omega.shape + (len(idx), len(idx)))
        for u, a in enumerate(idx):
            for v in range(u, len(idx)):
                b = idx[v]
                val = self._pair(min(a, b), max(a, b), omega)
                out[..., u, v] = val
                out[..., v, u] = val
        return out

    def resonance_widths(self):
        """Half-widths (eV) of known spectral features; empty if unknown."""
        return []


def projected_im_g(provider: GreensProvider, a, b, omega):
    return provider.projected_im_g(a, b, omega)


class FreeSpace(GreensProvider):
    """Homogeneous medium with refractive index ``n_bg``."""

    def __init__(self, points: Sequence[PointSpec], n_bg: float = 1.0):
        self.points = tuple(points)
        self.names = tuple(p.name for p in self.points)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate point names")
        if not n_bg > 0:
            raise ValueError("n_bg must be positive")
        self.n_bg = float(n_bg)

    def _pair(self, a, b, omega):
        pa, pb = self.points[a], self.points[b]
        return free_space_im_g(
            pa.position, pb.position, pa.orientation, pb.orientation, omega, self.n_bg
        )


@dataclass(frozen=True)
class LorentzianTerm:
    """One resonance: ``A_ab (w0/w)^2 k^2 / ((w - w0)^2 + k^2)``.

    The ``(w0/w)^2`` factor makes the resulting spectral density an exact
    Lorentzian (the coupling carries a factor ``w^2``). The value at the
    centre is ``A_ab``.
    """

    center: float
    width: float
    amplitude: np.ndarray

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("Lorentzian half-width must be positive")
        if not self.center > 0:
            raise ValueError("Lorentzian center must be positive")
        amp = np.atleast_2d(np.asarray(self.amplitude, dtype=float))
        if amp.shape[0] != amp.shape[1] or not np.allclose(amp, amp.T, rtol=0, atol=1e-12 * max(1.0, np.abs(amp).max())):
            raise ValueError("Lorentzian amplitude matrix must be square and symmetric")
        object.__setattr__(self, "amplitude", 0.5 * (amp + amp.T))

    def profile(self, omega):
        w0, k = self.center, self.width
        return (w0 / omega) ** 2 * k * k / ((omega - w0) ** 2 + k * k)


class LorentzianModel(GreensProvider):
    """Sum of Lorentzian resonances over a set of named points."""

    def __init__(self, names: Sequence[str], terms: Sequence[LorentzianTerm]):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate point names")
        self.terms = tuple(terms)
        for t in self.terms:
            if t.amplitude.shape != (len(self.names),) * 2:
                raise ValueError(
                    f"amplitude matrix shape {t.amplitude.shape} does not match {len(self.names)} points"
                )

    def _pair(self, a, b, omega):
        val = np.zeros_like(omega)
        for t in self.terms:
            val = val + t.amplitude[a, b] * t.profile(omega)
        return val

    def resonance_widths(self):
        return [t.width for t in self.terms]


class Tabulated(GreensProvider):
    """Interpolated samples on a frequency grid.

    Parameters
    ----------
    names : sequence of str
    omega : array_like
        Strictly increasing frequencies in eV.
    samples : dict
        ``{(a, b): values}`` with point names; every unordered pair must be
        present exactly once.
    kind : {'pchip', 'linear'}
        Monotone cubic (default) or linear interpolation.
    """

    def __init__(self, names, omega, samples, kind="pchip"):
        self.names = tuple(names)
        self.omega = np.asarray(omega, dtype=float)
        if self.omega.ndim != 1 or self.omega.size < 2:
            raise ValueError("need at least two frequency samples")
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if kind not in ("pchip", "linear"):
            raise ValueError(f"unknown interpolation kind {kind!r}")
        self.kind = kind
        self._data = {}
        for (na, nb), vals in samples.items():
            a, b = sorted((self.index(na), self.index(nb)))
            vals = np.asarray(vals, dtype=float)
            if vals.shape != self.omega.shape:
                raise ValueError(f"pair {(na, nb)} has {vals.size} samples, expected {self.omega.size}")
            if (a, b) in self._data:
                raise ValueError(f"pair {(na, nb)} given twice")
            self._data[(a, b)] = vals
        missing = [
            (self.names[a], self.names[b])
            for a in range(len(self.names))
            for b in range(a, len(self.names))
            if (a, b) not in self._data
        ]
        if missing:
            raise ValueError(f"missing pair columns: {missing}")
        if kind == "pchip":
            self._interp = {k: PchipInterpolator(self.omega, v, extrapolate=False) for k, v in self._data.items()}
        self.warnings = self._psd_report()
        for msg in self.warnings:
            warnings.warn(msg, GreensDataWarning, stacklevel=2)

    @property
    def range(self):
        return float(self.omega[0]), float(self.omega[-1])

    def _psd_report(self):
        out = []
        mats = np.empty((self.omega.size, len(self.names), len(self.names)))
        for (a, b), v in self._data.items():
            mats[:, a, b] = v
            mats[:, b, a] = v
        eig = np.linalg.eigvalsh(mats)
        scale = np.maximum(np.abs(np.trace(mats, axis1=1, axis2=2)), np.finfo(float).tiny)
        bad = np.nonzero(eig[:, 0] < -PSD_TOLERANCE * scale)[0]
        for k in bad:
            out.append(
                f"Im G matrix not positive semidefinite at omega={float(self.omega[k])!r} eV "
                f"(min eigenvalue {float(eig[k, 0]):.6g} 1/m)"
            )
        return out

    def check_frequency(self, omega):
        omega = super().check_frequency(omega)
        lo, hi = self.range
        if omega.size and (omega.min() < lo or omega.max() > hi):
            bad = omega[(omega < lo) | (omega > hi)].flat[0]
            raise FrequencyRangeError(float(bad), lo, hi)
        return omega

    def _pair(self, a, b, omega):
        if self.kind == "linear":
            return np.interp(omega, self.omega, self._data[(a, b)])
        return self._interp[(a, b)](omega)


# -- tabulated text format ---------------------------------------------------

def _column_name(a, b):
    return f"img_{a}_{b}"


def load_tabulated(source, kind="pchip") -> Tabulated:
    """Read the comma-separated tabulated Green format.

    ``source`` is a path or a text stream. The header is
    ``omega_ev,img_<a>_<b>,...``; lines starting with ``#`` are comments.
    Point names may not contain underscores.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            return load_tabulated(fh, kind=kind)

    header = None
    rows = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            header_line = lineno
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(cells)}", lineno)
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if any(math.isnan(v) or math.isinf(v) for v in vals):
            raise ParseError("non-finite value", lineno)
        if rows and vals[0] <= rows[-1][1][0]:
            raise ParseError("frequencies must be strictly increasing", lineno)
        if vals[0] <= 0:
            raise ParseError("frequencies must be positive", lineno)
        rows.append((lineno, vals))

    if header is None:
        raise ParseError("empty file")
    if header[0] != "omega_ev":
        raise ParseError("first column must be 'omega_ev'", header_line)
    names = []
    pairs = []
    for col in header[1:]:
        parts = col.split("_")
        if len(parts) != 3 or parts[0] != "img":
            raise ParseError(f"bad column name {col!r}", header_line)
        a, b = parts[1], parts[2]
        for p in (a, b):
            if p not in names:
                names.append(p)
        pairs.append((a, b))
    seen = set()
    for a, b in pairs:
        key = frozenset((a, b))
        if key in seen:
            raise ParseError(f"pair {a},{b} appears twice", header_line)
        seen.add(key)
    missing = [
        f"{a}_{b}"
        for i, a in enumerate(names)
        for b in names[i:]
        if frozenset((a, b)) not in seen
    ]
    if missing:
        raise ParseError(f"missing pair columns: {', '.join('img_' + m for m in missing)}", header_line)
    if len(rows) < 2:
        raise ParseError("need at least two data rows")

    data = np.array([v for _, v in rows])
    samples = {pair: data[:, c + 1] for c, pair in enumerate(pairs)}
    return Tabulated(names, data[:, 0], samples, kind=kind)


def format_float(x) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def write_tabulated(stream, provider: GreensProvider, omega, comment=None):
    """Write samples of ``provider`` at ``omega`` in the tabulated format."""
    names = provider.names
    pairs = [(a, b) for i, a in enumerate(names) for b in names[i:]]
    if comment:
        for line in comment.splitlines():
            stream.write(f"# {line}\n")
    stream.write(",".join(["omega_ev"] + [_column_name(a, b) for a, b in pairs]) + "\n")
    omega = np.asarray(omega, dtype=float)
    cols = [provider.projected_im_g(a, b, omega) for a, b in pairs]
    for k, w in enumerate(omega):
        stream.write(",".join([format_float(w)] + [format_float(c[k]) for c in cols]) + "\n")


def dumps_tabulated(provider, omega, comment=None) -> str:
    buf = io.StringIO()
    write_tabulated(buf, provider, omega, comment)
    return buf.getvalue()


def check_psd(matrix, tol=PSD_TOLERANCE):
    """Raise if a symmetric Im G matrix has eigenvalues below ``-tol * trace``."""
    m = np.asarray(matrix, dtype=float)
    lo = np.linalg.eigvalsh(m)[0]
    if lo < -tol * abs(np.trace(m)):
        raise DataConsistencyError(f"Im G matrix has eigenvalue {lo!r}")
    return lo
