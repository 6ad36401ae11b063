"""Emitter-centred mode structure at a single frequency.

For N emitters the bright modes at frequency omega are fixed by the
projected Im G between emitter positions. This module computes their
couplings ``G_i``, the overlap ``S``, an orthonormalising transformation
``V`` with right inverse ``W`` and the coupling matrix ``g = diag(G) W``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import units
from .errors import DataConsistencyError

CHOLESKY = "cholesky"
LOWDIN = "lowdin"
METHODS = (CHOLESKY, LOWDIN)

#: negative Im G_ii above -NEGATIVE_CLIP * scale is treated as zero
NEGATIVE_CLIP = 1e-6
#: overlap eigenvalues in [-OVERLAP_CLIP, 0) are clipped to zero
OVERLAP_CLIP = 1e-6
DEFAULT_EPS_RANK = 1e-8


@dataclass(frozen=True)
class Emitter:
    """Two-level emitter.

    ``point`` names the provider point holding its position and
    orientation (defaults to ``name``). A zero dipole is allowed and stands
    for an emitter that is absent from the dynamics while its mode still
    belongs to the basis.
    """

    name: str
    dipole: float
    frequency: float
    point: str | None = None

    def __post_init__(self):
        if not self.dipole >= 0:
            raise ValueError(f"emitter {self.name!r}: dipole must be >= 0")
        if not self.frequency > 0:
            raise ValueError(f"emitter {self.name!r}: transition frequency must be > 0")
        if self.point is None:
            object.__setattr__(self, "point", self.name)


class EmitterSet(tuple):
    """Immutable ordered collection of :class:`Emitter`."""

    def __new__(cls, emitters: Sequence[Emitter]):
        emitters = tuple(emitters)
        if not emitters:
            raise ValueError("need at least one emitter")
        names = [e.name for e in emitters]
        if len(set(names)) != len(names):
            raise ValueError("duplicate emitter names")
        return super().__new__(cls, emitters)

    @property
    def names(self):
        return [e.name for e in self]

    @property
    def points(self):
        return [e.point for e in self]

    @property
    def dipoles(self):
        return np.array([e.dipole for e in self])

    @property
    def frequencies(self):
        return np.array([e.frequency for e in self])

    def index(self, name):
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < len(self):
                raise IndexError(f"emitter index {name} out of range")
            return int(name)
        try:
            return self.names.index(name)
        except ValueError:
            raise IndexError(f"unknown emitter {name!r}") from None


def _clip_diagonal(diag, scale):
    diag = np.array(diag, dtype=float)
    neg = diag < 0
    if np.any(diag < -NEGATIVE_CLIP * scale):
        raise DataConsistencyError(
            f"strongly negative Im G_ii {diag.min()!r} 1/m (clip tolerance {NEGATIVE_CLIP * scale!r})"
        )
    diag[neg] = 0.0
    return diag


def coupling_normalization(provider, emitters, i, omega):
    """Normalisation ``G_i(omega)`` of emitter ``i``'s bright mode.

    In eV^(1/2) per e nm, so that ``(mu_i G_i)^2`` is an energy in eV.
    """
    emitters = EmitterSet(emitters)
    i = emitters.index(i)
    diag = np.array([provider.projected_im_g(p, p, omega) for p in emitters.points])
    scale = np.max(np.abs(diag), axis=0)
    d = _clip_diagonal(diag[i], scale)
    return np.sqrt(units.coupling_squared(omega, d))


def spectral_density(provider, emitters, i, omega):
    """``J_i(omega) = (mu_i G_i(omega))^2`` in eV.

    ``2 pi J_i(omega_e) / hbar`` is the weak-coupling decay rate.
    """
    emitters = EmitterSet(emitters)
    i = emitters.index(i)
    return (emitters[i].dipole * coupling_normalization(provider, emitters, i, omega)) ** 2


@dataclass(frozen=True)
class Orthogonalization:
    V: np.ndarray  # (M, N)
    W: np.ndarray  # (N, M)
    rank: int
    dropped_eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dropped_vectors: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def _ordered_gram_schmidt(S, tol):
    """Lower-trapezoidal factor ``S ~ L L^T`` processing modes in order.

    A mode whose residual (squared distance to the span of earlier kept
    modes) is below ``tol`` is dropped, so row ``i`` of ``L`` only touches
    columns of kept modes with index <= i.
    """
    n = S.shape[0]
    L = np.zeros((n, n))
    kept = []
    for i in range(n):
        if kept:
            Lk = L[np.ix_(kept, range(len(kept)))]
            # coefficients of mode i on the kept orthonormal modes
            row = solve_triangular(Lk, S[kept, i], lower=True)
            L[i, : len(kept)] = row
            resid = S[i, i] - row @ row
        else:
            resid = S[i, i]
        if resid > tol:
            L[i, len(kept)] = np.sqrt(resid)
            kept.append(i)
    return L[:, : len(kept)], kept


def orthogonalize(S, method=CHOLESKY, eps_rank=DEFAULT_EPS_RANK) -> Orthogonalization:
    """Orthonormalise modes with overlap ``S``.

    Returns ``V`` (M x N) and ``W`` (N x M) with ``V S V^T = I`` and
    ``V W = I``. Directions of ``S`` with eigenvalue at most
    ``eps_rank * max eigenvalue`` are dropped.

    ``method='cholesky'`` gives the Gram-Schmidt result (lower triangular,
    emitter i couples to continua 1..i only); ``method='lowdin'`` gives the
    symmetric ``V = S^(-1/2)``. Under rank deficiency Löwdin falls back to
    canonical orthogonalisation ``Lambda^(-1/2) U^T`` on the kept
    eigenvectors.
    """
    if method not in METHODS:
        raise ValueError(f"unknown orthogonalization method {method!r}")
    if not 0 < eps_rank < 1:
        raise ValueError("eps_rank must lie in (0, 1)")
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n == 0:
        return Orthogonalization(np.zeros((0, 0)), np.zeros((0, 0)), 0)
    lam, U = np.linalg.eigh(S)
    if lam[0] < -OVERLAP_CLIP:
        raise DataConsistencyError(f"overlap matrix has eigenvalue {lam[0]!r} < -{OVERLAP_CLIP}")
    lam = np.clip(lam, 0.0, None)
    thresh = eps_rank * lam[-1]
    keep = lam > thresh
    dropped = (lam[~keep], U[:, ~keep])
    full = bool(keep.all())

    if method == LOWDIN:
        if full:
            V = (U / np.sqrt(lam)) @ U.T
            W = (U * np.sqrt(lam)) @ U.T
            V = 0.5 * (V + V.T)
            W = 0.5 * (W + W.T)
        else:
            Uk, lk = U[:, keep], lam[keep]
            V = (Uk / np.sqrt(lk)).T
            W = Uk * np.sqrt(lk)
        return Orthogonalization(V, W, V.shape[0], *dropped)

    if full:
        L = np.linalg.cholesky(S)
        V = solve_triangular(L, np.eye(n), lower=True)
        return Orthogonalization(V, L, n, *dropped)

    S_reg = (U[:, keep] * lam[keep]) @ U[:, keep].T
    L, kept = _ordered_gram_schmidt(S_reg, thresh)
    m = len(kept)
    V = np.zeros((m, n))
    V[:, kept] = solve_triangular(L[kept], np.eye(m), lower=True)
    return Orthogonalization(V, L, m, *dropped)


def coupling_matrix(G, W):
    """``g_ij = G_i W_ij``."""
    G = np.asarray(G, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape[0] != G.shape[0]:
        raise ValueError(f"shape mismatch: G has {G.shape[0]} entries, W is {W.shape}")
    return G[:, None] * W


@dataclass(frozen=True)
class ModeBasisAtFrequency:
    """Bright-mode data at one frequency.

    ``active`` marks emitters with nonzero ``G_i``; inactive emitters have
    zero rows in ``W``/``g``, zero columns in ``V`` and are excluded from
    ``S`` (their row is a unit vector).
    """

    omega: float
    G: np.ndarray
    S: np.ndarray
    V: np.ndarray
    W: np.ndarray
    g: np.ndarray
    rank: int
    active: np.ndarray
    dropped_eigenvalues: np.ndarray
    im_g: np.ndarray

    @property
    def gram(self):
        """``diag(G) S diag(G)``: the basis-independent coupling Gram matrix."""
        return self.G[:, None] * self.S * self.G[None, :]


def overlap_matrix(im_g, G=None):
    """Normalised overlap ``S_ij = Im G_ij / sqrt(Im G_ii Im G_jj)``.

    ``im_g`` is the emitter block of the projected Im G at one frequency.
    Emitters with zero diagonal are decoupled: their row and column are
    set to the unit vector. Returns ``(S, active)``.
    """
    im_g = np.asarray(im_g, dtype=float)
    diag = np.diag(im_g).copy()
    scale = np.max(np.abs(diag)) if diag.size else 0.0
    diag = _clip_diagonal(diag, scale)
    active = diag > 0
    n = im_g.shape[0]
    S = np.eye(n)
    off = np.abs(im_g[~active][:, active]) if (~active).any() else np.zeros(0)
    if off.size and off.max() > NEGATIVE_CLIP * scale:
        raise DataConsistencyError(
            "nonzero Im G between a decoupled emitter and another emitter (violates Cauchy-Schwarz)"
        )
    if active.any():
        d = np.sqrt(diag[active])
        sub = im_g[np.ix_(active, active)] / np.outer(d, d)
        sub = 0.5 * (sub + sub.T)
        np.fill_diagonal(sub, 1.0)
        S[np.ix_(active, active)] = sub
    return S, active


def mode_basis_from_im_g(omega, im_g, method=CHOLESKY, eps_rank=DEFAULT_EPS_RANK):
    """Build :class:`ModeBasisAtFrequency` from the emitter Im G block."""
    im_g = np.asarray(im_g, dtype=float)
    n = im_g.shape[0]
    S, active = overlap_matrix(im_g)
    G = np.zeros(n)
    G[active] = np.sqrt(units.coupling_squared(omega, np.diag(im_g)[active]))
    idx = np.nonzero(active)[0]
    orth = orthogonalize(S[np.ix_(idx, idx)], method, eps_rank)
    m = orth.rank
    V = np.zeros((m, n))
    W = np.zeros((n, m))
    V[:, idx] = orth.V
    W[idx, :] = orth.W
    return ModeBasisAtFrequency(
        omega=float(omega),
        G=G,
        S=S,
        V=V,
        W=W,
        g=coupling_matrix(G, W),
        rank=m,
        active=active,
        dropped_eigenvalues=orth.dropped_eigenvalues,
        im_g=im_g,
    )


def mode_basis(provider, emitters, omega, method=CHOLESKY, eps_rank=DEFAULT_EPS_RANK):
    emitters = EmitterSet(emitters)
    im_g = provider.matrix(float(omega), emitters.points)
    return mode_basis_from_im_g(omega, im_g, method, eps_rank)


def mode_bases(provider, emitters, omegas, method=CHOLESKY, eps_rank=DEFAULT_EPS_RANK):
    """Mode bases on every frequency in ``omegas`` (independent per node)."""
    emitters = EmitterSet(emitters)
    omegas = np.asarray(omegas, dtype=float)
    mats = provider.matrix(omegas, emitters.points)
    return [mode_basis_from_im_g(w, m, method, eps_rank) for w, m in zip(omegas, mats)]
