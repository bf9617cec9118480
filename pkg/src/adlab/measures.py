"""Positive matrix-valued measures on the real line.

A :class:`MatrixMeasure` is a finite sum of point masses with PSD weights plus
an optional absolutely continuous part given by PSD density samples on
uniform grids. The density is the piecewise-linear interpolant of its
samples, and its Cauchy integral is taken in closed form segment by
segment, so the transform stays accurate arbitrarily close to the real axis.
Scalar measures are the ``dim == 1`` case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSD, NotUpperHalfPlane
from .linalg import DEFAULT_TOL, Tolerances


@dataclass(frozen=True, eq=False)
class DensityPiece:
    """PSD density sampled at ``len(samples)`` equispaced nodes on ``[a, b]``."""

    a: float
    b: float
    samples: np.ndarray  # (m, d, d)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim == 1:
            s = s[:, None, None]
        if s.ndim != 3 or s.shape[1] != s.shape[2]:
            raise ValueError("density samples must have shape (m, d, d)")
        if s.shape[0] < 2:
            raise ValueError("need at least two density samples")
        if not self.b > self.a:
            raise ValueError("density interval must have b > a")
        s = (s + s.conj().transpose(0, 2, 1)) / 2
        lam = np.linalg.eigvalsh(s)
        scale = max(1.0, float(np.abs(lam).max()))
        if lam.min() < -s.shape[1] * DEFAULT_TOL.eig_residual * scale:
            raise NotPSD("density sample is not PSD")
        object.__setattr__(self, "samples", s)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.samples.shape[0])

    def mass(self) -> np.ndarray:
        """Integral of the interpolated density (trapezoid rule, exact here)."""
        h = (self.b - self.a) / (self.samples.shape[0] - 1)
        s = self.samples
        return h * (s.sum(axis=0) - (s[0] + s[-1]) / 2)

    def cauchy(self, z: np.ndarray) -> np.ndarray:
        """``int f(s) / (s - z) ds`` for the linear interpolant ``f``; ``z`` 1-D."""
        s = self.nodes
        h = s[1] - s[0]
        D = self.samples
        slope = (D[1:] - D[:-1]) / h  # (m-1, d, d)
        out = np.empty((z.size,) + D.shape[1:], dtype=complex)
        for k, zk in enumerate(z):
            logs = np.log(s - zk)
            L = logs[1:] - logs[:-1]
            fz = D[:-1] + slope * (zk - s[:-1])[:, None, None]
            out[k] = np.einsum("j,jab->ab", L, fz) + (D[-1] - D[0])
        return out


@dataclass(frozen=True, eq=False)
class MatrixMeasure:
    """Atoms ``(locations[k], weights[k])`` plus optional density pieces."""

    dim: int
    locations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = None
    density: tuple = ()

    def __post_init__(self):
        d = int(self.dim)
        if d < 1:
            raise ValueError("dim must be positive")
        x = np.asarray(self.locations, dtype=float).reshape(-1)
        w = self.weights
        w = np.zeros((0, d, d), complex) if w is None else np.asarray(w, complex)
        if w.ndim == 1 and d == 1:
            w = w[:, None, None]
        if w.shape != (x.size, d, d):
            raise ValueError(f"weights must have shape ({x.size}, {d}, {d})")
        w = (w + w.conj().transpose(0, 2, 1)) / 2
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise ValueError("atom locations must be distinct")
        if x.size and np.any(np.trace(w, axis1=1, axis2=2).real <= 0):
            raise ValueError("atom weights must have positive trace")
        for piece in self.density:
            if piece.samples.shape[1] != d:
                raise ValueError("density dimension does not match measure")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "locations", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "density", tuple(self.density))

    @property
    def is_atomic(self) -> bool:
        return len(self.density) == 0

    @property
    def n_atoms(self) -> int:
        return self.locations.size

    def total(self) -> np.ndarray:
        """``M(R)`` as a ``d x d`` matrix."""
        out = self.weights.sum(axis=0) if self.n_atoms else np.zeros((self.dim,) * 2, complex)
        for piece in self.density:
            out = out + piece.mass()
        return out

    def total_mass(self) -> float:
        return float(np.trace(self.total()).real)

    def __add__(self, other: "MatrixMeasure") -> "MatrixMeasure":
        return add_measures(self, other)


def atomic_measure(locations, weights, tol: Tolerances = DEFAULT_TOL, dim=None):
    """Build an atomic measure, merging atoms closer than ``atom_merge``.

    Merged atoms sit at the weight-trace-weighted mean location.
    """
    x = np.asarray(locations, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=complex)
    if w.ndim == 1:
        w = w[:, None, None]
    if dim is None:
        dim = w.shape[1] if w.ndim == 3 and w.shape[0] else 1
    if x.size == 0:
        return MatrixMeasure(dim)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    groups = np.split(np.arange(x.size), np.flatnonzero(np.diff(x) > tol.atom_merge) + 1)
    locs, wts = [], []
    for g in groups:
        tr = np.trace(w[g], axis1=1, axis2=2).real
        locs.append(float(np.dot(tr, x[g]) / tr.sum()) if g.size > 1 else float(x[g[0]]))
        wts.append(w[g].sum(axis=0))
    return MatrixMeasure(dim, np.array(locs), np.array(wts))


def scalar_measure(locations, masses, tol: Tolerances = DEFAULT_TOL) -> MatrixMeasure:
    """Atomic scalar measure ``sum_k masses[k] * delta(locations[k])``."""
    masses = np.asarray(masses, dtype=float).reshape(-1)
    if np.any(masses <= 0):
        raise ValueError("scalar atom masses must be positive")
    return atomic_measure(locations, masses.astype(complex), tol, dim=1)


def add_measures(M1: MatrixMeasure, M2: MatrixMeasure,
                 tol: Tolerances = DEFAULT_TOL) -> MatrixMeasure:
    if M1.dim != M2.dim:
        raise ValueError("cannot add measures of different dimension")
    x = np.concatenate([M1.locations, M2.locations])
    w = np.concatenate([M1.weights, M2.weights])
    out = atomic_measure(x, w, tol, dim=M1.dim)
    return MatrixMeasure(M1.dim, out.locations, out.weights, M1.density + M2.density)


def _as_z(z) -> tuple[np.ndarray, bool]:
    scalar = np.ndim(z) == 0
    zs = np.atleast_1d(np.asarray(z, dtype=complex)).reshape(-1)
    if np.any(zs.imag <= 0):
        raise NotUpperHalfPlane("z must lie in the open upper half-plane")
    return zs, scalar


def cauchy_transform(M: MatrixMeasure, z):
    """``CM(z) = int (s - z)^{-1} dM(s)`` for ``Im z > 0``.

    ``z`` may be a scalar (returns ``d x d``) or 1-D array (returns
    ``(len(z), d, d)``).
    """
    zs, scalar = _as_z(z)
    kern = 1.0 / (M.locations[None, :] - zs[:, None])  # (nz, k)
    out = np.einsum("zk,kab->zab", kern, M.weights)
    for piece in M.density:
        out = out + piece.cauchy(zs)
    return out[0] if scalar else out


def poisson_extension(M: MatrixMeasure, z, tol: Tolerances = DEFAULT_TOL):
    """``M(z) = pi^{-1} Im CM(z)`` with ``Im X = (X - X*)/(2i)``.

    The atomic part is summed as ``w * y / ((x - s)^2 + y^2)``, which is PSD
    term by term. Density contributions go through the Cauchy integral, and
    small negative eigenvalues produced by round-off are clamped.
    """
    zs, scalar = _as_z(z)
    dx = M.locations[None, :] - zs.real[:, None]
    y = zs.imag[:, None]
    kern = y / (dx * dx + y * y)
    out = np.einsum("zk,kab->zab", kern, M.weights).astype(complex)
    if M.density:
        C = np.zeros_like(out)
        for piece in M.density:
            C = C + piece.cauchy(zs)
        out = out + (C - C.conj().transpose(0, 2, 1)) / 2j
        out = _clamp_psd(out, M, tol)
    out = out / np.pi
    out = (out + out.conj().transpose(0, 2, 1)) / 2
    return out[0] if scalar else out


def _clamp_psd(P: np.ndarray, M: MatrixMeasure, tol: Tolerances) -> np.ndarray:
    lam, V = np.linalg.eigh((P + P.conj().transpose(0, 2, 1)) / 2)
    scale = np.maximum(M.total_mass(), np.abs(lam).max(axis=1))
    slack = M.dim * tol.eig_residual * scale
    if np.any(lam.min(axis=1) < -slack):
        raise NotPSD("Poisson extension has a negative eigenvalue beyond slack")
    lam = np.clip(lam, 0.0, None)
    return np.einsum("zab,zb,zcb->zac", V, lam, V.conj())


def trace_measure(M: MatrixMeasure) -> MatrixMeasure:
    """The scalar measure ``tr M``."""
    tr = np.trace(M.weights, axis1=1, axis2=2).real
    density = tuple(
        DensityPiece(p.a, p.b, np.trace(p.samples, axis1=1, axis2=2).real)
        for p in M.density
    )
    return MatrixMeasure(1, M.locations.copy(), tr.astype(complex), density)


def atom_at(M: MatrixMeasure, x: float, tol: Tolerances = DEFAULT_TOL):
    """The atom within ``atom_merge`` of ``x`` if exactly one exists, else ``None``."""
    if M.n_atoms == 0:
        return None
    lo = np.searchsorted(M.locations, x - tol.atom_merge, side="left")
    hi = np.searchsorted(M.locations, x + tol.atom_merge, side="right")
    if hi - lo != 1:
        return None
    return float(M.locations[lo]), M.weights[lo]

