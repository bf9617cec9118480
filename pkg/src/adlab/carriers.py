"""Carrier detection for singular parts via boundary behaviour of Poisson extensions.

Points where the Poisson extension of ``mu_alpha`` blows up along
``x + i y_n`` form the set ``F1``; points where ``M_alpha(z)/mu_alpha(z)``
converges to a non-zero matrix form ``F2``. Their intersection carries the
singular part of ``mu_alpha``. Everything here works on finite samples of the
height sequence, so the detectors are numerical decisions; on atomic measures
they are checked against the exact answer (is ``x`` an atom?).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import DEFAULT_TOL, Tolerances, hermitian
from .measures import MatrixMeasure, poisson_extension, trace_measure
from .model import PerturbationModel, spectral_matrix_measure

DEFAULT_N = 40
GROWTH_TOL = 1.8
LIMIT_STEP_TOL = 1e-6
LIMIT_FLOOR = 1e-8


def dyadic_heights(N: int) -> np.ndarray:
    """``[2^-1, ..., 2^-N]``; every entry is exact in binary floating point."""
    if not 1 <= N <= 50:
        raise ValueError("N must be in [1, 50]")
    return np.ldexp(1.0, -np.arange(1, N + 1))


def harmonic_heights(N: int) -> np.ndarray:
    """Terms ``1/n`` of the harmonic heights, sampled at ``n = 3^k``.

    ``k`` runs up to ``round(N log 2 / log 3)`` so the smallest height matches
    ``dyadic_heights(N)`` in magnitude.
    """
    K = max(10, round(N * math.log(2) / math.log(3)))
    return 1.0 / 3.0 ** np.arange(1, K + 1, dtype=float)


def _heights(N: int, heights) -> np.ndarray:
    if heights is None:
        return dyadic_heights(N)
    y = np.asarray(heights, dtype=float)
    if y.ndim != 1 or y.size < 10 or np.any(np.diff(y) >= 0) or y[-1] <= 0:
        raise ValueError("heights must be positive, strictly decreasing, length >= 10")
    return y


def _scalar_poisson(mu: MatrixMeasure, x: float, y: np.ndarray) -> np.ndarray:
    P = poisson_extension(mu, x + 1j * y)
    return np.trace(P, axis1=1, axis2=2).real


def poisson_divergence(mu: MatrixMeasure, x: float, N: int = DEFAULT_N,
                       growth_tol: float = GROWTH_TOL, heights=None) -> bool:
    """Numerical test of ``mu(x + i y_n) -> +infinity``.

    Over the last five steps the value must grow at least like
    ``y^{-log2(growth_tol)}`` (factor ``growth_tol`` per halving of ``y``), and
    the final value must exceed ``1e3 * mu(R)``. Matrix measures are traced.
    """
    if heights is None and N < 10:
        raise ValueError("N must be at least 10")
    y = _heights(N, heights)
    if mu.dim > 1:
        mu = trace_measure(mu)
    mass = mu.total_mass()
    if mass <= 0:
        return False
    v = _scalar_poisson(mu, x, y[-6:])
    if not np.all(v > 0):
        return False
    need = (y[-6:-1] / y[-5:]) ** math.log2(growth_tol)
    grows = bool(np.all(v[1:] >= need * v[:-1]))
    return grows and bool(v[-1] >= 1e3 * mass)


def measure_density_limit(M: MatrixMeasure, x: float, N: int = DEFAULT_N,
                          heights=None) -> np.ndarray | None:
    """Limit of ``M(x + i y_n) / tr M(x + i y_n)``, or ``None``.

    ``None`` when the ratios have not settled to ``1e-6`` over the last five
    steps, when the limit is below ``1e-8`` in norm, or when ``tr M(x + i y_n)``
    decays faster than ``sqrt(y)`` (the ratio is then an artefact of
    vanishing Poisson values).
    """
    y = _heights(N, heights)[-6:]
    P = poisson_extension(M, x + 1j * y)
    tr = np.trace(P, axis1=1, axis2=2).real
    if not np.all(tr > 0):
        return None
    if tr[-1] < tr[0] * math.sqrt(y[-1] / y[0]):
        return None
    R = P / tr[:, None, None]
    steps = np.linalg.norm(np.diff(R, axis=0), ord=2, axis=(1, 2))
    if np.any(steps > LIMIT_STEP_TOL):
        return None
    W = hermitian(R[-1])
    if np.linalg.norm(W, 2) < LIMIT_FLOOR:
        return None
    return W


def density_limit(model: PerturbationModel, alpha, x: float, N: int = DEFAULT_N,
                  tol: Tolerances | None = None, heights=None):
    """Normalized density ``W_alpha(x)`` of ``M_alpha`` w.r.t. ``tr M_alpha``."""
    M = spectral_matrix_measure(model, alpha, tol)
    return measure_density_limit(M, x, N, heights)


@dataclass(frozen=True, eq=False)
class CarrierPoint:
    x: float
    mass: float
    W: np.ndarray | None
    diverged: bool
    limit_ok: bool

    @property
    def in_carrier(self) -> bool:
        return self.diverged and self.limit_ok


@dataclass(frozen=True, eq=False)
class CarrierReport:
    alpha: np.ndarray
    points: tuple

    @property
    def carrier(self) -> list[CarrierPoint]:
        """Points of ``F_alpha`` among the atoms."""
        return [p for p in self.points if p.in_carrier]

    def carrier_locations(self) -> np.ndarray:
        return np.array([p.x for p in self.carrier])

    def carried_mass(self) -> float:
        return float(sum(p.mass for p in self.carrier))

    def total_mass(self) -> float:
        return float(sum(p.mass for p in self.points))


def measure_carrier_points(M: MatrixMeasure, N: int = DEFAULT_N, heights=None,
                           which=None) -> list[CarrierPoint]:
    """Run both detectors at atoms of ``M`` (all atoms, or indices ``which``)."""
    mu = trace_measure(M)
    idx = range(M.n_atoms) if which is None else which
    out = []
    for k in idx:
        x = float(M.locations[k])
        diverged = poisson_divergence(mu, x, N, heights=heights)
        W = measure_density_limit(M, x, N, heights)
        out.append(CarrierPoint(x, float(mu.weights[k, 0, 0].real), W, diverged, W is not None))
    return out


def carrier_points(model: PerturbationModel, alpha, tol: Tolerances | None = None,
                   N: int = DEFAULT_N, heights=None) -> CarrierReport:
    M = spectral_matrix_measure(model, alpha, tol)
    return CarrierReport(hermitian(alpha), tuple(measure_carrier_points(M, N, heights)))


def _pairs_within(a: np.ndarray, b: np.ndarray, width: float):
    """Index pairs ``(i, j)`` with ``|a[i] - b[j]| <= width``; both sorted."""
    pairs = []
    j0 = 0
    for i, x in enumerate(a):
        while j0 < b.size and b[j0] < x - width:
            j0 += 1
        j = j0
        while j < b.size and b[j] <= x + width:
            pairs.append((i, j))
            j += 1
    return pairs


def mutually_singular(mu: MatrixMeasure, nu: MatrixMeasure,
                      tol: Tolerances = DEFAULT_TOL) -> bool:
    """True iff no atom of ``mu`` lies within ``atom_merge`` of an atom of ``nu``.

    Density parts are ignored with a warning: against a singular ``nu`` they
    never obstruct mutual singularity.
    """
    if not (mu.is_atomic and nu.is_atomic):
        warnings.warn("ignoring absolutely continuous parts in mutual singularity test",
                      RuntimeWarning)
    a, b = mu.locations, nu.locations
    i = j = 0
    while i < a.size and j < b.size:
        if abs(a[i] - b[j]) <= tol.atom_merge:
            return False
        if a[i] < b[j]:
            i += 1
        else:
            j += 1
    return True


def measure_in_extended_exceptional(M: MatrixMeasure, nu: MatrixMeasure,
                                    tol: Tolerances = DEFAULT_TOL,
                                    N: int = DEFAULT_N, heights=None) -> bool:
    """``nu(F) > 0`` where ``F`` is the carrier of ``tr M``.

    Only atoms of ``M`` near some atom of ``nu`` are run through the detectors.
    """
    pairs = _pairs_within(M.locations, nu.locations, tol.atom_merge)
    if not pairs:
        return False
    cands = sorted({i for i, _ in pairs})
    return any(p.in_carrier for p in measure_carrier_points(M, N, heights, cands))


def in_extended_exceptional(model: PerturbationModel, alpha, nu: MatrixMeasure,
                            tol: Tolerances | None = None, N: int = DEFAULT_N,
                            heights=None) -> bool:
    """Membership of ``alpha`` in the Borel hull ``{alpha : nu(F_alpha) > 0}``."""
    tol = tol or model.tol
    M = spectral_matrix_measure(model, alpha, tol)
    return measure_in_extended_exceptional(M, nu, tol, N, heights)
