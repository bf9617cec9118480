"""Checks of the orthogonality invariant at common carrier points.

At a point ``x`` carried by both ``mu`` and ``mu_alpha`` the normalized
densities satisfy ``Ran W(x) _|_ alpha Ran W_alpha(x)``. This module measures
that defect, scans the two-weight bound behind it, and rebuilds the
separated family of unit vectors used to show that a positive-definite line
meets the exceptional hull in a countable set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .carriers import (DEFAULT_N, _pairs_within, measure_carrier_points,
                       measure_density_limit, poisson_divergence)
from .errors import HypothesesNotMet, NormalizationImpossible, NotPositiveDefinite
from .linalg import (DEFAULT_TOL, Tolerances, hermitian, is_positive_definite,
                     opnorm, ort_distance_constant, psd_sqrt, ranges_alpha_orthogonal)
from .measures import MatrixMeasure, atom_at, poisson_extension, trace_measure
from .model import PerturbationModel, operator_matrix_measure, spectral_matrix_measure


def _perturbed_measure(model, alpha, perturbed, tol) -> MatrixMeasure:
    if perturbed is None:
        return spectral_matrix_measure(model, alpha, tol)
    return operator_matrix_measure(perturbed, model.B, tol, warn_dropped=False)


def _carrier_density(M: MatrixMeasure, x: float, tol: Tolerances, N: int):
    """Density at ``x`` if ``x`` passes both carrier detectors, else ``None``.

    The detectors run at the atom of ``M`` within ``atom_merge`` of ``x`` when
    there is one, since that width is what "the same point" means.
    """
    hit = atom_at(M, x, tol)
    at = hit[0] if hit is not None else x
    if not poisson_divergence(trace_measure(M), at, N):
        return None
    return measure_density_limit(M, at, N)


def check_alpha_orthogonality(model: PerturbationModel, alpha, x: float,
                              tol: Tolerances | None = None, N: int = DEFAULT_N,
                              perturbed=None):
    """``(orthogonal, defect)`` for ``W(x)`` and ``W_alpha(x)``.

    ``perturbed`` replaces ``A + B alpha B*`` by an explicit operator; it
    exists for negative controls only.

    Raises:
        HypothesesNotMet: if ``x`` is not a carrier point of both ``mu`` and
            ``mu_alpha``.
    """
    tol = tol or model.tol
    alpha = hermitian(alpha)
    W = _carrier_density(spectral_matrix_measure(model, None, tol), x, tol, N)
    W_alpha = _carrier_density(_perturbed_measure(model, alpha, perturbed, tol), x, tol, N)
    if W is None or W_alpha is None:
        raise HypothesesNotMet(f"x = {x!r} is not a common carrier point")
    return ranges_alpha_orthogonal(W, W_alpha, alpha, tol)


def common_carrier_points(model: PerturbationModel, alpha, tol: Tolerances | None = None,
                          N: int = DEFAULT_N, perturbed=None) -> list[float]:
    """Atoms of ``mu`` that are within ``atom_merge`` of an atom of ``mu_alpha``."""
    tol = tol or model.tol
    M0 = spectral_matrix_measure(model, None, tol)
    Ma = _perturbed_measure(model, alpha, perturbed, tol)
    pairs = _pairs_within(M0.locations, Ma.locations, tol.atom_merge)
    return [float(M0.locations[i]) for i in sorted({i for i, _ in pairs})]


@dataclass(frozen=True, eq=False)
class A2Scan:
    sup: float
    argmax: complex
    z_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def a2_condition_scan(model: PerturbationModel, alpha, z_grid,
                      tol: Tolerances | None = None, perturbed=None) -> A2Scan:
    """Supremum over ``z_grid`` of ``|| M(z)^{1/2} (alpha M_alpha(z) alpha)^{1/2} ||``.

    The result keeps the grid and per-point values; it is a sup over that
    grid only.
    """
    tol = tol or model.tol
    alpha = hermitian(alpha)
    z = np.asarray(z_grid, dtype=complex).reshape(-1)
    P0 = poisson_extension(spectral_matrix_measure(model, None, tol), z, tol)
    Pa = poisson_extension(_perturbed_measure(model, alpha, perturbed, tol), z, tol)
    vals = np.empty(z.size)
    for k in range(z.size):
        tilde = alpha @ Pa[k] @ alpha
        vals[k] = opnorm(psd_sqrt(P0[k], tol) @ psd_sqrt(tilde, tol))
    k = int(np.argmax(vals))
    return A2Scan(float(vals[k]), complex(z[k]), z, vals)


def a2_probe_grid(x_points, n_levels: int = 20, y_max: float = 0.5) -> np.ndarray:
    """Points ``x + i y`` with ``y = y_max * 2^{-k}``, ``k = 0..n_levels-1``."""
    x = np.asarray(x_points, dtype=float).reshape(-1)
    y = y_max * np.ldexp(1.0, -np.arange(n_levels))
    return (x[:, None] + 1j * y[None, :]).reshape(-1)


def phi_selection(W, d: int | None = None, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Deterministic non-zero vector in ``Ran W`` (zero iff ``W = 0``).

    Picks the top eigenvector, scaled by ``tr W``, with its first non-zero
    coordinate real positive. When the top eigenvalue is degenerate the
    eigenvector is taken as the normalized projection of the first standard
    basis vector that the top eigenspace does not annihilate, so the choice
    never depends on the eigensolver's basis.
    """
    W = hermitian(W)
    d = W.shape[0] if d is None else d
    if W.shape != (d, d):
        raise ValueError(f"W must be {d}x{d}")
    lam, V = np.linalg.eigh(W)
    top = lam[-1]
    if not np.any(W) or top <= 0:
        return np.zeros(d, complex)
    group = V[:, lam >= top - tol.rank_rel * top]
    if group.shape[1] == 1:
        v = group[:, 0]
    else:
        proj = group @ group.conj().T
        norms = np.linalg.norm(proj, axis=0)
        k = int(np.flatnonzero(norms > 1e-6)[0])
        v = proj[:, k] / norms[k]
    lead = np.flatnonzero(np.abs(v) > 1e-12)[0]
    v = v * (abs(v[lead]) / v[lead])
    return float(np.trace(W).real) * v


@dataclass(frozen=True, eq=False)
class SeparationReport:
    alpha0: np.ndarray
    direction: np.ndarray
    exceptional_ts: list
    min_pairwise_dist_sq: float
    c_bound: float
    vectors_norm_ok: bool
    max_norm_error: float = 0.0
    max_orth_defect: float = 0.0
    pairwise_dist_sq: np.ndarray = field(default=None, repr=False)

    @property
    def separated(self) -> bool:
        return self.min_pairwise_dist_sq >= self.c_bound - 1e-6

    def as_dict(self) -> dict:
        return {
            "exceptional_ts": [float(t) for t in self.exceptional_ts],
            "min_pairwise_dist_sq": self.min_pairwise_dist_sq,
            "c_bound": self.c_bound,
            "vectors_norm_ok": self.vectors_norm_ok,
            "max_norm_error": self.max_norm_error,
            "max_orth_defect": self.max_orth_defect,
        }


def selection_vectors(model: PerturbationModel, alpha, nu: MatrixMeasure,
                      tol: Tolerances | None = None, N: int = DEFAULT_N) -> np.ndarray:
    """``Phi(alpha, x)`` at every atom ``x`` of ``nu``; rows are zero off ``F_alpha``."""
    tol = tol or model.tol
    M = spectral_matrix_measure(model, alpha, tol)
    f = np.zeros((nu.n_atoms, model.d), complex)
    pairs = _pairs_within(M.locations, nu.locations, tol.atom_merge)
    if not pairs:
        return f
    cands = sorted({i for i, _ in pairs})
    points = dict(zip(cands, measure_carrier_points(M, N, which=cands)))
    best = {}
    for i, j in pairs:
        gap = abs(M.locations[i] - nu.locations[j])
        if points[i].in_carrier and (j not in best or gap < best[j][0]):
            best[j] = (gap, i)
    for j, (_, i) in best.items():
        f[j] = phi_selection(points[i].W, model.d, tol)
    return f


def separated_family_check(model: PerturbationModel, alpha0, direction,
                           nu: MatrixMeasure, t_list, tol: Tolerances | None = None,
                           N: int = DEFAULT_N, n_samples: int = 200_000,
                           seed: int = 0) -> SeparationReport:
    """Build unit vectors ``f_t = Phi(alpha(t), .)`` in ``L^2(nu; C^d)`` and compare.

    Reports the smallest pairwise ``||f_t - f_t'||^2``, the worst pointwise
    defect ``|(direction f_t(x), f_t'(x))| / (||direction|| |f_t(x)| |f_t'(x)|)``,
    and the sampled orthogonality-distance constant of ``direction``.

    Raises:
        NormalizationImpossible: if some ``t`` has ``nu(F_alpha(t)) = 0``.
    """
    tol = tol or model.tol
    alpha0, direction = hermitian(alpha0), hermitian(direction)
    if not is_positive_definite(direction, tol):
        raise NotPositiveDefinite("line direction must be positive definite")
    ts = sorted(float(t) for t in t_list)
    nu_mass = nu.weights[:, 0, 0].real
    vecs, norm_err = [], 0.0
    for t in ts:
        f = selection_vectors(model, alpha0 + t * direction, nu, tol, N)
        s = float(np.sum(nu_mass * np.sum(np.abs(f) ** 2, axis=1)))
        if s == 0.0:
            raise NormalizationImpossible(f"nu(F_alpha(t)) = 0 at t = {t!r}")
        f = f / np.sqrt(s)
        norm_err = max(norm_err, abs(float(np.sum(nu_mass * np.sum(np.abs(f) ** 2, axis=1))) - 1))
        vecs.append(f)
    m = len(ts)
    dist = np.full((m, m), np.inf)
    orth = 0.0
    scale = opnorm(direction)
    for a in range(m):
        for b in range(a + 1, m):
            diff = vecs[a] - vecs[b]
            dist[a, b] = dist[b, a] = float(np.sum(nu_mass * np.sum(np.abs(diff) ** 2, axis=1)))
            inner = np.abs(np.sum((vecs[a] @ direction.T) * vecs[b].conj(), axis=1))
            sizes = np.linalg.norm(vecs[a], axis=1) * np.linalg.norm(vecs[b], axis=1)
            both = sizes > 0
            if np.any(both):
                orth = max(orth, float(np.max(inner[both] / (scale * sizes[both]))))
    c_hat = ort_distance_constant(direction, n_samples, seed, tol)
    return SeparationReport(
        alpha0=alpha0,
        direction=direction,
        exceptional_ts=ts,
        min_pairwise_dist_sq=float(dist.min()) if m > 1 else float("inf"),
        c_bound=c_hat,
        vectors_norm_ok=norm_err <= 1e-10,
        max_norm_error=norm_err,
        max_orth_defect=orth,
        pairwise_dist_sq=dist,
    )


def perturbed_measure(model: PerturbationModel, alpha, tol: Tolerances | None = None,
                      perturbed=None) -> MatrixMeasure:
    """``M_alpha``, or the measure of an explicitly given operator."""
    return _perturbed_measure(model, hermitian(alpha), perturbed, tol or model.tol)

