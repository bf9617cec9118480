"""Hermitian matrix helpers: cone membership, square roots, ranges.

Hermitian matrices are plain complex ``numpy`` arrays. Anything entering the
package goes through :func:`hermitian`, which symmetrizes instead of
rejecting round-off asymmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, NotPSD


@dataclass(frozen=True)
class Tolerances:
    """Numerical cutoffs shared by every module.

    Attributes:
        eig_residual: Relative eigen-solver residual, also used as the slack
            for PSD / positive-definite decisions.
        rank_rel: Relative singular-value cutoff for rank decisions.
        atom_merge: Absolute width on the spectral axis inside which two
            eigenvalues (or atoms) count as the same point.
    """

    eig_residual: float = 1e-10
    rank_rel: float = 1e-9
    atom_merge: float = 1e-8

    def __post_init__(self):
        for name in ("eig_residual", "rank_rel", "atom_merge"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.atom_merge > self.eig_residual:
            raise ValueError("atom_merge must exceed eig_residual")

    def as_dict(self) -> dict:
        return {
            "eig_residual": self.eig_residual,
            "rank_rel": self.rank_rel,
            "atom_merge": self.atom_merge,
        }


DEFAULT_TOL = Tolerances()


def hermitian(H) -> np.ndarray:
    """Return ``(H + H*)/2`` as a complex square array."""
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {H.shape}")
    return (H + H.conj().T) / 2


def opnorm(H) -> float:
    """Spectral norm (largest singular value); 0 for empty input."""
    H = np.asarray(H)
    if H.size == 0:
        return 0.0
    return float(np.linalg.norm(H, 2))


def _psd_slack(H: np.ndarray, tol: Tolerances) -> float:
    return H.shape[0] * tol.eig_residual * opnorm(H)


def is_positive_definite(H, tol: Tolerances = DEFAULT_TOL) -> bool:
    """True iff the smallest eigenvalue clears ``dim * eig_residual * ||H||``.

    Matrices on the boundary of the cone (PSD but singular) are rejected.
    """
    H = hermitian(H)
    lam_min = np.linalg.eigvalsh(H)[0]
    return bool(lam_min > _psd_slack(H, tol))


def psd_sqrt(H, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues that are negative by no more than ``dim * eig_residual * ||H||``
    are clamped to zero.

    Raises:
        NotPSD: if some eigenvalue is more negative than the slack.
    """
    H = hermitian(H)
    lam, V = np.linalg.eigh(H)
    slack = _psd_slack(H, tol)
    if lam[0] < -slack:
        raise NotPSD(f"eigenvalue {lam[0]:.3e} below slack {-slack:.3e}")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return hermitian((V * root) @ V.conj().T)


def range_basis(H, tol: Tolerances = DEFAULT_TOL) -> list[np.ndarray]:
    """Orthonormal eigenvectors spanning ``Ran H``.

    Eigenvalues with ``|lambda| <= rank_rel * max|lambda|`` are treated as zero.
    """
    H = hermitian(H)
    lam, V = np.linalg.eigh(H)
    top = np.max(np.abs(lam)) if lam.size else 0.0
    if top == 0.0:
        return []
    keep = np.abs(lam) > tol.rank_rel * top
    return [V[:, k].copy() for k in np.flatnonzero(keep)]


def ranges_alpha_orthogonal(W, W_alpha, alpha, tol: Tolerances = DEFAULT_TOL):
    """Decide whether ``Ran W`` is orthogonal to ``alpha Ran W_alpha``.

    The defect is ``|| sqrt(W) sqrt(alpha W_alpha alpha) ||``; it vanishes
    exactly when the two ranges are orthogonal.

    Returns:
        ``(orthogonal, defect)``.
    """
    W, W_alpha, alpha = hermitian(W), hermitian(W_alpha), hermitian(alpha)
    if not (W.shape == W_alpha.shape == alpha.shape):
        raise DimensionMismatch(
            f"shapes {W.shape}, {W_alpha.shape}, {alpha.shape} differ"
        )
    tilde = hermitian(alpha @ W_alpha @ alpha)
    defect = opnorm(psd_sqrt(W, tol) @ psd_sqrt(tilde, tol))
    threshold = 1e-7 * (1 + opnorm(W)) * (1 + opnorm(tilde))
    return defect <= threshold, defect


def _unit_complex(rng: np.random.Generator, shape) -> np.ndarray:
    g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def ort_distance_constant(A, n_samples: int = 200_000, seed: int = 0,
                          tol: Tolerances = DEFAULT_TOL) -> float:
    """Sampled estimate of the best ``c`` with
    ``||x - y||^2 >= c (||x||^2 + ||y||^2)`` whenever ``(Ax, y) = 0``.

    ``x`` is uniform on the unit sphere of ``C^d``; ``y`` has a uniform
    direction inside ``(Ax)^perp`` and a log-uniform length in ``[1e-3, 1e3]``.
    The minimum over samples over-estimates the true infimum.
    """
    A = hermitian(A)
    if not is_positive_definite(A, tol):
        raise NotPositiveDefinite("ort_distance_constant needs A > 0")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    A = A / opnorm(A)  # the constraint is scale-invariant; this makes the samples so too
    d = A.shape[0]
    if d == 1:
        # (Ax, y) = 0 forces y = 0 in one dimension
        return 1.0
    rng = np.random.default_rng(seed)
    best = np.inf
    chunk = 50_000
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        x = _unit_complex(rng, (m, d))
        ax = x @ A.T
        ax /= np.linalg.norm(ax, axis=1, keepdims=True)
        g = _unit_complex(rng, (m, d))
        g -= ax * np.sum(ax.conj() * g, axis=1, keepdims=True)
        u = g / np.linalg.norm(g, axis=1, keepdims=True)
        r = 10.0 ** rng.uniform(-3.0, 3.0, size=(m, 1))
        y = r * u
        ratio = np.sum(np.abs(x - y) ** 2, axis=1) / (1.0 + r[:, 0] ** 2)
        best = min(best, float(ratio.min()))
    # flipping y -> -y keeps (Ax, y) = 0, so the infimum never exceeds 1
    return min(best, 1.0)


def ort_distance_constant_exact(A, tol: Tolerances = DEFAULT_TOL) -> float:
    """Closed form ``c(A) = 2 / (1 + kappa)`` with ``kappa`` the condition number.

    The optimum has ``||y|| = ||x||`` and reduces to the largest angle between
    ``x`` and ``Ax``, whose cosine is bounded below by the Kantorovich ratio
    ``2 sqrt(kappa) / (1 + kappa)``.
    """
    A = hermitian(A)
    if not is_positive_definite(A, tol):
        raise NotPositiveDefinite("ort_distance_constant_exact needs A > 0")
    lam = np.linalg.eigvalsh(A)
    kappa = lam[-1] / lam[0]
    return float(2.0 / (1.0 + kappa))


def random_hermitian(d: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Gaussian Hermitian matrix: real diagonal, complex off-diagonal entries."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    H = (G + G.conj().T) / 2
    return hermitian(scale * H)
