"""Finite-dimensional perturbation families ``A_alpha = A + B alpha B*``.

Spectral measures are extracted exactly from eigendecompositions: eigenvalues
closer than ``atom_merge`` form one atom whose weight is ``B* P B`` for the
summed eigenprojection ``P``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, EigensolverFailure, NearSingular,
                     NotCyclic)
from .linalg import DEFAULT_TOL, Tolerances, hermitian, opnorm, random_hermitian
from .measures import MatrixMeasure, cauchy_transform

NEAR_SINGULAR_COND = 1e12


def _cluster_slices(lam: np.ndarray, width: float) -> list[slice]:
    """Split sorted eigenvalues into runs whose consecutive gaps are <= width."""
    cuts = np.flatnonzero(np.diff(lam) > width) + 1
    edges = np.concatenate([[0], cuts, [lam.size]])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def check_cyclic(A, B, tol: Tolerances = DEFAULT_TOL) -> bool:
    """Whether ``Ran B`` is cyclic for ``A``.

    Equivalent to full rank of the Krylov matrix ``[B, AB, ..., A^{n-1}B]``;
    decided spectrally: every eigenspace ``V`` of ``A`` (eigenvalues clustered
    at ``atom_merge``) must satisfy ``rank(V* B) = dim V`` with relative cutoff
    ``rank_rel``. Raw Krylov powers are too ill-conditioned to rank reliably.
    """
    A = hermitian(A)
    B = np.asarray(B, dtype=complex).reshape(A.shape[0], -1)
    scale = opnorm(B)
    if scale == 0.0:
        return False
    lam, V = np.linalg.eigh(A)
    for sl in _cluster_slices(lam, tol.atom_merge):
        Vg = V[:, sl]
        if Vg.shape[1] > B.shape[1]:
            return False
        smin = np.linalg.svd(Vg.conj().T @ B, compute_uv=False)[-1]
        if smin <= tol.rank_rel * scale:
            return False
    return True


def krylov_rank(A, B, tol: Tolerances = DEFAULT_TOL) -> int:
    """Dimension of the block Krylov space of ``(A, B)``.

    Built with block Arnoldi and two passes of Gram-Schmidt; directions whose
    component orthogonal to the current basis falls below
    ``rank_rel * max(||A||, ||B||)`` are discarded.
    """
    A = hermitian(A)
    n = A.shape[0]
    B = np.asarray(B, dtype=complex).reshape(n, -1)
    cut = tol.rank_rel * max(opnorm(A), opnorm(B), 1e-300)
    Q = np.zeros((n, 0), complex)
    X = B
    while Q.shape[1] < n:
        for _ in range(2):
            X = X - Q @ (Q.conj().T @ X)
        U, s, _ = np.linalg.svd(X, full_matrices=False)
        new = U[:, s > cut]
        if new.shape[1] == 0:
            break
        Q = np.hstack([Q, new])
        X = A @ new
    return Q.shape[1]


@dataclass(frozen=True, eq=False)
class PerturbationModel:
    """The pair ``(A, B)`` generating ``A_alpha = A + B alpha B*``.

    Set ``require_cyclic=False`` only for deliberately degenerate control
    models; every generator in this package produces cyclic models.
    """

    A: np.ndarray
    B: np.ndarray
    label: str = ""
    tol: Tolerances = field(default=DEFAULT_TOL, compare=False)
    require_cyclic: bool = field(default=True, compare=False)

    def __post_init__(self):
        A = hermitian(self.A)
        B = np.asarray(self.B, dtype=complex)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"A is {A.shape}, B is {B.shape}")
        s = np.linalg.svd(B, compute_uv=False)
        if s[-1] <= self.tol.rank_rel * s[0]:
            raise ValueError("B must be injective")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.require_cyclic and not check_cyclic(A, B, self.tol):
            raise NotCyclic("Ran B is not cyclic for A")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def cyclic(self) -> bool:
        return check_cyclic(self.A, self.B, self.tol)


def _alpha(model: PerturbationModel, alpha) -> np.ndarray:
    alpha = hermitian(alpha)
    if alpha.shape != (model.d, model.d):
        raise DimensionMismatch(f"alpha must be {model.d}x{model.d}, got {alpha.shape}")
    return alpha


def perturbed_operator(model: PerturbationModel, alpha) -> np.ndarray:
    alpha = _alpha(model, alpha)
    return hermitian(model.A + model.B @ alpha @ model.B.conj().T)


def operator_matrix_measure(H, B, tol: Tolerances = DEFAULT_TOL,
                            warn_dropped: bool = True) -> MatrixMeasure:
    """Matrix spectral measure of ``H`` seen through ``B``: ``B*(H - z)^{-1}B``."""
    H = hermitian(H)
    B = np.asarray(B, dtype=complex).reshape(H.shape[0], -1)
    try:
        lam, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    resid = opnorm(H @ V - V * lam)
    if resid > tol.eig_residual * max(1.0, opnorm(H)) * H.shape[0]:
        raise EigensolverFailure(f"eigen-residual {resid:.2e} too large")
    P = V.conj().T @ B  # rows: B* v_k conjugated
    floor = tol.rank_rel * opnorm(B) ** 2
    locs, wts = [], []
    dropped = 0
    for sl in _cluster_slices(lam, tol.atom_merge):
        rows = P[sl]
        w = rows.conj().T @ rows
        if np.trace(w).real <= floor:
            dropped += 1
            continue
        locs.append(float(lam[sl].mean()))
        wts.append(w)
    if dropped and warn_dropped:
        warnings.warn(f"{dropped} uncharged eigenvalue cluster(s) dropped", RuntimeWarning)
    d = B.shape[1]
    if not locs:
        return MatrixMeasure(d)
    return MatrixMeasure(d, np.array(locs), np.array(wts))


def spectral_matrix_measure(model: PerturbationModel, alpha=None,
                            tol: Tolerances | None = None) -> MatrixMeasure:
    """Exact atomic ``M_alpha`` with ``B*(A_alpha - z)^{-1}B = int (s - z)^{-1} dM_alpha``."""
    tol = tol or model.tol
    if alpha is None:
        alpha = np.zeros((model.d, model.d))
    H = perturbed_operator(model, alpha)
    return operator_matrix_measure(H, model.B, tol, warn_dropped=model.require_cyclic)


def perturbed_cauchy(model: PerturbationModel, alpha, z, tol: Tolerances | None = None,
                     diagnostics: bool = False):
    """``CM_alpha(z)`` from the unperturbed transform: ``CM (I + alpha CM)^{-1}``.

    ``CM`` comes from the exact atomic measure of ``A``, never from a resolvent
    solve. With ``diagnostics=True`` also returns the discrepancy against the
    other factorization ``(I + CM alpha)^{-1} CM``.

    Raises:
        NearSingular: if ``cond(I + alpha CM(z)) > 1e12``.
    """
    alpha = _alpha(model, alpha)
    M0 = spectral_matrix_measure(model, None, tol)
    C = cauchy_transform(M0, z)
    batched = C.ndim == 3
    C = C if batched else C[None]
    eye = np.eye(model.d)
    K = eye + alpha @ C
    cond = np.linalg.cond(K)
    if np.any(~np.isfinite(cond)) or np.any(cond > NEAR_SINGULAR_COND):
        raise NearSingular(f"cond(I + alpha CM) = {np.max(cond):.2e}")
    # X K = C  <=>  K^T X^T = C^T
    right = np.linalg.solve(K.transpose(0, 2, 1), C.transpose(0, 2, 1)).transpose(0, 2, 1)
    out = right if batched else right[0]
    if not diagnostics:
        return out
    left = np.linalg.solve(eye + C @ alpha, C)
    gap = float(np.max(np.linalg.norm(right - left, ord=2, axis=(1, 2))))
    return out, gap


def verify_resolvent_relation(model: PerturbationModel, alpha, z_grid,
                              tol: Tolerances | None = None) -> float:
    """Max deviation between the perturbation formula and the exact spectral path."""
    z = np.asarray(z_grid, dtype=complex).reshape(-1)
    if np.any(z.imag < 1e-6):
        raise ValueError("grid points need Im z >= 1e-6")
    via_formula = perturbed_cauchy(model, alpha, z, tol)
    via_spectrum = cauchy_transform(spectral_matrix_measure(model, alpha, tol), z)
    return float(np.max(np.linalg.norm(via_formula - via_spectrum, ord=2, axis=(1, 2))))


# --- model generators -------------------------------------------------------


def _cyclic_vector(rng: np.random.Generator, n: int) -> np.ndarray:
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return b / np.linalg.norm(b)


def _simple_spectrum_hermitian(rng: np.random.Generator, n: int,
                               min_gap: float = 1e-3) -> np.ndarray:
    while True:
        A = random_hermitian(n, int(rng.integers(2**63 - 1)), 1.0 / np.sqrt(2 * n))
        lam = np.linalg.eigvalsh(A)
        if n == 1 or np.min(np.diff(lam)) > min_gap:
            return A


def random_model(n: int, d: int, seed: int, tol: Tolerances = DEFAULT_TOL,
                 label: str = "random") -> PerturbationModel:
    """Gaussian ``A`` (norm of order one) and Gaussian ``B`` with near-unit columns."""
    if not 1 <= d <= n:
        raise ValueError("need 1 <= d <= n")
    rng = np.random.default_rng(seed)
    while True:
        A = random_hermitian(n, int(rng.integers(2**63 - 1)), 1.0 / np.sqrt(2 * n))
        B = (rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))) / np.sqrt(2 * n)
        if check_cyclic(A, B, tol):
            return PerturbationModel(A, B, label, tol)


def rank_one_model(n: int, seed: int, tol: Tolerances = DEFAULT_TOL) -> PerturbationModel:
    return random_model(n, 1, seed, tol, label="rank-one")


def direct_sum_model(base_dim: int, copies: int, seed: int,
                     tol: Tolerances = DEFAULT_TOL) -> PerturbationModel:
    """``A = A0 + ... + A0`` (``copies`` blocks), column ``k`` of ``B`` is ``b0`` in slot ``k``.

    ``A0`` has simple spectrum and ``b0`` is cyclic for it, so diagonal
    ``alpha = diag(a_1, ..., a_d)`` decouples into rank-one problems
    ``A0 + a_k b0 b0*``.
    """
    if copies < 2:
        raise ValueError("direct-sum models need copies >= 2")
    rng = np.random.default_rng(seed)
    A0 = _simple_spectrum_hermitian(rng, base_dim)
    b0 = _cyclic_vector(rng, base_dim)
    A = np.kron(np.eye(copies), A0)
    B = np.kron(np.eye(copies), b0[:, None])
    return PerturbationModel(A, B, f"direct-sum({base_dim}x{copies})", tol)


def direct_sum_parts(model: PerturbationModel, copies: int):
    """Recover ``(A0, b0)`` from a model built by :func:`direct_sum_model`."""
    m = model.n // copies
    return model.A[:m, :m], model.B[:m, 0]


def block_swap_model(base_dim: int, shift: float, seed: int,
                     tol: Tolerances = DEFAULT_TOL) -> PerturbationModel:
    """``A = A0 + A1`` with ``A1 = A0 + shift * b0 b0*`` and ``B = [b0 + 0, 0 + b0]``.

    For ``alpha = diag(shift, -shift)`` the blocks trade places,
    ``A_alpha = A1 + A0``, so every eigenvalue of ``A`` is also an eigenvalue
    of ``A_alpha`` (seen through the other column of ``B``).
    """
    if shift == 0:
        raise ValueError("shift must be non-zero")
    rng = np.random.default_rng(seed)
    A0 = _simple_spectrum_hermitian(rng, base_dim)
    b0 = _cyclic_vector(rng, base_dim)
    A1 = A0 + shift * np.outer(b0, b0.conj())
    A = np.block([[A0, np.zeros_like(A0)], [np.zeros_like(A0), A1]])
    B = np.kron(np.eye(2), b0[:, None])
    return PerturbationModel(A, B, f"block-swap({base_dim}, {shift:g})", tol)


@dataclass(frozen=True, eq=False)
class ControlCase:
    """A model together with an explicitly supplied "perturbed" operator."""

    model: PerturbationModel
    alpha: np.ndarray
    perturbed: np.ndarray


def noncyclic_control(base_dim: int, strength: float, seed: int,
                      tol: Tolerances = DEFAULT_TOL) -> ControlCase:
    """Negative control where the invariants are expected to break.

    ``A = A0 + A0`` observed through ``b = (b0 + b0)/sqrt(2)`` (not cyclic),
    and the perturbation ``strength * b0 b0*`` acts on the first block only.
    That operator is not of the form ``A + b alpha b*``, the spectrum of the
    second block is shared by both measures, and the rank-one orthogonality
    defect equals ``|strength|`` there.
    """
    rng = np.random.default_rng(seed)
    A0 = _simple_spectrum_hermitian(rng, base_dim)
    b0 = _cyclic_vector(rng, base_dim)
    Z = np.zeros_like(A0)
    A = np.block([[A0, Z], [Z, A0]])
    b = np.concatenate([b0, b0]) / np.sqrt(2)
    model = PerturbationModel(A, b[:, None], "noncyclic-control", tol, require_cyclic=False)
    H = np.block([[A0 + strength * np.outer(b0, b0.conj()), Z], [Z, A0]])
    return ControlCase(model, np.array([[strength]], dtype=complex), hermitian(H))
