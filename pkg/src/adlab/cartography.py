"""Mapping the exceptional hull: line intersections, slice sweeps, box counting.

Along a line ``alpha0 + t * direction`` with ``direction > 0`` every sorted
eigenvalue of ``A_alpha(t)`` is non-decreasing in ``t``, so the parameters
where a fixed atom ``x`` of ``nu`` becomes an eigenvalue are isolated roots
found by bracketing and bisection. Slices evaluate hull membership on grids;
a batched eigenvalue prefilter keeps the full carrier detectors to the few
nodes that come near an atom of ``nu``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .carriers import DEFAULT_N, in_extended_exceptional
from .errors import DegenerateInput, NotPositiveDefinite
from .linalg import Tolerances, hermitian, is_positive_definite
from .measures import MatrixMeasure
from .model import PerturbationModel

ROOT_TOL = 1e-11
ROOT_MERGE = 1e-9
CHUNK = 8192


@dataclass(frozen=True, eq=False)
class LineSpec:
    alpha0: np.ndarray
    direction: np.ndarray
    t_range: tuple
    resolution: int = 64

    def __post_init__(self):
        object.__setattr__(self, "alpha0", hermitian(self.alpha0))
        object.__setattr__(self, "direction", hermitian(self.direction))
        t0, t1 = (float(v) for v in self.t_range)
        if not t0 < t1:
            raise ValueError("t_range must satisfy t_min < t_max")
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if self.alpha0.shape != self.direction.shape:
            raise ValueError("alpha0 and direction differ in shape")
        if not is_positive_definite(self.direction):
            raise NotPositiveDefinite("line direction must be positive definite")
        object.__setattr__(self, "t_range", (t0, t1))

    def at(self, t) -> np.ndarray:
        """``alpha(t)``; vectorized over ``t`` (returns ``(len(t), d, d)``)."""
        t = np.asarray(t, dtype=float)
        return self.alpha0 + t[..., None, None] * self.direction


@dataclass(frozen=True, eq=False)
class SliceSpec:
    """Affine slice ``base + sum_k u_k axes[k]`` on a product grid.

    Axes are orthonormalized (Frobenius inner product) in the given order.
    """

    base: np.ndarray
    axes: tuple
    ranges: tuple
    counts: tuple

    def __post_init__(self):
        base = hermitian(self.base)
        axes = [hermitian(a) for a in self.axes]
        if not 1 <= len(axes) <= 3:
            raise ValueError("slices have 1 to 3 axes")
        if len(self.ranges) != len(axes) or len(self.counts) != len(axes):
            raise ValueError("need one range and one count per axis")
        flat = np.array([a.reshape(-1) for a in axes])
        gram = (flat.conj() @ flat.T).real
        if np.linalg.cond(gram) >= 1e8:
            raise ValueError("slice axes are (numerically) linearly dependent")
        ortho = []
        for a in axes:
            v = a.copy()
            for q in ortho:
                v = v - np.vdot(q, v).real * q
            ortho.append(v / np.linalg.norm(v))
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "axes", tuple(ortho))
        object.__setattr__(self, "ranges", tuple((float(a), float(b)) for a, b in self.ranges))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    def coordinates(self) -> list[np.ndarray]:
        return [np.linspace(a, b, c) for (a, b), c in zip(self.ranges, self.counts)]

    def pitch(self) -> float:
        return min((b - a) / (c - 1) for (a, b), c in zip(self.ranges, self.counts) if c > 1)


@dataclass(frozen=True, eq=False)
class DimensionEstimate:
    scales: np.ndarray
    counts: np.ndarray
    slope: float
    r_squared: float

    def as_dict(self) -> dict:
        return {
            "scales": [float(s) for s in self.scales],
            "counts": [int(c) for c in self.counts],
            "slope": self.slope,
            "r_squared": self.r_squared,
        }


@dataclass(frozen=True, eq=False)
class SliceResult:
    spec: SliceSpec
    flags: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)


# --- batched eigenvalues ------------------------------------------------------


def _batched_operators(model: PerturbationModel, alphas: np.ndarray) -> np.ndarray:
    B = model.B
    return model.A + np.einsum("ia,kab,jb->kij", B, alphas, B.conj())


def _batched_eigvalsh(model: PerturbationModel, alphas: np.ndarray) -> np.ndarray:
    out = np.empty((alphas.shape[0], model.n))
    for s in range(0, alphas.shape[0], CHUNK):
        out[s:s + CHUNK] = np.linalg.eigvalsh(_batched_operators(model, alphas[s:s + CHUNK]))
    return out


def exceptional_flags(model: PerturbationModel, alphas, nu: MatrixMeasure,
                      tol: Tolerances | None = None, N: int = DEFAULT_N) -> np.ndarray:
    """``in_extended_exceptional`` for a stack of parameters ``(K, d, d)``.

    Nodes with no eigenvalue within ``(n + 1) * atom_merge`` of an atom of
    ``nu`` cannot be exceptional (an atom is a cluster mean of eigenvalues
    spanning at most ``(n - 1) * atom_merge``), so only the others are run
    through the full detector.
    """
    tol = tol or model.tol
    alphas = np.asarray(alphas, dtype=complex).reshape(-1, model.d, model.d)
    flags = np.zeros(alphas.shape[0], dtype=bool)
    if nu.n_atoms == 0 or alphas.shape[0] == 0:
        return flags
    lam = _batched_eigvalsh(model, alphas)
    window = (model.n + 1) * tol.atom_merge
    x = nu.locations
    pos = np.searchsorted(x, lam)
    lo = np.abs(lam - x[np.clip(pos - 1, 0, x.size - 1)])
    hi = np.abs(lam - x[np.clip(pos, 0, x.size - 1)])
    near = np.any(np.minimum(lo, hi) <= window, axis=1)
    for k in np.flatnonzero(near):
        flags[k] = in_extended_exceptional(model, alphas[k], nu, tol, N)
    return flags


# --- line intersections -------------------------------------------------------


def line_exceptional_ts(model: PerturbationModel, line: LineSpec, nu: MatrixMeasure,
                        tol: Tolerances | None = None) -> list[float]:
    """Parameters ``t`` in ``t_range`` where some atom of ``nu`` is an eigenvalue of ``A_alpha(t)``.

    Each (sorted eigenvalue branch, atom) pair has at most one root because
    branches are monotone; roots are bracketed on the ``resolution`` grid and
    bisected down to floating-point resolution in ``t``. Roots whose residual
    ``|lambda_k(t) - x|`` exceeds ``1e-11`` are discarded, and roots closer
    than ``1e-9`` are merged.
    """
    if line.alpha0.shape != (model.d, model.d):
        raise ValueError("line lives in the wrong parameter space")
    x = nu.locations
    if x.size == 0:
        return []
    t0, t1 = line.t_range
    grid = np.linspace(t0, t1, line.resolution)
    lam = _batched_eigvalsh(model, line.at(grid))  # (R, n)
    # bracket: first grid index with lambda_k >= x (branches are non-decreasing)
    above = lam[:, :, None] >= x[None, None, :]  # (R, n, m)
    has = (lam[-1][:, None] >= x[None, :] - ROOT_TOL) & (lam[0][:, None] <= x[None, :] + ROOT_TOL)
    ks, js = np.nonzero(has)
    if ks.size == 0:
        return []
    target = x[js]
    reached = above[-1, ks, js]
    first = np.where(reached, np.argmax(above[:, ks, js], axis=0), line.resolution - 1)
    hi = grid[first].copy()
    lo = grid[np.maximum(first - 1, 0)].copy()
    roots = np.full(ks.size, np.nan)
    # crossings at the ends of the range or exactly on a node need no search
    settled = ~reached | (first == 0) | (lam[first, ks] == target)
    roots[settled] = hi[settled]
    active = ~settled
    # bisect to floating-point resolution in t, not just to the residual
    # tolerance: shallow branches would otherwise scatter one crossing over
    # more than ROOT_MERGE
    for _ in range(200):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        vals = _batched_eigvalsh(model, line.at(mid))[np.arange(idx.size), ks[idx]]
        diff = vals - target[idx]
        go_up = diff < 0
        lo[idx] = np.where(go_up, mid, lo[idx])
        hi[idx] = np.where(go_up, hi[idx], mid)
        done = (diff == 0) | ((hi[idx] - lo[idx]) <= 2 * np.spacing(np.maximum(np.abs(mid), 1.0)))
        roots[idx[done]] = mid[done]
        active[idx[done]] = False
    ok = ~np.isnan(roots)
    if np.any(ok):
        resid = np.abs(_batched_eigvalsh(model, line.at(roots[ok]))[np.arange(ok.sum()), ks[ok]]
                       - target[ok])
        ok[np.flatnonzero(ok)[resid > ROOT_TOL]] = False
    roots = np.sort(roots[ok])
    merged: list[float] = []
    for r in roots:
        if not merged or r - merged[-1] > ROOT_MERGE:
            merged.append(float(r))
    return merged


# --- slices -------------------------------------------------------------------


def slice_sweep(model: PerturbationModel, spec: SliceSpec, nu: MatrixMeasure,
                tol: Tolerances | None = None, N: int = DEFAULT_N,
                threads: int = 1) -> SliceResult:
    """Hull membership at every node of the slice grid.

    Returns the boolean field (shape ``counts``) and the coordinates of the
    exceptional nodes as an ``(K, m)`` array in C order of the grid.
    """
    coords = spec.coordinates()
    mesh = np.meshgrid(*coords, indexing="ij")
    U = np.stack([m.reshape(-1) for m in mesh], axis=1)  # (K, m)
    axes = np.array(spec.axes)
    chunks = [U[s:s + CHUNK] for s in range(0, U.shape[0], CHUNK)]
    jobs = [(model, spec.base, axes, c, nu, tol, N) for c in chunks]
    flags = np.concatenate(parallel_map(_slice_chunk, jobs, threads)) if jobs else np.zeros(0, bool)
    return SliceResult(spec, flags.reshape(spec.counts), U[flags])


def _slice_chunk(job) -> np.ndarray:
    model, base, axes, U, nu, tol, N = job
    alphas = base + np.einsum("km,mab->kab", U, axes)
    return exceptional_flags(model, alphas, nu, tol, N)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map; ``threads=0`` means one worker per CPU."""
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads or None) as pool:
        return list(pool.map(fn, items))


# --- box counting -------------------------------------------------------------


def box_counting_dimension(points, scales, grid_pitch: float | None = None) -> DimensionEstimate:
    """Least-squares slope of ``log N(eps)`` against ``log(1/eps)``.

    Boxes are axis-aligned, anchored at the lower corner of the bounding box.
    A cloud of identical points (any size, even one) has slope 0.

    Raises:
        DegenerateInput: for fewer than 100 distinct-valued points or
            non-finite coordinates.
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] == 0 or not np.all(np.isfinite(P)):
        raise DegenerateInput("need finite points")
    single = bool(np.all(P == P[0]))
    if P.shape[0] < 100 and not single:
        raise DegenerateInput("need at least 100 points")
    eps = np.sort(np.asarray(scales, dtype=float).reshape(-1))[::-1]
    if eps.size < 4 or np.any(eps <= 0) or np.any(np.diff(eps) == 0):
        raise ValueError("need at least 4 distinct positive scales")
    if eps[0] / eps[-1] < 100 * (1 - 1e-12):
        raise ValueError("scales must span at least two decades")
    if grid_pitch is not None and eps[-1] < 2 * grid_pitch:
        raise ValueError("smallest scale must be at least twice the grid pitch")
    corner = P.min(axis=0)
    extent = P.max(axis=0) - corner
    counts = []
    for e in eps:
        # boxes are closed on the far side of the bounding box, so a point on
        # its upper edge does not open a box of its own
        top = np.maximum(np.ceil(extent / e) - 1, 0)
        idx = np.minimum(np.floor((P - corner) / e), top).astype(np.int64)
        counts.append(np.unique(idx, axis=0).shape[0])
    counts = np.array(counts)
    X = np.log(1.0 / eps)
    Y = np.log(counts.astype(float))
    if np.ptp(Y) == 0:
        return DimensionEstimate(eps, counts, 0.0, 1.0)
    slope, icept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icept)
    r2 = 1.0 - float(np.sum(resid ** 2) / np.sum((Y - Y.mean()) ** 2))
    return DimensionEstimate(eps, counts, float(slope), r2)
