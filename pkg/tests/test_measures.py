import numpy as np
import pytest
from hypothesis import given, strategies as st

from adlab.errors import NotUpperHalfPlane
from adlab.linalg import DEFAULT_TOL
from adlab.measures import (DensityPiece, MatrixMeasure, add_measures, atom_at, atomic_measure,
                            cauchy_transform, poisson_extension, scalar_measure, trace_measure)
from conftest import random_psd


def _lebesgue(a, b, m=2, value=1.0):
    return MatrixMeasure(1, density=(DensityPiece(a, b, np.full(m, value)),))


def _arctan_poisson(a, b, x, y):
    return (np.arctan((b - x) / y) - np.arctan((a - x) / y)) / np.pi


def _random_atomic(rng, d, k):
    x = np.sort(rng.uniform(-3, 3, k))
    w = np.array([random_psd(rng, d, int(rng.integers(1, d + 1))) for _ in range(k)])
    return atomic_measure(x, w)


# --- construction --------------------------------------------------------------


def test_measure_invariants_enforced():
    with pytest.raises(ValueError):
        MatrixMeasure(1, [0.0, 0.0], np.ones(2))
    with pytest.raises(ValueError):
        MatrixMeasure(1, [0.0], np.zeros(1))
    with pytest.raises(ValueError):
        DensityPiece(0, 1, np.ones(1))
    M = MatrixMeasure(1, [2.0, -1.0], np.array([1.0, 3.0]))
    assert list(M.locations) == [-1.0, 2.0]


def test_atomic_measure_merges_close_atoms():
    M = scalar_measure([0.0, 5e-9, 1.0], [1.0, 1.0, 2.0])
    assert M.n_atoms == 2
    assert np.isclose(M.locations[0], 2.5e-9)
    assert np.isclose(M.weights[0, 0, 0].real, 2.0)


def test_density_mass_trapezoid():
    piece = DensityPiece(0.0, 2.0, np.array([0.0, 1.0, 2.0]))
    assert np.isclose(piece.mass()[0, 0].real, 2.0)


# --- Cauchy transform ---------------------------------------------------------


def test_cauchy_examples():
    M = MatrixMeasure(2, [0.0], np.eye(2)[None])
    assert np.allclose(cauchy_transform(M, 1j), 1j * np.eye(2))
    a, w, z = 0.7, 2.5, 0.3 + 0.4j
    assert np.isclose(cauchy_transform(scalar_measure([a], [w]), z)[0, 0], w / (a - z))
    two = scalar_measure([-1.0, 1.0], [1.0, 1.0])
    brute = sum(1 / (x - 1j) for x in (-1.0, 1.0))
    assert np.isclose(cauchy_transform(two, 1j)[0, 0], 1j)
    assert np.isclose(brute, 1j)


def test_cauchy_rejects_lower_half_plane():
    M = scalar_measure([0.0], [1.0])
    for z in (1.0, 1 - 1j):
        with pytest.raises(NotUpperHalfPlane):
            cauchy_transform(M, z)
        with pytest.raises(NotUpperHalfPlane):
            poisson_extension(M, z)


def test_cauchy_vectorized_matches_scalar(rng):
    M = _random_atomic(rng, 2, 5)
    z = rng.uniform(-2, 2, 7) + 1j * rng.uniform(0.1, 1, 7)
    batch = cauchy_transform(M, z)
    for k in range(7):
        assert np.allclose(batch[k], cauchy_transform(M, z[k]))


def test_cauchy_of_density_against_analytic_log():
    # int_0^1 ds / (s - z) = log((1 - z) / (-z))
    M = _lebesgue(0.0, 1.0)
    for z in (0.5 + 1j, 0.5 + 1e-6j, -2 + 0.01j):
        exact = np.log(1 - z) - np.log(-z)
        assert abs(cauchy_transform(M, z)[0, 0] - exact) <= 1e-12


def test_linearity_and_conjugate_symmetry(rng):
    for _ in range(20):
        M1, M2 = _random_atomic(rng, 2, 4), _random_atomic(rng, 2, 3)
        z = complex(rng.uniform(-3, 3), rng.uniform(0.05, 2))
        lhs = cauchy_transform(add_measures(M1, M2), z)
        rhs = cauchy_transform(M1, z) + cauchy_transform(M2, z)
        assert np.abs(lhs - rhs).max() <= 1e-12 * max(1, np.abs(rhs).max())
        adj = sum(w / (x - np.conj(z)) for x, w in zip(M1.locations, M1.weights))
        assert np.allclose(cauchy_transform(M1, z).conj().T, adj, atol=1e-12)


# --- Poisson extension --------------------------------------------------------


def test_poisson_examples():
    M = scalar_measure([0.0], [1.0])
    for x, y in [(0.0, 1.0), (0.3, 0.01), (-2.0, 5.0)]:
        assert np.isclose(poisson_extension(M, x + 1j * y)[0, 0], y / (x * x + y * y) / np.pi)
    I2 = MatrixMeasure(2, [0.0], np.eye(2)[None])
    assert np.allclose(poisson_extension(I2, 1j), np.eye(2) / np.pi)


def test_poisson_of_lebesgue_against_arctan():
    R = 1e3
    val = poisson_extension(_lebesgue(-R, R), 1j)[0, 0].real
    assert abs(val - 1) <= 1e-3
    assert abs(val - _arctan_poisson(-R, R, 0.0, 1.0)) <= 1e-12
    for x, y in [(0.0, 1e-3), (0.9, 0.05), (1.5, 0.5)]:
        val = poisson_extension(_lebesgue(-1, 1, 33), x + 1j * y)[0, 0].real
        assert abs(val - _arctan_poisson(-1, 1, x, y)) <= 1e-10


@given(st.integers(1, 3), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_herglotz_property(d, k, seed):
    rng = np.random.default_rng(seed)
    M = _random_atomic(rng, d, k)
    z = rng.uniform(-4, 4, 100) + 1j * 10.0 ** rng.uniform(-6, 1, 100)
    P = poisson_extension(M, z)
    lam = np.linalg.eigvalsh(P)
    assert np.all(lam.min(axis=1) >= -d * DEFAULT_TOL.eig_residual * np.abs(lam).max(axis=1))
    assert np.allclose(P, P.conj().transpose(0, 2, 1))


def test_herglotz_200_random_measures(rng):
    for _ in range(200):
        M = _random_atomic(rng, int(rng.integers(1, 4)), int(rng.integers(1, 6)))
        z = rng.uniform(-4, 4, 100) + 1j * 10.0 ** rng.uniform(-6, 1, 100)
        lam = np.linalg.eigvalsh(poisson_extension(M, z))
        assert np.all(lam.min(axis=1) >= -M.dim * DEFAULT_TOL.eig_residual * np.abs(lam).max(axis=1))


def test_mass_recovery_at_atoms(rng):
    for _ in range(20):
        M = _random_atomic(rng, 2, 4)
        mu = trace_measure(M)
        y = 2.0 ** -30
        for x, w in zip(mu.locations, mu.weights):
            got = y * np.pi * np.trace(poisson_extension(M, x + 1j * y)).real
            assert abs(got - w[0, 0].real) <= 1e-4 * w[0, 0].real


# --- trace measure and atom lookup -------------------------------------------


def test_trace_measure_examples():
    T = trace_measure(MatrixMeasure(2, [0.0], np.diag([1.0, 2.0])[None]))
    assert T.dim == 1 and np.isclose(T.weights[0, 0, 0], 3.0)
    assert trace_measure(MatrixMeasure(2)).n_atoms == 0
    # density with ||W|| <= 1 has trace at most d
    W = np.array([np.diag([1.0, 0.5]), np.diag([0.2, 1.0])])
    T = trace_measure(MatrixMeasure(2, density=(DensityPiece(0, 1, W),)))
    assert np.all(T.density[0].samples.real <= 2)


def test_atom_at_examples():
    w = np.array([2.0])
    M = scalar_measure([1.0], w)
    hit = atom_at(M, 1.0 + 1e-9)
    assert hit is not None and hit[0] == 1.0 and np.isclose(hit[1][0, 0], 2.0)
    assert atom_at(M, 2.0) is None
    gap = 1.5 * DEFAULT_TOL.atom_merge
    two = MatrixMeasure(1, [0.0, gap], np.ones(2))
    assert atom_at(two, gap / 2) is None
