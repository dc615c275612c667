"""
Тесты решения систем с кронекеровой структурой
"""
import numpy as np
import pytest

from ketra.exceptions import NumericalError, ShapeError
from ketra.training import KronEigenSystem, kron_ridge_solve, solve_right


def random_psd(rng, n, rank=None):
    m = rng.normal(size=(n, rank or n))
    return m @ m.T


def dense_solve(g1, g2, alpha, rhs):
    p, q = rhs.shape
    system = np.kron(g2, g1) + alpha * np.eye(p * q)
    vec = np.linalg.solve(system, rhs.flatten(order='F'))
    return vec.reshape((p, q), order='F')


class TestKronRidgeSolve:
    @pytest.mark.parametrize('p', range(2, 9))
    def test_matches_dense_direct_solve(self, p):
        rng = np.random.default_rng(p)
        for _ in range(50):
            g1 = random_psd(rng, p)
            g2 = random_psd(rng, p)
            alpha = float(rng.uniform(0.01, 2.0))
            rhs = rng.normal(size=(p, p))

            expected = dense_solve(g1, g2, alpha, rhs)
            actual = kron_ridge_solve(g1, g2, alpha, rhs)

            np.testing.assert_allclose(actual, expected, rtol=1e-8, atol=1e-8 * np.abs(expected).max())

    def test_rectangular_blocks(self, rng):
        g1 = random_psd(rng, 3)
        g2 = random_psd(rng, 5)
        rhs = rng.normal(size=(3, 5))

        r = kron_ridge_solve(g1, g2, 0.5, rhs)

        np.testing.assert_allclose(g1 @ r @ g2 + 0.5 * r, rhs, atol=1e-9)

    def test_singular_system_raises(self, rng):
        g = random_psd(rng, 4, rank=2)

        with pytest.raises(NumericalError):
            kron_ridge_solve(g, g, 0.0, rng.normal(size=(4, 4)))

    def test_negative_alpha_rejected(self, rng):
        with pytest.raises(ValueError):
            kron_ridge_solve(np.eye(2), np.eye(2), -1.0, np.ones((2, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            kron_ridge_solve(np.eye(2), np.eye(2), 1.0, np.ones((3, 2)))


class TestKronEigenSystem:
    def test_batch_matches_single_solves(self, rng):
        system = KronEigenSystem(random_psd(rng, 3), random_psd(rng, 3))
        rhs = rng.normal(size=(4, 3, 3))
        alphas = np.array([0.1, 0.5, 1.0, 2.0])

        batch = system.solve_batch(alphas, rhs)

        for k in range(4):
            single, indefinite = system.solve(alphas[k], rhs[k])
            assert not indefinite
            np.testing.assert_allclose(batch[k], single, atol=1e-12)

    def test_indefinite_fallback_gives_least_norm(self, rng):
        g = random_psd(rng, 4, rank=2)
        system = KronEigenSystem(g, g)
        rhs = g @ rng.normal(size=(4, 4)) @ g

        r, indefinite = system.solve(0.0, rhs, allow_indefinite=True)

        assert indefinite
        np.testing.assert_allclose(g @ r @ g, rhs, atol=1e-8)
        expected = np.linalg.lstsq(np.kron(g, g), rhs.flatten(order='F'), rcond=1e-10)[0]
        np.testing.assert_allclose(r.flatten(order='F'), expected, atol=1e-8)

    def test_negative_shift_is_indefinite(self, rng):
        system = KronEigenSystem(np.eye(2), np.eye(2))

        with pytest.raises(NumericalError):
            system.solve(-2.0, np.ones((2, 2)))

        with pytest.raises(NumericalError):
            system.solve_batch(np.array([1.0, -2.0]), np.ones((2, 2, 2)))


class TestSolveRight:
    def test_solves_right_division(self, rng):
        m = random_psd(rng, 4) + np.eye(4)
        n = rng.normal(size=(6, 4))

        y = solve_right(n, m)

        np.testing.assert_allclose(y @ m, n, atol=1e-10)

    def test_singular_raises(self):
        with pytest.raises(NumericalError):
            solve_right(np.ones((2, 2)), np.zeros((2, 2)))
