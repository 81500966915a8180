import numpy as np
import pytest

from fdsec.linalg import (
    embed_real,
    eigvals_herm,
    herm_eig,
    is_psd,
    numerical_rank,
    pseudoinverse_full_col_rank,
    solve_spd,
    unembed_hermitian,
)


def random_hermitian(rng, n):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (m + m.conj().T)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestHermEig:
    def test_identity(self):
        w, u = herm_eig(np.eye(3))
        assert np.allclose(w, 1.0)
        assert np.allclose(u.conj().T @ u, np.eye(3), atol=1e-12)

    def test_rank_one(self):
        rng = np.random.default_rng(0)
        w_vec = random_complex(rng, 4)
        w_vec /= np.linalg.norm(w_vec)
        vals, vecs = herm_eig(np.outer(w_vec, w_vec.conj()))
        assert np.allclose(vals, [1, 0, 0, 0], atol=1e-12)
        # leading eigenvector equals w up to a unit phase
        overlap = abs(np.vdot(vecs[:, 0], w_vec))
        assert overlap == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16])
    def test_reconstruction(self, n):
        rng = np.random.default_rng(n)
        for _ in range(5):
            h = random_hermitian(rng, n)
            vals, vecs = herm_eig(h)
            rec = (vecs * vals) @ vecs.conj().T
            assert np.linalg.norm(rec - h) <= 1e-9 * max(1.0, np.linalg.norm(h))
            gram = vecs.conj().T @ vecs
            assert np.abs(gram - np.eye(n)).max() <= 1e-10
            assert np.all(np.diff(vals) <= 1e-12)

    def test_degenerate_spectrum(self):
        # repeated complex eigenvalues exercise the eigenvector recovery
        rng = np.random.default_rng(3)
        q, _ = np.linalg.qr(random_complex(rng, 6, 6))
        h = q @ np.diag([2.0, 2.0, 2.0, -1.0, -1.0, 0.5]) @ q.conj().T
        h = 0.5 * (h + h.conj().T)
        vals, vecs = herm_eig(h)
        rec = (vecs * vals) @ vecs.conj().T
        assert np.linalg.norm(rec - h) <= 1e-9 * np.linalg.norm(h)
        assert np.abs(vecs.conj().T @ vecs - np.eye(6)).max() <= 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            herm_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            herm_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestPseudoinverse:
    def test_single_column(self):
        rng = np.random.default_rng(1)
        g = random_complex(rng, 5)
        pinv = pseudoinverse_full_col_rank(g[:, None])
        assert np.allclose(pinv, g.conj()[None, :] / np.linalg.norm(g) ** 2)

    def test_unitary_columns(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(random_complex(rng, 6, 3))
        pinv = pseudoinverse_full_col_rank(q)
        assert np.allclose(pinv, q.conj().T, atol=1e-12)

    def test_defining_identity(self):
        rng = np.random.default_rng(3)
        q = random_complex(rng, 8, 3)
        pinv = pseudoinverse_full_col_rank(q)
        assert np.abs(pinv @ q - np.eye(3)).max() <= 1e-9

    def test_moore_penrose(self):
        rng = np.random.default_rng(4)
        q = random_complex(rng, 7, 4)
        p = pseudoinverse_full_col_rank(q)
        assert np.abs(q @ p @ q - q).max() <= 1e-8
        assert np.abs(p @ q @ p - p).max() <= 1e-8
        assert np.abs((q @ p) - (q @ p).conj().T).max() <= 1e-8
        assert np.abs((p @ q) - (p @ q).conj().T).max() <= 1e-8

    def test_rank_deficient_raises(self):
        g = np.ones((4, 1), dtype=complex)
        q = np.hstack([g, 2 * g])
        with pytest.raises(np.linalg.LinAlgError):
            pseudoinverse_full_col_rank(q)

    def test_wide_matrix_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            pseudoinverse_full_col_rank(np.ones((2, 3), dtype=complex))


class TestPsd:
    def test_identity(self):
        assert is_psd(np.eye(4), 1e-12)

    def test_indefinite(self):
        assert not is_psd(np.diag([1.0, -1.0]), 1e-9)

    def test_near_boundary(self):
        assert is_psd(np.diag([1.0, -1e-12]), 1e-9)

    def test_numerical_rank(self):
        rng = np.random.default_rng(5)
        w = random_complex(rng, 6)
        assert numerical_rank(np.outer(w, w.conj())) == 1
        assert numerical_rank(np.zeros((3, 3))) == 0
        assert numerical_rank(np.eye(6)) == 6


class TestEmbedding:
    def test_real_matrix_block_copy(self):
        h = np.array([[2.0, 1.0], [1.0, 3.0]])
        e = embed_real(h)
        assert np.allclose(e[:2, :2], h)
        assert np.allclose(e[2:, 2:], h)
        assert np.allclose(e[:2, 2:], 0)

    def test_eigenvalue_doubling(self):
        h = np.array([[0.0, -1j], [1j, 0.0]])
        w_h = eigvals_herm(h)
        w_e = np.sort(np.linalg.eigvalsh(embed_real(h)))[::-1]
        assert np.allclose(w_e, np.repeat(w_h, 2), atol=1e-12)

    def test_psd_preserved(self):
        rng = np.random.default_rng(6)
        m = random_complex(rng, 4, 4)
        h = m @ m.conj().T
        assert np.linalg.eigvalsh(embed_real(h)).min() >= -1e-12

    def test_linear_and_trace_doubling(self):
        rng = np.random.default_rng(7)
        h1 = random_hermitian(rng, 5)
        h2 = random_hermitian(rng, 5)
        alpha = 1.7
        assert np.allclose(embed_real(alpha * h1 + h2), alpha * embed_real(h1) + embed_real(h2))
        assert np.trace(embed_real(h1)) == pytest.approx(2 * np.trace(h1).real)

    def test_unembed_round_trip(self):
        rng = np.random.default_rng(8)
        h = random_hermitian(rng, 4)
        assert np.abs(unembed_hermitian(embed_real(h)) - h).max() <= 1e-14

    def test_unembed_rejects_asymmetry(self):
        bad = np.eye(4)
        bad[0, 0] = 2.0  # breaks the duplicated-block structure
        with pytest.raises(ValueError):
            unembed_hermitian(bad)


class TestSolveSpd:
    def test_identity(self):
        b = np.array([1.0, -2.0, 3.0])
        assert np.allclose(solve_spd(np.eye(3), b), b)

    def test_diagonal(self):
        x = solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
        assert np.allclose(x, [1.0, 1.0])

    def test_residual_oracle(self):
        rng = np.random.default_rng(9)
        for n in (3, 8, 20):
            r = rng.standard_normal((n, n))
            m = r.T @ r + 0.1 * np.eye(n)
            b = rng.standard_normal(n)
            x = solve_spd(m, b)
            resid = np.linalg.norm(m @ x - b)
            bound = 1e-9 * (np.linalg.norm(m) * np.linalg.norm(x) + np.linalg.norm(b))
            assert resid <= bound

    def test_indefinite_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            solve_spd(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))

    def test_asymmetric_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.array([1.0, 1.0]))
