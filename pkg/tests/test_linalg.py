import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from losscurv.errors import InvalidInput, NotPositiveSemidefinite
from losscurv.linalg import as_sym, eig_sym, is_psd, matrix_norms, sqrt_psd


def random_sym(rng, q):
    a = rng.normal(size=(q, q))
    return 0.5 * (a + a.T)


def test_identity_eigenvalues():
    np.testing.assert_allclose(eig_sym(np.eye(3)).eigenvalues, [1, 1, 1], atol=1e-15)


def test_diagonal_sorted():
    np.testing.assert_allclose(eig_sym(np.diag([3.0, 1.0, 2.0])).eigenvalues, [1, 2, 3])


def test_rank_one_update():
    v = np.array([1.0, 2.0, 2.0])
    evals = eig_sym(np.eye(3) + np.outer(v, v)).eigenvalues
    np.testing.assert_allclose(evals, [1, 1, 10], atol=1e-12)


def test_non_finite_rejected():
    with pytest.raises(InvalidInput):
        eig_sym(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_upper_triangle_authoritative():
    a = as_sym([[1.0, 2.0], [5.0, 3.0]])
    assert a[1, 0] == a[0, 1] == 2.0


def test_one_by_one():
    d = eig_sym([[4.0]])
    assert d.eigenvalues[0] == 4.0 and d.eigenvectors[0, 0] == 1.0


@pytest.mark.parametrize("q", [2, 3, 5, 8, 13, 20])
def test_reconstruction_and_orthonormality(q):
    rng = np.random.default_rng(q)
    for _ in range(5):
        a = random_sym(rng, q) * rng.uniform(0.1, 100)
        evals, evecs = eig_sym(a)
        scale = max(1.0, np.linalg.norm(a))
        assert np.linalg.norm(evecs @ np.diag(evals) @ evecs.T - a) <= 1e-10 * scale
        assert np.linalg.norm(evecs.T @ evecs - np.eye(q)) <= 1e-10
        assert np.all(np.diff(evals) >= 0)
        np.testing.assert_allclose(evals, np.linalg.eigvalsh(a), atol=1e-10 * scale)


def test_repeated_and_degenerate_spectrum():
    rng = np.random.default_rng(7)
    qmat, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = qmat @ np.diag([2, 2, 2, -1, -1, 0.0]) @ qmat.T
    evals, evecs = eig_sym(a)
    np.testing.assert_allclose(evals, [-1, -1, 0, 2, 2, 2], atol=1e-12)
    assert np.linalg.norm(evecs.T @ evecs - np.eye(6)) <= 1e-10


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(-1e3, 1e3)))
def test_eig_invariants_property(raw):
    a = as_sym(raw)
    evals, evecs = eig_sym(a)
    scale = max(1.0, np.linalg.norm(a))
    assert np.linalg.norm(evecs @ np.diag(evals) @ evecs.T - a) <= 1e-10 * scale
    assert np.linalg.norm(evecs.T @ evecs - np.eye(4)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_rank_one_lemma_property(q, seed):
    v = np.random.default_rng(seed).normal(size=q)
    evals = eig_sym(np.eye(q) + np.outer(v, v)).eigenvalues
    np.testing.assert_allclose(evals[-1], 1 + v @ v, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(evals[:-1], np.ones(q - 1), atol=1e-10 * max(1.0, v @ v))


@pytest.mark.parametrize(
    "a, expected",
    [
        (np.diag([1.0, 1.0]), (2.0, np.sqrt(2.0), 2.0, 2.0)),
        (np.diag([2.0, -2.0]), (4.0, np.sqrt(8.0), 0.0, 8.0)),
        (np.diag([2.0, 0.0]), (2.0, 2.0, 2.0, 4.0)),
        (np.diag([0.0, 2.0]), (2.0, 2.0, 2.0, 4.0)),
    ],
)
def test_matrix_norms(a, expected):
    np.testing.assert_allclose(tuple(matrix_norms(a)), expected, atol=1e-14)


def test_norm_identity_on_random_psd():
    rng = np.random.default_rng(11)
    for _ in range(50):
        q = rng.integers(1, 20)
        b = rng.normal(size=(q, q))
        a = b @ b.T
        n = matrix_norms(a)
        lhs = n.trace**2 - n.trace_sq
        rhs = n.nuclear**2 - n.frobenius**2
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(lhs), n.trace**2)


def test_sqrt_psd_examples():
    np.testing.assert_allclose(sqrt_psd(np.eye(3)).root, np.eye(3), atol=1e-14)
    res = sqrt_psd(np.diag([4.0, 9.0]))
    np.testing.assert_allclose(res.root, np.diag([2.0, 3.0]), atol=1e-14)
    assert not res.clamped


def test_sqrt_psd_clamps_roundoff_negatives():
    res = sqrt_psd(np.diag([1.0, -1e-12]))
    assert res.clamped
    np.testing.assert_allclose(res.root, np.diag([1.0, 0.0]), atol=1e-15)
    assert res.min_eigenvalue == pytest.approx(-1e-12)


def test_sqrt_psd_rejects_indefinite():
    with pytest.raises(NotPositiveSemidefinite) as info:
        sqrt_psd(np.diag([1.0, -0.5]))
    assert info.value.min_eigenvalue == pytest.approx(-0.5)


def test_sqrt_psd_random_reconstruction():
    rng = np.random.default_rng(5)
    for q in (2, 5, 10):
        b = rng.normal(size=(q, q - 1))
        a = b @ b.T  # rank deficient
        root = sqrt_psd(a).root
        w, v = np.linalg.eigh(a)
        a_plus = (v * np.clip(w, 0, None)) @ v.T
        assert np.linalg.norm(root @ root - a_plus) <= 1e-8 * max(1.0, np.linalg.norm(a))


def test_is_psd():
    assert is_psd(np.diag([1.0, 0.0]))
    assert not is_psd(np.diag([1.0, -1.0]))
