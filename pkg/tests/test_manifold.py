import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from assignflow.manifold import (FLOOR, LabelImage, barycenter, entropy, fisher_rao,
                                 is_assignment, is_tangent, lifted_exp, lifted_exp_inv,
                                 project_tangent, replicator, round_assignment, simplex_exp,
                                 simplex_exp_inv)
from conftest import random_assignment, random_tangent

LN3 = np.log(3.0)
P = np.array([[0.5, 0.5]])

finite = st.floats(-20, 20, allow_nan=False, width=64)


def assignments(m=4, n=3):
    return arrays(np.float64, (m, n), elements=st.floats(-3, 3)).map(
        lambda X: np.exp(X) / np.exp(X).sum(axis=1, keepdims=True))


class TestProjectTangent:
    def test_examples(self):
        assert np.allclose(project_tangent(np.array([[1.0, 0.0]])), [[0.5, -0.5]])
        assert np.allclose(project_tangent(np.full((1, 4), 2.5)), 0.0)
        assert np.allclose(project_tangent(np.array([[3.0, 1.0, 2.0]])), [[1, -1, 0]])

    @given(arrays(np.float64, (3, 5), elements=finite))
    def test_idempotent_and_tangent(self, Z):
        V = project_tangent(Z)
        assert np.allclose(project_tangent(V), V, atol=1e-12)
        assert is_tangent(V, tol=1e-12)


class TestReplicator:
    def test_examples(self):
        assert np.allclose(replicator(P, np.array([[1.0, 0.0]])), [[0.25, -0.25]])
        W = random_assignment(np.random.default_rng(0), 3, 4)
        assert np.allclose(replicator(W, np.full((3, 4), 7.0)), 0.0, atol=1e-15)
        z = np.array([[0.3, -1.7]])
        assert np.allclose(replicator(P, z), 0.5 * project_tangent(z))

    def test_matches_matrix_form(self, rng):
        W = random_assignment(rng, 5, 4)
        Z = rng.standard_normal((5, 4))
        R = replicator(W, Z)
        for i in range(5):
            Ri = np.diag(W[i]) - np.outer(W[i], W[i])
            assert np.allclose(R[i], Ri @ Z[i], atol=1e-15)

    @given(assignments(), arrays(np.float64, (4, 3), elements=finite))
    def test_commutes_with_projection(self, W, Z):
        R = replicator(W, Z)
        assert np.allclose(R, replicator(W, project_tangent(Z)), atol=1e-12)
        assert np.allclose(R, project_tangent(R), atol=1e-12)


class TestExpMaps:
    def test_lifted_examples(self):
        v = np.array([[LN3 / 2, -LN3 / 2]])
        assert np.allclose(lifted_exp(P, v), [[0.9, 0.1]], atol=1e-14)
        assert np.allclose(lifted_exp(P, np.zeros((1, 2))), P)
        assert np.allclose(lifted_exp_inv(P, np.array([[0.9, 0.1]])), v, atol=1e-14)
        assert np.allclose(lifted_exp_inv(P, P), 0.0)

    def test_simplex_examples(self):
        assert np.allclose(simplex_exp(P, np.array([[LN3, 0.0]])), [[0.75, 0.25]])
        assert np.allclose(simplex_exp(P, np.zeros((1, 2))), P)
        assert np.allclose(simplex_exp_inv(P, np.array([[0.75, 0.25]])),
                           [[LN3 / 2, -LN3 / 2]], atol=1e-14)

    def test_no_overflow(self):
        out = simplex_exp(P, np.array([[1e4, 0.0]]))
        assert np.all(np.isfinite(out)) and is_assignment(out)
        assert out[0, 1] == pytest.approx(FLOOR, rel=1e-6)

    @given(assignments(), assignments())
    def test_round_trips(self, W, Q):
        assert np.allclose(lifted_exp(W, lifted_exp_inv(W, Q)), Q, atol=1e-10)
        assert np.allclose(simplex_exp(W, simplex_exp_inv(W, Q)), Q, atol=1e-10)
        assert is_tangent(lifted_exp_inv(W, Q), tol=1e-12)

    @given(assignments(), arrays(np.float64, (4, 3), elements=finite), finite)
    def test_shift_invariance_and_validity(self, W, Z, c):
        out = simplex_exp(W, Z)
        assert np.allclose(out, simplex_exp(W, Z + c), atol=1e-12)
        assert np.all(out > 0) and np.allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_lifted_is_simplex_after_replicator(self, rng):
        W = random_assignment(rng, 6, 3)
        Z = rng.standard_normal((6, 3))
        assert np.allclose(lifted_exp(W, replicator(W, Z)), simplex_exp(W, Z), atol=1e-12)


class TestFisherRao:
    def test_examples(self):
        u = np.array([1.0, -1.0])
        assert fisher_rao(P[0], u, u) == pytest.approx(4.0)
        assert fisher_rao(P[0], np.zeros(2), u) == 0.0

    def test_symmetry(self, rng):
        p = random_assignment(rng, 1, 5)[0]
        u, v = random_tangent(rng, 2, 5)
        assert fisher_rao(p, u, v) == pytest.approx(fisher_rao(p, v, u))

    def test_riemannian_gradient(self, rng):
        # g_p(R_p z, v) = <z, v> for tangent v
        p = random_assignment(rng, 1, 4)
        z = rng.standard_normal((1, 4))
        v = random_tangent(rng, 1, 4)[0]
        assert fisher_rao(p[0], replicator(p, z)[0], v) == pytest.approx(z[0] @ v)


class TestRounding:
    def test_examples(self):
        lab = round_assignment(np.array([[0.99, 0.01], [0.5, 0.5], [0.2, 0.8]]), 0.1)
        assert list(lab.labels) == [0, 0, 1]
        assert list(lab.integral) == [True, False, False]
        assert entropy(np.array([[0.99, 0.01]]))[0] == pytest.approx(0.0560, abs=1e-4)
        assert round_assignment(np.full((1, 3), 1 / 3)).labels[0] == 0

    def test_reshape(self):
        lab = round_assignment(barycenter(6, 2))
        assert isinstance(lab, LabelImage)
        assert lab.reshape(2, 3).shape == (2, 3)

    @given(assignments(), arrays(np.float64, (4,), elements=st.floats(0.1, 10)))
    def test_argmax_invariant_under_row_rescaling(self, W, s):
        W2 = W * s[:, None]
        W2 /= W2.sum(axis=1, keepdims=True)
        assert np.array_equal(round_assignment(W).labels, round_assignment(W2).labels)

    def test_threshold_must_be_positive(self):
        with pytest.raises(ValueError):
            round_assignment(barycenter(2, 2), 0.0)


def test_barycenter():
    B = barycenter(3, 4)
    assert B.shape == (3, 4) and np.all(B == 0.25)
