import math

import numpy as np
import pytest

from emocaps.capsule import (
    CapsuleParams,
    capsule_backward,
    capsule_layer,
    capsule_layer_backward,
    dynamic_routing,
    init_capsule,
    predict_vectors,
    routing_backward,
    squash,
    squash_backward,
)
from emocaps.errors import ShapeMismatch
from emocaps.nn import finite_diff_check


def random_capsule(J, d_in, d_out, seed, scale=0.6):
    rng = np.random.default_rng(seed)
    return CapsuleParams(W=rng.normal(scale=scale, size=(J, d_in, d_out)))


# --- straight-line oracle: each routing iteration written out explicitly ---


def _softmax_rows(B):
    out = []
    for row in B:
        mx = max(row)
        exps = [math.exp(v - mx) for v in row]
        total = sum(exps)
        out.append([e / total for e in exps])
    return out


def _squash_list(s):
    sq = sum(v * v for v in s)
    if sq == 0.0:
        return [0.0] * len(s)
    scale = math.sqrt(sq) / (1.0 + sq)
    return [v * scale for v in s]


def _coupled_sums(C, U, n, J, d):
    return [
        [sum(C[i][j] * U[i][j][o] for i in range(n)) for o in range(d)] for j in range(J)
    ]


def _agreement(B, U, V, n, J, d):
    return [
        [B[i][j] + sum(U[i][j][o] * V[j][o] for o in range(d)) for j in range(J)]
        for i in range(n)
    ]


def oracle_routing(U_array, r):
    """Transcription of the routing procedure with the iterations unrolled."""
    assert r in (1, 2, 3)
    n, J, d = U_array.shape
    U = U_array.tolist()
    B = [[0.0] * J for _ in range(n)]

    C = _softmax_rows(B)
    S = _coupled_sums(C, U, n, J, d)
    V = [_squash_list(s) for s in S]
    if r == 1:
        return np.asarray(V)
    B = _agreement(B, U, V, n, J, d)

    C = _softmax_rows(B)
    S = _coupled_sums(C, U, n, J, d)
    V = [_squash_list(s) for s in S]
    if r == 2:
        return np.asarray(V)
    B = _agreement(B, U, V, n, J, d)

    C = _softmax_rows(B)
    S = _coupled_sums(C, U, n, J, d)
    V = [_squash_list(s) for s in S]
    return np.asarray(V)


class TestSquash:
    def test_zero_vector(self):
        np.testing.assert_array_equal(squash(np.zeros(4)), np.zeros(4))

    def test_unit_norm_halves(self):
        s = np.asarray([0.6, 0.8, 0.0])
        np.testing.assert_allclose(squash(s), s / 2, atol=1e-15)

    def test_norm_ten(self):
        s = np.zeros(3)
        s[0] = 10.0
        v = squash(s)
        assert abs(np.linalg.norm(v) - 100.0 / 101.0) < 1e-12

    def test_random_vectors_shrink_and_keep_direction(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            s = rng.normal(scale=rng.uniform(0.01, 5.0), size=4)
            v = squash(s)
            norm = np.linalg.norm(v)
            assert 0.0 <= norm < 1.0
            cos = float(v @ s) / (norm * np.linalg.norm(s))
            assert abs(cos - 1.0) < 1e-12

    def test_rowwise_application(self):
        rng = np.random.default_rng(1)
        S = rng.normal(size=(5, 3))
        V = squash(S)
        for j in range(5):
            np.testing.assert_allclose(V[j], squash(S[j]), rtol=1e-15)

    def test_backward_zero_at_origin(self):
        g = squash_backward(np.ones((2, 3)), np.zeros((2, 3)))
        np.testing.assert_array_equal(g, np.zeros((2, 3)))

    def test_backward_finite_difference(self):
        rng = np.random.default_rng(2)
        S = rng.normal(size=(3, 4))
        R = rng.normal(size=(3, 4))

        def loss_and_grad():
            return float(np.sum(squash(S) * R)), {"S": squash_backward(R, S)}

        assert finite_diff_check(loss_and_grad, {"S": S}) < 1e-7


class TestPredictVectors:
    def test_identity_transforms(self):
        H = np.random.default_rng(3).normal(size=(4, 3))
        p = CapsuleParams(W=np.stack([np.eye(3), np.eye(3)]))
        U = predict_vectors(H, p)
        for j in range(2):
            np.testing.assert_array_equal(U[:, j, :], H)

    def test_zero_input(self):
        p = random_capsule(2, 3, 2, seed=4)
        U = predict_vectors(np.zeros((5, 3)), p)
        np.testing.assert_array_equal(U, np.zeros((5, 2, 2)))

    def test_matches_per_position_matmul(self):
        rng = np.random.default_rng(5)
        H = rng.normal(size=(3, 4))
        p = random_capsule(2, 4, 2, seed=6)
        U = predict_vectors(H, p)
        for i in range(3):
            for j in range(2):
                np.testing.assert_allclose(U[i, j], H[i] @ p.W[j], rtol=1e-12)

    def test_shape_mismatch(self):
        p = random_capsule(2, 4, 2, seed=7)
        with pytest.raises(ShapeMismatch):
            predict_vectors(np.zeros((3, 5)), p)


class TestDynamicRouting:
    def test_single_capsule_ignores_iteration_count(self):
        rng = np.random.default_rng(8)
        U = rng.normal(size=(4, 1, 3))
        expected = squash(U[:, 0, :].sum(axis=0))
        for r in (1, 2, 3, 4):
            V, state = dynamic_routing(U, r)
            np.testing.assert_allclose(V[0], expected, atol=1e-12)
            for C in state.couplings:
                np.testing.assert_array_equal(C, np.ones((4, 1)))

    def test_identical_predictions_keep_uniform_couplings(self):
        rng = np.random.default_rng(9)
        per_position = rng.normal(size=(3, 1, 2))
        U = np.repeat(per_position, 4, axis=1)  # same prediction for every j
        _, state = dynamic_routing(U, 3)
        for C in state.couplings:
            np.testing.assert_allclose(C, np.full((3, 4), 0.25), atol=1e-12)

    def test_couplings_form_distributions_every_iteration(self):
        rng = np.random.default_rng(10)
        U = rng.normal(scale=2.0, size=(5, 3, 4))
        _, state = dynamic_routing(U, 4)
        assert len(state.couplings) == 4
        for C in state.couplings:
            assert np.all(C >= 0.0)
            np.testing.assert_allclose(C.sum(axis=1), np.ones(5), atol=1e-12)

    def test_matches_straight_line_oracle(self):
        U = np.random.default_rng(12).normal(size=(3, 2, 2))
        V, _ = dynamic_routing(U, 3)
        np.testing.assert_allclose(V, oracle_routing(U, 3), atol=1e-12)

    def test_oracle_sweep(self):
        rng = np.random.default_rng(13)
        for n in (1, 2, 4):
            for J in (1, 2, 3):
                for r in (1, 2, 3):
                    U = rng.normal(size=(n, J, 2))
                    V, _ = dynamic_routing(U, r)
                    np.testing.assert_allclose(V, oracle_routing(U, r), atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(14)
        U = rng.normal(size=(5, 3, 2))
        V, _ = dynamic_routing(U, 3)
        perm = rng.permutation(5)
        V_perm, _ = dynamic_routing(U[perm], 3)
        np.testing.assert_allclose(V_perm, V, atol=1e-12)

    def test_single_iteration_is_uniform_average(self):
        rng = np.random.default_rng(15)
        U = rng.normal(size=(4, 3, 2))
        V, _ = dynamic_routing(U, 1)
        np.testing.assert_allclose(V, squash(U.sum(axis=0) / 3.0), atol=1e-14)

    def test_rejects_zero_iterations(self):
        with pytest.raises(ValueError):
            dynamic_routing(np.zeros((2, 2, 2)), 0)


class TestRoutingBackward:
    def test_zero_gradient_propagates_zeros(self):
        rng = np.random.default_rng(16)
        U = rng.normal(size=(3, 2, 2))
        _, state = dynamic_routing(U, 3)
        grad_U = routing_backward(np.zeros((2, 2)), U, state)
        np.testing.assert_array_equal(grad_U, np.zeros_like(U))

    @pytest.mark.parametrize("r", [1, 2, 5])
    def test_finite_difference(self, r):
        rng = np.random.default_rng(17 + r)
        U = rng.normal(size=(3, 2, 2))
        R = rng.normal(size=(2, 2))

        def loss_and_grad():
            V, state = dynamic_routing(U, r)
            return float(np.sum(V * R)), {"U": routing_backward(R, U, state)}

        assert finite_diff_check(loss_and_grad, {"U": U}) < 1e-6

    def test_capsule_backward_returns_both_gradients(self):
        rng = np.random.default_rng(21)
        H = rng.normal(size=(3, 4))
        p = random_capsule(2, 4, 2, seed=22)
        R = rng.normal(size=(2, 2))

        def loss_and_grad():
            flat, cache = capsule_layer(H, p, iterations=2)
            V = flat.reshape(2, 2)
            grad_U, grad_W = capsule_backward(R, cache)
            grad_H = np.einsum("njo,jdo->nd", grad_U, p.W)
            return float(np.sum(V * R)), {"W": grad_W, "H": grad_H}

        assert finite_diff_check(loss_and_grad, {"W": p.W, "H": H}) < 1e-6


class TestCapsuleLayer:
    def test_full_configuration_shapes(self):
        p = init_capsule(16, 256, 32, np.random.default_rng(23))
        H = np.random.default_rng(24).normal(size=(7, 256))
        flat, _ = capsule_layer(H, p, iterations=2)
        assert flat.shape == (512,)

    def test_zero_input_zero_output(self):
        p = random_capsule(3, 4, 2, seed=25)
        flat, _ = capsule_layer(np.zeros((5, 4)), p, iterations=3)
        np.testing.assert_array_equal(flat, np.zeros(6))

    def test_composition_of_oracles(self):
        rng = np.random.default_rng(26)
        H = rng.normal(size=(3, 4))
        p = random_capsule(2, 4, 2, seed=27)
        flat, _ = capsule_layer(H, p, iterations=3)
        U = np.empty((3, 2, 2))
        for i in range(3):
            for j in range(2):
                U[i, j] = H[i] @ p.W[j]
        np.testing.assert_allclose(flat, oracle_routing(U, 3).reshape(-1), atol=1e-12)

    @pytest.mark.parametrize("n,J,d_out,r", [(1, 1, 1, 1), (2, 3, 2, 2), (4, 3, 3, 3)])
    def test_layer_gradient_check(self, n, J, d_out, r):
        rng = np.random.default_rng(28 + n)
        H = rng.normal(size=(n, 5))
        p = random_capsule(J, 5, d_out, seed=29 + n)
        R = rng.normal(size=J * d_out)

        def loss_and_grad():
            flat, cache = capsule_layer(H, p, iterations=r)
            grad_H, grad_W = capsule_layer_backward(R, cache, p)
            return float(flat @ R), {"W": grad_W, "H": grad_H}

        assert finite_diff_check(loss_and_grad, {"W": p.W, "H": H}) < 1e-4

    def test_backward_shape_mismatch(self):
        p = random_capsule(2, 4, 2, seed=30)
        _, cache = capsule_layer(np.ones((3, 4)), p, iterations=2)
        with pytest.raises(ShapeMismatch):
            capsule_layer_backward(np.zeros(5), cache, p)

    def test_init_capsule_deterministic_and_bounded(self):
        a = init_capsule(4, 6, 3, np.random.default_rng(31))
        b = init_capsule(4, 6, 3, np.random.default_rng(31))
        np.testing.assert_array_equal(a.W, b.W)
        limit = math.sqrt(6.0 / 9.0)
        assert np.all(np.abs(a.W) <= limit)
        assert (a.num_capsules, a.input_dim, a.capsule_dim) == (4, 6, 3)
