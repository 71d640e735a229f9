import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from ahdd.attention import (CodeAwareAttention, PlainAttention, attention_weights, code_aware_attention,
                            label_specific_repr, plain_label_attention)
from oracles import GRAD_REL_TOL, max_relative_errors, softmax_rows


def t(x):
    return torch.as_tensor(x, dtype=torch.float64)


class TestWeights:
    def test_single_position(self):
        w = attention_weights(t(np.random.randn(3, 4)), t(np.random.randn(1, 4)))
        assert w.tolist() == [[1.0], [1.0], [1.0]]

    def test_zero_queries_uniform(self):
        w = attention_weights(torch.zeros(2, 3, dtype=torch.float64), t(np.random.randn(5, 3)))
        torch.testing.assert_close(w, torch.full((2, 5), 0.2, dtype=torch.float64), atol=1e-15, rtol=0)

    def test_hand_softmax(self):
        # logits = Q H^T with H = I is Q itself
        Q = [[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]]
        w = attention_weights(t(Q), torch.eye(3, dtype=torch.float64))
        np.testing.assert_allclose(w.numpy(), softmax_rows(Q), atol=1e-15)
        assert w[0, 2].item() == pytest.approx(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))

    def test_empty_hidden(self):
        with pytest.raises(ValueError):
            attention_weights(torch.zeros(2, 3), torch.zeros(0, 3))

    def test_large_logits_stay_finite(self):
        w = attention_weights(t([[1e3, 1e3]]), t([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        assert torch.isfinite(w).all() and w[0, 2].item() == pytest.approx(1.0)


class TestCodeAware:
    def test_identity_projection(self):
        H_C, H_d = t(np.random.randn(3, 4)), t(np.random.randn(6, 4))
        assert torch.equal(code_aware_attention(H_C, torch.eye(4, dtype=torch.float64), H_d),
                           attention_weights(H_C, H_d))

    def test_zero_projection_uniform(self):
        w = code_aware_attention(t(np.random.randn(3, 4)), torch.zeros(4, 4, dtype=torch.float64),
                                 t(np.random.randn(4, 4)))
        torch.testing.assert_close(w, torch.full((3, 4), 0.25, dtype=torch.float64), atol=1e-15, rtol=0)

    def test_matches_two_step_oracle(self):
        rng = np.random.default_rng(0)
        H_C, W_Q, H_d = rng.normal(size=(3, 4)), rng.normal(size=(4, 4)), rng.normal(size=(5, 4))
        Q = [[sum(H_C[i][k] * W_Q[k][c] for k in range(4)) for c in range(4)] for i in range(3)]
        logits = [[sum(Q[i][c] * H_d[j][c] for c in range(4)) for j in range(5)] for i in range(3)]
        np.testing.assert_allclose(code_aware_attention(t(H_C), t(W_Q), t(H_d)).numpy(), softmax_rows(logits),
                                   atol=1e-12)

    def test_plain_with_frozen_queries(self):
        H_C, W_Q, H_d = (t(np.random.randn(*s)) for s in ((3, 4), (4, 4), (5, 4)))
        assert torch.equal(plain_label_attention(H_C @ W_Q, H_d), code_aware_attention(H_C, W_Q, H_d))

    def test_modules(self):
        H_C, H_d = t(np.random.randn(3, 4)), t(np.random.randn(5, 4))
        ca = CodeAwareAttention(4).double()
        assert torch.equal(ca(H_d, H_C), attention_weights(H_C, H_d))
        pa = PlainAttention(3, 4).double()
        assert pa(H_d).shape == (3, 5) and not pa.uses_code_matrix

    def test_plain_gradient(self):
        torch.manual_seed(0)
        U = torch.nn.Parameter(torch.randn(3, 4, dtype=torch.float64))
        H = torch.randn(6, 4, dtype=torch.float64)
        c = torch.randn(3, 4, dtype=torch.float64)

        def fn():
            return (label_specific_repr(plain_label_attention(U, H), H) * c).sum()

        assert max_relative_errors(fn, [("U", U)])["U"] < GRAD_REL_TOL


class TestRepr:
    def test_one_hot_copies_row(self):
        H = t(np.random.randn(4, 5))
        w = t([[0, 0, 1, 0], [1, 0, 0, 0]])
        assert torch.equal(label_specific_repr(w, H), H[[2, 0]])

    def test_uniform_is_mean(self):
        H = t(np.random.randn(4, 5))
        torch.testing.assert_close(label_specific_repr(torch.full((1, 4), 0.25, dtype=torch.float64), H)[0],
                                   H.mean(0), atol=1e-15, rtol=0)

    def test_matches_loop_product(self):
        rng = np.random.default_rng(1)
        w, H = rng.random((3, 4)), rng.normal(size=(4, 5))
        expected = [[sum(w[i][j] * H[j][c] for j in range(4)) for c in range(5)] for i in range(3)]
        np.testing.assert_allclose(label_specific_repr(t(w), t(H)).numpy(), expected, atol=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            label_specific_repr(torch.ones(2, 3), torch.ones(4, 5))


instance = st.tuples(st.integers(1, 6), st.integers(1, 12), st.integers(1, 6), st.integers(0, 2**31 - 1),
                     st.floats(0.1, 5.0))


@settings(max_examples=150, deadline=None)
@given(instance)
def test_invariants(params):
    n_labels, n_d, h, seed, scale = params
    rng = np.random.default_rng(seed)
    Q, H = t(rng.normal(size=(n_labels, h)) * scale), t(rng.normal(size=(n_d, h)) * scale)
    w = attention_weights(Q, H)
    assert (w >= 0).all()
    np.testing.assert_allclose(w.sum(1).numpy(), 1.0, atol=1e-9)
    V = label_specific_repr(w, H)
    assert (V >= H.min(0).values - 1e-9).all() and (V <= H.max(0).values + 1e-9).all()
    perm = torch.as_tensor(rng.permutation(n_d))
    w_p = attention_weights(Q, H[perm])
    torch.testing.assert_close(w_p, w[:, perm], atol=1e-12, rtol=0)
    torch.testing.assert_close(label_specific_repr(w_p, H[perm]), V, atol=1e-12, rtol=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-50, 50))
def test_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(3, 5))
    # add a constant to every logit of row 0 only through an extra coordinate
    Q = np.hstack([logits, np.array([[shift], [0.0], [0.0]])])
    H = np.hstack([np.eye(5), np.ones((5, 1))])
    w = attention_weights(t(Q), t(H))
    plain = attention_weights(t(logits), torch.eye(5, dtype=torch.float64))
    torch.testing.assert_close(w, plain, atol=1e-12, rtol=0)
