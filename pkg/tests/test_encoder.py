import numpy as np
import pytest
import torch

from ahdd.encoder import (ConvEncoder, EmbeddingTable, LinearEncoder, RecurrentEncoder, build_code_matrix, embed,
                          encode, encode_description, load_pretrained, make_encoder, read_embedding_file)
from ahdd.errors import FormatError
from ahdd.hierarchy import anemia_toy_hierarchy
from ahdd.model import ModelSpec, build_model
from ahdd.text import Vocabulary
from oracles import GRAD_REL_TOL, max_relative_errors

torch.set_default_dtype(torch.float64)


@pytest.fixture
def table():
    torch.manual_seed(0)
    return EmbeddingTable(10, 4).double()


class TestEmbed:
    def test_padding_rows_are_zero(self, table):
        assert torch.count_nonzero(embed([0, 0, 0], table)) == 0

    def test_single_token(self, table):
        assert torch.equal(embed([3], table), table.weight[3:4])

    def test_permutation(self, table):
        ids = torch.tensor([2, 5, 7, 1, 9])
        perm = torch.tensor([4, 0, 3, 1, 2])
        assert torch.equal(embed(ids[perm], table), embed(ids, table)[perm])

    def test_out_of_range(self, table):
        with pytest.raises(IndexError):
            embed([10], table)

    def test_padding_gets_no_gradient(self, table):
        embed([0, 3], table).sum().backward()
        assert torch.count_nonzero(table.weight.grad[0]) == 0


class TestEncode:
    def test_linear_identity(self):
        enc = LinearEncoder(5, 5).double()
        with torch.no_grad():
            enc.proj.weight.copy_(torch.eye(5))
            enc.proj.bias.zero_()
        x = torch.randn(7, 5)
        assert torch.equal(encode(x, enc), x)

    def test_conv_constant_rows(self):
        torch.manual_seed(1)
        enc = ConvEncoder(3, 4, kernel_size=3).double()
        x = torch.tensor([0.3, -1.0, 2.0]).repeat(6, 1)
        out = encode(x, enc)
        # interior positions see the same full window
        for i in range(2, 5):
            torch.testing.assert_close(out[i], out[1], atol=1e-15, rtol=0)
        # hand-computed window sum
        w, b = enc.conv.weight, enc.conv.bias
        expected = torch.tanh(torch.einsum("oik,i->o", w, x[0]) + b)
        torch.testing.assert_close(out[1], expected, atol=1e-12, rtol=0)

    def test_rnn_length_one(self):
        enc = RecurrentEncoder(3, 8).double()
        assert encode(torch.randn(1, 3), enc).shape == (1, 8)

    @pytest.mark.parametrize("kind", ["linear", "cnn", "rnn"])
    def test_width_mismatch(self, kind):
        enc = make_encoder(kind, 4, 6).double()
        with pytest.raises(ValueError, match="width"):
            encode(torch.randn(3, 5), enc)

    def test_empty_sequence(self):
        with pytest.raises(ValueError):
            encode(torch.zeros(0, 4), LinearEncoder(4, 4).double())

    def test_bad_shapes_rejected_at_build(self):
        with pytest.raises(ValueError):
            ConvEncoder(3, 4, kernel_size=2)
        with pytest.raises(ValueError):
            RecurrentEncoder(3, 5)
        with pytest.raises(ValueError):
            make_encoder("transformer", 3, 4)

    @pytest.mark.parametrize("kind", ["linear", "cnn", "rnn"])
    def test_finite_on_bounded_inputs(self, kind):
        torch.manual_seed(2)
        enc = make_encoder(kind, 4, 6).double()
        x = torch.empty(20, 4).uniform_(-10, 10)
        assert torch.isfinite(encode(x, enc)).all()

    @pytest.mark.parametrize("kind", ["linear", "cnn", "rnn"])
    def test_gradients(self, kind):
        torch.manual_seed(3)
        enc = make_encoder(kind, 3, 4).double()
        x = torch.randn(5, 3)
        c = torch.randn(5, 4)

        def fn():
            return (torch.sin(encode(x, enc)) * c).sum()

        errs = max_relative_errors(fn, enc.named_parameters())
        assert max(errs.values()) < GRAD_REL_TOL, errs


class TestDescription:
    def test_one_token(self, table):
        enc = LinearEncoder(4, 3).double()
        h = encode(embed([4], table), enc)[0]
        assert torch.equal(encode_description([4], table, enc), h)

    def test_coordinate_max(self):
        tab = EmbeddingTable(4, 2).double()
        with torch.no_grad():
            tab.weight[2] = torch.tensor([1.0, 0.0])
            tab.weight[3] = torch.tensor([0.0, 1.0])
        enc = LinearEncoder(2, 2).double()
        with torch.no_grad():
            enc.proj.weight.copy_(torch.eye(2))
            enc.proj.bias.zero_()
        assert encode_description([2, 3], tab, enc).tolist() == [1.0, 1.0]

    def test_random_matches_loop_max(self, table):
        enc = ConvEncoder(4, 5).double()
        ids = [2, 7, 3, 9]
        H = encode(embed(ids, table), enc).detach().numpy()
        expected = [max(H[r][c] for r in range(4)) for c in range(5)]
        np.testing.assert_array_equal(encode_description(ids, table, enc).detach().numpy(), expected)

    def test_empty(self, table):
        with pytest.raises(ValueError):
            encode_description([], table, LinearEncoder(4, 3).double())

    def test_code_matrix(self, table):
        enc = LinearEncoder(4, 3).double()
        H_C = build_code_matrix([[2, 3], [2, 3], [4]], table, enc)
        assert H_C.shape == (3, 3)
        assert torch.equal(H_C[0], H_C[1])

    def test_anemia_rows_differ(self):
        h = anemia_toy_hierarchy()
        vocab = Vocabulary(sorted({t for c in h for t in h.description(c)}))
        model = build_model(ModelSpec(len(vocab), len(h), emb_dim=6, hidden=6, encoder="linear"),
                            [vocab.encode(h.description(c)) for c in h.labels], seed=0)
        H_C = model.code_matrix()
        assert H_C.shape == (3, 6)
        assert not torch.allclose(H_C[1], H_C[2])


def test_shared_encoder_instance():
    h = anemia_toy_hierarchy()
    model = build_model(ModelSpec(20, 3, emb_dim=4, hidden=4), [[2], [3], [4]])
    seen = []
    handle = model.encoder.register_forward_hook(lambda m, i, o: seen.append(m))
    model.code_matrix()
    model.label_repr([2, 3], model.code_matrix())
    handle.remove()
    assert len(seen) == 2 * len(h) + 1
    assert all(m is model.encoder for m in seen)


class TestPretrained:
    def test_load(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("2 3\nanemia 1 2 3\nother 4 5 6\n", encoding="utf-8")
        tab = EmbeddingTable(4, 3).double()
        before = tab.weight[3].clone()
        vocab = Vocabulary(["anemia", "acute"])
        assert load_pretrained(tab, vocab, p) == 1
        assert tab.weight[2].tolist() == [1.0, 2.0, 3.0]
        assert torch.equal(tab.weight[3], before)

    def test_ragged(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("a 1 2\nb 1\n", encoding="utf-8")
        with pytest.raises(FormatError, match=":2"):
            read_embedding_file(p)

    def test_dim_mismatch(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("a 1 2\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_pretrained(EmbeddingTable(3, 3), Vocabulary(["a"]), p)
