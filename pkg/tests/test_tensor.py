import numpy as np
import pytest

from nnlp.tensor import ShapeError, Tensor, concat_cols, ewise, matmul, reduce


def test_matmul_identity():
    a = Tensor([[1, 2], [3, 4]])
    out = matmul(a, Tensor.eye(2))
    assert np.array_equal(out.data, a.data)


def test_matmul_hand_sum():
    out = matmul(Tensor.row([1, 2, 3]), Tensor.ones(3, 1))
    assert out.item() == 6.0


def test_matmul_shape_rule():
    out = matmul(Tensor.zeros(1, 4), Tensor.zeros(4, 6))
    assert out.shape == (1, 6)


def test_matmul_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(1, 3\).*\(4, 6\)"):
        matmul(Tensor.zeros(1, 3), Tensor.zeros(4, 6))


def test_ewise_examples():
    assert np.array_equal(ewise("add", Tensor.row([1, 2]), Tensor.row([0, 0])).data,
                          [[1, 2]])
    assert np.array_equal(ewise("mul", Tensor.row([2, 3]), Tensor.row([4, 5])).data,
                          [[8, 15]])
    assert np.array_equal(ewise("neg", Tensor.row([1, -1])).data, [[-1, 1]])


def test_ewise_errors():
    with pytest.raises(ValueError, match="unknown"):
        ewise("frobnicate", Tensor.row([1.0]))
    with pytest.raises(ShapeError):
        ewise("add", Tensor.row([1, 2]), Tensor.row([1, 2, 3]))


def test_concat_cols():
    out = concat_cols([Tensor.row([1, 2]), Tensor.row([3])])
    assert np.array_equal(out.data, [[1, 2, 3]])
    three = concat_cols([Tensor.zeros(1, 50)] * 3)
    assert three.shape == (1, 150)
    single = concat_cols([Tensor.row([7, 8])])
    assert np.array_equal(single.data, [[7, 8]])


def test_concat_cols_errors():
    with pytest.raises(ShapeError):
        concat_cols([])
    with pytest.raises(ShapeError):
        concat_cols([Tensor.zeros(2, 2)])


def test_reduce_max_worked_matrix():
    m = Tensor([[1, 2, 3], [9, 6, 5], [2, 3, 1], [7, 8, 1], [3, 4, 1]])
    out, idx = reduce("max", m)
    assert np.array_equal(out.data, [[9, 8, 5]])
    assert idx.tolist() == [1, 3, 1]


def test_reduce_avg_and_sum():
    two = Tensor([[1.5, -2.0], [1.5, -2.0]])
    assert np.array_equal(reduce("avg", two).data, [[1.5, -2.0]])
    assert reduce("sum", Tensor([[1], [2], [3]])).item() == 6.0


def test_reduce_empty_and_unknown():
    with pytest.raises(ShapeError):
        reduce("sum", Tensor(np.zeros((0, 3))))
    with pytest.raises(ValueError, match="unknown"):
        reduce("median", Tensor.ones(2, 2))


def test_matmul_associativity_property():
    rng = np.random.default_rng(7)
    for _ in range(25):
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 5)))
        c = Tensor(rng.normal(size=(5, 2)))
        left = matmul(matmul(a, b), c).data
        right = matmul(a, matmul(b, c)).data
        assert np.allclose(left, right, rtol=1e-9, atol=1e-12)


def test_reduce_max_matches_bruteforce():
    rng = np.random.default_rng(11)
    for _ in range(50):
        m = rng.normal(size=(5, 4))
        out, idx = reduce("max", Tensor(m))
        for j in range(4):
            best = max(range(5), key=lambda i: m[i, j])
            assert out.data[0, j] == m[best, j]
            assert idx[j] == best


def test_concat_slice_roundtrip_bitexact():
    rng = np.random.default_rng(3)
    parts = [Tensor(rng.normal(size=(1, k))) for k in (2, 5, 1)]
    whole = concat_cols(parts).data
    off = 0
    for p in parts:
        assert np.array_equal(whole[:, off:off + p.cols], p.data)
        off += p.cols


def test_tensor_invariants():
    t = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert t.rows == 2 and t.cols == 2
    assert t.data.flags["C_CONTIGUOUS"]
    assert t.data.dtype == np.float64
    with pytest.raises(ShapeError):
        Tensor(np.zeros((2, 2, 2)))
