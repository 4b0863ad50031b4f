import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semclip import autodiff as ad
from semclip.autodiff import Tensor, finite_difference_check
from semclip.errors import ContractError, DegenerateVectorError, DimensionError


def test_matmul_identity_and_dot():
    out = ad.matmul(Tensor([[1.0, 0], [0, 1]]), Tensor([[3.0], [4]]))
    np.testing.assert_array_equal(out.data, [[3], [4]])
    assert ad.matmul(Tensor([[1.0, 2]]), Tensor([[3.0], [4]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences(rng):
    b = Tensor(rng.standard_normal((4, 2)))
    err = finite_difference_check(lambda a: ad.sum(ad.matmul(a, b)), rng.standard_normal((3, 4)))
    assert err < 1e-6
    a = Tensor(rng.standard_normal((3, 4)))
    assert finite_difference_check(lambda x: ad.sum(ad.matmul(a, x)), rng.standard_normal((4, 2))) < 1e-6


def test_l2_normalize_examples():
    np.testing.assert_allclose(ad.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8])
    np.testing.assert_allclose(ad.l2_normalize(Tensor([0.0, 0.0, 5.0])).data, [0, 0, 1])
    with pytest.raises(DegenerateVectorError):
        ad.l2_normalize(Tensor([0.0, 1e-13]))


def test_l2_normalize_gradient(rng):
    w = Tensor(rng.standard_normal(8))
    x = rng.standard_normal(8)
    assert finite_difference_check(lambda v: ad.rowwise_dot(ad.l2_normalize(v), w), x) < 1e-6


@pytest.mark.parametrize("a, b, expected", [
    ([1.0, 0.0], [0.0, 1.0], 0.0),
    ([2.0, 0.0], [1.0, 0.0], 1.0),
    ([1.0, 1.0], [1.0, 0.0], 1 / math.sqrt(2)),
])
def test_cosine_similarity(a, b, expected):
    assert ad.cosine_similarity(Tensor(a), Tensor(b)).item() == pytest.approx(expected, abs=1e-4)


def test_cosine_zero_norm():
    with pytest.raises(DegenerateVectorError):
        ad.cosine_similarity(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))


def _xent_oracle(logits, target):
    z = [math.exp(v) for v in logits]
    return -math.log(z[target] / sum(z))


@pytest.mark.parametrize("logits, target", [([5.0], 0), ([0.0, 0.0], 0), ([2.0, 1.0, 0.0], 0)])
def test_softmax_cross_entropy_row(logits, target):
    got = ad.softmax_cross_entropy_row(Tensor(logits), target).item()
    assert got == pytest.approx(_xent_oracle(logits, target), abs=1e-12)


def test_softmax_cross_entropy_values():
    assert ad.softmax_cross_entropy_row(Tensor([5.0]), 0).item() == 0.0
    assert ad.softmax_cross_entropy_row(Tensor([0.0, 0.0]), 0).item() == pytest.approx(0.6931, abs=1e-4)
    assert ad.softmax_cross_entropy_row(Tensor([2.0, 1.0, 0.0]), 0).item() == pytest.approx(0.4076, abs=1e-4)


def test_softmax_cross_entropy_bad_index():
    with pytest.raises(IndexError):
        ad.softmax_cross_entropy_row(Tensor([1.0, 2.0]), 2)


def test_cross_entropy_stable_for_large_logits():
    assert ad.softmax_cross_entropy_row(Tensor([1000.0, 0.0]), 0).item() == pytest.approx(0.0, abs=1e-12)


def test_backward_sum():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    ad.backward(ad.sum(x))
    np.testing.assert_array_equal(x.grad, [1, 1, 1])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(ad.scale(x, 2.0))


def test_cosine_gradient_orthogonal_to_unit_input(rng):
    x = rng.standard_normal(6)
    x /= np.linalg.norm(x)
    leaf = Tensor(x, requires_grad=True)
    ad.backward(ad.cosine_similarity(leaf, Tensor(rng.standard_normal(6))))
    assert abs(leaf.grad @ x) < 1e-10


def test_grads_accumulate_until_reset():
    x = Tensor([1.0, -2.0], requires_grad=True)
    ad.backward(ad.sum(ad.mul(x, x)))
    ad.backward(ad.sum(ad.mul(x, x)))
    np.testing.assert_allclose(x.grad, 4 * x.data)
    x.zero_grad()
    np.testing.assert_array_equal(x.grad, [0, 0])


def test_reverse_sweep_order_is_reverse_execution(rng):
    x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    a = ad.tanh(x)
    b = ad.matmul(a, x)
    c = ad.sum(ad.add(b, a))
    nodes = ad.record(c)
    assert [n.op for n in nodes] == ["tanh", "matmul", "add", "sum"]
    assert [n.seq for n in nodes] == sorted(n.seq for n in nodes)


def test_linearity_of_backward(rng):
    w1, w2 = Tensor(rng.standard_normal(4)), Tensor(rng.standard_normal(4))
    x0 = rng.standard_normal(4)

    def f1(x):
        return ad.rowwise_dot(ad.tanh(x), w1)

    def f2(x):
        return ad.cosine_similarity(x, w2)

    joint = Tensor(x0, requires_grad=True)
    ad.backward(ad.add(f1(joint), f2(joint)))
    separate = Tensor(x0, requires_grad=True)
    ad.backward(f1(separate))
    ad.backward(f2(separate))
    np.testing.assert_allclose(joint.grad, separate.grad, rtol=1e-12, atol=1e-14)


def test_matmul_associativity(rng):
    a, b, c = (Tensor(rng.standard_normal((4, 4))) for _ in range(3))
    left = ad.matmul(ad.matmul(a, b), c).data
    right = ad.matmul(a, ad.matmul(b, c)).data
    assert np.max(np.abs(left - right)) < 1e-10


def test_relu_subgradient_zero_at_kink():
    x = Tensor([0.0, 1.0, -1.0], requires_grad=True)
    ad.backward(ad.sum(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [0, 1, 0])


def test_fd_check_quadratic():
    assert finite_difference_check(lambda x: ad.sum(ad.mul(x, x)), np.array([1.0, 2.0])) < 1e-8


def test_fd_check_reports_nan_as_inf():
    def f(x):
        return ad.sum(ad.mul(x, Tensor([np.nan, 1.0])))
    assert finite_difference_check(f, np.array([1.0, 2.0])) == math.inf


PRIMITIVES = {
    "tanh": lambda x, w: ad.rowwise_dot(ad.tanh(x), w),
    "exp": lambda x, w: ad.rowwise_dot(ad.exp(x), w),
    "l2_normalize": lambda x, w: ad.rowwise_dot(ad.l2_normalize(x), w),
    "cosine": lambda x, w: ad.cosine_similarity(x, w),
    "mul": lambda x, w: ad.sum(ad.mul(x, w)),
    "xent": lambda x, w: ad.softmax_cross_entropy_row(ad.mul(x, w), 2),
    "relu": lambda x, w: ad.rowwise_dot(ad.relu(x), w),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitives_at_random_points(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    bound = 1e-4 if name == "relu" else 1e-6
    for _ in range(10):
        w = Tensor(rng.standard_normal(5))
        x = rng.standard_normal(5)
        assert finite_difference_check(lambda v: PRIMITIVES[name](v, w), x) < bound


def test_embedding_bag_mean_gradient(rng):
    idx = np.array([[0, 2, 2, 1], [3, 1, 0, 0]])
    lengths = np.array([4, 2])
    w = Tensor(rng.standard_normal((2, 3)))
    err = finite_difference_check(
        lambda t: ad.sum(ad.mul(ad.embedding_bag_mean(t, idx, lengths), w)), rng.standard_normal((5, 3)))
    assert err < 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.data())
def test_cross_entropy_matches_direct_softmax(logits, data):
    target = data.draw(st.integers(0, len(logits) - 1))
    got = ad.softmax_cross_entropy_row(Tensor(logits), target).item()
    assert got == pytest.approx(_xent_oracle(logits, target), rel=1e-9, abs=1e-12)
