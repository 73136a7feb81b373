import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probmod import tensor as T
from probmod.tensor import BackwardError, Parameter, ShapeError, Tensor, no_grad

from _oracles import OP_CASES, gradient_error


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


# -- worked examples ------------------------------------------------------------------


def test_elementwise_examples():
    assert (T.mul([2.0], [3.0]).data == [6.0]).all()
    out = T.add(np.ones((3, 1)), np.ones((1, 4)))
    assert out.shape == (3, 4) and (out.data == 2.0).all()
    x, y = leaf([1.0, 2.0]), Tensor([5.0, 7.0])
    T.sum(x * y).backward()
    np.testing.assert_array_equal(x.grad.data, [5.0, 7.0])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(4))


def test_division_propagates_nonfinite():
    out = T.div([1.0, -1.0, 0.0], [0.0, 0.0, 0.0])
    assert np.isposinf(out.data[0]) and np.isneginf(out.data[1]) and np.isnan(out.data[2])


def test_unary_examples():
    assert T.exp([0.0]).data[0] == 1.0
    np.testing.assert_array_equal(T.relu([-2.0, 3.0]).data, [0.0, 3.0])
    assert np.isneginf(T.log([0.0]).data[0])
    assert np.isnan(T.log([-1.0]).data[0])


def test_exp_gradient_at_zero():
    x = leaf(0.0)
    T.exp(x).backward()
    fd = (np.exp(1e-5) - np.exp(-1e-5)) / 2e-5
    assert abs(x.grad.item() - 1.0) < 1e-12
    assert abs(x.grad.item() - fd) < 1e-6


def test_kink_subgradients_are_zero():
    x = leaf([0.0, 0.0])
    T.sum(T.relu(x) + T.abs(x)).backward()
    np.testing.assert_array_equal(x.grad.data, [0.0, 0.0])


def test_matmul_examples():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(np.eye(2), m).data, m)
    assert T.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]
    with pytest.raises(ShapeError):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_backward_rules():
    rng = np.random.default_rng(1)
    a_np, b_np, g = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    a, b = leaf(a_np), leaf(b_np)
    T.sum(T.matmul(a, b) * g).backward()
    np.testing.assert_allclose(a.grad.data, g @ b_np.T, rtol=1e-12)
    np.testing.assert_allclose(b.grad.data, a_np.T @ g, rtol=1e-12)


def test_reduce_examples():
    assert T.sum([1.0, 2.0, 3.0]).item() == 6.0
    assert T.sum([1.0, 2.0, 3.0]).shape == ()
    np.testing.assert_array_equal(T.mean([[1.0, 2.0], [3.0, 4.0]], axis=0).data, [2.0, 3.0])
    x = leaf([1.0, 2.0, 3.0, 4.0])
    T.mean(x).backward()
    np.testing.assert_array_equal(x.grad.data, [0.25] * 4)
    with pytest.raises(np.exceptions.AxisError):
        T.sum(np.ones((2, 2)), axis=2)


def test_conv2d_examples():
    out = T.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1))
    assert out.shape == (1, 1, 1, 1) and out.item() == 9.0
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    delta = np.zeros((1, 1, 2, 2))
    delta[0, 0, 0, 0] = 1.0
    out = T.conv2d(x, delta, np.zeros(1))
    np.testing.assert_array_equal(out.data[0, 0], x[0, 0, :3, :3])


def test_conv2d_shape_errors():
    with pytest.raises(ShapeError):
        T.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)), np.zeros(1))
    with pytest.raises(ShapeError):
        T.conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 1, 3, 3)), np.zeros(1))


def test_max_pool_examples():
    out = T.max_pool2d(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), (2, 2))
    assert out.data.tolist() == [[[[4.0]]]]
    x = leaf(np.full((1, 1, 4, 4), 7.0))
    out = T.max_pool2d(x, (2, 2))
    np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 7.0))
    T.sum(out).backward()
    expected = np.zeros((4, 4))
    expected[::2, ::2] = 1.0  # first element of every window
    np.testing.assert_array_equal(x.grad.data[0, 0], expected)
    with pytest.raises(ShapeError):
        T.max_pool2d(np.ones((1, 1, 3, 4)), (2, 2))


def test_backward_examples():
    x = leaf(2.0)
    (3.0 * x).backward()
    assert x.grad.item() == 3.0
    x = leaf(3.0)
    (x * x).backward()
    assert x.grad.item() == 6.0
    x = leaf(2.0)
    (3.0 * x).backward()
    (3.0 * x).backward()
    assert x.grad.item() == 6.0


def test_backward_errors():
    x = leaf([1.0, 2.0])
    with pytest.raises(BackwardError, match="rank-0"):
        (x * 2.0).backward()
    with pytest.raises(BackwardError, match="detached"):
        Tensor(1.0).backward()


def test_no_grad_tensors_never_accumulate():
    x = leaf(1.0)
    c = Tensor(5.0)
    (x * c).backward()
    assert c.grad is None
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.node is None


def test_grad_shape_matches_value_shape():
    x = leaf(np.ones((3, 1)))
    T.sum(x + np.ones((1, 4))).backward()
    assert x.grad.shape == x.shape
    np.testing.assert_array_equal(x.grad.data, np.full((3, 1), 4.0))


def test_tape_topological_order():
    T.get_tape().clear()
    x = leaf(1.5)
    y = T.exp(x * x) + x
    nodes = T.get_tape().nodes
    pos = {id(n): i for i, n in enumerate(nodes)}
    for n in nodes:
        for inp in n.inputs:
            if inp.node is not None:
                assert pos[id(inp.node)] < pos[id(n)]
    y.backward()


def test_parameter_requires_grad():
    p = Parameter(np.zeros(3), name="w")
    assert p.requires_grad and p.name == "w"


# -- finite-difference checks -------------------------------------------------------


@pytest.mark.parametrize("name,fn,gen", OP_CASES, ids=[c[0] for c in OP_CASES])
def test_gradient_matches_finite_differences(name, fn, gen):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    for _ in range(10):
        assert gradient_error(fn, gen(rng)) < 1e-4


def test_conv_relu_pool_pipeline_gradient():
    def pipeline(x, k, b):
        return T.max_pool2d(T.relu(T.conv2d(x, k, b)), (2, 2))

    rng = np.random.default_rng(3)
    x, k, b = rng.normal(size=(1, 2, 5, 5)), rng.normal(size=(2, 2, 2, 2)), rng.normal(size=(2,))
    assert gradient_error(pipeline, [x, k, b]) < 1e-4


# -- properties -----------------------------------------------------------------------

shapes = st.lists(st.integers(1, 3), min_size=0, max_size=3).map(tuple)


@st.composite
def broadcast_pair(draw):
    shape = draw(shapes)
    other = tuple(1 if draw(st.booleans()) else d for d in shape)
    other = other[draw(st.integers(0, len(other))):]
    if draw(st.booleans()):
        shape, other = other, shape
    return shape, other


@settings(max_examples=60, deadline=None)
@given(broadcast_pair())
def test_broadcast_shape_matches_numpy(pair):
    a, b = pair
    out = T.add(np.ones(a), np.zeros(b))
    assert out.shape == T.broadcast_shape(a, b) == np.broadcast_shapes(a, b)


@settings(max_examples=30, deadline=None)
@given(broadcast_pair(), st.integers(0, 2**31 - 1))
def test_broadcast_gradient_unbroadcasts(pair, seed):
    a_shape, b_shape = pair
    rng = np.random.default_rng(seed)
    a, b = leaf(rng.normal(size=a_shape)), leaf(rng.normal(size=b_shape))
    T.sum(a * b).backward()
    assert a.grad.shape == a_shape and b.grad.shape == b_shape
    full = np.broadcast_shapes(a_shape, b_shape)
    expected = np.broadcast_to(b.data, full).sum(axis=tuple(range(len(full) - len(a_shape))))
    np.testing.assert_allclose(a.grad.data.sum(), expected.sum(), rtol=1e-12, atol=1e-12)


def _graph_grads(seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng.normal(size=(4, 3))), leaf(rng.normal(size=(3, 2)))
    out = T.logsumexp(T.matmul(T.exp(a * 0.3), b), axis=-1)
    T.sum(out * out).backward()
    return a.grad.data.copy(), b.grad.data.copy()


def test_backward_is_deterministic():
    g1, g2 = _graph_grads(5), _graph_grads(5)
    for x, y in zip(g1, g2):
        assert x.tobytes() == y.tobytes()


# -- serialization --------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31 - 1))
def test_binary_round_trip(shape, seed):
    arr = np.random.default_rng(seed).normal(size=shape)
    buf = T.to_bytes(arr)
    assert buf[:4] == b"PTNS"
    back = T.from_bytes(buf)
    assert back.shape == shape and back.data.tobytes() == arr.tobytes()


def test_binary_layout():
    buf = T.to_bytes(np.array([[1.0, 2.0, 3.0]]))
    magic, version, rank = struct.unpack("<4sHH", buf[:8])
    assert (magic, rank) == (b"PTNS", 2)
    assert struct.unpack("<2Q", buf[8:24]) == (1, 3)
    assert struct.unpack("<3d", buf[24:]) == (1.0, 2.0, 3.0)


def test_binary_rejects_corruption():
    buf = T.to_bytes(np.ones(3))
    with pytest.raises(ValueError):
        T.from_bytes(b"XXXX" + buf[4:])
    with pytest.raises(ValueError):
        T.from_bytes(buf[:-1])
