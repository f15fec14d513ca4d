import numpy as np
import pytest

from specrecon import tensor as T
from specrecon.errors import ContractError, ShapeError


def test_matmul_identity():
    eye = T.Tensor(np.eye(3))
    v = T.Tensor(np.array([[1.0], [2.0], [3.0]]))
    out = T.matmul(eye, v)
    assert np.allclose(out.data.ravel(), [1, 2, 3])


def test_matmul_hand_contraction():
    a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = T.Tensor([[0.0], [1.0]])
    out = T.matmul(a, b)
    assert np.allclose(out.data, [[2.0], [4.0]])


def test_matmul_triple_loop_oracle():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((5, 4)).astype(np.float32)
    b = rng.standard_normal((4, 3)).astype(np.float32)
    out = T.matmul(T.Tensor(a), T.Tensor(b)).data
    ref = np.zeros((5, 3), dtype=np.float64)
    for i in range(5):
        for j in range(3):
            for k in range(4):
                ref[i, j] += float(a[i, k]) * float(b[k, j])
    assert np.abs(out - ref).max() < 1e-6


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


def test_silu_values():
    x = T.Tensor(np.array([0.0, 1.0, 50.0]))
    y = T.silu(x).data
    assert y[0] == 0.0
    assert abs(y[1] - 0.7311) < 1e-4
    assert abs(y[2] - 50.0) < 1e-6


def test_softplus_values():
    y = T.softplus(T.Tensor(np.array([0.0, 100.0, -100.0], dtype=np.float64))).data
    assert abs(y[0] - np.log(2.0)) < 1e-12
    assert abs(y[1] - 100.0) < 1e-6
    assert y[2] < 1e-6
    assert np.all(np.isfinite(y))


def test_layer_norm_constant_vector_zeros():
    x = T.Tensor(np.full((2, 4), 3.0))
    g = T.Tensor(np.ones(4))
    b = T.Tensor(np.zeros(4))
    out = T.layer_norm(x, g, b, eps=1e-5, axis=-1)
    assert np.abs(out.data).max() < 1e-6


def test_layer_norm_hand_check():
    x = T.Tensor(np.array([[1.0, -1.0]]))
    out = T.layer_norm(x, T.Tensor(np.ones(2)), T.Tensor(np.zeros(2)), eps=1e-12, axis=-1)
    assert np.allclose(out.data, [[1.0, -1.0]], atol=1e-5)


def test_layer_norm_statistics():
    rng = np.random.default_rng(2)
    x = T.Tensor(rng.standard_normal((3, 16)))
    out = T.layer_norm(x, T.Tensor(np.ones(16)), T.Tensor(np.zeros(16)), eps=1e-6, axis=-1).data
    assert np.abs(out.mean(axis=-1)).max() < 1e-6
    assert np.abs(out.var(axis=-1) - 1.0).max() < 1e-3


def test_dwconv_delta_kernel_identity():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 5, 5)).astype(np.float32)
    k = np.zeros((2, 3, 3), dtype=np.float32)
    k[:, 1, 1] = 1.0
    out = T.dwconv2d(T.Tensor(x), T.Tensor(k)).data
    assert np.allclose(out, x)


def test_dwconv_ones_kernel_interior():
    x = np.ones((1, 5, 5), dtype=np.float32)
    k = np.ones((1, 3, 3), dtype=np.float32)
    out = T.dwconv2d(T.Tensor(x), T.Tensor(k)).data
    assert out[0, 2, 2] == 9.0


def test_dwconv_matches_naive_loop():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 5, 5)).astype(np.float32)
    k = rng.standard_normal((2, 3, 3)).astype(np.float32)
    out = T.dwconv2d(T.Tensor(x), T.Tensor(k)).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(x)
    for c in range(2):
        for h in range(5):
            for w in range(5):
                for i in range(3):
                    for j in range(3):
                        ref[c, h, w] += xp[c, h + i, w + j] * k[c, i, j]
    assert np.abs(out - ref).max() < 1e-6


def test_dwconv_kernel_too_large():
    with pytest.raises(ShapeError):
        T.dwconv2d(T.Tensor(np.ones((1, 2, 2))), T.Tensor(np.ones((1, 9, 9))), padding=0)


def test_backward_sum_gives_ones():
    x = T.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.sum_(x).backward()
    assert np.allclose(x.grad, np.ones((2, 3)))


def test_backward_hand_differentiation():
    x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = T.sum_(T.mul(x, x))
    loss.backward()
    assert np.allclose(x.grad, [2.0, 4.0])


def test_backward_requires_scalar():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        T.mul(x, x).backward()


def test_grad_accumulates_over_reuse():
    x = T.Tensor(np.array([2.0]), requires_grad=True)
    y = T.add(T.mul(x, x), x)  # x^2 + x -> grad 2x + 1 = 5
    T.sum_(y).backward()
    assert np.allclose(x.grad, [5.0])


def test_expm1_over_x_branches_agree_at_switch():
    z = np.array([1e-4, -1e-4, 1.0000001e-4])
    out = T.expm1_over_x(T.Tensor(z.astype(np.float64))).data
    exact = np.expm1(z) / z
    assert np.abs(out - exact).max() < 1e-9


def test_grad_check_all_registered_ops():
    for name in T.gradcheck_case_names():
        report = T.grad_check(name)
        assert report["max"] < 1e-4, name


def test_grad_check_unknown_op():
    with pytest.raises(KeyError):
        T.grad_check("not_an_op")


def test_forward_determinism():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    a = T.conv2d(T.Tensor(x), T.Tensor(w)).data
    b = T.conv2d(T.Tensor(x), T.Tensor(w)).data
    assert np.array_equal(a, b)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_debug_checks_flag():
    T.set_debug_checks(True)
    try:
        with pytest.raises(Exception):
            T.exp(T.Tensor(np.array([1e30], dtype=np.float32)))
    finally:
        T.set_debug_checks(False)
