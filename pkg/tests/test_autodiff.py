"""Gradient checks for the autodiff tape, op by op, against central
finite differences and hand-derived formulas."""

import numpy as np
import pytest

from oclbench.autodiff import (
    Tensor,
    logsumexp,
    masked_logsumexp,
    no_grad,
    normalize_rows,
    pick,
    relu,
    row_norms,
    take_columns,
    take_rows,
)

from oracles import finite_difference_gradients, relative_error


def fd_check(build_loss, params, tol=1e-6):
    loss = build_loss()
    for p in params:
        p.zero_grad()
    loss.backward()
    analytic = [p.grad.copy() for p in params]
    numeric = finite_difference_gradients(params, lambda: float(build_loss().data))
    assert relative_error(analytic, numeric) < tol


def test_add_mul_broadcast_grads():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal(3), requires_grad=True)  # broadcasts over rows
    fd_check(lambda: ((a + b) * (a * 0.5 + 1.0)).sum(), [a, b])


def test_matmul_grads():
    rng = np.random.default_rng(1)
    a = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    fd_check(lambda: (a @ b).sum(), [a, b])


def test_relu_grads_and_values():
    x = Tensor(np.array([[-2.0, 0.5], [3.0, -0.1]]), requires_grad=True)
    out = relu(x)
    assert np.array_equal(out.data, [[0.0, 0.5], [3.0, 0.0]])
    out.sum().backward()
    assert np.array_equal(x.grad, [[0.0, 1.0], [1.0, 0.0]])


def test_mean_and_transpose_grads():
    rng = np.random.default_rng(2)
    a = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    fd_check(lambda: (a.T @ a).mean(), [a])


def test_take_rows_scatter_accumulates_duplicates():
    a = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = take_rows(a, [0, 0, 2])
    out.sum().backward()
    assert np.array_equal(a.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_take_columns_excluded_columns_bitwise_zero():
    rng = np.random.default_rng(3)
    a = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    (logsumexp(take_columns(a, [1, 4])) * 1.0).sum().backward()
    excluded = [0, 2, 3, 5]
    assert np.all(a.grad[:, excluded] == 0.0)  # exactly zero, not just small
    assert np.any(a.grad[:, [1, 4]] != 0.0)


def test_pick_grads():
    rng = np.random.default_rng(4)
    a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    cols = np.array([0, 2, 1, 0])
    fd_check(lambda: pick(a, cols).sum(), [a])


def test_logsumexp_matches_naive_and_survives_large_logits():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((6, 4)) * 3
    out = logsumexp(Tensor(x))
    naive = np.log(np.exp(x).sum(axis=1))
    assert np.allclose(out.data, naive, atol=1e-12)
    big = logsumexp(Tensor(np.array([[1000.0, 1000.0]])))
    assert np.isclose(big.data[0], 1000.0 + np.log(2.0))


def test_logsumexp_grads():
    rng = np.random.default_rng(6)
    a = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    fd_check(lambda: logsumexp(a).sum(), [a])


def test_masked_logsumexp_grads_and_mask_errors():
    rng = np.random.default_rng(7)
    a = Tensor(rng.standard_normal((4, 4)), requires_grad=True)
    mask = ~np.eye(4, dtype=bool)
    fd_check(lambda: masked_logsumexp(a, mask).sum(), [a])
    with pytest.raises(ValueError):
        masked_logsumexp(a, np.zeros((4, 4), dtype=bool))


def test_normalize_rows_grads():
    rng = np.random.default_rng(8)
    a = Tensor(rng.standard_normal((5, 3)) + 0.5, requires_grad=True)
    w = rng.standard_normal((5, 3))
    fd_check(lambda: (normalize_rows(a) * w).sum(), [a])


def test_normalize_rows_zero_row_zero_grad():
    a = Tensor(np.array([[0.0, 0.0], [3.0, 4.0]]), requires_grad=True)
    out = normalize_rows(a)
    assert np.array_equal(out.data[0], [0.0, 0.0])
    assert np.allclose(out.data[1], [0.6, 0.8])
    out.sum().backward()
    assert np.array_equal(a.grad[0], [0.0, 0.0])


def test_row_norms_grads():
    rng = np.random.default_rng(9)
    a = Tensor(rng.standard_normal((6, 4)) + 0.3, requires_grad=True)
    fd_check(lambda: row_norms(a).mean(), [a])


def test_row_norms_zero_row_zero_grad():
    a = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]), requires_grad=True)
    row_norms(a).sum().backward()
    assert np.array_equal(a.grad[0], [0.0, 0.0])


def test_detach_blocks_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    loss = (a.detach() * a).sum()
    loss.backward()
    assert np.array_equal(a.grad, np.ones((2, 2)))  # only the live branch


def test_backward_accumulates_until_zeroed():
    a = Tensor(np.ones(3), requires_grad=True)
    (a * 2.0).sum().backward()
    (a * 2.0).sum().backward()
    assert np.array_equal(a.grad, np.full(3, 4.0))
    a.zero_grad()
    assert np.array_equal(a.grad, np.zeros(3))


def test_backward_requires_scalar_and_graph():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (a * 1.0).backward()
    with pytest.raises(RuntimeError):
        Tensor(0.0).backward()


def test_no_grad_suppresses_graph():
    a = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        out = (a * 3.0).sum()
    assert not out.requires_grad
    assert not out.has_graph


def test_shared_subexpression_gradient_sums_both_paths():
    a = Tensor(np.array([2.0]), requires_grad=True)
    b = a * 3.0
    loss = (b + b).sum()
    loss.backward()
    assert np.array_equal(a.grad, [6.0])
