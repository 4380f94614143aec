import numpy as np
import pytest

from evex import autodiff as ad


def make_param(rng, shape, scale=1.0):
    return ad.parameter(rng.uniform(-scale, scale, size=shape))


class TestForwardBasics:
    def test_matmul_identity(self):
        a = ad.constant([[1.0, 0.0], [0.0, 1.0]])
        b = ad.constant([[3.0], [4.0]])
        out = ad.matmul(a, b)
        np.testing.assert_array_equal(out.data, [[3.0], [4.0]])

    def test_matmul_values(self):
        out = ad.matmul(ad.constant([[1.0, 2.0]]), ad.constant([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ad.ShapeError) as exc:
            ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 3))))
        assert "(2, 3)" in str(exc.value)

    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(ad.constant(0.0)).data == 0.5

    def test_relu_definition(self):
        out = ad.relu(ad.constant([-2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [0.0, 3.0])

    def test_softmax_uniform(self):
        out = ad.softmax(ad.constant([0.0, 0.0, 0.0]), axis=0)
        np.testing.assert_allclose(out.data, [1 / 3] * 3)

    def test_softmax_large_values_stable(self):
        out = ad.softmax(ad.constant([1000.0, 1000.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_softmax_direct_formula(self):
        x = np.array([1.0, 2.0, 3.0])
        e = np.exp(x - x.max())
        np.testing.assert_allclose(
            ad.softmax(ad.constant(x), axis=0).data, e / e.sum(), rtol=0, atol=1e-15
        )

    def test_softmax_sums_to_one_and_permutation_equivariant(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=7)
        y = ad.softmax(ad.constant(x), axis=0).data
        assert abs(y.sum() - 1.0) < 1e-9
        perm = rng.permutation(7)
        y_perm = ad.softmax(ad.constant(x[perm]), axis=0).data
        np.testing.assert_allclose(y_perm, y[perm], atol=1e-15)

    def test_concat_single_part_is_identity(self):
        a = ad.constant([1.0, 2.0])
        np.testing.assert_array_equal(ad.concat([a], axis=0).data, a.data)

    def test_concat_values(self):
        out = ad.concat([ad.constant([1.0, 2.0]), ad.constant([3.0])], axis=0)
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0])

    def test_mean(self):
        assert ad.reduce_mean(ad.constant([2.0, 4.0, 6.0])).data == 4.0

    def test_sum_of_singleton_is_identity(self):
        assert ad.reduce_sum(ad.constant([[5.0]])).data == 5.0

    def test_overflow_raises_numeric_error(self):
        with pytest.raises(ad.NumericError):
            ad.exp(ad.constant(1000.0))

    def test_log_of_zero_raises(self):
        with pytest.raises(ad.NumericError):
            ad.log(ad.constant([0.0]))

    def test_embedding_lookup_copies_row(self):
        table = ad.constant(np.eye(4))
        np.testing.assert_array_equal(ad.embedding_lookup(table, 2).data, [0, 0, 1, 0])

    def test_embedding_lookup_out_of_range(self):
        with pytest.raises(IndexError):
            ad.embedding_lookup(ad.constant(np.eye(3)), [3])


class TestBackwardBasics:
    def test_identity_gradient(self):
        x = ad.parameter(np.array(3.0))
        ad.backward(x + 0.0)
        assert x.grad == 1.0

    def test_hand_derivative(self):
        # d/dx (x*y + y) at (2, 3) -> dx = 3, dy = 3
        x = ad.parameter(np.array(2.0))
        y = ad.parameter(np.array(3.0))
        ad.backward(x * y + y)
        assert x.grad == 3.0
        assert y.grad == 3.0

    def test_diamond_accumulates(self):
        x = ad.parameter(np.array(1.5))
        ad.backward(x + x)
        assert x.grad == 2.0

    def test_non_scalar_root_rejected(self):
        x = ad.parameter(np.zeros(3))
        with pytest.raises(ad.ShapeError):
            ad.backward(x + x)

    def test_unreachable_leaf_has_no_grad(self):
        x = ad.parameter(np.array(1.0))
        y = ad.parameter(np.array(2.0))
        ad.backward(x * 2.0)
        assert x.grad is not None
        assert y.grad is None

    def test_repeated_lookup_sums_row_grad(self):
        table = ad.parameter(np.eye(3))
        a = ad.embedding_lookup(table, [1])
        b = ad.embedding_lookup(table, [1])
        ad.backward(ad.reduce_sum(a + b))
        np.testing.assert_array_equal(table.grad[1], [2.0, 2.0, 2.0])
        np.testing.assert_array_equal(table.grad[0], [0.0, 0.0, 0.0])

    def test_max_ties_break_to_first_index(self):
        x = ad.parameter(np.array([2.0, 2.0, 1.0]))
        ad.backward(ad.reduce_max(x))
        np.testing.assert_array_equal(x.grad, [1.0, 0.0, 0.0])

    def test_no_grad_mode_records_nothing(self):
        x = ad.parameter(np.array([1.0, 2.0]))
        with ad.no_grad():
            out = ad.reduce_sum(x * x)
        assert out.backward_rule is None
        assert not out.requires_grad


class TestFiniteDifferences:
    """Primitive ops checked against central differences at rel-err < 1e-6."""

    def test_matmul(self):
        rng = np.random.default_rng(1)
        a = make_param(rng, (3, 4))
        b = make_param(rng, (4, 2))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(ad.tanh(ad.matmul(a, b))), [a, b])
        assert err < 1e-6

    def test_tanh_at_fixed_point(self):
        x = ad.parameter(np.array([0.7]))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(ad.tanh(x)), [x])
        assert err < 1e-6

    @pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.exp])
    def test_unary_smooth(self, op):
        rng = np.random.default_rng(2)
        x = make_param(rng, (2, 3))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(op(x)), [x])
        assert err < 1e-6

    def test_relu_away_from_kink(self):
        x = ad.parameter(np.array([-1.0, -0.3, 0.4, 2.0]))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(ad.relu(x)), [x])
        assert err < 1e-6

    def test_log(self):
        x = ad.parameter(np.array([0.5, 1.5, 4.0]))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(ad.log(x)), [x])
        assert err < 1e-6

    def test_add_sub_mul_with_broadcast(self):
        rng = np.random.default_rng(3)
        a = make_param(rng, (3, 4))
        b = make_param(rng, (1, 4))

        def build():
            return ad.reduce_sum(ad.mul(ad.add(a, b), ad.sub(a, b)))

        assert ad.finite_difference_check(build, [a, b]) < 1e-6

    def test_softmax_and_log_softmax(self):
        rng = np.random.default_rng(4)
        x = make_param(rng, (3, 5))
        w = ad.constant(rng.normal(size=(3, 5)))
        err = ad.finite_difference_check(
            lambda: ad.reduce_sum(ad.mul(w, ad.softmax(x, axis=1))), [x]
        )
        assert err < 1e-6
        err = ad.finite_difference_check(
            lambda: ad.reduce_sum(ad.mul(w, ad.log_softmax(x, axis=1))), [x]
        )
        assert err < 1e-6

    def test_masked_softmax(self):
        rng = np.random.default_rng(5)
        x = make_param(rng, (6,))
        mask = np.array([True, True, True, True, False, False])
        w = ad.constant(rng.normal(size=6))
        err = ad.finite_difference_check(
            lambda: ad.reduce_sum(ad.mul(w, ad.softmax(x, axis=0, mask=mask))), [x]
        )
        assert err < 1e-6

    def test_concat_backward_slices(self):
        rng = np.random.default_rng(6)
        a = make_param(rng, (2, 3))
        b = make_param(rng, (2, 2))
        w = ad.constant(rng.normal(size=(2, 5)))
        err = ad.finite_difference_check(
            lambda: ad.reduce_sum(ad.mul(w, ad.concat([a, b], axis=1))), [a, b]
        )
        assert err < 1e-6

    def test_reduce_mean_backward(self):
        rng = np.random.default_rng(7)
        x = make_param(rng, (4, 3))
        err = ad.finite_difference_check(
            lambda: ad.reduce_sum(ad.sigmoid(ad.reduce_mean(x, axis=0))), [x]
        )
        assert err < 1e-6

    def test_reduce_max_backward(self):
        x = ad.parameter(np.array([[0.1, 0.9, 0.4], [0.8, 0.2, 0.3]]))
        err = ad.finite_difference_check(lambda: ad.reduce_sum(ad.reduce_max(x, axis=1)), [x])
        assert err < 1e-6

    def test_gather_scatter_slice(self):
        rng = np.random.default_rng(8)
        table = make_param(rng, (5, 3))

        def build():
            picked = ad.gather_rows(table, [0, 2, 2, 4])
            spread = ad.scatter_sum(picked, [1, 0, 1, 2], 3)
            return ad.reduce_sum(ad.tanh(ad.slice_rows(spread, 0, 2)))

        assert ad.finite_difference_check(build, [table]) < 1e-6

    def test_deterministic_forward(self):
        rng = np.random.default_rng(9)
        a = make_param(rng, (3, 3))
        out1 = ad.reduce_sum(ad.tanh(ad.matmul(a, a)))
        out2 = ad.reduce_sum(ad.tanh(ad.matmul(a, a)))
        assert out1.data == out2.data
