import unittest

import numpy as np

from muslcat.errors import ShapeError, ValidationError
from muslcat.layers import Conv1d, MaxPool1d, BatchNorm1d, LayerNorm, ReLU, Dropout, Dense, Sequential, SEBlock, \
    Sigmoid, conv1d_forward, conv1d_output_length, maxpool1d, maxpool1d_backward, se_block
from muslcat.tensor import finite_diff_check


def se_oracle(x, w1, b1, w2, b2):
    out = np.empty_like(x)
    for b in range(x.shape[0]):
        s = np.array([x[b, c].sum() / x.shape[2] for c in range(x.shape[1])])
        h = np.maximum(s @ w1 + b1, 0)
        g = 1 / (1 + np.exp(-(h @ w2 + b2)))
        for c in range(x.shape[1]):
            out[b, c] = x[b, c] * g[c]
    return out


class ConvTests(unittest.TestCase):
    def test_lengths(self):
        self.assertEqual(conv1d_output_length(48000, 3, 3, 0), 16000)
        self.assertEqual(conv1d_output_length(48000, 27, 9, 0), 5331)
        self.assertEqual(Conv1d(1, 2, 27, 9).output_length(48000), 5331)

    def test_constant(self):
        y, _ = conv1d_forward(np.ones((1, 1, 10)), np.ones((1, 1, 3)), np.zeros(1))
        np.testing.assert_array_equal(y, np.full((1, 1, 8), 3.0))

    def test_same_preserves_length(self):
        rng = np.random.default_rng(0)
        for f in (1, 3, 5, 9):
            conv = Conv1d.same(2, 3, f, rng=rng)
            self.assertEqual(conv(rng.standard_normal((2, 2, 17))).shape, (2, 3, 17))

    def test_same_needs_odd_filter(self):
        with self.assertRaises(ValidationError):
            Conv1d.same(1, 1, 4)

    def test_short_input(self):
        with self.assertRaises(ShapeError):
            Conv1d(1, 1, 27, 9)(np.zeros((1, 1, 20)))

    def test_oracle(self):
        rng = np.random.default_rng(1)
        conv = Conv1d(2, 3, 4, stride=2, padding=1, rng=rng)
        conv.params['bias'][...] = rng.standard_normal(3)
        x = rng.standard_normal((2, 2, 11))
        y = conv(x)
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1)))
        w = conv.params['weight']
        for b in range(2):
            for o in range(3):
                for t in range(y.shape[2]):
                    expected = (w[o] * xp[b, :, 2 * t:2 * t + 4]).sum() + conv.params['bias'][o]
                    self.assertAlmostEqual(y[b, o, t], expected, places=12)

    def test_gradients(self):
        rng = np.random.default_rng(2)
        for shape, args in [((2, 3, 10), (3, 4, 3, 1, 1)), ((1, 2, 17), (2, 3, 5, 2, 0)),
                            ((2, 1, 40), (1, 3, 9, 3, 0))]:
            conv = Conv1d(*args, rng=rng)
            report = finite_diff_check(conv, rng.standard_normal(shape))
            self.assertTrue(report.passed, str(report))


class PoolTests(unittest.TestCase):
    def test_hand(self):
        y, _ = maxpool1d(np.array([[[1.0, 5, 2, 4, 4, 4]]]), 3, 3)
        np.testing.assert_array_equal(y, [[[5, 4]]])

    def test_monotone(self):
        x = np.arange(12.0)[None, None]
        np.testing.assert_array_equal(MaxPool1d(3)(x), [[[2, 5, 8, 11]]])

    def test_ties_route_left(self):
        y, cache = maxpool1d(np.array([[[4.0, 4, 4]]]), 3, 3)
        np.testing.assert_array_equal(maxpool1d_backward(np.ones_like(y), cache), [[[1, 0, 0]]])

    def test_tail_dropped(self):
        self.assertEqual(MaxPool1d(3)(np.zeros((1, 1, 8))).shape, (1, 1, 2))

    def test_window_too_large(self):
        with self.assertRaises(ShapeError):
            MaxPool1d(3)(np.zeros((1, 1, 2)))

    def test_gradients(self):
        rng = np.random.default_rng(0)
        for shape in [(2, 3, 9), (1, 2, 12), (2, 4, 7)]:
            x = (rng.permutation(np.prod(shape)).reshape(shape) - 10) * 0.1
            self.assertTrue(finite_diff_check(MaxPool1d(3), x).passed)


class NormTests(unittest.TestCase):
    def test_batchnorm_statistics(self):
        x = np.random.default_rng(0).standard_normal((4, 3, 6)) * 3 + 2
        y = BatchNorm1d(3)(x)
        np.testing.assert_allclose(y.mean(axis=(0, 2)), 0, atol=1e-10)
        np.testing.assert_allclose(y.var(axis=(0, 2)), 1, atol=1e-4)

    def test_batchnorm_single_example(self):
        with self.assertRaises(ValidationError):
            BatchNorm1d(3)(np.zeros((1, 3, 5)))
        BatchNorm1d(3).eval()(np.zeros((1, 3, 5)))

    def test_batchnorm_running_stats(self):
        bn = BatchNorm1d(2, momentum=1.0)
        x = np.random.default_rng(1).standard_normal((3, 2, 4))
        bn(x)
        np.testing.assert_allclose(bn.buffers['running_mean'], x.mean(axis=(0, 2)))
        np.testing.assert_allclose(bn.buffers['running_var'], x.var(axis=(0, 2), ddof=1))
        self.assertEqual([n for n, _ in bn.named_buffers()], ['running_mean', 'running_var'])

    def test_layernorm_definition(self):
        rng = np.random.default_rng(2)
        for axis, shape in [(1, (2, 5, 7)), (-1, (3, 4, 6))]:
            ln = LayerNorm(shape[axis], axis=axis)
            x_hat, _ = ln.normalize(rng.standard_normal(shape) * 4 - 1)
            np.testing.assert_allclose(x_hat.mean(axis=axis), 0, atol=1e-10)
            np.testing.assert_allclose(x_hat.var(axis=axis), 1, atol=1e-4)

    def test_gradients(self):
        rng = np.random.default_rng(3)
        cases = [(BatchNorm1d(3), (4, 3, 5)), (BatchNorm1d(2), (2, 2, 8)), (LayerNorm(4), (2, 4, 5)),
                 (LayerNorm(6, axis=-1), (2, 5, 6)), (LayerNorm(3), (1, 3, 7))]
        for module, shape in cases:
            module.params['scale'][...] = rng.uniform(0.5, 1.5, module.params['scale'].shape)
            report = finite_diff_check(module, rng.standard_normal(shape))
            self.assertTrue(report.passed, str(report))

    def test_batchnorm_eval_gradient(self):
        rng = np.random.default_rng(4)
        bn = BatchNorm1d(4)
        bn.buffers['running_mean'][...] = rng.standard_normal(4)
        bn.buffers['running_var'][...] = rng.uniform(0.5, 2, 4)
        bn.eval()
        self.assertTrue(finite_diff_check(bn, rng.standard_normal((3, 4, 6))).passed)


class ActivationTests(unittest.TestCase):
    def test_relu(self):
        np.testing.assert_array_equal(ReLU()(np.array([-1.0, 0, 2])), [0, 0, 2])

    def test_sigmoid_saturation(self):
        for dtype, big in ((np.float64, 40.0), (np.float32, 20.0)):
            y = Sigmoid()(np.array([big, -800.0, 0.0], dtype=dtype))
            self.assertEqual(y.dtype, dtype)
            self.assertTrue(((y > 0) & (y < 1)).all(), y)
            self.assertEqual(y[2], 0.5)

    def test_dropout_rate_zero(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        np.testing.assert_array_equal(Dropout(0)(x), x)

    def test_dropout_eval_identity(self):
        x = np.random.default_rng(0).standard_normal((3, 4))
        np.testing.assert_array_equal(Dropout(0.5).eval()(x), x)

    def test_dropout_rate_range(self):
        for rate in (-0.1, 1, 1.5):
            with self.assertRaises(ValidationError):
                Dropout(rate)

    def test_dropout_train_scales(self):
        x = np.ones((200, 50))
        y = Dropout(0.2, np.random.default_rng(0))(x)
        self.assertTrue(np.all(np.isclose(y, 0) | np.isclose(y, 1.25)))
        self.assertAlmostEqual(y.mean(), 1, delta=0.02)


class DenseTests(unittest.TestCase):
    def test_forward(self):
        d = Dense(2, 1)
        d.params['weight'][...] = [[1], [2]]
        d.params['bias'][...] = 0.5
        np.testing.assert_array_equal(d(np.array([[1.0, 1.0]])), [[3.5]])

    def test_shape_error(self):
        with self.assertRaises(ShapeError):
            Dense(3, 2)(np.zeros((2, 4)))

    def test_gradients(self):
        rng = np.random.default_rng(0)
        for i, o, shape in [(3, 4, (2, 3)), (6, 3, (2, 5, 6)), (8, 2, (4, 8))]:
            self.assertTrue(finite_diff_check(Dense(i, o, rng=rng), rng.standard_normal(shape)).passed)


class SETests(unittest.TestCase):
    def test_identity_gate(self):
        se = SEBlock(4, 2)
        se.fc2.params['weight'][...] = 0
        se.fc2.params['bias'][...] = 20
        x = np.random.default_rng(0).standard_normal((2, 4, 5))
        np.testing.assert_allclose(se_block(x, se), x, atol=1e-6 * np.abs(x).max())

    def test_squeeze_of_constant(self):
        x = np.broadcast_to(np.arange(4.0)[None, :, None], (1, 4, 6))
        np.testing.assert_array_equal(SEBlock.squeeze(x), [[0, 1, 2, 3]])

    def test_oracle(self):
        rng = np.random.default_rng(1)
        se = SEBlock(4, 2, rng=rng)
        for dense in (se.fc1, se.fc2):
            dense.params['bias'][...] = rng.standard_normal(dense.params['bias'].shape)
        x = rng.standard_normal((1, 4, 5))
        expected = se_oracle(x, se.fc1.params['weight'], se.fc1.params['bias'], se.fc2.params['weight'],
                             se.fc2.params['bias'])
        self.assertLess(np.abs(se(x) - expected).max(), 1e-12)

    def test_divisibility(self):
        with self.assertRaises(ValidationError):
            SEBlock(10, 4)

    def test_gate_range(self):
        rng = np.random.default_rng(2)
        se = SEBlock(8, 4, rng=rng)
        g, _ = se.excitation(SEBlock.squeeze(rng.standard_normal((3, 8, 5)) * 10))
        self.assertTrue(((g > 0) & (g < 1)).all())

    def test_gradients(self):
        rng = np.random.default_rng(3)
        for c, r, shape in [(4, 2, (1, 4, 5)), (8, 4, (2, 8, 6)), (16, 16, (3, 16, 4))]:
            report = finite_diff_check(SEBlock(c, r, rng=rng), rng.standard_normal(shape))
            self.assertTrue(report.passed, str(report))


class ModuleTests(unittest.TestCase):
    def test_names(self):
        seq = Sequential(Conv1d(1, 2, 3), BatchNorm1d(2), ReLU(), SEBlock(2, 1))
        self.assertEqual([n for n, _ in seq.named_parameters()],
                         ['0.weight', '0.bias', '1.scale', '1.shift', '3.fc1.weight', '3.fc1.bias',
                          '3.fc2.weight', '3.fc2.bias'])
        self.assertEqual(seq.num_parameters(), 2 * 3 + 2 + 2 + 2 + 2 * 2 + 2 + 2 * 2 + 2)

    def test_train_eval_propagates(self):
        seq = Sequential(Dropout(0.5), Sequential(BatchNorm1d(2)))
        seq.eval()
        self.assertFalse(any(m.training for _, m in seq.named_modules()))
        seq.train()
        self.assertTrue(all(m.training for _, m in seq.named_modules()))

    def test_eval_deterministic(self):
        rng = np.random.default_rng(0)
        seq = Sequential(Conv1d(1, 4, 3, rng=rng), BatchNorm1d(4), ReLU(), Dropout(0.3), SEBlock(4, 2, rng=rng))
        seq.eval()
        x = rng.standard_normal((2, 1, 30))
        np.testing.assert_array_equal(seq(x), seq(x))

    def test_zero_grad(self):
        rng = np.random.default_rng(0)
        seq = Sequential(Dense(3, 2, rng=rng))
        y, cache = seq.forward(rng.standard_normal((4, 3)))
        seq.backward(np.ones_like(y), cache)
        self.assertTrue(np.abs(seq.grads_of('0.weight')).sum() > 0)
        seq.zero_grad()
        self.assertEqual(np.abs(seq.grads_of('0.weight')).sum(), 0)


if __name__ == '__main__':
    unittest.main()
