"""
Layers with hand-derived backward passes.

Every layer is a Module: a record of named parameters (and, for batch norm, running statistics) plus a forward pass
returning (output, cache) and a backward pass mapping (d_output, cache) to d_input. Backward accumulates parameter
gradients into the module's gradient buffers; only the training loop calls it.
"""
from abc import ABC, abstractmethod
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ._util import shape_str
from .errors import ShapeError, ValidationError
from .tensor import Tensor, DEFAULT_DTYPE, check_finite, matmul


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> Tensor:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def scaled_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module(ABC):
    """
    An abstract base class for layers and networks of layers
    """
    __slots__ = 'params', 'grads', 'buffers', 'training'

    def __init__(self):
        self.params: Dict[str, Tensor] = {}
        self.grads: Dict[str, Tensor] = {}
        self.buffers: Dict[str, Tensor] = {}
        self.training = True

    def add_param(self, name: str, value: Tensor) -> Tensor:
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def children(self) -> Iterator[Tuple[str, 'Module']]:
        """
        :return: the named direct sub-modules, in forward order
        """
        return iter(())

    @abstractmethod
    def forward(self, x: Tensor) -> Tuple[Tensor, object]:
        """
        :param x: the input
        :return: the output and whatever backward needs to differentiate it
        """
        pass

    @abstractmethod
    def backward(self, d_out: Tensor, cache) -> Tensor:
        """
        :param d_out: gradient of the objective with respect to the output
        :param cache: the cache forward returned
        :return: gradient of the objective with respect to the input
        """
        pass

    def __call__(self, x: Tensor) -> Tensor:
        y, _ = self.forward(x)
        return check_finite(y, type(self).__name__)

    def named_parameters(self, prefix='') -> Iterator[Tuple[str, Tensor]]:
        for n, p in self.params.items():
            yield prefix + n, p
        for cn, c in self.children():
            yield from c.named_parameters(f'{prefix}{cn}.')

    def named_gradients(self, prefix='') -> Iterator[Tuple[str, Tensor]]:
        for n, g in self.grads.items():
            yield prefix + n, g
        for cn, c in self.children():
            yield from c.named_gradients(f'{prefix}{cn}.')

    def named_buffers(self, prefix='') -> Iterator[Tuple[str, Tensor]]:
        for n, b in self.buffers.items():
            yield prefix + n, b
        for cn, c in self.children():
            yield from c.named_buffers(f'{prefix}{cn}.')

    def named_modules(self, prefix='') -> Iterator[Tuple[str, 'Module']]:
        yield prefix.rstrip('.'), self
        for cn, c in self.children():
            yield from c.named_modules(f'{prefix}{cn}.')

    def grads_of(self, name: str) -> Tensor:
        return dict(self.named_gradients())[name]

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)
        for _, c in self.children():
            c.zero_grad()

    def train(self, mode=True) -> 'Module':
        self.training = mode
        for _, c in self.children():
            c.train(mode)
        return self

    def eval(self) -> 'Module':
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


# conv1d

def conv1d_output_length(length: int, filter_size: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - filter_size) // stride + 1


def _taps(length_out: int, k: int, stride: int) -> slice:
    return slice(k, k + stride * (length_out - 1) + 1, stride)


def conv1d_forward(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, padding: int = 0):
    """
    strided 1-D cross-correlation
    :param x: input of shape (B, C_in, L_in)
    :param weight: filters of shape (C_out, C_in, f)
    :param bias: shape (C_out,)
    :return: the output of shape (B, C_out, L_out) and the backward cache
    """
    if x.ndim != 3:
        raise ShapeError(f'conv1d expects (batch, channel, time), got {shape_str(x.shape)}')
    c_out, c_in, f = weight.shape
    if x.shape[1] != c_in:
        raise ShapeError(f'conv1d input has {x.shape[1]} channels, filters expect {c_in}: '
                         f'{shape_str(x.shape)} vs {shape_str(weight.shape)}')
    length = x.shape[2]
    if length + 2 * padding < f:
        raise ShapeError(f'conv1d input of length {length} (padding {padding}) is shorter than the filter ({f})')
    length_out = conv1d_output_length(length, f, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    y = np.zeros((x.shape[0], c_out, length_out), dtype=np.result_type(x, weight))
    for k in range(f):
        y += matmul(weight[:, :, k], xp[:, :, _taps(length_out, k, stride)])
    y += bias[None, :, None]
    return y, (xp, weight, stride, padding, length)


def conv1d_backward(d_out: Tensor, cache) -> Tuple[Tensor, Tensor, Tensor]:
    """
    :return: gradients with respect to the input, the filters and the bias
    """
    xp, weight, stride, padding, length = cache
    f = weight.shape[2]
    length_out = d_out.shape[2]
    d_xp = np.zeros_like(xp)
    d_weight = np.empty_like(weight)
    for k in range(f):
        taps = _taps(length_out, k, stride)
        d_weight[:, :, k] = np.tensordot(d_out, xp[:, :, taps], axes=([0, 2], [0, 2]))
        d_xp[:, :, taps] += matmul(weight[:, :, k].T, d_out)
    d_bias = d_out.sum(axis=(0, 2))
    return d_xp[:, :, padding:padding + length], d_weight, d_bias


class Conv1d(Module):
    """
    1-D convolution; also the parameter record of a convolution (C_in, C_out, f, s, p, weight, bias)
    """
    __slots__ = 'in_channels', 'out_channels', 'filter_size', 'stride', 'padding'

    def __init__(self, in_channels: int, out_channels: int, filter_size: int, stride: int = 1, padding: int = 0,
                 rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if filter_size < 1 or stride < 1 or padding < 0:
            raise ValidationError(f'invalid convolution geometry: filter {filter_size}, stride {stride}, '
                                  f'padding {padding}')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.filter_size = filter_size
        self.stride = stride
        self.padding = padding
        rng = rng or np.random.default_rng(0)
        self.add_param('weight', he_normal(rng, (out_channels, in_channels, filter_size),
                                           in_channels * filter_size, dtype))
        self.add_param('bias', np.zeros(out_channels, dtype=dtype))

    @classmethod
    def same(cls, in_channels: int, out_channels: int, filter_size: int, **kwargs) -> 'Conv1d':
        """
        a stride-1 convolution whose output length equals its input length (odd filter sizes only)
        """
        if filter_size % 2 != 1:
            raise ValidationError(f'length-preserving convolution needs an odd filter, got {filter_size}')
        return cls(in_channels, out_channels, filter_size, stride=1, padding=(filter_size - 1) // 2, **kwargs)

    def output_length(self, length: int) -> int:
        return conv1d_output_length(length, self.filter_size, self.stride, self.padding)

    def forward(self, x):
        return conv1d_forward(x, self.params['weight'], self.params['bias'], self.stride, self.padding)

    def backward(self, d_out, cache):
        dx, dw, db = conv1d_backward(d_out, cache)
        self.grads['weight'] += dw
        self.grads['bias'] += db
        return dx


# pooling

def maxpool1d(x: Tensor, filter_size: int, stride: int):
    """
    max pooling over time; ties resolve to the leftmost position
    :return: the pooled tensor and the backward cache
    """
    length = x.shape[-1]
    if length < filter_size:
        raise ShapeError(f'max-pool window ({filter_size}) is larger than the input ({length})')
    length_out = (length - filter_size) // stride + 1
    windows = sliding_window_view(x, filter_size, axis=-1)[..., ::stride, :][..., :length_out, :]
    idx = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return y, (x.shape, idx, filter_size, stride)


def maxpool1d_backward(d_out: Tensor, cache) -> Tensor:
    shape, idx, filter_size, stride = cache
    dx = np.zeros(shape, dtype=d_out.dtype)
    length_out = d_out.shape[-1]
    for k in range(filter_size):
        dx[..., _taps(length_out, k, stride)] += d_out * (idx == k)
    return dx


class MaxPool1d(Module):
    __slots__ = 'filter_size', 'stride'

    def __init__(self, filter_size: int = 3, stride: int = None):
        super().__init__()
        self.filter_size = filter_size
        self.stride = stride or filter_size

    def output_length(self, length: int) -> int:
        return (length - self.filter_size) // self.stride + 1

    def forward(self, x):
        return maxpool1d(x, self.filter_size, self.stride)

    def backward(self, d_out, cache):
        return maxpool1d_backward(d_out, cache)


# normalization

class BatchNorm1d(Module):
    """
    batch normalization over the batch and time axes of a (B, C, L) tensor
    """
    __slots__ = 'channels', 'epsilon', 'momentum'

    def __init__(self, channels: int, epsilon: float = 1e-5, momentum: float = 0.1, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.channels = channels
        self.epsilon = epsilon
        self.momentum = momentum
        self.add_param('scale', np.ones(channels, dtype=dtype))
        self.add_param('shift', np.zeros(channels, dtype=dtype))
        self.buffers['running_mean'] = np.zeros(channels, dtype=dtype)
        self.buffers['running_var'] = np.ones(channels, dtype=dtype)

    def forward(self, x):
        scale = self.params['scale'][None, :, None]
        shift = self.params['shift'][None, :, None]
        if self.training:
            if x.shape[0] < 2:
                raise ValidationError('batch norm in training mode needs a batch of at least 2 '
                                      f'(variance is undefined), got {shape_str(x.shape)}')
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            n = x.shape[0] * x.shape[2]
            m = self.momentum
            self.buffers['running_mean'] *= 1 - m
            self.buffers['running_mean'] += m * mean
            self.buffers['running_var'] *= 1 - m
            self.buffers['running_var'] += m * var * n / max(n - 1, 1)
        else:
            mean = self.buffers['running_mean']
            var = self.buffers['running_var']
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_hat = (x - mean[None, :, None]) * inv_std[None, :, None]
        return x_hat * scale + shift, (x_hat, inv_std, self.training)

    def backward(self, d_out, cache):
        x_hat, inv_std, training = cache
        self.grads['scale'] += (d_out * x_hat).sum(axis=(0, 2))
        self.grads['shift'] += d_out.sum(axis=(0, 2))
        d_hat = d_out * self.params['scale'][None, :, None]
        if not training:
            return d_hat * inv_std[None, :, None]
        n = d_out.shape[0] * d_out.shape[2]
        return (inv_std[None, :, None] / n) * (
                n * d_hat
                - d_hat.sum(axis=(0, 2), keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=(0, 2), keepdims=True))


class LayerNorm(Module):
    """
    layer normalization over a single axis: the channel axis of a (B, C, L) feature map (axis=1, the default), or
    the feature axis of (B, T, D) tokens (axis=-1)
    """
    __slots__ = 'channels', 'axis', 'epsilon'

    def __init__(self, channels: int, axis: int = 1, epsilon: float = 1e-5, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.channels = channels
        self.axis = axis
        self.epsilon = epsilon
        self.add_param('scale', np.ones(channels, dtype=dtype))
        self.add_param('shift', np.zeros(channels, dtype=dtype))

    def _broadcast(self, v: Tensor, ndim: int) -> Tensor:
        shape = [1] * ndim
        shape[self.axis] = -1
        return v.reshape(shape)

    def normalize(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """
        :return: the pre-affine normalized input and the inverse standard deviations
        """
        if x.shape[self.axis] != self.channels:
            raise ShapeError(f'layer norm over {self.channels} features got {shape_str(x.shape)} '
                             f'(axis {self.axis})')
        mean = x.mean(axis=self.axis, keepdims=True)
        var = x.var(axis=self.axis, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        return (x - mean) * inv_std, inv_std

    def forward(self, x):
        x_hat, inv_std = self.normalize(x)
        y = x_hat * self._broadcast(self.params['scale'], x.ndim) + self._broadcast(self.params['shift'], x.ndim)
        return y, (x_hat, inv_std)

    def backward(self, d_out, cache):
        x_hat, inv_std = cache
        axes = tuple(a for a in range(d_out.ndim) if a != self.axis % d_out.ndim)
        self.grads['scale'] += (d_out * x_hat).sum(axis=axes)
        self.grads['shift'] += d_out.sum(axis=axes)
        d_hat = d_out * self._broadcast(self.params['scale'], d_out.ndim)
        n = self.channels
        return (inv_std / n) * (
                n * d_hat
                - d_hat.sum(axis=self.axis, keepdims=True)
                - x_hat * (d_hat * x_hat).sum(axis=self.axis, keepdims=True))


# activations

class ReLU(Module):
    __slots__ = ()

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, d_out, cache):
        return d_out * cache


class GELU(Module):
    """
    tanh approximation of the Gaussian error linear unit
    """
    __slots__ = ()
    _c = np.sqrt(2 / np.pi)

    def forward(self, x):
        t = np.tanh(self._c * (x + 0.044715 * x ** 3))
        return 0.5 * x * (1 + t), (x, t)

    def backward(self, d_out, cache):
        x, t = cache
        grad = 0.5 * (1 + t) + 0.5 * x * (1 - t ** 2) * self._c * (1 + 3 * 0.044715 * x ** 2)
        return d_out * grad


class Sigmoid(Module):
    """
    the logistic function, held strictly inside (0, 1) for saturated inputs
    """
    __slots__ = ()

    def forward(self, x):
        y = expit(x)
        info = np.finfo(y.dtype)
        y = np.clip(y, info.tiny, 1 - info.epsneg)
        return y, y

    def backward(self, d_out, cache):
        return d_out * cache * (1 - cache)


class Dropout(Module):
    """
    inverted dropout; the identity in evaluation mode
    """
    __slots__ = 'rate', 'rng'

    def __init__(self, rate: float, rng: np.random.Generator = None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValidationError(f'dropout rate must satisfy 0 <= rate < 1, got {rate}')
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x):
        if not self.training or self.rate == 0:
            return x, None
        mask = (self.rng.random(x.shape) >= self.rate) / (1 - self.rate)
        return x * mask, mask

    def backward(self, d_out, cache):
        if cache is None:
            return d_out
        return d_out * cache


# dense

class Dense(Module):
    """
    a fully-connected layer acting on the last axis
    """
    __slots__ = 'in_features', 'out_features'

    def __init__(self, in_features: int, out_features: int, bias: bool = True, rng: np.random.Generator = None,
                 dtype=DEFAULT_DTYPE):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        rng = rng or np.random.default_rng(0)
        self.add_param('weight', he_normal(rng, (in_features, out_features), in_features, dtype))
        if bias:
            self.add_param('bias', np.zeros(out_features, dtype=dtype))

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ShapeError(f'dense layer expects {self.in_features} input features, got {shape_str(x.shape)}')
        y = matmul(x, self.params['weight']) if x.ndim >= 2 else x @ self.params['weight']
        if 'bias' in self.params:
            y = y + self.params['bias']
        return y, x

    def backward(self, d_out, cache):
        x = cache
        self.grads['weight'] += x.reshape(-1, self.in_features).T @ d_out.reshape(-1, self.out_features)
        if 'bias' in self.params:
            self.grads['bias'] += d_out.reshape(-1, self.out_features).sum(axis=0)
        return d_out @ self.params['weight'].T


# containers

class Sequential(Module):
    __slots__ = 'layers',

    def __init__(self, *layers: Module):
        super().__init__()
        self.layers: List[Module] = list(layers)

    def children(self):
        return ((str(i), m) for i, m in enumerate(self.layers))

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, d_out, cache):
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            d_out = layer.backward(d_out, c)
        return d_out


# squeeze and excitation

class SEBlock(Module):
    """
    Squeeze-and-excitation: the temporal mean of every channel (squeeze) passes through
    dense -> ReLU -> dense -> sigmoid (excitation); the resulting per-channel gate rescales the input.
    """
    __slots__ = 'channels', 'reduction', 'fc1', 'relu', 'fc2', 'gate'

    def __init__(self, channels: int, reduction: int = 16, rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if channels % reduction:
            raise ValidationError(f'SE channels ({channels}) must be divisible by the reduction ratio ({reduction})')
        self.channels = channels
        self.reduction = reduction
        rng = rng or np.random.default_rng(0)
        hidden = channels // reduction
        self.fc1 = Dense(channels, hidden, rng=rng, dtype=dtype)
        self.relu = ReLU()
        self.fc2 = Dense(hidden, channels, rng=rng, dtype=dtype)
        self.gate = Sigmoid()

    def children(self):
        return iter((('fc1', self.fc1), ('fc2', self.fc2)))

    @staticmethod
    def squeeze(x: Tensor) -> Tensor:
        return x.mean(axis=2)

    def excitation(self, squeezed: Tensor):
        caches = []
        h = squeezed
        for layer in (self.fc1, self.relu, self.fc2, self.gate):
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ShapeError(f'SE block over {self.channels} channels got {shape_str(x.shape)}')
        g, caches = self.excitation(self.squeeze(x))
        return x * g[:, :, None], (x, g, caches)

    def backward(self, d_out, cache):
        x, g, caches = cache
        d_g = (d_out * x).sum(axis=2)
        for layer, c in zip((self.gate, self.fc2, self.relu, self.fc1), reversed(caches)):
            d_g = layer.backward(d_g, c)
        return d_out * g[:, :, None] + d_g[:, :, None] / x.shape[2]


def se_block(x: Tensor, block: SEBlock) -> Tensor:
    return block(x)


__all__ = ['Module', 'Conv1d', 'MaxPool1d', 'BatchNorm1d', 'LayerNorm', 'ReLU', 'GELU', 'Sigmoid', 'Dropout',
           'Dense', 'Sequential', 'SEBlock', 'se_block', 'conv1d_forward', 'conv1d_backward', 'maxpool1d',
           'maxpool1d_backward', 'conv1d_output_length', 'he_normal', 'scaled_uniform']
