"""
Dense tensors and the two primitives everything else is built on, plus the finite-difference gradient checker
every differentiable layer is verified with.

Tensors are numpy arrays. Activations use the (batch, channel, time) layout; attention works in
(batch, time, channel). Verification runs in float64, training may run in float32.
"""
from typing import Callable, NamedTuple, Optional, Sequence, Tuple, TYPE_CHECKING, Union
import logging

import numpy as np

from ._util import shape_str
from .errors import NonFiniteError, ShapeError

if TYPE_CHECKING:
    from .layers import Module

log = logging.getLogger(__name__)

Tensor = np.ndarray

DEFAULT_DTYPE = np.float64


def tensor(data, dtype=None) -> Tensor:
    """
    build a tensor from array-like data
    :param data: nested sequences or an array
    :param dtype: the element type, float64 by default
    :return: a new contiguous tensor, checked for finiteness
    """
    ret = np.array(data, dtype=dtype or DEFAULT_DTYPE, order='C')
    check_finite(ret, 'tensor')
    return ret


def check_finite(x: Tensor, where: str) -> Tensor:
    """
    raise NonFiniteError naming the first offending position if x holds NaN or Inf
    :return: x, for piping
    """
    finite = np.isfinite(x)
    if not finite.all():
        index = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise NonFiniteError(where, index)
    return x


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    matrix product over the last two axes, batched (and broadcast) over the leading ones
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f'matmul needs operands of rank >= 2, got {shape_str(a.shape)} and {shape_str(b.shape)}')
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f'matmul inner extents differ: {shape_str(a.shape)} @ {shape_str(b.shape)}')
    try:
        return np.matmul(a, b)
    except ValueError as e:
        raise ShapeError(f'matmul batch extents do not broadcast: {shape_str(a.shape)} @ {shape_str(b.shape)}') from e


def softmax_rows(x: Tensor) -> Tensor:
    """
    softmax along the last axis, computed with per-row max subtraction
    """
    if x.shape[-1] < 1:
        raise ShapeError(f'softmax over an empty axis: {shape_str(x.shape)}')
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(probs: Tensor, d_probs: Tensor) -> Tensor:
    return probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))


class GradCheckReport(NamedTuple):
    op: str
    max_rel_error: float
    tolerance: float
    passed: bool
    location: Optional[str] = None
    checked: int = 0

    def __str__(self):
        status = 'PASS' if self.passed else 'FAIL'
        ret = f'{status} {self.op}: max relative error {self.max_rel_error:.3e} (tolerance {self.tolerance:.0e}, ' \
              f'{self.checked} coordinates)'
        if self.location and not self.passed:
            ret += f', worst at {self.location}'
        return ret


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def finite_diff_check(op: 'Module', x: Tensor, eps: Union[float, Sequence[float]] = 1e-5, tolerance: float = 1e-4,
                      seed: int = 0, max_checks: Optional[int] = None, name: str = None) -> GradCheckReport:
    """
    Compare an operation's analytic backward pass to central differences.

    The scalar objective is <op(x), w> for a fixed random w, so every output element contributes. Both the input
    gradient and the gradient of every parameter of op are checked; parameters are perturbed in place and restored.
    :param op: the module under test, in the mode (train/eval) it should be checked in
    :param x: the input, float64
    :param eps: central difference step. Given several steps, each coordinate is scored by the estimate closest to
        the analytic value: ReLU and max-pool kinks spoil large steps, rounding spoils small ones.
    :param tolerance: the largest acceptable relative error
    :param seed: seeds the projection w and the coordinate sampling
    :param max_checks: if given, check at most this many randomly chosen coordinates per tensor
    :param name: the name to report, defaults to the op's class name
    """
    name = name or type(op).__name__
    steps = (eps,) if np.isscalar(eps) else tuple(eps)
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    y, cache = op.forward(x)
    w = rng.standard_normal(y.shape)
    op.zero_grad()
    dx = op.backward(w, cache)

    def objective() -> float:
        return float(np.sum(op.forward(x)[0] * w))

    targets = [('input', x, dx)]
    targets.extend((n, p, op.grads_of(n)) for n, p in op.named_parameters())

    worst = 0.0
    worst_at = None
    checked = 0
    for target_name, arr, grad in targets:
        try:
            check_finite(grad, f'gradient of {target_name}')
        except NonFiniteError as e:
            return GradCheckReport(name, float('inf'), tolerance, False, str(e), checked)
        coords = np.arange(arr.size)
        if max_checks is not None and arr.size > max_checks:
            coords = rng.choice(arr.size, size=max_checks, replace=False)
        flat = arr.reshape(-1)
        grad_flat = grad.reshape(-1)
        for i in coords:
            orig = flat[i]
            err = float('inf')
            for step in steps:
                flat[i] = orig + step
                f_plus = objective()
                flat[i] = orig - step
                f_minus = objective()
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * step)
                if not np.isfinite(numeric):
                    return GradCheckReport(name, float('inf'), tolerance, False,
                                           f'{target_name}{np.unravel_index(i, arr.shape)}', checked)
                err = min(err, relative_error(float(grad_flat[i]), numeric))
            checked += 1
            if err > worst:
                worst = err
                worst_at = f'{target_name}{tuple(int(j) for j in np.unravel_index(i, arr.shape))}'
    report = GradCheckReport(name, worst, tolerance, worst <= tolerance, worst_at, checked)
    log.debug('%s', report)
    return report


class Lambda:
    """
    Adapts a pair of plain functions to the interface finite_diff_check expects, for parameterless operations.
    """
    __slots__ = 'fn', 'grad_fn'

    def __init__(self, fn: Callable[[Tensor], Tensor], grad_fn: Callable[[Tensor, Tensor], Tensor]):
        """
        :param fn: the forward function
        :param grad_fn: maps (x, d_out) to d_x
        """
        self.fn = fn
        self.grad_fn = grad_fn

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        return self.fn(x), x

    def backward(self, d_out: Tensor, cache: Tensor) -> Tensor:
        return self.grad_fn(cache, d_out)

    def zero_grad(self):
        pass

    def named_parameters(self):
        return iter(())

    def grads_of(self, name):
        raise KeyError(name)
