"""
The module-level gradient suite: every differentiable layer checked against central differences on at least three
random shapes, in double precision, plus width-reduced end-to-end checks of a branch and of both full models.
"""
from typing import Callable, Iterable, List, NamedTuple, Optional, Tuple, Union
import logging

import numpy as np

from .attention import MultiHeadAttention, AACBlock
from .layers import (Conv1d, MaxPool1d, BatchNorm1d, LayerNorm, ReLU, GELU, Sigmoid, Dropout, Dense, SEBlock,
                     Module)
from .model import EncoderLayer, BertBackend, BackendConfig, build_can, build_model
from .errors import ValidationError
from .tensor import GradCheckReport, Lambda, finite_diff_check, softmax_rows, softmax_rows_backward

log = logging.getLogger(__name__)

LAYER_TOLERANCE = 1e-4
COMPOSITE_TOLERANCE = 1e-3
# steps for composites of piecewise-linear layers
COMPOSITE_STEPS = (1e-4, 1e-5, 1e-6)


class GradCase(NamedTuple):
    module: str
    name: str
    build: Callable[[np.random.Generator], Tuple[Module, np.ndarray]]
    tolerance: float = LAYER_TOLERANCE
    max_checks: Optional[int] = None
    eps: Union[float, Tuple[float, ...]] = 1e-5


def _normal(rng, *shape):
    return rng.standard_normal(shape)


def _away_from_zero(rng, *shape):
    x = rng.standard_normal(shape)
    return np.sign(x) * (0.1 + np.abs(x))


def _tie_free(rng, *shape):
    return (rng.permutation(int(np.prod(shape))).reshape(shape) - np.prod(shape) / 2) * 0.1


def _randomized(module: Module, rng, *names) -> Module:
    for name, p in module.named_parameters():
        if name.split('.')[-1] in names:
            p[...] = rng.standard_normal(p.shape) * 0.5
    return module


def _with_stats(bn: BatchNorm1d, rng) -> BatchNorm1d:
    bn.buffers['running_mean'][...] = rng.standard_normal(bn.channels)
    bn.buffers['running_var'][...] = rng.uniform(0.5, 2, bn.channels)
    bn.params['scale'][...] = rng.uniform(0.5, 1.5, bn.channels)
    return bn.eval()


def _conv(b, c_in, length, c_out, f, s, p):
    return lambda rng: (Conv1d(c_in, c_out, f, s, p, rng=rng), _normal(rng, b, c_in, length))


def _mha(b, length, c, key_depth, value_depth, heads, max_distance, relative=True):
    def build(rng):
        mha = MultiHeadAttention(c, key_depth, value_depth, heads, max_distance, relative, rng=rng)
        return _randomized(mha, rng, 'rel_emb'), _normal(rng, b, length, c)
    return build


def _aac(b, c_in, length, c_out, k, v, heads, max_distance):
    def build(rng):
        block = AACBlock(c_in, c_out, k, v, heads, max_distance=max_distance, rng=rng)
        return _randomized(block, rng, 'rel_emb'), _normal(rng, b, c_in, length)
    return build


def _can(rng):
    from .commons import GRADCHECK_LOW_CAN
    can = build_can(GRADCHECK_LOW_CAN, int(rng.integers(2 ** 31)), input_length=2048)
    return can.eval(), _normal(rng, 1, 1, 2048) * 0.5


def _model(preset):
    def build(rng):
        model = build_model(preset, int(rng.integers(2 ** 31)))
        return model.eval(), _normal(rng, 1, 1, model.config.input_length) * 0.5
    return build


def cases() -> List[GradCase]:
    return [
        GradCase('softmax', 'softmax (4, 5)',
                 lambda rng: (Lambda(softmax_rows, lambda x, d: softmax_rows_backward(softmax_rows(x), d)),
                              _normal(rng, 4, 5))),
        GradCase('softmax', 'softmax (2, 3, 7)',
                 lambda rng: (Lambda(softmax_rows, lambda x, d: softmax_rows_backward(softmax_rows(x), d)),
                              _normal(rng, 2, 3, 7))),
        GradCase('softmax', 'softmax (1, 1)',
                 lambda rng: (Lambda(softmax_rows, lambda x, d: softmax_rows_backward(softmax_rows(x), d)),
                              _normal(rng, 1, 1))),
        GradCase('conv1d', 'conv1d same (2, 3, 10) -> 4', _conv(2, 3, 10, 4, 3, 1, 1)),
        GradCase('conv1d', 'conv1d strided (1, 2, 17) -> 3', _conv(1, 2, 17, 3, 5, 2, 0)),
        GradCase('conv1d', 'conv1d wide (2, 1, 40) -> 3', _conv(2, 1, 40, 3, 9, 3, 0)),
        GradCase('maxpool1d', 'maxpool1d (2, 3, 9)', lambda rng: (MaxPool1d(3), _tie_free(rng, 2, 3, 9))),
        GradCase('maxpool1d', 'maxpool1d (1, 2, 12)', lambda rng: (MaxPool1d(3), _tie_free(rng, 1, 2, 12))),
        GradCase('maxpool1d', 'maxpool1d (2, 4, 7)', lambda rng: (MaxPool1d(3), _tie_free(rng, 2, 4, 7))),
        GradCase('batchnorm', 'batchnorm train (4, 3, 5)', lambda rng: (BatchNorm1d(3), _normal(rng, 4, 3, 5))),
        GradCase('batchnorm', 'batchnorm train (2, 2, 8)', lambda rng: (BatchNorm1d(2), _normal(rng, 2, 2, 8))),
        GradCase('batchnorm', 'batchnorm eval (3, 4, 6)',
                 lambda rng: (_with_stats(BatchNorm1d(4), rng), _normal(rng, 3, 4, 6))),
        GradCase('layernorm', 'layernorm channels (2, 4, 5)', lambda rng: (LayerNorm(4), _normal(rng, 2, 4, 5))),
        GradCase('layernorm', 'layernorm features (2, 5, 6)',
                 lambda rng: (LayerNorm(6, axis=-1), _normal(rng, 2, 5, 6))),
        GradCase('layernorm', 'layernorm channels (1, 3, 7)', lambda rng: (LayerNorm(3), _normal(rng, 1, 3, 7))),
        GradCase('relu', 'relu (2, 3, 4)', lambda rng: (ReLU(), _away_from_zero(rng, 2, 3, 4))),
        GradCase('relu', 'relu (5, 6)', lambda rng: (ReLU(), _away_from_zero(rng, 5, 6))),
        GradCase('relu', 'relu (1, 1, 9)', lambda rng: (ReLU(), _away_from_zero(rng, 1, 1, 9))),
        GradCase('gelu', 'gelu (2, 3, 4)', lambda rng: (GELU(), _normal(rng, 2, 3, 4))),
        GradCase('gelu', 'gelu (5, 6)', lambda rng: (GELU(), _normal(rng, 5, 6))),
        GradCase('gelu', 'gelu (1, 9)', lambda rng: (GELU(), _normal(rng, 1, 9))),
        GradCase('sigmoid', 'sigmoid (2, 3)', lambda rng: (Sigmoid(), _normal(rng, 2, 3))),
        GradCase('sigmoid', 'sigmoid (4, 5, 2)', lambda rng: (Sigmoid(), _normal(rng, 4, 5, 2))),
        GradCase('sigmoid', 'sigmoid (1, 7)', lambda rng: (Sigmoid(), _normal(rng, 1, 7))),
        GradCase('dropout', 'dropout eval (2, 3, 4)', lambda rng: (Dropout(0.2).eval(), _normal(rng, 2, 3, 4))),
        GradCase('dropout', 'dropout eval (3, 5)', lambda rng: (Dropout(0.5).eval(), _normal(rng, 3, 5))),
        GradCase('dropout', 'dropout eval (1, 2, 6)', lambda rng: (Dropout(0.1).eval(), _normal(rng, 1, 2, 6))),
        GradCase('dense', 'dense (2, 3) -> 4', lambda rng: (Dense(3, 4, rng=rng), _normal(rng, 2, 3))),
        GradCase('dense', 'dense (2, 5, 6) -> 3', lambda rng: (Dense(6, 3, rng=rng), _normal(rng, 2, 5, 6))),
        GradCase('dense', 'dense (4, 8) -> 2', lambda rng: (Dense(8, 2, rng=rng), _normal(rng, 4, 8))),
        GradCase('se', 'se (1, 4, 5)', lambda rng: (SEBlock(4, 2, rng=rng), _normal(rng, 1, 4, 5))),
        GradCase('se', 'se (2, 8, 6)', lambda rng: (SEBlock(8, 4, rng=rng), _normal(rng, 2, 8, 6))),
        GradCase('se', 'se (3, 16, 4)', lambda rng: (SEBlock(16, 16, rng=rng), _normal(rng, 3, 16, 4))),
        GradCase('mha', 'mha relative (1, 6, 4)', _mha(1, 6, 4, 4, 4, 2, 3)),
        GradCase('mha', 'mha relative (2, 5, 8)', _mha(2, 5, 8, 4, 8, 2, 8)),
        GradCase('mha', 'mha relative (1, 3, 6)', _mha(1, 3, 6, 3, 3, 1, 8)),
        GradCase('mha', 'mha absolute (2, 4, 4)', _mha(2, 4, 4, 4, 4, 2, 0, relative=False)),
        GradCase('aac', 'aac (1, 4, 5) -> 8', _aac(1, 4, 5, 8, 0.5, 0.5, 2, 4)),
        GradCase('aac', 'aac (2, 3, 6) -> 8', _aac(2, 3, 6, 8, 0.25, 0.25, 2, 2)),
        GradCase('aac', 'aac (1, 6, 7) -> 12', _aac(1, 6, 7, 12, 0.25, 0.25, 3, 16)),
        GradCase('encoder', 'encoder layer (2, 5, 8)',
                 lambda rng: (_randomized(EncoderLayer(8, 2, 16, 0.2, 3, True, rng), rng, 'rel_emb').eval(),
                              _normal(rng, 2, 5, 8))),
        GradCase('encoder', 'bert backend (1, 6, 4)',
                 lambda rng: (BertBackend(6, BackendConfig(width=8, layers=2, heads=2, ffn_width=16,
                                                           max_distance=4), rng).eval(),
                              _normal(rng, 1, 6, 4))),
        GradCase('encoder', 'bert backend (2, 8, 3)',
                 lambda rng: (BertBackend(8, BackendConfig(width=8, layers=1, heads=4, ffn_width=8,
                                                           max_distance=8), rng).eval(),
                              _normal(rng, 2, 8, 3))),
        GradCase('can', 'lowCAN (1, 1, 2048)', _can, LAYER_TOLERANCE, max_checks=6, eps=COMPOSITE_STEPS),
        GradCase('model', 'MuSLCAN (1, 1, 2048)', _model('gradcheck_muslcan'), COMPOSITE_TOLERANCE, max_checks=4,
                 eps=COMPOSITE_STEPS),
        GradCase('model', 'MuSLCAT (1, 1, 2048)', _model('gradcheck_muslcat'), COMPOSITE_TOLERANCE, max_checks=4,
                 eps=COMPOSITE_STEPS),
    ]


def module_names() -> List[str]:
    return list(dict.fromkeys(c.module for c in cases()))


def run_suite(modules: Iterable[str] = None, seed: int = 0) -> List[GradCheckReport]:
    """
    :param modules: the module groups to check, all if None
    :return: one report per case
    """
    selected = cases()
    if modules is not None:
        modules = set(modules)
        unknown = modules - set(module_names())
        if unknown:
            raise ValidationError(f'unknown gradient check modules: {sorted(unknown)}, expected {module_names()}')
        selected = [c for c in selected if c.module in modules]
    reports = []
    for i, case in enumerate(selected):
        rng = np.random.default_rng([seed, i])
        op, x = case.build(rng)
        report = finite_diff_check(op, x, tolerance=case.tolerance, seed=seed + i, max_checks=case.max_checks,
                                   eps=case.eps, name=case.name)
        log.info('%s', report)
        reports.append(report)
    return reports


__all__ = ['GradCase', 'cases', 'module_names', 'run_suite', 'LAYER_TOLERANCE', 'COMPOSITE_TOLERANCE',
           'COMPOSITE_STEPS']
