"""
Model assembly: the two convolutional attention branches (lowCAN, highCAN) with multi-level fusion, multi-scale
fusion of their outputs, the BERT-style, AAC and pooling backends, the two-layer classifier and the full model.

Every architecture is described by a ModelConfig. Configs are pydantic models read from JSON, or taken by name from
the reference presets in muslcat.commons.
"""
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple, Union
from pathlib import Path
import json
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
import pydantic

from ._util import shape_str, spawn_seeds
from .attention import AACBlock, MultiHeadAttention, DEFAULT_MAX_DISTANCE
from .errors import ConfigError, ShapeError
from .layers import (Module, Conv1d, MaxPool1d, BatchNorm1d, LayerNorm, ReLU, GELU, Sigmoid, Dropout, Dense,
                     Sequential, SEBlock)
from .tensor import Tensor, DEFAULT_DTYPE
from .units import Duration, Frequency

log = logging.getLogger(__name__)

POOL_SIZE = 3
INTERIOR_FILTER = 3

BlockKind = Literal['conv', 'se', 'aac']


class AttentionConfig(BaseModel):
    """
    the attention half of an AAC block: k = d_k / C_out, v = d_v / C_out
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    key_ratio: float = Field(0.25, gt=0)
    value_ratio: float = Field(0.25, gt=0, lt=1)
    heads: int = Field(8, ge=1)
    max_distance: int = Field(DEFAULT_MAX_DISTANCE, ge=0)
    relative: bool = True

    def depths(self, out_channels: int) -> Tuple[int, int]:
        """
        :return: the total key and value depths for an AAC block with out_channels outputs
        """
        return int(round(out_channels * self.key_ratio)), int(round(out_channels * self.value_ratio))

    def check(self, out_channels: int, where: str):
        key_depth, value_depth = self.depths(out_channels)
        if not 0 < value_depth < out_channels:
            raise ValueError(f'{where}: v={self.value_ratio} of {out_channels} channels leaves an empty branch')
        if key_depth < 1 or key_depth % self.heads or value_depth % self.heads:
            raise ValueError(f'{where}: key depth {key_depth} and value depth {value_depth} must be positive '
                             f'multiples of {self.heads} heads')

    def block_kwargs(self) -> Dict[str, Any]:
        return dict(key_ratio=self.key_ratio, value_ratio=self.value_ratio, heads=self.heads,
                    max_distance=self.max_distance, relative=self.relative)


class CANConfig(BaseModel):
    """
    one convolutional attention network branch. Layer n (1-based) has width widths[n-1] and block kind blocks[n-1];
    pool_after lists the layers followed by a max pool (filter and stride 3). The first layer is always a plain
    convolution with filter first_filter and stride first_stride, without padding.
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    branch: Literal['low', 'high']
    first_filter: int = Field(ge=1)
    first_stride: int = Field(ge=1)
    widths: List[int]
    blocks: List[BlockKind]
    pool_after: List[int] = []
    levels: int = Field(4, ge=1)
    se_reduction: int = Field(16, ge=1)
    attention: AttentionConfig = AttentionConfig()
    fusion_attention: AttentionConfig = AttentionConfig()

    @property
    def depth(self) -> int:
        return len(self.widths)

    @property
    def top_width(self) -> int:
        return self.widths[-1]

    @field_validator('widths')
    @classmethod
    def _positive_widths(cls, v):
        if not v or min(v) < 1:
            raise ValueError('widths must be a non-empty list of positive channel counts')
        return v

    @model_validator(mode='after')
    def _check_layers(self):
        if len(self.blocks) != len(self.widths):
            raise ValueError(f'{len(self.widths)} widths but {len(self.blocks)} block kinds')
        if self.blocks[0] != 'conv':
            raise ValueError(f'the first layer must be a plain convolution, got {self.blocks[0]!r}')
        if self.levels > self.depth:
            raise ValueError(f'multi-level span {self.levels} exceeds the depth {self.depth}')
        top = self.widths[-self.levels:]
        if len(set(top)) != 1:
            raise ValueError(f'the top {self.levels} layers must share one width, got {top}')
        if sorted(set(self.pool_after)) != list(self.pool_after):
            raise ValueError(f'pool_after must be strictly increasing, got {self.pool_after}')
        if self.pool_after and not 1 <= self.pool_after[0] <= self.pool_after[-1] <= self.depth:
            raise ValueError(f'pool_after entries must be layer numbers in 1..{self.depth}, got {self.pool_after}')
        for n, (kind, width) in enumerate(zip(self.blocks, self.widths), 1):
            if kind == 'se' and width % self.se_reduction:
                raise ValueError(f'layer {n}: SE width {width} is not divisible by {self.se_reduction}')
            if kind == 'aac':
                self.attention.check(width, f'layer {n}')
        self.fusion_attention.check(self.top_width, 'multi-level fusion')
        return self

    def layer_lengths(self, input_length: int) -> List[int]:
        """
        the output length of every layer (after its pool, if any) for an input of input_length samples
        """
        if input_length < self.first_filter:
            raise ConfigError(f'{self.branch}CAN: input of {input_length} samples is shorter than the first filter '
                              f'({self.first_filter})')
        length = (input_length - self.first_filter) // self.first_stride + 1
        ret = []
        for n in range(1, self.depth + 1):
            if n in self.pool_after:
                if length < POOL_SIZE:
                    raise ConfigError(f'{self.branch}CAN: the pool after layer {n} needs {POOL_SIZE} steps, only '
                                      f'{length} remain of a {input_length}-sample input')
                length = (length - POOL_SIZE) // POOL_SIZE + 1
            ret.append(length)
        return ret

    def multilevel_length(self, input_length: int) -> int:
        return sum(self.layer_lengths(input_length)[-self.levels:])


class BackendConfig(BaseModel):
    """
    kind 'bert': a [CLS]-prefixed encoder of `layers` relative-attention layers, `width` features wide.
    kind 'aac': one AAC block from the fused width to `width` channels, then a temporal mean.
    kind 'pool': the temporal mean of the fused features, nothing learned.
    The classifier maps the backend output through a hidden layer of `hidden` units to the tags.
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['bert', 'aac', 'pool'] = 'bert'
    width: int = Field(512, ge=1)
    layers: int = Field(6, ge=1)
    heads: int = Field(8, ge=1)
    ffn_width: int = Field(1024, ge=1)
    dropout: float = Field(0.2, ge=0, lt=1)
    max_distance: int = Field(DEFAULT_MAX_DISTANCE, ge=0)
    relative: bool = True
    attention: AttentionConfig = AttentionConfig(key_ratio=1.0, value_ratio=0.5)
    hidden: int = Field(512, ge=1)

    @model_validator(mode='after')
    def _check_kind(self):
        if self.kind == 'bert' and self.width % self.heads:
            raise ValueError(f'BERT width {self.width} is not divisible by {self.heads} heads')
        if self.kind == 'aac':
            self.attention.check(self.width, 'backend AAC')
        return self

    def output_width(self, in_channels: int) -> int:
        return in_channels if self.kind == 'pool' else self.width


class ModelConfig(BaseModel):
    """
    A full tagging model: one or two CAN branches (low before high), fused along time, a backend and a classifier.
    input_length and sample_rate accept unit strings ('3 s', '16 kHz').
    """
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str = 'model'
    n_tags: int = Field(50, ge=1)
    sample_rate: int = Field(16000, ge=1)
    input_length: int = Field(48000, ge=1)
    branches: List[CANConfig]
    backend: BackendConfig = BackendConfig()

    @model_validator(mode='before')
    @classmethod
    def _parse_units(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        rate = data.get('sample_rate', 16000)
        if isinstance(rate, str):
            rate = data['sample_rate'] = int(round(Frequency(rate)['Hz']))
        if isinstance(data.get('input_length'), str):
            data['input_length'] = Duration(data['input_length']).samples(rate)
        return data

    @model_validator(mode='after')
    def _check_branches(self):
        if not 1 <= len(self.branches) <= 2:
            raise ValueError(f'a model has one or two branches, got {len(self.branches)}')
        ids = [b.branch for b in self.branches]
        if len(set(ids)) != len(ids):
            raise ValueError(f'duplicate branch ids: {ids}')
        if ids == ['high', 'low']:
            raise ValueError('branches are fused low then high; list the low branch first')
        widths = {b.top_width for b in self.branches}
        if len(widths) != 1:
            raise ValueError(f'multi-scale fusion needs equal branch widths, got {sorted(widths)}')
        for b in self.branches:
            try:
                b.layer_lengths(self.input_length)
            except ConfigError as e:
                raise ValueError(str(e)) from e
        return self

    @property
    def fused_width(self) -> int:
        return self.branches[0].top_width

    def fused_length(self) -> int:
        return sum(b.multilevel_length(self.input_length) for b in self.branches)

    def branch(self, branch_id: str) -> Optional[CANConfig]:
        return next((b for b in self.branches if b.branch == branch_id), None)


def _wrap_validation(fn, *args):
    try:
        return fn(*args)
    except pydantic.ValidationError as e:
        raise ConfigError(str(e)) from e


def load_model_config(source: Union[str, Path, Dict[str, Any], ModelConfig]) -> ModelConfig:
    """
    resolve a model config from a config, a dict, a preset name or a JSON file path
    :raises ConfigError: if the source is neither a known preset nor a readable, valid config
    """
    if isinstance(source, ModelConfig):
        return source
    if isinstance(source, dict):
        return _wrap_validation(ModelConfig.model_validate, source)
    from .commons import presets
    if isinstance(source, str) and source.lower() in presets:
        return presets[source.lower()]
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f'{source!r} is neither a preset ({", ".join(sorted(presets))}) nor a config file')
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'could not read model config {path}: {e}') from e
    return _wrap_validation(ModelConfig.model_validate, data)


# convolutional attention networks

def _conv_layer(in_channels, out_channels, rng, dtype, first: CANConfig = None) -> List[Module]:
    if first is not None:
        conv = Conv1d(in_channels, out_channels, first.first_filter, first.first_stride, rng=rng, dtype=dtype)
    else:
        conv = Conv1d.same(in_channels, out_channels, INTERIOR_FILTER, rng=rng, dtype=dtype)
    return [conv, BatchNorm1d(out_channels, dtype=dtype), ReLU()]


class CAN(Module):
    """
    A convolutional attention network branch with multi-level fusion: the outputs of the top `levels` layers are
    concatenated along time and recalibrated by one AAC block.
    """
    __slots__ = 'config', 'layers', 'fusion'

    def __init__(self, config: CANConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.config = config
        self.layers: List[Sequential] = []
        in_channels = 1
        for n, (kind, width) in enumerate(zip(config.blocks, config.widths), 1):
            if n == 1:
                parts = _conv_layer(in_channels, width, rng, dtype, first=config)
            elif kind == 'conv':
                parts = _conv_layer(in_channels, width, rng, dtype)
            elif kind == 'se':
                parts = _conv_layer(in_channels, width, rng, dtype) + [
                    SEBlock(width, config.se_reduction, rng=rng, dtype=dtype)]
            else:
                parts = [AACBlock(in_channels, width, filter_size=INTERIOR_FILTER, rng=rng, dtype=dtype,
                                  **config.attention.block_kwargs()), ReLU()]
            if n in config.pool_after:
                parts.append(MaxPool1d(POOL_SIZE))
            self.layers.append(Sequential(*parts))
            in_channels = width
        self.fusion = AACBlock(config.top_width, config.top_width, filter_size=INTERIOR_FILTER, rng=rng,
                               dtype=dtype, **config.fusion_attention.block_kwargs())

    def children(self):
        for n, layer in enumerate(self.layers, 1):
            yield f'layer{n}', layer
        yield 'fusion', self.fusion

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f'{self.config.branch}CAN expects a (batch, 1, samples) waveform, got '
                             f'{shape_str(x.shape)}')
        levels = self.config.levels
        caches = []
        top = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
            top.append(x)
        top = top[-levels:]
        if len({t.shape[1] for t in top}) != 1:
            raise ShapeError(f'multi-level fusion over layers of different widths: '
                             f'{[t.shape[1] for t in top]}')
        lengths = [t.shape[2] for t in top]
        y, fusion_cache = self.fusion.forward(np.concatenate(top, axis=2))
        return y, (caches, lengths, fusion_cache)

    def backward(self, d_out, cache):
        caches, lengths, fusion_cache = cache
        d_cat = self.fusion.backward(d_out, fusion_cache)
        pieces = np.split(d_cat, np.cumsum(lengths)[:-1], axis=2)
        first_top = len(self.layers) - len(lengths)
        d = None
        for i in range(len(self.layers) - 1, -1, -1):
            if i >= first_top:
                piece = pieces[i - first_top]
                d = piece if d is None else d + piece
            d = self.layers[i].backward(d, caches[i])
        return d


def build_can(config: CANConfig, seed: int, input_length: int = 48000, dtype=DEFAULT_DTYPE) -> CAN:
    """
    build a branch with deterministic initialization
    :param config: the branch config
    :param seed: the initialization seed; equal seeds give bit-identical parameters
    :param input_length: the waveform length the branch will be fed, the pool schedule is validated against it
    :raises ConfigError: if a pool window exceeds the remaining length
    """
    config.layer_lengths(input_length)
    return CAN(config, np.random.default_rng(seed), dtype)


def can_forward_multilevel(can: CAN, x: Tensor) -> Tensor:
    return can(x)


def fuse_multiscale(*maps: Tensor) -> Tensor:
    """
    concatenate branch outputs along time, in the order given (low then high)
    """
    if not maps:
        raise ShapeError('nothing to fuse')
    for m in maps:
        if m.ndim != 3:
            raise ShapeError(f'multi-scale fusion expects (batch, channel, time) maps, got {shape_str(m.shape)}')
    if len({m.shape[:2] for m in maps}) != 1:
        raise ShapeError('multi-scale fusion needs equal batch and channel extents, got '
                         + ', '.join(shape_str(m.shape) for m in maps))
    return np.concatenate(maps, axis=2)


# backends

class PoolBackend(Module):
    """
    the temporal mean of the fused features
    """
    __slots__ = ()

    def forward(self, x):
        if x.shape[2] < 1:
            raise ShapeError(f'cannot pool an empty sequence: {shape_str(x.shape)}')
        return x.mean(axis=2), x.shape

    def backward(self, d_out, cache):
        shape = cache
        return np.broadcast_to(d_out[:, :, None] / shape[2], shape).copy()


class AACBackend(Module):
    __slots__ = 'block', 'pool'

    def __init__(self, in_channels: int, config: BackendConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.block = AACBlock(in_channels, config.width, filter_size=INTERIOR_FILTER, rng=rng, dtype=dtype,
                              **config.attention.block_kwargs())
        self.pool = PoolBackend()

    def children(self):
        return iter((('aac', self.block),))

    def forward(self, x):
        h, block_cache = self.block.forward(x)
        y, pool_cache = self.pool.forward(h)
        return y, (block_cache, pool_cache)

    def backward(self, d_out, cache):
        block_cache, pool_cache = cache
        return self.block.backward(self.pool.backward(d_out, pool_cache), block_cache)


class EncoderLayer(Module):
    """
    post-norm transformer encoder layer with relative self-attention:
    x + dropout(MHA(x)) -> layer norm -> h + dropout(FFN(h)) -> layer norm, FFN = dense -> GELU -> dense
    """
    __slots__ = 'attention', 'drop1', 'norm1', 'ffn', 'drop2', 'norm2'

    def __init__(self, width: int, heads: int, ffn_width: int, dropout: float, max_distance: int,
                 relative: bool, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.attention = MultiHeadAttention(width, width, width, heads, max_distance, relative, rng=rng, dtype=dtype)
        self.drop1 = Dropout(dropout, rng)
        self.norm1 = LayerNorm(width, axis=-1, dtype=dtype)
        self.ffn = Sequential(Dense(width, ffn_width, rng=rng, dtype=dtype), GELU(),
                              Dense(ffn_width, width, rng=rng, dtype=dtype))
        self.drop2 = Dropout(dropout, rng)
        self.norm2 = LayerNorm(width, axis=-1, dtype=dtype)

    def children(self):
        return iter((('attention', self.attention), ('drop1', self.drop1), ('norm1', self.norm1),
                     ('ffn', self.ffn), ('drop2', self.drop2), ('norm2', self.norm2)))

    def forward(self, x):
        a, attention_cache = self.attention.forward(x)
        a, drop1_cache = self.drop1.forward(a)
        h, norm1_cache = self.norm1.forward(x + a)
        f, ffn_cache = self.ffn.forward(h)
        f, drop2_cache = self.drop2.forward(f)
        y, norm2_cache = self.norm2.forward(h + f)
        return y, (attention_cache, drop1_cache, norm1_cache, ffn_cache, drop2_cache, norm2_cache)

    def backward(self, d_out, cache):
        attention_cache, drop1_cache, norm1_cache, ffn_cache, drop2_cache, norm2_cache = cache
        d_sum = self.norm2.backward(d_out, norm2_cache)
        d_h = d_sum + self.ffn.backward(self.drop2.backward(d_sum, drop2_cache), ffn_cache)
        d_sum = self.norm1.backward(d_h, norm1_cache)
        return d_sum + self.attention.backward(self.drop1.backward(d_sum, drop1_cache), attention_cache)


class BertBackend(Module):
    """
    A BERT-style encoder without absolute positions: the fused (B, C, L) features become L tokens, projected to the
    encoder width when C differs from it, prefixed by a learned [CLS] embedding. The output is the top layer's [CLS]
    activation.
    """
    __slots__ = 'width', 'projection', 'encoder'

    def __init__(self, in_channels: int, config: BackendConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.width = config.width
        self.projection = Dense(in_channels, config.width, rng=rng, dtype=dtype) \
            if in_channels != config.width else None
        self.add_param('cls', (rng.standard_normal(config.width) * 0.02).astype(dtype))
        self.encoder = [EncoderLayer(config.width, config.heads, config.ffn_width, config.dropout,
                                     config.max_distance, config.relative, rng, dtype)
                        for _ in range(config.layers)]

    def children(self):
        if self.projection is not None:
            yield 'projection', self.projection
        for n, layer in enumerate(self.encoder, 1):
            yield f'encoder{n}', layer

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] < 1:
            raise ShapeError(f'the BERT backend needs at least one token, got features {shape_str(x.shape)}')
        tokens = x.transpose(0, 2, 1)
        projection_cache = None
        if self.projection is not None:
            tokens, projection_cache = self.projection.forward(tokens)
        if tokens.shape[2] != self.width:
            raise ShapeError(f'BERT tokens must be {self.width} wide, got {shape_str(tokens.shape)}')
        cls = np.broadcast_to(self.params['cls'], (tokens.shape[0], 1, self.width))
        h = np.concatenate([cls, tokens], axis=1)
        caches = []
        for layer in self.encoder:
            h, cache = layer.forward(h)
            caches.append(cache)
        return h[:, 0], (projection_cache, caches, h.shape)

    def backward(self, d_out, cache):
        projection_cache, caches, shape = cache
        d = np.zeros(shape, dtype=d_out.dtype)
        d[:, 0] = d_out
        for layer, c in zip(reversed(self.encoder), reversed(caches)):
            d = layer.backward(d, c)
        self.grads['cls'] += d[:, 0].sum(axis=0)
        d_tokens = d[:, 1:]
        if self.projection is not None:
            d_tokens = self.projection.backward(d_tokens, projection_cache)
        return d_tokens.transpose(0, 2, 1)


def build_backend(in_channels: int, config: BackendConfig, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> Module:
    if config.kind == 'bert':
        return BertBackend(in_channels, config, rng, dtype)
    if config.kind == 'aac':
        return AACBackend(in_channels, config, rng, dtype)
    return PoolBackend()


def backend_bert(tokens: Tensor, backend: BertBackend) -> Tensor:
    """
    :param tokens: (B, T, C) tokens
    :return: the (B, width) [CLS] activations
    """
    return backend(tokens.transpose(0, 2, 1))


def backend_aac(features: Tensor, backend: AACBackend) -> Tensor:
    return backend(features)


class Classifier(Sequential):
    """
    dense -> ReLU -> dense -> sigmoid
    """
    __slots__ = ()

    def __init__(self, in_features: int, hidden: int, n_tags: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__(Dense(in_features, hidden, rng=rng, dtype=dtype), ReLU(),
                         Dense(hidden, n_tags, rng=rng, dtype=dtype), Sigmoid())


class Model(Module):
    __slots__ = 'config', 'branches', 'backend', 'classifier'

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.config = config
        seeds = spawn_seeds(seed, len(config.branches) + 2)
        self.branches = [build_can(b, s, config.input_length, dtype) for b, s in zip(config.branches, seeds)]
        self.backend = build_backend(config.fused_width, config.backend, np.random.default_rng(seeds[-2]), dtype)
        self.classifier = Classifier(config.backend.output_width(config.fused_width), config.backend.hidden,
                                     config.n_tags, np.random.default_rng(seeds[-1]), dtype)

    def children(self):
        for can in self.branches:
            yield can.config.branch, can
        yield 'backend', self.backend
        yield 'classifier', self.classifier

    def check_input(self, x: Tensor):
        expected = (1, self.config.input_length)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ShapeError(f'expected waveforms of shape (batch, 1, {self.config.input_length}) '
                             f'({self.config.input_length} samples at {self.config.sample_rate} Hz), '
                             f'got {shape_str(x.shape)}')

    def forward(self, x):
        self.check_input(x)
        outs, branch_caches = zip(*(can.forward(x) for can in self.branches))
        fused = fuse_multiscale(*outs)
        z, backend_cache = self.backend.forward(fused)
        p, classifier_cache = self.classifier.forward(z)
        return p, (branch_caches, [o.shape[2] for o in outs], backend_cache, classifier_cache)

    def backward(self, d_out, cache):
        branch_caches, lengths, backend_cache, classifier_cache = cache
        d_z = self.classifier.backward(d_out, classifier_cache)
        d_fused = self.backend.backward(d_z, backend_cache)
        pieces = np.split(d_fused, np.cumsum(lengths)[:-1], axis=2)
        d_x = None
        for can, piece, c in zip(self.branches, pieces, branch_caches):
            d = can.backward(piece, c)
            d_x = d if d_x is None else d_x + d
        return d_x

    def predict(self, x: Tensor, batch_size: int = None) -> Tensor:
        """
        tag probabilities in evaluation mode, optionally in slices of batch_size, restoring the previous mode
        """
        was_training = self.training
        self.eval()
        try:
            if batch_size is None or len(x) <= batch_size:
                return self(x)
            return np.concatenate([self(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])
        finally:
            self.train(was_training)


def build_model(config: Union[ModelConfig, str, Dict[str, Any]], seed: int = 0, dtype=DEFAULT_DTYPE) -> Model:
    config = load_model_config(config)
    model = Model(config, seed, dtype)
    log.debug('built %s: %d parameters, fused sequence of %d steps', config.name, model.num_parameters(),
              config.fused_length())
    return model


def model_forward(model: Model, waveform: Tensor) -> Tensor:
    return model(waveform)


__all__ = ['AttentionConfig', 'CANConfig', 'BackendConfig', 'ModelConfig', 'load_model_config', 'CAN', 'build_can',
           'can_forward_multilevel', 'fuse_multiscale', 'PoolBackend', 'AACBackend', 'EncoderLayer', 'BertBackend',
           'build_backend', 'backend_bert', 'backend_aac', 'Classifier', 'Model', 'build_model', 'model_forward']
