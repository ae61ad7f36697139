"""
Multi-head self-attention over time with unmasked relative position embeddings, and attention-augmented convolution.

Relative logits come in two flavours with identical output. The explicit one gathers one embedding per (query, key)
pair, an (L, L, d) tensor per head. The skewed one multiplies the queries by the (2L - 1) embeddings of all
distances once and re-indexes the (L, 2L - 1) product into the (L, L) logit matrix by padding and reshaping, so the
embedding storage is linear in L.
"""
from typing import List, Optional, Tuple
import logging

import numpy as np

from ._util import shape_str
from .errors import ShapeError, ValidationError
from .layers import Module, Conv1d, LayerNorm, scaled_uniform
from .tensor import Tensor, DEFAULT_DTYPE, matmul, softmax_rows, softmax_rows_backward

log = logging.getLogger(__name__)

DEFAULT_MAX_DISTANCE = 512


class AllocationCounter:
    """
    Records the relative-embedding buffers an attention call materializes
    """
    __slots__ = 'allocations',

    def __init__(self):
        self.allocations: List[Tuple[str, int]] = []

    def record(self, what: str, arr: Tensor):
        self.allocations.append((what, arr.nbytes))

    @property
    def peak(self) -> int:
        return max((n for _, n in self.allocations), default=0)

    def reset(self):
        self.allocations.clear()


def split_heads(t: Tensor, heads: int) -> Tensor:
    """
    (B, L, d) -> (B, heads, L, d / heads)
    """
    b, length, d = t.shape
    return t.reshape(b, length, heads, d // heads).transpose(0, 2, 1, 3)


def merge_heads(t: Tensor) -> Tensor:
    """
    (B, heads, L, d_h) -> (B, L, heads * d_h)
    """
    b, h, length, d = t.shape
    return t.transpose(0, 2, 1, 3).reshape(b, length, h * d)


def _max_distance(rel_emb: Tensor) -> int:
    return (rel_emb.shape[1] - 1) // 2


def relative_indices(length: int, max_distance: int) -> Tensor:
    """
    the (L, L) table of embedding rows, row clip(j - i, -D, D) + D for query i and key j
    """
    pos = np.arange(length)
    return np.clip(pos[None, :] - pos[:, None], -max_distance, max_distance) + max_distance


def distance_window(length: int, max_distance: int) -> Tensor:
    """
    the embedding rows of the distances -(L - 1) .. L - 1, clipped to the table
    """
    return np.clip(np.arange(-(length - 1), length), -max_distance, max_distance) + max_distance


def relative_logits_explicit(q: Tensor, rel_emb: Tensor, counter: AllocationCounter = None) -> Tensor:
    """
    S_rel[b, h, i, j] = q[b, h, i] . E[h, clip(j - i)], gathering the full (L, L, d_h) embedding tensor per head
    :param q: queries of shape (B, N_h, L, d_h)
    :param rel_emb: relative embeddings of shape (N_h, 2 D + 1, d_h)
    :return: relative logits of shape (B, N_h, L, L)
    """
    length = q.shape[2]
    gathered = rel_emb[:, relative_indices(length, _max_distance(rel_emb))]
    if counter is not None:
        counter.record('explicit', gathered)
    return np.einsum('bhid,hijd->bhij', q, gathered)


def skew(qe: Tensor) -> Tensor:
    """
    (..., L, 2L - 1) -> (..., L, L) with out[..., i, j] = qe[..., i, j - i + L - 1]
    """
    length = qe.shape[-2]
    lead = qe.shape[:-2]
    padded = np.pad(qe, [(0, 0)] * (qe.ndim - 1) + [(0, 1)])
    flat = padded.reshape(*lead, 2 * length * length)
    body = flat[..., length - 1:length - 1 + length * (2 * length - 1)]
    return body.reshape(*lead, length, 2 * length - 1)[..., :length]


def unskew(d_logits: Tensor) -> Tensor:
    """
    the adjoint of skew: scatters (..., L, L) back into (..., L, 2L - 1)
    """
    length = d_logits.shape[-1]
    pos = np.arange(length)
    cols = pos[None, :] - pos[:, None] + length - 1
    ret = np.zeros(d_logits.shape[:-1] + (2 * length - 1,), dtype=d_logits.dtype)
    np.put_along_axis(ret, np.broadcast_to(cols, d_logits.shape), d_logits, axis=-1)
    return ret


def relative_logits_skewed(q: Tensor, rel_emb: Tensor, counter: AllocationCounter = None) -> Tensor:
    """
    same output as relative_logits_explicit, without materializing per-pair embeddings
    :param q: queries of shape (B, N_h, L, d_h)
    :param rel_emb: relative embeddings of shape (N_h, 2 D + 1, d_h)
    :return: relative logits of shape (B, N_h, L, L)
    """
    length = q.shape[2]
    window = rel_emb[:, distance_window(length, _max_distance(rel_emb))]
    if counter is not None:
        counter.record('skewed', window)
    return skew(matmul(q, window.swapaxes(-1, -2)))


class MultiHeadAttention(Module):
    """
    Multi-head self-attention over (B, L, C_in) sequences. Queries and keys have total depth d_k, values d_v, split
    evenly over the heads; W^O mixes the concatenated heads.
    """
    __slots__ = 'in_channels', 'key_depth', 'value_depth', 'heads', 'max_distance', 'relative'

    def __init__(self, in_channels: int, key_depth: int, value_depth: int, heads: int,
                 max_distance: int = DEFAULT_MAX_DISTANCE, relative: bool = True,
                 rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if key_depth % heads or value_depth % heads:
            raise ValidationError(f'key depth ({key_depth}) and value depth ({value_depth}) must be divisible by '
                                  f'the number of heads ({heads})')
        if max_distance < 0:
            raise ValidationError(f'max relative distance must be non-negative, got {max_distance}')
        self.in_channels = in_channels
        self.key_depth = key_depth
        self.value_depth = value_depth
        self.heads = heads
        self.max_distance = max_distance
        self.relative = relative
        rng = rng or np.random.default_rng(0)
        self.add_param('w_q', scaled_uniform(rng, (in_channels, key_depth), in_channels, dtype))
        self.add_param('w_k', scaled_uniform(rng, (in_channels, key_depth), in_channels, dtype))
        self.add_param('w_v', scaled_uniform(rng, (in_channels, value_depth), in_channels, dtype))
        self.add_param('w_o', scaled_uniform(rng, (value_depth, value_depth), value_depth, dtype))
        if relative:
            self.add_param('rel_emb', np.zeros((heads, 2 * max_distance + 1, key_depth // heads), dtype=dtype))

    @property
    def head_key_depth(self) -> int:
        return self.key_depth // self.heads

    def attend(self, x: Tensor, relative: bool, counter: AllocationCounter = None):
        """
        :param x: input of shape (B, L, C_in)
        :param relative: whether to add relative position logits
        :return: the output of shape (B, L, d_v) and the backward cache
        """
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f'attention over {self.in_channels} channels expects (batch, time, channel), '
                             f'got {shape_str(x.shape)}')
        if x.shape[1] < 1:
            raise ShapeError('attention over an empty sequence')
        p = self.params
        q = split_heads(matmul(x, p['w_q']), self.heads)
        k = split_heads(matmul(x, p['w_k']), self.heads)
        v = split_heads(matmul(x, p['w_v']), self.heads)
        logits = matmul(q, k.swapaxes(-1, -2))
        if relative:
            logits = logits + relative_logits_skewed(q, p['rel_emb'], counter)
        weights = softmax_rows(logits / np.sqrt(self.head_key_depth))
        heads_out = merge_heads(matmul(weights, v))
        return matmul(heads_out, p['w_o']), (x, q, k, v, weights, heads_out, relative)

    def attention_weights(self, x: Tensor) -> Tensor:
        """
        :return: the (B, N_h, L, L) attention weights of x
        """
        return self.attend(x, self.relative)[1][4]

    def forward(self, x):
        return self.attend(x, self.relative)

    def backward(self, d_out, cache):
        x, q, k, v, weights, heads_out, relative = cache
        p = self.params
        self.grads['w_o'] += heads_out.reshape(-1, self.value_depth).T @ d_out.reshape(-1, self.value_depth)
        d_heads = split_heads(d_out @ p['w_o'].T, self.heads)
        d_weights = matmul(d_heads, v.swapaxes(-1, -2))
        d_v = matmul(weights.swapaxes(-1, -2), d_heads)
        d_logits = softmax_rows_backward(weights, d_weights) / np.sqrt(self.head_key_depth)
        d_q = matmul(d_logits, k)
        d_k = matmul(d_logits.swapaxes(-1, -2), q)
        if relative:
            length = x.shape[1]
            rows = distance_window(length, self.max_distance)
            window = p['rel_emb'][:, rows]
            d_qe = unskew(d_logits)
            d_q += matmul(d_qe, window)
            d_window = np.einsum('bhim,bhid->hmd', d_qe, q)
            np.add.at(self.grads['rel_emb'], (slice(None), rows), d_window)
        d_q, d_k, d_v = merge_heads(d_q), merge_heads(d_k), merge_heads(d_v)
        flat_x = x.reshape(-1, self.in_channels)
        self.grads['w_q'] += flat_x.T @ d_q.reshape(-1, self.key_depth)
        self.grads['w_k'] += flat_x.T @ d_k.reshape(-1, self.key_depth)
        self.grads['w_v'] += flat_x.T @ d_v.reshape(-1, self.value_depth)
        return d_q @ p['w_q'].T + d_k @ p['w_k'].T + d_v @ p['w_v'].T


def mha_absolute_free(x: Tensor, mha: MultiHeadAttention) -> Tensor:
    """
    multi-head attention without any positional term
    """
    return mha.attend(x, relative=False)[0]


def mha_relative(x: Tensor, mha: MultiHeadAttention) -> Tensor:
    """
    multi-head attention with relative logits (QK^T + S_rel) / sqrt(d_k^h)
    """
    if 'rel_emb' not in mha.params:
        raise ValidationError('attention was built without relative embeddings')
    return mha.attend(x, relative=True)[0]


class AACBlock(Module):
    """
    Attention-augmented convolution: a length-preserving convolution with C_out - d_v filters and an MHA with d_v
    value channels run side by side; their outputs are concatenated along channels and layer-normalized.
    """
    __slots__ = 'in_channels', 'out_channels', 'key_ratio', 'value_ratio', 'conv', 'mha', 'norm'

    def __init__(self, in_channels: int, out_channels: int, key_ratio: float = 0.25, value_ratio: float = 0.25,
                 heads: int = 8, filter_size: int = 3, max_distance: int = DEFAULT_MAX_DISTANCE,
                 relative: bool = True, rng: np.random.Generator = None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if not 0 < value_ratio < 1 or key_ratio <= 0:
            raise ValidationError(f'AAC ratios must satisfy 0 < v < 1 and k > 0, got v={value_ratio}, '
                                  f'k={key_ratio}')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.key_ratio = key_ratio
        self.value_ratio = value_ratio
        value_depth = int(round(out_channels * value_ratio))
        key_depth = int(round(out_channels * key_ratio))
        if not 0 < value_depth < out_channels:
            raise ValidationError(f'AAC with {out_channels} output channels and v={value_ratio} leaves no '
                                  f'convolutional or attentional channels')
        rng = rng or np.random.default_rng(0)
        self.conv = Conv1d.same(in_channels, out_channels - value_depth, filter_size, rng=rng, dtype=dtype)
        self.mha = MultiHeadAttention(in_channels, key_depth, value_depth, heads, max_distance, relative,
                                      rng=rng, dtype=dtype)
        self.norm = LayerNorm(out_channels, axis=1, dtype=dtype)

    @property
    def value_depth(self) -> int:
        return self.mha.value_depth

    def children(self):
        return iter((('conv', self.conv), ('mha', self.mha), ('norm', self.norm)))

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f'AAC over {self.in_channels} channels got {shape_str(x.shape)}')
        conv_out, conv_cache = self.conv.forward(x)
        attn_out, attn_cache = self.mha.forward(x.transpose(0, 2, 1))
        attn_out = attn_out.transpose(0, 2, 1)
        if conv_out.shape[2] != attn_out.shape[2]:
            raise ShapeError(f'AAC branches disagree on length: convolution {conv_out.shape[2]}, '
                             f'attention {attn_out.shape[2]}')
        y, norm_cache = self.norm.forward(np.concatenate([conv_out, attn_out], axis=1))
        return y, (conv_cache, attn_cache, norm_cache)

    def backward(self, d_out, cache):
        conv_cache, attn_cache, norm_cache = cache
        d_cat = self.norm.backward(d_out, norm_cache)
        split = self.out_channels - self.value_depth
        dx = self.conv.backward(d_cat[:, :split], conv_cache)
        dx = dx + self.mha.backward(d_cat[:, split:].transpose(0, 2, 1), attn_cache).transpose(0, 2, 1)
        return dx


def aac_block(x: Tensor, block: AACBlock) -> Tensor:
    return block(x)


def aac_param_estimate(c_in: float, c_out: float, k: float, v: float, r: float) -> float:
    """
    C_in C_out (2k + (1 - r^2) v + (C_out / C_in) v^2), evaluated exactly as written. The relative embeddings and
    biases are not part of the estimate; compare with AACBlock.num_parameters() for the exact count.
    :param c_in: input channels
    :param c_out: output channels
    :param k: key depth ratio d_k / C_out
    :param v: value depth ratio d_v / C_out
    :param r: kernel size of the convolution being replaced
    """
    if min(c_in, c_out, k, r) <= 0 or not 0 < v < 1:
        raise ValidationError(f'invalid arguments for the AAC estimate: C_in={c_in}, C_out={c_out}, k={k}, v={v}, '
                              f'r={r}')
    return c_in * c_out * (2 * k + (1 - r ** 2) * v + (c_out / c_in) * v ** 2)


__all__ = ['MultiHeadAttention', 'AACBlock', 'AllocationCounter', 'relative_logits_explicit',
           'relative_logits_skewed', 'mha_absolute_free', 'mha_relative', 'aac_block', 'aac_param_estimate',
           'skew', 'unskew', 'split_heads', 'merge_heads']
