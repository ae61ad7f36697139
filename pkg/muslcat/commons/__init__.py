"""
Reference architectures and their published parameter counts.

The full-size presets reproduce the ablation rows of the component comparison (lowCAN, highCAN, each with BERT,
the two branches with a plain pooling head, MuSLCAN and MuSLCAT). Channel widths and the pool schedule are not
published; the ones below put every audited total within 15% of its published count and preserve the published
ordering. Relative distances are clipped per site to the longest sequence the block sees.

The TINY_* presets share the reference topology at reduced width, for desk-scale training on 3 s clips. The
GRADCHECK_* presets are cut down further, to 2048-sample inputs, for end-to-end gradient checks.
"""
from typing import Dict

from ..model import AttentionConfig, CANConfig, BackendConfig, ModelConfig

# reference

FRONTEND_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=8, max_distance=32)
FUSION_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=8, max_distance=96)

LOW_CAN = CANConfig(
    branch='low', first_filter=27, first_stride=9,
    widths=[128] * 6 + [224] * 4,
    blocks=['conv'] * 3 + ['se'] * 3 + ['aac'] * 4,
    pool_after=[2, 3, 4, 5, 6],
    levels=4, attention=FRONTEND_ATTENTION, fusion_attention=FUSION_ATTENTION,
)

HIGH_CAN = CANConfig(
    branch='high', first_filter=3, first_stride=3,
    widths=[128] * 6 + [224] * 5,
    blocks=['conv'] * 3 + ['se'] * 4 + ['aac'] * 4,
    pool_after=[2, 3, 4, 5, 6, 7],
    levels=4, attention=FRONTEND_ATTENTION, fusion_attention=FUSION_ATTENTION,
)

POOL_BACKEND = BackendConfig(kind='pool', hidden=512)
AAC_BACKEND = BackendConfig(kind='aac', width=512, hidden=512,
                            attention=AttentionConfig(key_ratio=1.0, value_ratio=0.5, heads=8, max_distance=192))
BERT_BACKEND = BackendConfig(kind='bert', width=512, layers=6, heads=8, ffn_width=1024, dropout=0.2,
                             max_distance=128, hidden=512)

LOWCAN = ModelConfig(name='lowCAN', branches=[LOW_CAN], backend=POOL_BACKEND)
HIGHCAN = ModelConfig(name='highCAN', branches=[HIGH_CAN], backend=POOL_BACKEND)
LOW_BERT = ModelConfig(name='low + BERT', branches=[LOW_CAN], backend=BERT_BACKEND)
HIGH_BERT = ModelConfig(name='high + BERT', branches=[HIGH_CAN], backend=BERT_BACKEND)
LOW_HIGH_CNN = ModelConfig(name='lowCNN + highCNN', branches=[LOW_CAN, HIGH_CAN], backend=POOL_BACKEND)
MUSLCAN = ModelConfig(name='MuSLCAN', branches=[LOW_CAN, HIGH_CAN], backend=AAC_BACKEND)
MUSLCAT = ModelConfig(name='MuSLCAT', branches=[LOW_CAN, HIGH_CAN], backend=BERT_BACKEND)

# desk scale

TINY_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=2, max_distance=24)
TINY_FUSION_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=2, max_distance=96)


def _narrowed(branch: CANConfig, **changes) -> CANConfig:
    return CANConfig.model_validate({**branch.model_dump(), **changes})


TINY_LOW_CAN = _narrowed(LOW_CAN, widths=[16] * 6 + [32] * 4, se_reduction=4,
                         attention=TINY_ATTENTION, fusion_attention=TINY_FUSION_ATTENTION)
TINY_HIGH_CAN = _narrowed(HIGH_CAN, widths=[16] * 6 + [32] * 5, se_reduction=4,
                          attention=TINY_ATTENTION, fusion_attention=TINY_FUSION_ATTENTION)

TINY_AAC_BACKEND = BackendConfig(kind='aac', width=64, hidden=64,
                                 attention=AttentionConfig(key_ratio=1.0, value_ratio=0.5, heads=2, max_distance=192))
TINY_BERT_BACKEND = BackendConfig(kind='bert', width=64, layers=2, heads=2, ffn_width=128, dropout=0.1,
                                  max_distance=128, hidden=64)
TINY_POOL_BACKEND = BackendConfig(kind='pool', hidden=64)

TINY_MUSLCAN = ModelConfig(name='tiny MuSLCAN', n_tags=4, branches=[TINY_LOW_CAN, TINY_HIGH_CAN],
                           backend=TINY_AAC_BACKEND)
TINY_MUSLCAT = ModelConfig(name='tiny MuSLCAT', n_tags=4, branches=[TINY_LOW_CAN, TINY_HIGH_CAN],
                           backend=TINY_BERT_BACKEND)
TINY_LOW_HIGH_CNN = ModelConfig(name='tiny lowCNN + highCNN', n_tags=4, branches=[TINY_LOW_CAN, TINY_HIGH_CAN],
                                backend=TINY_POOL_BACKEND)

# gradient checks

GRADCHECK_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=2, max_distance=8)
GRADCHECK_FUSION_ATTENTION = AttentionConfig(key_ratio=0.25, value_ratio=0.25, heads=2, max_distance=24)

GRADCHECK_LOW_CAN = CANConfig(
    branch='low', first_filter=27, first_stride=9,
    widths=[8] * 6,
    blocks=['conv', 'conv', 'se', 'aac', 'aac', 'aac'],
    pool_after=[2, 3, 4], levels=3, se_reduction=4,
    attention=GRADCHECK_ATTENTION, fusion_attention=GRADCHECK_FUSION_ATTENTION,
)
GRADCHECK_HIGH_CAN = CANConfig(
    branch='high', first_filter=3, first_stride=3,
    widths=[8] * 7,
    blocks=['conv', 'conv', 'se', 'se', 'aac', 'aac', 'aac'],
    pool_after=[2, 3, 4, 5], levels=3, se_reduction=4,
    attention=GRADCHECK_ATTENTION, fusion_attention=GRADCHECK_FUSION_ATTENTION,
)

GRADCHECK_MUSLCAN = ModelConfig(
    name='gradcheck MuSLCAN', n_tags=4, input_length=2048, branches=[GRADCHECK_LOW_CAN, GRADCHECK_HIGH_CAN],
    backend=BackendConfig(kind='aac', width=32, hidden=16,
                          attention=AttentionConfig(key_ratio=1.0, value_ratio=0.5, heads=2, max_distance=48)))
GRADCHECK_MUSLCAT = ModelConfig(
    name='gradcheck MuSLCAT', n_tags=4, input_length=2048, branches=[GRADCHECK_LOW_CAN, GRADCHECK_HIGH_CAN],
    backend=BackendConfig(kind='bert', width=16, layers=1, heads=2, ffn_width=32, dropout=0.2, max_distance=24,
                          hidden=16))

presets: Dict[str, ModelConfig] = {
    'lowcan': LOWCAN,
    'highcan': HIGHCAN,
    'low_bert': LOW_BERT,
    'high_bert': HIGH_BERT,
    'low_high_cnn': LOW_HIGH_CNN,
    'muslcan': MUSLCAN,
    'muslcat': MUSLCAT,
    'tiny_muslcan': TINY_MUSLCAN,
    'tiny_muslcat': TINY_MUSLCAT,
    'tiny_low_high_cnn': TINY_LOW_HIGH_CNN,
    'gradcheck_muslcan': GRADCHECK_MUSLCAN,
    'gradcheck_muslcat': GRADCHECK_MUSLCAT,
}

# published totals, in parameters
PUBLISHED_TOTALS = {
    'lowcan': 1.12e6,
    'low_bert': 14.65e6,
    'highcan': 1.25e6,
    'high_bert': 14.70e6,
    'low_high_cnn': 3.34e6,
    'muslcan': 3.38e6,
    'muslcat': 15.70e6,
}

# the baseline the published reductions are stated against, and the reductions themselves
BASELINE_PARAMS = 23.9e6
CLAIMED_REDUCTIONS = {
    'muslcat': 0.342,
    'muslcan': 0.868,
}

__all__ = ['LOW_CAN', 'HIGH_CAN', 'LOWCAN', 'HIGHCAN', 'LOW_BERT', 'HIGH_BERT', 'LOW_HIGH_CNN', 'MUSLCAN', 'MUSLCAT',
           'TINY_LOW_CAN', 'TINY_HIGH_CAN', 'TINY_MUSLCAN', 'TINY_MUSLCAT', 'TINY_LOW_HIGH_CNN',
           'GRADCHECK_LOW_CAN', 'GRADCHECK_HIGH_CAN', 'GRADCHECK_MUSLCAN', 'GRADCHECK_MUSLCAT',
           'presets', 'PUBLISHED_TOTALS', 'BASELINE_PARAMS', 'CLAIMED_REDUCTIONS']
