from .errors import MuslcatError, ValidationError, ShapeError, ConfigError, ManifestError, WavFormatError, \
    NonFiniteError, MetricUndefined, EvaluationAborted, CheckpointError
from .tensor import Tensor, matmul, softmax_rows, finite_diff_check, GradCheckReport
from .attention import MultiHeadAttention, AACBlock, relative_logits_explicit, relative_logits_skewed, \
    mha_absolute_free, mha_relative, aac_block, aac_param_estimate
from .model import AttentionConfig, CANConfig, BackendConfig, ModelConfig, Model, build_can, build_model, \
    load_model_config
from .audit import ParamAudit, audit_params
from .checkpoint import save_checkpoint, load_checkpoint
from .audio import Waveform, load_wav, write_wav, resample_16k, sample_chunk
from .data import ClipRecord, Manifest, load_manifest, synth_dataset
from .metrics import MetricsReport, SongPrediction, roc_auc, pr_auc, evaluate
from .training import TrainConfig, TrainRunReport, PlateauScheduler, train, run_training

__version__ = '0.1'
__author__ = 'Ben Avrahami'
