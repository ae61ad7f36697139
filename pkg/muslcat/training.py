"""
Chunk-level training: binary cross-entropy, SGD with Nesterov momentum, a plateau learning-rate schedule with a
stopping threshold, random-window batch sampling with background prefetching, and the epoch loop.
"""
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Literal, NamedTuple, Optional, Union
import csv
import json
import logging
import queue
import threading
import time

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
import pydantic
from tqdm import tqdm

from ._util import spawn_seeds
from .audio import Waveform, load_many, sample_chunk, chunk_batch
from .checkpoint import save_checkpoint
from .data import ClipRecord, Manifest, load_manifest
from .errors import ConfigError, ValidationError, NonFiniteError
from .model import Model, ModelConfig, load_model_config, build_model
from .tensor import Tensor, check_finite

log = logging.getLogger(__name__)

PROBABILITY_CLAMP = 1e-7


# loss

def _clamp(probabilities: Tensor) -> Tensor:
    return np.clip(probabilities, PROBABILITY_CLAMP, 1 - PROBABILITY_CLAMP)


def _check_targets(probabilities: Tensor, targets: Tensor):
    if probabilities.shape != targets.shape:
        raise ValidationError(f'probabilities {probabilities.shape} and targets {targets.shape} differ in shape')
    if not np.isin(targets, (0, 1)).all():
        raise ValidationError('targets must be 0 or 1')


def bce_loss(probabilities: Tensor, targets: Tensor) -> float:
    """
    mean binary cross-entropy over batch and tags, with probabilities clamped to [1e-7, 1 - 1e-7]
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    targets = np.asarray(targets)
    _check_targets(probabilities, targets)
    p = _clamp(probabilities)
    return float(-np.mean(targets * np.log(p) + (1 - targets) * np.log(1 - p)))


def bce_grad(probabilities: Tensor, targets: Tensor) -> Tensor:
    """
    the gradient of bce_loss with respect to the (clamped) probabilities
    """
    _check_targets(probabilities, targets)
    p = _clamp(probabilities)
    return (p - targets) / (p * (1 - p)) / p.size


# optimizer

def sgd_nesterov_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], velocities: Dict[str, Tensor],
                      learning_rate: float, momentum: float = 0.9):
    """
    v <- m v - lr g, theta <- theta + m v - lr g, in place. Every gradient is checked before anything is updated.
    :raises NonFiniteError: naming the first non-finite gradient; no parameter is changed
    """
    for name, g in grads.items():
        check_finite(g, f'gradient of {name}')
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise ValidationError(f'{name}: parameter {p.shape} and gradient {g.shape} differ in shape')
        v = velocities.get(name)
        if v is None:
            v = velocities[name] = np.zeros_like(p)
        v *= momentum
        v -= learning_rate * g
        p += momentum * v - learning_rate * g


class NesterovSGD:
    __slots__ = 'momentum', 'velocities'

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.velocities: Dict[str, Tensor] = {}

    def step(self, model: Model, learning_rate: float):
        sgd_nesterov_step(dict(model.named_parameters()), dict(model.named_gradients()), self.velocities,
                          learning_rate, self.momentum)


# schedule

class SchedulerEvent(NamedTuple):
    improved: bool
    reduced: bool
    stop: bool
    learning_rate: float


class PlateauScheduler:
    """
    Divides the learning rate by `factor` once the monitored loss has not improved on its best for `patience`
    consecutive epochs, then restarts the count. Signals a stop once the rate drops below `min_learning_rate`.
    The rate is kept as base / factor^reductions.
    """
    __slots__ = 'base_learning_rate', 'factor', 'patience', 'min_learning_rate', 'reductions', 'best',\
        'bad_epochs', 'stopped'

    def __init__(self, learning_rate: float = 0.01, factor: float = 5, patience: int = 3,
                 min_learning_rate: float = 1.6e-5):
        self.base_learning_rate = learning_rate
        self.factor = factor
        self.patience = patience
        self.min_learning_rate = min_learning_rate
        self.reductions = 0
        self.best = float('inf')
        self.bad_epochs = 0
        self.stopped = False

    @property
    def learning_rate(self) -> float:
        return self.base_learning_rate / self.factor ** self.reductions

    def step(self, loss: float) -> SchedulerEvent:
        improved = loss < self.best
        reduced = False
        if improved:
            self.best = loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.reductions += 1
                self.bad_epochs = 0
                reduced = True
                log.info('validation loss plateaued for %d epochs, learning rate reduced to %.3g', self.patience,
                         self.learning_rate)
        # relative slack so that 0.01 / 5^4 is not below 1.6e-5
        if self.learning_rate < self.min_learning_rate * (1 - 1e-9):
            self.stopped = True
            log.info('learning rate %.3g is below %.3g, stopping', self.learning_rate, self.min_learning_rate)
        return SchedulerEvent(improved, reduced, self.stopped, self.learning_rate)

    def state_dict(self) -> Dict[str, Any]:
        return {'reductions': self.reductions, 'best': self.best, 'bad_epochs': self.bad_epochs,
                'learning_rate': self.learning_rate}


def plateau_scheduler_step(scheduler: PlateauScheduler, loss: float) -> SchedulerEvent:
    return scheduler.step(loss)


# config

class TrainConfig(BaseModel):
    """
    A training run. `model` is a preset name, a path to a model config file or an inline model config. Manifest
    and checkpoint paths are relative to the config file. Training uses the train split of train_manifest,
    validation the valid split of val_manifest (train_manifest if unset).
    """
    model_config = ConfigDict(extra='forbid')

    model: Union[ModelConfig, str]
    train_manifest: Path
    val_manifest: Optional[Path] = None
    checkpoint_dir: Path = Path('checkpoints')
    seed: int = 0
    batch_size: int = Field(23, ge=1)
    learning_rate: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    reduction_factor: float = Field(5, gt=1)
    patience: int = Field(3, ge=1)
    min_learning_rate: float = Field(1.6e-5, gt=0)
    max_epochs: Optional[int] = Field(None, ge=1)
    prefetch: int = Field(4, ge=1)
    workers: int = Field(1, ge=1)
    dtype: Literal['float64', 'float32'] = 'float64'

    def resolve(self, root: Path) -> 'TrainConfig':
        """
        a copy with relative paths anchored at root and the model resolved to a ModelConfig
        """
        def anchor(p: Optional[Path]) -> Optional[Path]:
            return p if p is None or p.is_absolute() else root / p

        model = self.model
        if isinstance(model, str):
            candidate = anchor(Path(model))
            model = load_model_config(str(candidate) if candidate.is_file() else model)
        return self.model_copy(update=dict(
            model=model, train_manifest=anchor(self.train_manifest),
            val_manifest=anchor(self.val_manifest or self.train_manifest),
            checkpoint_dir=anchor(self.checkpoint_dir)))


def load_train_config(path: Union[str, Path], **overrides) -> TrainConfig:
    """
    :param overrides: fields to replace (ignored when None)
    :raises ConfigError: naming the path if the file is missing or invalid
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f'could not read training config {path}: {e}') from e
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path}: invalid JSON: {e}') from e
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = TrainConfig.model_validate(data)
    except pydantic.ValidationError as e:
        raise ConfigError(f'{path}: {e}') from e
    return config.resolve(path.parent)


# data

class Batch(NamedTuple):
    inputs: Tensor
    targets: Tensor
    clips: np.ndarray
    offsets: np.ndarray


class ClipSet:
    """
    decoded clips with their tag vectors
    """
    __slots__ = 'records', 'waves', 'labels'

    def __init__(self, records: List[ClipRecord], waves: List[Waveform], labels: np.ndarray):
        self.records = records
        self.waves = waves
        self.labels = labels

    @classmethod
    def load(cls, manifest: Manifest, split: str, sample_rate: int, workers: int = 1) -> 'ClipSet':
        """
        decode every clip of a split up front
        :raises ValidationError: if the split is empty or any clip is unreadable
        """
        records = manifest.split(split)
        if not records:
            raise ValidationError(f'{manifest.path}: the {split} split is empty')
        waves = load_many([r.path for r in records], sample_rate, workers)
        failures = [(r.path, w) for r, w in zip(records, waves) if isinstance(w, Exception)]
        if failures:
            listed = '; '.join(f'{p}: {e}' for p, e in failures[:5])
            raise ValidationError(f'{len(failures)} unreadable clips in the {split} split: {listed}')
        return cls(records, waves, manifest.labels(records))

    def __len__(self):
        return len(self.records)


class ChunkSampler:
    """
    each draw picks batch_size clips uniformly (with replacement) and a random window from each
    """
    __slots__ = 'clips', 'batch_size', 'length', 'rng', 'dtype'

    def __init__(self, clips: ClipSet, batch_size: int, length: int, seed: int, dtype=np.float64):
        self.clips = clips
        self.batch_size = batch_size
        self.length = length
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype

    def __call__(self) -> Batch:
        idx = self.rng.integers(0, len(self.clips), size=self.batch_size)
        chunks = [sample_chunk(self.clips.waves[i], self.length, self.rng) for i in idx]
        inputs = np.concatenate([c.samples for c in chunks]).astype(self.dtype)
        return Batch(inputs, self.clips.labels[idx], idx, np.array([c.offset for c in chunks]))


class _Failure(NamedTuple):
    error: BaseException


class Prefetcher:
    """
    Runs a batch producer on a background thread, at most `capacity` batches ahead of the consumer. The producer is
    called sequentially from that one thread, so the batch order is the producer's.
    """
    __slots__ = 'produce', 'count', 'queue', 'stop_event', 'thread'

    def __init__(self, produce: Callable[[], Any], count: int, capacity: int = 4):
        self.produce = produce
        self.count = count
        self.queue = queue.Queue(maxsize=capacity)
        self.stop_event = threading.Event()
        self.thread = threading.Thread(target=self._run, name='muslcat-prefetch', daemon=True)

    def _put(self, item) -> bool:
        while not self.stop_event.is_set():
            try:
                self.queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _run(self):
        for _ in range(self.count):
            if self.stop_event.is_set():
                return
            try:
                item = self.produce()
            except BaseException as e:
                self._put(_Failure(e))
                return
            if not self._put(item):
                return

    def __iter__(self) -> Iterator[Any]:
        if self.thread.ident is None:
            self.thread.start()
        for _ in range(self.count):
            item = self.queue.get()
            if isinstance(item, _Failure):
                raise item.error
            yield item

    def close(self):
        self.stop_event.set()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()


# loop

class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    improved: bool
    reduced: bool
    seconds: float


class TrainRunReport(NamedTuple):
    epochs: List[EpochRecord]
    checkpoint: Optional[Path]
    trace: Path
    stopped: bool

    @property
    def learning_rates(self) -> List[float]:
        return [e.learning_rate for e in self.epochs]

    @property
    def train_losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]


def train_step(model: Model, optimizer: NesterovSGD, batch: Batch, learning_rate: float) -> float:
    """
    one forward/backward/update on a batch, in training mode
    :return: the batch loss before the update
    """
    model.train()
    model.zero_grad()
    probabilities, cache = model.forward(batch.inputs)
    loss = bce_loss(probabilities, batch.targets)
    if not np.isfinite(loss):
        raise NonFiniteError('training loss')
    model.backward(bce_grad(probabilities, batch.targets).astype(probabilities.dtype), cache)
    optimizer.step(model, learning_rate)
    return loss


def validation_loss(model: Model, clips: ClipSet, batch_size: int = 23) -> float:
    """
    mean BCE over the consecutive chunks of every clip, in evaluation mode, each chunk against its clip's tags
    """
    total = 0.0
    count = 0
    dtype = next(p for _, p in model.named_parameters()).dtype
    for wave, labels in zip(clips.waves, clips.labels):
        batch = chunk_batch(wave, model.config.input_length).astype(dtype)
        probabilities = model.predict(batch, batch_size)
        total += bce_loss(probabilities, np.broadcast_to(labels, probabilities.shape)) * len(batch)
        count += len(batch)
    return total / count


def fit_batch(model: Model, batch: Batch, steps: int, learning_rate: float = 0.01,
              momentum: float = 0.9) -> List[float]:
    """
    repeatedly step on one batch
    :return: the loss before every step
    """
    optimizer = NesterovSGD(momentum)
    return [train_step(model, optimizer, batch, learning_rate) for _ in range(steps)]


TRACE_FIELDS = ('epoch', 'train_loss', 'val_loss', 'lr')


def write_trace(path: Path, epochs: List[EpochRecord]):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_FIELDS)
        for e in epochs:
            writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.learning_rate)])


def train(model: Model, train_manifest: Manifest, val_manifest: Manifest, config: TrainConfig,
          progress: bool = None) -> TrainRunReport:
    """
    Train until the learning rate drops below the threshold (or max_epochs). Every epoch runs n_clips // batch_size
    steps; the incomplete batch is dropped. The best-validation model is checkpointed to
    checkpoint_dir/best.ckpt, the per-epoch trace to checkpoint_dir/trace.csv.
    :param progress: show a progress bar; None shows it only on a terminal
    :raises ValidationError: before any step, if a split is empty, a clip is unreadable or the training split has
        fewer clips than a batch
    """
    rate = model.config.sample_rate
    train_clips = ClipSet.load(train_manifest, 'train', rate, config.workers)
    val_clips = ClipSet.load(val_manifest, 'valid', rate, config.workers)
    steps = len(train_clips) // config.batch_size
    if steps == 0:
        raise ValidationError(f'{len(train_clips)} training clips do not fill a batch of {config.batch_size}')
    if train_clips.labels.shape[1] != model.config.n_tags:
        raise ValidationError(f'the manifest has {train_clips.labels.shape[1]} tags, the model predicts '
                              f'{model.config.n_tags}')
    checkpoint_dir = Path(config.checkpoint_dir)
    try:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f'cannot create checkpoint directory {checkpoint_dir}: {e}') from e
    checkpoint = checkpoint_dir / 'best.ckpt'
    trace = checkpoint_dir / 'trace.csv'

    sampler_seed, = spawn_seeds(config.seed, 1)
    dtype = next(p for _, p in model.named_parameters()).dtype
    sampler = ChunkSampler(train_clips, config.batch_size, model.config.input_length, sampler_seed, dtype)
    optimizer = NesterovSGD(config.momentum)
    scheduler = PlateauScheduler(config.learning_rate, config.reduction_factor, config.patience,
                                 config.min_learning_rate)
    log.info('training %s (%d parameters) on %d clips, %d steps per epoch', model.config.name,
             model.num_parameters(), len(train_clips), steps)
    epochs: List[EpochRecord] = []
    saved = None
    epoch = 0
    while not scheduler.stopped and (config.max_epochs is None or epoch < config.max_epochs):
        epoch += 1
        start = time.perf_counter()
        learning_rate = scheduler.learning_rate
        losses = []
        with Prefetcher(sampler, steps, config.prefetch) as prefetcher:
            for batch in tqdm(prefetcher, total=steps, desc=f"epoch {epoch}", leave=False,
                              disable=None if progress is None else not progress):
                losses.append(train_step(model, optimizer, batch, learning_rate))
        val_loss = validation_loss(model, val_clips, config.batch_size)
        event = scheduler.step(val_loss)
        if event.improved:
            saved = save_checkpoint(checkpoint, model, extra={'epoch': epoch, 'val_loss': val_loss,
                                                              'learning_rate': learning_rate})
        record = EpochRecord(epoch, float(np.mean(losses)), val_loss, learning_rate, event.improved,
                             event.reduced, time.perf_counter() - start)
        epochs.append(record)
        write_trace(trace, epochs)
        log.info('epoch %d: train loss %.5f, validation loss %.5f, lr %.3g%s (%.1fs)', epoch, record.train_loss,
                 val_loss, learning_rate, ' *' if event.improved else '', record.seconds)
    return TrainRunReport(epochs, saved, trace, scheduler.stopped)


def run_training(config: TrainConfig, progress: bool = None) -> TrainRunReport:
    """
    build the model and manifests a resolved TrainConfig names, and train
    """
    model = build_model(config.model, config.seed, dtype=np.dtype(config.dtype))
    train_manifest = load_manifest(config.train_manifest)
    val_manifest = train_manifest if config.val_manifest == config.train_manifest \
        else load_manifest(config.val_manifest)
    return train(model, train_manifest, val_manifest, config, progress)


__all__ = ['bce_loss', 'bce_grad', 'sgd_nesterov_step', 'NesterovSGD', 'PlateauScheduler', 'SchedulerEvent',
           'plateau_scheduler_step', 'TrainConfig', 'load_train_config', 'Batch', 'ClipSet', 'ChunkSampler',
           'Prefetcher', 'EpochRecord', 'TrainRunReport', 'train_step', 'validation_loss', 'fit_batch', 'train',
           'run_training', 'write_trace']
