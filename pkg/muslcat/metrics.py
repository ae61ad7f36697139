"""
Song-level aggregation and macro-averaged ranking metrics.

Ties: ROC-AUC gives half credit to tied positive/negative pairs (average ranks). PR-AUC ranks by descending score
and breaks ties by input order, so of two tied clips the one listed first is ranked higher.
"""
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Union, TYPE_CHECKING
import csv
import json
import logging

import numpy as np
from scipy.stats import rankdata

from .audio import load_many, chunk_batch
from .errors import MetricUndefined, ValidationError, EvaluationAborted

if TYPE_CHECKING:
    from .data import Manifest
    from .model import Model

log = logging.getLogger(__name__)

MAX_UNREADABLE = 0.10


def _as_binary(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValidationError(f'{labels.shape[0] if labels.ndim else 0} labels for {n} scores')
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError('labels must be 0 or 1')
    return labels.astype(bool)


def aggregate_song(chunks) -> np.ndarray:
    """
    the elementwise mean of a song's (n_chunks, n_tags) chunk probabilities
    """
    chunks = np.asarray(chunks, dtype=np.float64)
    if chunks.ndim != 2 or len(chunks) == 0:
        raise ValidationError(f'expected a non-empty (chunks, tags) matrix, got shape {chunks.shape}')
    return chunks.sum(axis=0) / len(chunks)


class SongPrediction(NamedTuple):
    song_id: str
    chunks: np.ndarray
    probabilities: np.ndarray

    @classmethod
    def from_chunks(cls, song_id: str, chunks) -> 'SongPrediction':
        chunks = np.asarray(chunks, dtype=np.float64)
        return cls(song_id, chunks, aggregate_song(chunks))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    the probability that a random positive outranks a random negative (Mann-Whitney U over average ranks)
    :raises MetricUndefined: if the labels hold a single class
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = _as_binary(labels, len(scores))
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefined(f'ROC-AUC needs both classes, got {n_pos} positives and {n_neg} negatives')
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def pr_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    average precision: the mean, over positives, of the precision at the positive's rank
    :raises MetricUndefined: if there are no positives
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = _as_binary(labels, len(scores))
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise MetricUndefined('PR-AUC needs at least one positive')
    hits = positive[np.argsort(-scores, kind='stable')]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


class MetricsReport:
    """
    per-tag and macro ROC-AUC and PR-AUC. Tags whose labels lack a class are skipped and listed, and do not enter
    the macro averages.
    """
    __slots__ = 'roc', 'pr', 'skipped', 'n_songs', 'unreadable'

    def __init__(self, roc: Dict[str, float], pr: Dict[str, float], skipped: List[str], n_songs: int,
                 unreadable: List[str] = ()):
        self.roc = roc
        self.pr = pr
        self.skipped = list(skipped)
        self.n_songs = n_songs
        self.unreadable = list(unreadable)

    @property
    def macro_roc(self) -> float:
        if not self.roc:
            raise MetricUndefined('no tag has both classes')
        return float(np.mean(list(self.roc.values())))

    @property
    def macro_pr(self) -> float:
        if not self.pr:
            raise MetricUndefined('no tag has both classes')
        return float(np.mean(list(self.pr.values())))

    def to_dict(self) -> dict:
        return {
            'macro_roc_auc': self.macro_roc if self.roc else None,
            'macro_pr_auc': self.macro_pr if self.pr else None,
            'per_tag': {t: {'roc_auc': self.roc[t], 'pr_auc': self.pr[t]} for t in self.roc},
            'skipped_tags': self.skipped,
            'songs': self.n_songs,
            'unreadable': self.unreadable,
        }

    def write_json(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path: Union[str, Path]):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['tag', 'roc_auc', 'pr_auc'])
            for tag in self.roc:
                writer.writerow([tag, repr(self.roc[tag]), repr(self.pr[tag])])
            for tag in self.skipped:
                writer.writerow([tag, '', ''])

    def __str__(self):
        lines = [f'{self.n_songs} songs']
        if self.roc:
            lines.append(f'macro ROC-AUC {self.macro_roc:.4f}, macro PR-AUC {self.macro_pr:.4f}')
        for tag in self.roc:
            lines.append(f'  {tag:<24} ROC-AUC {self.roc[tag]:.4f}  PR-AUC {self.pr[tag]:.4f}')
        if self.skipped:
            lines.append(f'skipped (single class): {", ".join(self.skipped)}')
        if self.unreadable:
            lines.append(f'unreadable clips: {len(self.unreadable)}')
        return '\n'.join(lines)


def report_from_scores(scores, labels, tags: Sequence[str], unreadable: Sequence[str] = ()) -> MetricsReport:
    """
    :param scores: (n_songs, n_tags) song-level scores
    :param labels: (n_songs, n_tags) binary labels
    :param tags: the tag names
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 2 or scores.shape[1] != len(tags):
        raise ValidationError(f'scores {scores.shape} and labels {labels.shape} do not match {len(tags)} tags')
    roc = OrderedDict()
    pr = OrderedDict()
    skipped = []
    for i, tag in enumerate(tags):
        try:
            tag_roc = roc_auc(scores[:, i], labels[:, i])
            tag_pr = pr_auc(scores[:, i], labels[:, i])
        except MetricUndefined:
            skipped.append(tag)
            continue
        roc[tag] = tag_roc
        pr[tag] = tag_pr
    return MetricsReport(roc, pr, skipped, len(scores), unreadable)


def predict_songs(model: 'Model', records, workers: int = 1, batch_size: int = 23,
                  max_unreadable: float = MAX_UNREADABLE):
    """
    song-level predictions over consecutive non-overlapping chunks of every clip
    :return: the SongPrediction of every song (in first-appearance order), its labels, and the unreadable paths
    :raises EvaluationAborted: if more than max_unreadable of the clips cannot be read
    """
    records = list(records)
    if not records:
        raise ValidationError('nothing to evaluate')
    waves = load_many([r.path for r in records], model.config.sample_rate, workers)
    unreadable = []
    chunks: Dict[str, List[np.ndarray]] = OrderedDict()
    labels: Dict[str, np.ndarray] = {}
    for record, wave in zip(records, waves):
        if isinstance(wave, Exception):
            log.warning('skipping %s: %s', record.path, wave)
            unreadable.append(str(record.path))
            continue
        batch = chunk_batch(wave, model.config.input_length)
        chunks.setdefault(record.song_id, []).append(model.predict(batch, batch_size))
        labels[record.song_id] = record.tags
    if len(unreadable) > max_unreadable * len(records):
        raise EvaluationAborted(f'{len(unreadable)} of {len(records)} clips could not be read '
                                f'(more than {max_unreadable:.0%})')
    songs = [SongPrediction.from_chunks(song, np.concatenate(c)) for song, c in chunks.items()]
    return songs, np.array([labels[s.song_id] for s in songs]), unreadable


def evaluate(model: 'Model', manifest: 'Manifest', split: Optional[str] = 'test', workers: int = 1,
             batch_size: int = 23) -> MetricsReport:
    """
    song-level ROC-AUC and PR-AUC of a model over one split of a manifest (every record if split is None)
    """
    records = manifest.records if split is None else manifest.split(split)
    songs, labels, unreadable = predict_songs(model, records, workers, batch_size)
    scores = np.array([s.probabilities for s in songs])
    report = report_from_scores(scores, labels, manifest.tags, unreadable)
    if report.skipped:
        log.warning('tags without both classes were skipped: %s', ', '.join(report.skipped))
    return report


__all__ = ['aggregate_song', 'SongPrediction', 'roc_auc', 'pr_auc', 'MetricsReport', 'report_from_scores',
           'predict_songs', 'evaluate']
