"""
Dataset manifests, the synthetic tone dataset and its band-energy oracle.

A manifest is a JSONL file: a header line {"version": 1, "tags": [...]} followed by one clip record per line,
{"path": ..., "song_id": ..., "split": "train" | "valid" | "test", "tags": [0, 1, ...]}. Paths are relative to the
manifest's directory.
"""
from pathlib import Path
from typing import Iterator, List, NamedTuple, Optional, Sequence, Union
import json
import logging

import numpy as np

from ._util import spawn_seeds
from .audio import load_many, write_wav, MODEL_RATE
from .errors import ManifestError, ValidationError
from .metrics import MetricsReport, report_from_scores
from .units import Duration

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
SPLITS = ('train', 'valid', 'test')

MAX_SYNTH_TAGS = 8
BASE_FREQUENCY = 200.0
TONE_AMPLITUDE = 0.1
SNR_DB = 10.0
# half-width of the band the oracle integrates around each tone, in Hz
ORACLE_BANDWIDTH = 2.0


def tone_frequency(tag: int) -> float:
    return BASE_FREQUENCY * 2 ** tag


class ClipRecord(NamedTuple):
    path: Path
    song_id: str
    split: str
    tags: np.ndarray

    def to_json(self, root: Path) -> str:
        try:
            path = self.path.relative_to(root)
        except ValueError:
            path = self.path
        return json.dumps({'path': path.as_posix(), 'song_id': self.song_id, 'split': self.split,
                           'tags': [int(t) for t in self.tags]})


class Manifest:
    """
    a tag vocabulary and the clips labelled with it
    """
    __slots__ = 'path', 'tags', 'records'

    def __init__(self, tags: Sequence[str], records: Sequence[ClipRecord], path: Optional[Path] = None):
        self.tags = list(tags)
        self.records = list(records)
        self.path = path
        self._check()

    def _check(self):
        seen = {}
        for i, r in enumerate(self.records):
            if r.split not in SPLITS:
                raise ManifestError(f'record {i} ({r.song_id}): unknown split {r.split!r}')
            if len(r.tags) != len(self.tags):
                raise ManifestError(f'record {i} ({r.song_id}): {len(r.tags)} tags, the vocabulary has '
                                    f'{len(self.tags)}')
            if not np.isin(r.tags, (0, 1)).all():
                raise ManifestError(f'record {i} ({r.song_id}): tags must be 0 or 1')
            first = seen.setdefault(r.song_id, r.split)
            if first != r.split:
                raise ManifestError(f'song {r.song_id!r} appears in both the {first!r} and the {r.split!r} split')

    def split(self, name: str) -> List[ClipRecord]:
        if name not in SPLITS:
            raise ValidationError(f'unknown split {name!r}, expected one of {SPLITS}')
        return [r for r in self.records if r.split == name]

    def labels(self, records: Sequence[ClipRecord] = None) -> np.ndarray:
        records = self.records if records is None else records
        return np.array([r.tags for r in records], dtype=np.float64).reshape(len(records), len(self.tags))

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[ClipRecord]:
        return iter(self.records)

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        root = path.parent.resolve()
        lines = [json.dumps({'version': MANIFEST_VERSION, 'tags': self.tags})]
        lines.extend(r.to_json(root) for r in self.records)
        path.write_text('\n'.join(lines) + '\n')
        self.path = path
        return path


def _tag_vector(values) -> np.ndarray:
    if not isinstance(values, list) or any(type(v) is not int or v not in (0, 1) for v in values):
        raise ValueError(f'tags must be a list of 0/1 integers, got {values!r}')
    return np.array(values, dtype=np.int8)


def load_manifest(path: Union[str, Path]) -> Manifest:
    """
    :raises ManifestError: naming the file and line of the first problem
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestError(f'could not read manifest {path}: {e}') from e
    root = path.parent.resolve()
    header = None
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f'{path}:{lineno}: invalid JSON: {e}') from e
        if header is None:
            if obj.get('version') != MANIFEST_VERSION or not isinstance(obj.get('tags'), list):
                raise ManifestError(f'{path}:{lineno}: expected a version {MANIFEST_VERSION} header with a tag list')
            header = obj
            continue
        try:
            records.append(ClipRecord(root / obj['path'], str(obj['song_id']), obj['split'],
                                      _tag_vector(obj['tags'])))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f'{path}:{lineno}: malformed record: {e!r}') from e
    if header is None:
        raise ManifestError(f'{path}: empty manifest')
    try:
        return Manifest(header['tags'], records, path)
    except ManifestError as e:
        raise ManifestError(f'{path}: {e}') from e


def synth_song(tags: np.ndarray, n_samples: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """
    one tone per active tag, at random phase, over white noise 10 dB below a single tone
    """
    t = np.arange(n_samples) / sample_rate
    signal = np.zeros(n_samples)
    for tag in np.flatnonzero(tags):
        phase = rng.uniform(0, 2 * np.pi)
        signal += TONE_AMPLITUDE * np.sin(2 * np.pi * tone_frequency(tag) * t + phase)
    tone_power = TONE_AMPLITUDE ** 2 / 2
    noise_std = np.sqrt(tone_power / 10 ** (SNR_DB / 10))
    return np.clip(signal + rng.normal(0, noise_std, n_samples), -1.0, 1.0)


def synth_dataset(out_dir: Union[str, Path], n_songs: int = 200, n_tags: int = 4, seed: int = 0,
                  duration: Union[str, float] = '30 s', sample_rate: int = MODEL_RATE) -> Path:
    """
    Write a dataset whose tags are decodable from band energy: tag t is present iff the clip holds a tone at
    200 * 2^t Hz. Songs are split 80/10/10 into train, valid and test.
    :return: the manifest path
    """
    if not 1 <= n_tags <= MAX_SYNTH_TAGS:
        raise ValidationError(f'the synthetic dataset supports 1..{MAX_SYNTH_TAGS} tags, got {n_tags}')
    if tone_frequency(n_tags - 1) >= sample_rate / 2:
        raise ValidationError(f'the tone of tag {n_tags - 1} ({tone_frequency(n_tags - 1):g} Hz) is not below the '
                              f'Nyquist frequency of {sample_rate} Hz')
    if n_songs < 1:
        raise ValidationError(f'need at least one song, got {n_songs}')
    out_dir = Path(out_dir)
    audio_dir = out_dir / 'audio'
    try:
        audio_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ValidationError(f'cannot write to {out_dir}: {e}') from e
    n_samples = Duration.parse(duration).samples(sample_rate)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_songs)
    n_train = int(round(n_songs * 0.8))
    n_valid = int(round(n_songs * 0.1))
    split_of = {}
    for rank, song in enumerate(order):
        split_of[int(song)] = 'train' if rank < n_train else 'valid' if rank < n_train + n_valid else 'test'
    labels = rng.integers(0, 2, size=(n_songs, n_tags)).astype(np.int8)
    records = []
    for song, song_seed in enumerate(spawn_seeds(seed, n_songs)):
        song_id = f'song{song:04d}'
        path = audio_dir / f'{song_id}.wav'
        samples = synth_song(labels[song], n_samples, sample_rate, np.random.default_rng(song_seed))
        try:
            write_wav(path, samples, sample_rate)
        except OSError as e:
            raise ValidationError(f'cannot write {path}: {e}') from e
        records.append(ClipRecord(path.resolve(), song_id, split_of[song], labels[song]))
    tags = [f'tone_{tone_frequency(t):g}hz' for t in range(n_tags)]
    manifest = Manifest(tags, records).write(out_dir / 'manifest.jsonl')
    log.info('wrote %d songs (%d tags) to %s', n_songs, n_tags, out_dir)
    return manifest


def band_energy_scores(samples: np.ndarray, n_tags: int, sample_rate: int = MODEL_RATE) -> np.ndarray:
    """
    the log energy around each tag's tone frequency
    """
    spectrum = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(len(samples), 1 / sample_rate)
    ret = np.empty(n_tags)
    for tag in range(n_tags):
        band = np.abs(freqs - tone_frequency(tag)) <= ORACLE_BANDWIDTH
        ret[tag] = np.log(spectrum[band].sum() + 1e-12)
    return ret


def band_energy_oracle(manifest: Manifest, split: Optional[str] = None, workers: int = 1) -> MetricsReport:
    """
    score every clip by band energy and rank it against the labels, the ceiling a learned model is measured against
    """
    records = manifest.records if split is None else manifest.split(split)
    waves = load_many([r.path for r in records], workers=workers)
    for r, w in zip(records, waves):
        if isinstance(w, Exception):
            raise ValidationError(f'could not read {r.path}: {w}')
    scores = np.array([band_energy_scores(w.samples, len(manifest.tags), w.sample_rate) for w in waves])
    return report_from_scores(scores, manifest.labels(records), manifest.tags)


__all__ = ['ClipRecord', 'Manifest', 'load_manifest', 'synth_song', 'synth_dataset', 'band_energy_scores',
           'band_energy_oracle', 'tone_frequency', 'SPLITS']
