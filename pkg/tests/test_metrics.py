import json
import tempfile
import unittest
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from muslcat.audio import write_wav
from muslcat.data import ClipRecord, Manifest, synth_dataset, load_manifest
from muslcat.errors import EvaluationAborted, MetricUndefined, ValidationError
from muslcat.metrics import aggregate_song, roc_auc, pr_auc, report_from_scores, evaluate, SongPrediction
from muslcat.model import build_model


def brute_roc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    credit = 0.0
    for p in pos:
        for n in neg:
            credit += 1.0 if p > n else 0.5 if p == n else 0.0
    return credit / (len(pos) * len(neg))


def brute_pr(scores, labels):
    total = 0.0
    for i, (s, l) in enumerate(zip(scores, labels)):
        if not l:
            continue
        above = [j for j, t in enumerate(scores) if t > s or (t == s and j <= i)]
        total += sum(labels[j] for j in above) / len(above)
    return total / sum(labels)


def random_instance(rng):
    n = int(rng.integers(2, 65))
    if rng.random() < 0.5:
        scores = rng.integers(0, 5, n) / 4
    else:
        scores = rng.random(n)
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 1, 0
    return list(scores), list(labels)


class AggregateTests(unittest.TestCase):
    def test_single(self):
        np.testing.assert_array_equal(aggregate_song([[0.1, 0.7]]), [0.1, 0.7])

    def test_mean(self):
        self.assertAlmostEqual(aggregate_song([[0.2], [0.4]])[0], 0.3)

    def test_loop_oracle(self):
        chunks = np.random.default_rng(0).random((7, 5))
        expected = []
        for tag in range(5):
            total = 0.0
            for row in chunks:
                total += row[tag]
            expected.append(total / 7)
        np.testing.assert_allclose(aggregate_song(chunks), expected, rtol=0, atol=1e-15)

    def test_empty(self):
        with self.assertRaises(ValidationError):
            aggregate_song(np.zeros((0, 3)))

    def test_prediction(self):
        song = SongPrediction.from_chunks('a', [[0.2, 0.4], [0.6, 0.0]])
        np.testing.assert_allclose(song.probabilities, [0.4, 0.2])


class RocTests(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(roc_auc([0.9, 0.8, 0.3, 0.2], [1, 1, 0, 0]), 1.0)
        self.assertEqual(roc_auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]), 0.75)
        self.assertEqual(roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1]), 0.5)

    def test_single_class(self):
        with self.assertRaises(MetricUndefined):
            roc_auc([0.1, 0.2], [1, 1])
        with self.assertRaises(MetricUndefined):
            roc_auc([0.1, 0.2], [0, 0])

    def test_bad_labels(self):
        with self.assertRaises(ValidationError):
            roc_auc([0.1, 0.2], [0, 2])
        with self.assertRaises(ValidationError):
            roc_auc([0.1, 0.2], [0, 1, 1])

    def test_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            scores, labels = random_instance(rng)
            self.assertAlmostEqual(roc_auc(scores, labels), brute_roc(scores, labels), delta=1e-9)

    def test_monotone_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.standard_normal(40)
        labels = rng.integers(0, 2, 40)
        labels[:2] = 1, 0
        base = roc_auc(scores, labels)
        self.assertAlmostEqual(roc_auc(np.exp(scores), labels), base, delta=1e-12)
        self.assertAlmostEqual(roc_auc(3 * scores + 1, labels), base, delta=1e-12)

    def test_complement(self):
        rng = np.random.default_rng(2)
        scores = rng.random(30)
        labels = rng.integers(0, 2, 30)
        labels[:2] = 1, 0
        self.assertAlmostEqual(roc_auc(scores, labels) + roc_auc(scores, 1 - labels), 1.0, delta=1e-12)


class PrTests(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(pr_auc([0.9, 0.1], [1, 0]), 1.0)
        self.assertEqual(pr_auc([0.9, 0.1], [0, 1]), 0.5)
        self.assertEqual(pr_auc([0.3, 0.7], [1, 1]), 1.0)

    def test_no_positive(self):
        with self.assertRaises(MetricUndefined):
            pr_auc([0.1, 0.2], [0, 0])

    def test_ties_by_input_order(self):
        self.assertEqual(pr_auc([0.5, 0.5], [1, 0]), 1.0)
        self.assertEqual(pr_auc([0.5, 0.5], [0, 1]), 0.5)

    def test_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            scores, labels = random_instance(rng)
            self.assertAlmostEqual(pr_auc(scores, labels), brute_pr(scores, labels), delta=1e-9)

    def test_perfect_ranking(self):
        labels = [1, 1, 0, 0, 0]
        self.assertEqual(pr_auc([5, 4, 3, 2, 1], labels), 1.0)
        self.assertGreaterEqual(pr_auc([5, 4, 3, 2, 1], labels), sum(labels) / len(labels))


class ReportTests(unittest.TestCase):
    def toy(self):
        songs = [
            SongPrediction.from_chunks('a', [[0.9, 0.2, 0.5], [0.7, 0.4, 0.5]]),
            SongPrediction.from_chunks('b', [[0.1, 0.6, 0.5]]),
            SongPrediction.from_chunks('c', [[0.5, 0.5, 0.5], [0.3, 0.9, 0.5], [0.4, 0.1, 0.5]]),
        ]
        labels = np.array([[1, 1, 0], [0, 0, 0], [1, 0, 0]])
        return report_from_scores([s.probabilities for s in songs], labels, ['x', 'y', 'z'])

    def test_toy(self):
        report = self.toy()
        # song scores: x = .8, .1, .4; y = .3, .6, .5
        self.assertEqual(report.roc, {'x': 1.0, 'y': 0.0})
        self.assertEqual(report.pr['x'], 1.0)
        self.assertAlmostEqual(report.pr['y'], 1 / 3)
        self.assertEqual(report.skipped, ['z'])
        self.assertAlmostEqual(report.macro_roc, 0.5)
        self.assertAlmostEqual(report.macro_pr, 2 / 3)
        self.assertEqual(report.n_songs, 3)

    def test_outputs(self):
        report = self.toy()
        with tempfile.TemporaryDirectory() as out:
            report.write_json(Path(out) / 'r.json')
            report.write_csv(Path(out) / 'r.csv')
            data = json.loads((Path(out) / 'r.json').read_text())
            rows = (Path(out) / 'r.csv').read_text().splitlines()
        self.assertEqual(data['skipped_tags'], ['z'])
        self.assertAlmostEqual(data['macro_roc_auc'], 0.5)
        self.assertEqual(set(data['per_tag']), {'x', 'y'})
        self.assertEqual(rows[0], 'tag,roc_auc,pr_auc')
        self.assertEqual(rows[-1], 'z,,')
        self.assertIn('skipped (single class): z', str(report))

    def test_all_skipped(self):
        report = report_from_scores([[0.1], [0.2]], [[1], [1]], ['only'])
        self.assertEqual(report.skipped, ['only'])
        with self.assertRaises(MetricUndefined):
            report.macro_roc
        self.assertIsNone(report.to_dict()['macro_roc_auc'])

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            report_from_scores([[0.1, 0.2]], [[1, 0]], ['one'])


def mean_model():
    """scores each chunk by its mean level, tag 1 by its complement"""
    def predict(batch, batch_size=None):
        level = batch.mean(axis=(1, 2))
        return np.stack([level, 1 - level], axis=1)
    return SimpleNamespace(config=SimpleNamespace(sample_rate=16000, input_length=2048), predict=predict)


class EvaluateTests(unittest.TestCase):
    def write_clips(self, out, levels, broken=0):
        records = []
        for i, (song, level, tags) in enumerate(levels):
            path = write_wav(Path(out) / f'{i}.wav', np.full(4096, level), 16000)
            records.append(ClipRecord(path, song, 'test', np.array(tags)))
        for i in range(broken):
            path = Path(out) / f'broken{i}.wav'
            path.write_bytes(b'not a wav file at all')
            records.append(ClipRecord(path, f'broken{i}', 'test', np.array([0, 1])))
        return Manifest(['loud', 'quiet'], records)

    def test_song_aggregation(self):
        with tempfile.TemporaryDirectory() as out:
            manifest = self.write_clips(out, [('a', 0.25, [1, 0]), ('a', 0.75, [1, 0]), ('b', 0.125, [0, 1]),
                                              ('c', 0.625, [1, 0])])
            report = evaluate(mean_model(), manifest)
        # song a averages to .5, above b and below c
        self.assertEqual(report.n_songs, 3)
        self.assertEqual(report.roc['loud'], 1.0)
        self.assertEqual(report.roc['quiet'], 1.0)

    def test_unreadable_within_limit(self):
        levels = [(f's{i}', i / 20, [int(i >= 5), int(i < 5)]) for i in range(9)]
        with tempfile.TemporaryDirectory() as out:
            report = evaluate(mean_model(), self.write_clips(out, levels, broken=1))
        self.assertEqual(len(report.unreadable), 1)
        self.assertEqual(report.n_songs, 9)
        self.assertEqual(report.macro_roc, 1.0)

    def test_unreadable_aborts(self):
        levels = [(f's{i}', i / 20, [int(i >= 4), int(i < 4)]) for i in range(8)]
        with tempfile.TemporaryDirectory() as out:
            with self.assertRaises(EvaluationAborted):
                evaluate(mean_model(), self.write_clips(out, levels, broken=2))

    def test_deterministic(self):
        with tempfile.TemporaryDirectory() as out:
            manifest = load_manifest(synth_dataset(out, n_songs=10, n_tags=4, duration='0.25 s'))
            model = build_model('gradcheck_muslcan', seed=3)
            first = evaluate(model, manifest, split=None)
            second = evaluate(model, manifest, split=None)
        self.assertEqual(first.to_dict(), second.to_dict())
        for value in list(first.roc.values()) + list(first.pr.values()):
            self.assertTrue(0 <= value <= 1)


if __name__ == '__main__':
    unittest.main()
