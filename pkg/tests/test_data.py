import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from muslcat.data import ClipRecord, Manifest, load_manifest, synth_song, synth_dataset, band_energy_scores, \
    band_energy_oracle, tone_frequency
from muslcat.errors import ManifestError, ValidationError


def record(song, split='train', tags=(0, 1), path='a.wav'):
    return ClipRecord(Path(path), song, split, np.array(tags))


class ManifestTests(unittest.TestCase):
    def test_valid(self):
        manifest = Manifest(['x', 'y'], [record('a'), record('a'), record('b', 'test', (1, 1))])
        self.assertEqual(len(manifest), 3)
        self.assertEqual(len(manifest.split('train')), 2)
        np.testing.assert_array_equal(manifest.labels(), [[0, 1], [0, 1], [1, 1]])

    def test_song_in_two_splits(self):
        with self.assertRaises(ManifestError) as cm:
            Manifest(['x', 'y'], [record('a'), record('a', 'test')])
        self.assertIn("'a'", str(cm.exception))

    def test_unknown_split(self):
        with self.assertRaises(ManifestError):
            Manifest(['x', 'y'], [record('a', 'dev')])
        with self.assertRaises(ValidationError):
            Manifest(['x', 'y'], []).split('dev')

    def test_tag_count(self):
        with self.assertRaises(ManifestError):
            Manifest(['x', 'y', 'z'], [record('a')])

    def test_binary_tags(self):
        with self.assertRaises(ManifestError):
            Manifest(['x', 'y'], [record('a', tags=(0, 2))])

    def test_round_trip(self):
        with tempfile.TemporaryDirectory() as out:
            out = Path(out).resolve()
            records = [ClipRecord(out / 'audio' / 'a.wav', 'a', 'train', np.array([1, 0])),
                       ClipRecord(out / 'b.wav', 'b', 'valid', np.array([0, 0]))]
            path = Manifest(['x', 'y'], records).write(out / 'manifest.jsonl')
            lines = path.read_text().splitlines()
            loaded = load_manifest(path)
        self.assertEqual(json.loads(lines[1])['path'], 'audio/a.wav')
        self.assertEqual(loaded.tags, ['x', 'y'])
        self.assertEqual([r.path for r in loaded], [r.path for r in records])
        self.assertEqual([r.split for r in loaded], ['train', 'valid'])


class LoadManifestTests(unittest.TestCase):
    def load(self, text):
        with tempfile.TemporaryDirectory() as out:
            path = Path(out) / 'm.jsonl'
            path.write_text(text)
            return load_manifest(path)

    def test_missing(self):
        with self.assertRaises(ManifestError) as cm:
            load_manifest('/nonexistent/m.jsonl')
        self.assertIn('/nonexistent/m.jsonl', str(cm.exception))

    def test_bad_json(self):
        with self.assertRaises(ManifestError) as cm:
            self.load('{"version": 1, "tags": ["x"]}\n{not json\n')
        self.assertIn(':2:', str(cm.exception))

    def test_bad_header(self):
        with self.assertRaises(ManifestError):
            self.load('{"tags": ["x"]}\n')
        with self.assertRaises(ManifestError):
            self.load('')

    def test_missing_field(self):
        with self.assertRaises(ManifestError) as cm:
            self.load('{"version": 1, "tags": ["x"]}\n\n{"path": "a.wav", "split": "train", "tags": [1]}\n')
        self.assertIn(':3:', str(cm.exception))

    def test_fractional_tags(self):
        header = '{"version": 1, "tags": ["x", "y"]}\n'
        for tags in ('[0.5, 1]', '[1, 2]', '[true, 0]', '"10"'):
            with self.subTest(tags):
                with self.assertRaises(ManifestError) as cm:
                    self.load(header + '{"path": "a.wav", "song_id": "s", "split": "train", "tags": ' + tags + '}\n')
                self.assertIn(':2:', str(cm.exception))

    def test_blank_lines(self):
        manifest = self.load('{"version": 1, "tags": ["x"]}\n\n'
                             '{"path": "a.wav", "song_id": 7, "split": "test", "tags": [1]}\n\n')
        self.assertEqual(manifest.records[0].song_id, '7')


class SynthTests(unittest.TestCase):
    def test_tone_frequencies(self):
        self.assertEqual([tone_frequency(t) for t in range(4)], [200, 400, 800, 1600])

    def test_noise_only(self):
        samples = synth_song(np.zeros(4), 16000, 16000, np.random.default_rng(0))
        self.assertAlmostEqual(np.sqrt(np.mean(samples ** 2)), np.sqrt(0.1 ** 2 / 2 / 10), delta=0.002)
        scores = band_energy_scores(samples, 4)
        tone = band_energy_scores(synth_song(np.array([0, 0, 1, 0]), 16000, 16000, np.random.default_rng(0)), 4)
        self.assertGreater(tone[2] - scores[2], 5)
        self.assertEqual(int(np.argmax(tone)), 2)

    def test_deterministic(self):
        with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
            first = synth_dataset(a, n_songs=6, seed=4, duration='0.1 s')
            second = synth_dataset(b, n_songs=6, seed=4, duration='0.1 s')
            for x, y in zip(load_manifest(first), load_manifest(second)):
                self.assertEqual(x.path.read_bytes(), y.path.read_bytes())
                self.assertEqual(x.split, y.split)
                np.testing.assert_array_equal(x.tags, y.tags)

    def test_splits(self):
        with tempfile.TemporaryDirectory() as out:
            manifest = load_manifest(synth_dataset(out, n_songs=20, n_tags=3, duration='0.1 s'))
        self.assertEqual([len(manifest.split(s)) for s in ('train', 'valid', 'test')], [16, 2, 2])
        self.assertEqual(manifest.tags, ['tone_200hz', 'tone_400hz', 'tone_800hz'])

    def test_limits(self):
        with tempfile.TemporaryDirectory() as out:
            with self.assertRaises(ValidationError):
                synth_dataset(out, n_tags=9, duration='0.1 s')
            with self.assertRaises(ValidationError):
                synth_dataset(out, n_tags=7, duration='0.1 s')
            with self.assertRaises(ValidationError):
                synth_dataset(out, n_tags=0, duration='0.1 s')
            with self.assertRaises(ValidationError):
                synth_dataset(out, n_songs=0, duration='0.1 s')

    def test_oracle(self):
        with tempfile.TemporaryDirectory() as out:
            report = band_energy_oracle(load_manifest(synth_dataset(out, n_songs=40, duration='1 s')), workers=2)
        self.assertEqual(report.skipped, [])
        self.assertGreaterEqual(report.macro_roc, 0.99)


if __name__ == '__main__':
    unittest.main()
