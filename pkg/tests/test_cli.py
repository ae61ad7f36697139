import io
import json
import os
import tempfile
import unittest
from contextlib import redirect_stdout, redirect_stderr
from pathlib import Path
from unittest import mock

from muslcat.checkpoint import save_checkpoint
from muslcat.cli import main
from muslcat.data import synth_dataset
from muslcat.model import build_model


def run(*argv):
    out = io.StringIO()
    with redirect_stdout(out):
        code = main(list(argv))
    return code, out.getvalue()


class CliTests(unittest.TestCase):
    def setUp(self):
        self._dir = tempfile.TemporaryDirectory()
        self.dir = Path(self._dir.name)

    def tearDown(self):
        self._dir.cleanup()

    def test_audit(self):
        code, out = run('audit', 'muslcan')
        self.assertEqual(code, 0)
        self.assertIn('3.38 M', out)
        self.assertIn('3,146,288', out)
        self.assertNotIn('MISMATCH', out)

    def test_audit_json(self):
        path = self.dir / 'audit.json'
        code, _ = run('audit', 'lowcan', '--json', str(path))
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(path.read_text())['lowcan']['total'], 1_131_178)

    def test_audit_unknown(self):
        code, _ = run('audit', 'no_such_model')
        self.assertEqual(code, 1)

    def test_gradcheck(self):
        code, out = run('gradcheck', '--module', 'dense', '--module', 'relu')
        self.assertEqual(code, 0)
        self.assertIn('6/6 gradient checks passed', out)

    def test_usage_errors(self):
        for argv in (['gradcheck', '--module', 'lstm'], ['--frobnicate', 'audit', 'muslcan'], []):
            with self.subTest(argv):
                with redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as cm:
                    main(argv)
                self.assertEqual(cm.exception.code, 1)

    def test_threads(self):
        code, _ = run('--threads', '0', 'audit', 'tiny_muslcan')
        self.assertEqual(code, 1)
        with mock.patch.dict(os.environ, {'MUSLCAT_THREADS': 'many'}):
            code, _ = run('audit', 'tiny_muslcan')
        self.assertEqual(code, 1)

    def test_train_missing_config(self):
        with self.assertLogs('muslcat.cli', 'ERROR') as logs:
            code, _ = run('train', str(self.dir / 'absent.json'))
        self.assertEqual(code, 1)
        self.assertIn('absent.json', '\n'.join(logs.output))

    def test_train_missing_manifest(self):
        config = self.dir / 'train.json'
        config.write_text(json.dumps({'model': 'gradcheck_muslcan', 'train_manifest': 'missing/manifest.jsonl'}))
        with self.assertLogs('muslcat.cli', 'ERROR') as logs:
            code, _ = run('train', str(config))
        self.assertEqual(code, 1)
        self.assertIn('missing/manifest.jsonl', '\n'.join(logs.output))

    def test_synth_train_evaluate(self):
        code, out = run('--seed', '2', 'synth-data', str(self.dir / 'data'), '--songs', '12', '--duration', '0.25 s',
                        '--check')
        self.assertEqual(code, 0)
        self.assertIn('manifest:', out)
        manifest = self.dir / 'data' / 'manifest.jsonl'
        self.assertTrue(manifest.is_file())

        config = self.dir / 'train.json'
        config.write_text(json.dumps({'model': 'gradcheck_muslcan', 'train_manifest': 'data/manifest.jsonl',
                                      'checkpoint_dir': 'run', 'batch_size': 3}))
        code, out = run('train', str(config), '--max-epochs', '1')
        self.assertEqual(code, 0)
        self.assertIn('1 epochs', out)
        checkpoint = self.dir / 'run' / 'best.ckpt'
        self.assertTrue(checkpoint.is_file())

        report = self.dir / 'report.json'
        table = self.dir / 'report.csv'
        code, out = run('evaluate', str(checkpoint), str(manifest), '--split', 'all', '--json', str(report),
                        '--csv', str(table))
        self.assertEqual(code, 0)
        self.assertIn('12 songs', out)
        self.assertEqual(json.loads(report.read_text())['songs'], 12)
        self.assertEqual(table.read_text().splitlines()[0], 'tag,roc_auc,pr_auc')

    def test_evaluate_bad_checkpoint(self):
        manifest = synth_dataset(self.dir, n_songs=3, duration='0.25 s')
        bad = self.dir / 'bad.ckpt'
        bad.write_bytes(b'garbage')
        code, _ = run('evaluate', str(bad), str(manifest))
        self.assertEqual(code, 1)
        good = save_checkpoint(self.dir / 'good.ckpt', build_model('gradcheck_muslcan'))
        code, _ = run('evaluate', str(good), str(self.dir / 'absent.jsonl'))
        self.assertEqual(code, 1)


if __name__ == '__main__':
    unittest.main()
