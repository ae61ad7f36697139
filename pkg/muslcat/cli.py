"""
The muslcat command line: train, evaluate, gradcheck, audit and synth-data.

Exit codes: 0 on success, 1 on invalid input (bad arguments, configs, manifests or audio), 2 on runtime failures
(non-finite values, failed gradient checks, aborted evaluations, audits that miss the published counts).
"""
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import List, Optional, Sequence
import json
import logging
import os
import sys

import numpy as np

from .audit import audit_params, check_reference
from .checkpoint import load_checkpoint
from .commons import PUBLISHED_TOTALS
from .data import load_manifest, synth_dataset, band_energy_oracle, MAX_SYNTH_TAGS
from .errors import MuslcatError, ValidationError
from .gradcheck import run_suite, module_names
from .model import build_model, load_model_config
from .metrics import evaluate
from .training import load_train_config, run_training

log = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
THREADS_ENV = 'MUSLCAT_THREADS'


class Parser(ArgumentParser):
    """
    an argument parser that reports usage errors with exit code 1
    """

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f'{self.prog}: error: {message}\n')


def _default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError:
        raise ValidationError(f'{THREADS_ENV} must be an integer, got {value!r}')
    if threads < 1:
        raise ValidationError(f'{THREADS_ENV} must be positive, got {threads}')
    return threads


def cmd_train(args: Namespace) -> int:
    config = load_train_config(args.config, seed=args.seed, max_epochs=args.max_epochs, workers=args.threads)
    report = run_training(config)
    if report.epochs:
        best = min(report.epochs, key=lambda e: e.val_loss)
        print(f'{len(report.epochs)} epochs, best validation loss {best.val_loss:.5f} at epoch {best.epoch}')
    print(f'checkpoint: {report.checkpoint}')
    print(f'trace: {report.trace}')
    return 0


def cmd_evaluate(args: Namespace) -> int:
    model, extra = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    report = evaluate(model, manifest, None if args.split == 'all' else args.split, workers=args.threads,
                      batch_size=args.batch_size)
    print(report)
    if args.json:
        report.write_json(args.json)
    if args.csv:
        report.write_csv(args.csv)
    return 0


def cmd_gradcheck(args: Namespace) -> int:
    reports = run_suite(args.module, seed=args.seed or 0)
    for report in reports:
        print(report)
    failed = [r for r in reports if not r.passed]
    print(f'{len(reports) - len(failed)}/{len(reports)} gradient checks passed')
    return 2 if failed else 0


def _audit_targets(target: str) -> List[str]:
    if target.lower() == 'reference':
        return list(PUBLISHED_TOTALS)
    return [target]


def cmd_audit(args: Namespace) -> int:
    audits = {}
    for target in _audit_targets(args.target):
        config = load_model_config(target)
        # parameter counts do not depend on precision
        model = build_model(config, args.seed or 0, dtype=np.float32)
        audit = audit_params(model, config.name)
        audits[target.lower()] = audit
        print(audit.table())
        print()
    if args.json:
        Path(args.json).write_text(json.dumps({k: a.to_dict() for k, a in audits.items()}, indent=2))
    problems = check_reference(audits)
    for problem in problems:
        print(f'MISMATCH {problem}')
    return 2 if problems else 0


def cmd_synth_data(args: Namespace) -> int:
    manifest_path = synth_dataset(args.out_dir, n_songs=args.songs, n_tags=args.tags, seed=args.seed or 0,
                                  duration=args.duration)
    print(f'manifest: {manifest_path}')
    if args.check:
        report = band_energy_oracle(load_manifest(manifest_path), workers=args.threads)
        print(report)
    return 0


def build_parser() -> Parser:
    parser = Parser(prog='muslcat', description='multi-scale attention waveform music tagging')
    parser.add_argument('--seed', type=int, default=None, help='seed every random stream (default: 0, or the '
                                                               'training config\'s seed)')
    parser.add_argument('--threads', type=int, default=None,
                        help=f'parallel audio decoding workers (default: ${THREADS_ENV}, or 1)')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', help='train a model from a JSON training config')
    train.add_argument('config', help='path to the training config')
    train.add_argument('--max-epochs', type=int, default=None)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser('evaluate', help='song-level ROC-AUC and PR-AUC of a checkpoint')
    ev.add_argument('checkpoint')
    ev.add_argument('manifest')
    ev.add_argument('--split', default='test', choices=['train', 'valid', 'test', 'all'])
    ev.add_argument('--batch-size', type=int, default=23)
    ev.add_argument('--json', default=None, help='write the report as JSON')
    ev.add_argument('--csv', default=None, help='write per-tag metrics as CSV')
    ev.set_defaults(func=cmd_evaluate)

    gc = sub.add_parser('gradcheck', help='compare every layer\'s gradients with finite differences')
    gc.add_argument('--module', action='append', default=None, choices=module_names(),
                    help='restrict to a module (repeatable)')
    gc.set_defaults(func=cmd_gradcheck)

    audit = sub.add_parser('audit', help='exact parameter counts against the published ones')
    audit.add_argument('target', help='a preset name, a model config file, or "reference" for every published '
                                      'model')
    audit.add_argument('--json', default=None, help='write the audits as JSON')
    audit.set_defaults(func=cmd_audit)

    synth = sub.add_parser('synth-data', help='write a synthetic tone-tagging dataset')
    synth.add_argument('out_dir')
    synth.add_argument('--songs', type=int, default=200)
    synth.add_argument('--tags', type=int, default=4, choices=range(1, MAX_SYNTH_TAGS + 1), metavar='TAGS')
    synth.add_argument('--duration', default='30 s')
    synth.add_argument('--check', action='store_true', help='score the dataset with the band-energy oracle')
    synth.set_defaults(func=cmd_synth_data)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        if args.threads is None:
            args.threads = _default_threads()
        elif args.threads < 1:
            raise ValidationError(f'--threads must be positive, got {args.threads}')
        return args.func(args)
    except ValidationError as e:
        log.error('%s', e)
        return 1
    except (MuslcatError, OSError) as e:
        log.error('%s: %s', type(e).__name__, e)
        return 2


__all__ = ['main', 'build_parser', 'Parser']
