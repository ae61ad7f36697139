import json
import unittest

import numpy as np

from muslcat.attention import aac_param_estimate
from muslcat.audit import ParamAudit, audit_params, check_reference, reference_key
from muslcat.commons import PUBLISHED_TOTALS
from muslcat.model import build_model

EXACT_TOTALS = {
    'lowcan': 1_131_178,
    'highcan': 1_285_816,
    'low_high_cnn': 2_276_144,
    'muslcan': 3_146_288,
    'low_bert': 14_788_266,
    'high_bert': 14_942_904,
    'muslcat': 15_933_232,
}


class ReferenceAuditTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.models = {key: build_model(key, dtype=np.float32) for key in PUBLISHED_TOTALS}
        cls.audits = {key: audit_params(model) for key, model in cls.models.items()}

    def test_exact_totals(self):
        self.assertEqual({k: a.total for k, a in self.audits.items()}, EXACT_TOTALS)

    def test_reproduces_publication(self):
        self.assertEqual(check_reference(self.audits), [])

    def test_within_tolerance(self):
        for key in ('lowcan', 'highcan', 'muslcan', 'muslcat'):
            with self.subTest(key):
                self.assertTrue(self.audits[key].within())
                self.assertEqual(self.audits[key].reference, PUBLISHED_TOTALS[key])

    def test_ordering(self):
        self.assertEqual(sorted(self.audits, key=lambda k: self.audits[k].total),
                         ['lowcan', 'highcan', 'low_high_cnn', 'muslcan', 'low_bert', 'high_bert', 'muslcat'])

    def test_reductions(self):
        self.assertAlmostEqual(self.audits['muslcat'].reduction, 0.333, delta=0.001)
        self.assertAlmostEqual(self.audits['muslcan'].reduction, 0.868, delta=0.001)

    def test_components(self):
        self.assertEqual(self.audits['lowcan'].components, {'lowCAN': 990_328, 'classifier': 140_850})
        muslcat = self.audits['muslcat']
        self.assertEqual(list(muslcat.components), ['lowCAN', 'highCAN', 'projection', 'BERT', 'classifier'])
        self.assertEqual(muslcat.total, self.models['muslcat'].num_parameters())
        self.assertIn('backend AAC', self.audits['muslcan'].components)

    def test_aac_rows(self):
        rows = self.audits['muslcan'].aac_rows
        # per branch four layers and the fusion block, plus the backend
        self.assertEqual(len(rows), 11)
        for row in rows:
            self.assertEqual(row.estimate, aac_param_estimate(row.c_in, row.c_out, row.key_ratio, row.value_ratio,
                                                              row.filter_size))
            self.assertLess(row.embeddings, row.exact)
        self.assertEqual(len(self.audits['lowcan'].aac_rows), 5)

    def test_table(self):
        table = self.audits['muslcan'].table()
        self.assertIn('3.38 M', table)
        self.assertIn('3,146,288', table)
        self.assertIn('AAC blocks', table)
        data = json.loads(json.dumps(self.audits['muslcan'].to_dict()))
        self.assertEqual(data['total'], 3_146_288)
        self.assertEqual(len(data['aac']), 11)

    def test_reference_key(self):
        self.assertEqual(reference_key(self.models['muslcat']), 'muslcat')
        self.assertIsNone(reference_key(build_model('tiny_muslcan')))


class CheckReferenceTests(unittest.TestCase):
    def test_total_off(self):
        audit = ParamAudit('lowCAN', {'all': 2_000_000}, reference=PUBLISHED_TOTALS['lowcan'])
        problems = check_reference({'lowcan': audit})
        self.assertEqual(len(problems), 1)
        self.assertIn('lowCAN', problems[0])

    def test_ordering_off(self):
        audits = {'lowcan': ParamAudit('lowCAN', {'all': 1_300_000}, PUBLISHED_TOTALS['lowcan']),
                  'highcan': ParamAudit('highCAN', {'all': 1_200_000}, PUBLISHED_TOTALS['highcan'])}
        problems = check_reference(audits)
        self.assertTrue(any(p.startswith('ordering') for p in problems))

    def test_reduction_off(self):
        audit = ParamAudit('MuSLCAN', {'all': 3_380_000 * 1.5}, PUBLISHED_TOTALS['muslcan'])
        problems = check_reference({'muslcan': audit})
        self.assertTrue(any('reduction' in p for p in problems))

    def test_unpublished(self):
        audit = audit_params(build_model('tiny_muslcan'))
        self.assertIsNone(audit.reference)
        self.assertIsNone(audit.deviation)
        self.assertFalse(audit.within())
        self.assertLessEqual(audit.total, 300_000)
        self.assertNotIn('published', audit.table())


if __name__ == '__main__':
    unittest.main()
