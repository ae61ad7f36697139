"""
Exact parameter accounting of built models, compared with the published component counts and reductions.
"""
from typing import Dict, Iterable, List, NamedTuple, Optional
import logging

from .attention import AACBlock, aac_param_estimate
from .commons import PUBLISHED_TOTALS, BASELINE_PARAMS, CLAIMED_REDUCTIONS, presets
from .model import Model, BertBackend, AACBackend
from .units import ParamCount

log = logging.getLogger(__name__)

# totals that must land within TOTAL_TOLERANCE of the published count
TOLERANCE_CHECKED = ('lowcan', 'highcan', 'muslcan', 'muslcat')
TOTAL_TOLERANCE = 0.15
REDUCTION_TOLERANCE = 0.03


def _fmt(n: float) -> str:
    return format(ParamCount(n), '.2f:M')


class AACRow(NamedTuple):
    """
    one AAC block: the closed-form estimate for replacing a filter-r convolution, beside the exact count
    """
    site: str
    c_in: int
    c_out: int
    key_ratio: float
    value_ratio: float
    filter_size: int
    estimate: float
    exact: int
    embeddings: int

    def __str__(self):
        return f'{self.site:<28} {self.c_in:>5} {self.c_out:>5} {self.key_ratio:>5g} {self.value_ratio:>5g} ' \
               f'{self.estimate:>14,.0f} {self.exact:>12,} {self.embeddings:>10,}'


class ParamAudit:
    """
    Exact per-component parameter counts of a model. The total is the sum of the components.
    """
    __slots__ = 'name', 'components', 'reference', 'baseline', 'aac_rows'

    def __init__(self, name: str, components: Dict[str, int], reference: Optional[float] = None,
                 baseline: float = BASELINE_PARAMS, aac_rows: Iterable[AACRow] = ()):
        """
        :param name: the model's name
        :param components: parameter count per named component
        :param reference: the published total, if there is one
        :param baseline: the count reductions are computed against
        :param aac_rows: estimate-versus-exact rows for every AAC block
        """
        self.name = name
        self.components = dict(components)
        self.reference = reference
        self.baseline = baseline
        self.aac_rows = list(aac_rows)

    @property
    def total(self) -> int:
        return sum(self.components.values())

    @property
    def deviation(self) -> Optional[float]:
        """
        the relative deviation from the published total
        """
        if self.reference is None:
            return None
        return self.total / self.reference - 1

    @property
    def reduction(self) -> float:
        """
        the fraction of parameters saved against the baseline
        """
        return 1 - self.total / self.baseline

    def within(self, tolerance: float = TOTAL_TOLERANCE) -> bool:
        return self.reference is not None and abs(self.deviation) <= tolerance

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'components': self.components,
            'total': self.total,
            'reference': self.reference,
            'deviation': self.deviation,
            'reduction': self.reduction,
            'aac': [row._asdict() for row in self.aac_rows],
        }

    def table(self) -> str:
        lines = [f'{self.name}']
        for component, count in self.components.items():
            lines.append(f'  {component:<26} {count:>12,} {_fmt(count):>10}')
        lines.append(f'  {"total":<26} {self.total:>12,} {_fmt(self.total):>10}')
        if self.reference is not None:
            lines.append(f'  {"published":<26} {"":>12} {_fmt(self.reference):>10} ({self.deviation:+.1%})')
        lines.append(f'  reduction vs {_fmt(self.baseline)}: {self.reduction:.1%}')
        if self.aac_rows:
            lines.append('  AAC blocks (estimate for replacing a filter-3 convolution, exact count, embeddings):')
            lines.append(f'  {"site":<28} {"C_in":>5} {"C_out":>5} {"k":>5} {"v":>5} {"estimate":>14} '
                         f'{"exact":>12} {"embeddings":>10}')
            lines.extend(f'  {row}' for row in self.aac_rows)
        return '\n'.join(lines)

    def __str__(self):
        return self.table()

    def __repr__(self):
        return f'ParamAudit({self.name!r}, total={self.total})'


def aac_rows(model: Model) -> List[AACRow]:
    ret = []
    for site, module in model.named_modules():
        if not isinstance(module, AACBlock):
            continue
        embeddings = module.mha.params['rel_emb'].size if 'rel_emb' in module.mha.params else 0
        ret.append(AACRow(
            site, module.in_channels, module.out_channels, module.key_ratio, module.value_ratio,
            module.conv.filter_size,
            aac_param_estimate(module.in_channels, module.out_channels, module.key_ratio, module.value_ratio,
                               module.conv.filter_size),
            module.num_parameters(), embeddings))
    return ret


def reference_key(model: Model) -> Optional[str]:
    """
    the preset name of a model built from a reference config, if any
    """
    return next((k for k, cfg in presets.items() if cfg == model.config and k in PUBLISHED_TOTALS), None)


def audit_params(model: Model, name: str = None) -> ParamAudit:
    components = {}
    for can in model.branches:
        components[f'{can.config.branch}CAN'] = can.num_parameters()
    backend = model.backend
    if isinstance(backend, BertBackend):
        projection = backend.projection.num_parameters() if backend.projection is not None else 0
        if projection:
            components['projection'] = projection
        components['BERT'] = backend.num_parameters() - projection
    elif isinstance(backend, AACBackend):
        components['backend AAC'] = backend.num_parameters()
    components['classifier'] = model.classifier.num_parameters()
    key = reference_key(model)
    audit = ParamAudit(name or model.config.name, components, PUBLISHED_TOTALS.get(key), aac_rows=aac_rows(model))
    if audit.total != model.num_parameters():
        raise AssertionError(f'component counts of {audit.name} do not add up: {audit.total} != '
                             f'{model.num_parameters()}')
    log.info('%s: %d parameters', audit.name, audit.total)
    return audit


def check_reference(audits: Dict[str, ParamAudit]) -> List[str]:
    """
    compare audits of the reference presets (keyed by preset name) to the published counts
    :return: a description of every discrepancy; empty if the audits reproduce the publication
    """
    problems = []
    for key in TOLERANCE_CHECKED:
        if key in audits and not audits[key].within(TOTAL_TOLERANCE):
            a = audits[key]
            problems.append(f'{a.name}: {_fmt(a.total)} is {a.deviation:+.1%} off the published '
                            f'{_fmt(a.reference)}')
    keys = [k for k in PUBLISHED_TOTALS if k in audits]
    published_order = sorted(keys, key=PUBLISHED_TOTALS.get)
    audited_order = sorted(keys, key=lambda k: audits[k].total)
    if published_order != audited_order:
        problems.append(f'ordering differs: published {published_order}, audited {audited_order}')
    for key, claimed in CLAIMED_REDUCTIONS.items():
        if key in audits and abs(audits[key].reduction - claimed) > REDUCTION_TOLERANCE:
            problems.append(f'{audits[key].name}: reduction {audits[key].reduction:.1%} against the claimed '
                            f'{claimed:.1%}')
    return problems


__all__ = ['ParamAudit', 'AACRow', 'audit_params', 'aac_rows', 'check_reference', 'reference_key']
