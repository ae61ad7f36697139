"""
Named units for the handful of quantities that show up in configs, on the command line and in reports:
durations (seconds, samples are derived from a rate), rates and parameter counts.

>>> Duration('3000 ms')['s']
3.0
>>> Duration('30 s').samples(16000)
480000
>>> format(ParamCount(3_380_000), '.2f:M')
'3.38 M'
"""
from typing import Dict, Tuple, Union
from numbers import Real
import re

from ._util import split_amount_args
from .errors import ConfigError

UnitDef = Union[Real, str, Tuple[Real, str]]


class Measure:
    """
    A named dimension with a set of units. Each unit is defined either by its size in the measure's arbitrary
    base unit, by the name of another unit (an alias), or by a (factor, unit name) pair.
    """
    __slots__ = 'name', 'units'

    def __init__(self, name: str, **units: UnitDef):
        """
        constructor
        :param name: the name of the measure
        :param units: initial unit definitions
        """
        self.name = name
        self.units: Dict[str, UnitDef] = {}
        self.update(units)

    def __setitem__(self, key: str, value: UnitDef):
        self.units[key] = value

    def update(self, units: Dict[str, UnitDef]):
        for k, v in units.items():
            self[k] = v

    def __contains__(self, item):
        return item in self.units

    def __getitem__(self, item: str) -> float:
        """
        Get the size of a unit in base units
        :param item: the unit name, optionally prefixed by an amount ('60 second')
        :return: the size of the unit, in base units
        """
        if item not in self.units:
            amount, unit = split_amount_args(item, default_amount=None)
            if amount is not None and unit in self.units:
                return amount * self[unit]
            raise ConfigError(f'unknown {self.name} unit: {item!r}')
        ret = self.units[item]
        if isinstance(ret, str):
            return self[ret]
        if isinstance(ret, tuple):
            factor, unit = ret
            return factor * self[unit]
        return float(ret)

    def optimize_aliases(self):
        """
        reduce all aliases and compound definitions to their value
        :return: self, for piping
        """
        for k in list(self.units):
            self.units[k] = self[k]
        return self

    def native_unit(self) -> str:
        return next(iter(self.units))

    def __call__(self, amount: Union[str, Real], unit: str = None) -> 'Measurement':
        """
        Create a measurement
        :param amount: the amount, or a string of the form '<amount> <unit>'
        :param unit: the unit of the amount, defaults to the native unit
        """
        if isinstance(amount, str):
            if unit is not None:
                raise TypeError('unit must not be given twice')
            amount, unit = split_amount_args(amount)
            unit = unit or None
        if unit is None:
            unit = self.native_unit()
        return Measurement(amount * self[unit], self)

    def parse(self, value: Union[str, Real, 'Measurement']) -> 'Measurement':
        if isinstance(value, Measurement):
            if value.measure is not self:
                raise ConfigError(f'expected a {self.name}, got a {value.measure.name}')
            return value
        return self(value)

    def __str__(self):
        return self.name

    def __repr__(self):
        return f'Measure({self.name!r})'


class Measurement:
    """
    An amount of a measure, stored in the measure's base unit
    """
    __slots__ = 'amount', 'measure'

    def __init__(self, amount: Real, measure: Measure):
        self.amount = amount
        self.measure = measure

    def __eq__(self, other):
        if not isinstance(other, Measurement):
            return NotImplemented
        return self.measure is other.measure and self.amount == other.amount

    def __hash__(self):
        return hash((self.amount, self.measure.name))

    def __repr__(self):
        return f'{self.measure.name}({self.amount!r})'

    format_pattern = re.compile(r'(?P<inner_format>[^:]*)(:(?P<convert>[^|]+)(\|(?P<display>.+))?)?')

    def __getitem__(self, unit: str) -> float:
        """
        :return: the amount of this measurement, in the given unit
        """
        return self.amount / self.measure[unit]

    def samples(self, sample_rate: Union[Real, 'Measurement']) -> int:
        """
        the number of samples a duration covers at a sample rate
        """
        if self.measure is not Duration:
            raise ConfigError(f'only durations can be counted in samples, not {self.measure.name}')
        rate = Frequency.parse(sample_rate)['Hz']
        return int(round(self['second'] * rate))

    def __format__(self, format_spec):
        match = self.format_pattern.fullmatch(format_spec)
        if not match:
            raise ValueError('could not parse format string ' + format_spec)
        decimal_format, convert, display = match.group('inner_format', 'convert', 'display')
        if not convert:
            convert = self.measure.native_unit()
        if not display:
            display = convert
        return f'{self[convert]:{decimal_format}} {display}'

    def __str__(self):
        return format(self, 'g')


Duration = Measure('duration', second=1, millisecond=0.001, minute=60)
Duration.update({
    's': 'second',
    'ms': 'millisecond',
    'min': 'minute',
})
Duration.optimize_aliases()

Frequency = Measure('frequency', Hz=1, kHz=1000)
Frequency.update({
    'hz': 'Hz',
    'khz': 'kHz',
})
Frequency.optimize_aliases()

ParamCount = Measure('parameter count', params=1, K=1e3, M=1e6)
ParamCount.update({
    'k': 'K',
})
ParamCount.optimize_aliases()

__all__ = 'Measure', 'Measurement', 'Duration', 'Frequency', 'ParamCount'
