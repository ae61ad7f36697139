from typing import List, Sequence, Tuple, Optional
import re

import numpy as np

_float_args_pattern = re.compile(r'^(?P<float>[-+]?[0-9,_]*(\.[0-9]*)?([eE][-+]?[0-9]+)?)\s*(?P<unit>[^\s0-9.].*)?$')


def split_amount_args(arg: str, default_amount=1) -> Tuple[Optional[float], str]:
    """
    >>> split_amount_args('3 s')
    (3.0, 's')
    >>> split_amount_args('16kHz')
    (16.0, 'kHz')
    >>> split_amount_args('ms')
    (1, 'ms')
    """
    match = _float_args_pattern.fullmatch(arg.strip())
    if match and match.group('float') not in ('', '+', '-'):
        return float(match.group('float').replace(',', '').replace('_', '')), (match.group('unit') or '').strip()
    return default_amount, arg.strip()


def spawn_seeds(seed: int, n: int) -> List[int]:
    """
    derive n independent, reproducible child seeds from one seed
    """
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def shape_str(shape: Sequence[int]) -> str:
    return '(' + ', '.join(str(s) for s in shape) + ')'


if __name__ == '__main__':
    import doctest

    doctest.testmod()
