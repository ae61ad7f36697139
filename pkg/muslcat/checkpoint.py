"""
The checkpoint container.

layout: the 8-byte magic, a little-endian uint32 format version, a little-endian uint64 header length, the UTF-8
JSON header, then the raw little-endian tensor data. The header echoes the model config and lists every tensor
(parameters and batch-norm statistics) with its name, kind, shape, dtype and byte offset into the data section.
"""
from typing import Any, Dict, Tuple, Union
from pathlib import Path
import json
import logging
import os
import struct

import numpy as np

from .errors import CheckpointError
from .model import Model, build_model

log = logging.getLogger(__name__)

MAGIC = b'MUSLCKPT'
VERSION = 1
_preamble = struct.Struct('<8sIQ')

_dtypes = {'float32': '<f4', 'float64': '<f8'}


def save_checkpoint(path: Union[str, Path], model: Model, extra: Dict[str, Any] = None) -> Path:
    """
    write a model to path, atomically
    :param extra: JSON-serializable metadata stored in the header (epoch, validation loss, ...)
    """
    path = Path(path)
    tensors = [(n, 'param', p) for n, p in model.named_parameters()]
    tensors.extend((n, 'buffer', b) for n, b in model.named_buffers())
    entries = []
    offset = 0
    for name, kind, arr in tensors:
        dtype = arr.dtype.name
        if dtype not in _dtypes:
            raise CheckpointError(f'cannot store tensor {name} of dtype {dtype}')
        entries.append({'name': name, 'kind': kind, 'shape': list(arr.shape), 'dtype': dtype, 'offset': offset})
        offset += arr.nbytes
    header = json.dumps({
        'config': model.config.model_dump(mode='json'),
        'extra': extra or {},
        'tensors': entries,
        'data_length': offset,
    }).encode('utf-8')
    tmp = path.with_name(path.name + '.tmp')
    try:
        with open(tmp, 'wb') as f:
            f.write(_preamble.pack(MAGIC, VERSION, len(header)))
            f.write(header)
            for _, _, arr in tensors:
                f.write(np.ascontiguousarray(arr, dtype=_dtypes[arr.dtype.name]).tobytes())
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointError(f'could not write checkpoint {path}: {e}') from e
    finally:
        if tmp.exists():
            tmp.unlink()
    log.debug('saved %d tensors (%d bytes) to %s', len(entries), offset, path)
    return path


def read_header(path: Union[str, Path]) -> Tuple[Dict[str, Any], int]:
    """
    :return: the parsed header and the file offset of the data section
    """
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            preamble = f.read(_preamble.size)
            if len(preamble) < _preamble.size:
                raise CheckpointError(f'{path}: truncated preamble')
            magic, version, header_length = _preamble.unpack(preamble)
            if magic != MAGIC:
                raise CheckpointError(f'{path}: not a checkpoint (magic {magic!r})')
            if version != VERSION:
                raise CheckpointError(f'{path}: unsupported checkpoint version {version}')
            raw = f.read(header_length)
    except OSError as e:
        raise CheckpointError(f'could not read checkpoint {path}: {e}') from e
    if len(raw) != header_length:
        raise CheckpointError(f'{path}: truncated header')
    try:
        header = json.loads(raw.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'{path}: corrupt header: {e}') from e
    return header, _preamble.size + header_length


def _layout(header: Any, path: Path) -> Tuple[Dict[str, Any], list, int]:
    """
    :return: the model config, the (name, shape, dtype, offset) tensor entries and the data length of a header
    """
    try:
        entries = [(str(e['name']), tuple(int(n) for n in e['shape']), str(e['dtype']), int(e['offset']))
                   for e in header['tensors']]
        config, data_length = header['config'], int(header['data_length'])
    except KeyError as e:
        raise CheckpointError(f'{path}: header is missing the field {e}') from e
    except (TypeError, ValueError) as e:
        raise CheckpointError(f'{path}: malformed header: {e}') from e
    for name, _, dtype, _ in entries:
        if dtype not in _dtypes:
            raise CheckpointError(f'{path}: tensor {name} has unsupported dtype {dtype!r}')
    return config, entries, data_length


def load_checkpoint(path: Union[str, Path]) -> Tuple[Model, Dict[str, Any]]:
    """
    rebuild the model a checkpoint was saved from
    :return: the model, in evaluation mode, and the checkpoint's extra metadata
    """
    path = Path(path)
    header, data_offset = read_header(path)
    config, entries, data_length = _layout(header, path)
    dtype = entries[0][2] if entries else 'float64'
    model = build_model(config, dtype=np.dtype(dtype))
    data = np.fromfile(path, dtype=np.uint8, offset=data_offset)
    if data.size != data_length:
        raise CheckpointError(f'{path}: expected {data_length} bytes of tensor data, found {data.size}')
    targets = dict(model.named_parameters())
    targets.update(model.named_buffers())
    for name, shape, dtype, start in entries:
        if name not in targets:
            raise CheckpointError(f'{path}: tensor {name} does not belong to the configured model')
        target = targets.pop(name)
        if shape != target.shape:
            raise CheckpointError(f'{path}: tensor {name} has shape {shape}, the model expects {target.shape}')
        dt = np.dtype(_dtypes[dtype])
        end = start + int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        target[...] = np.frombuffer(data[start:end], dtype=dt).reshape(shape)
    if targets:
        raise CheckpointError(f'{path}: missing tensors {sorted(targets)}')
    model.eval()
    return model, header.get('extra') or {}


__all__ = ['save_checkpoint', 'load_checkpoint', 'read_header', 'MAGIC', 'VERSION']
