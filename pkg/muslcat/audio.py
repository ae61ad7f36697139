"""
WAV ingestion: RIFF parsing (16-bit PCM and 32-bit float, mono or multichannel), downmix, resampling to the model
rate, and cutting waveforms into fixed-length chunks.
"""
from concurrent.futures import ThreadPoolExecutor
from math import gcd
from pathlib import Path
from typing import Iterator, List, NamedTuple, Sequence, Union
import logging
import struct

import numpy as np
from scipy.signal import resample_poly

from .errors import WavFormatError, ValidationError
from .tensor import Tensor, DEFAULT_DTYPE

log = logging.getLogger(__name__)

MODEL_RATE = 16000
CHUNK_LENGTH = 48000
MIN_RATE = 8000
MAX_RATE = 192000
# kaiser beta of the anti-aliasing filter
KAISER_BETA = 10.0

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


class Waveform:
    """
    mono samples in [-1, 1] at a sample rate
    """
    __slots__ = 'samples', 'sample_rate'

    def __init__(self, samples: Tensor, sample_rate: int):
        self.samples = samples
        self.sample_rate = sample_rate

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __repr__(self):
        return f'Waveform({len(self)} samples at {self.sample_rate} Hz)'


class Chunk(NamedTuple):
    samples: Tensor  # (1, 1, length)
    offset: int
    padded: bool


class WavData(NamedTuple):
    frames: np.ndarray  # (frames, channels), in the file's sample type
    sample_rate: int
    audio_format: int
    bits: int


def _u32(raw: bytes, offset: int, field: str) -> int:
    if offset + 4 > len(raw):
        raise WavFormatError(offset, field, f'file ends after {len(raw)} bytes')
    return struct.unpack_from('<I', raw, offset)[0]


def parse_wav(raw: bytes) -> WavData:
    """
    decode the bytes of a RIFF/WAVE file
    :raises WavFormatError: naming the offset and field of the first problem
    """
    if raw[0:4] != b'RIFF':
        raise WavFormatError(0, 'RIFF id', f'expected b"RIFF", got {raw[0:4]!r}')
    _u32(raw, 4, 'RIFF size')
    if raw[8:12] != b'WAVE':
        raise WavFormatError(8, 'WAVE id', f'expected b"WAVE", got {raw[8:12]!r}')
    fmt = None
    offset = 12
    while offset + 8 <= len(raw):
        chunk_id = raw[offset:offset + 4]
        size = _u32(raw, offset + 4, f'{chunk_id!r} chunk size')
        body = offset + 8
        if chunk_id == b'fmt ':
            if size < 16:
                raise WavFormatError(offset + 4, 'fmt chunk size', f'{size} bytes is too short for a format chunk')
            if body + 16 > len(raw):
                raise WavFormatError(body, 'fmt chunk', f'file ends after {len(raw)} bytes')
            audio_format, channels, rate, _, block_align, bits = struct.unpack_from('<HHIIHH', raw, body)
            if audio_format == EXTENSIBLE:
                if size < 40:
                    raise WavFormatError(offset + 4, 'fmt chunk size', 'extensible format without sub-format')
                if body + 26 > len(raw):
                    raise WavFormatError(body + 24, 'sub-format', f'file ends after {len(raw)} bytes')
                audio_format = struct.unpack_from('<H', raw, body + 24)[0]
            if audio_format not in (PCM, IEEE_FLOAT):
                raise WavFormatError(body, 'audio format', f'unsupported codec {audio_format:#x}')
            if (audio_format, bits) not in ((PCM, 16), (IEEE_FLOAT, 32)):
                raise WavFormatError(body + 14, 'bits per sample',
                                     f'{bits}-bit {"PCM" if audio_format == PCM else "float"} is not supported')
            if channels < 1:
                raise WavFormatError(body + 2, 'channels', 'no channels')
            if block_align != channels * bits // 8:
                raise WavFormatError(body + 12, 'block align',
                                     f'{block_align} does not match {channels} channels of {bits} bits')
            fmt = audio_format, channels, rate, block_align, bits
        elif chunk_id == b'data':
            if fmt is None:
                raise WavFormatError(offset, 'data chunk', 'data before the format chunk')
            audio_format, channels, rate, block_align, bits = fmt
            if body + size > len(raw):
                raise WavFormatError(offset + 4, 'data chunk size',
                                     f'{size} bytes declared, {len(raw) - body} present')
            n_frames = size // block_align
            dtype = '<i2' if audio_format == PCM else '<f4'
            frames = np.frombuffer(raw, dtype=dtype, count=n_frames * channels, offset=body)
            return WavData(frames.reshape(n_frames, channels), rate, audio_format, bits)
        offset = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError(12, 'fmt chunk', 'no format chunk')
    raise WavFormatError(offset, 'data chunk', 'no data chunk')


def load_wav(path: Union[str, Path]) -> Waveform:
    """
    read a WAV file as a mono waveform: channels are averaged, 16-bit samples divided by 32768
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ValidationError(f'could not read {path}: {e}') from e
    try:
        wav = parse_wav(raw)
    except WavFormatError as e:
        raise WavFormatError(e.offset, e.field, f'{path}: {e.detail}') from e
    frames = wav.frames.astype(DEFAULT_DTYPE)
    if wav.audio_format == PCM:
        frames /= 32768
    samples = frames.mean(axis=1) if frames.shape[1] > 1 else frames[:, 0]
    return Waveform(np.clip(samples, -1.0, 1.0), wav.sample_rate)


def write_wav(path: Union[str, Path], samples: Tensor, sample_rate: int, float32: bool = False) -> Path:
    """
    write mono (L,) or multichannel (L, channels) samples as 16-bit PCM (rounded, clipped) or 32-bit float
    """
    path = Path(path)
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    channels = samples.shape[1]
    if float32:
        data = samples.astype('<f4').tobytes()
        audio_format, bits = IEEE_FLOAT, 32
    else:
        data = np.clip(np.round(samples * 32768), -32768, 32767).astype('<i2').tobytes()
        audio_format, bits = PCM, 16
    block_align = channels * bits // 8
    header = b''.join([
        b'RIFF', struct.pack('<I', 36 + len(data) + (len(data) & 1)), b'WAVE',
        b'fmt ', struct.pack('<IHHIIHH', 16, audio_format, channels, sample_rate, sample_rate * block_align,
                             block_align, bits),
        b'data', struct.pack('<I', len(data)),
    ])
    path.write_bytes(header + data + b'\0' * (len(data) & 1))
    return path


def resample_16k(w: Waveform, src_rate: int = None, target_rate: int = MODEL_RATE) -> Waveform:
    """
    polyphase windowed-sinc resampling to target_rate, output length floor(L * target / src)
    :param src_rate: the source rate, defaults to the waveform's own
    """
    src_rate = src_rate or w.sample_rate
    if not MIN_RATE <= src_rate <= MAX_RATE:
        raise ValidationError(f'source rate {src_rate} Hz is outside {MIN_RATE}..{MAX_RATE} Hz')
    if src_rate == target_rate:
        return Waveform(w.samples, target_rate)
    g = gcd(src_rate, target_rate)
    up, down = target_rate // g, src_rate // g
    out = resample_poly(w.samples, up, down, window=('kaiser', KAISER_BETA))
    length = len(w.samples) * target_rate // src_rate
    return Waveform(np.clip(out[:length], -1.0, 1.0), target_rate)


def load_audio(path: Union[str, Path], sample_rate: int = MODEL_RATE) -> Waveform:
    return resample_16k(load_wav(path), target_rate=sample_rate)


def load_many(paths: Sequence[Union[str, Path]], sample_rate: int = MODEL_RATE,
              workers: int = 1) -> List[Union[Waveform, Exception]]:
    """
    decode files in parallel
    :return: per path, the waveform or the error that prevented reading it
    """
    def load(path):
        try:
            return load_audio(path, sample_rate)
        except (ValidationError, OSError) as e:
            return e

    if workers <= 1:
        return [load(p) for p in paths]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(load, paths))


def _as_chunk(samples: Tensor, offset: int, length: int) -> Chunk:
    piece = samples[offset:offset + length]
    padded = len(piece) < length
    if padded:
        piece = np.pad(piece, (0, length - len(piece)))
    return Chunk(piece.reshape(1, 1, length), offset, padded)


def sample_chunk(w: Waveform, length: int = CHUNK_LENGTH, rng: np.random.Generator = None) -> Chunk:
    """
    a window of `length` samples at a uniformly random offset in [0, L - length]; shorter clips are zero-padded at
    the tail and flagged
    """
    rng = rng or np.random.default_rng()
    last = len(w.samples) - length
    offset = int(rng.integers(0, last + 1)) if last > 0 else 0
    return _as_chunk(w.samples, offset, length)


def iter_chunks(w: Waveform, length: int = CHUNK_LENGTH) -> Iterator[Chunk]:
    """
    consecutive non-overlapping windows; a tail shorter than length is dropped, unless it is the whole clip
    """
    n = len(w.samples) // length
    if n == 0:
        yield _as_chunk(w.samples, 0, length)
        return
    for i in range(n):
        yield _as_chunk(w.samples, i * length, length)


def chunk_batch(w: Waveform, length: int = CHUNK_LENGTH) -> Tensor:
    """
    all evaluation chunks of a clip as a (n_chunks, 1, length) batch
    """
    return np.concatenate([c.samples for c in iter_chunks(w, length)])


__all__ = ['Waveform', 'Chunk', 'parse_wav', 'load_wav', 'write_wav', 'resample_16k', 'load_audio', 'load_many',
           'sample_chunk', 'iter_chunks', 'chunk_batch', 'MODEL_RATE', 'CHUNK_LENGTH']
