"""
On-disk artifacts.

Every binary artifact (base checkpoint, adapter, selector, embedding buffer) is one tensor
container:

    magic        8 bytes, one per artifact kind
    version      uint16
    meta_len     uint32, followed by meta_len bytes of UTF-8 JSON (sorted keys)
    n_tensors    uint32
    table        n_tensors x (name_len uint16, name, ndim uint8, ndim x uint32 dims)
    payload      raw little-endian float64 data of every tensor, in table order

All integers are little-endian. The payload length is reported so that accounting code can
compare it with closed-form byte counts.
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch

from .exceptions import ArtifactFormatError

FORMAT_VERSION = 1

MAGIC_BASE = b'AUGSBASE'
MAGIC_ADAPTER = b'AUGSADPT'
MAGIC_SELECTOR = b'AUGSSLCT'
MAGIC_BUFFER = b'AUGSBUFR'

_PAYLOAD_DTYPE = np.dtype('<f8')


def _to_numpy(val):
    if isinstance(val, torch.Tensor):
        val = val.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(val, dtype=_PAYLOAD_DTYPE))


def encode_container(magic, meta, tensors):
    if len(magic) != 8:
        raise ValueError('container magic must be 8 bytes, got %r' % (magic,))
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(',', ':')).encode('utf-8')
    header = [magic, struct.pack('<HI', FORMAT_VERSION, len(meta_bytes)), meta_bytes,
              struct.pack('<I', len(tensors))]
    payload = []
    for name, val in tensors.items():
        arr = _to_numpy(val)
        name_bytes = name.encode('utf-8')
        header.append(struct.pack('<H', len(name_bytes)))
        header.append(name_bytes)
        header.append(struct.pack('<B', arr.ndim))
        header.append(struct.pack('<%dI' % arr.ndim, *arr.shape))
        payload.append(arr.tobytes())
    payload_bytes = b''.join(payload)
    return b''.join(header) + payload_bytes, len(payload_bytes)


def write_container(path, magic, meta, tensors):
    """Returns the payload length in bytes."""
    data, payload_nbytes = encode_container(magic, meta, tensors)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)
    return payload_nbytes


def decode_container(data, magic, source='<bytes>'):
    view = memoryview(data)
    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(view):
            raise ArtifactFormatError('%s: truncated artifact' % source)
        chunk = view[offset:offset + n]
        offset += n
        return chunk

    found = bytes(take(8))
    if found != magic:
        raise ArtifactFormatError('%s: bad magic %r, expected %r' % (source, found, magic))
    version, meta_len = struct.unpack('<HI', take(6))
    if version != FORMAT_VERSION:
        raise ArtifactFormatError('%s: unsupported format version %d (this build reads version %d)'
                                  % (source, version, FORMAT_VERSION))
    try:
        meta = json.loads(bytes(take(meta_len)).decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise ArtifactFormatError('%s: corrupt metadata record: %s' % (source, e))
    n_tensors, = struct.unpack('<I', take(4))

    table = []
    for _ in range(n_tensors):
        name_len, = struct.unpack('<H', take(2))
        name = bytes(take(name_len)).decode('utf-8')
        ndim, = struct.unpack('<B', take(1))
        shape = struct.unpack('<%dI' % ndim, take(4 * ndim)) if ndim > 0 else ()
        table.append((name, shape))

    tensors = OrderedDict()
    payload_start = offset
    for name, shape in table:
        count = int(np.prod(shape)) if len(shape) > 0 else 1
        raw = take(count * _PAYLOAD_DTYPE.itemsize)
        tensors[name] = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE).reshape(shape).copy()
    if offset != len(view):
        raise ArtifactFormatError('%s: %d trailing bytes after payload' % (source, len(view) - offset))
    return meta, tensors, offset - payload_start


def read_container(path, magic):
    """Returns (meta, OrderedDict name -> float64 ndarray, payload_nbytes)."""
    path = Path(path)
    if not path.exists():
        raise ArtifactFormatError('artifact not found: %s' % path)
    return decode_container(path.read_bytes(), magic, source=str(path))


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(path):
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except ValueError as e:
        raise ArtifactFormatError('%s: invalid JSON: %s' % (path, e))
