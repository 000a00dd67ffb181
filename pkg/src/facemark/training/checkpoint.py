"""Versioned binary checkpoints.

Layout (all integers little-endian):

    magic   4 bytes  b"FMCK"
    version u32      currently 1
    hlen    u64      byte length of the JSON header
    header  hlen     JSON: {"spec": <network spec dict>, "meta": {...}}
    tensors ...      parameters in canonical spec order, then the running
                     (mean, var) pair of every norm unit in order

    each tensor:
    dtype   u8       0 = float32, 1 = float64
    rank    u32
    shape   u32 * rank
    data    raw C-order little-endian bytes

The JSON header is serialized with sorted keys and fixed separators, so
save(load(x)) reproduces x byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..models import Network, NetworkSpec, count_params

MAGIC = b"FMCK"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: list[np.ndarray]
    buffers: list[np.ndarray]  # mean, var, mean, var, ... per norm unit
    meta: dict

    def __post_init__(self):
        n = sum(int(a.size) for a in self.params)
        expect = count_params(self.spec)
        if n != expect:
            raise ValueError(f"checkpoint holds {n} parameter scalars, spec counts {expect}")


def _write_tensor(fh, arr: np.ndarray) -> None:
    a = np.ascontiguousarray(arr)
    le = a.dtype.newbyteorder("<")
    code = _DTYPE_CODES.get(np.dtype(le))
    if code is None:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    fh.write(struct.pack("<B", code))
    fh.write(struct.pack("<I", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
    fh.write(a.astype(le, copy=False).tobytes())


def _read_tensor(fh) -> np.ndarray:
    code = struct.unpack("<B", _read_exact(fh, 1))[0]
    if code not in _CODE_DTYPES:
        raise ValueError(f"unknown tensor dtype code {code}")
    rank = struct.unpack("<I", _read_exact(fh, 4))[0]
    shape = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    data = _read_exact(fh, count * dtype.itemsize)
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"checkpoint truncated: wanted {n} bytes, got {len(data)}")
    return data


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    header = json.dumps({"spec": ckpt.spec.to_dict(), "meta": ckpt.meta},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in ckpt.params:
            _write_tensor(fh, arr)
        for arr in ckpt.buffers:
            _write_tensor(fh, arr)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != MAGIC:
            raise ValueError(f"{path} is not a checkpoint (bad magic)")
        version = struct.unpack("<I", _read_exact(fh, 4))[0]
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        hlen = struct.unpack("<Q", _read_exact(fh, 8))[0]
        header = json.loads(_read_exact(fh, hlen))
        spec = NetworkSpec.from_dict(header["spec"])
        norm_units = sum(1 for u in spec.iter_units() if u.norm)
        param_tensors = sum(
            1 + (1 if u.bias else 0) + (2 if u.norm else 0)
            for u in spec.iter_units() if u.kind != "maxpool")
        params = [_read_tensor(fh) for _ in range(param_tensors)]
        buffers = [_read_tensor(fh) for _ in range(2 * norm_units)]
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after expected tensors")
    return Checkpoint(spec=spec, params=params, buffers=buffers, meta=header["meta"])


def checkpoint_from_network(net: Network, meta: dict) -> Checkpoint:
    params = [p.data.copy() for p in net.params]
    buffers = []
    for state in net.buffers:
        buffers.append(state.mean.copy())
        buffers.append(state.var.copy())
    return Checkpoint(spec=net.spec, params=params, buffers=buffers, meta=dict(meta))


def network_from_checkpoint(ckpt: Checkpoint) -> Network:
    """Rebuild a Network and load stored values.  Array dtypes are taken from
    the checkpoint, overriding the ambient default."""
    net = Network(ckpt.spec, rng=np.random.default_rng(0))
    if len(net.params) != len(ckpt.params):
        raise ValueError(f"checkpoint has {len(ckpt.params)} tensors, network expects {len(net.params)}")
    for tensor, arr in zip(net.params, ckpt.params):
        if tensor.data.shape != arr.shape:
            raise ValueError(f"shape mismatch: checkpoint {arr.shape} vs network {tensor.data.shape}")
        tensor.data = arr.copy()
    stored = ckpt.buffers
    if len(stored) != 2 * len(net.buffers):
        raise ValueError(f"checkpoint has {len(stored)} buffer tensors, network expects {2 * len(net.buffers)}")
    for i, state in enumerate(net.buffers):
        state.mean = stored[2 * i].copy()
        state.var = stored[2 * i + 1].copy()
    return net
