"""Binary checkpoint format.

Layout (all integers little-endian unsigned 32-bit unless noted)::

    magic   4 bytes  b"3DPN"
    version u32      format version (currently 1)
    tlen    u32      topology JSON byte length, then the JSON (UTF-8)
    slen    u32      training-state JSON byte length, then the JSON
    arrays  for each parameter array, in layer order, weights then biases:
                u8 ndim, ndim x u32 dims, raw little-endian float32 data
    crc     u32      CRC-32 of every preceding byte

The topology JSON is the network's layer description; the training state
holds epoch, learning rate and the RNG state so a run can resume exactly.
``load(save(net))`` restores parameters bit-exactly, hence identical
forward outputs.  Endianness is fixed little-endian regardless of host.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .layers import Network

__all__ = ["CHECKPOINT_VERSION", "CheckpointError", "save_checkpoint",
           "load_checkpoint"]

MAGIC = b"3DPN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Corrupt, incompatible or truncated checkpoint."""


def save_checkpoint(path, net: Network, train_state: dict | None = None):
    """Write ``net`` (and optional training state) to ``path``."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    topo = json.dumps(net.topology, sort_keys=True).encode()
    blob += struct.pack("<I", len(topo)) + topo
    state = json.dumps(train_state or {}, sort_keys=True).encode()
    blob += struct.pack("<I", len(state)) + state
    for layer in net.param_layers():
        for arr in (layer.weights, layer.biases):
            arr32 = np.ascontiguousarray(arr, dtype="<f4")
            blob += struct.pack("<B", arr32.ndim)
            blob += struct.pack(f"<{arr32.ndim}I", *arr32.shape)
            blob += arr32.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path, dtype=np.float32):
    """Read a checkpoint; returns ``(network, train_state)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a 3DPN checkpoint")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt file)")
    pos = 4
    version = struct.unpack_from("<I", blob, pos)[0]
    pos += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    tlen = struct.unpack_from("<I", blob, pos)[0]
    pos += 4
    topology = json.loads(blob[pos:pos + tlen].decode())
    pos += tlen
    slen = struct.unpack_from("<I", blob, pos)[0]
    pos += 4
    train_state = json.loads(blob[pos:pos + slen].decode())
    pos += slen

    net = Network(topology, rng=None, dtype=dtype)
    arrays = []
    for layer in net.param_layers():
        pair = []
        for expected in (layer.weights.shape, layer.biases.shape):
            ndim = struct.unpack_from("<B", blob, pos)[0]
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            if tuple(dims) != tuple(expected):
                raise CheckpointError(
                    f"{path}: {layer.name} stores shape {dims}, topology "
                    f"expects {expected}"
                )
            count = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos
                                ).reshape(dims)
            pos += 4 * count
            pair.append(arr)
        arrays.append(tuple(pair))
    if pos != len(blob) - 4:
        raise CheckpointError(f"{path}: trailing bytes after parameters")
    net.set_params_from(arrays)
    return net, train_state
