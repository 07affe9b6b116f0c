"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"TNCNCKPT"            8-byte magic
    uint32 version         currently 1
    uint64 header_len
    header                 UTF-8 JSON, sorted keys, no whitespace:
                           {"config": ..., "id_map_hash": ..., "tensors":
                            [{"name", "dtype", "shape", "offset", "nbytes"}, ...]}
    payload                raw little-endian tensor bytes, in header order

Nothing time- or host-dependent is written, so equal parameters give
byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np
import torch

MAGIC = b"TNCNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dump_checkpoint(model: torch.nn.Module, config: dict, id_map_hash: str) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "id_map_hash": id_map_hash, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def load_checkpoint(data: bytes) -> tuple[dict, dict, str]:
    """Returns ``(state_dict, config, id_map_hash)``."""
    if data[:8] != MAGIC:
        raise CheckpointError("not a TNCN checkpoint")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen])
    base = 20 + hlen
    state = {}
    for e in header["tensors"]:
        buf = data[base + e["offset"]: base + e["offset"] + e["nbytes"]]
        arr = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
        state[e["name"]] = torch.from_numpy(arr)
    return state, header["config"], header["id_map_hash"]
