"""Versioned checkpoint container.

Layout: magic ``S2CK``, little-endian u32 version, u64 header length, a JSON
header, then the concatenated raw tensor payloads. The header maps section
names to config dicts, plain scalars, and tensor descriptors (dtype, shape,
offset). Serialization is canonical (sorted keys, sorted tensor names), so
identical state produces identical bytes and save -> load -> save is a
fixed point.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .errors import IoFailure, VersionMismatch

MAGIC = b"S2CK"
VERSION = 1

_DTYPES = {
    "float32": torch.float32,
    "float64": torch.float64,
    "int64": torch.int64,
}


def _flatten(tree: Any, prefix: str, tensors: dict, scalars: dict):
    """Split a nested dict/list structure into named tensors and JSON scalars."""
    if isinstance(tree, torch.Tensor):
        tensors[prefix] = tree
    elif isinstance(tree, dict):
        if not all(isinstance(k, (str, int)) for k in tree):
            raise TypeError(f"checkpoint dict keys must be str or int at {prefix!r}")
        scalars.setdefault(prefix, {"__keys__": sorted(tree.keys(), key=str)})
        for k, v in tree.items():
            _flatten(v, f"{prefix}.{k}", tensors, scalars)
    elif isinstance(tree, (list, tuple)):
        scalars.setdefault(prefix, {"__len__": len(tree)})
        for i, v in enumerate(tree):
            _flatten(v, f"{prefix}.{i}", tensors, scalars)
    else:
        scalars[prefix] = tree


def _unflatten(prefix: str, tensors: dict, scalars: dict) -> Any:
    if prefix in tensors:
        return tensors[prefix]
    node = scalars.get(prefix)
    if isinstance(node, dict) and "__keys__" in node:
        return {k: _unflatten(f"{prefix}.{k}", tensors, scalars) for k in node["__keys__"]}
    if isinstance(node, dict) and "__len__" in node:
        return [_unflatten(f"{prefix}.{i}", tensors, scalars) for i in range(node["__len__"])]
    return node


def save_container(path, sections: dict[str, Any]) -> None:
    """Write ``sections`` (nested dicts of tensors/scalars) to ``path``."""
    tensors: dict[str, torch.Tensor] = {}
    scalars: dict[str, Any] = {}
    for name, tree in sections.items():
        _flatten(tree, name, tensors, scalars)

    index = {}
    offset = 0
    blobs = []
    for name in sorted(tensors):
        t = tensors[name].detach().cpu().contiguous()
        dtype = str(t.dtype).removeprefix("torch.")
        if dtype not in _DTYPES:
            t = t.to(torch.float64)
            dtype = "float64"
        blob = t.numpy().astype(f"<{np.dtype(dtype).char}" if dtype != "int64" else "<i8").tobytes()
        index[name] = {"dtype": dtype, "shape": list(t.shape), "offset": offset}
        blobs.append(blob)
        offset += len(blob)

    header = json.dumps(
        {"sections": sorted(sections), "scalars": scalars, "tensors": index},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    try:
        with open(Path(path), "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", VERSION, len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_container(path) -> dict[str, Any]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise VersionMismatch(f"{path}: bad checkpoint magic {blob[:4]!r}")
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != VERSION:
        raise VersionMismatch(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + header_len])
    payload = blob[16 + header_len:]

    tensors: dict[str, torch.Tensor] = {}
    for name, spec in header["tensors"].items():
        np_dtype = np.dtype(spec["dtype"]).newbyteorder("<")
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        arr = np.frombuffer(payload, dtype=np_dtype, count=count, offset=spec["offset"])
        arr = arr.reshape(spec["shape"]).copy()
        tensors[name] = torch.from_numpy(arr)

    return {name: _unflatten(name, tensors, header["scalars"]) for name in header["sections"]}
