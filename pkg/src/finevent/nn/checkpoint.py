"""Versioned binary checkpoint container.

Layout (all little-endian):

    bytes 0-7    magic b"FEVCKPT1"
    bytes 8-11   uint32 header length N
    bytes 12-..  N bytes of UTF-8 JSON header
    remainder    raw float64 parameter payload

The JSON header carries ``format_version``, a ``config`` echo, the
``vocab`` list, the ``labels`` alphabet, optional ``scaler`` bounds, and a
``params`` list of {name, shape} in creation order.  The payload is each
parameter's row-major float64 bytes concatenated in that order, so the file
is byte-identical across platforms for identical contents.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .params import ParamStore

MAGIC = b"FEVCKPT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: dict
    vocab: list[str]
    labels: list[str]
    scaler: dict | None
    params: dict[str, np.ndarray]


def save_checkpoint(
    path: str,
    config: dict,
    vocab: list[str],
    labels: list[str],
    scaler: dict | None,
    store: ParamStore,
) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "vocab": vocab,
        "labels": labels,
        "scaler": scaler,
        "params": [
            {"name": name, "shape": list(p.data.shape)} for name, p in store.items()
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, p in store.items():
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported version {header.get('format_version')}")
        params: dict[str, np.ndarray] = {}
        for entry in header["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise CheckpointError(f"truncated payload at {entry['name']!r}")
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    return Checkpoint(
        config=header["config"],
        vocab=header["vocab"],
        labels=header["labels"],
        scaler=header.get("scaler"),
        params=params,
    )
