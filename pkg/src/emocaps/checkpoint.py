"""Checkpoint serialization: a JSON manifest next to a raw binary payload.

The manifest records the format version, every tensor's name/shape/dtype in
a fixed order, the hyperparameters, and the seed.  The payload is the
concatenation of each tensor's little-endian bytes in manifest order, so a
round trip is bit-identical and the files diff cleanly across runs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import MalformedHeader, TruncatedFile

FORMAT_VERSION = 1


def _manifest_path(stem) -> Path:
    return Path(str(stem) + ".json")


def _payload_path(stem) -> Path:
    return Path(str(stem) + ".bin")


def save_checkpoint(stem, tensors: dict[str, np.ndarray], hyperparameters: dict, seed: int) -> None:
    """Write stem.json + stem.bin; tensor order follows the dict order."""
    entries = []
    chunks = []
    for name, t in tensors.items():
        t = np.asarray(t)
        le = t.dtype.newbyteorder("<")
        entries.append({"name": name, "shape": list(t.shape), "dtype": le.str})
        chunks.append(np.ascontiguousarray(t, dtype=le).tobytes())
    manifest = {
        "version": FORMAT_VERSION,
        "tensors": entries,
        "hyperparameters": hyperparameters,
        "seed": seed,
    }
    _manifest_path(stem).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _payload_path(stem).write_bytes(b"".join(chunks))


def load_checkpoint(stem):
    """Read stem.json + stem.bin; returns (tensors, manifest).

    Tensor dict order follows the manifest.  Raises TruncatedFile when the
    payload is shorter than the manifest describes, MalformedHeader when the
    manifest is unreadable or disagrees with the payload size.
    """
    try:
        manifest = json.loads(_manifest_path(stem).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"unreadable manifest: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("version") != FORMAT_VERSION:
        raise MalformedHeader(f"unsupported manifest version: {manifest.get('version')!r}")
    if "tensors" not in manifest:
        raise MalformedHeader("manifest has no tensor list")

    payload = _payload_path(stem).read_bytes()
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        dtype = np.dtype(entry["dtype"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if offset + nbytes > len(payload):
            raise TruncatedFile(
                f"payload ends inside tensor {entry['name']!r} "
                f"(need {offset + nbytes} bytes, have {len(payload)})"
            )
        flat = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)), offset=offset)
        tensors[entry["name"]] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise MalformedHeader(
            f"payload has {len(payload) - offset} trailing bytes beyond the manifest"
        )
    return tensors, manifest
