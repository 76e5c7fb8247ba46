"""Flat-blob parameter serialization: float32 tensors + a JSON manifest.

The manifest lists (name, shape, offset, numel, sha256) per tensor in blob
order; loading verifies every checksum and names the corrupted tensor.
"""
from __future__ import annotations

import hashlib

import numpy as np
import torch


class ChecksumError(ValueError):
    pass


def state_to_blob(state: dict[str, torch.Tensor]) -> tuple[bytes, list[dict]]:
    blob = bytearray()
    manifest = []
    for name in sorted(state):
        array = state[name].detach().cpu().numpy().astype("<f4")
        raw = array.tobytes()
        manifest.append({
            "name": name,
            "shape": list(array.shape),
            "offset": len(blob),
            "numel": int(array.size),
            "sha256": hashlib.sha256(raw).hexdigest(),
        })
        blob += raw
    return bytes(blob), manifest


def blob_to_state(blob: bytes, manifest: list[dict],
                  dtype: torch.dtype = torch.float32) -> dict[str, torch.Tensor]:
    state = {}
    for entry in manifest:
        start = entry["offset"]
        raw = blob[start:start + entry["numel"] * 4]
        if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
            raise ChecksumError(f"checksum mismatch for tensor {entry['name']!r}")
        array = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
        state[entry["name"]] = torch.from_numpy(array).to(dtype)
    return state


def state_checksum(state: dict[str, torch.Tensor]) -> str:
    """Stable digest over all tensors; used to verify encoders stay frozen."""
    blob, _ = state_to_blob(state)
    return hashlib.sha256(blob).hexdigest()
