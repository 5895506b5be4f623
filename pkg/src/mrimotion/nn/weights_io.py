"""Weight persistence: a JSON manifest plus a flat binary payload.

The manifest records the network config, the layer layout with shapes and
byte offsets, and the training seed; the payload holds every block as
32-bit little-endian floats in manifest order (weights, then biases, per
layer).  Offsets are explicit so the payload can be mapped or spot-read
without loading the manifest's producer.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from .model import NetworkConfig, NetworkParameters

_DTYPE = "<f4"


def save_weights(p: NetworkParameters, basepath) -> tuple[Path, Path]:
    """Write {basepath}.json and {basepath}.bin; returns both paths."""
    basepath = Path(basepath)
    basepath.parent.mkdir(parents=True, exist_ok=True)
    manifest_path = basepath.with_suffix(".json")
    payload_path = basepath.with_suffix(".bin")

    layer_entries = []
    chunks = []
    offset = 0
    for lid, w, b in zip(p.layout, p.weights, p.biases):
        w32 = np.ascontiguousarray(w, dtype=_DTYPE)
        b32 = np.ascontiguousarray(b, dtype=_DTYPE)
        layer_entries.append({
            "id": lid,
            "weight_shape": list(w.shape),
            "bias_shape": list(b.shape),
            "weight_offset": offset,
            "bias_offset": offset + w32.nbytes,
        })
        offset += w32.nbytes + b32.nbytes
        chunks.append(w32.tobytes())
        chunks.append(b32.tobytes())

    manifest = {
        "config": asdict(p.config),
        "seed": p.seed,
        "value_type": "float32 little-endian",
        "data_file": payload_path.name,
        "total_bytes": offset,
        "layers": layer_entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    payload_path.write_bytes(b"".join(chunks))
    return manifest_path, payload_path


def load_weights(basepath) -> NetworkParameters:
    basepath = Path(basepath)
    manifest = json.loads(basepath.with_suffix(".json").read_text())
    payload = (basepath.parent / manifest["data_file"]).read_bytes()
    if len(payload) != manifest["total_bytes"]:
        raise ValidationError(
            f"payload is {len(payload)} bytes, manifest says {manifest['total_bytes']}")

    cfg_doc = dict(manifest["config"])
    cfg_doc["channels"] = tuple(cfg_doc["channels"])
    cfg = NetworkConfig(**cfg_doc)
    weights, biases, layout = [], [], []
    for entry in manifest["layers"]:
        wshape = tuple(entry["weight_shape"])
        bshape = tuple(entry["bias_shape"])
        w = np.frombuffer(payload, dtype=_DTYPE, count=int(np.prod(wshape)),
                          offset=entry["weight_offset"]).reshape(wshape)
        b = np.frombuffer(payload, dtype=_DTYPE, count=int(np.prod(bshape)),
                          offset=entry["bias_offset"]).reshape(bshape)
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
        layout.append(entry["id"])
    return NetworkParameters(cfg, weights, biases, tuple(layout), seed=manifest["seed"])
