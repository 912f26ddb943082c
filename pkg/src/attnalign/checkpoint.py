"""Versioned parameter checkpoints.

A checkpoint is one JSON document: format tag, version, the model
config, and each parameter as name/shape plus base64 of its raw
little-endian float64 bytes.  Values round-trip bit-exactly, and the
serialization is deterministic (sorted keys, fixed separators) so equal
states produce byte-identical files.
"""

import base64
import json

import numpy as np

from attnalign.errors import ParseError

FORMAT_TAG = "attnalign-checkpoint"
FORMAT_VERSION = 1


def checkpoint_bytes(config, params):
    doc = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "config": config,
        "parameters": [
            {
                "name": p.name,
                "shape": list(p.data.shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(p.data, dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for p in params
        ],
    }
    return (json.dumps(doc, sort_keys=True, separators=(",", ":"))
            + "\n").encode("utf-8")


def save_checkpoint(path, config, params):
    """Write config plus an iterable of Parameters to path."""
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(config, params))


def load_checkpoint(path):
    """Read a checkpoint; returns (config, {name: float64 array})."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"not a JSON checkpoint: {exc}", path=path)
    if doc.get("format") != FORMAT_TAG:
        raise ParseError("missing checkpoint format tag", path=path)
    if doc.get("version") != FORMAT_VERSION:
        raise ParseError(
            f"unsupported checkpoint version {doc.get('version')}",
            path=path)
    values = {}
    for entry in doc["parameters"]:
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        values[entry["name"]] = arr.reshape(entry["shape"])
    return doc["config"], values
