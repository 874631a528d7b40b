"""Single-file model checkpoints.

Byte layout (all integers little-endian):

    offset 0   magic, 8 bytes: b"CRFAECKP"
    offset 8   format version, uint32
    offset 12  header length N, uint64
    offset 20  header, N bytes of UTF-8 JSON
    offset 20+N parameter payload: each parameter's raw array bytes,
               little-endian, concatenated in the order listed under
               header["params"]

The header is self-describing: model and feature configuration, the full
vocabulary (plus its SHA-256 over canonical JSON), the compiled gazetteer
token lists, and per-parameter name / shape / dtype / byte offsets into the
payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .features import FeatureConfig, Gazetteer
from .model import ModelConfig, Tagger

MAGIC = b"CRFAECKP"
FORMAT_VERSION = 1

_DTYPE_TAGS = {"float32": "<f4", "float64": "<f8"}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def vocab_sha256(vocab: Vocabulary) -> str:
    payload = json.dumps(vocab.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_checkpoint(path, model: Tagger, feat_config: FeatureConfig, gazetteer: Gazetteer | None = None) -> None:
    dtype_name = np.dtype(model.dtype).name
    if dtype_name not in _DTYPE_TAGS:
        raise ValueError(f"unsupported checkpoint dtype {dtype_name}")
    tag = _DTYPE_TAGS[dtype_name]

    entries = []
    blobs = []
    offset = 0
    for name, value in model.params.items():
        raw = np.ascontiguousarray(value.data, dtype=np.dtype(tag)).tobytes()
        entries.append(
            {"name": name, "shape": list(value.shape), "dtype": tag, "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)

    if gazetteer is None:
        gazetteer = Gazetteer(frozenset(), frozenset())
    header = {
        "format": "crfae-checkpoint",
        "version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "feature_config": feat_config.to_dict(),
        "feat_dims": model.feat_dims,
        "dtype": dtype_name,
        "vocab": model.vocab.to_dict(),
        "vocab_sha256": vocab_sha256(model.vocab),
        "gazetteer": {
            "person": sorted(gazetteer.person_tokens),
            "location": sorted(gazetteer.location_tokens),
        },
        "params": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[Tagger, FeatureConfig, Gazetteer]:
    """Rebuild the tagger; raises on magic/version/hash mismatches."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic {data[:8]!r})")
    (version,) = struct.unpack("<I", data[8:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", data[12:20])
    header = json.loads(data[20 : 20 + header_len].decode("utf-8"))

    vocab = Vocabulary.from_dict(header["vocab"])
    expected = header["vocab_sha256"]
    actual = vocab_sha256(vocab)
    if actual != expected:
        raise ValueError(f"{path}: vocabulary hash mismatch: stored {expected}, recomputed {actual}")

    fc_dict = dict(header["feature_config"])
    threshold = fc_dict.pop("gazetteer_threshold")
    feat_config = FeatureConfig(gazetteer_threshold=threshold, **fc_dict)
    config = ModelConfig.from_dict(header["model_config"])
    dtype = np.dtype(header["dtype"])
    model = Tagger(
        config,
        vocab,
        {k: int(v) for k, v in header["feat_dims"].items()},
        rng=np.random.default_rng(0),
        dtype=dtype,
    )

    payload = data[20 + header_len :]
    state = {}
    for entry in header["params"]:
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        arr = np.frombuffer(payload[lo:hi], dtype=np.dtype(entry["dtype"]))
        state[entry["name"]] = arr.reshape(entry["shape"])
    model.params.load_state_dict(state)
    gaz = Gazetteer(
        person_tokens=frozenset(header["gazetteer"]["person"]),
        location_tokens=frozenset(header["gazetteer"]["location"]),
    )
    return model, feat_config, gaz
