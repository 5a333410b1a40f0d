"""Checkpoint serialization.

Layout: an 8-byte little-endian unsigned length, a UTF-8 JSON manifest of
that length, then the concatenated raw little-endian float32 tensor data.
The manifest records the format version ("MCQA-CKPT-1"), the encoder
configuration, the model head settings, the vocabulary surface tokens, and
one entry per tensor with its name, shape, and byte offset into the data
block."""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch

from .data import Vocab
from .encoder import EncoderConfig
from .errors import CheckpointError
from .model import MCQAModel, PoolingKind, Scheme

FORMAT_VERSION = "MCQA-CKPT-1"
_LEN = struct.Struct("<Q")


def save_checkpoint(path: Union[str, Path], model: MCQAModel, vocab: Optional[Vocab] = None) -> None:
    tensors = []
    blobs = []
    offset = 0
    for name, p in model.state_dict().items():
        arr = p.detach().cpu().to(torch.float32).numpy()
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": FORMAT_VERSION,
        "encoder_config": dataclasses.asdict(model.config),
        "model": {
            "scheme": model.scheme.value,
            "pooling": model.pooling.value,
            "gate": model.gate is not None,
            "qa_concat": model.qa_concat,
            "gate_heads": model.gate_heads,
        },
        "vocab": list(vocab.surface_tokens()) if vocab is not None else None,
        "tensors": tensors,
    }
    payload = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_LEN.pack(len(payload)))
        fh.write(payload)
        for raw in blobs:
            fh.write(raw)


def _read_manifest(blob: bytes) -> tuple[dict, bytes]:
    if len(blob) < _LEN.size:
        raise CheckpointError("file too short for manifest length header")
    (length,) = _LEN.unpack_from(blob)
    if len(blob) < _LEN.size + length:
        raise CheckpointError("truncated manifest")
    try:
        manifest = json.loads(blob[_LEN.size : _LEN.size + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported format {manifest.get('format')!r}" if isinstance(manifest, dict)
            else "manifest must be a JSON object"
        )
    return manifest, blob[_LEN.size + length :]


def load_checkpoint(path: Union[str, Path]) -> tuple[MCQAModel, Optional[Vocab]]:
    """Rebuild a model (and its vocabulary, when stored) from ``path``."""
    blob = Path(path).read_bytes()
    manifest, data = _read_manifest(blob)
    try:
        config = EncoderConfig(**manifest["encoder_config"])
        meta = manifest["model"]
        model = MCQAModel(
            config,
            scheme=Scheme(meta["scheme"]),
            pooling=PoolingKind(meta["pooling"]),
            gate=bool(meta["gate"]),
            qa_concat=bool(meta["qa_concat"]),
            gate_heads=int(meta["gate_heads"]),
        )
        entries = manifest["tensors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"bad manifest field: {exc}") from exc

    state = model.state_dict()
    if {e["name"] for e in entries} != set(state):
        raise CheckpointError("tensor names do not match the reconstructed model")
    new_state = {}
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        stop = start + 4 * count
        if stop > len(data):
            raise CheckpointError(f"tensor {entry['name']!r} runs past end of file")
        arr = np.frombuffer(data[start:stop], dtype="<f4").reshape(shape)
        want = tuple(state[entry["name"]].shape)
        if shape != want:
            raise CheckpointError(
                f"tensor {entry['name']!r} has shape {shape}, expected {want}"
            )
        new_state[entry["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(new_state)
    model.trained = True

    vocab = None
    if manifest.get("vocab") is not None:
        vocab = Vocab()
        for token in manifest["vocab"]:
            vocab.add(token)
        if vocab.size != config.vocab_size:
            raise CheckpointError(
                f"stored vocabulary size {vocab.size} != encoder vocab_size {config.vocab_size}"
            )
    return model, vocab
