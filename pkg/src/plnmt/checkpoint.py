"""Binary checkpoints: a magic line, a JSON metadata block, then raw tensors.

Layout::

    b"PLNMT1\\n"
    uint64 little-endian  length of the metadata JSON
    metadata JSON (UTF-8, sorted keys)
    tensor bytes, in metadata order, little-endian

The metadata records the model kind, its config, both vocabularies with
their digests, the payload checksum and every tensor's name, shape and dtype.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from plnmt.errors import CompatibilityError, FormatError
from plnmt.numcore.params import ParamStore
from plnmt.textpipe.vocab import Vocabulary

MAGIC = b"PLNMT1\n"
KINDS = ("code-model", "nmt")
_LEN = struct.Struct("<Q")


@dataclass
class Checkpoint:
    kind: str
    params: ParamStore
    config: dict[str, Any]
    src_vocab: Vocabulary | None = None
    tgt_vocab: Vocabulary | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def _vocab_meta(vocab: Vocabulary | None):
    if vocab is None:
        return None
    return {"digest": vocab.digest(), "tokens": list(vocab.itos)}


def encode_checkpoint(ckpt: Checkpoint, float64: bool | None = None) -> bytes:
    if ckpt.kind not in KINDS:
        raise FormatError(f"unknown checkpoint kind {ckpt.kind!r}")
    if float64 is None:
        float64 = np.dtype(ckpt.params.dtype) == np.float64
    dtype = np.dtype("<f8" if float64 else "<f4")
    tensors, chunks = [], []
    for name in sorted(ckpt.params.names()):
        arr = np.ascontiguousarray(ckpt.params[name], dtype=dtype)
        tensors.append({"name": name, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    payload = b"".join(chunks)
    meta = {
        "kind": ckpt.kind,
        "float64": bool(float64),
        "seed": ckpt.params.seed,
        "config": ckpt.config,
        "vocab": {"src": _vocab_meta(ckpt.src_vocab), "tgt": _vocab_meta(ckpt.tgt_vocab)},
        "extra": ckpt.extra,
        "tensors": tensors,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return MAGIC + _LEN.pack(len(blob)) + blob + payload


def save_checkpoint(ckpt: Checkpoint, path, float64: bool | None = None) -> None:
    data = encode_checkpoint(ckpt, float64)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _load_vocab(meta, which: str) -> Vocabulary | None:
    entry = meta["vocab"].get(which)
    if entry is None:
        return None
    vocab = Vocabulary(entry["tokens"])
    if vocab.digest() != entry["digest"]:
        raise FormatError(f"{which} vocabulary digest does not match its tokens")
    return vocab


def decode_checkpoint(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise FormatError("not a PLNMT1 checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(data) < pos + _LEN.size:
        raise FormatError("truncated checkpoint header")
    (n,) = _LEN.unpack_from(data, pos)
    pos += _LEN.size
    if len(data) < pos + n:
        raise FormatError("truncated checkpoint metadata")
    try:
        meta = json.loads(data[pos:pos + n].decode("utf-8"))
        kind, tensors = meta["kind"], meta["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"corrupt checkpoint metadata: {exc}") from None
    if kind not in KINDS:
        raise FormatError(f"unknown checkpoint kind {kind!r}")
    pos += n
    payload = data[pos:]
    dtype = np.dtype("<f8" if meta.get("float64") else "<f4")
    expected = sum(int(np.prod(t["shape"], dtype=np.int64)) for t in tensors) * dtype.itemsize
    if len(payload) != expected:
        raise FormatError(f"checkpoint payload is {len(payload)} bytes, expected {expected}")
    if hashlib.sha256(payload).hexdigest() != meta.get("payload_sha256"):
        raise FormatError("checkpoint payload checksum mismatch")
    arrays, offset = {}, 0
    for t in tensors:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=offset)
        arrays[t["name"]] = arr.reshape(t["shape"])
        offset += count * dtype.itemsize
    params = ParamStore.from_arrays(arrays, seed=meta.get("seed", 0), dtype=dtype.newbyteorder("="))
    return Checkpoint(kind, params, meta.get("config", {}), _load_vocab(meta, "src"),
                      _load_vocab(meta, "tgt"), meta.get("extra", {}))


def load_checkpoint(path, kind: str | None = None, src_vocab: Vocabulary | None = None,
                    tgt_vocab: Vocabulary | None = None) -> Checkpoint:
    """Read a checkpoint; optionally insist on its kind and on matching vocabularies."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    ckpt = decode_checkpoint(data)
    if kind is not None and ckpt.kind != kind:
        raise CompatibilityError(f"{path} holds a {ckpt.kind} checkpoint, expected {kind}")
    for label, want, have in (("source", src_vocab, ckpt.src_vocab),
                              ("target", tgt_vocab, ckpt.tgt_vocab)):
        if want is not None and (have is None or have.digest() != want.digest()):
            raise CompatibilityError(f"{label} vocabulary hash differs from the checkpoint's")
    return ckpt


# ---------------------------------------------------------------------- model adapters

def from_code_model(model) -> Checkpoint:
    return Checkpoint("code-model", model.params, model.config.to_dict(), model.src_vocab)


def from_nmt_model(model) -> Checkpoint:
    return Checkpoint("nmt", model.params, model.config.to_dict(), model.src_vocab,
                      model.tgt_vocab)


def to_code_model(ckpt: Checkpoint):
    from plnmt.codemodel import CodeConfig, CodeModel
    if ckpt.kind != "code-model":
        raise CompatibilityError(f"expected a code-model checkpoint, got {ckpt.kind}")
    return CodeModel(ckpt.params, CodeConfig(**ckpt.config), ckpt.src_vocab)


def to_nmt_model(ckpt: Checkpoint):
    from plnmt.nmt import NmtConfig, NmtModel
    if ckpt.kind != "nmt":
        raise CompatibilityError(f"expected an nmt checkpoint, got {ckpt.kind}")
    return NmtModel(ckpt.params, NmtConfig(**ckpt.config), ckpt.src_vocab, ckpt.tgt_vocab)
