"""Binary container for trained models.

Layout: 8-byte magic, big-endian uint16 format version, uint64 payload length,
32-byte SHA-256 of the payload, then the zlib-compressed JSON payload. Floats
go through ``repr`` in JSON, which round-trips float64 exactly.
"""

import hashlib
import json
import struct
import zlib

import numpy as np

from ._validation import ValidationError
from .diffnet import MlpParams, MlpSpec
from .gan import GanConfig, GanModel, TrainLogRecord
from .pipeline import FittedPipeline
from .table import atomic_write_bytes

MAGIC = b"TSYNGAN\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">8sHQ32s")


class ArtifactError(ValidationError):
    """Unreadable, corrupted or incompatible model artifact."""


def model_to_dict(model):
    return {
        "config": model.config.to_dict(),
        "pipeline": model.pipeline.to_dict(),
        "gen_spec": model.gen_spec.to_dict(),
        "gen_params": model.gen_params.to_dict(),
        "disc_spec": None if model.disc_spec is None else model.disc_spec.to_dict(),
        "disc_params": None if model.disc_params is None else model.disc_params.to_dict(),
        "pool": {"shape": list(model.pool.shape), "values": model.pool.ravel().tolist()},
        "log": [vars(r) for r in model.log],
    }


def model_from_dict(d):
    pool = np.array(d["pool"]["values"], dtype=np.float64).reshape(d["pool"]["shape"])
    has_disc = d["disc_spec"] is not None
    return GanModel(
        gen_params=MlpParams.from_dict(d["gen_params"]),
        gen_spec=MlpSpec.from_dict(d["gen_spec"]),
        pipeline=FittedPipeline.from_dict(d["pipeline"]),
        config=GanConfig.from_dict(d["config"]),
        pool=pool,
        log=[TrainLogRecord(**r) for r in d["log"]],
        disc_params=MlpParams.from_dict(d["disc_params"]) if has_disc else None,
        disc_spec=MlpSpec.from_dict(d["disc_spec"]) if has_disc else None,
    )


def dumps(model):
    text = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    payload = zlib.compress(text.encode("utf-8"), 9)
    digest = hashlib.sha256(payload).digest()
    return _HEADER.pack(MAGIC, FORMAT_VERSION, len(payload), digest) + payload


def loads(blob):
    if len(blob) < _HEADER.size:
        raise ArtifactError("artifact truncated: header incomplete")
    magic, version, length, digest = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ArtifactError("not a model artifact (bad magic header)")
    if version != FORMAT_VERSION:
        raise ArtifactError(
            f"artifact format version {version} is not supported (expected {FORMAT_VERSION})")
    payload = blob[_HEADER.size:]
    if len(payload) != length:
        raise ArtifactError(f"artifact truncated: payload {len(payload)} of {length} bytes")
    if hashlib.sha256(payload).digest() != digest:
        raise ArtifactError("artifact checksum mismatch (file corrupted)")
    try:
        return model_from_dict(json.loads(zlib.decompress(payload).decode("utf-8")))
    except (ValueError, KeyError, TypeError, zlib.error) as exc:
        raise ArtifactError(f"malformed artifact payload: {exc}") from exc


def save_artifact(model, path):
    atomic_write_bytes(path, dumps(model))


def load_artifact(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    return loads(blob)
