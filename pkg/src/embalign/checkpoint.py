"""Versioned checkpoint container for encoder and reranker parameters.

Layout: a single JSON document with

    format_version   mandatory integer (current: 1)
    kind             "encoder" | "reranker"
    rng_seed         seed the parameters were initialized/trained under
    config           free-form config snapshot (JSON object)
    fingerprint      optional run-config fingerprint (see pipeline)
    arrays           {name: {dtype, shape, data}} with data being base64 of
                     the little-endian raw bytes, so round-trips are
                     bit-identical
    checksum         sha256 over the canonical JSON of everything above

Truncation breaks the JSON parse, bit flips break the checksum; both
surface as CheckpointError rather than a crash.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import EncoderDims, EncoderParams

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointError(Exception):
    """Unreadable, corrupt, or wrong-version checkpoint."""


@dataclass
class Checkpoint:
    format_version: int
    kind: str
    arrays: dict[str, np.ndarray]
    config: dict
    rng_seed: int
    fingerprint: str | None = None


def _encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return {
        "dtype": str(arr.dtype),
        "shape": list(arr.shape),
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def _decode_array(spec: dict) -> np.ndarray:
    raw = base64.b64decode(spec["data"])
    arr = np.frombuffer(raw, dtype=np.dtype(spec["dtype"]).newbyteorder("<"))
    return arr.reshape(spec["shape"]).astype(np.dtype(spec["dtype"]), copy=True)


def _payload_checksum(payload: dict) -> str:
    body = {k: v for k, v in payload.items() if k != "checksum"}
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    payload = {
        "format_version": ckpt.format_version,
        "kind": ckpt.kind,
        "rng_seed": ckpt.rng_seed,
        "config": ckpt.config,
        "fingerprint": ckpt.fingerprint,
        "arrays": {name: _encode_array(arr) for name, arr in ckpt.arrays.items()},
    }
    payload["checksum"] = _payload_checksum(payload)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"checkpoint {path} is missing format_version")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format_version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    expected = payload.get("checksum")
    if expected is None or _payload_checksum(payload) != expected:
        raise CheckpointError(f"checkpoint {path} failed its checksum (corrupt or tampered)")
    try:
        arrays = {name: _decode_array(spec) for name, spec in payload["arrays"].items()}
        return Checkpoint(
            format_version=version,
            kind=payload["kind"],
            arrays=arrays,
            config=payload["config"],
            rng_seed=payload["rng_seed"],
            fingerprint=payload.get("fingerprint"),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointError(f"checkpoint {path} has a malformed body: {exc}") from exc


def encoder_checkpoint(params: EncoderParams, rng_seed: int, fingerprint: str | None = None) -> Checkpoint:
    return Checkpoint(
        format_version=CHECKPOINT_FORMAT_VERSION,
        kind="encoder",
        arrays=params.arrays(),
        config={
            "raw_dim": params.dims.raw_dim,
            "hidden_dim": params.dims.hidden_dim,
            "embed_dim": params.dims.embed_dim,
        },
        rng_seed=rng_seed,
        fingerprint=fingerprint,
    )


def encoder_from_checkpoint(ckpt: Checkpoint) -> EncoderParams:
    if ckpt.kind != "encoder":
        raise CheckpointError(f"expected an encoder checkpoint, got kind {ckpt.kind!r}")
    dims = EncoderDims(
        raw_dim=int(ckpt.config["raw_dim"]),
        hidden_dim=int(ckpt.config["hidden_dim"]),
        embed_dim=int(ckpt.config["embed_dim"]),
    )
    return EncoderParams(
        w1=ckpt.arrays["w1"], b1=ckpt.arrays["b1"], w2=ckpt.arrays["w2"], b2=ckpt.arrays["b2"], dims=dims
    )
