"""Versioned binary checkpoint container.

Layout: 7-byte magic, 1-byte format version, little-endian uint64 header
length, UTF-8 JSON header, concatenated float64 tensor payload (C order, in
manifest order), then a SHA-256 digest of everything before it. The header
records dims, the config echo, the tensor manifest, optimizer step counts,
and the training log, so a load restores training state bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct

import numpy as np

from .errors import ChecksumError, ParseError, VersionError
from .memory import Memory
from .model import PARAM_NAMES, ModelParams
from .numkernel import AdamState
from .trainer import TrainConfig, TrainerState, TrainLog

MAGIC = b"ARNCKPT"
FORMAT_VERSION = 1


def _tensor_manifest(state: TrainerState) -> list[tuple[str, np.ndarray]]:
    tensors: list[tuple[str, np.ndarray]] = []
    for name in PARAM_NAMES:
        tensors.append((f"params.{name}", getattr(state.params, name)))
    for name in sorted(state.adam):
        tensors.append((f"adam.{name}.m", state.adam[name].first_moment))
        tensors.append((f"adam.{name}.v", state.adam[name].second_moment))
    if state.memory is not None:
        tensors.append(("memory.prototypes", state.memory.prototypes))
        tensors.append(("memory.soft_labels", state.memory.soft_labels))
        tensors.append(("memory.cached_latents", state.memory.cached_latents))
        tensors.append(("memory.cached_preds", state.memory.cached_preds))
    if state.elr_targets is not None:
        tensors.append(("elr_targets", state.elr_targets))
    return tensors


def save_checkpoint(path, state: TrainerState) -> None:
    """Serialize a full trainer state (params, memory, optimizer, log)."""
    tensors = _tensor_manifest(state)
    header = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(state.config),
        "epochs_done": state.epochs_done,
        "has_memory": state.memory is not None,
        "cache_capacity": state.memory.cache_capacity if state.memory is not None else 0,
        "adam_steps": {name: st.step_count for name, st in state.adam.items()},
        "adam_hparams": {
            name: [st.beta1, st.beta2, st.eps] for name, st in state.adam.items()
        },
        "log": state.log.rows(),
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in tensors
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(arr, dtype=np.float64).tobytes() for _, arr in tensors)
    body = MAGIC + struct.pack("<B", FORMAT_VERSION)
    body += struct.pack("<Q", len(header_bytes)) + header_bytes + payload
    digest = hashlib.sha256(body).digest()
    with open(path, "wb") as fh:
        fh.write(body + digest)


def load_checkpoint(path) -> TrainerState:
    """Load a checkpoint, verifying magic, version, and checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 1 + 8 + 32:
        raise ChecksumError("checkpoint file is truncated")
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)")
    version = blob[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch; file corrupted")

    offset = len(MAGIC) + 1
    (header_len,) = struct.unpack_from("<Q", body, offset)
    offset += 8
    try:
        header = json.loads(body[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"checkpoint header unreadable: {exc}") from None
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        offset += nbytes

    config = TrainConfig(**header["config"])
    params = ModelParams(*[arrays[f"params.{name}"] for name in PARAM_NAMES])
    adam: dict[str, AdamState] = {}
    for name, steps in header["adam_steps"].items():
        b1, b2, eps = header["adam_hparams"][name]
        adam[name] = AdamState(
            first_moment=arrays[f"adam.{name}.m"],
            second_moment=arrays[f"adam.{name}.v"],
            step_count=int(steps),
            beta1=b1,
            beta2=b2,
            eps=eps,
        )
    memory = None
    if header["has_memory"]:
        memory = Memory(
            prototypes=arrays["memory.prototypes"],
            soft_labels=arrays["memory.soft_labels"],
            cache_capacity=int(header["cache_capacity"]),
            rng=None,
            cached_latents=arrays["memory.cached_latents"],
            cached_preds=arrays["memory.cached_preds"],
        )
        from .numkernel import seeded_rng

        memory.rng = seeded_rng(config.seed, "memory-resume", header["epochs_done"])
    elr_targets = arrays.get("elr_targets")
    return TrainerState(
        config=config,
        params=params,
        memory=memory,
        log=TrainLog.from_rows(header["log"]),
        adam=adam,
        elr_targets=elr_targets,
        epochs_done=int(header["epochs_done"]),
    )
