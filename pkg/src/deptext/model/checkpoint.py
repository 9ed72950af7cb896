"""Checkpoint files: a JSON manifest next to a raw little-endian float32 payload."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .network import InitSpec, ModelConfig

MANIFEST = "manifest.json"
PAYLOAD = "params.bin"


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    init: InitSpec = field(default_factory=InitSpec)
    seed: int = 0
    epoch: int = 0
    cv_loss: float = float("nan")
    extra: dict = field(default_factory=dict)


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    """Write ``path/manifest.json`` and ``path/params.bin``; ``path`` is a directory."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors, chunks, offset = [], [], 0
    for name, arr in ckpt.params.items():
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(buf)})
        chunks.append(buf)
        offset += len(buf)
    manifest = {
        "config": ckpt.config.as_dict(),
        "init": ckpt.init.as_dict(),
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "cv_loss": ckpt.cv_loss,
        "dtype": "f32",
        "byte_order": "little",
        "payload_bytes": offset,
        "tensors": tensors,
        "extra": ckpt.extra,
    }
    _atomic_write(path / PAYLOAD, b"".join(chunks))
    _atomic_write(path / MANIFEST, json.dumps(manifest, indent=1).encode())
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
        payload = (path / PAYLOAD).read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"incomplete checkpoint at {path}: {e}") from None
    if len(payload) != manifest["payload_bytes"]:
        raise CheckpointError(
            f"payload is {len(payload)} bytes, manifest expects {manifest['payload_bytes']}"
        )
    params = {}
    for t in manifest["tensors"]:
        arr = np.frombuffer(payload, dtype="<f4", count=t["nbytes"] // 4, offset=t["offset"])
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float32)
    return Checkpoint(
        config=ModelConfig(**manifest["config"]),
        params=params,
        init=InitSpec(**manifest["init"]),
        seed=manifest["seed"],
        epoch=manifest["epoch"],
        cv_loss=manifest["cv_loss"],
        extra=manifest.get("extra", {}),
    )
