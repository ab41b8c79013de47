"""Binary checkpoints: parameters, AdamW moments, step count, config hash.

Layout: magic "ACKP", version u32, step u64, fingerprint (32 raw sha256
bytes), tensor count u32, then per tensor: name length u16 + utf-8 name,
ndim u8, dims as u64, data as little-endian float32. Everything LE.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .model import CausalTransformer, ModelError, TransformerConfig

MAGIC = b"ACKP"
VERSION = 1


class CheckpointError(RuntimeError):
    """Corrupt file or mismatched configuration."""


def config_fingerprint(config: TransformerConfig, extra: dict | None = None) -> bytes:
    """sha256 over the model config plus any companion dicts (vocab layout)."""
    payload = {"config": config.to_dict(), "extra": extra or {}}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).digest()


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    step: int
    fingerprint: bytes

    def param_tensors(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors.items() if not k.startswith("opt.")}


def _optimizer_tensors(model: CausalTransformer, optimizer: torch.optim.Optimizer) -> dict[str, np.ndarray]:
    names = [name for name, _ in model.named_parameters()]
    params = [p for _, p in model.named_parameters()]
    out: dict[str, np.ndarray] = {}
    for name, p in zip(names, params):
        state = optimizer.state.get(p)
        if not state:
            continue
        out[f"opt.exp_avg.{name}"] = state["exp_avg"].detach().cpu().numpy()
        out[f"opt.exp_avg_sq.{name}"] = state["exp_avg_sq"].detach().cpu().numpy()
        out[f"opt.step.{name}"] = np.asarray(float(state["step"]), dtype=np.float32)
    return out


def checkpoint_from(
    model: CausalTransformer,
    optimizer: torch.optim.Optimizer | None,
    step: int,
    fingerprint: bytes,
) -> Checkpoint:
    tensors = {
        name: p.detach().cpu().to(torch.float32).numpy()
        for name, p in model.named_parameters()
    }
    if optimizer is not None:
        tensors.update(_optimizer_tensors(model, optimizer))
    return Checkpoint(tensors, step, fingerprint)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    if len(ckpt.fingerprint) != 32:
        raise CheckpointError("fingerprint must be 32 bytes (sha256)")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, ckpt.step))
        fh.write(ckpt.fingerprint)
        fh.write(struct.pack("<I", len(ckpt.tensors)))
        for name in sorted(ckpt.tensors):
            # ascontiguousarray would promote 0-dim scalars to shape (1,)
            arr = np.asarray(ckpt.tensors[name], dtype="<f4")
            if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape) if arr.ndim else b"")
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path, expected_fingerprint: bytes | None = None) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, step = struct.unpack_from("<IQ", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    fingerprint = data[16:48]
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise CheckpointError(f"{path}: config fingerprint mismatch")
    (n_tensors,) = struct.unpack_from("<I", data, 48)
    offset = 52
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", data, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, offset) if ndim else ()
        offset += 8 * ndim
        count = int(np.prod(shape)) if shape else 1
        if offset + 4 * count > len(data):
            raise CheckpointError(f"{path}: truncated tensor data for {name!r}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        tensors[name] = arr.copy()
    if offset != len(data):
        raise CheckpointError(f"{path}: trailing or missing bytes")
    return Checkpoint(tensors, step, fingerprint)


def apply_checkpoint(ckpt: Checkpoint, model: CausalTransformer, optimizer: torch.optim.Optimizer | None = None) -> None:
    """Copy checkpoint tensors into a built model (and optimizer moments)."""
    params = dict(model.named_parameters())
    saved = ckpt.param_tensors()
    if set(saved) != set(params):
        missing = set(params) ^ set(saved)
        raise CheckpointError(f"parameter name mismatch: {sorted(missing)[:4]}")
    with torch.no_grad():
        for name, p in params.items():
            arr = saved[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(f"{name}: shape {arr.shape} != {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr.copy()).to(p.dtype))
    if optimizer is not None:
        for name, p in params.items():
            key = f"opt.exp_avg.{name}"
            if key not in ckpt.tensors:
                continue
            state = optimizer.state.setdefault(p, {})
            state["exp_avg"] = torch.from_numpy(ckpt.tensors[key].copy()).to(p.dtype)
            state["exp_avg_sq"] = torch.from_numpy(ckpt.tensors[f"opt.exp_avg_sq.{name}"].copy()).to(p.dtype)
            state["step"] = torch.tensor(float(ckpt.tensors[f"opt.step.{name}"]))
