"""Teacher-forced training with AdamW, warmup, clipping, and accumulation."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .model import CausalTransformer, ModelError


class NonFiniteLossError(RuntimeError):
    """Training hit a NaN/Inf loss."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 8
    accum_steps: int = 1
    max_steps: int = 100
    warmup_steps: int = 10
    clip_norm: float = 1.0
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("learning_rate", "batch_size", "accum_steps", "max_steps", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if self.warmup_steps < 0:
            raise ModelError("warmup_steps must be >= 0")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def sequence_loss(
    model: CausalTransformer,
    tokens: torch.Tensor,
    prefix_lens: torch.Tensor,
    lengths: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean next-token cross-entropy over target positions only.

    A position p counts iff prefix_len <= p < length, i.e. the prediction
    targets the region after the conditioning prefix and before padding.
    """
    if tokens.dim() == 1:
        tokens = tokens.unsqueeze(0)
    b, s = tokens.shape
    prefix_lens = torch.as_tensor(prefix_lens, dtype=torch.long).reshape(b)
    if lengths is None:
        lengths = torch.full((b,), s, dtype=torch.long)
    else:
        lengths = torch.as_tensor(lengths, dtype=torch.long).reshape(b)
    if (prefix_lens >= lengths).any():
        raise ModelError("sequence is entirely prefix: no target positions to score")
    logits = model(tokens)
    positions = torch.arange(s)
    mask = (positions[None, :] >= prefix_lens[:, None]) & (positions[None, :] < lengths[:, None])
    mask = mask[:, 1:]  # position 0 is never a prediction target
    logprobs = F.log_softmax(logits[:, :-1], dim=-1)
    picked = logprobs.gather(-1, tokens[:, 1:].unsqueeze(-1)).squeeze(-1)
    return -(picked * mask).sum() / mask.sum()


def _lr_at(step: int, tc: TrainConfig) -> float:
    if tc.warmup_steps > 0 and step < tc.warmup_steps:
        return tc.learning_rate * (step + 1) / tc.warmup_steps
    return tc.learning_rate


def train(
    model: CausalTransformer,
    dataset: list[tuple[torch.Tensor, int, int]],
    tc: TrainConfig,
    log_path: str | Path | None = None,
) -> tuple[list[tuple[int, float, float]], torch.optim.Optimizer]:
    """Run max_steps AdamW updates; returns (history, optimizer).

    Dataset rows are (tokens, prefix_len, length). Batches cycle through a
    seeded shuffle; each step consumes accum_steps micro-batches of
    batch_size. History rows are (step, loss, lr), also written to
    log_path as `step<TAB>loss<TAB>lr` lines.
    """
    if not dataset:
        raise ModelError("empty dataset")
    max_len = max(int(t.shape[-1]) for t, _, _ in dataset)
    if max_len > model.config.max_seq_len:
        raise ModelError(f"dataset sequence length {max_len} exceeds max_seq_len")

    torch.manual_seed(tc.seed & 0x7FFFFFFFFFFFFFFF)
    optimizer = torch.optim.AdamW(
        model.parameters(),
        lr=tc.learning_rate,
        betas=(0.9, 0.999),
        weight_decay=tc.weight_decay,
    )
    order_rng = np.random.default_rng(tc.seed)
    order: list[int] = []

    def next_batch() -> list[int]:
        nonlocal order
        while len(order) < tc.batch_size:
            order += list(order_rng.permutation(len(dataset)))
        batch, order = order[: tc.batch_size], order[tc.batch_size :]
        return batch

    def collate(idxs: list[int]):
        rows = [dataset[i] for i in idxs]
        width = max(int(t.shape[-1]) for t, _, _ in rows)
        toks = torch.zeros((len(rows), width), dtype=torch.long)
        prefixes, lengths = [], []
        for r, (t, p, ln) in enumerate(rows):
            t = torch.as_tensor(t, dtype=torch.long).reshape(-1)
            toks[r, : len(t)] = t
            prefixes.append(p)
            lengths.append(ln)
        return toks, torch.tensor(prefixes), torch.tensor(lengths)

    history = []
    log_fh = open(log_path, "w") if log_path else None
    try:
        model.train()
        for step in range(tc.max_steps):
            lr = _lr_at(step, tc)
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad(set_to_none=True)
            step_loss = 0.0
            for _ in range(tc.accum_steps):
                toks, prefixes, lengths = collate(next_batch())
                loss = sequence_loss(model, toks, prefixes, lengths) / tc.accum_steps
                if not torch.isfinite(loss):
                    raise NonFiniteLossError(f"non-finite loss at step {step}: {loss.item()}")
                loss.backward()
                step_loss += loss.item()
            torch.nn.utils.clip_grad_norm_(model.parameters(), tc.clip_norm)
            optimizer.step()
            history.append((step, step_loss, lr))
            if log_fh:
                log_fh.write(f"{step}\t{step_loss:.6f}\t{lr:.8f}\n")
        model.eval()
    finally:
        if log_fh:
            log_fh.close()
    return history, optimizer
