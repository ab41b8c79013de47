"""Autoregressive sampling with temperature, top-k, and id masking."""

from __future__ import annotations

from typing import Callable, Sequence

import torch
import torch.nn.functional as F

from .model import CausalTransformer, ModelError


def sample(
    model: CausalTransformer,
    prefix: Sequence[int] | torch.Tensor,
    max_new: int,
    temperature: float = 0.9,
    top_k: int = 50,
    seed: int = 0,
    stop_id: int | None = None,
    allowed_ids: Callable[[int], Sequence[int]] | None = None,
    return_logprobs: bool = False,
):
    """Sample up to max_new continuation ids after the prefix.

    temperature 0 (or top_k 1) is argmax. `allowed_ids(step)` restricts
    step's candidates; everything else is masked to -inf before both
    sampling and scoring. A produced stop_id ends generation and is kept
    in the output. With return_logprobs the per-step log-probability of
    each chosen id under the masked, temperature-1 distribution is
    returned alongside (that fixed reference scale keeps scores from two
    differently-tempered stages additive).
    """
    if temperature < 0:
        raise ModelError("temperature must be >= 0")
    if top_k < 1:
        raise ModelError("top_k must be >= 1")
    prefix = torch.as_tensor(prefix, dtype=torch.long).reshape(-1)
    if len(prefix) < 1:
        raise ModelError("prefix must be nonempty")
    if len(prefix) + max_new > model.config.max_seq_len:
        raise ModelError(
            f"prefix {len(prefix)} + max_new {max_new} exceeds max_seq_len {model.config.max_seq_len}"
        )
    gen = torch.Generator().manual_seed(seed & 0x7FFFFFFFFFFFFFFF)
    model.eval()
    out: list[int] = []
    logprobs: list[float] = []
    with torch.no_grad():
        logits, cache = model(prefix.unsqueeze(0), return_cache=True)
        step_logits = logits[0, -1]
        for step in range(max_new):
            masked = step_logits.float()
            if allowed_ids is not None:
                keep = torch.as_tensor(list(allowed_ids(step)), dtype=torch.long)
                mask = torch.full_like(masked, float("-inf"))
                mask[keep] = 0.0
                masked = masked + mask
            if return_logprobs:
                ref = F.log_softmax(masked, dim=-1)
            if temperature == 0.0 or top_k == 1:
                choice = int(torch.argmax(masked))
            else:
                scaled = masked / temperature
                k = min(top_k, scaled.shape[-1])
                vals, idx = torch.topk(scaled, k)
                probs = F.softmax(vals, dim=-1)
                pick = int(torch.multinomial(probs, 1, generator=gen))
                choice = int(idx[pick])
            out.append(choice)
            if return_logprobs:
                logprobs.append(float(ref[choice]))
            if stop_id is not None and choice == stop_id:
                break
            if step < max_new - 1:
                logits, cache = model(
                    torch.tensor([[choice]]), cache=cache, return_cache=True
                )
                step_logits = logits[0, -1]
    result = torch.tensor(out, dtype=torch.long)
    if return_logprobs:
        return result, logprobs
    return result
