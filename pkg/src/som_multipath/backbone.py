"""Decoder-only transformer backbone with LoRA-adapted FFN linears.

The backbone consumes a byte-level prompt token sequence followed by one
fused sensor token, under causal self-attention. Low-rank adapters attach
to the two FFN linear maps of every block:

    y = W0 x + (alpha / r) * B (A x)

with B zero-initialized, so activation is a no-op until training moves A/B.
Base weights are plain randomly initialized linears (externally supplied
weights can be loaded through the checkpoint path) and stay frozen during
training; see the trainer for the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import torch
from torch import Tensor, nn

from .errors import ConfigurationError, SequenceLengthError, ShapeError
from .prompt import PAD_ID, VOCAB_SIZE, PropagationPrompt, encode_prompt


@dataclass(frozen=True)
class BackboneConfig:
    """Decoder geometry; vocabulary is the fixed byte-level table."""

    d_model: int = 256
    n_layers: int = 2
    n_heads: int = 4
    ffn_width: int = 1024
    max_seq_len: int = 96
    vocab_size: int = VOCAB_SIZE

    def __post_init__(self) -> None:
        if self.n_layers < 1:
            raise ConfigurationError("n_layers must be >= 1")
        if self.d_model % self.n_heads:
            raise ConfigurationError("d_model must be divisible by n_heads")
        if self.vocab_size != VOCAB_SIZE:
            raise ConfigurationError("vocab is the fixed byte-level table")
        if self.max_seq_len < 2:
            raise ConfigurationError("max_seq_len must fit a prompt plus the fused token")


class LoraLinear(nn.Module):
    """Linear map with an optional low-rank additive adapter.

    The adapter is created by :meth:`activate`; before that (or with B at
    its zero initialization) the module computes exactly ``W0 x + b``. The
    low-rank path never materializes the merged matrix.
    """

    def __init__(self, in_features: int, out_features: int) -> None:
        super().__init__()
        self.base = nn.Linear(in_features, out_features)
        self.lora_a: Optional[nn.Parameter] = None
        self.lora_b: Optional[nn.Parameter] = None
        self.rank = 0
        self.alpha = 0.0

    @property
    def lora_active(self) -> bool:
        return self.lora_a is not None

    def activate(self, rank: int, alpha: float) -> None:
        if rank < 1 or rank > min(self.base.in_features, self.base.out_features):
            raise ConfigurationError("rank must be in [1, min(d_in, d_out)]")
        if self.lora_active:
            return
        a = torch.empty(rank, self.base.in_features)
        nn.init.kaiming_uniform_(a, a=5 ** 0.5)
        self.lora_a = nn.Parameter(a)
        self.lora_b = nn.Parameter(torch.zeros(self.base.out_features, rank))
        self.rank = rank
        self.alpha = float(alpha)

    def forward(self, x: Tensor) -> Tensor:
        y = self.base(x)
        if self.lora_active:
            y = y + (self.alpha / self.rank) * ((x @ self.lora_a.T) @ self.lora_b.T)
        return y

    def merge(self) -> Tensor:
        """Dense W = W0 + (alpha/r)·B·A (bias unchanged, module untouched)."""
        w = self.base.weight.detach().clone()
        if self.lora_active:
            w = w + (self.alpha / self.rank) * (self.lora_b.detach() @ self.lora_a.detach())
        return w

    def lora_parameter_count(self) -> int:
        return self.rank * (self.base.in_features + self.base.out_features)


class DecoderBlock(nn.Module):
    """Pre-norm causal self-attention block with a LoRA-adapted FFN."""

    def __init__(self, cfg: BackboneConfig) -> None:
        super().__init__()
        self.ln_attn = nn.LayerNorm(cfg.d_model)
        self.attn = nn.MultiheadAttention(cfg.d_model, cfg.n_heads, batch_first=True)
        self.ln_ffn = nn.LayerNorm(cfg.d_model)
        self.ffn_in = LoraLinear(cfg.d_model, cfg.ffn_width)
        self.ffn_out = LoraLinear(cfg.ffn_width, cfg.d_model)
        self.act = nn.GELU()

    def forward(
        self, x: Tensor, attn_mask: Tensor, key_padding_mask: Optional[Tensor]
    ) -> Tensor:
        h = self.ln_attn(x)
        attn_out, _ = self.attn(
            h, h, h, attn_mask=attn_mask, key_padding_mask=key_padding_mask, need_weights=False
        )
        x = x + attn_out
        x = x + self.ffn_out(self.act(self.ffn_in(self.ln_ffn(x))))
        return x


class Backbone(nn.Module):
    """Decoder stack over [prompt tokens..., fused token] with tail padding."""

    def __init__(self, cfg: BackboneConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.pos_embedding = nn.Embedding(cfg.max_seq_len, cfg.d_model)
        self.blocks = nn.ModuleList(DecoderBlock(cfg) for _ in range(cfg.n_layers))
        self.final_norm = nn.LayerNorm(cfg.d_model)

    def ffn_linears(self) -> Iterator[LoraLinear]:
        for block in self.blocks:
            yield block.ffn_in
            yield block.ffn_out

    def activate_lora(self, rank: int, alpha: float) -> None:
        for linear in self.ffn_linears():
            linear.activate(rank, alpha)

    @property
    def lora_active(self) -> bool:
        return any(l.lora_active for l in self.ffn_linears())

    def lora_parameter_count(self) -> int:
        """Analytic count: sum of r·(d_in + d_out) over adapted linears."""
        return sum(l.lora_parameter_count() for l in self.ffn_linears())

    def lora_parameters(self) -> Iterator[nn.Parameter]:
        for linear in self.ffn_linears():
            if linear.lora_active:
                yield linear.lora_a
                yield linear.lora_b

    def base_parameters(self) -> Iterator[nn.Parameter]:
        """Backbone weights excluding LoRA and embeddings (the frozen set)."""
        lora = {id(p) for p in self.lora_parameters()}
        emb = {id(p) for p in self.embedding_parameters()}
        for p in self.parameters():
            if id(p) not in lora and id(p) not in emb:
                yield p

    def embedding_parameters(self) -> Iterator[nn.Parameter]:
        yield self.token_embedding.weight
        yield self.pos_embedding.weight

    def embed_prompt(self, prompt: PropagationPrompt) -> Tensor:
        """(L, d_model) embeddings for the rendered prompt plus separator."""
        ids = torch.tensor(encode_prompt(prompt), dtype=torch.long)
        return self.token_embedding(ids)

    def forward(
        self,
        token_ids: Tensor,
        lengths: Tensor,
        fused_tokens: Tensor,
    ) -> tuple[Tensor, Tensor]:
        """Run the decoder over prompts plus one trailing fused token each.

        ``token_ids`` is (B, L) right-padded with PAD; ``lengths`` gives the
        real token count per row (0 allowed: prompt dropped); the fused
        token is placed at position ``lengths[b]``. Returns (hidden, mask)
        where hidden is (B, L+1, d_model) and mask flags the real positions
        (prompt + fused) that downstream pooling may use.
        """
        if token_ids.dim() != 2 or fused_tokens.dim() != 2:
            raise ShapeError("token_ids must be (B, L) and fused_tokens (B, d_model)")
        b, l = token_ids.shape
        seq_len = l + 1
        if seq_len > self.cfg.max_seq_len:
            raise SequenceLengthError(
                f"sequence length {seq_len} exceeds max_seq_len {self.cfg.max_seq_len}"
            )
        if int(lengths.max()) > l:
            raise ShapeError("lengths exceed the padded token width")

        ids = torch.cat(
            [token_ids, torch.full((b, 1), PAD_ID, dtype=token_ids.dtype)], dim=1
        )
        x = self.token_embedding(ids)
        rows = torch.arange(b)
        x[rows, lengths] = fused_tokens
        x = x + self.pos_embedding(torch.arange(seq_len))[None, :, :]

        positions = torch.arange(seq_len)
        real = positions[None, :] <= lengths[:, None]  # prompt tokens + fused
        causal = torch.ones(seq_len, seq_len, dtype=torch.bool).triu(diagonal=1)
        key_padding = ~real
        for block in self.blocks:
            x = block(x, causal, key_padding)
        return self.final_norm(x), real
