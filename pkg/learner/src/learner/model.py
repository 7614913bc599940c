"""Encoder-decoder transformer over the dataset token vocabulary.

Deliberately small: shared token embedding, learned positions, a stock
``nn.Transformer`` core, and greedy decoding only.  The point is measuring
what sequence models pick up from these datasets, not squeezing accuracy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import Tensor, nn

from .data import BOS, EOS, PAD


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    dim: int = 128
    heads: int = 8
    ff_dim: int = 512
    lr: float = 1e-4
    batch_size: int = 64
    sig_digits: int | None = None
    dropout: float = 0.0
    max_src_len: int = 256
    max_tgt_len: int = 96

    def validate(self) -> None:
        if not 1 <= self.layers <= 8:
            raise ValueError(f"layers must be in [1, 8], got {self.layers}")
        if not 64 <= self.dim <= 1024:
            raise ValueError(f"dim must be in [64, 1024], got {self.dim}")
        if self.heads != 8:
            raise ValueError("the attention head count is fixed at 8")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by {self.heads} heads")
        if self.ff_dim <= 0:
            raise ValueError("ff_dim must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.sig_digits not in (None, 2, 3, 4):
            raise ValueError("sig_digits must be None, 2, 3 or 4")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.max_src_len <= 0 or self.max_tgt_len <= 0:
            raise ValueError("sequence length caps must be positive")


class Seq2Seq(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: dict[str, int]):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.vocab = dict(vocab)
        self.pad_id = vocab[PAD]
        self.bos_id = vocab[BOS]
        self.eos_id = vocab[EOS]
        n_pos = max(cfg.max_src_len, cfg.max_tgt_len + 1)
        self.embed = nn.Embedding(len(vocab), cfg.dim, padding_idx=self.pad_id)
        self.pos = nn.Embedding(n_pos, cfg.dim)
        enc_layer = nn.TransformerEncoderLayer(
            cfg.dim, cfg.heads, cfg.ff_dim, cfg.dropout, batch_first=True
        )
        # the nested-tensor fast path is prototype-stage and warns; skip it
        self.encoder = nn.TransformerEncoder(
            enc_layer, cfg.layers, enable_nested_tensor=False
        )
        dec_layer = nn.TransformerDecoderLayer(
            cfg.dim, cfg.heads, cfg.ff_dim, cfg.dropout, batch_first=True
        )
        self.decoder = nn.TransformerDecoder(dec_layer, cfg.layers)
        self.out = nn.Linear(cfg.dim, len(vocab))

    def _embed(self, ids: Tensor) -> Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        return self.embed(ids) + self.pos(pos)[None]

    def encode(self, src: Tensor) -> tuple[Tensor, Tensor]:
        kpm = src == self.pad_id
        memory = self.encoder(self._embed(src), src_key_padding_mask=kpm)
        return memory, kpm

    def decode(self, memory: Tensor, src_kpm: Tensor, tgt_in: Tensor) -> Tensor:
        t = tgt_in.shape[1]
        # bool masks throughout so attention sees one mask dtype
        causal = torch.triu(
            torch.ones(t, t, dtype=torch.bool, device=tgt_in.device), diagonal=1
        )
        h = self.decoder(
            self._embed(tgt_in),
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_in == self.pad_id,
            memory_key_padding_mask=src_kpm,
        )
        return self.out(h)

    def forward(self, src: Tensor, tgt_in: Tensor) -> Tensor:
        memory, kpm = self.encode(src)
        return self.decode(memory, kpm, tgt_in)


@torch.no_grad()
def greedy_decode(model: Seq2Seq, src: Tensor, max_len: int | None = None) -> list[list[int]]:
    """Argmax decoding; returns generated ids per row, EOS and BOS stripped."""
    model.eval()
    memory, src_kpm = model.encode(src)
    batch = src.shape[0]
    ys = torch.full((batch, 1), model.bos_id, dtype=torch.long, device=src.device)
    done = torch.zeros(batch, dtype=torch.bool, device=src.device)
    rows: list[list[int]] = [[] for _ in range(batch)]
    limit = model.cfg.max_tgt_len if max_len is None else max_len
    for _ in range(limit):
        logits = model.decode(memory, src_kpm, ys)[:, -1]
        logits[:, model.pad_id] = float("-inf")  # specials are not valid output
        logits[:, model.bos_id] = float("-inf")
        nxt = logits.argmax(-1)
        nxt = torch.where(done, torch.full_like(nxt, model.pad_id), nxt)
        for b in torch.nonzero(~done).flatten().tolist():
            tok = int(nxt[b])
            if tok == model.eos_id:
                done[b] = True
            else:
                rows[b].append(tok)
        if bool(done.all()):
            break
        ys = torch.cat([ys, nxt[:, None]], dim=1)
    return rows


def save_checkpoint(model: Seq2Seq, path: str) -> None:
    torch.save(
        {
            "config": asdict(model.cfg),
            "vocab": sorted(model.vocab, key=model.vocab.get),
            "state": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str) -> Seq2Seq:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    cfg = ModelConfig(**blob["config"])
    vocab = {tok: i for i, tok in enumerate(blob["vocab"])}
    model = Seq2Seq(cfg, vocab)
    model.load_state_dict(blob["state"])
    model.eval()
    return model
