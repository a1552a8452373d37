"""Token embedding backends.

Two implementations share one interface: a transformer backend that serves
real contextual embeddings, and a dependency-free hash backend that produces
deterministic pseudo-embeddings for tests and offline development. Both
return unit-norm vectors, one per token, with special tokens stripped.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol

import numpy as np

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class Encoder(Protocol):
    model_id: str
    dim: int

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        """Return (tokens, vectors); vectors is a |tokens| x dim float array
        with every row L2-normalized."""
        ...


def _normalize(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return vectors / norms


class HashEncoder:
    """Deterministic pseudo-embeddings: each token's vector is drawn from an
    RNG seeded by the token's hash. Not contextual and not semantic — it
    exists so the service contract can be exercised without model weights."""

    def __init__(self, dim: int = 32, model_id: str | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.model_id = model_id or f"hash-{dim}"

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        tokens = _TOKEN_RE.findall(text)
        if not tokens:
            return [], np.empty((0, self.dim))
        vectors = np.empty((len(tokens), self.dim))
        for i, token in enumerate(tokens):
            seed = int.from_bytes(
                hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
            vectors[i] = np.random.default_rng(seed).normal(size=self.dim)
        return tokens, _normalize(vectors)


class TransformerEncoder:
    """Contextual embeddings from a Hugging Face encoder checkpoint.

    The model runs in eval mode with gradients disabled, so identical inputs
    produce identical outputs. Special tokens are removed from both the token
    list and the vector rows before normalization.
    """

    def __init__(self, model_id: str = "sentence-transformers/all-MiniLM-L6-v2"):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self.model_id = model_id
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id).eval()
        self.dim = int(self.model.config.hidden_size)

    def encode(self, text: str) -> tuple[list[str], np.ndarray]:
        if not text.strip():
            return [], np.empty((0, self.dim))
        enc = self.tokenizer(text, return_tensors="pt", truncation=True,
                             return_special_tokens_mask=True)
        special = enc.pop("special_tokens_mask")[0].bool()
        with self._torch.no_grad():
            hidden = self.model(**enc).last_hidden_state[0]
        keep = ~special
        tokens = [
            tok for tok, is_special in zip(
                self.tokenizer.convert_ids_to_tokens(enc["input_ids"][0]), special)
            if not is_special
        ]
        vectors = hidden[keep].numpy().astype(float)
        return tokens, _normalize(vectors)


BACKENDS = {
    "hash": HashEncoder,
    "transformer": TransformerEncoder,
}


def build_encoder(backend: str, **kwargs) -> Encoder:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {sorted(BACKENDS)}")
    return BACKENDS[backend](**kwargs)
