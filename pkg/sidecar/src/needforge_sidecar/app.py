"""FastAPI application: POST /embed-tokens and GET /health.

The encoder loads in a background thread at startup; /health answers 503
until it is ready and 200 afterwards. Model state is read-only once loaded,
so requests can be served in parallel without locking.
"""

from __future__ import annotations

import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

import yaml
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .encoder import Encoder, build_encoder


@dataclass
class SidecarConfig:
    backend: str = "hash"
    model_id: str | None = None
    dim: int = 32
    max_chars: int = 20000

    def encoder_kwargs(self) -> dict:
        kwargs: dict = {}
        if self.model_id:
            kwargs["model_id"] = self.model_id
        if self.backend == "hash":
            kwargs["dim"] = self.dim
        return kwargs


def load_config(path: str | Path) -> SidecarConfig:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(data, dict):
        raise ValueError("sidecar config must be a mapping")
    unknown = set(data) - {"backend", "model_id", "dim", "max_chars"}
    if unknown:
        raise ValueError(f"unknown config key(s): {sorted(unknown)}")
    return SidecarConfig(**data)


class EmbedRequest(BaseModel):
    text: str


class EmbedResponse(BaseModel):
    tokens: list[str]
    vectors: list[list[float]]
    model_id: str
    dim: int
    truncated: bool = False


def truncate_at_whitespace(text: str, max_chars: int) -> tuple[str, bool]:
    if len(text) <= max_chars:
        return text, False
    cut = text[:max_chars]
    space = cut.rfind(" ")
    return (cut[:space] if space > 0 else cut), True


def create_app(config: SidecarConfig | None = None,
               encoder_factory=None) -> FastAPI:
    """Build the service. `encoder_factory` overrides the configured backend
    (used by tests to control load timing)."""
    config = config or SidecarConfig()
    if encoder_factory is None:
        def encoder_factory():
            return build_encoder(config.backend, **config.encoder_kwargs())

    state: dict[str, Encoder | None] = {"encoder": None}

    def load():
        state["encoder"] = encoder_factory()

    @asynccontextmanager
    async def lifespan(_app):
        threading.Thread(target=load, daemon=True).start()
        yield

    app = FastAPI(title="needforge-sidecar", lifespan=lifespan)

    def ready_encoder() -> Encoder:
        encoder = state["encoder"]
        if encoder is None:
            raise HTTPException(status_code=503, detail="model loading")
        return encoder

    @app.get("/health")
    def health():
        encoder = ready_encoder()
        return {"status": "ok", "model_id": encoder.model_id, "dim": encoder.dim}

    @app.post("/embed-tokens", response_model=EmbedResponse)
    def embed_tokens(request: EmbedRequest):
        encoder = ready_encoder()
        text, truncated = truncate_at_whitespace(request.text, config.max_chars)
        tokens, vectors = encoder.encode(text)
        return EmbedResponse(
            tokens=tokens,
            vectors=[[float(x) for x in row] for row in vectors],
            model_id=encoder.model_id,
            dim=encoder.dim,
            truncated=truncated,
        )

    return app
