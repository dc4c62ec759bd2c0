"""FastAPI application exposing a model backend on the /v1 wire protocol.

Status codes: 400 malformed request, 413 batch too large, 422 context too
long, 503 model not ready. Vectors travel in natural-log space; dense rows
exponentiate-normalize to unit mass within 1e-4.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .backends import ModelBackend, ServerConfig


class LogprobsRequest(BaseModel):
    contexts: list[list[int]]


class TokenizeRequest(BaseModel):
    text: str


class DetokenizeRequest(BaseModel):
    tokens: list[int]


def create_app(backend: ModelBackend, config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig(model="<injected>")
    app = FastAPI(title="judged-decode logits server", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "malformed request", "detail": str(exc)[:500]})

    def ready_or_503():
        if not backend.ready:
            return JSONResponse(status_code=503, content={"error": "model not ready"})
        return None

    @app.get("/v1/model_info")
    def model_info():
        unready = ready_or_503()
        if unready:
            return unready
        return {
            "vocab_size": backend.vocab_size,
            "eos_id": backend.eos_id,
            "max_context": backend.max_context,
            "name": backend.name,
        }

    @app.post("/v1/logprobs")
    def logprobs(req: LogprobsRequest):
        unready = ready_or_503()
        if unready:
            return unready
        if len(req.contexts) == 0:
            return JSONResponse(status_code=400, content={"error": "empty batch"})
        if len(req.contexts) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={"error": f"batch of {len(req.contexts)} exceeds limit {config.max_batch}"},
            )
        for ctx in req.contexts:
            if len(ctx) > backend.max_context:
                return JSONResponse(
                    status_code=422,
                    content={"error": f"context length {len(ctx)} exceeds maximum {backend.max_context}"},
                )
            for t in ctx:
                if not 0 <= t < backend.vocab_size:
                    return JSONResponse(status_code=400, content={"error": f"token id {t} out of range"})
        rows = backend.logprobs_batch([list(c) for c in req.contexts])
        results = []
        for row in rows:
            if config.top_k_return > 0:
                order = sorted(range(len(row)), key=lambda t: (-row[t], t))[: config.top_k_return]
                results.append({"sparse": {"ids": order, "logprobs": [row[t] for t in order]}})
            else:
                results.append({"dense": row})
        return {"results": results}

    @app.post("/v1/tokenize")
    def tokenize(req: TokenizeRequest):
        unready = ready_or_503()
        if unready:
            return unready
        try:
            return {"tokens": backend.tokenize(req.text)}
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.post("/v1/detokenize")
    def detokenize(req: DetokenizeRequest):
        unready = ready_or_503()
        if unready:
            return unready
        for t in req.tokens:
            if not 0 <= t < backend.vocab_size:
                return JSONResponse(status_code=400, content={"error": f"token id {t} out of range"})
        return {"text": backend.detokenize(list(req.tokens))}

    return app
