"""HTTP facade over the judging pipeline.

The app is built by a factory so tests can inject a corpus, index, and
providers. Error responses always use the same envelope:
``{"error": {"code": <code>, "message": <text>}}`` where code is one of
invalid_input, not_found, ambiguous, provider_error, integrity_error,
stage_error, internal.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Any

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .corpus import Corpus, Region
from .embedding import EmbeddingProvider
from .errors import (
    IntegrityError,
    InvalidInput,
    ProviderError,
    RegJudgeError,
    ReplayError,
    StageError,
)
from .pipeline import ArtifactStore, RunConfig, judge_device
from .reasoning import ChatProvider
from .retrieval import VectorIndex

__all__ = ["create_app", "ApiError"]

ERROR_CODES = ("invalid_input", "not_found", "ambiguous", "provider_error",
               "integrity_error", "stage_error", "internal")


class ApiError(Exception):
    """Carries an HTTP status plus one of the closed error codes."""

    def __init__(self, status: int, code: str, message: str,
                 extra: dict[str, Any] | None = None):
        if code not in ERROR_CODES:
            raise ValueError(f"unknown error code {code!r}")
        super().__init__(message)
        self.status = status
        self.code = code
        self.extra = extra or {}

    def response(self) -> JSONResponse:
        body = {"error": {"code": self.code, "message": str(self), **self.extra}}
        return JSONResponse(status_code=self.status, content=body)


class JudgeRequest(BaseModel):
    device_text: str
    regions: list[str] | None = None
    k: int | None = Field(default=None, ge=1)


def _classify_failure(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, InvalidInput):
        return ApiError(400, "invalid_input", str(exc))
    if isinstance(exc, StageError):
        if isinstance(exc.cause, InvalidInput):
            return ApiError(400, "invalid_input", str(exc.cause))
        if exc.stage == "reasoning" and isinstance(exc.cause, ProviderError):
            return ApiError(502, "provider_error", str(exc))
        return ApiError(500, "stage_error", str(exc))
    if isinstance(exc, IntegrityError):
        return ApiError(500, "integrity_error", str(exc))
    if isinstance(exc, ProviderError):
        return ApiError(502, "provider_error", str(exc))
    if isinstance(exc, RegJudgeError):
        return ApiError(500, "internal", str(exc))
    return ApiError(500, "internal", f"unexpected failure: {exc}")


def create_app(corpus: Corpus, index: VectorIndex, config: RunConfig, *,
               store: ArtifactStore | None = None,
               embed_provider: EmbeddingProvider | None = None,
               chat_provider: ChatProvider | None = None) -> FastAPI:
    """Assemble the service around an already loaded corpus and index."""
    app = FastAPI(title="regjudge", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])
    artifact_store = store if store is not None else ArtifactStore(config.run_dir)

    @app.exception_handler(ApiError)
    async def handle_api_error(_request, exc: ApiError):
        return exc.response()

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {
            "status": "ok",
            "corpus_hash": corpus.content_hash(),
            "index_fingerprint": index.fingerprint(),
            "model_id": index.model_id,
            "records": len(corpus.records),
        }

    @app.post("/api/v1/judge")
    def judge(request: JudgeRequest) -> JSONResponse:
        run_config = config
        try:
            if request.regions is not None:
                run_config = replace(run_config, regions=tuple(request.regions))
            if request.k is not None:
                run_config = replace(run_config, k=request.k)
            artifact = judge_device(
                run_config, corpus, index, request.device_text,
                store=artifact_store, embed_provider=embed_provider,
                chat_provider=chat_provider)
        except Exception as exc:  # noqa: BLE001 - mapped to the envelope
            raise _classify_failure(exc) from exc
        return JSONResponse(
            status_code=200, content=artifact.to_dict(),
            headers={"X-Artifact-Id": artifact.artifact_id})

    @app.get("/api/v1/standards/{norm_id}")
    def standard(norm_id: str, region: str | None = None) -> dict[str, Any]:
        if region is not None:
            try:
                wanted = Region(region)
            except ValueError:
                raise ApiError(400, "invalid_input",
                               f"unknown region {region!r}") from None
            record = corpus.get(norm_id, wanted)
            if record is None:
                raise ApiError(404, "not_found",
                               f"no record for ({norm_id}, {region})")
            return record.to_dict()
        matches = corpus.find(norm_id)
        if not matches:
            raise ApiError(404, "not_found", f"no record for {norm_id!r}")
        if len(matches) > 1:
            raise ApiError(
                409, "ambiguous",
                f"{norm_id!r} exists in multiple regions; pass ?region=",
                extra={"regions": sorted(r.region.value for r in matches)})
        return matches[0].to_dict()

    @app.get("/api/v1/compare/{artifact_id}")
    def compare(artifact_id: str) -> dict[str, Any]:
        try:
            artifact = artifact_store.load(artifact_id, verify=True)
        except ReplayError as exc:
            raise ApiError(404, "not_found", str(exc)) from exc
        except IntegrityError as exc:
            raise ApiError(500, "integrity_error", str(exc)) from exc
        return artifact.matrix.to_dict()

    return app
