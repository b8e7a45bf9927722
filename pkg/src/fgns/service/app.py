"""FastAPI application wrapping the pipeline commands.

Expected failures surface as a structured error payload whose ``kind`` and
``exit_code`` let the CLI (or any client) translate them without parsing
message text. HTTP status codes follow the usual conventions: bad requests
and unknown ids are 400, provenance conflicts are 409, data shortfalls and
training divergence are 422.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    ChecksumMismatchError,
    DivergenceError,
    InputError,
    InsufficientDataError,
    PipelineError,
)
from ..pipeline import (
    cmd_build_features,
    cmd_evaluate,
    cmd_explain,
    cmd_render,
    cmd_train,
)
from . import schemas

_STATUS_BY_KIND = {
    InputError.kind: 400,
    "format_error": 400,
    "degenerate_input": 400,
    ChecksumMismatchError.kind: 409,
    DivergenceError.kind: 422,
    InsufficientDataError.kind: 422,
}


def create_app() -> FastAPI:
    app = FastAPI(title="fgns", version=__version__)

    @app.exception_handler(PipelineError)
    async def pipeline_error_handler(request: Request, exc: PipelineError) -> JSONResponse:
        payload = schemas.ErrorResponse(
            error=schemas.ErrorDetail(
                kind=exc.kind, message=str(exc), exit_code=exc.exit_code
            )
        )
        status = _STATUS_BY_KIND.get(exc.kind, 500)
        return JSONResponse(status_code=status, content=payload.model_dump(mode="json"))

    @app.get("/health", response_model=schemas.HealthResponse)
    async def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
        return schemas.TrainResponse(**cmd_train(req.config))

    @app.post("/build-features", response_model=schemas.BuildFeaturesResponse)
    def build_features(req: schemas.BuildFeaturesRequest) -> schemas.BuildFeaturesResponse:
        return schemas.BuildFeaturesResponse(**cmd_build_features(req.config))

    @app.post("/explain", response_model=schemas.ExplainResponse)
    def explain(req: schemas.ExplainRequest) -> schemas.ExplainResponse:
        return schemas.ExplainResponse(
            **cmd_explain(
                req.config,
                split=req.split,
                query_id=req.query_id,
                method=req.method,
                overlay=req.overlay,
            )
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        return schemas.EvaluateResponse(**cmd_evaluate(req.config))

    @app.post("/render", response_model=schemas.RenderResponse)
    def render(req: schemas.RenderRequest) -> schemas.RenderResponse:
        return schemas.RenderResponse(
            **cmd_render(req.config, explanation_path=req.explanation_path, overlay=req.overlay)
        )

    return app
