"""HTTP surface of the comparison service (FastAPI + JSON)."""

from __future__ import annotations

from fastapi import Depends, FastAPI, Header, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .service import (
    ComparisonService,
    UnknownExperimentError,
    UnknownSessionError,
    ValidationFailure,
)


class CreateSessionRequest(BaseModel):
    ranker_names: list[str] = Field(min_length=2)
    rankings: list[list[str]]
    method: str | None = None
    credit: str | None = None
    length: int | None = None
    seed: int | None = None


class CreateSessionResponse(BaseModel):
    session_id: str
    ranking: list[str]


class ClickRequest(BaseModel):
    position: int
    idempotency_key: str | None = None


class ClickResponse(BaseModel):
    credits: list[float]


class ResultsResponse(BaseModel):
    experiment_id: str
    ranker_names: list[str]
    totals: dict[str, float]
    session_count: int
    click_count: int
    pairwise: list[list[float]]


def create_app(service: ComparisonService, *, token: str | None = None) -> FastAPI:
    app = FastAPI(title="multileave comparison service")

    def check_auth(authorization: str | None = Header(default=None)) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.exception_handler(ValidationFailure)
    async def _validation_failure(_, exc: ValidationFailure):
        return JSONResponse(
            status_code=400, content={"error": exc.message, "field": exc.field}
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": service.session_count()}

    @app.post(
        "/v1/experiments/{experiment_id}/sessions",
        response_model=CreateSessionResponse,
        dependencies=[Depends(check_auth)],
    )
    def create_session(experiment_id: str, body: CreateSessionRequest):
        view = service.create_session(
            experiment_id,
            body.ranker_names,
            body.rankings,
            method=body.method,
            credit=body.credit,
            length=body.length,
            seed=body.seed,
        )
        return CreateSessionResponse(session_id=view.session_id, ranking=view.ranking)

    @app.post(
        "/v1/sessions/{session_id}/clicks",
        response_model=ClickResponse,
        dependencies=[Depends(check_auth)],
    )
    def record_click(session_id: str, body: ClickRequest):
        try:
            credits = service.record_click(
                session_id, body.position, idempotency_key=body.idempotency_key
            )
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return ClickResponse(credits=credits)

    @app.get(
        "/v1/experiments/{experiment_id}/results",
        response_model=ResultsResponse,
        dependencies=[Depends(check_auth)],
    )
    def get_results(experiment_id: str):
        try:
            results = service.get_results(experiment_id)
        except UnknownExperimentError:
            raise HTTPException(status_code=404, detail=f"unknown experiment {experiment_id!r}")
        return ResultsResponse(
            experiment_id=results.experiment_id,
            ranker_names=results.ranker_names,
            totals=results.totals,
            session_count=results.session_count,
            click_count=results.click_count,
            pairwise=results.pairwise.values,
        )

    return app
