"""HTTP surface: versioned /v1 endpoints over the shared runtime.

Bodies are JSON; the batch ingestion endpoints also accept raw JSON-lines
for throughput.  Every module error maps to one machine-readable code with a
4xx status for caller faults and 5xx for internal ones.
"""

from __future__ import annotations

import json
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .errors import FairgateError, Overloaded, ValidationError
from .runtime import Runtime


def _error_response(exc: FairgateError) -> JSONResponse:
    return JSONResponse(status_code=exc.http_status, content={"error": exc.to_dict()})


def _as_jsonl(raw: bytes, list_key: str) -> str:
    """Accept raw JSON-lines, a JSON list, or {"<list_key>": [...]} bodies."""
    text = raw.decode("utf-8")
    stripped = text.strip()
    if not stripped:
        return ""
    try:
        doc = json.loads(stripped)
    except json.JSONDecodeError:
        return text  # multi-line JSONL
    if isinstance(doc, dict) and isinstance(doc.get(list_key), list):
        items = doc[list_key]
    elif isinstance(doc, list):
        items = doc
    else:
        items = [doc]
    return "\n".join(json.dumps(item, sort_keys=True) for item in items)


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="fairgate", version=runtime.health()["version"])
    if runtime.config.cors_allow_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(runtime.config.cors_allow_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(FairgateError)
    async def fairgate_error_handler(_request: Request, exc: FairgateError):
        return _error_response(exc)

    def check_auth(request: Request) -> Optional[JSONResponse]:
        token = runtime.config.bearer_token
        if token is None:
            return None
        supplied = request.headers.get("authorization", "")
        if supplied == f"Bearer {token}":
            return None
        return JSONResponse(
            status_code=401,
            content={"error": {"code": "unauthorized", "message": "bad bearer token"}},
        )

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        if request.url.path != "/v1/health" and request.method != "OPTIONS":
            denied = check_auth(request)
            if denied is not None:
                return denied
        return await call_next(request)

    @app.get("/v1/health")
    def health():
        return runtime.health()

    # -- ingestion ---------------------------------------------------------

    @app.post("/v1/events")
    async def post_events(request: Request):
        if not runtime.ingest_slots.acquire(blocking=False):
            raise Overloaded("ingest queue full, retry later")
        try:
            body = await request.body()
            return runtime.ingest_text(_as_jsonl(body, "events"))
        finally:
            runtime.ingest_slots.release()

    @app.post("/v1/outcomes")
    async def post_outcomes(request: Request):
        if not runtime.ingest_slots.acquire(blocking=False):
            raise Overloaded("ingest queue full, retry later")
        try:
            body = await request.body()
            return runtime.outcomes_text(_as_jsonl(body, "outcomes"))
        finally:
            runtime.ingest_slots.release()

    # -- labels --------------------------------------------------------------

    @app.put("/v1/labels/{model_version}")
    async def put_label(model_version: str, request: Request):
        doc = await request.json()
        return runtime.put_label(model_version, doc)

    # -- metrics ---------------------------------------------------------------

    @app.get("/v1/metrics/stratified")
    def metrics_stratified(
        model_version: Optional[str] = None,
        attribute: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ):
        return runtime.stratified_metrics(model_version, attribute, window, window_size)

    @app.get("/v1/parity")
    def parity(
        model_version: Optional[str] = None,
        attribute: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ):
        return runtime.parity(model_version, attribute, window, window_size)

    @app.get("/v1/drift")
    def drift(
        model_version: Optional[str] = None,
        window: str = "latest",
        window_size: Optional[int] = None,
    ):
        return runtime.drift(model_version, window, window_size)

    # -- rollouts ---------------------------------------------------------------

    @app.post("/v1/rollouts")
    async def create_rollout(request: Request):
        doc = await request.json()
        return runtime.create_rollout(doc)

    @app.get("/v1/rollouts")
    def list_rollouts():
        return runtime.list_rollouts()

    @app.get("/v1/rollouts/{rollout_id}")
    def get_rollout(rollout_id: str):
        return runtime.rollout_dict(rollout_id)

    @app.post("/v1/rollouts/{rollout_id}/advance")
    def advance_rollout(rollout_id: str):
        return runtime.advance_rollout(rollout_id)

    @app.post("/v1/rollouts/{rollout_id}/abort")
    async def abort_rollout(rollout_id: str, request: Request):
        body = await request.body()
        reason = "operator_abort"
        if body:
            try:
                doc = json.loads(body)
                reason = str(doc.get("reason", reason))
            except json.JSONDecodeError:
                raise ValidationError("abort body must be JSON") from None
        return runtime.abort_rollout(rollout_id, reason)

    # -- comparisons ---------------------------------------------------------------

    @app.post("/v1/comparisons")
    async def create_comparison(request: Request):
        doc = await request.json()
        return runtime.create_comparison(doc)

    @app.get("/v1/comparisons/{comparison_id}")
    def get_comparison(comparison_id: str):
        return runtime.comparison_dict(comparison_id)

    # -- review ---------------------------------------------------------------

    @app.get("/v1/review/queue")
    def review_queue(status: Optional[str] = None):
        return runtime.review_queue(status)

    @app.post("/v1/review/{item_id}/decision")
    async def decide(item_id: str, request: Request):
        doc = await request.json()
        corrected = doc.get("corrected_label")
        return runtime.decide_review(
            item_id,
            action=str(doc.get("action", "")),
            reviewer=str(doc.get("reviewer", "")),
            corrected_label=None if corrected is None else int(corrected),
        )

    @app.get("/v1/review/export")
    def export_retraining(tag: Optional[str] = None):
        return PlainTextResponse(runtime.export_retraining(tag))

    # -- rebalance / simulate ----------------------------------------------------

    @app.post("/v1/rebalance")
    async def rebalance(request: Request):
        doc = await request.json()
        return runtime.rebalance(doc)

    @app.post("/v1/simulate")
    async def simulate(request: Request):
        doc = await request.json()
        scenario = str(doc.get("scenario", ""))
        seed = doc.get("seed")
        return runtime.simulate(scenario, seed=None if seed is None else int(seed))

    return app
