"""Read-only HTTP API over the model registry and feature store.

Endpoints::

    GET /health
    GET /api/models
    GET /api/scores?model_id=&start=&end=&smoothed=&resolution=daily|weekly

Score records use the same field names and the same inference path as the
``infer`` command's CSV output.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from . import __version__
from .domain import parse_date
from .errors import InvalidArgument, ParseError, StoreError, UnknownModel
from .registry import ModelRegistry, ServiceConfig
from .workflow import run_inference

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _error(status: int, message: str, field: str | None = None) -> JSONResponse:
    body = {"error": message}
    if field is not None:
        body["field"] = field
    return JSONResponse(body, status_code=status)


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(title="ilinowcast", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        errs = exc.errors()
        field = str(errs[0]["loc"][-1]) if errs else None
        return _error(400, errs[0]["msg"] if errs else "invalid request", field)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/api/models")
    def models():
        try:
            entries = ModelRegistry(config.registry_path).entries()
        except (OSError, ValueError) as exc:
            return _error(503, f"registry unreadable: {exc}")
        return [e.to_dict() for e in entries]

    @app.get("/api/scores")
    def scores(model_id: str, start: str, end: str, smoothed: str | None = None,
               resolution: str = "daily"):
        parsed = {}
        for name, value in (("start", start), ("end", end)):
            try:
                parsed[name] = parse_date(value)
            except InvalidArgument as exc:
                return _error(400, str(exc), name)
        if parsed["start"] > parsed["end"]:
            return _error(400, f"start {start} is after end {end}", "start")
        if resolution not in ("daily", "weekly"):
            return _error(400, "resolution must be 'daily' or 'weekly'", "resolution")
        smooth = None
        if smoothed is not None:
            if smoothed.lower() in _TRUE:
                smooth = True
            elif smoothed.lower() in _FALSE:
                smooth = False
            else:
                return _error(400, f"smoothed must be a boolean, got {smoothed!r}", "smoothed")
        try:
            records = run_inference(config, model_id, parsed["start"], parsed["end"],
                                    weekly=resolution == "weekly", smooth=smooth)
        except UnknownModel as exc:
            return _error(404, str(exc), "model_id")
        except (StoreError, ParseError, OSError, ValueError) as exc:
            return _error(503, f"store read failed: {exc}")
        return records

    return app
