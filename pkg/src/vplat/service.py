"""REST API over the session manager.

All client errors come back as 4xx with a structured {error, detail}
body; only genuine server bugs may surface as 5xx.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .config import ConfigError
from .manager import CapacityError, ConflictError, NotFoundError, SessionManager


class CreateSessionBody(BaseModel):
    config: dict[str, Any] = {}


def create_app(manager: SessionManager) -> FastAPI:
    app = FastAPI(title="vplat runtime manager", docs_url=None, redoc_url=None)

    def _error(status: int, kind: str, detail: str) -> JSONResponse:
        return JSONResponse({"error": kind, "detail": detail}, status_code=status)

    @app.exception_handler(ConfigError)
    async def _config_error(_req: Request, exc: ConfigError):
        return _error(400, "config", str(exc))

    @app.exception_handler(NotFoundError)
    async def _not_found(_req: Request, exc: NotFoundError):
        return _error(404, "not_found", str(exc))

    @app.exception_handler(ConflictError)
    async def _conflict(_req: Request, exc: ConflictError):
        return _error(409, "conflict", str(exc))

    @app.exception_handler(CapacityError)
    async def _capacity(_req: Request, exc: CapacityError):
        return _error(429, "capacity", str(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation(_req: Request, exc: RequestValidationError):
        return _error(400, "validation", str(exc))

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(_req: Request, exc: StarletteHTTPException):
        return _error(exc.status_code, "http", str(exc.detail))

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        session_id = manager.create(body.config)
        return {"id": session_id}

    @app.get("/sessions")
    def list_sessions():
        return manager.list_sessions()

    @app.get("/sessions/{session_id}")
    def session_status(session_id: str):
        return manager.status(session_id)

    @app.put("/sessions/{session_id}/files/{param}")
    async def upload_file(session_id: str, param: str, request: Request):
        data = await request.body()
        manager.upload_file(session_id, param, data)
        return {"param": param, "size": len(data)}

    @app.post("/sessions/{session_id}/start", status_code=202)
    def start_session(session_id: str):
        manager.start(session_id)
        return {"id": session_id, "state": manager.status(session_id)["state"]}

    @app.get("/sessions/{session_id}/artifacts")
    def list_artifacts(session_id: str):
        return manager.list_artifacts(session_id)

    @app.get("/sessions/{session_id}/artifacts/{name}")
    def fetch_artifact(session_id: str, name: str):
        data = manager.artifact_bytes(session_id, name)
        return Response(content=data, media_type="application/octet-stream")

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        manager.delete(session_id)
        return {"deleted": session_id}

    return app
