"""Session manager: many isolated simulation runs behind one registry.

Each session owns a private working directory and runs its platform on
its own thread; sessions share no mutable state. Artifacts become
visible only after the run thread has flushed and closed them.
"""

from __future__ import annotations

import logging
import shutil
import tempfile
import threading
import time
import traceback
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import ConfigError, PropertySet, SOURCE_API
from .platform import BuildError, ExitReport, Platform, property_catalog

log = logging.getLogger(__name__)

STATE_CREATED = "created"
STATE_CONFIGURED = "configured"
STATE_RUNNING = "running"
STATE_FINISHED = "finished"
STATE_FAILED = "failed"

FILE_PARAMS = ("sw.image",)


class NotFoundError(Exception):
    """Unknown session id or artifact name."""


class ConflictError(Exception):
    """Operation not legal in the session's current state."""


class CapacityError(Exception):
    """Too many sessions running; retry later."""


@dataclass
class Session:
    id: str
    workdir: Path
    props: PropertySet
    state: str = STATE_CREATED
    platform: Platform | None = None
    report: ExitReport | None = None
    error: str | None = None
    artifact_paths: dict[str, str] = field(default_factory=dict)
    wall_start: float = 0.0
    thread: threading.Thread | None = None


class SessionManager:
    def __init__(self, base_dir: str | None = None, max_running: int = 16) -> None:
        self.base_dir = Path(base_dir) if base_dir else Path(tempfile.mkdtemp(prefix="vplat-"))
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.max_running = max_running
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    # -- lifecycle -------------------------------------------------------------

    def create(self, overrides: dict[str, Any] | None = None) -> str:
        props = property_catalog()
        props.apply(overrides or {}, SOURCE_API)  # validates names and types
        with self._lock:
            if self._running_count() >= self.max_running:
                raise CapacityError(
                    f"{self.max_running} sessions already running; retry later"
                )
            session_id = uuid.uuid4().hex[:12]
            workdir = self.base_dir / session_id
            workdir.mkdir(parents=True)
            self._sessions[session_id] = Session(session_id, workdir, props)
        return session_id

    def upload_file(self, session_id: str, param: str, data: bytes) -> None:
        session = self._get(session_id)
        if param not in FILE_PARAMS:
            raise ConfigError(
                f"{param!r} is not a file parameter (expected one of {FILE_PARAMS})"
            )
        with self._lock:
            if session.state not in (STATE_CREATED, STATE_CONFIGURED):
                raise ConflictError(f"cannot upload to a {session.state} session")
            upload_dir = session.workdir / "uploads"
            upload_dir.mkdir(exist_ok=True)
            path = upload_dir / param
            path.write_bytes(data)
            session.props.set(param, str(path), SOURCE_API)
            session.state = STATE_CONFIGURED

    def start(self, session_id: str) -> None:
        session = self._get(session_id)
        with self._lock:
            if session.state not in (STATE_CREATED, STATE_CONFIGURED):
                raise ConflictError(f"cannot start a {session.state} session")
            if self._running_count() >= self.max_running:
                raise CapacityError(
                    f"{self.max_running} sessions already running; retry later"
                )
            session.wall_start = time.perf_counter()
            try:
                session.platform = Platform(session.props, session.workdir)
            except (BuildError, ConfigError) as exc:
                self._fail(session, str(exc))
                return
            session.state = STATE_RUNNING
        session.thread = threading.Thread(
            target=self._execute, args=(session,), daemon=True
        )
        session.thread.start()

    def _execute(self, session: Session) -> None:
        try:
            report = session.platform.run()
        except Exception as exc:  # defensive: a model bug must not hang the session
            log.exception("session %s crashed", session.id)
            self._fail(session, f"internal error: {exc}\n{traceback.format_exc()}")
            return
        with self._lock:
            session.report = report
            session.artifact_paths = {
                name: session.platform.artifacts.path(name)
                for name in report.artifacts
            }
            session.state = STATE_FINISHED

    def _fail(self, session: Session, message: str) -> None:
        error_path = session.workdir / "error.txt"
        error_path.write_text(message + "\n", encoding="utf-8")
        paths = {"error.txt": str(error_path)}
        config_path = session.workdir / "config.resolved"
        if config_path.exists():
            paths["config.resolved"] = str(config_path)
        session.error = message
        session.artifact_paths = paths
        session.state = STATE_FAILED

    # -- inspection --------------------------------------------------------------

    def status(self, session_id: str) -> dict[str, Any]:
        session = self._get(session_id)
        status: dict[str, Any] = {"id": session.id, "state": session.state}
        if session.state == STATE_RUNNING and session.platform is not None:
            status["sim_time_ps"] = session.platform.sim_time_ps()
            status["wall_time_ms"] = (time.perf_counter() - session.wall_start) * 1e3
        elif session.report is not None:
            status["sim_time_ps"] = session.report.sim_time_ps
            status["wall_time_ms"] = session.report.wall_time_ms
            status["outcome"] = session.report.outcome
            if session.report.exit_code is not None:
                status["exit_code"] = session.report.exit_code
        else:
            status["sim_time_ps"] = 0
            status["wall_time_ms"] = 0.0
        if session.error is not None:
            status["error"] = session.error
        platform = session.platform
        if platform is not None:
            if platform.gdb_port is not None:
                status["gdb_port"] = platform.gdb_port
            if platform.uart_port is not None:
                status["uart_port"] = platform.uart_port
        return status

    def list_sessions(self) -> list[dict[str, str]]:
        with self._lock:
            return [
                {"id": session.id, "state": session.state}
                for session in self._sessions.values()
            ]

    def list_artifacts(self, session_id: str) -> list[str]:
        session = self._get(session_id)
        if session.state not in (STATE_FINISHED, STATE_FAILED):
            raise ConflictError(f"artifacts not available in state {session.state}")
        return sorted(session.artifact_paths)

    def artifact_bytes(self, session_id: str, name: str) -> bytes:
        session = self._get(session_id)
        if session.state not in (STATE_FINISHED, STATE_FAILED):
            raise ConflictError(f"artifacts not available in state {session.state}")
        path = session.artifact_paths.get(name)
        if path is None:
            raise NotFoundError(f"session {session_id} has no artifact {name!r}")
        return Path(path).read_bytes()

    def delete(self, session_id: str) -> None:
        session = self._get(session_id)
        with self._lock:
            if session.state == STATE_RUNNING:
                raise ConflictError("cannot delete a running session")
            del self._sessions[session_id]
        shutil.rmtree(session.workdir, ignore_errors=True)

    def wait(self, session_id: str, timeout: float = 60.0) -> dict[str, Any]:
        """Block until the session reaches a terminal state (for clients/tests)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            status = self.status(session_id)
            if status["state"] in (STATE_FINISHED, STATE_FAILED):
                return status
            time.sleep(0.005)
        raise TimeoutError(f"session {session_id} still {self.status(session_id)['state']}")

    def _running_count(self) -> int:
        return sum(1 for s in self._sessions.values() if s.state == STATE_RUNNING)

    def _get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"no session {session_id!r}")
        return session
