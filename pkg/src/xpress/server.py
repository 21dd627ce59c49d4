"""The live service: HTTP artifact/job endpoints plus renderer sessions.

One renderer per session id; each websocket session keeps an authoritative
shadow FaceState so reset semantics and validation context never depend on
the client. Generated artifacts persist to a content-addressed directory.
"""

from __future__ import annotations

import asyncio
import base64
import functools
import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import Response

from . import __version__
from .errors import XpressError
from .face import neutral_face
from .gateway import HttpChatProvider, LmProvider, ScriptedStub, TemplateLibrary
from .pipeline import StorytellingPipeline
from .scheduler import RealClock, SequencedSender, SinkClosedError, play_story
from .session import ConversationEngine, EndOfSpeech, SpeechWords
from .store import ArtifactStore
from .synthesis import ExpressionBank, StoryTrajectory
from .wire import WireMessage

logger = logging.getLogger(__name__)

INLINE_AUDIO_LIMIT = 1 << 20  # larger audio is served by reference


class ConfigError(XpressError):
    pass


class PortInUseError(XpressError):
    pass


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8700
    artifact_dir: Path = Path("artifacts")
    template_dir: Path | None = None
    bank_paths: list[Path] = field(default_factory=list)
    trajectory_paths: list[Path] = field(default_factory=list)
    provider: dict[str, Any] = field(default_factory=lambda: {"type": "stub"})
    words_per_minute: float = 150.0
    static_dir: Path | None = None  # built renderer assets, served at /app

    @classmethod
    def from_file(cls, path: Path | str) -> "ServerConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_obj(obj, base=Path(path).parent)

    @classmethod
    def from_obj(cls, obj: dict[str, Any], *, base: Path = Path(".")) -> "ServerConfig":
        known = {
            "host",
            "port",
            "artifact_dir",
            "template_dir",
            "bank_paths",
            "trajectory_paths",
            "provider",
            "words_per_minute",
            "static_dir",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        def respath(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        return cls(
            host=obj.get("host", "127.0.0.1"),
            port=int(obj.get("port", 8700)),
            artifact_dir=respath(obj.get("artifact_dir", "artifacts")),
            template_dir=respath(obj["template_dir"]) if obj.get("template_dir") else None,
            bank_paths=[respath(p) for p in obj.get("bank_paths", [])],
            trajectory_paths=[respath(p) for p in obj.get("trajectory_paths", [])],
            provider=obj.get("provider", {"type": "stub"}),
            words_per_minute=float(obj.get("words_per_minute", 150.0)),
            static_dir=respath(obj["static_dir"]) if obj.get("static_dir") else None,
        )


def build_provider(config: dict[str, Any]) -> LmProvider:
    kind = config.get("type", "stub")
    if kind == "http":
        try:
            return HttpChatProvider(
                endpoint=config["endpoint"],
                model=config["model"],
                api_key_env=config.get("api_key_env", "XPRESS_API_KEY"),
            )
        except KeyError as exc:
            raise ConfigError(f"http provider config missing {exc.args[0]!r}") from None
    if kind == "stub":
        script_path = config.get("script")
        if script_path:
            script = json.loads(Path(script_path).read_text(encoding="utf-8"))
            return ScriptedStub.from_script(script)
        return ScriptedStub()
    raise ConfigError(f"unknown provider type {kind!r}")


@dataclass
class Job:
    job_id: str
    status: str = "pending"  # pending | done | failed
    kind: str = "story"
    detail: str = ""
    result_digest: str | None = None


class RendererSession:
    """Server-side state for one connected renderer."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.shadow = neutral_face()
        self.engine: ConversationEngine | None = None
        self.started = RealClock().now()
        self.lock = threading.Lock()


class XpressService:
    """Everything the endpoints need, independent of FastAPI plumbing."""

    def __init__(self, config: ServerConfig, provider: LmProvider | None = None):
        self.config = config
        self.provider = provider or build_provider(config.provider)
        self.templates = TemplateLibrary(config.template_dir)
        self.store = ArtifactStore(config.artifact_dir)
        self.jobs: dict[str, Job] = {}
        self.sessions: dict[str, RendererSession] = {}
        self._lock = threading.Lock()
        self._ingest_configured_artifacts()

    def _ingest_configured_artifacts(self) -> None:
        for path in self.config.bank_paths:
            try:
                obj = json.loads(Path(path).read_text(encoding="utf-8"))
                ExpressionBank.from_obj(obj)
                self.store.put_json("banks", obj)
            except (OSError, XpressError, json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ConfigError(f"bad bank file {path}: {exc}") from exc
        for path in self.config.trajectory_paths:
            try:
                obj = json.loads(Path(path).read_text(encoding="utf-8"))
                StoryTrajectory.from_obj(obj)
                self.store.put_json("trajectories", obj)
            except (OSError, XpressError, json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ConfigError(f"bad trajectory file {path}: {exc}") from exc

    # -- artifacts ----------------------------------------------------------

    def list_banks(self) -> list[dict[str, Any]]:
        out = []
        for artifact in self.store.list("banks"):
            obj = json.loads(artifact.path.read_text(encoding="utf-8"))
            out.append(
                {"digest": artifact.digest, "bank_id": obj.get("bank_id"), "size": artifact.size}
            )
        return out

    def list_trajectories(self) -> list[dict[str, Any]]:
        out = []
        for artifact in self.store.list("trajectories"):
            obj = json.loads(artifact.path.read_text(encoding="utf-8"))
            out.append(
                {
                    "digest": artifact.digest,
                    "story_title": obj.get("story_title"),
                    "expressions": len(obj.get("expressions", [])),
                    "size": artifact.size,
                }
            )
        return out

    def load_trajectory(self, digest: str) -> StoryTrajectory:
        return StoryTrajectory.from_obj(json.loads(self.store.get("trajectories", digest)))

    def load_bank(self, digest: str) -> ExpressionBank:
        return ExpressionBank.from_obj(json.loads(self.store.get("banks", digest)))

    def default_bank(self) -> ExpressionBank:
        banks = self.store.list("banks")
        if not banks:
            raise XpressError("no expression bank available; generate one first")
        return self.load_bank(banks[0].digest)

    # -- jobs ----------------------------------------------------------------

    def submit_story_job(self, genre: str) -> Job:
        job = Job(job_id=uuid.uuid4().hex[:12], kind="story")
        with self._lock:
            self.jobs[job.job_id] = job

        def work() -> None:
            try:
                pipeline = StorytellingPipeline(
                    lm=self.provider,
                    templates=self.templates,
                    words_per_minute=self.config.words_per_minute,
                )
                trajectory = pipeline.trajectory_from_genre(genre)
                artifact = self.store.put_json(
                    "trajectories", trajectory.to_obj(), suffix=".xpress.json"
                )
                job.result_digest = artifact.digest
                job.status = "done"
            except Exception as exc:  # noqa: BLE001 - surfaced via the job record
                logger.exception("story job %s failed", job.job_id)
                job.status = "failed"
                job.detail = str(exc)

        threading.Thread(target=work, name=f"story-{job.job_id}", daemon=True).start()
        return job

    # -- sessions --------------------------------------------------------------

    def join_session(self, session_id: str) -> RendererSession:
        with self._lock:
            if session_id in self.sessions:
                raise KeyError(session_id)
            session = RendererSession(session_id)
            self.sessions[session_id] = session
            return session

    def leave_session(self, session_id: str) -> None:
        with self._lock:
            self.sessions.pop(session_id, None)

    def audio_body(self, audio_obj: dict[str, Any]) -> dict[str, Any]:
        """Inline small audio; store and reference large audio."""
        raw = base64.b64decode(audio_obj["data_b64"])
        if len(raw) <= INLINE_AUDIO_LIMIT:
            return {"audio": audio_obj}
        artifact = self.store.put_bytes("audio", raw, suffix=f".{audio_obj['format']}")
        return {"ref": f"/audio/{artifact.digest}", "format": audio_obj["format"]}


def create_app(config: ServerConfig, provider: LmProvider | None = None) -> FastAPI:
    service = XpressService(config, provider)
    app = FastAPI(title="xpress", version=__version__)
    app.state.service = service

    if config.static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        if not config.static_dir.is_dir():
            raise ConfigError(f"static_dir {config.static_dir} is not a directory")
        app.mount("/app", StaticFiles(directory=config.static_dir, html=True), name="app")

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {
            "status": "ok",
            "version": __version__,
            "provider": service.provider.identity,
        }

    @app.get("/banks")
    def banks() -> list[dict[str, Any]]:
        return service.list_banks()

    @app.get("/trajectories")
    def trajectories() -> list[dict[str, Any]]:
        return service.list_trajectories()

    @app.post("/stories")
    def stories(body: dict[str, Any]) -> dict[str, Any]:
        genre = str(body.get("genre", "")).strip()
        if not genre:
            raise HTTPException(status_code=422, detail="genre is required")
        job = service.submit_story_job(genre)
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str) -> dict[str, Any]:
        job = service.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="no such job")
        return {
            "job_id": job.job_id,
            "status": job.status,
            "kind": job.kind,
            "detail": job.detail,
            "result_digest": job.result_digest,
        }

    @app.get("/audio/{digest}")
    def audio(digest: str) -> Response:
        try:
            data = service.store.get("audio", digest)
        except FileNotFoundError:
            raise HTTPException(status_code=404, detail="no such audio") from None
        return Response(content=data, media_type="application/octet-stream")

    @app.websocket("/ws/{session_id}")
    async def renderer_socket(websocket: WebSocket, session_id: str) -> None:
        try:
            session = service.join_session(session_id)
        except KeyError:
            # a renderer is already driving this session id
            await websocket.accept()
            await websocket.send_json(
                {"v": 1, "session": session_id, "seq": 1, "kind": "reset", "error": "session_taken"}
            )
            await websocket.close(code=1008)
            return
        await websocket.accept()
        loop = asyncio.get_running_loop()
        clock = RealClock()
        t0 = clock.now()

        def send(message: WireMessage) -> None:
            # engine work runs in worker threads; sends hop back to the loop
            future = asyncio.run_coroutine_threadsafe(
                websocket.send_text(message.to_json()), loop
            )
            try:
                future.result(timeout=10.0)
            except Exception as exc:
                raise SinkClosedError(str(exc)) from exc

        try:
            await _serve_renderer(
                service, session, websocket, send, lambda: clock.now() - t0, loop
            )
        except (WebSocketDisconnect, SinkClosedError):
            pass
        finally:
            service.leave_session(session_id)

    return app


async def _serve_renderer(service, session, websocket, send, elapsed, loop) -> None:
    """Message loop for one renderer connection.

    Engine work (LM calls, playback scheduling) runs in worker threads so
    the socket stays responsive. Conversation deadlines (speech end, the
    3 s neutral reset) are pumped on every inbound message, so renderers
    heartbeat a few times per second while idle.
    """
    control = SequencedSender(session.session_id, send)

    def offload(fn, *args):
        return loop.run_in_executor(None, functools.partial(fn, *args))

    def pump_engine() -> None:
        engine = session.engine
        if engine is not None and not engine.done:
            deadline = engine.next_deadline()
            while deadline is not None and deadline <= elapsed():
                engine.pump(deadline)
                deadline = engine.next_deadline()

    while True:
        text = await websocket.receive_text()
        try:
            message = WireMessage.from_json(text)
        except XpressError as exc:
            await offload(control.emit, "heartbeat", {"error": str(exc)})
            continue
        await offload(pump_engine)
        if message.kind == "heartbeat":
            await offload(control.emit, "heartbeat", {"t": elapsed()})
            continue
        if message.kind != "client_event":
            await offload(control.emit, "heartbeat", {"error": f"unexpected {message.kind}"})
            continue
        event = message.body.get("event", {})
        etype = event.get("type")
        if etype == "user_choice":
            await offload(_handle_choice, service, session, send, event.get("choice", {}))
        elif etype == "speech" and session.engine is not None:
            words = tuple(str(event.get("text", "")).split())
            await offload(session.engine.handle, SpeechWords(t=elapsed(), words=words))
        elif etype == "end_of_speech" and session.engine is not None:
            await offload(session.engine.handle, EndOfSpeech(t=elapsed()))
        else:
            await offload(
                control.emit, "heartbeat", {"error": f"unhandled client event {etype!r}"}
            )


def _handle_choice(service, session, send, choice: dict) -> None:
    mode = choice.get("mode")
    if mode == "story":
        trajectory = service.load_trajectory(choice["trajectory_digest"])
        audio_body = service.audio_body(trajectory.audio.to_obj())
        report = play_story(
            trajectory,
            RealClock(),
            send,
            session_id=session.session_id,
            audio_body=audio_body,
        )
        session.shadow = report.final_state
    elif mode == "conversation":
        bank = (
            service.load_bank(choice["bank_digest"])
            if choice.get("bank_digest")
            else service.default_bank()
        )
        session.engine = ConversationEngine(
            bank,
            service.provider,
            sink=send,
            session_id=session.session_id,
            templates=service.templates,
            words_per_minute=service.config.words_per_minute,
        )
        session.engine.start(0.0)


def _check_port_free(host: str, port: int) -> None:
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as exc:
            raise PortInUseError(f"port {port} is already in use on {host}") from exc


def serve(config: ServerConfig, provider: LmProvider | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    _check_port_free(config.host, config.port)
    app = create_app(config, provider)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
