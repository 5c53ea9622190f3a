"""HTTP service: sessions, datasets, steps, jobs, graphs, knowledge, reports.

Bearer-token auth with two global roles (owner tokens may create and drive
sessions, viewer tokens only read); per-session access is owner plus an
explicit viewers list, and any probe of a foreign session returns 404 so
existence stays hidden. One step executes at a time per session; long
commands run as polled jobs. Every step persists to a per-session directory
(journal.jsonl plus content-addressed artifact blobs), so a restart replays
byte-identical state.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse

from .errors import (
    CausalabError,
    CommandError,
    CommandRejected,
    NeedsClarification,
    NotFoundError,
)
from .graphs import deserialize, serialize
from .workflow import (
    Calibration,
    LoadData,
    Rollback,
    Session,
    SessionStore,
    SetKnowledge,
    command_from_dict,
    command_to_dict,
    estimate_runtime,
    execute_step,
    generate_report,
    parse_intent,
    profile_dataset,
    recommend,
)
from .workflow.session import StepRecord

CHAT_URL_ENV = "CAUSALAB_CHAT_URL"
CHAT_KEY_ENV = "CAUSALAB_CHAT_KEY"
CHAT_MODEL_ENV = "CAUSALAB_CHAT_MODEL"


@dataclass(frozen=True)
class Principal:
    user: str
    role: str  # owner | viewer


@dataclass
class Job:
    id: str
    session_id: str
    command: dict
    state: str = "queued"  # queued -> running -> succeeded | failed
    progress: float = 0.0
    result_step: int | None = None
    result_ref: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "session_id": self.session_id,
            "command": self.command,
            "state": self.state,
            "progress": self.progress,
            "result_step": self.result_step,
            "result_ref": self.result_ref,
            "error": self.error,
        }


@dataclass
class _Handle:
    session: Session
    lock: threading.Lock = field(default_factory=threading.Lock)
    busy: bool = False


class _Http(Exception):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail


def create_app(
    data_dir: str,
    tokens: dict[str, dict] | None = None,
    max_workers: int = 4,
) -> FastAPI:
    """Build the service. ``tokens`` maps bearer token -> {user, role}."""
    store = SessionStore(data_dir)
    tokens = dict(tokens or {})
    registry: dict[str, _Handle] = {}
    registry_lock = threading.Lock()
    jobs: dict[str, Job] = {}
    executor = ThreadPoolExecutor(max_workers=max_workers)
    calibration_box: dict = {}

    app = FastAPI(title="causalab", version="0.1.0")

    @app.exception_handler(_Http)
    async def _http_handler(request: Request, exc: _Http):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    def authenticate(request: Request) -> Principal:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise _Http(401, "missing bearer token")
        token = header.split(" ", 1)[1].strip()
        info = tokens.get(token)
        if info is None:
            raise _Http(401, "invalid token")
        return Principal(user=info["user"], role=info.get("role", "owner"))

    def handle_for(sid: str) -> _Handle:
        with registry_lock:
            if sid not in registry:
                registry[sid] = _Handle(session=store.load(sid))
            return registry[sid]

    def access(principal: Principal, sid: str, write: bool) -> _Handle:
        if not store.exists(sid):
            raise _Http(404, "not found")
        meta = store.meta(sid)
        is_owner = principal.user == meta["owner"]
        is_viewer = principal.user in meta.get("viewers", [])
        if not (is_owner or is_viewer):
            raise _Http(404, "not found")  # hide existence from strangers
        if write:
            if principal.role != "owner" or not is_owner:
                raise _Http(403, "read-only access")
        return handle_for(sid)

    def acquire(handle: _Handle) -> None:
        # the busy flag serializes steps per session; the lock only guards
        # the flag itself, so competing submits get an immediate 409
        with handle.lock:
            if handle.busy:
                raise _Http(409, "a step is already running for this session")
            handle.busy = True

    def release(handle: _Handle) -> None:
        with handle.lock:
            handle.busy = False

    def execute_and_persist(sid: str, handle: _Handle, cmd) -> StepRecord:
        record = execute_step(handle.session, cmd)
        if isinstance(cmd, Rollback):
            store.set_head(sid, handle.session.head)
        else:
            store.append_record(sid, handle.session, record)
        return record

    def run_step_sync(sid: str, handle: _Handle, cmd) -> StepRecord:
        acquire(handle)
        try:
            return execute_and_persist(sid, handle, cmd)
        except CommandRejected as e:
            raise _Http(409, str(e)) from None
        except NotFoundError as e:
            raise _Http(404, str(e)) from None
        finally:
            release(handle)

    def worker(job: Job, sid: str, handle: _Handle, cmd) -> None:
        # the session's busy flag is already held for this job
        job.state = "running"
        job.progress = 0.5
        final = "failed"
        try:
            record = execute_and_persist(sid, handle, cmd)
            job.result_step = record.id
            job.result_ref = record.output_ref
            if record.status == "ok":
                final = "succeeded"
            else:
                job.error = record.error
        except CausalabError as e:
            job.error = f"{type(e).__name__}: {e}"
        except Exception as e:  # defensive: never leave a job stuck
            job.error = f"internal error: {e}"
        finally:
            # release before the terminal state becomes visible, so a client
            # that polls "succeeded" can submit the next step immediately
            release(handle)
            job.progress = 1.0
            job.state = final

    @app.post("/sessions", status_code=201)
    def create_session(request: Request, payload: dict | None = None):
        principal = authenticate(request)
        if principal.role != "owner":
            raise _Http(403, "viewer tokens cannot create sessions")
        viewers = list((payload or {}).get("viewers", []))
        sid = uuid.uuid4().hex[:12]
        store.create(sid, owner=principal.user, viewers=viewers)
        registry[sid] = _Handle(session=Session())
        return {"id": sid}

    @app.get("/sessions/{sid}")
    def get_session(sid: str, request: Request):
        principal = authenticate(request)
        handle = access(principal, sid, write=False)
        s = handle.session
        state = s.state()
        return {
            "id": sid,
            "head": s.head,
            "journal_length": len(s.journal),
            "datasets": s.dataset_names(),
            "has_graph": "graph" in state,
            "has_truth": "truth_graph" in state,
            "slots": sorted(state.keys()),
            "busy": handle.busy,
        }

    @app.get("/sessions/{sid}/journal")
    def get_journal(sid: str, request: Request):
        principal = authenticate(request)
        access(principal, sid, write=False)
        return PlainTextResponse(
            store.journal_bytes(sid), media_type="application/x-ndjson"
        )

    @app.post("/sessions/{sid}/datasets", status_code=201)
    async def upload_dataset(sid: str, request: Request, file: UploadFile, name: str = "default"):
        principal = authenticate(request)
        handle = access(principal, sid, write=True)
        raw = await file.read()
        try:
            text = raw.decode("utf-8-sig")
        except UnicodeDecodeError:
            raise _Http(422, "dataset must be UTF-8 CSV") from None
        try:
            cmd = LoadData(name=name, csv_text=text)
        except CommandError as e:
            raise _Http(422, {"message": str(e), "fields": e.field_errors}) from None
        record = run_step_sync(sid, handle, cmd)
        if record.status == "failed":
            raise _Http(422, record.error)
        return {"record": record.to_dict()}

    @app.post("/sessions/{sid}/steps", status_code=202)
    def submit_step(sid: str, request: Request, payload: dict):
        principal = authenticate(request)
        handle = access(principal, sid, write=True)
        try:
            cmd = command_from_dict(payload)
        except CommandError as e:
            raise _Http(
                422, {"message": str(e), "fields": e.field_errors}
            ) from None
        acquire(handle)
        job = Job(id=uuid.uuid4().hex[:12], session_id=sid, command=command_to_dict(cmd))
        jobs[job.id] = job
        executor.submit(worker, job, sid, handle, cmd)
        return {"job_id": job.id, "job": job.to_dict()}

    @app.get("/sessions/{sid}/jobs/{jid}")
    def get_job(sid: str, request: Request, jid: str):
        principal = authenticate(request)
        access(principal, sid, write=False)
        job = jobs.get(jid)
        if job is None or job.session_id != sid:
            raise _Http(404, "not found")
        return job.to_dict()

    @app.post("/sessions/{sid}/rollback/{step_id}")
    def rollback_step(sid: str, request: Request, step_id: int):
        principal = authenticate(request)
        handle = access(principal, sid, write=True)
        record = run_step_sync(sid, handle, Rollback(step_id=step_id))
        return {"head": handle.session.head, "record": record.to_dict()}

    @app.get("/sessions/{sid}/graph")
    def get_graph(sid: str, request: Request, format: str = "json"):
        principal = authenticate(request)
        handle = access(principal, sid, write=False)
        state = handle.session.state()
        if "graph" not in state:
            raise _Http(404, "no graph in session")
        text = handle.session.artifact(state["graph"]).decode()
        if format == "dot":
            return PlainTextResponse(
                serialize(deserialize(text), "dot"), media_type="text/vnd.graphviz"
            )
        if format != "json":
            raise _Http(422, "format must be json or dot")
        return Response(text, media_type="application/json")

    @app.patch("/sessions/{sid}/knowledge")
    def patch_knowledge(sid: str, request: Request, payload: dict):
        principal = authenticate(request)
        handle = access(principal, sid, write=True)
        try:
            cmd = SetKnowledge(
                forbid=tuple(map(tuple, payload.get("forbid", []))),
                require=tuple(map(tuple, payload.get("require", []))),
            )
        except CommandError as e:
            raise _Http(422, {"message": str(e), "fields": e.field_errors}) from None
        record = run_step_sync(sid, handle, cmd)
        if record.status == "failed":
            raise _Http(422, record.error)
        return {"record": record.to_dict()}

    @app.get("/sessions/{sid}/report")
    def get_report(sid: str, request: Request):
        principal = authenticate(request)
        handle = access(principal, sid, write=False)
        try:
            text = generate_report(handle.session)
        except CausalabError as e:
            raise _Http(409, str(e)) from None
        return PlainTextResponse(text, media_type="text/markdown")

    @app.get("/sessions/{sid}/artifacts/{ref}")
    def get_artifact(sid: str, request: Request, ref: str):
        principal = authenticate(request)
        handle = access(principal, sid, write=False)
        try:
            blob = handle.session.artifact(ref)
        except NotFoundError:
            raise _Http(404, "not found") from None
        media = handle.session.media.get(ref, "application/octet-stream")
        return Response(blob, media_type=media)

    @app.get("/sessions/{sid}/recommendations")
    def get_recommendations(
        sid: str, request: Request, goal: str = "graph", dataset: str = "default"
    ):
        principal = authenticate(request)
        handle = access(principal, sid, write=False)
        session = handle.session
        names = session.dataset_names()
        if dataset not in names:
            if not names:
                raise _Http(409, "no dataset loaded")
            dataset = names[0]
        profile = profile_dataset(session.dataset(dataset))
        graph_present = "graph" in session.state()
        try:
            recs = recommend(profile, goal, graph_present=graph_present)
        except CausalabError as e:
            raise _Http(409, str(e)) from None
        if "calibration" not in calibration_box:
            calibration_box["calibration"] = Calibration.measure()
        calib = calibration_box["calibration"]
        out = []
        for rec in recs:
            entry = {"method": rec.method, "rule": rec.rule}
            try:
                entry["runtime"] = estimate_runtime(rec.method, profile, calib).to_dict()
            except CausalabError:
                entry["runtime"] = None
            out.append(entry)
        return {
            "goal": goal,
            "dataset": dataset,
            "profile": profile.to_dict(),
            "recommendations": out,
        }

    @app.post("/sessions/{sid}/chat")
    def chat(sid: str, request: Request, payload: dict):
        principal = authenticate(request)
        access(principal, sid, write=False)
        text = str(payload.get("text", ""))
        chat_url = os.environ.get(CHAT_URL_ENV)
        if chat_url:
            translated = _chat_adapter(chat_url, text)
            if translated is not None:
                return translated
        try:
            cmd = parse_intent(text)
        except NeedsClarification as e:
            return {
                "clarification": {"message": str(e), "suggestions": e.suggestions}
            }
        return {"command": command_to_dict(cmd)}

    return app


def _chat_adapter(url: str, text: str) -> dict | None:
    """Translate free text into a command via an external chat-completions
    endpoint; the result is schema-validated before it is returned. Returns
    None to fall back to the built-in grammar."""
    import urllib.request

    body = {
        "model": os.environ.get(CHAT_MODEL_ENV, "default"),
        "messages": [
            {
                "role": "system",
                "content": (
                    "Translate the user's request into one JSON workflow command "
                    "object with a 'kind' field; respond with JSON only."
                ),
            },
            {"role": "user", "content": text},
        ],
    }
    req = urllib.request.Request(
        url,
        data=json.dumps(body).encode(),
        headers={
            "Content-Type": "application/json",
            "Authorization": f"Bearer {os.environ.get(CHAT_KEY_ENV, '')}",
        },
    )
    try:
        with urllib.request.urlopen(req, timeout=30) as resp:
            reply = json.loads(resp.read())
        content = reply["choices"][0]["message"]["content"]
        cmd = command_from_dict(json.loads(content))
        return {"command": command_to_dict(cmd)}
    except Exception as e:
        return {
            "clarification": {
                "message": f"chat endpoint failed: {e}",
                "suggestions": [],
            }
        }


def load_tokens(path: str) -> dict[str, dict]:
    """tokens.json: {"<token>": {"user": "alice", "role": "owner"}, ...}"""
    with open(path) as f:
        return json.load(f)
