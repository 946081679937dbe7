"""HTTP task board turning engine runs into live, human-answered sessions.

A session owns an immutable config (dataset manifest, algorithm, parameters)
plus an append-only event log; everything else is derived.  Workers pull
pending tasks and submit assignments; when a task collects its k assignments
the majority (or per-attribute plurality) aggregate resolves it and the
engine advances, publishing new frontier tasks and canceling any
sibling task whose answer became inferable, atomically with the resolution.

Only assignment events are true inputs: reloading a session replays them
through the same code path, so killing the process at any log prefix and
restarting reconverges to the same board, counts, and verdict.  Late answers
to canceled tasks are logged for audit but never affect state.

The set-query search runs as an explicit state machine so its whole frontier
can sit on the board at once; the other algorithms run on a worker thread
against a source that publishes each query and blocks until workers resolve
it.
"""

from __future__ import annotations

import json
import mimetypes
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .aggregation import multiple_coverage
from .classifier import PredictionSet, classifier_coverage
from .collection import ItemCollection
from .engine import GroupCoverageRun, base_coverage
from .errors import AnswerSourceError, ConfigError, CrowdCoverError
from .lattice import intersectional_coverage
from .schema import Group
from .sources import AnswerSource, majority, plurality
from .tasks import QueryKind, QueryTask

SET_QUERY_ALGORITHMS = {"group", "multiple", "intersectional", "classifier"}


@dataclass(frozen=True)
class SessionConfig:
    algorithm: str
    manifest: dict
    group: dict[str, str] | None = None
    attribute: str | None = None
    n: int = 50
    tau: int = 50
    c: int = 2
    k: int = 3
    seed: int = 0
    negated: bool = False
    created_ts: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> SessionConfig:
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{**{"created_ts": time.time()}, **data})
        if cfg.algorithm not in {"group", "base", "multiple", "intersectional", "classifier"}:
            raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")
        if cfg.k < 1:
            raise ConfigError("k must be >= 1")
        if cfg.algorithm in SET_QUERY_ALGORITHMS and cfg.k % 2 == 0:
            raise ConfigError("set-query sessions need an odd k")
        if cfg.n < 1 or cfg.tau < 1 or cfg.c < 1:
            raise ConfigError("n, tau, c must be >= 1")
        if cfg.algorithm in {"group", "base", "classifier"} and not cfg.group:
            raise ConfigError(f"algorithm {cfg.algorithm!r} needs a target group")
        if cfg.algorithm == "multiple" and not cfg.attribute:
            raise ConfigError("multiple-coverage needs an attribute")
        return cfg

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "manifest": self.manifest,
            "group": self.group,
            "attribute": self.attribute,
            "n": self.n,
            "tau": self.tau,
            "c": self.c,
            "k": self.k,
            "seed": self.seed,
            "negated": self.negated,
            "created_ts": self.created_ts,
        }


class RequestError(CrowdCoverError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


PENDING = "pending"
ANSWERING = "answering"
RESOLVED = "resolved"
CANCELED = "canceled"


@dataclass
class BoardTask:
    board_id: str
    query: QueryTask
    required: int
    status: str = PENDING
    answers: list[tuple[str, object]] = field(default_factory=list)
    aggregate: object = None
    node: object = None  # SearchNode for machine-driven sessions

    @property
    def workers(self) -> set[str]:
        return {w for w, _ in self.answers}

    def to_json(self, schema=None) -> dict:
        q = self.query
        body = {
            "task_id": self.board_id,
            "kind": q.kind.value,
            "question_text": q.question_text(),
            "negated": q.negated,
            "group": q.target_label(),
            "items": [
                {"id": i, "image_url": f"/items/{i}/image"} for i in q.item_ids
            ],
            "status": self.status,
            "required_assignments": self.required,
            "answers_received": len(self.answers),
        }
        if q.kind is QueryKind.POINT:
            body["attributes"] = list(q.attributes)
            if schema is not None:
                body["options"] = {
                    a: list(schema.attributes[schema.index_of(a)].values)
                    for a in q.attributes
                }
        return body


class _BridgeSource(AnswerSource):
    """Publishes tasks on the session board and blocks until they resolve."""

    def __init__(self, session: Session):
        super().__init__()
        self.session = session

    def _await(self, board_ids: list[str]):
        s = self.session
        with s.cond:
            while True:
                if s.closed:
                    raise AnswerSourceError("session closed")
                tasks = [s.board[b] for b in board_ids]
                if all(t.status == RESOLVED for t in tasks):
                    return [t.aggregate for t in tasks]
                s.cond.wait(timeout=1.0)

    def _answer_set(self, task: QueryTask):
        with self.session.cond:
            board_id = self.session.publish(task)
        (agg,) = self._await([board_id])
        return bool(agg), self.session.board[board_id].required

    def _answer_point(self, task: QueryTask):
        with self.session.cond:
            board_id = self.session.publish(task)
        (agg,) = self._await([board_id])
        return dict(agg), len(self.session.board[board_id].answers)

    def answer_point_batch(self, tasks):
        with self.session.cond:
            ids = [self.session.publish(t) for t in tasks]
            for t in tasks:
                self._register(t, QueryKind.POINT)
        aggs = self._await(ids)
        with self._lock:
            self._tasks_issued += len(tasks)
            self._assignments_issued += sum(
                len(self.session.board[b].answers) for b in ids
            )
        return [dict(a) for a in aggs]


class Session:
    """One live coverage-audit session."""

    def __init__(self, session_id: str, config: SessionConfig, directory: Path | None):
        self.session_id = session_id
        self.config = config
        self.directory = directory
        self.cond = threading.Condition(threading.RLock())
        self.board: dict[str, BoardTask] = {}
        self.events: list[dict] = []
        self.status = "running"
        self.verdict: dict | None = None
        self.error: str | None = None
        self.closed = False
        self.replaying = False
        self.canceled_answered = 0
        self._event_ts = config.created_ts
        self._seq = 0
        self.collection = ItemCollection.from_manifest(config.manifest)
        self._run: GroupCoverageRun | None = None
        self._node_answers: dict[str, bool] = {}
        self._thread: threading.Thread | None = None

    # -- target helpers ---------------------------------------------------

    def _target_group(self) -> Group:
        assert self.config.group is not None
        return Group.from_values(self.collection.schema, self.config.group)

    # -- event log --------------------------------------------------------

    def _emit(self, type_: str, payload: dict) -> None:
        self._seq += 1
        event = {"seq": self._seq, "ts": self._event_ts, "type": type_, "payload": payload}
        self.events.append(event)
        if not self.replaying and self.directory is not None:
            with open(self.directory / "events.jsonl", "a") as fh:
                fh.write(json.dumps(event) + "\n")

    def rewrite_log(self) -> None:
        if self.directory is None:
            return
        tmp = self.directory / "events.jsonl.tmp"
        with open(tmp, "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event) + "\n")
        tmp.replace(self.directory / "events.jsonl")

    # -- board ------------------------------------------------------------

    def publish(self, query: QueryTask, node=None) -> str:
        board_id = f"{self.session_id}.{query.task_id}"
        if board_id in self.board:
            raise ConfigError(f"task {board_id} already published")
        task = BoardTask(board_id=board_id, query=query, required=self.config.k, node=node)
        self.board[board_id] = task
        self._emit(
            "created",
            {
                "task_id": board_id,
                "kind": query.kind.value,
                "items": list(query.item_ids),
                "group": query.target_label(),
                "negated": query.negated,
                "attributes": list(query.attributes),
                "required_assignments": task.required,
            },
        )
        self.cond.notify_all()
        return board_id

    def _cancel(self, board_id: str, reason: str) -> None:
        task = self.board[board_id]
        if task.status in (RESOLVED, CANCELED):
            return
        task.status = CANCELED
        if task.answers:
            self.canceled_answered += 1
        self._emit("canceled", {"task_id": board_id, "reason": reason})

    def tasks(self, status: str = "open") -> list[BoardTask]:
        with self.cond:
            wanted = {
                "open": (PENDING, ANSWERING),
                "pending": (PENDING, ANSWERING),
                "all": (PENDING, ANSWERING, RESOLVED, CANCELED),
            }.get(status, (status,))
            return [t for t in self.board.values() if t.status in wanted]

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        with self.cond:
            if self.config.algorithm == "group":
                self._start_group_machine()
            else:
                self._start_bridge_thread()

    def _start_group_machine(self) -> None:
        self._run = GroupCoverageRun(
            self.collection,
            self._target_group(),
            n=self.config.n,
            tau=self.config.tau,
            negated=self.config.negated,
        )
        if self._run.finished:
            self._finish_group()
            return
        for node in self._run.pending():
            self.publish(self._run.task_for(node), node=node)

    def _start_bridge_thread(self) -> None:
        self._bridge = _BridgeSource(self)
        self._thread = threading.Thread(
            target=self._run_bridge_algorithm, name=f"session-{self.session_id}", daemon=True
        )
        self._thread.start()

    def _run_bridge_algorithm(self) -> None:
        cfg = self.config
        source = self._bridge
        try:
            if cfg.algorithm == "base":
                verdict = base_coverage(
                    self.collection, self._target_group(), tau=cfg.tau, source=source
                )
                payload = verdict.to_json()
            elif cfg.algorithm == "multiple":
                schema = self.collection.schema
                attr = schema.attributes[schema.index_of(cfg.attribute)]
                groups = [Group.single(schema, attr.name, v) for v in attr.values]
                report = multiple_coverage(
                    self.collection, groups, n=cfg.n, tau=cfg.tau, c=cfg.c,
                    source=source, seed=cfg.seed,
                )
                payload = {"verdicts": [v.to_json() for v in report.verdicts]}
            elif cfg.algorithm == "intersectional":
                report = intersectional_coverage(
                    self.collection, n=cfg.n, tau=cfg.tau, c=cfg.c,
                    source=source, seed=cfg.seed,
                )
                payload = {"mups": report.mup_report.to_json()}
            else:  # classifier
                predictions = PredictionSet.from_collection(
                    self.collection, self._target_group()
                )
                report = classifier_coverage(
                    self.collection, predictions, n=cfg.n, tau=cfg.tau,
                    source=source, seed=cfg.seed,
                )
                payload = {
                    **report.verdict.to_json(),
                    "strategy": report.strategy,
                    "precision": report.precision,
                }
        except AnswerSourceError:
            return  # session was closed under us
        except CrowdCoverError as err:
            with self.cond:
                self.status = "failed"
                self.error = str(err)
                self._emit("verdict", {"error": str(err)})
                self.cond.notify_all()
            return
        with self.cond:
            self._finish("done", payload)

    def _finish(self, status: str, payload: dict) -> None:
        for board_id, task in self.board.items():
            if task.status in (PENDING, ANSWERING):
                self._cancel(board_id, "session finished")
        self.status = status
        self.verdict = payload
        self._emit("verdict", payload)
        self.cond.notify_all()

    def _finish_group(self) -> None:
        run = self._run
        assert run is not None and run.finished
        run.drain()
        assignments = sum(
            len(t.answers) for t in self.board.values() if t.status == RESOLVED
        )
        verdict = run.verdict(assignments_issued=assignments)
        self._finish("done", verdict.to_json())

    # -- assignment intake ----------------------------------------------------

    def live_cnt(self) -> int | None:
        return self._run.cnt if self._run is not None else None

    def submit(self, board_id: str, worker_id: str, answer, *, ts: float) -> dict:
        with self.cond:
            task = self.board.get(board_id)
            if task is None:
                raise RequestError(404, "unknown task")
            if not worker_id or not isinstance(worker_id, str):
                raise RequestError(400, "worker_id required")
            if task.status == RESOLVED:
                raise RequestError(409, "task already resolved")
            if worker_id in task.workers:
                raise RequestError(409, "worker already answered this task")
            answer = self._validate_answer(task.query, answer)
            self._event_ts = ts
            if task.status == CANCELED:
                # logged for audit, never affects state
                self.canceled_answered += 1
                self._emit(
                    "assigned",
                    {"task_id": board_id, "worker_id": worker_id, "answer": answer},
                )
                return {"status": CANCELED, "remaining_assignments": 0}
            task.answers.append((worker_id, answer))
            task.status = ANSWERING
            self._emit(
                "assigned",
                {"task_id": board_id, "worker_id": worker_id, "answer": answer},
            )
            if len(task.answers) >= task.required:
                self._try_resolve(task)
            remaining = max(0, task.required - len(task.answers))
            return {"status": task.status, "remaining_assignments": remaining}

    def _validate_answer(self, query: QueryTask, answer):
        if query.kind is QueryKind.SET:
            if answer not in ("yes", "no"):
                raise RequestError(400, "set-query answer must be 'yes' or 'no'")
            return answer
        if not isinstance(answer, dict):
            raise RequestError(400, "point-query answer must map attribute to value")
        schema = self.collection.schema
        out = {}
        for attr in query.attributes:
            if attr not in answer:
                raise RequestError(400, f"missing answer for attribute {attr!r}")
            values = schema.attributes[schema.index_of(attr)].values
            if answer[attr] not in values:
                raise RequestError(400, f"invalid value {answer[attr]!r} for {attr!r}")
            out[attr] = answer[attr]
        return out

    def _try_resolve(self, task: BoardTask) -> None:
        if task.query.kind is QueryKind.SET:
            agg = majority([a == "yes" for _, a in task.answers])
            if agg is None:  # even k never configured for sets, but stay safe
                task.required += 1
                return
        else:
            agg = plurality([a for _, a in task.answers], task.query.attributes)
            if agg is None:
                task.required += 1  # plurality tie: ask one more worker
                return
        task.status = RESOLVED
        task.aggregate = agg
        self._emit("resolved", {"task_id": task.board_id, "aggregate": agg})
        if self._run is not None:
            self._node_answers[task.board_id] = bool(agg)
            self._advance_group_machine()
        self.cond.notify_all()

    def _advance_group_machine(self) -> None:
        run = self._run
        assert run is not None
        while not run.finished:
            head = run.head()
            if head is None:
                break
            board_id = f"{self.session_id}.{run.task_for(head).task_id}"
            if board_id not in self._node_answers:
                return  # head still unanswered; wait for workers
            step = run.resolve_head(self._node_answers.pop(board_id))
            if step.inferred is not None:
                inferred_id = f"{self.session_id}.{run.task_for(step.inferred).task_id}"
                self._cancel(inferred_id, "answer inferred from sibling")
            for node in step.enqueued:
                self.publish(run.task_for(node), node=node)
        if run.finished and self.status == "running":
            self._finish_group()

    # -- persistence ----------------------------------------------------------

    def persist_config(self) -> None:
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        (self.directory / "config.json").write_text(json.dumps(self.config.to_dict()))

    def close(self) -> None:
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def snapshot(self) -> dict:
        with self.cond:
            counts = {PENDING: 0, ANSWERING: 0, RESOLVED: 0, CANCELED: 0}
            assignments = 0
            for t in self.board.values():
                counts[t.status] += 1
                if t.status == RESOLVED:
                    assignments += len(t.answers)
            return {
                "session_id": self.session_id,
                "algorithm": self.config.algorithm,
                "status": self.status,
                "tasks": {
                    "published": len(self.board),
                    "pending": counts[PENDING] + counts[ANSWERING],
                    "resolved": counts[RESOLVED],
                    "canceled": counts[CANCELED],
                    "canceled_answered": self.canceled_answered,
                },
                "assignments": assignments,
                "cnt": self.live_cnt(),
                "verdict": self.verdict,
                "error": self.error,
            }


def _wait_for(predicate, cond: threading.Condition, timeout: float) -> bool:
    deadline = time.monotonic() + timeout
    with cond:
        while not predicate():
            left = deadline - time.monotonic()
            if left <= 0:
                return False
            cond.wait(timeout=left)
        return True


class TaskService:
    """Session registry with disk persistence and replay."""

    def __init__(self, data_dir: str | Path | None = None):
        self.data_dir = Path(data_dir) if data_dir else None
        self.sessions: dict[str, Session] = {}
        self._lock = threading.RLock()

    def _session_dir(self, session_id: str) -> Path | None:
        if self.data_dir is None:
            return None
        return self.data_dir / "sessions" / session_id

    def create_session(self, config_data: dict) -> Session:
        config = SessionConfig.from_dict(config_data)
        session_id = uuid.uuid4().hex[:12]
        session = Session(session_id, config, self._session_dir(session_id))
        session.persist_config()
        with self._lock:
            self.sessions[session_id] = session
        session.start()
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id in self.sessions:
                return self.sessions[session_id]
        session = self._load(session_id)
        with self._lock:
            self.sessions[session_id] = session
        return session

    def _load(self, session_id: str) -> Session:
        directory = self._session_dir(session_id)
        if directory is None or not (directory / "config.json").exists():
            raise RequestError(404, "unknown session")
        config = SessionConfig.from_dict(json.loads((directory / "config.json").read_text()))
        events = []
        log = directory / "events.jsonl"
        if log.exists():
            for line in log.read_text().splitlines():
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # tolerate a torn tail write
        session = Session(session_id, config, directory)
        session.replaying = True
        session.start()
        for event in events:
            if event["type"] != "assigned":
                continue
            payload = event["payload"]
            ok = _wait_for(
                lambda: payload["task_id"] in session.board, session.cond, timeout=10.0
            )
            if not ok:
                raise ConfigError(f"replay stuck waiting for {payload['task_id']}")
            try:
                session.submit(
                    payload["task_id"],
                    payload["worker_id"],
                    payload["answer"],
                    ts=event["ts"],
                )
            except RequestError:
                pass  # duplicates cannot arise from a consistent log; stay lenient
        session.replaying = False
        session.rewrite_log()
        return session

    def find_task(self, board_id: str) -> tuple[Session, BoardTask]:
        session_id = board_id.split(".", 1)[0]
        session = self.get(session_id)
        task = session.board.get(board_id)
        if task is None:
            raise RequestError(404, "unknown task")
        return session, task

    def image_bytes(self, item_id: str) -> tuple[bytes, str]:
        with self._lock:
            sessions = list(self.sessions.values())
        for session in reversed(sessions):
            try:
                ref = session.collection.image_ref(item_id)
            except CrowdCoverError:
                continue
            if ref and Path(ref).exists():
                ctype = mimetypes.guess_type(ref)[0] or "application/octet-stream"
                return Path(ref).read_bytes(), ctype
        raise RequestError(404, "no image for item")

    def evict_all(self) -> None:
        """Drop in-memory state; sessions reload from disk on demand."""

        with self._lock:
            for session in self.sessions.values():
                session.close()
            self.sessions.clear()


# -- HTTP layer ---------------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create_session"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[^/]+)$"), "session_status"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[^/]+)/tasks$"), "session_tasks"),
    ("GET", re.compile(r"^/sessions/(?P<sid>[^/]+)/log$"), "session_log"),
    ("POST", re.compile(r"^/tasks/(?P<tid>[^/]+)/assignments$"), "submit_assignment"),
    ("GET", re.compile(r"^/items/(?P<iid>[^/]+)/image$"), "item_image"),
]


class ServiceHandler(BaseHTTPRequestHandler):
    service: TaskService
    static_dir: Path | None = None
    protocol_version = "HTTP/1.1"  # keep-alive; every response sets Content-Length

    def log_message(self, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, data: bytes, ctype: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            raise RequestError(400, "request body is not valid JSON") from None

    def _dispatch(self, method: str) -> None:
        path, _, query = self.path.partition("?")
        try:
            for verb, pattern, name in _ROUTES:
                m = pattern.match(path)
                if m and verb == method:
                    getattr(self, name)(query=query, **m.groupdict())
                    return
            if method == "GET" and self._serve_static(path):
                return
            raise RequestError(404, "no such endpoint")
        except RequestError as err:
            self._send_json(err.status, {"error": str(err)})
        except ConfigError as err:
            self._send_json(400, {"error": str(err)})
        except CrowdCoverError as err:
            self._send_json(500, {"error": str(err)})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    # -- endpoints ---------------------------------------------------------

    def create_session(self, query: str) -> None:
        session = self.service.create_session(self._body())
        self._send_json(201, {"session_id": session.session_id})

    def session_status(self, sid: str, query: str) -> None:
        self._send_json(200, self.service.get(sid).snapshot())

    def session_tasks(self, sid: str, query: str) -> None:
        status = "pending"
        for part in query.split("&"):
            if part.startswith("status="):
                status = part.split("=", 1)[1]
        session = self.service.get(sid)
        tasks = session.tasks(status)
        schema = session.collection.schema
        self._send_json(200, [t.to_json(schema) for t in tasks])

    def session_log(self, sid: str, query: str) -> None:
        session = self.service.get(sid)
        with session.cond:
            body = "\n".join(json.dumps(e) for e in session.events)
        data = (body + "\n" if body else "").encode()
        self._send_bytes(data, "application/x-ndjson")

    def submit_assignment(self, tid: str, query: str) -> None:
        body = self._body()
        session, _ = self.service.find_task(tid)
        result = session.submit(
            tid, body.get("worker_id"), body.get("answer"), ts=time.time()
        )
        self._send_json(200, result)

    def item_image(self, iid: str, query: str) -> None:
        data, ctype = self.service.image_bytes(iid)
        self._send_bytes(data, ctype)

    def _serve_static(self, path: str) -> bool:
        if self.static_dir is None:
            return False
        rel = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            return False
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send_bytes(target.read_bytes(), ctype)
        return True


def make_server(
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    data_dir: str | Path | None = None,
    static_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    service = TaskService(data_dir)
    handler = type(
        "BoundHandler",
        (ServiceHandler,),
        {
            "service": service,
            "static_dir": Path(static_dir) if static_dir else None,
        },
    )
    server = ThreadingHTTPServer((host, port), handler)
    server.service = service  # type: ignore[attr-defined]
    return server
