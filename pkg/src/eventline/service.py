"""HTTP service over a store: ingest documents, list events, build timelines.

Endpoints (bodies are single JSON objects):

    GET  /healthz                                  -> {"status", "events"}
    GET  /events?from=<ts>&to=<ts>                 -> {"events": [...]}
    GET  /timeline?query_event_id=<id>&generator=  -> timeline payload
    POST /ingest                                   <- Document JSON

Timeline payloads always contain a timeline that passes validation: when
the external backend replies with something unparseable the oracle result
is substituted and flagged (HTTP 200, "fallback": true); when the backend
is unreachable the response is HTTP 503 but still carries the oracle
fallback timeline. Ingestion is single-writer behind a lock; reads are
safe at any time and see committed state only.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .client import GenerationClient, GenerationError, GenerationRequest
from .cluster import StreamOrderError
from .config import Config
from .core import Document, QueryEvent, validate_timeline
from .embed import HashingEmbedder
from .pipeline import PipelineWorker
from .store import EventStore, RetrievalConfig
from .timeline import CandidateSet, OracleParams, external_generate, oracle_generate


class TimelineService:
    """Request-handling core, independent of the HTTP plumbing."""

    def __init__(self, config: Config, store: EventStore,
                 generate_fn=None):
        self.config = config
        self.store = store
        self.worker = PipelineWorker(config, store)
        self.retrieval = RetrievalConfig(k=config.k, window_days=config.window_days)
        self.oracle_params = OracleParams(
            relevance_threshold=config.relevance_threshold,
            dedup_threshold=config.dedup_threshold,
            max_events=config.max_timeline_events,
        )
        self.embedder = HashingEmbedder(config.retrieval_dim, config.retrieval_seed)
        self._write_lock = threading.Lock()
        if generate_fn is not None:
            self._generate_fn = generate_fn
        elif config.external_base_url:
            client = GenerationClient(
                base_url=config.external_base_url, model=config.external_model,
                timeout_s=config.external_timeout_s, retries=config.external_retries,
                backoff_s=config.external_backoff_s,
                max_in_flight=config.external_max_in_flight)
            self._generate_fn = lambda prompt: client.generate(
                GenerationRequest(prompt=prompt)).text
        else:
            self._generate_fn = None

    # Each handler returns (http_status, payload_dict).

    def healthz(self) -> tuple[int, dict]:
        return 200, {"status": "ok", "events": len(self.store)}

    def events(self, t_from: int, t_to: int) -> tuple[int, dict]:
        events = self.store.events_in_range(t_from, t_to)
        return 200, {"events": [e.to_dict() for e in events]}

    def ingest(self, doc: Document) -> tuple[int, dict]:
        with self._write_lock:
            try:
                assignment, sealed = self.worker.ingest_document(doc)
            except StreamOrderError as exc:
                return 400, {"error": str(exc)}
            except ValueError as exc:
                return 400, {"error": str(exc)}
            self.store.commit()
        return 200, {
            "accepted": True,
            "cluster_id": assignment.cluster_id,
            "created_new": assignment.created_new,
            "sealed_event_ids": sealed,
        }

    def timeline(self, query_event_id: str, generator: str) -> tuple[int, dict]:
        if generator not in ("oracle", "external"):
            return 400, {"error": f"unknown generator: {generator!r}"}
        try:
            event = self.store.get(query_event_id)
        except KeyError:
            return 404, {"error": f"unknown event id: {query_event_id!r}"}

        query = QueryEvent(event=event)
        cs = CandidateSet(query=query,
                          candidates=tuple(self.store.retrieve(query, self.retrieval)))

        status = 200
        if generator == "external":
            if self._generate_fn is None:
                result = oracle_generate(cs, self.oracle_params, self.embedder)
                meta = {"generator": "oracle", "fallback": True,
                        "reason": "no external backend configured"}
                status = 503
            else:
                try:
                    result, meta = external_generate(
                        cs, self._generate_fn, self.oracle_params, self.embedder)
                except GenerationError as exc:
                    result = oracle_generate(cs, self.oracle_params, self.embedder)
                    meta = {"generator": "oracle", "fallback": True, "reason": str(exc)}
                    status = 503
        else:
            result = oracle_generate(cs, self.oracle_params, self.embedder)
            meta = {"generator": "oracle", "fallback": False}

        violations = validate_timeline(result.events, query, cs.candidates)
        payload = {
            "timeline": result.to_dict(),
            "violations": [{"kind": v.kind.value, "detail": v.detail}
                           for v in violations],
            **meta,
        }
        return status, payload

    def shutdown(self) -> None:
        with self._write_lock:
            self.worker.drain()
            self.store.commit()


def _make_handler(service: TimelineService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            params = parse_qs(url.query)
            if url.path == "/healthz":
                self._reply(*service.healthz())
            elif url.path == "/events":
                try:
                    t_from = int(params.get("from", ["0"])[0])
                    t_to = int(params.get("to", [str(2 ** 62)])[0])
                except ValueError:
                    self._reply(400, {"error": "from/to must be integer timestamps"})
                    return
                self._reply(*service.events(t_from, t_to))
            elif url.path == "/timeline":
                qid = params.get("query_event_id", [""])[0]
                if not qid:
                    self._reply(400, {"error": "query_event_id is required"})
                    return
                generator = params.get("generator", ["oracle"])[0]
                self._reply(*service.timeline(qid, generator))
            else:
                self._reply(404, {"error": f"no such path: {url.path}"})

        def do_POST(self):
            url = urlparse(self.path)
            if url.path != "/ingest":
                self._reply(404, {"error": f"no such path: {url.path}"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            try:
                doc = Document.from_dict(json.loads(raw))
            except (ValueError, KeyError, TypeError) as exc:
                self._reply(400, {"error": f"malformed document: {exc}"})
                return
            self._reply(*service.ingest(doc))

    return Handler


def serve(service: TimelineService, host: str = "127.0.0.1",
          port: int = 8080) -> ThreadingHTTPServer:
    """Bind and return the HTTP server; the caller runs serve_forever()."""
    return ThreadingHTTPServer((host, port), _make_handler(service))
