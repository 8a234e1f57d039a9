"""HTTP API for the triage loop: queue review, relabeling, proposal
decisions, and retraining, with an append-only event feed.

All state lives server-side; every mutation funnels through one lock.
Proposals are computed lazily from the current pending set and cached
for the triage round; a retrain clears them.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .continual import (
    RelabelRequest,
    RetrainConfig,
    apply_proposal,
    cluster_novelties,
    reject_proposal,
    retrain,
    should_retrain,
)
from .data_io import sample_to_json_dict
from .errors import (
    DuplicateClass,
    InvalidTransition,
    NovemoError,
    UnresolvedNovelties,
)
from .novelty import NoveltyBuffer
from .pipeline import ModelBundle


@dataclass
class ApiEvent:
    seq: int
    kind: str      # verdict | proposal | relabel | retrain-start | retrain-done
    payload: dict

    def to_json_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


@dataclass
class ServiceState:
    bundle: ModelBundle
    buffer: NoveltyBuffer
    train_set: list = field(default_factory=list)
    probe_set: list = field(default_factory=list)
    retrain_config: RetrainConfig = field(default_factory=RetrainConfig)
    min_pending: int = 50
    k_max: int = 5
    theta_new: int = 10
    cluster_seed: int = 0
    events: list[ApiEvent] = field(default_factory=list)
    proposals: list | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def emit(self, kind: str, payload: dict) -> ApiEvent:
        event = ApiEvent(seq=len(self.events) + 1, kind=kind, payload=payload)
        self.events.append(event)
        return event

    def ensure_proposals(self):
        if self.proposals is None and self.buffer.pending_count() > 0:
            proposals, _ = cluster_novelties(
                self.buffer, k_max=self.k_max, theta_new=self.theta_new,
                seed=self.cluster_seed)
            # namespace ids by bundle version so triage rounds never collide
            for i, p in enumerate(proposals, start=1):
                p.proposal_id = f"v{self.bundle.version}-prop-{i}"
            self.proposals = proposals
            for p in proposals:
                self.emit("proposal", p.to_json_dict())
        return self.proposals or []

    def find_proposal(self, proposal_id: str):
        for p in self.proposals or []:
            if p.proposal_id == proposal_id:
                return p
        return None


def _entry_card(entry) -> dict:
    return {
        "id": entry.sample.id,
        "status": entry.status,
        "verdict": entry.verdict.to_json_dict(),
        "resolved_label": entry.resolved_label,
        "proposal_id": entry.proposal_id,
        "consumed": entry.consumed,
        "timestamp": entry.timestamp,
    }


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="novemo triage service")
    app.state.service = state

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):
        if isinstance(exc, (DuplicateClass, InvalidTransition, UnresolvedNovelties)):
            return JSONResponse(status_code=409,
                                content={"error": type(exc).__name__, "message": str(exc)})
        if isinstance(exc, NovemoError):
            return JSONResponse(status_code=400,
                                content={"error": type(exc).__name__, "message": str(exc)})
        raise exc

    async def read_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            return None
        return body if isinstance(body, dict) else None

    def bad_request(message: str) -> JSONResponse:
        return JSONResponse(status_code=400,
                            content={"error": "BadRequest", "message": message})

    def not_found(message: str) -> JSONResponse:
        return JSONResponse(status_code=404,
                            content={"error": "NotFound", "message": message})

    def conflict(message: str) -> JSONResponse:
        return JSONResponse(status_code=409,
                            content={"error": "Conflict", "message": message})

    @app.get("/status")
    def status():
        with state.lock:
            proposals = state.ensure_proposals()
            return {
                "bundle_version": state.bundle.version,
                "classes": [{"id": i, "name": n}
                            for i, n in enumerate(state.bundle.registry.names)],
                "buffer_size": len(state.buffer),
                "pending": state.buffer.pending_count(),
                "min_pending": state.min_pending,
                "should_retrain": should_retrain(state.buffer, state.min_pending),
                "proposals": len([p for p in proposals if p.status == "proposed"]),
                "events": len(state.events),
            }

    @app.get("/queue")
    def queue(status: str = "pending"):
        with state.lock:
            state.ensure_proposals()
            return [_entry_card(e) for e in state.buffer.entries()
                    if e.status == status]

    @app.get("/sample/{sample_id}")
    def sample(sample_id: str):
        with state.lock:
            if sample_id not in state.buffer:
                return not_found(f"no buffered sample {sample_id!r}")
            entry = state.buffer.get(sample_id)
            card = _entry_card(entry)
            card["sample"] = sample_to_json_dict(entry.sample)
            return card

    @app.post("/label")
    async def label(request: Request):
        body = await read_body(request)
        if body is None or "id" not in body or "class_id" not in body:
            return bad_request("body must be JSON with id and class_id")
        sample_id, class_id = body["id"], body["class_id"]
        if not isinstance(class_id, int):
            return bad_request("class_id must be an integer")
        with state.lock:
            if sample_id not in state.buffer:
                return not_found(f"no buffered sample {sample_id!r}")
            if not 0 <= class_id < len(state.bundle.registry):
                return bad_request(f"class_id {class_id} outside registry")
            entry = state.buffer.get(sample_id)
            if entry.status != "pending":
                return conflict(f"sample {sample_id!r} is already {entry.status}")
            request_record = RelabelRequest(
                sample_id=sample_id, label_id=class_id,
                operator=body.get("operator", "api"),
                timestamp=len(state.events) + 1)
            state.buffer.mark_labeled(request_record.sample_id, request_record.label_id,
                                      operator=request_record.operator)
            event = state.emit("relabel", {"id": sample_id, "class_id": class_id,
                                           "operator": request_record.operator})
            return {"id": sample_id, "class_id": class_id, "seq": event.seq}

    @app.post("/class")
    async def add_class_endpoint(request: Request):
        from .continual import add_class
        body = await read_body(request)
        if body is None or not isinstance(body.get("name"), str) or not body["name"].strip():
            return bad_request("body must be JSON with a non-empty name")
        name = body["name"].strip()
        with state.lock:
            if name in state.bundle.registry:
                return conflict(f"class {name!r} already exists")
            add_class(state.bundle, name)
            return {"id": state.bundle.registry.id_of(name), "name": name}

    @app.post("/proposal/{proposal_id}/approve")
    async def approve(proposal_id: str, request: Request):
        body = await read_body(request) or {}
        with state.lock:
            proposal = state.find_proposal(proposal_id)
            if proposal is None:
                return not_found(f"no proposal {proposal_id!r}")
            if proposal.status != "proposed":
                return conflict(f"proposal {proposal_id!r} is already {proposal.status}")
            if isinstance(body.get("class_id"), int):
                if not 0 <= body["class_id"] < len(state.bundle.registry):
                    return bad_request(f"class_id {body['class_id']} outside registry")
                name = state.bundle.registry.name_of(body["class_id"])
            elif isinstance(body.get("name"), str) and body["name"].strip():
                name = body["name"].strip()
            else:
                return bad_request("body must carry class_id or name")
            class_id = apply_proposal(state.bundle, state.buffer, proposal, name,
                                      operator=body.get("operator", "api"))
            event = state.emit("proposal", proposal.to_json_dict())
            return {"proposal_id": proposal_id, "class_id": class_id,
                    "name": name, "seq": event.seq}

    @app.post("/proposal/{proposal_id}/reject")
    def reject(proposal_id: str):
        with state.lock:
            proposal = state.find_proposal(proposal_id)
            if proposal is None:
                return not_found(f"no proposal {proposal_id!r}")
            if proposal.status != "proposed":
                return conflict(f"proposal {proposal_id!r} is already {proposal.status}")
            reject_proposal(proposal)
            state.emit("proposal", proposal.to_json_dict())
            return {"proposal_id": proposal_id, "status": "rejected"}

    @app.post("/retrain")
    def retrain_endpoint():
        with state.lock:
            pending = state.buffer.pending_count()
            if pending > 0:
                return conflict(f"{pending} pending samples must be resolved first")
            if not state.buffer.resolved_unconsumed():
                return conflict("no resolved novelties awaiting retraining")
            state.emit("retrain-start", {"version": state.bundle.version})
            _, report = retrain(state.bundle, state.train_set, state.probe_set,
                                state.buffer, state.retrain_config)
            state.proposals = None
            event = state.emit("retrain-done", report.to_json_dict())
            return {"report": report.to_json_dict(), "seq": event.seq}

    @app.get("/events")
    def events(since: int = 0):
        with state.lock:
            return {"events": [e.to_json_dict() for e in state.events if e.seq > since]}

    return app


def serve(state: ServiceState, port: int, ui_dir=None):
    """Run the API (plus static UI assets when built) under uvicorn."""
    import uvicorn

    app = create_app(state)
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
