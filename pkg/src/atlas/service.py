"""HTTP + WebSocket API over the answer pipeline.

Answers are persisted in-process and addressable by id so the UI can fetch
overlays lazily per clip. Stage-progress events stream over a per-session
WebSocket; a client that disconnects mid-query loses events, never answers.
"""

from __future__ import annotations

import asyncio
import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Query, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .config import AtlasConfig
from .errors import AtlasError, NotFoundError
from .grounding import active_masks
from .knowledge_graph import graph_document, neighborhood
from .orchestrator import Orchestrator
from .segmentation import seconds_float

HTTP_STATUS = {
    "refused": 403,
    "not-found": 404,
    "backend-failure": 502,
    "bad-request": 400,
    "conflict": 409,
}


class EventBus:
    """Bridges pipeline threads to WebSocket subscribers. Events published
    with no subscriber are dropped; answers persist regardless."""

    def __init__(self):
        self._loop: asyncio.AbstractEventLoop | None = None
        self._subscribers: dict[str, list[asyncio.Queue]] = {}
        self._lock = threading.Lock()

    def set_loop(self, loop: asyncio.AbstractEventLoop) -> None:
        self._loop = loop

    def subscribe(self, session_id: str) -> asyncio.Queue:
        queue: asyncio.Queue = asyncio.Queue()
        with self._lock:
            self._subscribers.setdefault(session_id, []).append(queue)
        return queue

    def unsubscribe(self, session_id: str, queue: asyncio.Queue) -> None:
        with self._lock:
            queues = self._subscribers.get(session_id, [])
            if queue in queues:
                queues.remove(queue)

    def publish(self, session_id: str, event: dict) -> None:
        loop = self._loop
        if loop is None:
            return
        with self._lock:
            queues = list(self._subscribers.get(session_id, []))
        for queue in queues:
            loop.call_soon_threadsafe(queue.put_nowait, event)


class QueryBody(BaseModel):
    question: str
    k: int | None = None


def create_app(orchestrator: Orchestrator, config: AtlasConfig | None = None) -> FastAPI:
    config = config or orchestrator.config
    bus = EventBus()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        bus.set_loop(asyncio.get_running_loop())
        yield

    app = FastAPI(title="atlas", lifespan=lifespan)
    app.state.orchestrator = orchestrator
    app.state.bus = bus

    @app.exception_handler(AtlasError)
    async def atlas_error_handler(request: Request, exc: AtlasError):
        return JSONResponse(
            status_code=HTTP_STATUS.get(exc.code, 400), content=exc.to_document()
        )

    @app.get("/api/health")
    def health():
        return {"status": "ok", "indexed_clips": len(orchestrator.store.index)}

    @app.post("/api/sessions", status_code=201)
    def create_session():
        session = orchestrator.create_session()
        return {"session_id": session.session_id}

    @app.post("/api/sessions/{session_id}/query")
    def query(session_id: str, body: QueryBody):
        session = orchestrator.session(session_id)

        def observer(stage: str, detail: dict) -> None:
            bus.publish(session_id, {"stage": stage, "detail": detail})

        if session.turns:
            answer = orchestrator.follow_up(session, body.question, body.k, observer)
        else:
            answer = orchestrator.answer_query(session, body.question, body.k, observer)
        return orchestrator.answer_document(answer)

    @app.get("/api/sessions/{session_id}")
    def session_state(session_id: str):
        session = orchestrator.session(session_id)
        return {
            "session_id": session.session_id,
            "turns": [
                {"query": t.query, "answer_id": t.answer_id} for t in session.turns
            ],
            "active_clip": (
                {"video_id": session.active_clip[0], "clip_index": session.active_clip[1]}
                if session.active_clip
                else None
            ),
        }

    @app.get("/api/answers/{answer_id}")
    def get_answer(answer_id: str):
        return orchestrator.answer_document(orchestrator.answer(answer_id))

    @app.get("/api/answers/{answer_id}/graph")
    def get_graph(answer_id: str):
        return graph_document(orchestrator.answer(answer_id).graph)

    @app.get("/api/answers/{answer_id}/graph/{node_id}/neighborhood")
    def get_neighborhood(answer_id: str, node_id: str, radius: int = Query(default=1, ge=0)):
        answer = orchestrator.answer(answer_id)
        return graph_document(neighborhood(answer.graph, node_id, radius=radius))

    @app.get("/api/clips/{video_id}/{clip_index}/overlays")
    def overlays(video_id: str, clip_index: int, answer: str):
        ans = orchestrator.answer(answer)
        descriptor = None
        for hit in ans.related:
            if hit.descriptor.key == (video_id, clip_index):
                descriptor = hit.descriptor
                break
        if descriptor is None:
            raise NotFoundError(
                f"clip {video_id}:{clip_index} is not among answer {answer}'s related clips"
            )
        video = orchestrator.store.video(video_id)
        first = int(seconds_float(descriptor.start_s) * video.fps)
        last = int(seconds_float(descriptor.end_s) * video.fps)
        boxes = []
        # tracks were grounded on the chosen clip's video; frame indices from
        # other videos must never leak into their overlays
        if video_id == ans.chosen[0]:
            for track in ans.tracks:
                samples = [s for s in track.samples if first <= s[0] < last]
                if not samples:
                    continue
                doc = orchestrator.track_document(track, ans)
                doc["samples"] = [
                    {"frame_index": f, "bbox": list(b), "confidence": c}
                    for f, b, c in samples
                ]
                boxes.append(doc)
        masks = active_masks(orchestrator.store.masks.get(video_id, []), ans.graph)
        return {
            "video_id": video_id,
            "clip_index": clip_index,
            "window": {
                "start_s": seconds_float(descriptor.start_s),
                "end_s": seconds_float(descriptor.end_s),
            },
            "fps": video.fps,
            "boxes": boxes,
            "masks": [orchestrator.mask_document(m, ans) for m in masks],
        }

    @app.get("/api/videos/{video_id}/media")
    def media(video_id: str):
        video = orchestrator.store.video(video_id)
        path = Path(video.source_uri) if video.source_uri else None
        if path is None or not path.is_file():
            raise NotFoundError(f"no media available for video {video_id!r}")
        return FileResponse(path)

    @app.websocket("/api/sessions/{session_id}/events")
    async def events(websocket: WebSocket, session_id: str):
        try:
            orchestrator.session(session_id)
        except NotFoundError:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        queue = bus.subscribe(session_id)
        try:
            while True:
                event = await queue.get()
                await websocket.send_json(event)
        except WebSocketDisconnect:
            pass
        finally:
            bus.unsubscribe(session_id, queue)

    return app
