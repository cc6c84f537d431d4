"""Operator CLI: segment timelines, ingest corpus artifacts, run offline
preprocessing, serve the API, and ask one-off or session-backed questions."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AtlasConfig, load_config
from .errors import EXIT_CODES, AtlasError
from .gateway import ModelGateway
from .ingestion import CorpusStore
from .orchestrator import Orchestrator, QuerySession, Turn, related_for_timeline
from .segmentation import SegmentationParams, VideoMeta, seconds_float, segment
from .taxonomy import default_taxonomy, load_taxonomy


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atlas")
    parser.add_argument("--config", help="path to the JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_segment = sub.add_parser("segment", help="print the clip window table for a duration")
    p_segment.add_argument("--duration", required=True, help="video duration in seconds")
    p_segment.add_argument("--tau", default=None, help="clip length in seconds")
    p_segment.add_argument("--omega", default=None, help="overlap in seconds")

    p_ingest = sub.add_parser("ingest", help="ingest a corpus artifact file")
    p_ingest.add_argument("kind", choices=["videos", "captions", "detections", "masks"])
    p_ingest.add_argument("path")
    p_ingest.add_argument("--embeddings", help="co-supplied embeddings file for captions")
    p_ingest.add_argument("--store", help="override the snapshot path")

    p_pre = sub.add_parser("preprocess", help="segment, caption, embed and index one video")
    p_pre.add_argument("video_id")
    p_pre.add_argument("--duration", help="duration in seconds (registers the video)")
    p_pre.add_argument("--fps", type=float, default=30.0)
    p_pre.add_argument("--source", default="", help="media file path")
    p_pre.add_argument("--store", help="override the snapshot path")

    p_serve = sub.add_parser("serve", help="run the HTTP/WebSocket API")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    p_query = sub.add_parser("query", help="answer one question against the corpus")
    p_query.add_argument("question")
    p_query.add_argument("--k", type=int, default=None)
    p_query.add_argument("--session", help="session file enabling follow-up queries")
    p_query.add_argument("--store", help="override the snapshot path")
    p_query.add_argument("--json", action="store_true", help="emit the raw answer document")
    return parser


def _load_taxonomy(config: AtlasConfig):
    if config.taxonomy_path:
        return load_taxonomy(Path(config.taxonomy_path).read_text("utf-8"))
    return default_taxonomy()


def _store_path(config: AtlasConfig, override: str | None) -> Path | None:
    path = override or config.store_path
    return Path(path) if path else None


def _load_store(config: AtlasConfig, taxonomy, override: str | None) -> CorpusStore:
    path = _store_path(config, override)
    params = SegmentationParams(clip_len_s=config.clip_len_s, overlap_s=config.overlap_s)
    if path and path.exists():
        return CorpusStore.restore(path.read_bytes(), taxonomy)
    return CorpusStore(taxonomy=taxonomy, params=params)


def _save_store(store: CorpusStore, config: AtlasConfig, override: str | None) -> None:
    path = _store_path(config, override)
    if path is None:
        raise AtlasError("no store path configured; set store_path or pass --store")
    path.write_bytes(store.snapshot())


def _cmd_segment(args, config: AtlasConfig) -> int:
    params = SegmentationParams(
        clip_len_s=args.tau if args.tau is not None else config.clip_len_s,
        overlap_s=args.omega if args.omega is not None else config.overlap_s,
    )
    video = VideoMeta(video_id="-", duration_s=args.duration, fps=30.0)
    print(f"{'clip':>4}  {'start_s':>9}  {'end_s':>9}  {'length_s':>9}")
    for window in segment(video, params):
        print(
            f"{window.index:>4}  {seconds_float(window.start_s):>9.3f}  "
            f"{seconds_float(window.end_s):>9.3f}  {seconds_float(window.length_s):>9.3f}"
        )
    return 0


def _cmd_ingest(args, config: AtlasConfig) -> int:
    taxonomy = _load_taxonomy(config)
    store = _load_store(config, taxonomy, args.store)
    gateway = ModelGateway(taxonomy, config)
    if args.kind == "videos":
        count = store.ingest_videos(args.path)
    elif args.kind == "captions":
        count = store.ingest_captions(args.path, gateway=gateway, embeddings_path=args.embeddings)
    elif args.kind == "detections":
        count = store.ingest_detections(args.path)
    else:
        count = store.ingest_masks(args.path)
    _save_store(store, config, args.store)
    print(f"ingested {count} {args.kind} records")
    return 0


def _cmd_preprocess(args, config: AtlasConfig) -> int:
    taxonomy = _load_taxonomy(config)
    store = _load_store(config, taxonomy, args.store)
    gateway = ModelGateway(taxonomy, config)
    if args.duration is not None:
        video = VideoMeta(
            video_id=args.video_id,
            duration_s=args.duration,
            fps=args.fps,
            source_uri=args.source,
        )
    else:
        video = store.video(args.video_id)
    report = store.run_preprocessing(video, gateway)
    _save_store(store, config, args.store)
    print(f"indexed {report.indexed} clips for {args.video_id}")
    for index, message in report.failures:
        print(f"  clip {index} failed: {message}", file=sys.stderr)
    return 0


def _cmd_serve(args, config: AtlasConfig) -> int:
    import uvicorn

    from .service import create_app

    taxonomy = _load_taxonomy(config)
    store = _load_store(config, taxonomy, None)
    gateway = ModelGateway(taxonomy, config)
    app = create_app(Orchestrator(store, gateway, config), config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _load_session(path: Path, orchestrator: Orchestrator) -> QuerySession:
    if not path.exists():
        return orchestrator.create_session()
    doc = json.loads(path.read_text("utf-8"))
    session = QuerySession(
        session_id=doc["session_id"],
        turns=[
            Turn(
                query=t["query"],
                answer_id=t["answer_id"],
                narrative=t["narrative"],
                chosen=tuple(t["chosen"]),
            )
            for t in doc.get("turns", [])
        ],
        active_clip=tuple(doc["active_clip"]) if doc.get("active_clip") else None,
    )
    orchestrator.sessions[session.session_id] = session
    return session


def _save_session(path: Path, session: QuerySession) -> None:
    path.write_text(
        json.dumps(
            {
                "session_id": session.session_id,
                "active_clip": list(session.active_clip) if session.active_clip else None,
                "turns": [
                    {
                        "query": t.query,
                        "answer_id": t.answer_id,
                        "narrative": t.narrative,
                        "chosen": list(t.chosen),
                    }
                    for t in session.turns
                ],
            },
            indent=2,
        ),
        "utf-8",
    )


def _render_answer(orchestrator: Orchestrator, answer) -> str:
    lines = []
    marked = answer.narrative
    for ann in sorted(answer.annotations, key=lambda a: -a.start):
        marked = f"{marked[:ann.start]}[{marked[ann.start:ann.end]}]{marked[ann.end:]}"
    lines.append(marked)
    lines.append("")
    if answer.graph.nodes:
        lines.append("entities:")
        for node in answer.graph.nodes:
            mark = node.grounding if node.grounding != "ungrounded" else "ungrounded"
            lines.append(f"  [{node.canonical_label}] {node.class_id} ({mark})")
        lines.append("")
    lines.append(f"confidence: {answer.confidence_band}")
    lines.append(f"related clips (chosen: {answer.chosen[0]}:{answer.chosen[1]}):")
    lines.append(f"  {'rank':>4}  {'clip':<16} {'start_s':>8}  {'score':>7}  {'norm':>5}")
    norm = {(v, c): n for v, c, _, n in related_for_timeline(answer)}
    for hit in answer.related:
        key = hit.descriptor.key
        lines.append(
            f"  {hit.rank:>4}  {key[0] + ':' + str(key[1]):<16} "
            f"{seconds_float(hit.descriptor.start_s):>8.1f}  {hit.score:>7.4f}  "
            f"{norm[key]:>5.2f}"
        )
    return "\n".join(lines)


def _cmd_query(args, config: AtlasConfig) -> int:
    taxonomy = _load_taxonomy(config)
    store = _load_store(config, taxonomy, args.store)
    gateway = ModelGateway(taxonomy, config)
    orchestrator = Orchestrator(store, gateway, config)
    session_path = Path(args.session) if args.session else None
    if session_path:
        session = _load_session(session_path, orchestrator)
    else:
        session = orchestrator.create_session()
    if session.turns:
        answer = orchestrator.follow_up(session, args.question, args.k)
    else:
        answer = orchestrator.answer_query(session, args.question, args.k)
    if session_path:
        _save_session(session_path, session)
    if args.json:
        print(json.dumps(orchestrator.answer_document(answer), indent=2))
    else:
        print(_render_answer(orchestrator, answer))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "segment":
            return _cmd_segment(args, config)
        if args.command == "ingest":
            return _cmd_ingest(args, config)
        if args.command == "preprocess":
            return _cmd_preprocess(args, config)
        if args.command == "serve":
            return _cmd_serve(args, config)
        if args.command == "query":
            return _cmd_query(args, config)
        raise AtlasError(f"unknown command {args.command!r}")
    except AtlasError as exc:
        print(f"error ({exc.code}): {exc.message}", file=sys.stderr)
        return EXIT_CODES.get(exc.code, 1)


if __name__ == "__main__":
    sys.exit(main())
