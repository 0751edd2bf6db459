"""Local HTTP service for interactive annotation and separation.

Serves frames and preliminary tracks to a browser client, accumulates
scribbles, propagates labels on request, and runs separation as a polled
background job. One session per loaded sequence; session state is guarded
by a per-session lock, with at most one separation worker at a time.

Binds localhost by default (see the CLI ``serve`` command): this serves a
desktop annotation session, not the internet.
"""

from __future__ import annotations

import copy
import io
import os
import tempfile
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from starlette.exceptions import HTTPException as StarletteHTTPException
from PIL import Image
from pydantic import BaseModel

from .config import PipelineConfig
from .energy import write_trace_csv
from .errors import MissingLabelSeedsError, ReflectError
from .frames import FrameSequence, load_sequence, save_sequence
from .hints import ScribbleSet, Stroke, propagate_labels
from .pipeline import merge_seeds, save_layer_map, separate_sequence
from .tracking import LayerLabel, TrackSet, track_sequence


class SessionBody(BaseModel):
    frames_dir: str


class StrokeBody(BaseModel):
    label: str
    radius: float
    points: list[list[float]]


class ScribbleBody(BaseModel):
    frame_index: int
    strokes: list[StrokeBody]


@dataclass
class _Job:
    state: str = "idle"             # idle | running | done | failed
    stage: str = ""
    done_units: int = 0
    total_units: int = 0
    result: dict | None = None
    error: dict | None = None

    def to_json(self) -> dict:
        if self.state == "running":
            frac = self.done_units / self.total_units if self.total_units else 0.0
            return {"state": "running", "stage": self.stage,
                    "progress": min(1.0, frac)}
        if self.state == "done":
            return {"state": "done", "result": self.result}
        if self.state == "failed":
            return {"state": "failed", "error": self.error}
        return {"state": "idle"}


@dataclass
class _Session:
    id: str
    frames_dir: str
    seq: FrameSequence
    base_tracks: TrackSet
    workdir: str
    scribbles: dict = field(default_factory=dict)   # frame_index -> ScribbleSet
    labeled: TrackSet | None = None
    decomposition = None
    job: _Job = field(default_factory=_Job)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def current_tracks(self) -> TrackSet:
        return self.labeled if self.labeled is not None else self.base_tracks

    def all_scribbles(self) -> list:
        return [self.scribbles[k] for k in sorted(self.scribbles)]


def _png_bytes(plane: np.ndarray) -> bytes:
    arr = np.clip(np.round(plane * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[-1] == 1:
        img = Image.fromarray(arr[..., 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(config: PipelineConfig | None = None,
               workdir: str | None = None) -> FastAPI:
    """Annotation service bound to one pipeline configuration.

    Session results are written under ``workdir`` (a temporary directory by
    default), one subdirectory per session.
    """
    config = config or PipelineConfig()
    workdir = workdir or tempfile.mkdtemp(prefix="reflect-service-")
    app = FastAPI(title="reflect annotation service")
    sessions: dict = {}
    store_lock = threading.Lock()

    @app.exception_handler(ReflectError)
    def _reflect_error(request, exc: ReflectError):
        # domain validation failures map to 422; the body carries the
        # stable error code plus the offending field when known
        return JSONResponse(status_code=422, content=exc.to_json())

    @app.exception_handler(StarletteHTTPException)
    def _http_error(request, exc: StarletteHTTPException):
        # keep error bodies flat {code, message} instead of FastAPI's
        # detail wrapper so clients see one shape for all failures
        content = exc.detail if isinstance(exc.detail, dict) else \
            {"code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content=content)

    def _get_session(session_id: str) -> _Session:
        with store_lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise HTTPException(404, {"code": "unknown-session",
                                      "message": f"no session {session_id!r}"})
        return sess

    def _check_frame(sess: _Session, n: int) -> None:
        if not 0 <= n < sess.seq.frame_count:
            raise HTTPException(404, {
                "code": "unknown-frame",
                "message": f"frame {n} outside 0..{sess.seq.frame_count - 1}"})

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionBody):
        seq = load_sequence(body.frames_dir)
        ts = track_sequence(seq, config.tracker)
        sess = _Session(id=uuid.uuid4().hex[:12], frames_dir=body.frames_dir,
                        seq=seq, base_tracks=ts,
                        workdir=os.path.join(workdir, uuid.uuid4().hex[:12]))
        with store_lock:
            sessions[sess.id] = sess
        return {"id": sess.id, "frame_count": seq.frame_count,
                "width": seq.width, "height": seq.height,
                "track_count": len(ts)}

    @app.get("/sessions/{session_id}/frames/{n}")
    def get_frame(session_id: str, n: int):
        sess = _get_session(session_id)
        _check_frame(sess, n)
        return Response(content=_png_bytes(sess.seq.data[n]),
                        media_type="image/png")

    @app.get("/sessions/{session_id}/tracks/{n}")
    def get_tracks(session_id: str, n: int):
        sess = _get_session(session_id)
        _check_frame(sess, n)
        with sess.lock:
            ts = sess.current_tracks()
            rows = []
            for t in ts.alive_at(n):
                x, y = t.position_at(n)
                rows.append({"id": t.id, "x": float(x), "y": float(y),
                             "label": t.label.to_name()})
        return {"frame": n, "tracks": rows}

    @app.post("/sessions/{session_id}/scribbles")
    def post_scribbles(session_id: str, body: ScribbleBody):
        sess = _get_session(session_id)
        _check_frame(sess, body.frame_index)
        strokes = [Stroke(label=LayerLabel.from_name(s.label),
                          radius=s.radius, points=s.points)
                   for s in body.strokes]
        with sess.lock:
            # validate the merged state before committing so a conflicting
            # stroke leaves the session unchanged
            candidate = dict(sess.scribbles)
            if body.frame_index in candidate:
                old = candidate[body.frame_index]
                candidate[body.frame_index] = ScribbleSet(
                    frame_index=body.frame_index,
                    strokes=old.strokes + strokes)
            else:
                candidate[body.frame_index] = ScribbleSet(
                    frame_index=body.frame_index, strokes=strokes)
            seeds = merge_seeds(sess.base_tracks,
                                [candidate[k] for k in sorted(candidate)])
            sess.scribbles = candidate
        return {"seeds": len(seeds)}

    @app.post("/sessions/{session_id}/propagate")
    def post_propagate(session_id: str):
        sess = _get_session(session_id)
        with sess.lock:
            seeds = merge_seeds(sess.base_tracks, sess.all_scribbles())
            if not seeds:
                raise MissingLabelSeedsError("no scribble claimed any track")
            a = config.affinity
            labeled = propagate_labels(sess.base_tracks, seeds, sess.seq,
                                       k_neighbors=a.k_neighbors,
                                       sigma_motion=a.sigma_motion,
                                       sigma_color=a.sigma_color)
            sess.labeled = labeled
            labels = {str(t.id): t.label.to_name() for t in labeled}
        return {"labels": labels}

    def _separate_worker(sess: _Session, snapshot: TrackSet) -> None:
        def on_progress(stage, done, total):
            with sess.lock:
                if sess.job.stage != stage:
                    sess.job.stage = stage
                    sess.job.done_units = 0
                sess.job.done_units = max(sess.job.done_units, done)
                sess.job.total_units = total

        try:
            dec, trace, warps = separate_sequence(sess.seq, snapshot, config,
                                                  progress=on_progress)
            out = os.path.join(sess.workdir, "result")
            bg_dir = os.path.join(out, "background")
            refl_dir = os.path.join(out, "reflection")
            save_sequence(dec.background, bg_dir)
            save_sequence(dec.reflection, refl_dir)
            save_layer_map(dec.layer_map, os.path.join(out, "layer_map"))
            write_trace_csv(trace, os.path.join(out, "energy_trace.csv"))
            warps.save(os.path.join(out, "warps.json"))
            with sess.lock:
                sess.decomposition = dec
                sess.job.state = "done"
                sess.job.result = {"background": bg_dir,
                                   "reflection": refl_dir}
        except Exception as exc:
            payload = exc.to_json() if isinstance(exc, ReflectError) else \
                {"code": "internal", "message": str(exc)}
            with sess.lock:
                sess.job.state = "failed"
                sess.job.error = payload

    @app.post("/sessions/{session_id}/separate", status_code=202)
    def post_separate(session_id: str):
        sess = _get_session(session_id)
        with sess.lock:
            if sess.job.state == "running":
                raise HTTPException(409, {
                    "code": "job-running",
                    "message": "a separation job is already running"})
            # snapshot the labeling now; later scribbles do not affect
            # the job in flight
            snapshot = copy.deepcopy(sess.current_tracks())
            sess.job = _Job(state="running", stage="warps")
        worker = threading.Thread(target=_separate_worker,
                                  args=(sess, snapshot), daemon=True)
        worker.start()
        return {"state": "running"}

    @app.get("/sessions/{session_id}/status")
    def get_status(session_id: str):
        sess = _get_session(session_id)
        with sess.lock:
            return sess.job.to_json()

    @app.get("/sessions/{session_id}/results/{layer}/{n}")
    def get_result_frame(session_id: str, layer: str, n: int):
        sess = _get_session(session_id)
        _check_frame(sess, n)
        with sess.lock:
            dec = sess.decomposition
        if dec is None:
            raise HTTPException(404, {"code": "no-result",
                                      "message": "no finished separation"})
        if layer == "background":
            plane = dec.background.data[n]
        elif layer == "reflection":
            plane = dec.reflection.data[n]
        else:
            raise HTTPException(404, {
                "code": "unknown-layer",
                "message": "layer must be background or reflection"})
        return Response(content=_png_bytes(plane), media_type="image/png")

    return app
