"""Local HTTP service for the annotate -> inpaint -> review loop.

JSON control plane, binary PNG payloads. Sessions live on disk under the
working directory, so a restart loses no completed work. One background
worker executes propagations FIFO across sessions; per session only one job
can be in flight and annotation uploads are rejected while it runs.
"""

import base64
import hashlib
import io
import json
import queue
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from .inference import AnnotationSet, TorchAdapter, propagate, refine, write_result
from .storage import read_image, write_image

MAX_FRAMES = 256
MAX_SIDE = 1024
KINDS = ("completed", "mask", "soft_mask", "input")


class Session:
    def __init__(self, session_id, root, num_frames, height, width):
        self.session_id = session_id
        self.root = Path(root)
        self.num_frames = num_frames
        self.height = height
        self.width = width
        self.status = "idle"
        self.error = None
        self.progress = (0, num_frames)
        self.result = None  # InpaintResult of the latest finished run
        self.result_annotations = {}  # index -> content hash used by that run
        self.lock = threading.Lock()

    # -- persistence ---------------------------------------------------------
    def meta_path(self):
        return self.root / "session.json"

    def save_meta(self):
        meta = {
            "session_id": self.session_id,
            "num_frames": self.num_frames,
            "height": self.height,
            "width": self.width,
            "status": self.status if self.status != "running" else "idle",
            "error": self.error,
            "result_annotations": self.result_annotations,
        }
        self.meta_path().write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, root):
        meta = json.loads((Path(root) / "session.json").read_text())
        s = cls(
            meta["session_id"], root, meta["num_frames"], meta["height"], meta["width"]
        )
        s.error = meta.get("error")
        # a crash mid-run degrades to idle; finished results are re-loadable
        s.status = meta.get("status", "idle")
        s.result_annotations = {
            int(k): v for k, v in meta.get("result_annotations", {}).items()
        }
        if s.status == "running":
            s.status = "idle"
        return s

    # -- files ---------------------------------------------------------------
    def frame_path(self, t):
        return self.root / "frames" / f"{t:05d}.png"

    def annotation_path(self, t):
        return self.root / "annotations" / f"{t:05d}.png"

    def result_dir(self):
        return self.root / "result"

    def annotations(self):
        out = {}
        ann_dir = self.root / "annotations"
        if ann_dir.is_dir():
            for p in sorted(ann_dir.glob("*.png")):
                out[int(p.stem)] = np.asarray(Image.open(p))
        return out

    def provenance(self):
        path = self.result_dir() / "provenance.json"
        if path.exists():
            return json.loads(path.read_text())["provenance"]
        return None


def _png_bytes(array, binary=False):
    if binary:
        u8 = (np.asarray(array) > 0).astype(np.uint8) * 255
    else:
        u8 = np.clip(np.rint(np.asarray(array, dtype=np.float64) * 255.0), 0, 255).astype(
            np.uint8
        )
    img = Image.fromarray(u8, mode="L" if u8.ndim == 2 else "RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _image_response(data, provenance=None):
    headers = {"ETag": hashlib.sha256(data).hexdigest()}
    if provenance is not None:
        headers["X-Provenance"] = provenance
    return Response(content=data, media_type="image/png", headers=headers)


def _error(status, message, **extra):
    return JSONResponse(status_code=status, content={"error": message, **extra})


def create_app(model, workdir, ui_dir=None):
    """Build the FastAPI app around one loaded model and a session directory."""
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    adapter = TorchAdapter(model)
    window = model.config.window
    threshold = model.config.mask_threshold
    app = FastAPI(title="vinpaint", version="0.1.0")

    sessions = {}
    registry_lock = threading.Lock()
    jobs = queue.Queue()

    for sub in sorted(p for p in workdir.iterdir() if p.is_dir()):
        if (sub / "session.json").exists():
            s = Session.load(sub)
            sessions[s.session_id] = s

    def run_job(session):
        try:
            frames = [read_image(session.frame_path(t)) for t in range(session.num_frames)]
            raw = session.annotations()
            entries = {t: arr > 127 for t, arr in raw.items()}
            hashes = {
                t: hashlib.sha256(session.annotation_path(t).read_bytes()).hexdigest()
                for t in entries
            }
            annotations = AnnotationSet(entries=entries, length=session.num_frames)

            def progress(done, total):
                session.progress = (done, total)

            prev = session.result_annotations
            unchanged = prev and all(hashes.get(k) == v for k, v in prev.items())
            added = sorted(set(entries) - set(prev))
            if session.result is not None and unchanged and added:
                # pure additions: recompute only the segments the new masks own
                result = session.result
                for idx in added:
                    result = refine(
                        frames, result, idx, entries[idx], adapter,
                        window=window, threshold=threshold, progress=progress,
                    )
            else:
                result = propagate(
                    frames, annotations, adapter,
                    window=window, threshold=threshold, progress=progress,
                )
            write_result(session.result_dir(), result)
            with session.lock:
                session.result = result
                session.result_annotations = hashes
                session.status = "done"
                session.error = None
                session.save_meta()
        except Exception as e:  # surfaced through /status
            with session.lock:
                session.status = "error"
                session.error = str(e)
                session.save_meta()

    def worker():
        while True:
            session = jobs.get()
            if session is None:
                return
            run_job(session)
            jobs.task_done()

    worker_thread = threading.Thread(target=worker, daemon=True, name="vinpaint-worker")
    worker_thread.start()
    app.state.worker = worker_thread
    app.state.jobs = jobs
    app.state.sessions = sessions

    def get_session(session_id):
        with registry_lock:
            return sessions.get(session_id)

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict):
        frames_b64 = payload.get("frames")
        if not isinstance(frames_b64, list) or not frames_b64:
            return _error(400, "upload must contain a non-empty 'frames' list")
        if len(frames_b64) > MAX_FRAMES:
            return _error(400, f"too many frames: {len(frames_b64)} > {MAX_FRAMES}")
        decoded = []
        for i, b64 in enumerate(frames_b64):
            try:
                img = Image.open(io.BytesIO(base64.b64decode(b64)))
            except Exception:
                return _error(400, f"frame {i} is not a decodable image", index=i)
            if img.width > MAX_SIDE or img.height > MAX_SIDE:
                return _error(400, f"frame {i} exceeds {MAX_SIDE}x{MAX_SIDE}", index=i)
            decoded.append(np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0)
        shape = decoded[0].shape
        for i, arr in enumerate(decoded):
            if arr.shape != shape:
                return _error(400, f"frame {i} dims {arr.shape[:2]} differ from frame 0", index=i)
        session_id = uuid.uuid4().hex[:12]
        root = workdir / session_id
        for t, arr in enumerate(decoded):
            write_image(root / "frames" / f"{t:05d}.png", arr)
        session = Session(session_id, root, len(decoded), shape[0], shape[1])
        session.save_meta()
        with registry_lock:
            sessions[session_id] = session
        return {"session_id": session_id, "num_frames": len(decoded)}

    @app.put("/sessions/{session_id}/annotations/{frame}")
    async def put_annotation(session_id: str, frame: int, request: Request):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        if session.status == "running":
            return _error(409, "a propagation is running; annotations are locked")
        if not 0 <= frame < session.num_frames:
            return _error(400, f"frame index {frame} outside [0, {session.num_frames})")
        body = await request.body()
        try:
            img = Image.open(io.BytesIO(body))
        except Exception:
            return _error(400, "payload is not a decodable image")
        if img.mode != "L":
            return _error(400, f"mask must be single-channel (mode L), got {img.mode}")
        if (img.height, img.width) != (session.height, session.width):
            return _error(
                400,
                f"mask dims {img.height}x{img.width} do not match clip "
                f"{session.height}x{session.width}",
            )
        path = session.annotation_path(frame)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(img), mode="L").save(path, format="PNG")
        return {"ok": True, "frame": frame}

    @app.post("/sessions/{session_id}/inpaint", status_code=202)
    async def run_inpaint(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        with session.lock:
            if session.status == "running":
                return _error(409, "already running")
            if not session.annotations():
                return _error(422, "no annotations uploaded")
            session.status = "running"
            session.progress = (0, session.num_frames)
        jobs.put(session)
        return {"status": "running"}

    @app.get("/sessions/{session_id}/status")
    async def get_status(session_id: str):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        done, total = session.progress
        return {
            "session_id": session_id,
            "status": session.status,
            "error": session.error,
            "num_frames": session.num_frames,
            "progress": {"done": done, "total": total},
            "annotated": sorted(session.annotations()),
            "provenance": session.provenance(),
        }

    @app.get("/sessions/{session_id}/frames/{t}")
    async def get_frame(session_id: str, t: int, kind: str = "completed"):
        session = get_session(session_id)
        if session is None:
            return _error(404, "unknown session")
        if kind not in KINDS:
            return _error(400, f"kind must be one of {KINDS}")
        if not 0 <= t < session.num_frames:
            return _error(404, f"frame {t} out of range")
        if kind == "input":
            return _image_response(session.frame_path(t).read_bytes())
        if session.status != "done":
            return _error(409, f"results not available while status is {session.status!r}")
        provenance = session.provenance()[t]
        if kind == "mask" and provenance == "annotated":
            # hand the original annotation back, pixel for pixel
            return _image_response(session.annotation_path(t).read_bytes(), provenance)
        name = {"completed": "frames", "mask": "masks", "soft_mask": "soft_masks"}[kind]
        return _image_response(
            (session.result_dir() / name / f"{t:05d}.png").read_bytes(), provenance
        )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
