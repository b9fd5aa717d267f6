"""HTTP service: session lifecycle, payload validation, result retrieval."""

import base64
import io
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from vinpaint.models import InpaintingModel, ModelConfig
from vinpaint.service import create_app


def png_rgb(arr):
    buf = io.BytesIO()
    Image.fromarray((np.asarray(arr) * 255).astype(np.uint8), mode="RGB").save(buf, "PNG")
    return buf.getvalue()


def png_gray(arr_u8):
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr_u8, dtype=np.uint8), mode="L").save(buf, "PNG")
    return buf.getvalue()


def b64(data):
    return base64.b64encode(data).decode()


def make_frames(n=4, size=32, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.random((size, size, 3)).astype(np.float32)
    return [np.clip(base + 0.01 * t, 0, 1) for t in range(n)]


@pytest.fixture()
def client(tmp_path):
    model = InpaintingModel(ModelConfig(channels=8, window=1, dca_blocks=1, seed=0))
    app = create_app(model, tmp_path / "sessions")
    with TestClient(app) as c:
        yield c


def create_session(client, frames=None):
    frames = frames if frames is not None else make_frames()
    resp = client.post("/sessions", json={"frames": [b64(png_rgb(f)) for f in frames]})
    assert resp.status_code == 201, resp.text
    return resp.json()["session_id"], frames


def upload_mask(client, sid, frame, size=32, fill=None):
    mask = np.zeros((size, size), np.uint8)
    if fill is None:
        mask[8:16, 8:16] = 255
    else:
        mask[fill] = 255
    resp = client.put(f"/sessions/{sid}/annotations/{frame}", content=png_gray(mask))
    return resp, mask


def wait_done(client, sid, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/sessions/{sid}/status").json()
        if status["status"] in ("done", "error"):
            return status
        time.sleep(0.05)
    raise TimeoutError("job did not finish")


def test_create_session_valid_upload(client):
    sid, _ = create_session(client)
    status = client.get(f"/sessions/{sid}/status").json()
    assert status["status"] == "idle"
    assert status["num_frames"] == 4


def test_create_session_rejects_mixed_dims(client):
    frames = [np.zeros((32, 32, 3)), np.zeros((64, 64, 3))]
    resp = client.post("/sessions", json={"frames": [b64(png_rgb(f)) for f in frames]})
    assert resp.status_code == 400
    assert resp.json()["index"] == 1


def test_create_session_rejects_empty_and_oversize(client):
    assert client.post("/sessions", json={"frames": []}).status_code == 400
    big = np.zeros((1100, 8, 3))
    resp = client.post("/sessions", json={"frames": [b64(png_rgb(big))]})
    assert resp.status_code == 400


def test_annotation_validation(client):
    sid, _ = create_session(client)
    resp, _ = upload_mask(client, sid, 0)
    assert resp.status_code == 200
    # out-of-range index
    resp, _ = upload_mask(client, sid, 99)
    assert resp.status_code == 400
    # wrong dims
    resp = client.put(f"/sessions/{sid}/annotations/0", content=png_gray(np.zeros((8, 8))))
    assert resp.status_code == 400
    # not single-channel
    resp = client.put(f"/sessions/{sid}/annotations/0", content=png_rgb(np.zeros((32, 32, 3))))
    assert resp.status_code == 400
    # unknown session
    resp = client.put("/sessions/nope/annotations/0", content=png_gray(np.zeros((32, 32))))
    assert resp.status_code == 404


def test_inpaint_without_annotations_is_422(client):
    sid, _ = create_session(client)
    assert client.post(f"/sessions/{sid}/inpaint").status_code == 422


def test_full_run_and_result_retrieval(client):
    sid, frames = create_session(client)
    resp, mask = upload_mask(client, sid, 0)
    assert resp.status_code == 200
    resp = client.post(f"/sessions/{sid}/inpaint")
    assert resp.status_code == 202
    status = wait_done(client, sid)
    assert status["status"] == "done", status
    assert status["progress"] == {"done": 4, "total": 4}
    assert status["provenance"][0] == "annotated"
    assert all(p == "predicted" for p in status["provenance"][1:])
    # completed frame
    resp = client.get(f"/sessions/{sid}/frames/1", params={"kind": "completed"})
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.headers["X-Provenance"] == "predicted"
    assert "ETag" in resp.headers
    # annotated mask round-trips pixel-identically
    resp = client.get(f"/sessions/{sid}/frames/0", params={"kind": "mask"})
    assert resp.headers["X-Provenance"] == "annotated"
    back = np.asarray(Image.open(io.BytesIO(resp.content)))
    assert np.array_equal(back, mask)
    # soft mask and input are retrievable
    assert client.get(f"/sessions/{sid}/frames/2", params={"kind": "soft_mask"}).status_code == 200
    resp = client.get(f"/sessions/{sid}/frames/0", params={"kind": "input"})
    assert resp.status_code == 200


def test_etag_stable_for_identical_content(client):
    sid, _ = create_session(client)
    upload_mask(client, sid, 0)
    client.post(f"/sessions/{sid}/inpaint")
    wait_done(client, sid)
    a = client.get(f"/sessions/{sid}/frames/0", params={"kind": "input"})
    b = client.get(f"/sessions/{sid}/frames/0", params={"kind": "input"})
    assert a.headers["ETag"] == b.headers["ETag"]


def test_results_blocked_before_done(client):
    sid, _ = create_session(client)
    resp = client.get(f"/sessions/{sid}/frames/0", params={"kind": "completed"})
    assert resp.status_code == 409
    # inputs are fine anytime
    assert client.get(f"/sessions/{sid}/frames/0", params={"kind": "input"}).status_code == 200
    assert client.get(f"/sessions/{sid}/frames/0", params={"kind": "bogus"}).status_code == 400
    assert client.get("/sessions/nope/frames/0").status_code == 404


def test_rerun_after_new_annotation_updates_status(client):
    sid, _ = create_session(client)
    upload_mask(client, sid, 0)
    client.post(f"/sessions/{sid}/inpaint")
    wait_done(client, sid)
    # done -> add annotation -> run again (refine path)
    resp, _ = upload_mask(client, sid, 3)
    assert resp.status_code == 200
    resp = client.post(f"/sessions/{sid}/inpaint")
    assert resp.status_code == 202
    status = wait_done(client, sid)
    assert status["status"] == "done"
    assert status["provenance"][3] == "annotated"
    assert sorted(status["annotated"]) == [0, 3]


def test_session_isolation(client):
    sid1, _ = create_session(client)
    sid2, _ = create_session(client, make_frames(seed=9))
    upload_mask(client, sid1, 0)
    client.post(f"/sessions/{sid1}/inpaint")
    wait_done(client, sid1)
    status2 = client.get(f"/sessions/{sid2}/status").json()
    assert status2["status"] == "idle"
    assert status2["annotated"] == []


def test_sessions_persist_across_restart(tmp_path):
    model = InpaintingModel(ModelConfig(channels=8, window=1, dca_blocks=1, seed=0))
    workdir = tmp_path / "sessions"
    with TestClient(create_app(model, workdir)) as client:
        sid, _ = create_session(client)
        upload_mask(client, sid, 0)
        client.post(f"/sessions/{sid}/inpaint")
        status = wait_done(client, sid)
        assert status["status"] == "done"
        completed = client.get(f"/sessions/{sid}/frames/1", params={"kind": "completed"})
    # a fresh app over the same workdir sees the finished session
    with TestClient(create_app(model, workdir)) as client2:
        status = client2.get(f"/sessions/{sid}/status").json()
        assert status["status"] == "done"
        again = client2.get(f"/sessions/{sid}/frames/1", params={"kind": "completed"})
        assert again.status_code == 200
        assert again.content == completed.content
