"""Record real service responses for the client contract tests.

Runs the annotation service in-process against the two-patch scene and
dumps every JSON body the browser client consumes or produces into
recorded/. Re-run after any service change:

    python3 record_responses.py
"""

import json
import os
import tempfile
import time

from fastapi.testclient import TestClient

from reflectkit.config import PipelineConfig
from reflectkit.frames import save_sequence
from reflectkit.service import create_app

from make_scene import scene

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "recorded")

# the exact bodies the client posts; strokes cross each patch on frame 0
SCRIBBLES = {
    "frame_index": 0,
    "strokes": [
        {"label": "background", "radius": 4.0,
         "points": [[12.0, 24.0], [26.0, 24.0], [40.0, 24.0]]},
        {"label": "reflection", "radius": 4.0,
         "points": [[120.0, 24.0], [134.0, 24.0], [148.0, 24.0]]},
    ],
}
CONFLICT = {
    "frame_index": 2,
    "strokes": [
        {"label": "reflection", "radius": 4.0,
         "points": [[18.0, 24.0], [46.0, 24.0]]},
    ],
}


def dump(name: str, payload) -> None:
    with open(os.path.join(OUT, name), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(name)


def main() -> None:
    os.makedirs(OUT, exist_ok=True)
    frames_dir = os.path.join(tempfile.mkdtemp(prefix="record-"), "frames")
    save_sequence(scene(), frames_dir)

    config = PipelineConfig.from_json({"optimizer": {"max_iters": 4}})
    client = TestClient(create_app(config))

    r = client.post("/sessions", json={"frames_dir": frames_dir})
    assert r.status_code == 201, r.text
    dump("session_created.json", r.json())
    sid = r.json()["id"]

    dump("tracks_unlabeled.json", client.get(f"/sessions/{sid}/tracks/0").json())
    dump("status_idle.json", client.get(f"/sessions/{sid}/status").json())

    dump("scribble_body_accepted.json", SCRIBBLES)
    r = client.post(f"/sessions/{sid}/scribbles", json=SCRIBBLES)
    assert r.status_code == 200, r.text
    dump("scribble_ack.json", r.json())

    r = client.post(f"/sessions/{sid}/scribbles", json=CONFLICT)
    assert r.status_code == 422, r.text
    dump("error_conflicting_scribbles.json", r.json())

    r = client.post(f"/sessions/{sid}/propagate")
    assert r.status_code == 200, r.text
    dump("propagate_result.json", r.json())
    dump("tracks_labeled.json", client.get(f"/sessions/{sid}/tracks/0").json())

    r = client.post(f"/sessions/{sid}/separate")
    assert r.status_code == 202, r.text
    running = None
    while True:
        status = client.get(f"/sessions/{sid}/status").json()
        if status["state"] == "running" and running is None:
            running = status
            dump("status_running.json", running)
        if status["state"] in ("done", "failed"):
            assert status["state"] == "done", status
            dump("status_done.json", status)
            break
        time.sleep(0.02)
    assert running is not None, "job finished before a running poll"

    dump("error_unknown_session.json",
         client.get("/sessions/nope/status").json())

    fresh = client.post("/sessions", json={"frames_dir": frames_dir}).json()
    r = client.post(f"/sessions/{fresh['id']}/propagate")
    assert r.status_code == 422, r.text
    dump("error_missing_label_seeds.json", r.json())


if __name__ == "__main__":
    main()
