import hashlib
import json
import time

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from rollforge.denoiser import DenoiserConfig, UNetDenoiser
from rollforge.diffusion import build_schedule
from rollforge.pianoroll import roll_from_json, roll_to_json
from rollforge.service import JobManager, create_app
from rollforge.trainer import Checkpoint, TrainConfig, save_checkpoint

from helpers import random_roll


@pytest.fixture(scope="module")
def ckpt_path(tmp_path_factory):
    torch.manual_seed(0)
    config = TrainConfig(max_steps=1, num_steps=6, beta_start=1e-3, beta_end=0.2,
                         condition_mode="none",
                         denoiser=DenoiserConfig(base_channels=4, channel_mults=(1, 2),
                                                 num_res_blocks=1, attn_levels=(),
                                                 cond_dim=0, time_embed_dim=16))
    model = UNetDenoiser(config.denoiser)
    with torch.no_grad():  # random weights so samples are non-trivial
        for p in model.parameters():
            p.add_(0.02 * torch.randn(p.shape))
    ckpt = Checkpoint(config.denoiser, model.state_dict(),
                      build_schedule(6, 1e-3, 0.2), config)
    path = tmp_path_factory.mktemp("ckpt") / "toy.ckpt"
    save_checkpoint(ckpt, path)
    return str(path)


@pytest.fixture(scope="module")
def client(ckpt_path, tmp_path_factory):
    app = create_app(data_dir=tmp_path_factory.mktemp("service-data"), workers=1)
    with TestClient(app) as tc:
        yield tc


def _wait_done(client, job_id, timeout=60.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/v1/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.05)
    raise TimeoutError(job_id)


def test_generate_lifecycle_async(client, ckpt_path):
    resp = client.post("/v1/generate", json={"checkpoint": ckpt_path, "seed": 3})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    job = _wait_done(client, job_id)
    assert job["state"] == "done"
    assert job["kind"] == "sample"
    assert set(job["result"]) >= {"roll", "midi", "dropped_sustain_runs"}

    roll_bytes = client.get(f"/v1/artifacts/{job['result']['roll']}")
    assert roll_bytes.status_code == 200
    obj = json.loads(roll_bytes.content)
    assert obj["shape"] == [2, 128, 128]
    midi = client.get(f"/v1/artifacts/{job['result']['midi']}")
    assert midi.content[:4] == b"MThd"


def test_artifact_bytes_hash_to_their_id(client, ckpt_path):
    resp = client.post("/v1/generate", json={"checkpoint": ckpt_path, "seed": 4,
                                             "sync": True})
    job = _wait_done(client, resp.json()["job_id"])
    digest = job["result"]["roll"]
    data = client.get(f"/v1/artifacts/{digest}").content
    assert hashlib.sha256(data).hexdigest() == digest


def test_same_seed_gives_identical_artifacts(client, ckpt_path):
    payloads = []
    for _ in range(2):
        resp = client.post("/v1/generate",
                           json={"checkpoint": ckpt_path, "seed": 11, "sync": True})
        job = _wait_done(client, resp.json()["job_id"])
        payloads.append((job["result"]["roll"], job["result"]["midi"]))
    assert payloads[0] == payloads[1]


def test_inpaint_all_ones_mask_returns_source(client, ckpt_path):
    rng = np.random.default_rng(5)
    source = random_roll(rng, density=0.03)
    payload = {
        "checkpoint": ckpt_path,
        "seed": 0,
        "sync": True,
        # an empty generated range fixes every cell
        "inpaint": {"source": roll_to_json(source),
                    "mask": {"kind": "time_steps", "start": 0, "stop": 0}},
    }
    job = _wait_done(client, client.post("/v1/generate", json=payload).json()["job_id"])
    assert job["state"] == "done"
    result = roll_from_json(json.loads(
        client.get(f"/v1/artifacts/{job['result']['roll']}").content))
    assert np.array_equal(result.data, source.data)


def test_inpaint_job_kind_and_mask_semantics(client, ckpt_path):
    rng = np.random.default_rng(6)
    source = random_roll(rng, density=0.03)
    payload = {
        "checkpoint": ckpt_path,
        "seed": 1,
        "sync": True,
        "inpaint": {"source": roll_to_json(source),
                    "mask": {"kind": "time_bars", "bars": [3, 4, 5, 7]}},
    }
    job = _wait_done(client, client.post("/v1/generate", json=payload).json()["job_id"])
    assert job["kind"] == "inpaint"
    result = roll_from_json(json.loads(
        client.get(f"/v1/artifacts/{job['result']['roll']}").content))
    kept = np.ones(128, dtype=bool)
    for bar in (3, 4, 5, 7):
        kept[(bar - 1) * 16:bar * 16] = False
    assert np.array_equal(result.data[:, kept], source.data[:, kept])


def test_long_form_job(client, ckpt_path):
    rng = np.random.default_rng(7)
    prompt = random_roll(rng, density=0.05, num_steps=64)
    payload = {"checkpoint": ckpt_path, "seed": 2, "sync": True,
               "long": {"prompt": roll_to_json(prompt), "iterations": 2}}
    job = _wait_done(client, client.post("/v1/generate", json=payload).json()["job_id"])
    assert job["kind"] == "long_form"
    obj = json.loads(client.get(f"/v1/artifacts/{job['result']['roll']}").content)
    assert obj["shape"] == [2, 12 * 16, 128]  # 4 prompt bars + 2 x 4 new bars


def test_unknown_checkpoint_404(client):
    resp = client.post("/v1/generate", json={"checkpoint": "/does/not/exist.ckpt"})
    assert resp.status_code == 404


def test_condition_mismatch_422(client, ckpt_path):
    resp = client.post("/v1/generate", json={
        "checkpoint": ckpt_path,
        "guidance": {"scale": 5.0, "chords_text": "C:maj*32"},
    })
    assert resp.status_code == 422


def test_bad_mask_spec_422(client, ckpt_path):
    rng = np.random.default_rng(8)
    resp = client.post("/v1/generate", json={
        "checkpoint": ckpt_path,
        "inpaint": {"source": roll_to_json(random_roll(rng)),
                    "mask": {"kind": "time_bars", "bars": [99]}},
    })
    assert resp.status_code == 422


def test_unknown_job_and_artifact_404(client):
    assert client.get("/v1/jobs/nope").status_code == 404
    assert client.get(f"/v1/artifacts/{'0' * 64}").status_code == 404


def test_journal_recovers_queued_jobs(tmp_path, ckpt_path):
    data_dir = tmp_path / "svc"
    data_dir.mkdir()
    manager = JobManager(data_dir, workers=0)  # no workers: job stays queued
    job = manager.submit({"checkpoint": ckpt_path, "seed": 9})
    assert manager.jobs[job.id].state == "queued"

    revived = JobManager(data_dir, workers=1)
    deadline = time.monotonic() + 60
    while time.monotonic() < deadline:
        if revived.jobs[job.id].state == "done":
            break
        time.sleep(0.05)
    assert revived.jobs[job.id].state == "done"
    revived.shutdown()
