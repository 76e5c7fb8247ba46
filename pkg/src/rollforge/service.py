"""HTTP gateway: asynchronous generation jobs over a worker pool, with
content-addressed artifact storage.

Jobs move queued -> running -> done | failed, transitions guarded by one
lock. Generation on CPU takes seconds to minutes, so POST /v1/generate
returns a job id immediately; "sync": true runs inline for small-N tests.
Submissions are journaled so a clean shutdown loses nothing.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response

from .chords import ChordSeq, parse_chord_seq
from .conditioning import condition_tokens
from .masks import MaskSpec, make_mask
from .pianoroll import (DequantizedRoll, PianoRoll, roll_from_json, roll_to_json,
                        roll_to_midi)
from .samplers import GuidanceConfig, SampleRequest, generate_long, inpaint, sample_roll
from .trainer import Checkpoint, load_checkpoint

logger = logging.getLogger(__name__)

JOB_KINDS = ("sample", "inpaint", "long_form", "eval", "train")


@dataclass
class Job:
    id: str
    kind: str
    payload: dict
    state: str = "queued"
    result: dict | None = None
    error: str | None = None
    timings: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind, "state": self.state,
                "result": self.result, "error": self.error, "timings": self.timings}


class ArtifactStore:
    """Immutable content-addressed byte store."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / digest
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return digest

    def get(self, digest: str) -> bytes:
        path = self.root / digest
        if not path.exists():
            raise KeyError(digest)
        return path.read_bytes()


class CheckpointCache:
    """Loads each checkpoint once; models are inference-only and shared."""

    def __init__(self):
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[Checkpoint, torch.nn.Module]] = {}

    def get(self, path: str) -> tuple[Checkpoint, torch.nn.Module]:
        key = str(Path(path).resolve())
        with self._lock:
            if key not in self._cache:
                ckpt = load_checkpoint(path)
                self._cache[key] = (ckpt, ckpt.build_denoiser())
            return self._cache[key]


def _condition_from_payload(ckpt: Checkpoint, guidance: dict) -> torch.Tensor | None:
    mode = ckpt.condition_mode
    has_chords = "chords" in guidance or "chords_text" in guidance
    has_texture = "texture_src" in guidance
    if mode == "none":
        if has_chords or has_texture:
            raise ConditionMismatch("checkpoint is unconditional; no condition accepted")
        return None
    if mode in ("chord", "chord_raw36"):
        if has_texture or not has_chords:
            raise ConditionMismatch(f"checkpoint expects a chord condition (mode {mode})")
        if "chords_text" in guidance:
            seq = parse_chord_seq(guidance["chords_text"])
        else:
            seq = ChordSeq.from_json(guidance["chords"])
        return condition_tokens(mode, ckpt.encoders, chords=seq)
    if mode in ("texture", "texture_raw"):
        if has_chords or not has_texture:
            raise ConditionMismatch(f"checkpoint expects a texture condition (mode {mode})")
        src = roll_from_json(guidance["texture_src"])
        return condition_tokens(mode, ckpt.encoders, roll=src)
    raise ConditionMismatch(f"unhandled condition mode {mode!r}")


class ConditionMismatch(ValueError):
    pass


def run_generation(payload: dict, cache: CheckpointCache,
                   store: ArtifactStore) -> dict:
    """Execute one generation job and persist its artifacts."""
    ckpt_path = payload["checkpoint"]
    ckpt, model = cache.get(ckpt_path)
    seed = int(payload.get("seed", 0))
    guidance_payload = payload.get("guidance", {}) or {}
    scale = float(guidance_payload.get("scale", 1.0))
    cond = _condition_from_payload(ckpt, guidance_payload)
    guidance = GuidanceConfig(scale=scale, cond=cond)

    started = time.monotonic()
    if "long" in payload and payload["long"]:
        spec = payload["long"]
        prompt = roll_from_json(spec["prompt"])
        out = generate_long(model, ckpt.schedule, prompt,
                            iterations=int(spec.get("iterations", 1)),
                            seed=seed, guidance_scale=scale,
                            overlap_bars=int(spec.get("overlap_bars", 4)),
                            clip_range=(0.0, 1.0))
    elif "inpaint" in payload and payload["inpaint"]:
        spec = payload["inpaint"]
        source = roll_from_json(spec["source"])
        mask = make_mask(MaskSpec.from_json(spec["mask"]),
                         num_steps=source.num_steps, source=source)
        req = SampleRequest(shape=tuple(source.data.shape), seed=seed,
                            guidance=guidance, clip_range=(0.0, 1.0))
        out = inpaint(model, ckpt.schedule, source, mask, req)
    else:
        req = SampleRequest(seed=seed, guidance=guidance, clip_range=(0.0, 1.0))
        out = sample_roll(model, ckpt.schedule, req)
    elapsed = time.monotonic() - started

    midi_bytes, dropped = roll_to_midi(out)
    roll_bytes = json.dumps(roll_to_json(out)).encode()
    return {
        "roll": store.put(roll_bytes),
        "midi": store.put(midi_bytes),
        "dropped_sustain_runs": dropped,
        "sample_seconds": round(elapsed, 3),
    }


def _job_kind(payload: dict) -> str:
    if payload.get("long"):
        return "long_form"
    if payload.get("inpaint"):
        return "inpaint"
    return "sample"


class JobManager:
    def __init__(self, data_dir: Path, workers: int | None = None):
        self.store = ArtifactStore(data_dir / "artifacts")
        self.cache = CheckpointCache()
        self.journal_path = data_dir / "jobs.jsonl"
        self.jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._recover()
        count = workers if workers is not None else max(1, (os.cpu_count() or 2) - 1)
        self._workers = [threading.Thread(target=self._worker, daemon=True)
                         for _ in range(count)]
        for w in self._workers:
            w.start()

    def _journal(self, record: dict):
        with open(self.journal_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _recover(self):
        """Re-enqueue jobs that never finished before the last shutdown."""
        if not self.journal_path.exists():
            return
        states: dict[str, Job] = {}
        for line in self.journal_path.read_text().splitlines():
            rec = json.loads(line)
            if "payload" in rec:
                states[rec["id"]] = Job(rec["id"], rec["kind"], rec["payload"])
            elif rec["id"] in states:
                states[rec["id"]].state = rec["state"]
                states[rec["id"]].result = rec.get("result")
                states[rec["id"]].error = rec.get("error")
        for job in states.values():
            self.jobs[job.id] = job
            if job.state in ("queued", "running"):
                job.state = "queued"
                self._queue.put(job.id)

    def _transition(self, job: Job, state: str, **extra):
        with self._lock:
            job.state = state
            for key, value in extra.items():
                setattr(job, key, value)
        self._journal({"id": job.id, "state": state,
                       "result": job.result, "error": job.error})

    def _execute(self, job: Job):
        self._transition(job, "running")
        start = time.monotonic()
        try:
            result = run_generation(job.payload, self.cache, self.store)
            job.timings["seconds"] = round(time.monotonic() - start, 3)
            self._transition(job, "done", result=result)
        except Exception as exc:  # failed jobs carry their reason
            logger.exception("job %s failed", job.id)
            job.timings["seconds"] = round(time.monotonic() - start, 3)
            self._transition(job, "failed", error=f"{type(exc).__name__}: {exc}")

    def _worker(self):
        while True:
            job_id = self._queue.get()
            if job_id is None:
                return
            self._execute(self.jobs[job_id])

    def submit(self, payload: dict, sync: bool = False) -> Job:
        job = Job(id=uuid.uuid4().hex, kind=_job_kind(payload), payload=payload)
        with self._lock:
            self.jobs[job.id] = job
        self._journal({"id": job.id, "kind": job.kind, "payload": payload})
        if sync:
            self._execute(job)
        else:
            self._queue.put(job.id)
        return job

    def shutdown(self):
        for _ in self._workers:
            self._queue.put(None)
        for w in self._workers:
            w.join(timeout=5)


def create_app(data_dir: str | Path | None = None,
               workers: int | None = None) -> FastAPI:
    root = Path(data_dir or os.environ.get("ROLLFORGE_DATA_DIR", "rollforge-data"))
    root.mkdir(parents=True, exist_ok=True)
    manager = JobManager(root, workers=workers)
    app = FastAPI(title="rollforge", version="0.1.0")
    app.state.manager = manager

    @app.post("/v1/generate", status_code=202)
    def generate(payload: dict):
        ckpt_path = payload.get("checkpoint")
        if not ckpt_path or not Path(ckpt_path).exists():
            raise HTTPException(404, f"unknown checkpoint {ckpt_path!r}")
        try:
            ckpt, _ = manager.cache.get(ckpt_path)
            _condition_from_payload(ckpt, payload.get("guidance", {}) or {})
            if payload.get("inpaint"):
                source = roll_from_json(payload["inpaint"]["source"])
                make_mask(MaskSpec.from_json(payload["inpaint"]["mask"]),
                          num_steps=source.num_steps, source=source)
        except ConditionMismatch as exc:
            raise HTTPException(422, str(exc)) from exc
        except (KeyError, ValueError) as exc:
            raise HTTPException(422, f"bad request: {exc}") from exc
        job = manager.submit(payload, sync=bool(payload.get("sync")))
        return {"job_id": job.id}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        job = manager.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job.to_json()

    @app.get("/v1/artifacts/{digest}")
    def artifact(digest: str):
        try:
            data = manager.store.get(digest)
        except KeyError:
            raise HTTPException(404, f"unknown artifact {digest!r}")
        return Response(content=data, media_type="application/octet-stream")

    return app
