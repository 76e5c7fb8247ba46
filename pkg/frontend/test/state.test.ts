import { describe, expect, it } from "vitest";
import { ApiClient, FetchLike } from "../src/client.js";
import { RollGrid } from "../src/grid.js";
import { EditorState } from "../src/state.js";
import { JobJson } from "../src/types.js";

function fakeService(resultRollFor: (body: any) => object): FetchLike {
  const artifacts = new Map<string, string>();
  let jobCounter = 0;
  const jobs = new Map<string, JobJson>();
  return async (url, init) => {
    if (url.endsWith("/v1/generate")) {
      const body = JSON.parse(init!.body!);
      const id = `job${jobCounter++}`;
      const digest = `digest-${id}`;
      artifacts.set(digest, JSON.stringify(resultRollFor(body)));
      jobs.set(id, { id, kind: "inpaint", state: "done",
                     result: { roll: digest, midi: "m", dropped_sustain_runs: 0 },
                     error: null });
      return respond(202, { job_id: id });
    }
    if (url.includes("/v1/jobs/")) {
      const id = url.split("/").pop()!;
      const job = jobs.get(id);
      return job ? respond(200, job) : respond(404, { detail: "unknown job" });
    }
    if (url.includes("/v1/artifacts/")) {
      const digest = url.split("/").pop()!;
      const data = artifacts.get(digest);
      return data ? respondBytes(200, data) : respond(404, { detail: "unknown" });
    }
    return respond(404, { detail: "bad route" });
  };

  function respond(status: number, body: object) {
    return {
      status,
      json: async () => body,
      arrayBuffer: async () => new TextEncoder().encode(JSON.stringify(body)).buffer,
    };
  }
  function respondBytes(status: number, text: string) {
    return {
      status,
      json: async () => JSON.parse(text),
      arrayBuffer: async () => new TextEncoder().encode(text).buffer,
    };
  }
}

function stateWith(fetchImpl: FetchLike): EditorState {
  const client = new ApiClient("", fetchImpl, async () => {});
  const state = new EditorState(client);
  state.checkpoint = "toy.ckpt";
  return state;
}

describe("editor state", () => {
  it("guidance slider at 5 issues scale 5.0 in the request JSON", () => {
    const state = stateWith(fakeService(() => ({})));
    state.guidanceScale = 5.0;
    const request = state.buildRequest();
    expect(request.guidance!.scale).toBe(5.0);
    expect(JSON.stringify(request)).toContain('"scale":5');
  });

  it("a full chord lane sends a 32-slot chord sequence", () => {
    const state = stateWith(fakeService(() => ({})));
    state.chordLaneText = "C:maj*32";
    const request = state.buildRequest();
    expect(request.guidance!.chords!.length).toBe(32);
    expect(request.guidance!.chords![0]).toEqual({ root: 0, bass: 0, chroma: [0, 4, 7] });
  });

  it("an all-ones-mask job renders zero changed cells", async () => {
    // the service echoes the submitted source back, as the sampler guarantees
    const service = fakeService((body) => body.inpaint.source);
    const state = stateWith(service);
    state.grid.addNote(60, 0, 4);
    state.grid.addNote(67, 32, 8);
    state.commitEdit();
    state.mask.lasso([[0, 0]], "fix"); // leave painter empty, then force all-fixed
    state.mask.clear();
    state.mask.invert(); // complement of generate-all = fix everything
    const take = await state.submitGenerate();
    expect(take.changedCellsUnderFixedMask).toEqual([]);
    expect(take.grid.equals(state.takes[0].grid)).toBe(true);
  });

  it("flags fixed cells the server altered", async () => {
    const service = fakeService((body) => {
      const tampered = RollGrid.fromRollJson(body.inpaint.source);
      tampered.addNote(40, 0, 1); // violate the invariant
      return tampered.toRollJson();
    });
    const state = stateWith(service);
    state.grid.addNote(60, 0, 4);
    state.commitEdit();
    state.mask.invert(); // all fixed
    const take = await state.submitGenerate();
    expect(take.changedCellsUnderFixedMask).toContainEqual([0, 0, 40]);
  });

  it("undo and redo are exact inverses over the grid", () => {
    const state = stateWith(fakeService(() => ({})));
    const empty = state.grid.clone();
    state.grid.addNote(60, 0, 4);
    state.commitEdit();
    const oneNote = state.grid.clone();
    state.grid.addNote(64, 8, 2);
    state.commitEdit();

    state.undo();
    expect(state.grid.equals(oneNote)).toBe(true);
    state.undo();
    expect(state.grid.equals(empty)).toBe(true);
    state.redo();
    expect(state.grid.equals(oneNote)).toBe(true);
    state.redo();
    expect(state.grid.onsetAt(8, 64)).toBe(true);
  });

  it("merged takes append to history so undo returns to the pre-merge grid", async () => {
    const service = fakeService((body) => body.inpaint.source);
    const state = stateWith(service);
    state.grid.addNote(60, 0, 4);
    state.commitEdit();
    const before = state.grid.clone();
    await state.submitGenerate();
    state.undo();
    expect(state.grid.equals(before)).toBe(true);
  });
});
