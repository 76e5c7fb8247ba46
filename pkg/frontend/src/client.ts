import { GenerateRequest, JobJson, RollJson } from "./types.js";

export interface FetchLike {
  (input: string, init?: { method?: string; headers?: Record<string, string>; body?: string }):
    Promise<{ status: number; json(): Promise<unknown>; arrayBuffer(): Promise<ArrayBuffer> }>;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

/** Thin client for the /v1 generation API with polling + backoff. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch as unknown as FetchLike,
    private sleep: (ms: number) => Promise<void> = (ms) => new Promise((r) => setTimeout(r, ms)),
  ) {}

  async submitGenerate(request: GenerateRequest): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/generate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    const body = (await resp.json()) as { job_id?: string; detail?: string };
    if (resp.status !== 202) {
      throw new ApiError(resp.status, body.detail ?? `generate failed (${resp.status})`);
    }
    return body.job_id!;
  }

  async getJob(jobId: string): Promise<JobJson> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/jobs/${jobId}`);
    if (resp.status !== 200) throw new ApiError(resp.status, `unknown job ${jobId}`);
    return (await resp.json()) as JobJson;
  }

  /** Poll with exponential backoff until the job settles. */
  async pollUntilDone(jobId: string, maxWaitMs = 600_000): Promise<JobJson> {
    let delay = 250;
    const deadline = Date.now() + maxWaitMs;
    for (;;) {
      const job = await this.getJob(jobId);
      if (job.state === "done" || job.state === "failed") return job;
      if (Date.now() > deadline) throw new ApiError(408, `job ${jobId} timed out`);
      await this.sleep(delay);
      delay = Math.min(delay * 2, 4000);
    }
  }

  async fetchRollArtifact(digest: string): Promise<RollJson> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/artifacts/${digest}`);
    if (resp.status !== 200) throw new ApiError(resp.status, `unknown artifact ${digest}`);
    const bytes = await resp.arrayBuffer();
    return JSON.parse(new TextDecoder().decode(bytes)) as RollJson;
  }

  async fetchMidiArtifact(digest: string): Promise<ArrayBuffer> {
    const resp = await this.fetchImpl(`${this.baseUrl}/v1/artifacts/${digest}`);
    if (resp.status !== 200) throw new ApiError(resp.status, `unknown artifact ${digest}`);
    return resp.arrayBuffer();
  }
}
