// Typed client for the annotation service. Every response is parsed
// against the schemas in schema.ts; failures throw ApiError carrying the
// service's code and message verbatim for the status bar.

import {
  apiErrorBody,
  jobStatus,
  propagateResult,
  scribbleAck,
  scribbleBody,
  sessionMeta,
  tracksPayload,
} from "./schema";
import type {
  JobStatus,
  PropagateResult,
  ScribbleBody,
  SessionMeta,
  TracksPayload,
} from "./schema";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly body: unknown = undefined,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorFrom(res: Response): Promise<ApiError> {
  let body: unknown;
  try {
    body = await res.json();
  } catch {
    return new ApiError(res.status, "error", res.statusText);
  }
  const parsed = apiErrorBody.safeParse(body);
  if (parsed.success) {
    return new ApiError(res.status, parsed.data.code, parsed.data.message, body);
  }
  return new ApiError(res.status, "error", JSON.stringify(body), body);
}

export class Client {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly base: string = "",
    fetchImpl?: FetchLike,
  ) {
    // bind so a bare global fetch keeps its expected receiver
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchImpl(this.base + path, init);
    if (!res.ok) throw await errorFrom(res);
    return res.json();
  }

  private async post(path: string, payload?: unknown): Promise<unknown> {
    return this.request(path, {
      method: "POST",
      headers: payload === undefined ? undefined : {
        "content-type": "application/json",
      },
      body: payload === undefined ? undefined : JSON.stringify(payload),
    });
  }

  async createSession(framesDir: string): Promise<SessionMeta> {
    const body = await this.post("/sessions", { frames_dir: framesDir });
    return sessionMeta.parse(body);
  }

  frameUrl(sessionId: string, n: number): string {
    return `${this.base}/sessions/${sessionId}/frames/${n}`;
  }

  resultUrl(sessionId: string, layer: string, n: number): string {
    return `${this.base}/sessions/${sessionId}/results/${layer}/${n}`;
  }

  async tracks(sessionId: string, n: number): Promise<TracksPayload> {
    const body = await this.request(`/sessions/${sessionId}/tracks/${n}`);
    return tracksPayload.parse(body);
  }

  async postScribbles(sessionId: string, body: ScribbleBody): Promise<number> {
    // validate what we send, not just what we receive
    const payload = scribbleBody.parse(body);
    const ack = await this.post(`/sessions/${sessionId}/scribbles`, payload);
    return scribbleAck.parse(ack).seeds;
  }

  async propagate(sessionId: string): Promise<PropagateResult> {
    const body = await this.post(`/sessions/${sessionId}/propagate`);
    return propagateResult.parse(body);
  }

  async separate(sessionId: string): Promise<void> {
    await this.post(`/sessions/${sessionId}/separate`);
  }

  async status(sessionId: string): Promise<JobStatus> {
    const body = await this.request(`/sessions/${sessionId}/status`);
    return jobStatus.parse(body);
  }

  // poll until the job leaves the running state; reports every payload
  async waitForJob(
    sessionId: string,
    onStatus?: (s: JobStatus) => void,
    intervalMs = 500,
  ): Promise<JobStatus> {
    for (;;) {
      const s = await this.status(sessionId);
      onStatus?.(s);
      if (s.state === "done" || s.state === "failed") return s;
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }
}
