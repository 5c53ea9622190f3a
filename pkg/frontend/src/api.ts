/** Typed client for the session service.
 *
 * Every request is appended to `requestLog`, which the e2e tests use to
 * verify the UI never touches anything but the documented endpoints. The
 * transport is injectable so tests can run against a fake server.
 */

import type {
  ChatResponse,
  GraphPayload,
  Job,
  RecommendationResponse,
  SessionInfo,
  StepRecord,
} from "./types.js";

export type Transport = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`HTTP ${status}: ${JSON.stringify(detail)}`);
  }
}

export interface LoggedRequest {
  method: string;
  path: string;
}

export interface KnowledgeDelta {
  forbid?: [string, string][];
  require?: [string, string][];
}

const POLL_INTERVAL_MS = 50;
const POLL_TIMEOUT_MS = 120_000;

export class ApiClient {
  readonly requestLog: LoggedRequest[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly transport: Transport = (url, init) => fetch(url, init),
  ) {}

  private async call(
    method: string,
    path: string,
    body?: unknown,
    form?: FormData,
  ): Promise<Response> {
    this.requestLog.push({ method, path });
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    let payload: BodyInit | undefined;
    if (form !== undefined) {
      payload = form;
    } else if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const resp = await this.transport(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: payload,
    });
    if (!resp.ok) {
      let detail: unknown;
      try {
        detail = (await resp.json()).detail;
      } catch {
        detail = await resp.text().catch(() => "");
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async createSession(viewers: string[] = []): Promise<string> {
    const resp = await this.call("POST", "/sessions", { viewers });
    return (await resp.json()).id as string;
  }

  async getSession(sid: string): Promise<SessionInfo> {
    return (await this.call("GET", `/sessions/${sid}`)).json();
  }

  async uploadCsv(sid: string, name: string, csvText: string): Promise<StepRecord> {
    const form = new FormData();
    form.append("file", new Blob([csvText], { type: "text/csv" }), `${name}.csv`);
    const resp = await this.call(
      "POST",
      `/sessions/${sid}/datasets?name=${encodeURIComponent(name)}`,
      undefined,
      form,
    );
    return (await resp.json()).record as StepRecord;
  }

  async submitStep(sid: string, command: Record<string, unknown>): Promise<Job> {
    const resp = await this.call("POST", `/sessions/${sid}/steps`, command);
    return (await resp.json()).job as Job;
  }

  async getJob(sid: string, jobId: string): Promise<Job> {
    return (await this.call("GET", `/sessions/${sid}/jobs/${jobId}`)).json();
  }

  async waitForJob(
    sid: string,
    jobId: string,
    onProgress?: (job: Job) => void,
  ): Promise<Job> {
    const deadline = Date.now() + POLL_TIMEOUT_MS;
    for (;;) {
      const job = await this.getJob(sid, jobId);
      onProgress?.(job);
      if (job.state === "succeeded" || job.state === "failed") {
        return job;
      }
      if (Date.now() > deadline) {
        throw new Error(`job ${jobId} did not finish within the poll timeout`);
      }
      await new Promise((resolve) => setTimeout(resolve, POLL_INTERVAL_MS));
    }
  }

  async getJournal(sid: string): Promise<StepRecord[]> {
    const text = await (await this.call("GET", `/sessions/${sid}/journal`)).text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => JSON.parse(line) as StepRecord);
  }

  async rollback(sid: string, stepId: number): Promise<number | null> {
    const resp = await this.call("POST", `/sessions/${sid}/rollback/${stepId}`);
    return (await resp.json()).head as number | null;
  }

  async getGraph(sid: string): Promise<GraphPayload> {
    return (await this.call("GET", `/sessions/${sid}/graph`)).json();
  }

  async patchKnowledge(sid: string, delta: KnowledgeDelta): Promise<StepRecord> {
    const resp = await this.call("PATCH", `/sessions/${sid}/knowledge`, delta);
    return (await resp.json()).record as StepRecord;
  }

  async getReport(sid: string): Promise<string> {
    return (await this.call("GET", `/sessions/${sid}/report`)).text();
  }

  async getArtifactJson<T>(sid: string, ref: string): Promise<T> {
    return (await this.call("GET", `/sessions/${sid}/artifacts/${ref}`)).json();
  }

  async getRecommendations(
    sid: string,
    goal: string,
    dataset?: string,
  ): Promise<RecommendationResponse> {
    const suffix = dataset ? `&dataset=${encodeURIComponent(dataset)}` : "";
    return (
      await this.call("GET", `/sessions/${sid}/recommendations?goal=${goal}${suffix}`)
    ).json();
  }

  async chat(sid: string, text: string): Promise<ChatResponse> {
    return (await this.call("POST", `/sessions/${sid}/chat`, { text })).json();
  }
}

/** Documented write surface; the e2e request-log check asserts nothing else
 * ever receives a mutating request. */
export const DOCUMENTED_WRITE_PATTERNS: RegExp[] = [
  /^\/sessions$/,
  /^\/sessions\/[^/]+\/datasets(\?.*)?$/,
  /^\/sessions\/[^/]+\/steps$/,
  /^\/sessions\/[^/]+\/rollback\/\d+$/,
  /^\/sessions\/[^/]+\/knowledge$/,
  /^\/sessions\/[^/]+\/chat$/,
];
