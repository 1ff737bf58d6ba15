/** Typed client for the generation service HTTP API. */

import type { TrajectoryPayload } from "./tracks.js";

export type SessionInfo = { session_id: string; width: number; height: number };
export type FlowArrow = { x: number; y: number; dx: number; dy: number };
export type TrajectoryResponse = { trajectory_id: string; sparse_flow_preview: FlowArrow[] };
export type JobStatus = {
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  error?: string;
};

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class StudioApi {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  async createSession(imagePngBase64: string): Promise<SessionInfo> {
    return this.request("/api/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image: imagePngBase64 }),
    });
  }

  async getSession(sessionId: string): Promise<SessionInfo & { trajectory_ids: string[] }> {
    return this.request(`/api/sessions/${sessionId}`);
  }

  async postTrajectories(sessionId: string, payload: TrajectoryPayload): Promise<TrajectoryResponse> {
    return this.request(`/api/sessions/${sessionId}/trajectories`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async createJob(
    sessionId: string,
    trajectoryId: string,
    seed: number,
    steps?: number,
  ): Promise<{ job_id: string }> {
    return this.request(`/api/sessions/${sessionId}/jobs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ trajectory_id: trajectoryId, seed, steps: steps ?? null }),
    });
  }

  async getJob(jobId: string): Promise<JobStatus> {
    return this.request(`/api/jobs/${jobId}`);
  }

  frameUrl(jobId: string, index: number): string {
    return `${this.baseUrl}/api/jobs/${jobId}/frames/${index}`;
  }

  heatmapUrl(jobId: string): string {
    return `${this.baseUrl}/api/jobs/${jobId}/heatmap`;
  }

  flowUrl(jobId: string, t: number): string {
    return `${this.baseUrl}/api/jobs/${jobId}/flow/${t}`;
  }
}
