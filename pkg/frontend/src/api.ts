// Thin typed client over the session HTTP API. Errors carry the backend's
// message verbatim so the UI can show exactly what the server said.

import type {
  DispatchMode,
  ScenarioReport,
  SessionState,
  SolutionSummary,
  StepRecord,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly conflict: boolean;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
    this.conflict = status === 409;
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(base + path, {
    headers: { "content-type": "application/json" },
    ...init,
  });
  if (!res.ok) {
    let detail = `${res.status} ${res.statusText}`;
    try {
      const body = (await res.json()) as { detail?: unknown };
      if (body && body.detail !== undefined) detail = String(body.detail);
    } catch {
      // non-JSON error body: keep the status line
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(readonly base: string) {}

  getState(): Promise<SessionState> {
    return request(this.base, "/state");
  }

  postOutage(branch: string): Promise<SessionState> {
    return request(this.base, "/outage", {
      method: "POST",
      body: JSON.stringify({ branch }),
    });
  }

  postSolve(mode: DispatchMode, tSolve?: number): Promise<SolutionSummary> {
    const body: Record<string, unknown> = { mode };
    if (tSolve !== undefined) body.t_solve = tSolve;
    return request(this.base, "/solve", {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  getSolutions(): Promise<Record<string, SolutionSummary>> {
    return request(this.base, "/solutions");
  }

  postCommit(arg: { mode: DispatchMode } | { auto: true }): Promise<StepRecord> {
    return request(this.base, "/commit", {
      method: "POST",
      body: JSON.stringify(arg),
    });
  }

  getCascade(): Promise<{ triggers: string[] }> {
    return request(this.base, "/cascade");
  }

  getReport(): Promise<ScenarioReport> {
    return request(this.base, "/report");
  }

  postReset(): Promise<{ ok: boolean }> {
    return request(this.base, "/reset", { method: "POST", body: "{}" });
  }
}
