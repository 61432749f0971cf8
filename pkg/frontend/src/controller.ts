// Session controller: the console's whole behaviour without any DOM.
// Every user action maps 1:1 to one API call; all numbers come back from
// the server. The UI layer only renders this controller's state.

import { ApiClient, ApiError } from "./api.js";
import type {
  DispatchMode,
  ScenarioReport,
  SessionState,
  SolutionSummary,
  StepRecord,
} from "./types.js";

export interface ControllerSnapshot {
  state: SessionState | null;
  solutions: Record<string, SolutionSummary>;
  log: StepRecord[];
  lastError: string | null;
  busy: boolean;
}

export type Listener = (snap: ControllerSnapshot) => void;

/** Deadline advice: which solved mode the timing rule favours right now. */
export function recommendCommit(
  solutions: Record<string, SolutionSummary>,
  deadlineS: number,
): { mode: DispatchMode | null; reason: string } {
  const ica = solutions["ica"];
  const rca = solutions["rca"];
  const okIca = ica !== undefined && ica.status === "optimal";
  const okRca = rca !== undefined && rca.status === "optimal";
  if (!okIca && !okRca) {
    return { mode: null, reason: "no optimal solution available yet" };
  }
  for (let k = 1; ; k++) {
    const deadline = k * deadlineS;
    if (okIca && ica.solve_time_s < deadline) {
      return {
        mode: "ica",
        reason: `comprehensive solve (${ica.solve_time_s}s) beats deadline ${deadline}s`,
      };
    }
    if (okRca && rca.solve_time_s < deadline) {
      return {
        mode: "rca",
        reason: `fast solve (${rca.solve_time_s}s) beats deadline ${deadline}s; comprehensive missed it`,
      };
    }
  }
}

export class SessionController {
  private readonly api: ApiClient;
  private state: SessionState | null = null;
  private solutions: Record<string, SolutionSummary> = {};
  private log: StepRecord[] = [];
  private lastError: string | null = null;
  private busy = false;
  private listeners: Listener[] = [];

  constructor(baseUrl: string) {
    this.api = new ApiClient(baseUrl);
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
  }

  snapshot(): ControllerSnapshot {
    return {
      state: this.state,
      solutions: { ...this.solutions },
      log: [...this.log],
      lastError: this.lastError,
      busy: this.busy,
    };
  }

  private publish(): void {
    const snap = this.snapshot();
    for (const fn of this.listeners) fn(snap);
  }

  private async guarded<T>(op: () => Promise<T>): Promise<T | null> {
    this.busy = true;
    this.lastError = null;
    this.publish();
    try {
      return await op();
    } catch (err) {
      if (err instanceof ApiError && err.conflict) {
        // someone else acted: surface it and refresh to their state
        this.lastError = `conflict: ${err.message}`;
        await this.refresh().catch(() => undefined);
      } else {
        this.lastError = err instanceof Error ? err.message : String(err);
      }
      return null;
    } finally {
      this.busy = false;
      this.publish();
    }
  }

  async refresh(): Promise<void> {
    this.state = await this.api.getState();
    this.solutions = await this.api.getSolutions();
    this.publish();
  }

  async postOutage(branch: string): Promise<SessionState | null> {
    return this.guarded(async () => {
      const state = await this.api.postOutage(branch);
      this.state = state;
      this.solutions = {};
      return state;
    });
  }

  async requestSolve(mode: DispatchMode, tSolve?: number): Promise<SolutionSummary | null> {
    return this.guarded(async () => {
      const summary = await this.api.postSolve(mode, tSolve);
      this.solutions[mode] = summary;
      return summary;
    });
  }

  /** Commit is allowed only for a mode whose solution came back optimal. */
  canCommit(mode: DispatchMode): boolean {
    const sol = this.solutions[mode];
    return sol !== undefined && sol.status === "optimal";
  }

  recommendation(): { mode: DispatchMode | null; reason: string } {
    const deadline = this.state?.deadline_s ?? 600;
    return recommendCommit(this.solutions, deadline);
  }

  async commitSolution(arg: { mode: DispatchMode } | { auto: true }): Promise<StepRecord | null> {
    if ("mode" in arg && !this.canCommit(arg.mode)) {
      this.lastError = `mode ${arg.mode} has no optimal solution to commit`;
      this.publish();
      return null;
    }
    return this.guarded(async () => {
      const record = await this.api.postCommit(arg);
      this.log.push(record);
      this.solutions = {};
      await this.refresh();
      return record;
    });
  }

  async cascadeSummary(): Promise<string[] | null> {
    return this.guarded(async () => (await this.api.getCascade()).triggers);
  }

  /** Step log in the batch report schema (fetched, never recomputed). */
  async exportLog(): Promise<ScenarioReport | null> {
    return this.guarded(() => this.api.getReport());
  }
}

/** Stable stringify: objects with sorted keys, so two exports of the same
 * data compare byte-for-byte. */
export function canonicalJson(value: unknown): string {
  const sort = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sort);
    if (v && typeof v === "object") {
      const out: Record<string, unknown> = {};
      for (const k of Object.keys(v as Record<string, unknown>).sort()) {
        out[k] = sort((v as Record<string, unknown>)[k]);
      }
      return out;
    }
    return v;
  };
  return JSON.stringify(sort(value), null, 1);
}
