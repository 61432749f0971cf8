// Controller behaviour with a mocked backend: commit gating, deadline
// recommendation, conflict refresh, verbatim error surfacing.

import { afterEach, describe, expect, it, vi } from "vitest";

import { canonicalJson, recommendCommit, SessionController } from "../src/controller.js";
import type { SessionState, SolutionSummary } from "../src/types.js";

const BASE = "http://backend.test";

function stateDoc(step = 0): SessionState {
  return {
    step,
    applied_outages: [],
    network: {
      case: "abc",
      buses: 5,
      branches_in_service: 7,
      total_generation_mw: 360,
      total_demand_mw: 360,
    },
    flow_graph_available: true,
    e_s: [],
    e_v: [],
    violations: {},
    triggers_before: [],
    deadline_s: 600,
  };
}

function solution(mode: string, status = "optimal", t = 1.0): SolutionSummary {
  return {
    mode: mode as SolutionSummary["mode"],
    status: status as SolutionSummary["status"],
    objective: 1.0,
    gen_cost_total: 2.0,
    load_shed_mw: 0.0,
    kkt_residual: 1e-9,
    solve_time_s: t,
    infeasibility_hint: "",
  };
}

function mockFetch(routes: Record<string, (init?: RequestInit) => unknown>) {
  const fn = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
    const path = String(url).replace(BASE, "");
    const handler = routes[path];
    if (!handler) {
      return new Response(JSON.stringify({ detail: `no route ${path}` }), { status: 404 });
    }
    const result = handler(init);
    if (result instanceof Response) return result;
    return new Response(JSON.stringify(result), { status: 200 });
  });
  vi.stubGlobal("fetch", fn);
  return fn;
}

afterEach(() => vi.unstubAllGlobals());

describe("commit gating", () => {
  it("refuses to commit a mode without an optimal solution", async () => {
    mockFetch({
      "/state": () => stateDoc(),
      "/solutions": () => ({}),
      "/solve": () => solution("rca", "infeasible"),
    });
    const c = new SessionController(BASE);
    await c.refresh();
    await c.requestSolve("rca");
    expect(c.canCommit("rca")).toBe(false);
    const record = await c.commitSolution({ mode: "rca" });
    expect(record).toBeNull();
    expect(c.snapshot().lastError).toMatch(/no optimal solution/);
  });

  it("commits after an optimal solve and appends to the log", async () => {
    const record = { step: 0, outage: "4-3", committed: "rca" };
    mockFetch({
      "/state": () => stateDoc(),
      "/solutions": () => ({}),
      "/solve": () => solution("rca"),
      "/commit": () => record,
    });
    const c = new SessionController(BASE);
    await c.refresh();
    await c.requestSolve("rca");
    expect(c.canCommit("rca")).toBe(true);
    const got = await c.commitSolution({ mode: "rca" });
    expect(got).toMatchObject(record);
    expect(c.snapshot().log).toHaveLength(1);
  });
});

describe("deadline recommendation", () => {
  it("prefers the comprehensive solve when it beats the deadline", () => {
    const rec = recommendCommit(
      { ica: solution("ica", "optimal", 5), rca: solution("rca", "optimal", 1) },
      10,
    );
    expect(rec.mode).toBe("ica");
  });

  it("falls back to the fast solve when the comprehensive one misses", () => {
    const rec = recommendCommit(
      { ica: solution("ica", "optimal", 12), rca: solution("rca", "optimal", 1) },
      10,
    );
    expect(rec.mode).toBe("rca");
  });

  it("defers to the next deadline and still prefers comprehensive", () => {
    const rec = recommendCommit(
      { ica: solution("ica", "optimal", 12), rca: solution("rca", "optimal", 11) },
      10,
    );
    expect(rec.mode).toBe("ica");
    expect(rec.reason).toContain("20");
  });
});

describe("errors", () => {
  it("surfaces backend detail verbatim", async () => {
    mockFetch({
      "/state": () => stateDoc(),
      "/solutions": () => ({}),
      "/outage": () =>
        new Response(JSON.stringify({ detail: "branch 15-33 is already out of service" }), {
          status: 422,
        }),
    });
    const c = new SessionController(BASE);
    await c.refresh();
    const out = await c.postOutage("15-33");
    expect(out).toBeNull();
    expect(c.snapshot().lastError).toBe("branch 15-33 is already out of service");
  });

  it("treats 409 as someone-else-acted and refreshes", async () => {
    let stateCalls = 0;
    mockFetch({
      "/state": () => {
        stateCalls += 1;
        return stateDoc(stateCalls);
      },
      "/solutions": () => ({}),
      "/outage": () =>
        new Response(JSON.stringify({ detail: "another mutation is in progress" }), {
          status: 409,
        }),
    });
    const c = new SessionController(BASE);
    await c.refresh();
    const before = stateCalls;
    await c.postOutage("15-33");
    expect(c.snapshot().lastError).toMatch(/conflict/);
    expect(stateCalls).toBeGreaterThan(before);
  });
});

describe("canonical json", () => {
  it("orders keys recursively and deterministically", () => {
    const a = canonicalJson({ b: 1, a: [{ d: 2, c: 3 }] });
    const b = canonicalJson({ a: [{ c: 3, d: 2 }], b: 1 });
    expect(a).toBe(b);
    expect(a.indexOf('"a"')).toBeLessThan(a.indexOf('"b"'));
  });
});
