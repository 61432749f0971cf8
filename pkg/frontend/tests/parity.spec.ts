// Live parity: a scripted click-through of a three-outage scenario in
// simulated time, exported through the API, must equal the batch runner's
// report after canonical JSON ordering. Spawns the Python backend.

import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { canonicalJson, SessionController } from "../src/controller.js";
import type { ScenarioReport } from "../src/types.js";

const ROOT = resolve(__dirname, "..", "..");
const CASE = join(ROOT, "src", "gridcut", "data", "case118.json");
const PORT = 8741;
const BASE = `http://127.0.0.1:${PORT}`;

const SCENARIO = {
  events: [
    { t: 0.0, branch: "15-33" },
    { t: 600.0, branch: "37-38" },
    { t: 1200.0, branch: "42-49" },
  ],
  redispatch_interval_s: 600.0,
  top_fraction: 0.3,
  policy: "two-component",
  time_source: "simulated",
  simulated_times: [
    [5.0, 1.0],
    [5.0, 1.0],
    [720.0, 20.0],
  ],
  cascade_check: true,
  cascade_before: false,
};

let server: ReturnType<typeof spawn> | null = null;
let workDir = "";

async function waitForBackend(): Promise<void> {
  for (let i = 0; i < 120; i++) {
    try {
      const res = await fetch(`${BASE}/state`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("backend did not come up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "gridcut-parity-"));
  writeFileSync(join(workDir, "scenario.json"), JSON.stringify(SCENARIO));
  server = spawn(
    "python3",
    ["-m", "gridcut.cli", "serve", CASE, "--port", String(PORT),
     "--scenario", join(workDir, "scenario.json")],
    { cwd: ROOT, stdio: ["ignore", "inherit", "inherit"] },
  );
  await waitForBackend();
});

afterAll(() => {
  server?.kill();
});

describe("console/batch parity", () => {
  it("exported step log equals the batch report", async () => {
    // batch reference via the CLI
    const batchPath = join(workDir, "batch.json");
    const run = spawnSync(
      "python3",
      ["-m", "gridcut.cli", "run", CASE, join(workDir, "scenario.json"),
       "--out", batchPath],
      { cwd: ROOT, encoding: "utf-8" },
    );
    expect(run.status, run.stderr).toBe(0);
    const batch = JSON.parse(readFileSync(batchPath, "utf-8")) as ScenarioReport;

    // scripted click-through against the live session
    const c = new SessionController(BASE);
    await c.refresh();
    for (let i = 0; i < SCENARIO.events.length; i++) {
      const ev = SCENARIO.events[i];
      const [tIca, tRca] = SCENARIO.simulated_times[i];
      expect(await c.postOutage(ev.branch), c.snapshot().lastError ?? "").not.toBeNull();
      expect(await c.requestSolve("ica", tIca)).not.toBeNull();
      expect(await c.requestSolve("rca", tRca)).not.toBeNull();
      expect(c.canCommit("ica") || c.canCommit("rca")).toBe(true);
      const rec = await c.commitSolution({ auto: true });
      expect(rec).not.toBeNull();
    }
    const exported = await c.exportLog();
    expect(exported).not.toBeNull();

    expect(exported!.steps).toHaveLength(3);
    expect(exported!.steps.map((s) => s.committed)).toEqual(["ica", "ica", "rca"]);
    expect(canonicalJson(exported)).toBe(canonicalJson(batch));
  }, 280_000);
});
