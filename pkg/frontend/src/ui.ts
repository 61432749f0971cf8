// DOM layer: renders controller snapshots, wires buttons to actions,
// polls /state once a second.

import { canonicalJson, SessionController } from "./controller.js";
import type { ControllerSnapshot } from "./controller.js";
import type { DispatchMode } from "./types.js";

const MODES: DispatchMode[] = ["ica", "rca", "sced", "dcopf"];

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(v: number | null | undefined, digits = 2): string {
  return v === null || v === undefined ? "–" : v.toFixed(digits);
}

export function mountConsole(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = "";
  const banner = el("div", "error-banner");
  banner.style.display = "none";
  const retry = el("button", "retry", "retry");
  retry.addEventListener("click", () => void controller.refresh());
  banner.append(el("span", "error-text"), retry);

  const header = el("div", "header");
  const network = el("div", "network");
  const outageForm = el("div", "outage-form");
  const branchInput = document.createElement("input");
  branchInput.placeholder = "branch, e.g. 15-33";
  const outageBtn = el("button", "primary", "apply outage") as HTMLButtonElement;
  outageBtn.addEventListener("click", () => {
    if (branchInput.value.trim()) void controller.postOutage(branchInput.value.trim());
  });
  outageForm.append(branchInput, outageBtn);
  header.append(network, outageForm);

  const esCard = el("div", "card es-card");
  const evCard = el("div", "card ev-card");
  const solutionsRow = el("div", "solutions");
  const logCard = el("div", "card log-card");
  const exportBtn = el("button", "", "export step log (JSON)") as HTMLButtonElement;
  exportBtn.addEventListener("click", () => {
    void controller.exportLog().then((report) => {
      if (!report) return;
      const blob = new Blob([canonicalJson(report)], { type: "application/json" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "scenario-report.json";
      a.click();
    });
  });

  root.append(banner, header, esCard, evCard, solutionsRow, logCard, exportBtn);

  function render(snap: ControllerSnapshot): void {
    const errText = banner.querySelector(".error-text") as HTMLElement;
    banner.style.display = snap.lastError ? "block" : "none";
    errText.textContent = snap.lastError ?? "";

    if (snap.state) {
      const s = snap.state;
      network.innerHTML = "";
      network.append(
        el("h1", "", "gridcut operator console"),
        el("div", "", `step ${s.step} · outages: ${s.applied_outages.join(", ") || "none"}`),
        el("div", "", `generation ${fmt(s.network.total_generation_mw, 1)} MW · ` +
          `demand ${fmt(s.network.total_demand_mw, 1)} MW · ` +
          `${s.network.branches_in_service} branches in service`),
        el("div", "deadline", `redispatch deadline: ${s.deadline_s} s`),
      );

      esCard.innerHTML = "";
      esCard.append(el("h2", "", `special assets (E_s): ${s.e_s.length}`));
      for (const row of s.e_s) {
        const detail = `cut {${row.k_crit.join(", ")}} · side A: ${row.side_a.join(" ")}` +
          (row.f_k !== undefined ? ` · F/R ${fmt(row.f_k, 1)}/${fmt(row.r_k, 1)} MW` : "");
        esCard.append(el("div", "es-row",
          `${row.branch}  T_m=${fmt(row.t_m, 3)} MW   ${detail}`));
      }

      evCard.innerHTML = "";
      evCard.append(el("h2", "", `critical contingencies (E_v): ${s.e_v.length}`));
      for (const [k, rows] of Object.entries(s.violations)) {
        evCard.append(el("div", "ev-row",
          `${k}: ` + rows.map((v) =>
            `${v.branch} ${fmt(v.flow_mw, 1)}/${fmt(v.rating_mw, 1)} MW`).join(", ")));
      }
    }

    solutionsRow.innerHTML = "";
    const rec = controller.recommendation();
    for (const mode of MODES) {
      const card = el("div", "card solution-card");
      card.append(el("h3", "", mode));
      const sol = snap.solutions[mode];
      if (sol) {
        card.append(
          el("div", "", `status: ${sol.status}`),
          el("div", "", `cost ${fmt(sol.gen_cost_total)} $ · shed ${fmt(sol.load_shed_mw)} MW`),
          el("div", "", `solve time ${fmt(sol.solve_time_s, 3)} s`),
        );
        if (sol.infeasibility_hint) card.append(el("div", "hint", sol.infeasibility_hint));
      } else {
        card.append(el("div", "", "not solved"));
      }
      const solveBtn = el("button", "", "solve") as HTMLButtonElement;
      solveBtn.disabled = snap.busy;
      solveBtn.addEventListener("click", () => void controller.requestSolve(mode));
      const commitBtn = el("button", "", "commit") as HTMLButtonElement;
      commitBtn.disabled = snap.busy || !controller.canCommit(mode);
      commitBtn.addEventListener("click", () => void controller.commitSolution({ mode }));
      card.append(solveBtn, commitBtn);
      if (rec.mode === mode) card.append(el("div", "recommended", `recommended: ${rec.reason}`));
      solutionsRow.append(card);
    }

    logCard.innerHTML = "";
    logCard.append(el("h2", "", "step log"));
    for (const rec2 of snap.log) {
      logCard.append(el("div", "log-row",
        `#${rec2.step} ${rec2.outage}: committed ${rec2.committed ?? "none"} ` +
        `(${rec2.rationale}) · cost ${fmt(rec2.gen_cost_total)} · ` +
        `shed ${fmt(rec2.shed_mw)} MW · triggers after: ${rec2.triggers_after.length}`));
    }
  }

  controller.subscribe(render);
  void controller.refresh();
  setInterval(() => {
    if (!controller.snapshot().busy) void controller.refresh();
  }, 1000);
}
