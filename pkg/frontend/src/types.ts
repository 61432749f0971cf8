// Payload shapes of the session API. The console renders these verbatim;
// it never recomputes any physics client-side.

export interface SpecialAssetRow {
  branch: string;
  t_m: number | null;
  k_crit: string[];
  side_a: string[];
  f_k?: number;
  r_k?: number;
}

export interface ViolationRow {
  branch: string;
  flow_mw: number;
  rating_mw: number;
}

export interface NetworkSummary {
  case: string;
  buses: number;
  branches_in_service: number;
  total_generation_mw: number;
  total_demand_mw: number;
}

export interface SessionState {
  step: number;
  applied_outages: string[];
  network: NetworkSummary;
  flow_graph_available: boolean;
  e_s: SpecialAssetRow[];
  e_v: string[];
  violations: Record<string, ViolationRow[]>;
  triggers_before: string[];
  deadline_s: number;
}

export type DispatchMode = "ica" | "rca" | "sced" | "dcopf";

export interface SolutionSummary {
  mode: DispatchMode;
  status: "optimal" | "infeasible" | "iteration-limit";
  objective: number | null;
  gen_cost_total: number | null;
  load_shed_mw: number | null;
  kkt_residual: number | null;
  solve_time_s: number;
  infeasibility_hint: string;
  refinements?: number;
}

export interface StepRecord {
  step: number;
  outage: string;
  e_s: SpecialAssetRow[];
  e_v: string[];
  triggers_before: string[];
  solutions: Record<string, SolutionSummary>;
  t_i: number | null;
  t_r: number | null;
  committed: string | null;
  rationale: string;
  deadline_s: number | null;
  triggers_after: string[];
  gen_cost_total: number | null;
  shed_mw: number | null;
  residual_specials: string[];
  unresolved: boolean;
}

export interface ScenarioReport {
  case: string;
  config: Record<string, unknown>;
  steps: StepRecord[];
  summary: Record<string, unknown>;
}
