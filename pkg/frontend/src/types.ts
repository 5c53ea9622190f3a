/** Wire types mirroring the server's JSON payloads. */

export type EdgeKind = "directed" | "undirected";

export interface GraphEdge {
  from: string;
  to: string;
  kind: EdgeKind;
  weight?: number;
}

export interface GraphPayload {
  nodes: string[];
  edges: GraphEdge[];
}

export interface SessionInfo {
  id: string;
  head: number | null;
  journal_length: number;
  datasets: string[];
  has_graph: boolean;
  has_truth: boolean;
  slots: string[];
  busy: boolean;
}

export interface StepRecord {
  id: number;
  parent_id: number | null;
  command: Record<string, unknown> & { kind: string };
  input_hashes: Record<string, string>;
  output_ref: string | null;
  status: "ok" | "failed";
  error: string | null;
  state: Record<string, string>;
  wall_time_ms: number;
  timestamp: string;
}

export interface Job {
  id: string;
  session_id: string;
  command: Record<string, unknown>;
  state: "queued" | "running" | "succeeded" | "failed";
  progress: number;
  result_step: number | null;
  result_ref: string | null;
  error: string | null;
}

export interface RuntimeEstimate {
  seconds_low: number;
  seconds_mid: number;
  seconds_high: number;
  formula: string;
  constant: number;
}

export interface Recommendation {
  method: string;
  rule: string;
  runtime: RuntimeEstimate | null;
}

export interface RecommendationResponse {
  goal: string;
  dataset: string;
  profile: Record<string, unknown>;
  recommendations: Recommendation[];
}

export interface Clarification {
  message: string;
  suggestions: string[];
}

export interface ChatResponse {
  command?: Record<string, unknown> & { kind: string };
  clarification?: Clarification;
}

export interface KnowledgePayload {
  forbidden: [string, string][];
  required: [string, string][];
}

export interface RankedCausesPayload {
  method: string;
  params: Record<string, unknown>;
  ranking: { node: string; score: number }[];
}

export type EdgeDecision = "forbid" | "require" | "orient";
