/** Session view-model.
 *
 * All analysis state derives from server responses; the controller performs
 * no causal computation of its own and mutates the session only through the
 * documented endpoints. Chat-derived commands are held as a preview and
 * execute only after an explicit confirm.
 */

import { ApiClient, ApiError, type KnowledgeDelta } from "./api.js";
import { layoutGraph, type Point } from "./layout.js";
import type {
  ChatResponse,
  Clarification,
  EdgeDecision,
  GraphEdge,
  GraphPayload,
  Job,
  KnowledgePayload,
  RankedCausesPayload,
  RecommendationResponse,
  SessionInfo,
  StepRecord,
} from "./types.js";

export interface ChatPreview {
  text: string;
  command: Record<string, unknown> & { kind: string };
}

export interface UiSessionView {
  sessionId: string | null;
  info: SessionInfo | null;
  journal: StepRecord[];
  head: number | null;
  graph: GraphPayload | null;
  positions: Map<string, Point>;
  knowledge: KnowledgePayload;
  rca: RankedCausesPayload | null;
  recommendations: RecommendationResponse | null;
  report: string | null;
  job: Job | null;
  busy: boolean;
  chatPreview: ChatPreview | null;
  clarification: Clarification | null;
  edgeErrors: Map<string, string>;
  offerRerun: boolean;
  lastError: string | null;
}

function emptyView(): UiSessionView {
  return {
    sessionId: null,
    info: null,
    journal: [],
    head: null,
    graph: null,
    positions: new Map(),
    knowledge: { forbidden: [], required: [] },
    rca: null,
    recommendations: null,
    report: null,
    job: null,
    busy: false,
    chatPreview: null,
    clarification: null,
    edgeErrors: new Map(),
    offerRerun: false,
    lastError: null,
  };
}

export function edgeKey(edge: Pick<GraphEdge, "from" | "to">): string {
  return `${edge.from}->${edge.to}`;
}

export class SessionController {
  view: UiSessionView = emptyView();
  private listeners: Array<(view: UiSessionView) => void> = [];

  constructor(
    private readonly api: ApiClient,
    private readonly layoutSeed = 7,
  ) {}

  subscribe(listener: (view: UiSessionView) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  async open(sessionId?: string): Promise<string> {
    const sid = sessionId ?? (await this.api.createSession());
    this.view = emptyView();
    this.view.sessionId = sid;
    await this.refresh();
    return sid;
  }

  /** Pull the entire view state from the server. */
  async refresh(): Promise<void> {
    const sid = this.requireSession();
    const info = await this.api.getSession(sid);
    const journal = await this.api.getJournal(sid);
    this.view.info = info;
    this.view.journal = journal;
    this.view.head = info.head;
    const headRecord = journal.find((r) => r.id === info.head);
    const state = headRecord?.state ?? {};
    this.view.graph = info.has_graph ? await this.api.getGraph(sid) : null;
    this.view.positions = this.view.graph
      ? layoutGraph(this.view.graph.nodes, this.view.graph.edges, {
          seed: this.layoutSeed,
        })
      : new Map();
    this.view.knowledge = state["knowledge"]
      ? await this.api.getArtifactJson<KnowledgePayload>(sid, state["knowledge"])
      : { forbidden: [], required: [] };
    this.view.rca = state["rca"]
      ? await this.api.getArtifactJson<RankedCausesPayload>(sid, state["rca"])
      : null;
    this.view.lastError = null;
    this.emit();
  }

  private requireSession(): string {
    if (!this.view.sessionId) {
      throw new Error("no session open");
    }
    return this.view.sessionId;
  }

  async uploadCsv(name: string, csvText: string): Promise<void> {
    const sid = this.requireSession();
    await this.api.uploadCsv(sid, name, csvText);
    await this.refresh();
  }

  /** Map an edge decision to a knowledge PATCH:
   * forbid A->B removes that direction, require/orient A->B pins it. */
  async editEdge(
    edge: Pick<GraphEdge, "from" | "to">,
    decision: EdgeDecision,
  ): Promise<void> {
    const sid = this.requireSession();
    const delta: KnowledgeDelta =
      decision === "forbid"
        ? { forbid: [[edge.from, edge.to]] }
        : { require: [[edge.from, edge.to]] };
    try {
      await this.api.patchKnowledge(sid, delta);
    } catch (err) {
      if (err instanceof ApiError) {
        // inline error on the edge; no local state change
        this.view.edgeErrors.set(edgeKey(edge), String(err.detail));
        this.emit();
        return;
      }
      throw err;
    }
    this.view.edgeErrors.delete(edgeKey(edge));
    this.view.offerRerun = true;
    await this.refresh();
  }

  async submitCommand(command: Record<string, unknown>): Promise<Job> {
    const sid = this.requireSession();
    if (this.view.busy) {
      throw new Error("a step is already running for this session");
    }
    const submitted = await this.api.submitStep(sid, command);
    this.view.busy = true;
    this.view.job = submitted;
    this.emit();
    const job = await this.api.waitForJob(sid, submitted.id, (update) => {
      this.view.job = update;
      this.emit();
    });
    this.view.busy = false;
    this.view.job = job;
    if (job.state === "failed") {
      this.view.lastError = job.error;
      this.emit();
    }
    await this.refresh();
    return job;
  }

  async loadRecommendations(goal: string, dataset?: string): Promise<void> {
    const sid = this.requireSession();
    this.view.recommendations = await this.api.getRecommendations(sid, goal, dataset);
    this.emit();
  }

  /** Run the top recommendation for the goal. */
  async runRecommended(goal: string, dataset?: string): Promise<Job> {
    await this.loadRecommendations(goal, dataset);
    const recs = this.view.recommendations?.recommendations ?? [];
    if (recs.length === 0) {
      throw new Error("no recommendation available");
    }
    return this.pickAlgorithm(recs[0].method, dataset);
  }

  async pickAlgorithm(method: string, dataset?: string): Promise<Job> {
    const ds = dataset ?? this.view.info?.datasets[0] ?? "default";
    if (method.startsWith("rca_")) {
      return this.submitCommand({
        kind: "run_rca",
        method: method.replace("rca_", ""),
      });
    }
    return this.submitCommand({ kind: "discover", algo: method, dataset: ds });
  }

  async rerunDiscovery(algo = "pc", dataset?: string): Promise<Job> {
    this.view.offerRerun = false;
    const ds = dataset ?? this.view.info?.datasets[0] ?? "default";
    return this.submitCommand({ kind: "discover", algo, dataset: ds });
  }

  /** Timeline rollback: the head marker moves, later steps branch. */
  async rollbackTo(stepId: number): Promise<void> {
    const sid = this.requireSession();
    await this.api.rollback(sid, stepId);
    await this.refresh();
  }

  /** Chat round trip: the parsed command is previewed, never auto-run. */
  async chat(text: string): Promise<ChatResponse> {
    const sid = this.requireSession();
    const reply = await this.api.chat(sid, text);
    if (reply.command) {
      this.view.chatPreview = { text, command: reply.command };
      this.view.clarification = null;
    } else {
      this.view.chatPreview = null;
      this.view.clarification = reply.clarification ?? null;
    }
    this.emit();
    return reply;
  }

  async confirmChat(): Promise<Job> {
    const preview = this.view.chatPreview;
    if (!preview) {
      throw new Error("nothing to confirm");
    }
    this.view.chatPreview = null;
    if (preview.command.kind === "rollback") {
      const stepId = preview.command["step_id"];
      const target =
        typeof stepId === "number"
          ? stepId
          : (this.view.journal.find((r) => r.id === this.view.head)?.parent_id ?? 0);
      await this.rollbackTo(target);
      return {
        id: "rollback",
        session_id: this.view.sessionId ?? "",
        command: preview.command,
        state: "succeeded",
        progress: 1,
        result_step: this.view.head,
        result_ref: null,
        error: null,
      };
    }
    return this.submitCommand(preview.command);
  }

  dismissChat(): void {
    this.view.chatPreview = null;
    this.view.clarification = null;
    this.emit();
  }

  async fetchReport(): Promise<string> {
    const sid = this.requireSession();
    const report = await this.api.getReport(sid);
    this.view.report = report;
    this.emit();
    return report;
  }

  /** Branch points: steps with more than one child in the journal tree. */
  branchPoints(): Set<number> {
    const children = new Map<number, number>();
    for (const record of this.view.journal) {
      if (record.parent_id !== null) {
        children.set(record.parent_id, (children.get(record.parent_id) ?? 0) + 1);
      }
    }
    return new Set(
      [...children.entries()].filter(([, count]) => count > 1).map(([id]) => id),
    );
  }
}
