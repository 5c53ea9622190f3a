/** Pure view -> HTML/SVG string renderers; main.ts owns event wiring.
 *
 * The SVG edge set is exactly the graph JSON edge set (one element per
 * edge, tagged with data attributes), which the rendering-faithfulness test
 * checks verbatim.
 */

import { edgeKey, type UiSessionView } from "./store.js";
import type { GraphEdge, StepRecord } from "./types.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function constraintBadge(view: UiSessionView, edge: GraphEdge): string {
  const forbidden = view.knowledge.forbidden.some(
    ([a, b]) => a === edge.from && b === edge.to,
  );
  const required = view.knowledge.required.some(
    ([a, b]) => a === edge.from && b === edge.to,
  );
  if (required) return "required";
  if (forbidden) return "forbidden";
  return "";
}

export function renderGraphSvg(view: UiSessionView): string {
  const graph = view.graph;
  if (!graph) {
    return '<p class="empty">No graph yet. Run discovery or set one.</p>';
  }
  const parts: string[] = [
    '<svg viewBox="0 0 640 420" class="graph" data-testid="graph">',
    "<defs>" +
      '<marker id="arrow" viewBox="0 0 10 10" refX="22" refY="5" ' +
      'markerWidth="7" markerHeight="7" orient="auto-start-reverse">' +
      '<path d="M 0 0 L 10 5 L 0 10 z" fill="#7dd3fc"/></marker>' +
      "</defs>",
  ];
  for (const edge of graph.edges) {
    const a = view.positions.get(edge.from);
    const b = view.positions.get(edge.to);
    if (!a || !b) continue;
    const badge = constraintBadge(view, edge);
    const marker = edge.kind === "directed" ? ' marker-end="url(#arrow)"' : "";
    const cls = edge.kind === "directed" ? "edge directed" : "edge undirected";
    const error = view.edgeErrors.get(edgeKey(edge));
    parts.push(
      `<g class="${cls}${badge ? " " + badge : ""}${error ? " error" : ""}" ` +
        `data-edge="${esc(edgeKey(edge))}" data-from="${esc(edge.from)}" ` +
        `data-to="${esc(edge.to)}" data-kind="${edge.kind}">` +
        `<line x1="${a.x.toFixed(1)}" y1="${a.y.toFixed(1)}" ` +
        `x2="${b.x.toFixed(1)}" y2="${b.y.toFixed(1)}"${marker}/>` +
        (badge
          ? `<text class="badge" x="${((a.x + b.x) / 2).toFixed(1)}" ` +
            `y="${((a.y + b.y) / 2 - 6).toFixed(1)}">${badge === "required" ? "required" : "forbidden"}</text>`
          : "") +
        (error
          ? `<title>${esc(error)}</title>`
          : `<title>${esc(edgeKey(edge))} (${edge.kind})</title>`) +
        "</g>",
    );
  }
  for (const node of graph.nodes) {
    const p = view.positions.get(node);
    if (!p) continue;
    parts.push(
      `<g class="node" data-node="${esc(node)}">` +
        `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="16"/>` +
        `<text x="${p.x.toFixed(1)}" y="${(p.y + 4).toFixed(1)}">${esc(node)}</text>` +
        "</g>",
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

function describeCommand(record: StepRecord): string {
  const cmd = record.command;
  switch (cmd.kind) {
    case "discover":
      return `discover (${String(cmd["algo"])})`;
    case "run_rca":
      return `rca (${String(cmd["method"])})`;
    case "load_data":
      return `load dataset "${String(cmd["name"])}"`;
    case "set_knowledge":
      return "edit constraints";
    default:
      return cmd.kind.replace(/_/g, " ");
  }
}

export function renderTimeline(view: UiSessionView, branchPoints: Set<number>): string {
  if (view.journal.length === 0) {
    return '<p class="empty">No steps yet.</p>';
  }
  const items = view.journal.map((record) => {
    const classes = ["step", record.status];
    if (record.id === view.head) classes.push("head");
    if (branchPoints.has(record.id)) classes.push("branch");
    const parent = record.parent_id === null ? "start" : `after #${record.parent_id}`;
    return (
      `<li class="${classes.join(" ")}" data-step="${record.id}">` +
      `<span class="step-id">#${record.id}</span>` +
      `<span class="step-label">${esc(describeCommand(record))}</span>` +
      `<span class="step-meta">${esc(parent)}${branchPoints.has(record.id) ? " &middot; branch point" : ""}</span>` +
      (record.status === "failed"
        ? `<span class="step-error">${esc(record.error ?? "failed")}</span>`
        : "") +
      `<button class="rollback" data-rollback="${record.id}">rewind here</button>` +
      "</li>"
    );
  });
  return `<ol class="timeline" data-testid="timeline">${items.join("")}</ol>`;
}

export function renderRecommendations(view: UiSessionView): string {
  const recs = view.recommendations?.recommendations ?? [];
  if (recs.length === 0) {
    return '<p class="empty">Ask for recommendations to see ranked methods.</p>';
  }
  const rows = recs.map((rec) => {
    const runtime = rec.runtime
      ? `${rec.runtime.seconds_low.toPrecision(2)}&ndash;${rec.runtime.seconds_high.toPrecision(2)} s`
      : "n/a";
    return (
      `<li class="rec" data-method="${esc(rec.method)}">` +
      `<button class="pick" data-pick="${esc(rec.method)}">${esc(rec.method)}</button>` +
      `<span class="runtime">${runtime}</span>` +
      `<span class="rule">${esc(rec.rule)}</span>` +
      "</li>"
    );
  });
  return `<ul class="recs">${rows.join("")}</ul>`;
}

export function renderChat(view: UiSessionView): string {
  if (view.chatPreview) {
    const pretty = JSON.stringify(view.chatPreview.command, null, 2);
    return (
      '<div class="chat-preview" data-testid="chat-preview">' +
      `<p>Parsed command (awaiting confirmation):</p>` +
      `<pre>${esc(pretty)}</pre>` +
      '<button data-chat="confirm">run it</button>' +
      '<button data-chat="dismiss">dismiss</button>' +
      "</div>"
    );
  }
  if (view.clarification) {
    const suggestions = view.clarification.suggestions
      .map((s) => `<li>${esc(s)}</li>`)
      .join("");
    return (
      '<div class="chat-clarify">' +
      `<p>${esc(view.clarification.message)}</p>` +
      (suggestions ? `<ul>${suggestions}</ul>` : "") +
      "</div>"
    );
  }
  return "";
}

export function renderRca(view: UiSessionView): string {
  if (!view.rca) {
    return '<p class="empty">No root-cause ranking yet.</p>';
  }
  const rows = view.rca.ranking
    .slice(0, 10)
    .map(
      (item, i) =>
        `<tr><td>${i + 1}</td><td>${esc(item.node)}</td>` +
        `<td>${item.score.toPrecision(4)}</td></tr>`,
    )
    .join("");
  return (
    `<table class="rca" data-testid="rca"><caption>${esc(view.rca.method)}</caption>` +
    "<thead><tr><th>rank</th><th>node</th><th>score</th></tr></thead>" +
    `<tbody>${rows}</tbody></table>`
  );
}

export const REPORT_SECTIONS = [
  "Data Summary",
  "Preprocessing Decisions",
  "Knowledge Constraints",
  "Discovery",
  "Effects",
  "Root Cause Analysis",
  "Decision Journal",
] as const;

/** Client-side section toggles: the report itself stays exactly what the
 * server rendered; this only filters which sections are shown. */
export function filterReportSections(
  markdown: string,
  enabled: ReadonlySet<string>,
): string {
  const parts = markdown.split(/\n(?=## )/);
  const kept = parts.filter((part, i) => {
    if (i === 0 && !part.startsWith("## ")) return true; // title block
    const heading = part.match(/^## (.+)$/m)?.[1]?.trim();
    return heading !== undefined && enabled.has(heading);
  });
  return kept.join("\n");
}

export function renderReportToggles(enabled: ReadonlySet<string>): string {
  return REPORT_SECTIONS.map(
    (section) =>
      `<label class="toggle"><input type="checkbox" data-section="${esc(section)}"` +
      `${enabled.has(section) ? " checked" : ""}> ${esc(section)}</label>`,
  ).join(" ");
}

export function renderStatus(view: UiSessionView): string {
  if (view.busy && view.job) {
    const pct = Math.round(view.job.progress * 100);
    return (
      `<div class="progress" data-testid="progress">` +
      `<span>running ${esc(String(view.job.command["kind"] ?? "step"))}&hellip;</span>` +
      `<progress max="100" value="${pct}"></progress></div>`
    );
  }
  if (view.lastError) {
    return `<div class="error" data-testid="error">${esc(view.lastError)}</div>`;
  }
  return "";
}
