/** Page wiring: binds the session controller to the DOM. */

import { ApiClient } from "./api.js";
import {
  filterReportSections,
  renderChat,
  renderGraphSvg,
  renderRca,
  renderRecommendations,
  renderReportToggles,
  renderStatus,
  renderTimeline,
  REPORT_SECTIONS,
} from "./render.js";
import { SessionController } from "./store.js";
import type { EdgeDecision } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

export function bootstrap(): void {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("server") ?? "http://127.0.0.1:8321";
  const token = params.get("token") ?? "dev-token";
  const api = new ApiClient(baseUrl, token);
  const controller = new SessionController(api);
  let selectedEdge: { from: string; to: string } | null = null;
  const enabledSections = new Set<string>(REPORT_SECTIONS);

  const render = () => {
    const view = controller.view;
    el("session-label").textContent = view.sessionId ?? "(none)";
    el("status").innerHTML = renderStatus(view);
    el("graph-panel").innerHTML = renderGraphSvg(view);
    el("timeline-panel").innerHTML = renderTimeline(view, controller.branchPoints());
    el("recs-panel").innerHTML = renderRecommendations(view);
    el("chat-panel").innerHTML = renderChat(view);
    el("rca-panel").innerHTML = renderRca(view);
    el("rerun-banner").hidden = !view.offerRerun;
    (el("submit-chat") as HTMLButtonElement).disabled = view.busy;
    el("edge-actions").hidden = selectedEdge === null;
    if (selectedEdge) {
      el("edge-label").textContent = `${selectedEdge.from} → ${selectedEdge.to}`;
    }
    el("report-toggles").innerHTML = renderReportToggles(enabledSections);
    if (view.report !== null) {
      el("report-panel").textContent = filterReportSections(
        view.report,
        enabledSections,
      );
    }
  };
  controller.subscribe(render);

  el("report-toggles").addEventListener("change", (event) => {
    const box = event.target as HTMLInputElement;
    const section = box.dataset.section;
    if (!section) return;
    if (box.checked) enabledSections.add(section);
    else enabledSections.delete(section);
    render();
  });

  el("graph-panel").addEventListener("click", (event) => {
    const group = (event.target as Element).closest<SVGGElement>("g.edge");
    if (group) {
      selectedEdge = {
        from: group.dataset.from ?? "",
        to: group.dataset.to ?? "",
      };
      render();
    }
  });

  el("edge-actions").addEventListener("click", async (event) => {
    const button = (event.target as Element).closest<HTMLButtonElement>("button[data-decision]");
    if (!button || !selectedEdge) return;
    const decision = button.dataset.decision as EdgeDecision;
    await controller.editEdge(selectedEdge, decision);
    selectedEdge = null;
    render();
  });

  el("rerun-banner").addEventListener("click", async (event) => {
    if (
      (event.target as Element).closest("button[data-rerun]") &&
      !controller.view.busy
    ) {
      await controller.rerunDiscovery();
    }
  });

  el("timeline-panel").addEventListener("click", async (event) => {
    const button = (event.target as Element).closest<HTMLButtonElement>("button[data-rollback]");
    if (button) {
      await controller.rollbackTo(Number(button.dataset.rollback));
    }
  });

  el("recs-panel").addEventListener("click", async (event) => {
    const button = (event.target as Element).closest<HTMLButtonElement>("button[data-pick]");
    if (button && !controller.view.busy) {
      await controller.pickAlgorithm(button.dataset.pick ?? "pc");
    }
  });

  el("chat-panel").addEventListener("click", async (event) => {
    const button = (event.target as Element).closest<HTMLButtonElement>("button[data-chat]");
    if (!button) return;
    if (button.dataset.chat === "confirm") {
      await controller.confirmChat();
    } else {
      controller.dismissChat();
    }
  });

  el("submit-chat").addEventListener("click", async () => {
    const input = el<HTMLInputElement>("chat-input");
    if (input.value.trim()) {
      await controller.chat(input.value.trim());
      input.value = "";
    }
  });

  el("new-session").addEventListener("click", async () => {
    await controller.open();
  });

  el("upload").addEventListener("change", async (event) => {
    const input = event.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    const name = (file.name.replace(/\.csv$/i, "") || "default").toLowerCase();
    await controller.uploadCsv(name, await file.text());
    input.value = "";
  });

  el("recommend-graph").addEventListener("click", () =>
    controller.loadRecommendations("graph"),
  );
  el("recommend-rca").addEventListener("click", () =>
    controller.loadRecommendations("rca"),
  );
  el("run-recommended").addEventListener("click", () => {
    if (!controller.view.busy) void controller.runRecommended("graph");
  });
  el("show-report").addEventListener("click", () => controller.fetchReport());

  render();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  bootstrap();
}
