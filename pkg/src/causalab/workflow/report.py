"""Markdown report synthesis from a session's head ancestor chain.

The report is a pure function of the journalled commands and artifacts:
timestamps and wall times never appear, so two identically seeded sessions
render byte-identical reports.
"""

from __future__ import annotations

import json

from ..errors import CausalabError
from ..graphs import deserialize, serialize, shd, to_cpdag, validate_dag


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def _summarize_command(cmd: dict) -> str:
    kind = cmd.get("kind", "?")
    parts = []
    for key, value in sorted(cmd.items()):
        if key == "kind" or value is None:
            continue
        if key == "csv_text":
            parts.append(f"csv_text=<{len(value)} chars>")
        elif key == "graph_json":
            parts.append(f"graph_json=<{len(value)} chars>")
        elif isinstance(value, dict):
            inner = ",".join(f"{k}={_fmt(v)}" for k, v in sorted(value.items()))
            parts.append(f"{key}({inner})")
        else:
            parts.append(f"{key}={_fmt(value)}")
    return f"{kind}({', '.join(parts)})" if parts else kind


def generate_report(session) -> str:
    """Render the analysis so far: data, decisions, graphs, effects, RCA,
    and the full decision journal of the head's ancestor chain."""
    chain = session.chain()
    if not chain:
        raise CausalabError("journal is empty; nothing to report")
    state = session.state()
    lines: list[str] = ["# Causal Analysis Report", ""]

    # Data Summary
    lines += ["## Data Summary", ""]
    names = session.dataset_names(state)
    if names:
        lines.append("| dataset | rows | columns | continuous | categorical | missing cells |")
        lines.append("|---|---|---|---|---|---|")
        for name in names:
            ds = session.dataset(name, state)
            cont = sum(c.kind == "continuous" for c in ds.columns)
            lines.append(
                f"| {name} | {ds.n} | {ds.d} | {cont} | {ds.d - cont} | "
                f"{int(ds.mask.sum())} |"
            )
    else:
        lines.append("No datasets loaded.")
    lines.append("")

    # Preprocessing Decisions
    lines += ["## Preprocessing Decisions", ""]
    any_lineage = False
    for name in names:
        ds = session.dataset(name, state)
        if not ds.lineage:
            continue
        any_lineage = True
        lines.append(f"### {name}")
        for entry in ds.lineage:
            stage = entry.get("stage", "?")
            detail = ", ".join(
                f"{k}={_fmt(v)}" for k, v in sorted(entry.items()) if k != "stage"
            )
            lines.append(f"- {stage}: {detail}" if detail else f"- {stage}")
        lines.append("")
    if not any_lineage:
        lines += ["No preprocessing recorded.", ""]

    # Knowledge Constraints
    lines += ["## Knowledge Constraints", ""]
    knowledge = session.knowledge(state)
    if knowledge.empty:
        lines.append("No constraints set.")
    else:
        for a, b in sorted(knowledge.forbidden):
            lines.append(f"- forbidden: {a} -> {b}")
        for a, b in sorted(knowledge.required):
            lines.append(f"- required: {a} -> {b}")
    lines.append("")

    # Discovery
    lines += ["## Discovery", ""]
    truth = None
    if "truth_graph" in state:
        truth = deserialize(session.artifact(state["truth_graph"]).decode())
    discovered = [
        r for r in chain if r.command.get("kind") == "discover" and r.status == "ok"
    ]
    if discovered:
        for rec in discovered:
            cmd = rec.command
            params = ", ".join(
                f"{k}={_fmt(v)}"
                for k, v in sorted((cmd.get("params") or {}).items())
                if v is not None
            )
            lines.append(f"### Step {rec.id}: {cmd.get('algo')}")
            lines.append(f"Parameters: {params}")
            g = deserialize(session.artifact(rec.state["graph"]).decode())
            if truth is not None:
                level = "cpdag" if g.undirected_edges() else "dag"
                truth_dag = validate_dag(truth)
                reference = to_cpdag(truth_dag) if level == "cpdag" else truth_dag
                s, norm = shd(g, reference)
                lines.append(
                    f"SHD vs ground truth ({level} level): {s} (normalized {_fmt(norm)})"
                )
            lines += ["", "```dot", serialize(g, "dot").rstrip("\n"), "```", ""]
    elif "graph" in state:
        g = deserialize(session.artifact(state["graph"]).decode())
        lines += ["Current graph:", "", "```dot", serialize(g, "dot").rstrip("\n"), "```", ""]
    else:
        lines += ["No discovery run.", ""]

    # Effects
    lines += ["## Effects", ""]
    effect_recs = [
        r for r in chain if r.command.get("kind") == "estimate_effect" and r.status == "ok"
    ]
    if effect_recs:
        lines.append("| step | treatment | outcome | adjustment | ATE | stderr | 95% CI |")
        lines.append("|---|---|---|---|---|---|---|")
        for rec in effect_recs:
            est = json.loads(session.artifact(rec.output_ref))
            ci = f"[{_fmt(est['ci95'][0])}, {_fmt(est['ci95'][1])}]"
            adj = ", ".join(est["adjustment_set"]) or "(empty)"
            lines.append(
                f"| {rec.id} | {est['treatment']} | {est['outcome']} | {adj} | "
                f"{_fmt(est['ate'])} | {_fmt(est['stderr'])} | {ci} |"
            )
    else:
        lines.append("No effect estimates.")
    lines.append("")

    # Root Cause Analysis
    lines += ["## Root Cause Analysis", ""]
    rca_recs = [
        r for r in chain if r.command.get("kind") == "run_rca" and r.status == "ok"
    ]
    if rca_recs:
        for rec in rca_recs:
            stored = json.loads(session.artifact(rec.output_ref))
            lines.append(f"### Step {rec.id}: {stored['method']}")
            lines.append("| rank | node | score |")
            lines.append("|---|---|---|")
            for i, item in enumerate(stored["ranking"][:10], start=1):
                lines.append(f"| {i} | {item['node']} | {_fmt(item['score'])} |")
            lines.append("")
    else:
        lines += ["No root cause analysis run.", ""]
    metric_recs = [
        r
        for r in chain
        if r.command.get("kind") == "evaluate" and r.status == "ok"
    ]
    for rec in metric_recs:
        metrics = json.loads(session.artifact(rec.output_ref))
        lines.append(f"### Evaluation at step {rec.id} ({metrics.get('kind')})")
        for key, value in sorted(metrics.items()):
            if key == "kind":
                continue
            lines.append(f"- {key}: {_fmt(value)}")
        lines.append("")

    # Full Decision Journal
    lines += ["## Decision Journal", ""]
    lines.append("| id | parent | command | status | output |")
    lines.append("|---|---|---|---|---|")
    for rec in chain:
        out = rec.output_ref[:12] if rec.output_ref else ""
        lines.append(
            f"| {rec.id} | {rec.parent_id if rec.parent_id is not None else ''} | "
            f"{_summarize_command(rec.command)} | {rec.status} | {out} |"
        )
    for rec in chain:
        if rec.status == "failed" and rec.error:
            lines += ["", f"Step {rec.id} failed:", "", "```", rec.error, "```"]
    lines.append("")
    return "\n".join(lines)
