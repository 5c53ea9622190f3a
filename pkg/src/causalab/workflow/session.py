"""Append-only step journal with a movable head, artifact store, persistence.

The journal is a tree: each record points at its parent, the head names the
record whose state is current, and rollback just moves the head, so every
branch stays reproducible. Artifacts are content-addressed blobs; each record
carries the full slot -> artifact-hash map of the state it produced, which
makes state-at-head a pure lookup and replay a hash comparison.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import data as data_mod
from ..data import Dataset, describe, load_csv, preprocess, schema_json, to_csv_bytes
from ..discovery import direct_lingam, ges, notears_linear, pc
from ..effects import backdoor_set, estimate_ate_linear
from ..errors import (
    CausalabError,
    CommandRejected,
    NotFoundError,
)
from ..graphs import (
    CausalGraph,
    Knowledge,
    apply_knowledge,
    deserialize,
    serialize,
    shd,
    to_cpdag,
    validate_dag,
)
from ..rca import (
    RankedCauses,
    anomaly_scores,
    fit_linear_scm,
    rank_metrics,
    rca_cholesky,
    rca_counterfactual,
    rca_traversal,
)
from ..sim import make_benchmark
from . import report as report_mod
from .commands import (
    Describe,
    Discover,
    EstimateEffect,
    Evaluate,
    GenerateReport,
    LoadData,
    Preprocess,
    Rollback,
    RunRca,
    SetGraph,
    SetKnowledge,
    Simulate,
    WorkflowCommand,
    command_from_dict,
    command_to_dict,
)

MEDIA_CSV = "text/csv"
MEDIA_JSON = "application/json"
MEDIA_MARKDOWN = "text/markdown"
MEDIA_DOT = "text/vnd.graphviz"


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


@dataclass(frozen=True)
class StepRecord:
    id: int
    parent_id: int | None
    command: dict
    input_hashes: dict[str, str]
    output_ref: str | None
    status: str  # ok | failed
    error: str | None
    state: dict[str, str]  # slot -> artifact hash
    wall_time_ms: float
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "command": self.command,
            "input_hashes": self.input_hashes,
            "output_ref": self.output_ref,
            "status": self.status,
            "error": self.error,
            "state": self.state,
            "wall_time_ms": self.wall_time_ms,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        return cls(**d)


class Session:
    """In-memory session: journal, head pointer, content-addressed artifacts."""

    def __init__(self):
        self.journal: list[StepRecord] = []
        self.head: int | None = None
        self.artifacts: dict[str, bytes] = {}
        self.media: dict[str, str] = {}

    # -- state access ------------------------------------------------------

    def record(self, step_id: int) -> StepRecord:
        for r in self.journal:
            if r.id == step_id:
                return r
        raise NotFoundError(f"no step with id {step_id}")

    def state(self) -> dict[str, str]:
        if self.head is None:
            return {}
        return dict(self.record(self.head).state)

    def chain(self) -> list[StepRecord]:
        """Records from the root to the head."""
        out: list[StepRecord] = []
        cursor = self.head
        while cursor is not None:
            rec = self.record(cursor)
            out.append(rec)
            cursor = rec.parent_id
        return list(reversed(out))

    def artifact(self, ref: str) -> bytes:
        if ref not in self.artifacts:
            raise NotFoundError(f"no artifact {ref}")
        return self.artifacts[ref]

    def put(self, blob: bytes, media: str) -> str:
        ref = sha256(blob)
        self.artifacts[ref] = blob
        self.media[ref] = media
        return ref

    def dataset(self, name: str, state: dict[str, str] | None = None) -> Dataset:
        state = self.state() if state is None else state
        csv_ref = state.get(f"dataset:{name}:csv")
        schema_ref = state.get(f"dataset:{name}:schema")
        if csv_ref is None or schema_ref is None:
            raise CommandRejected(f"no dataset named {name!r} is loaded")
        return data_mod.from_artifacts(
            self.artifact(csv_ref), self.artifact(schema_ref).decode()
        )

    def graph(self, slot: str = "graph", state=None) -> CausalGraph:
        state = self.state() if state is None else state
        ref = state.get(slot)
        if ref is None:
            raise CommandRejected(f"no {slot.replace('_', ' ')} available")
        return deserialize(self.artifact(ref).decode())

    def knowledge(self, state=None) -> Knowledge:
        state = self.state() if state is None else state
        ref = state.get("knowledge")
        if ref is None:
            return Knowledge()
        return Knowledge.from_dict(json.loads(self.artifact(ref)))

    def dataset_names(self, state=None) -> list[str]:
        state = self.state() if state is None else state
        return sorted(
            k.split(":")[1] for k in state if k.startswith("dataset:") and k.endswith(":csv")
        )


def _store_dataset(session: Session, state: dict, name: str, ds: Dataset) -> str:
    csv_ref = session.put(to_csv_bytes(ds), MEDIA_CSV)
    schema_ref = session.put(schema_json(ds).encode(), MEDIA_JSON)
    state[f"dataset:{name}:csv"] = csv_ref
    state[f"dataset:{name}:schema"] = schema_ref
    return csv_ref


def _store_json(session: Session, state: dict, slot: str, obj) -> str:
    ref = session.put(dumps_canonical(obj).encode(), MEDIA_JSON)
    state[slot] = ref
    return ref


def _store_graph(session: Session, state: dict, slot: str, g: CausalGraph) -> str:
    ref = session.put(serialize(g, "json").encode(), MEDIA_JSON)
    state[slot] = ref
    return ref


def _eda_payload(summary) -> dict:
    def clean(v):
        return None if v is None or not np.isfinite(v) else float(v)

    corr = [[clean(x) for x in row] for row in summary.correlation]
    return {
        "columns": list(summary.columns),
        "stats": {
            name: {
                "mean": clean(s.mean),
                "std": clean(s.std),
                "median": clean(s.median),
                "mad": clean(s.mad),
                "min": clean(s.min),
                "max": clean(s.max),
                "q25": clean(s.q25),
                "q75": clean(s.q75),
                "missing_frac": s.missing_frac,
            }
            for name, s in summary.stats.items()
        },
        "correlation": corr,
        "histograms": {
            name: {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}
            for name, (edges, counts) in summary.histograms.items()
        },
    }


def _precheck(session: Session, cmd: WorkflowCommand, state: dict[str, str]) -> None:
    """Reject state-invalid commands before anything is journalled."""

    def need_dataset(name: str):
        if f"dataset:{name}:csv" not in state:
            raise CommandRejected(f"no dataset named {name!r} is loaded")

    def need(slot: str, what: str):
        if slot not in state:
            raise CommandRejected(f"{what} required but not present")

    if isinstance(cmd, (Preprocess, Describe)):
        need_dataset(cmd.dataset)
    elif isinstance(cmd, Discover):
        need_dataset(cmd.dataset)
    elif isinstance(cmd, EstimateEffect):
        need_dataset(cmd.dataset)
        need("graph", "a causal graph")
    elif isinstance(cmd, RunRca):
        need_dataset(cmd.normal)
        need_dataset(cmd.anomalies)
        if cmd.method in ("traversal", "counterfactual"):
            need("graph", "a causal graph")
        anomalies = session.dataset(cmd.anomalies, state)
        if cmd.sample_index >= anomalies.n:
            raise CommandRejected(
                f"sample_index {cmd.sample_index} out of range for "
                f"{anomalies.n} anomalous rows"
            )
    elif isinstance(cmd, Evaluate):
        if cmd.subject == "graph":
            need("graph", "a discovered or set graph")
            need("truth_graph", "a ground-truth graph")
        else:
            need("rca", "a ranked-causes result")
            need("labels", "root-cause labels")
    elif isinstance(cmd, GenerateReport):
        if not session.journal:
            raise CommandRejected("journal is empty; nothing to report")


def _dispatch(
    session: Session, cmd: WorkflowCommand, state: dict[str, str]
) -> tuple[str | None, dict[str, str]]:
    """Run the command against a copy of the state; returns (primary artifact
    ref, consumed input hashes)."""
    inputs: dict[str, str] = {}

    if isinstance(cmd, LoadData):
        ds = load_csv(cmd.csv_text.encode(), hints=cmd.hints)
        inputs["csv_text"] = sha256(cmd.csv_text.encode())
        return _store_dataset(session, state, cmd.name, ds), inputs

    if isinstance(cmd, Preprocess):
        inputs["dataset"] = state[f"dataset:{cmd.dataset}:csv"]
        ds = session.dataset(cmd.dataset, state)
        out = preprocess(ds, cmd.plan)
        return _store_dataset(session, state, cmd.dataset, out), inputs

    if isinstance(cmd, Describe):
        inputs["dataset"] = state[f"dataset:{cmd.dataset}:csv"]
        ds = session.dataset(cmd.dataset, state)
        payload = _eda_payload(describe(ds))
        return _store_json(session, state, f"eda:{cmd.dataset}", payload), inputs

    if isinstance(cmd, SetKnowledge):
        current = session.knowledge(state)
        if "knowledge" in state:
            inputs["knowledge"] = state["knowledge"]
        merged = current.merged(
            Knowledge(frozenset(cmd.forbid), frozenset(cmd.require))
        )
        return _store_json(session, state, "knowledge", merged.to_dict()), inputs

    if isinstance(cmd, Discover):
        inputs["dataset"] = state[f"dataset:{cmd.dataset}:csv"]
        if "knowledge" in state:
            inputs["knowledge"] = state["knowledge"]
        ds = session.dataset(cmd.dataset, state)
        knowledge = session.knowledge(state)
        if cmd.algo == "pc":
            g = pc(ds, cmd.params, knowledge)
        elif cmd.algo == "ges":
            g = ges(ds, cmd.params, knowledge)
        else:
            wd = (
                notears_linear(ds, cmd.params)
                if cmd.algo == "notears"
                else direct_lingam(ds, cmd.params)
            )
            g = wd.graph
            # keep the session-level constraint contract uniform across algos
            if not knowledge.empty:
                g = apply_knowledge(g, knowledge)
        return _store_graph(session, state, "graph", g), inputs

    if isinstance(cmd, SetGraph):
        g = deserialize(cmd.graph_json)
        return _store_graph(session, state, "graph", g), inputs

    if isinstance(cmd, EstimateEffect):
        inputs["dataset"] = state[f"dataset:{cmd.dataset}:csv"]
        inputs["graph"] = state["graph"]
        ds = session.dataset(cmd.dataset, state)
        dag = validate_dag(session.graph("graph", state))
        z = backdoor_set(dag, cmd.t, cmd.y)
        est = estimate_ate_linear(ds, cmd.t, cmd.y, z)
        return _store_json(session, state, "effect", est.to_dict()), inputs

    if isinstance(cmd, RunRca):
        inputs["normal"] = state[f"dataset:{cmd.normal}:csv"]
        inputs["anomalies"] = state[f"dataset:{cmd.anomalies}:csv"]
        normal = session.dataset(cmd.normal, state)
        anomalies = session.dataset(cmd.anomalies, state)
        sample = anomalies.values[cmd.sample_index]
        sample_row = {c: float(v) for c, v in zip(anomalies.column_names, sample)}
        if cmd.method == "cholesky":
            ranked = rca_cholesky(
                normal, sample_row, {"search": cmd.search, "seed": cmd.seed}
            )
        else:
            inputs["graph"] = state["graph"]
            dag = validate_dag(session.graph("graph", state))
            if cmd.method == "traversal":
                scores = anomaly_scores(normal, sample_row, cmd.anomaly_method)
                ranked = rca_traversal(dag, scores, cmd.target, cmd.tau)
            else:
                fit = fit_linear_scm(dag, normal)
                ranked = rca_counterfactual(
                    fit, sample_row, cmd.target, m=cmd.m, seed=cmd.seed
                )
        payload = ranked.to_dict()
        payload["params"]["sample_index"] = cmd.sample_index
        return _store_json(session, state, "rca", payload), inputs

    if isinstance(cmd, Simulate):
        case = make_benchmark(cmd.gspec, cmd.mspec, cmd.ispec, cmd.n_normal)
        _store_dataset(session, state, cmd.normal, case.normal_data)
        _store_dataset(session, state, cmd.anomalies, case.anomalous_data)
        _store_graph(session, state, "truth_graph", case.scm.weighted_graph())
        _store_json(
            session, state, "labels", {str(i): v for i, v in sorted(case.labels.items())}
        )
        return _store_json(session, state, "sim_meta", case.meta), inputs

    if isinstance(cmd, Evaluate):
        if cmd.subject == "graph":
            inputs["graph"] = state["graph"]
            inputs["truth_graph"] = state["truth_graph"]
            current = session.graph("graph", state)
            truth = session.graph("truth_graph", state)
            truth_dag = validate_dag(
                CausalGraph(truth.nodes, frozenset(truth.edges))
            )
            level = cmd.level
            if level == "auto":
                level = "cpdag" if current.undirected_edges() else "dag"
            reference = to_cpdag(truth_dag) if level == "cpdag" else truth_dag
            s, norm = shd(current, reference)
            payload = {"kind": "graph", "shd": s, "normalized": norm, "level": level}
        else:
            inputs["rca"] = state["rca"]
            inputs["labels"] = state["labels"]
            stored = json.loads(session.artifact(state["rca"]))
            ranked = RankedCauses(
                stored["method"],
                tuple((r["node"], r["score"]) for r in stored["ranking"]),
                stored["params"],
            )
            labels = json.loads(session.artifact(state["labels"]))
            sample_index = stored["params"].get("sample_index", 0)
            truth = labels.get(str(sample_index))
            if truth is None:
                raise CommandRejected(
                    f"no labels recorded for sample {sample_index}"
                )
            metrics = rank_metrics(ranked, set(truth), cmd.k)
            payload = {"kind": "rca", **metrics.to_dict(), "truth": sorted(truth)}
        return _store_json(session, state, "metrics", payload), inputs

    if isinstance(cmd, GenerateReport):
        text = report_mod.generate_report(session)
        ref = session.put(text.encode(), MEDIA_MARKDOWN)
        state["report"] = ref
        return ref, inputs

    raise CommandRejected(f"cannot execute command {type(cmd).__name__}")


def execute_step(session: Session, cmd: WorkflowCommand) -> StepRecord:
    """Validate, run, and journal one command.

    Precondition violations raise CommandRejected and leave the journal
    untouched. Runtime failures append a failed record (state inherited from
    the parent, artifacts untouched) and still move the head. Rollback
    commands delegate to :func:`rollback` and append nothing.
    """
    if isinstance(cmd, Rollback):
        target = cmd.step_id
        if target is None:
            if session.head is None:
                raise CommandRejected("nothing to roll back")
            parent = session.record(session.head).parent_id
            if parent is None:
                raise CommandRejected("already at the first step")
            target = parent
        rollback(session, target)
        return session.record(target)

    state = session.state()
    _precheck(session, cmd, state)
    new_state = dict(state)
    started = time.perf_counter()
    try:
        output_ref, inputs = _dispatch(session, cmd, new_state)
        status, error = "ok", None
    except CausalabError as e:
        new_state = state
        output_ref, inputs = None, {}
        status, error = "failed", f"{type(e).__name__}: {e}"
    wall_ms = (time.perf_counter() - started) * 1000.0
    record = StepRecord(
        id=(max((r.id for r in session.journal), default=0) + 1),
        parent_id=session.head,
        command=command_to_dict(cmd),
        input_hashes=inputs,
        output_ref=output_ref,
        status=status,
        error=error,
        state=new_state,
        wall_time_ms=wall_ms,
        timestamp=datetime.now(timezone.utc).isoformat(),
    )
    session.journal.append(record)
    session.head = record.id
    return record


def rollback(session: Session, step_id: int) -> Session:
    """Move the head to an existing record; the journal never shrinks."""
    session.record(step_id)  # raises NotFoundError
    session.head = step_id
    return session


def replay(session: Session) -> Session:
    """Re-execute the head's ancestor command chain on a fresh session."""
    fresh = Session()
    for rec in session.chain():
        execute_step(fresh, command_from_dict(rec.command))
    return fresh


class SessionStore:
    """One directory per session: meta.json, journal.jsonl, artifact blobs.

    Meta updates go through an atomic replace and all file access is
    serialized on a process-wide lock, so concurrent readers (job polling,
    journal GETs) never observe torn writes.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _dir(self, sid: str) -> Path:
        return self.root / "sessions" / sid

    def list_sessions(self) -> list[str]:
        base = self.root / "sessions"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def create(self, sid: str, owner: str, viewers: list[str]) -> None:
        with self._lock:
            d = self._dir(sid)
            (d / "artifacts").mkdir(parents=True, exist_ok=True)
            (d / "journal.jsonl").touch()
            self._write_meta(
                sid, {"head": None, "owner": owner, "viewers": viewers, "media": {}}
            )

    def exists(self, sid: str) -> bool:
        return (self._dir(sid) / "meta.json").exists()

    def meta(self, sid: str) -> dict:
        with self._lock:
            return json.loads((self._dir(sid) / "meta.json").read_text())

    def _write_meta(self, sid: str, meta: dict) -> None:
        # atomic replace: readers never observe a partially written file
        target = self._dir(sid) / "meta.json"
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(dumps_canonical(meta))
        os.replace(tmp, target)

    def append_record(self, sid: str, session: Session, record: StepRecord) -> None:
        with self._lock:
            d = self._dir(sid)
            for ref in set(record.state.values()) | (
                {record.output_ref} if record.output_ref else set()
            ):
                path = d / "artifacts" / ref
                if not path.exists():
                    path.write_bytes(session.artifact(ref))
            with (d / "journal.jsonl").open("a") as f:
                f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            meta = json.loads((d / "meta.json").read_text())
            meta["head"] = session.head
            for ref in record.state.values():
                meta["media"].setdefault(ref, session.media.get(ref, MEDIA_JSON))
            if record.output_ref:
                meta["media"].setdefault(
                    record.output_ref, session.media.get(record.output_ref, MEDIA_JSON)
                )
            self._write_meta(sid, meta)

    def set_head(self, sid: str, head: int | None) -> None:
        with self._lock:
            meta = json.loads((self._dir(sid) / "meta.json").read_text())
            meta["head"] = head
            self._write_meta(sid, meta)

    def load(self, sid: str) -> Session:
        if not self.exists(sid):
            raise NotFoundError(f"no session {sid}")
        with self._lock:
            d = self._dir(sid)
            session = Session()
            meta = json.loads((d / "meta.json").read_text())
            text = (d / "journal.jsonl").read_text()
            for line in text.splitlines():
                if line.strip():
                    session.journal.append(StepRecord.from_dict(json.loads(line)))
            session.head = meta["head"]
            for path in sorted((d / "artifacts").iterdir()):
                session.artifacts[path.name] = path.read_bytes()
                session.media[path.name] = meta["media"].get(path.name, MEDIA_JSON)
            return session

    def journal_bytes(self, sid: str) -> bytes:
        with self._lock:
            return (self._dir(sid) / "journal.jsonl").read_bytes()
