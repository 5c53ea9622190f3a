"""The closed workflow command vocabulary and the intent grammar.

Every command is a frozen dataclass carrying a complete, validated parameter
set; free-form text reaches them only through :func:`parse_intent`, a
deterministic keyword grammar (verb plus key=value pairs), or through an
external chat adapter whose output is schema-validated by
:func:`command_from_dict` before anything executes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..data import PreprocessPlan
from ..discovery import DiscoveryParams
from ..errors import CommandError, NeedsClarification
from ..sim import GraphSpec, InterventionSpec, MechanismSpec

DEFAULT_DATASET = "default"

DISCOVERY_ALGOS = ("pc", "ges", "notears", "direct_lingam")
RCA_METHODS = ("traversal", "counterfactual", "cholesky")


@dataclass(frozen=True)
class LoadData:
    name: str
    csv_text: str
    hints: dict[str, str] | None = None

    def __post_init__(self):
        if not self.name:
            raise CommandError("dataset name required", {"name": "empty"})
        if not self.csv_text:
            raise CommandError("CSV content required", {"csv_text": "empty"})


@dataclass(frozen=True)
class Preprocess:
    plan: PreprocessPlan = field(default_factory=PreprocessPlan)
    dataset: str = DEFAULT_DATASET


@dataclass(frozen=True)
class Describe:
    dataset: str = DEFAULT_DATASET


@dataclass(frozen=True)
class SetKnowledge:
    forbid: tuple[tuple[str, str], ...] = ()
    require: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "forbid", tuple(map(tuple, self.forbid)))
        object.__setattr__(self, "require", tuple(map(tuple, self.require)))
        for pair in (*self.forbid, *self.require):
            if len(pair) != 2 or not all(isinstance(x, str) and x for x in pair):
                raise CommandError(
                    "constraints are (from, to) label pairs", {"pair": repr(pair)}
                )


@dataclass(frozen=True)
class Discover:
    algo: str
    params: DiscoveryParams = field(default_factory=DiscoveryParams)
    dataset: str = DEFAULT_DATASET

    def __post_init__(self):
        if self.algo not in DISCOVERY_ALGOS:
            raise CommandError(
                f"unknown algorithm {self.algo!r}",
                {"algo": f"expected one of {DISCOVERY_ALGOS}"},
            )


@dataclass(frozen=True)
class SetGraph:
    graph_json: str

    def __post_init__(self):
        from ..graphs import deserialize

        try:
            deserialize(self.graph_json)
        except Exception as e:
            raise CommandError("invalid graph JSON", {"graph_json": str(e)}) from None


@dataclass(frozen=True)
class EstimateEffect:
    t: str
    y: str
    dataset: str = DEFAULT_DATASET

    def __post_init__(self):
        if not self.t or not self.y:
            raise CommandError(
                "treatment and outcome required", {"t": self.t, "y": self.y}
            )


@dataclass(frozen=True)
class RunRca:
    method: str
    target: str | None = None
    normal: str = "normal"
    anomalies: str = "anomalies"
    sample_index: int = 0
    tau: float = 3.0
    anomaly_method: str = "robust-z"
    m: int = 1000
    search: str = "exhaustive"
    seed: int = 0

    def __post_init__(self):
        if self.method not in RCA_METHODS:
            raise CommandError(
                f"unknown RCA method {self.method!r}",
                {"method": f"expected one of {RCA_METHODS}"},
            )
        if self.method in ("traversal", "counterfactual") and not self.target:
            raise CommandError(
                f"{self.method} needs a target node", {"target": "missing"}
            )
        if self.sample_index < 0:
            raise CommandError("sample_index must be nonnegative", {"sample_index": ""})


@dataclass(frozen=True)
class Simulate:
    gspec: GraphSpec
    mspec: MechanismSpec = field(default_factory=MechanismSpec)
    ispec: InterventionSpec = field(
        default_factory=lambda: InterventionSpec("soft", "single")
    )
    n_normal: int = 5000
    normal: str = "normal"
    anomalies: str = "anomalies"

    def __post_init__(self):
        if self.n_normal < 1:
            raise CommandError("n_normal must be positive", {"n_normal": ""})


@dataclass(frozen=True)
class Evaluate:
    subject: str  # graph | rca
    k: int = 3
    level: str = "auto"  # auto | cpdag | dag

    def __post_init__(self):
        if self.subject not in ("graph", "rca"):
            raise CommandError(
                "evaluate subject is graph or rca", {"subject": self.subject}
            )
        if self.level not in ("auto", "cpdag", "dag"):
            raise CommandError("level is auto, cpdag, or dag", {"level": self.level})
        if self.k < 1:
            raise CommandError("k must be at least 1", {"k": str(self.k)})


@dataclass(frozen=True)
class Rollback:
    step_id: int | None = None  # None = one step back from head


@dataclass(frozen=True)
class GenerateReport:
    pass


WorkflowCommand = (
    LoadData
    | Preprocess
    | Describe
    | SetKnowledge
    | Discover
    | SetGraph
    | EstimateEffect
    | RunRca
    | Simulate
    | Evaluate
    | Rollback
    | GenerateReport
)

_KINDS: dict[str, type] = {
    "load_data": LoadData,
    "preprocess": Preprocess,
    "describe": Describe,
    "set_knowledge": SetKnowledge,
    "discover": Discover,
    "set_graph": SetGraph,
    "estimate_effect": EstimateEffect,
    "run_rca": RunRca,
    "simulate": Simulate,
    "evaluate": Evaluate,
    "rollback": Rollback,
    "generate_report": GenerateReport,
}
_NAMES = {cls: kind for kind, cls in _KINDS.items()}


def command_to_dict(cmd: WorkflowCommand) -> dict:
    out: dict = {"kind": _NAMES[type(cmd)]}
    for f in fields(cmd):
        v = getattr(cmd, f.name)
        if isinstance(v, (PreprocessPlan, GraphSpec, MechanismSpec, InterventionSpec)):
            v = v.to_dict()
        elif isinstance(v, DiscoveryParams):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = [list(x) if isinstance(x, tuple) else x for x in v]
        out[f.name] = v
    return out


def command_from_dict(payload: dict) -> WorkflowCommand:
    """Validate a JSON-shaped dict into a command; CommandError lists field
    problems."""
    if not isinstance(payload, dict):
        raise CommandError("command payload must be an object", {"": "not an object"})
    kind = payload.get("kind")
    cls = _KINDS.get(kind)
    if cls is None:
        raise CommandError(
            f"unknown command kind {kind!r}",
            {"kind": f"expected one of {sorted(_KINDS)}"},
        )
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    extra = set(payload) - set(names) - {"kind"}
    if extra:
        raise CommandError(
            f"unexpected fields: {sorted(extra)}",
            {k: "unexpected" for k in sorted(extra)},
        )
    try:
        for name, f in names.items():
            if name not in payload:
                continue
            v = payload[name]
            if name == "plan":
                v = PreprocessPlan(**v)
            elif name == "params":
                v = DiscoveryParams(**v)
            elif name == "gspec":
                v = GraphSpec(
                    model=v["model"],
                    d=v["d"],
                    expected_degree=v.get("expected_degree", 2.0),
                    attachment_m=v.get("attachment_m", 1),
                    seed=v.get("seed", 0),
                )
            elif name == "mspec":
                v = MechanismSpec(
                    form=v.get("form", "linear"),
                    weight_range=tuple(v.get("weight_range", (0.5, 2.0))),
                    noise=v.get("noise", "gaussian"),
                    noise_scale=v.get("noise_scale", 1.0),
                )
            elif name == "ispec":
                v = InterventionSpec(**v)
            elif name in ("forbid", "require"):
                v = tuple(tuple(p) for p in v)
            kwargs[name] = v
        return cls(**kwargs)
    except CommandError:
        raise
    except Exception as e:
        raise CommandError(f"invalid command: {e}", {"": str(e)}) from None


VERBS = (
    "load",
    "clean",
    "describe",
    "discover",
    "forbid",
    "require",
    "rca",
    "effect",
    "simulate",
    "undo",
    "report",
)

_FILLERS = {"graph", "using", "with", "a", "an", "the", "algorithm", "algo", "edge", "of", "on", "to", "step"}


def _coerce(text: str):
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _split_kv(tokens: list[str]) -> tuple[list[str], dict]:
    plain, kv = [], {}
    for tok in tokens:
        if "=" in tok:
            key, _, val = tok.partition("=")
            kv[key.strip()] = _coerce(val.strip())
        else:
            plain.append(tok)
    return plain, kv


def _edge_pair(tokens: list[str]) -> tuple[str, str]:
    # only the literal "edge" keyword is filler here; anything else may be a label
    joined = " ".join(t for t in tokens if t.lower() != "edge")
    if "->" in joined:
        left, _, right = joined.partition("->")
        a, b = left.strip(), right.strip()
        if a and b:
            return a, b
    raise NeedsClarification(
        "expected an edge like: forbid edge A -> B", suggestions=["forbid edge A -> B"]
    )


def parse_intent(text: str) -> WorkflowCommand:
    """Deterministic keyword grammar over the recognized verbs.

    Unknown or ambiguous input raises NeedsClarification listing the verbs.
    """
    tokens = text.strip().split()
    if not tokens:
        raise NeedsClarification("empty input", suggestions=list(VERBS))
    verb = tokens[0].lower()
    rest = tokens[1:]
    plain, kv = _split_kv(rest)
    plain_clean = [t for t in plain if t.lower() not in _FILLERS]

    if verb == "load":
        raise NeedsClarification(
            "datasets arrive via upload, not chat; upload a CSV and it becomes "
            "a named dataset",
            suggestions=["upload a CSV file", "describe"],
        )
    if verb == "clean":
        plan_kw = {
            k: kv[k]
            for k in ("impute", "drop_column_missing_frac", "drop_row_missing_frac", "encode", "scaler")
            if k in kv
        }
        try:
            plan = PreprocessPlan(**plan_kw)
        except Exception as e:
            raise NeedsClarification(f"bad preprocessing plan: {e}") from None
        return Preprocess(plan=plan, dataset=str(kv.get("dataset", DEFAULT_DATASET)))
    if verb == "describe":
        return Describe(dataset=str(kv.get("dataset", DEFAULT_DATASET)))
    if verb == "discover":
        algo = kv.pop("algo", None) or (plain_clean[0] if plain_clean else None)
        if algo is None or algo not in DISCOVERY_ALGOS:
            raise NeedsClarification(
                f"which algorithm? one of {', '.join(DISCOVERY_ALGOS)}",
                suggestions=[f"discover graph using {a}" for a in DISCOVERY_ALGOS],
            )
        dataset = str(kv.pop("dataset", DEFAULT_DATASET))
        try:
            params = DiscoveryParams(**kv)
        except Exception as e:
            raise NeedsClarification(f"bad discovery parameters: {e}") from None
        return Discover(algo=algo, params=params, dataset=dataset)
    if verb in ("forbid", "require"):
        pair = _edge_pair(rest)
        if verb == "forbid":
            return SetKnowledge(forbid=(pair,))
        return SetKnowledge(require=(pair,))
    if verb == "rca":
        method = kv.pop("method", None) or (plain_clean[0] if plain_clean else None)
        if method is None or method not in RCA_METHODS:
            raise NeedsClarification(
                f"which RCA method? one of {', '.join(RCA_METHODS)}",
                suggestions=[f"rca using {m} target=<node>" for m in RCA_METHODS],
            )
        try:
            return RunRca(method=method, **{k: v for k, v in kv.items()})
        except (CommandError, TypeError) as e:
            raise NeedsClarification(f"bad RCA request: {e}") from None
    if verb == "effect":
        t = kv.get("t")
        y = kv.get("y")
        if t is None and y is None and len(plain_clean) == 2:
            t, y = plain_clean  # "effect of T on Y"
        if not t or not y:
            raise NeedsClarification(
                "state treatment and outcome: effect t=<node> y=<node>",
                suggestions=["effect of discount on profit"],
            )
        return EstimateEffect(t=str(t), y=str(y), dataset=str(kv.get("dataset", DEFAULT_DATASET)))
    if verb == "simulate":
        model = str(kv.pop("model", "erdos-renyi"))
        model = {"er": "erdos-renyi", "sf": "scale-free"}.get(model, model)
        try:
            gspec = GraphSpec(
                model=model,
                d=int(kv.pop("d", 6)),
                expected_degree=float(kv.pop("expected_degree", 2.0)),
                attachment_m=int(kv.pop("attachment_m", 1)),
                seed=int(kv.pop("seed", 0)),
            )
            mspec = MechanismSpec(
                form=str(kv.pop("form", "linear")),
                noise=str(kv.pop("noise", "gaussian")),
                noise_scale=float(kv.pop("noise_scale", 1.0)),
            )
            ispec = InterventionSpec(
                mode=str(kv.pop("mode", "soft")),
                targets=str(kv.pop("targets", "single")),
                k=int(kv.pop("k", 1)),
                magnitude=float(kv.pop("magnitude", 10.0)),
                n_anomalies=int(kv.pop("anomalies", 10)),
                seed=int(kv.pop("intervention_seed", 0)),
            )
            return Simulate(gspec=gspec, mspec=mspec, ispec=ispec, n_normal=int(kv.pop("n", 5000)))
        except Exception as e:
            raise NeedsClarification(f"bad simulation spec: {e}") from None
    if verb == "undo":
        sid = kv.get("step", kv.get("to"))
        if sid is None and plain_clean:
            sid = _coerce(plain_clean[0])
        if sid is not None and not isinstance(sid, int):
            raise NeedsClarification("undo takes a step id: undo step=<id>")
        return Rollback(step_id=sid)
    if verb == "report":
        return GenerateReport()
    raise NeedsClarification(
        f"unrecognized request {verb!r}; recognized verbs: {', '.join(VERBS)}",
        suggestions=list(VERBS),
    )
