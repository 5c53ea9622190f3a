"""Acceptance suite: every criterion runs at its stated tolerance and prints
one PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s``)."""

import json
import math
import time

import numpy as np
from fastapi.testclient import TestClient

from causalab import sim
from causalab.cli import main as cli_main
from causalab.discovery import DiscoveryParams, pc
from causalab.discovery.lingam import causal_order
from causalab.discovery.notears import notears_fit, smooth_objective
from causalab.effects import backdoor_set, estimate_ate_linear
from causalab.graphs import Dag, shd, to_cpdag
from causalab.rca import (
    LinearScmFit,
    RankedCauses,
    cholesky_whiten,
    fit_linear_scm,
    rank_metrics,
    rca_cholesky,
    rca_counterfactual,
)
from causalab.server import create_app
from causalab.workflow import (
    Discover,
    Evaluate,
    GenerateReport,
    RunRca,
    Session,
    Simulate,
    execute_step,
    generate_report,
    replay,
    rollback,
)
from util import chain_scm, scm_from_weights

_SUITE_STARTED = time.perf_counter()


def check(name: str, ok: bool, detail: str = ""):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


class TestDiscoveryCorrectness:
    def test_pc_median_shd_on_er_benchmarks(self):
        shds = []
        for seed in range(50):
            gspec = sim.GraphSpec("erdos-renyi", d=8, expected_degree=2.0, seed=seed)
            dag = sim.sample_graph(gspec)
            scm = sim.attach_mechanisms(dag, sim.MechanismSpec(), seed=seed + 1)
            ds = sim.sample(scm, 50_000, seed=seed + 2)
            g = pc(ds, DiscoveryParams(alpha=0.05))
            shds.append(shd(g, to_cpdag(dag))[0])
        median = float(np.median(shds))
        check("discovery/pc-median-shd<=2", median <= 2, f"median SHD {median}")

    def test_three_node_motifs_recovered(self):
        collider = scm_from_weights(
            ["A", "B", "C"], [("A", "C", 1.0), ("B", "C", 1.0)]
        )
        chain = chain_scm([1.0, 1.0], labels=["A", "B", "C"])
        hits = {"collider": 0, "chain": 0}
        for seed in range(50):
            for name, scm in (("collider", collider), ("chain", chain)):
                ds = sim.sample(scm, 20_000, seed=seed)
                if shd(pc(ds), to_cpdag(scm.dag))[0] == 0:
                    hits[name] += 1
        check(
            "discovery/3-node-motifs>=90%",
            hits["collider"] >= 45 and hits["chain"] >= 45,
            f"collider {hits['collider']}/50, chain {hits['chain']}/50",
        )


class TestNotears:
    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(42)
        X = rng.normal(size=(300, 5))
        worst = 0.0
        for _ in range(20):
            W = rng.normal(scale=0.4, size=(5, 5))
            np.fill_diagonal(W, 0.0)
            rho, alpha = 3.0, 0.7
            _, grad = smooth_objective(W, X, rho, alpha)
            eps = 1e-5
            for i in range(5):
                for j in range(5):
                    if i == j:
                        continue
                    Wp, Wm = W.copy(), W.copy()
                    Wp[i, j] += eps
                    Wm[i, j] -= eps
                    fp, _ = smooth_objective(Wp, X, rho, alpha)
                    fm, _ = smooth_objective(Wm, X, rho, alpha)
                    num = (fp - fm) / (2 * eps)
                    rel = abs(num - grad[i, j]) / max(abs(grad[i, j]), 1e-8)
                    worst = max(worst, rel)
        check("notears/gradient-rel-err<=1e-5", worst <= 1e-5, f"worst {worst:.2e}")

    def test_final_h_and_weight_recovery(self):
        hs = []
        for seed in range(5):
            gspec = sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=seed)
            scm = sim.attach_mechanisms(
                sim.sample_graph(gspec), sim.MechanismSpec(), seed=seed
            )
            ds = sim.sample(scm, 3_000, seed=seed)
            _, h = notears_fit(ds, DiscoveryParams())
            hs.append(h)
        check(
            "notears/final-h<=1e-8",
            all(h <= 1e-8 for h in hs),
            f"max h {max(hs):.2e}",
        )
        scm = chain_scm([2.0], labels=["x1", "x2"])
        ds = sim.sample(scm, 10_000, seed=11)
        from causalab.discovery import notears_linear

        wd = notears_linear(ds)
        w = wd.weights[0, 1]
        check(
            "notears/2-var-weight-within-10%",
            1.8 <= w <= 2.2 and wd.weights[1, 0] == 0.0,
            f"recovered {w:.3f}",
        )


class TestDirectLingam:
    def test_four_node_chain_order(self):
        scm = chain_scm([1.0, 1.0, 1.0], noise="uniform")
        hits = sum(
            causal_order(sim.sample(scm, 20_000, seed=s).values) == [0, 1, 2, 3]
            for s in range(50)
        )
        check("lingam/4-chain-order>=80%", hits >= 40, f"{hits}/50")


class TestCholeskyRca:
    def test_whitening_identity_closed_form(self):
        worst = 0.0
        for seed in range(10):
            gspec = sim.GraphSpec("erdos-renyi", d=6, expected_degree=2.5, seed=seed)
            dag = sim.sample_graph(gspec)
            scm = sim.attach_mechanisms(dag, sim.MechanismSpec(), seed=seed + 1)
            _, cov = sim.analytic_moments(scm)
            nodes = list(scm.nodes)
            idx = {v: j for j, v in enumerate(nodes)}
            rng = np.random.default_rng(seed)
            eps = rng.normal(size=len(nodes))
            x = np.zeros(len(nodes))
            for v in dag.topological_order:
                j = idx[v]
                mech = scm.mechanisms[v]
                x[j] = sum(
                    w * x[idx[p]] for p, w in zip(mech.parents, mech.weights)
                ) + eps[j] * scm.noise_sigma(v)
            order = [idx[v] for v in dag.topological_order]
            z = cholesky_whiten(np.zeros(len(nodes)), cov, x, order)
            sigmas = np.array([scm.noise_sigma(nodes[j]) for j in order])
            expected = np.array([eps[j] for j in order]) * sigmas / sigmas
            worst = max(worst, float(np.abs(z - expected).max()))
        check("cholesky/whitening-identity<=1e-10", worst <= 1e-10, f"worst {worst:.2e}")

    def test_benchmark_top1(self):
        hits = 0
        for seed in range(100):
            gspec = sim.GraphSpec("erdos-renyi", d=6, expected_degree=2.0, seed=seed)
            case = sim.make_benchmark(
                gspec,
                sim.MechanismSpec(),
                sim.InterventionSpec(
                    "soft", "single", magnitude=10.0, n_anomalies=1, seed=seed + 17
                ),
                n_normal=20_000,
            )
            ranked = rca_cholesky(
                case.normal_data,
                case.anomalous_data.values[0],
                {"search": "exhaustive"},
            )
            hits += ranked.ranking[0][0] in case.labels[0]
        check("cholesky/top1>=95%", hits >= 95, f"{hits}/100")


class TestCounterfactualRca:
    def test_shapley_efficiency_exact(self):
        dag = Dag.build(["A", "B"], [("A", "B", "directed")])
        fit = LinearScmFit(
            dag, {"A": {}, "B": {"A": 1.0}}, {"A": 0.0, "B": 0.0}, {"A": 1.0, "B": 1.0}
        )
        out = rca_counterfactual(fit, {"A": 5.0, "B": 5.0}, "B", seed=0)
        phi = dict(out.ranking)
        g_all = 5.0 / math.sqrt(2)
        g_none = math.sqrt(2.0) * math.sqrt(2 / math.pi) / math.sqrt(2)
        gap = abs(sum(phi.values()) - (g_all - g_none))
        check("counterfactual/efficiency<=1e-9", gap <= 1e-9, f"gap {gap:.2e}")

    def test_benchmark_top1(self):
        hits = 0
        for seed in range(100):
            gspec = sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=seed)
            case = sim.make_benchmark(
                gspec,
                sim.MechanismSpec(),
                sim.InterventionSpec(
                    "soft", "single", magnitude=8.0, n_anomalies=1, seed=seed + 31
                ),
                n_normal=20_000,
            )
            injected = case.labels[0][0]
            dag = case.scm.dag
            affected = dag.descendants(injected) | {injected}
            target = [v for v in dag.topological_order if v in affected][-1]
            fit = fit_linear_scm(dag, case.normal_data)
            ranked = rca_counterfactual(
                fit, case.anomalous_data.values[0], target, seed=seed
            )
            hits += ranked.ranking[0][0] == injected
        check("counterfactual/top1>=90%", hits >= 90, f"{hits}/100")


class TestRankingMetrics:
    def test_worked_examples_exact(self):
        def ranked(nodes):
            return RankedCauses(
                "t", tuple((n, float(9 - i)) for i, n in enumerate(nodes)), {}
            )

        mrr = rank_metrics(ranked(["A", "C", "B"]), {"C"}, 3).mrr
        ndcg = rank_metrics(ranked(["A", "C", "B"]), {"C"}, 3).ndcg
        map_k = rank_metrics(ranked(["B", "A", "C"]), {"B", "C"}, 3).map
        ok = (
            mrr == 0.5
            and abs(ndcg - 0.6309) <= 1e-4
            and abs(ndcg - 1 / math.log2(3)) <= 1e-12
            and abs(map_k - 0.8333) <= 1e-4
            and abs(map_k - (1 + 2 / 3) / 2) <= 1e-12
        )
        check(
            "metrics/worked-examples",
            ok,
            f"mrr {mrr}, ndcg {ndcg:.6f}, map {map_k:.6f}",
        )


class TestEffects:
    def test_ci_covers_do_oracle(self):
        hits = 0
        for seed in range(100):
            gspec = sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=seed)
            dag = sim.sample_graph(gspec)
            scm = sim.attach_mechanisms(dag, sim.MechanismSpec(), seed=seed + 1)
            ds = sim.sample(scm, 4_000, seed=seed + 2)
            rng = np.random.default_rng(seed)
            cands = [(t, y) for t in dag.nodes for y in sorted(dag.descendants(t))]
            if not cands:
                hits += 1
                continue
            t_node, y_node = cands[rng.integers(len(cands))]
            est = estimate_ate_linear(
                ds, t_node, y_node, backdoor_set(dag, t_node, y_node)
            )
            d0 = sim.sample_with_do(scm, {t_node: 0.0}, 100_000, seed=seed + 3)
            d1 = sim.sample_with_do(scm, {t_node: 1.0}, 100_000, seed=seed + 4)
            mc = d1.column(y_node).mean() - d0.column(y_node).mean()
            hits += est.ci95[0] <= mc <= est.ci95[1]
        check("effects/ci-covers-do-oracle>=90%", hits >= 90, f"{hits}/100")


def _seeded_session() -> Session:
    s = Session()
    execute_step(
        s,
        Simulate(
            gspec=sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=3),
            ispec=sim.InterventionSpec(
                "soft", "single", magnitude=10.0, n_anomalies=3, seed=13
            ),
            n_normal=3_000,
        ),
    )
    execute_step(s, Discover(algo="pc", dataset="normal"))
    execute_step(s, RunRca(method="cholesky"))
    execute_step(s, Evaluate(subject="rca"))
    execute_step(s, GenerateReport())
    return s


class TestOrchestration:
    def test_replay_rollback_and_reports(self):
        s = _seeded_session()
        fresh = replay(s)
        replay_ok = fresh.state() == s.state()
        before = len(s.journal)
        rollback(s, 2)
        execute_step(s, Discover(algo="ges", dataset="normal"))
        branch_ok = (
            len(s.journal) == before + 1
            and len([r for r in s.journal if r.parent_id == 2]) == 2
        )
        reports_ok = generate_report(_seeded_session()) == generate_report(
            _seeded_session()
        )
        check("orchestration/replay-hashes", replay_ok)
        check("orchestration/rollback-branching", branch_ok)
        check("orchestration/byte-identical-reports", reports_ok)


TOKENS = {
    "alice-token": {"user": "alice", "role": "owner"},
    "bob-token": {"user": "bob", "role": "owner"},
    "carol-token": {"user": "carol", "role": "viewer"},
}

SIMULATE_CMD = {
    "kind": "simulate",
    "gspec": {"model": "erdos-renyi", "d": 5, "expected_degree": 2.0, "seed": 3},
    "ispec": {
        "mode": "soft",
        "targets": "single",
        "magnitude": 10.0,
        "n_anomalies": 2,
        "seed": 3,
    },
    "n_normal": 8_000,
}


def _auth(token):
    return {"Authorization": f"Bearer {token}"}


def _wait(client, sid, jid, token="alice-token"):
    for _ in range(3000):
        job = client.get(f"/sessions/{sid}/jobs/{jid}", headers=_auth(token)).json()
        if job["state"] in ("succeeded", "failed"):
            return job
        time.sleep(0.02)
    raise AssertionError("job stuck")


class TestService:
    def test_cli_vs_http_hash_equality(self, tmp_path, capsys):
        # CLI leg
        bundle = tmp_path / "case"
        assert (
            cli_main(
                [
                    "simulate", "--d", "5", "--n", "8000", "--seed", "3",
                    "--anomalies", "2", "--magnitude", "10",
                    "--out", str(bundle),
                ]
            )
            == 0
        )
        graph_path = tmp_path / "graph.json"
        assert (
            cli_main(
                [
                    "discover", "--algo", "pc",
                    "--data", str(bundle / "normal.csv"),
                    "--out", str(graph_path),
                ]
            )
            == 0
        )
        ranked_path = tmp_path / "ranked.json"
        assert (
            cli_main(
                [
                    "rca", "--method", "cholesky", "--bundle", str(bundle),
                    "--sample-index", "0", "--out", str(ranked_path),
                ]
            )
            == 0
        )
        capsys.readouterr()

        # HTTP leg
        app = create_app(tmp_path / "data", tokens=TOKENS)
        with TestClient(app) as client:
            sid = client.post("/sessions", headers=_auth("alice-token")).json()["id"]
            for payload in (
                SIMULATE_CMD,
                {"kind": "discover", "algo": "pc", "dataset": "normal"},
                {"kind": "run_rca", "method": "cholesky", "sample_index": 0},
            ):
                r = client.post(
                    f"/sessions/{sid}/steps", headers=_auth("alice-token"), json=payload
                )
                assert r.status_code == 202
                job = _wait(client, sid, r.json()["job_id"])
                assert job["state"] == "succeeded", job
            info = client.get(f"/sessions/{sid}", headers=_auth("alice-token")).json()
            graph_http = client.get(
                f"/sessions/{sid}/graph", headers=_auth("alice-token")
            ).content
            journal = [
                json.loads(line)
                for line in client.get(
                    f"/sessions/{sid}/journal", headers=_auth("alice-token")
                ).text.splitlines()
            ]
            state = journal[-1]["state"]
            normal_http = client.get(
                f"/sessions/{sid}/artifacts/{state['dataset:normal:csv']}",
                headers=_auth("alice-token"),
            ).content
            ranked_http = client.get(
                f"/sessions/{sid}/artifacts/{state['rca']}", headers=_auth("alice-token")
            ).content
        ok = (
            normal_http == (bundle / "normal.csv").read_bytes()
            and graph_http == graph_path.read_bytes()
            and ranked_http == ranked_path.read_bytes()
        )
        check("service/cli-vs-http-hash-equality", ok)

    def test_isolation_suite(self, tmp_path):
        app = create_app(tmp_path / "data", tokens=TOKENS)
        with TestClient(app) as client:
            sid = client.post("/sessions", headers=_auth("alice-token")).json()["id"]
            probes = [
                client.post("/sessions").status_code == 401,
                client.post("/sessions", headers=_auth("nope")).status_code == 401,
                client.post("/sessions", headers=_auth("carol-token")).status_code == 403,
                client.get(f"/sessions/{sid}", headers=_auth("bob-token")).status_code == 404,
                client.get(f"/sessions/{sid}/journal", headers=_auth("bob-token")).status_code
                == 404,
                client.post(
                    f"/sessions/{sid}/steps", headers=_auth("bob-token"), json=SIMULATE_CMD
                ).status_code
                == 404,
                client.get(
                    f"/sessions/{sid}/artifacts/deadbeef", headers=_auth("bob-token")
                ).status_code
                == 404,
            ]
        check("service/isolation", all(probes), f"{sum(probes)}/{len(probes)} probes")

    def test_restart_persistence(self, tmp_path):
        app = create_app(tmp_path / "data", tokens=TOKENS)
        with TestClient(app) as client:
            sid = client.post("/sessions", headers=_auth("alice-token")).json()["id"]
            r = client.post(
                f"/sessions/{sid}/steps", headers=_auth("alice-token"), json=SIMULATE_CMD
            )
            _wait(client, sid, r.json()["job_id"])
            r = client.post(
                f"/sessions/{sid}/steps",
                headers=_auth("alice-token"),
                json={"kind": "discover", "algo": "pc", "dataset": "normal"},
            )
            _wait(client, sid, r.json()["job_id"])
            first = {
                "journal": client.get(
                    f"/sessions/{sid}/journal", headers=_auth("alice-token")
                ).content,
                "graph": client.get(
                    f"/sessions/{sid}/graph", headers=_auth("alice-token")
                ).content,
                "report": client.get(
                    f"/sessions/{sid}/report", headers=_auth("alice-token")
                ).content,
            }
        app2 = create_app(tmp_path / "data", tokens=TOKENS)
        with TestClient(app2) as client:
            second = {
                "journal": client.get(
                    f"/sessions/{sid}/journal", headers=_auth("alice-token")
                ).content,
                "graph": client.get(
                    f"/sessions/{sid}/graph", headers=_auth("alice-token")
                ).content,
                "report": client.get(
                    f"/sessions/{sid}/report", headers=_auth("alice-token")
                ).content,
            }
        check("service/restart-persistence", first == second)


class TestSuiteRuntime:
    def test_total_runtime_under_five_minutes(self):
        elapsed = time.perf_counter() - _SUITE_STARTED
        check("runtime/suite<5min", elapsed < 300, f"{elapsed:.1f}s so far")
