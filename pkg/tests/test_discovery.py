import numpy as np
import pytest

from causalab import sim
from causalab.data import load_csv
from causalab.discovery import (
    DiscoveryParams,
    WeightedDag,
    direct_lingam,
    fisher_z_from_corr,
    fisher_z_test,
    ges,
    notears_linear,
    pc,
)
from causalab.discovery.ges import ges_with_trace
from causalab.discovery.lingam import causal_order
from causalab.discovery.notears import acyclicity, smooth_objective
from causalab.errors import (
    CycleError,
    NumericError,
    SampleSizeError,
    SchemaError,
)
from causalab.graphs import Dag, Knowledge, shd, to_cpdag, validate_dag
from util import chain_scm, scm_from_weights


def dataset_from_matrix(X, names=None):
    names = names or [f"c{i}" for i in range(X.shape[1])]
    header = ",".join(names)
    body = "\n".join(",".join(repr(float(v)) for v in row) for row in X)
    return load_csv(f"{header}\n{body}".encode())


def collider_scm():
    return scm_from_weights(["A", "B", "C"], [("A", "C", 1.0), ("B", "C", 1.0)])


class TestFisherZ:
    def test_zero_correlation(self):
        res = fisher_z_from_corr(np.eye(3), n=100, i=0, j=1, S=[2])
        assert res.statistic == 0.0
        assert res.p_value == 1.0
        assert res.independent

    def test_exact_zero_sample_correlation(self):
        X = np.array([[1, 1], [-1, 1], [1, -1], [-1, -1]] * 3, dtype=float)
        res = fisher_z_test(dataset_from_matrix(X), 0, 1, set())
        assert res.p_value == pytest.approx(1.0)

    def test_chain_conditional_independence_rates(self):
        scm = chain_scm([1.0, 1.0], labels=["A", "B", "C"])
        indep = dep = 0
        for seed in range(100):
            ds = sim.sample(scm, 50_000, seed=seed)
            indep += fisher_z_test(ds, 0, 2, {1}).independent
            dep += not fisher_z_test(ds, 0, 2, set()).independent
        assert indep >= 95
        assert dep >= 99

    def test_small_sample_rejected(self):
        X = np.random.default_rng(0).normal(size=(4, 3))
        with pytest.raises(SampleSizeError):
            fisher_z_test(dataset_from_matrix(X), 0, 1, {2})  # needs n > |S| + 3

    def test_singular_submatrix(self):
        corr = np.ones((3, 3))
        with pytest.raises(NumericError):
            fisher_z_from_corr(corr, 100, 0, 1, [2])

    def test_independent_iff_p_above_alpha(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(200, 2))
        ds = dataset_from_matrix(X)
        res = fisher_z_test(ds, 0, 1, set(), alpha=0.05)
        assert res.independent == (res.p_value > 0.05)


class TestPc:
    def test_collider_recovery_rate(self):
        scm = collider_scm()
        truth = to_cpdag(scm.dag)
        hits = sum(
            shd(pc(sim.sample(scm, 20_000, seed=s)), truth)[0] == 0 for s in range(50)
        )
        assert hits >= 45

    def test_chain_undirected(self):
        scm = chain_scm([1.0, 1.0], labels=["A", "B", "C"])
        ds = sim.sample(scm, 20_000, seed=0)
        g = pc(ds)
        assert g.undirected_edges() == [("A", "B"), ("B", "C")]
        assert g.directed_edges() == []

    def test_forbidden_edge_never_appears(self):
        scm = collider_scm()
        k = Knowledge(forbidden=frozenset({("A", "C")}))
        for seed in range(10):
            ds = sim.sample(scm, 20_000, seed=seed)
            g = pc(ds, knowledge=k)
            assert ("A", "C") not in g.directed_edges()

    def test_required_edge_always_appears(self):
        scm = chain_scm([1.0, 1.0], labels=["A", "B", "C"])
        k = Knowledge(required=frozenset({("A", "B")}))
        ds = sim.sample(scm, 20_000, seed=3)
        assert ("A", "B") in pc(ds, knowledge=k).directed_edges()

    def test_affine_invariance(self):
        scm = collider_scm()
        ds = sim.sample(scm, 10_000, seed=5)
        X = ds.values * np.array([3.0, 0.2, 11.0]) + np.array([-5.0, 2.0, 0.5])
        ds2 = dataset_from_matrix(X, names=ds.column_names)
        assert pc(ds) == pc(ds2)

    def test_deterministic(self):
        ds = sim.sample(collider_scm(), 5_000, seed=9)
        assert pc(ds) == pc(ds)

    def test_categorical_rejected(self):
        ds = load_csv(b"a,b\n1,x\n2,y")
        with pytest.raises(SchemaError):
            pc(ds)


class TestGes:
    def test_collider_recovery_rate(self):
        scm = collider_scm()
        truth = to_cpdag(scm.dag)
        hits = sum(
            shd(ges(sim.sample(scm, 20_000, seed=s)), truth)[0] == 0 for s in range(50)
        )
        assert hits >= 45

    def test_independent_columns_empty_graph(self):
        dag = Dag.build([f"x{i}" for i in range(5)], [])
        scm = sim.Scm(
            dag,
            {f"x{i}": sim.Mechanism("linear", (), (), "gaussian", 1.0) for i in range(5)},
        )
        ds = sim.sample(scm, 10_000, seed=0)
        assert len(ges(ds).edges) == 0

    def test_score_trace_strictly_increases(self):
        ds = sim.sample(collider_scm(), 20_000, seed=1)
        _, trace = ges_with_trace(ds)
        assert len(trace) > 1
        assert all(b > a for a, b in zip(trace, trace[1:]))

    def test_final_score_at_least_empty(self):
        for seed in range(5):
            gspec = sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=seed)
            scm = sim.attach_mechanisms(sim.sample_graph(gspec), sim.MechanismSpec(), seed=seed)
            ds = sim.sample(scm, 5_000, seed=seed)
            _, trace = ges_with_trace(ds)
            assert trace[-1] >= trace[0]

    def test_knowledge_contract(self):
        scm = collider_scm()
        ds = sim.sample(scm, 20_000, seed=2)
        k = Knowledge(forbidden=frozenset({("A", "C")}), required=frozenset({("B", "C")}))
        g = ges(ds, knowledge=k)
        assert ("A", "C") not in g.directed_edges()
        assert ("B", "C") in g.directed_edges()


class TestNotears:
    def test_h_zero_matrix(self):
        h, _ = acyclicity(np.zeros((4, 4)))
        assert h == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(200, 5))
        worst = 0.0
        for _ in range(20):
            W = rng.normal(scale=0.4, size=(5, 5))
            np.fill_diagonal(W, 0.0)
            rho, alpha = 2.0, 0.5
            _, grad = smooth_objective(W, X, rho, alpha)
            eps = 1e-5
            num = np.zeros_like(W)
            for i in range(5):
                for j in range(5):
                    Wp, Wm = W.copy(), W.copy()
                    Wp[i, j] += eps
                    Wm[i, j] -= eps
                    fp, _ = smooth_objective(Wp, X, rho, alpha)
                    fm, _ = smooth_objective(Wm, X, rho, alpha)
                    num[i, j] = (fp - fm) / (2 * eps)
            rel = np.abs(num - grad) / np.maximum(np.abs(grad), 1e-8)
            worst = max(worst, rel.max())
        assert worst <= 1e-5

    def test_two_node_recovery(self):
        scm = chain_scm([2.0], labels=["x1", "x2"])
        ds = sim.sample(scm, 10_000, seed=5)
        wd = notears_linear(ds)
        assert 1.8 <= wd.weights[0, 1] <= 2.2
        assert wd.weights[1, 0] == 0.0

    def test_final_h_below_tolerance(self):
        from causalab.discovery.notears import notears_fit

        scm = scm_from_weights(["a", "b", "c"], [("a", "b", 1.0), ("b", "c", -1.5)])
        ds = sim.sample(scm, 5_000, seed=6)
        _, h = notears_fit(ds, DiscoveryParams())
        assert h <= 1e-8

    def test_output_pattern_acyclic(self):
        for seed in range(5):
            gspec = sim.GraphSpec("erdos-renyi", d=5, expected_degree=2.0, seed=seed)
            scm = sim.attach_mechanisms(sim.sample_graph(gspec), sim.MechanismSpec(), seed=seed)
            ds = sim.sample(scm, 2_000, seed=seed)
            wd = notears_linear(ds)
            validate_dag(wd.graph)  # raises on a cycle

    def test_weighted_dag_rejects_cycles(self):
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(CycleError):
            WeightedDag(["a", "b"], W)


class TestDirectLingam:
    def test_two_node_uniform(self):
        scm = chain_scm([0.8], noise="uniform", labels=["x1", "x2"])
        ok = 0
        for seed in range(50):
            ds = sim.sample(scm, 20_000, seed=seed)
            wd = direct_lingam(ds)
            if wd.graph.directed_edges() == [("x1", "x2")] and 0.72 <= wd.weights[0, 1] <= 0.88:
                ok += 1
        assert ok >= 45

    def test_four_node_chain_order(self):
        scm = chain_scm([1.0, 1.0, 1.0], noise="uniform")
        ok = sum(
            causal_order(sim.sample(scm, 20_000, seed=s).values) == [0, 1, 2, 3]
            for s in range(50)
        )
        assert ok >= 40

    def test_column_permutation_equivariance(self):
        scm = chain_scm([1.0, -1.2, 0.9], noise="uniform")
        ds = sim.sample(scm, 20_000, seed=13)
        order = causal_order(ds.values)
        reversed_order = causal_order(ds.values[:, ::-1])
        d = ds.d
        assert [d - 1 - i for i in reversed_order] == order

    def test_single_column_rejected(self):
        ds = dataset_from_matrix(np.random.default_rng(0).normal(size=(100, 1)))
        with pytest.raises(SchemaError):
            direct_lingam(ds)


class TestDeterminism:
    def test_all_methods_deterministic(self):
        gspec = sim.GraphSpec("erdos-renyi", d=4, expected_degree=1.5, seed=0)
        scm = sim.attach_mechanisms(sim.sample_graph(gspec), sim.MechanismSpec(noise="uniform"), seed=1)
        ds = sim.sample(scm, 3_000, seed=2)
        assert pc(ds) == pc(ds)
        assert ges(ds) == ges(ds)
        assert np.array_equal(notears_linear(ds).weights, notears_linear(ds).weights)
        assert np.array_equal(direct_lingam(ds).weights, direct_lingam(ds).weights)
