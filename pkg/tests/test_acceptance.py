"""Acceptance suite: one test and one printed pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines on standard output.
"""

import hashlib
import math
import time

import numpy as np
import pytest
from scipy import stats

from mshine import (MetaPath, TrainConfig, TripleType, classify, decompose,
                    enumerate_symmetric, export_embeddings,
                    expected_random_mrr, init_params, link_prediction_queries,
                    load_graph, loss_pre, loss_state, mrr_score,
                    precision_at_k, predict_prob, rank_candidates,
                    read_embeddings, recall_at_k, schema_of, select_initial,
                    train, triple_types_of, walk_step, batch_objective,
                    compute_state)
from mshine.cli import main as cli_main
from mshine.evaluation import ap_at_k
from mshine.hin import Schema

from conftest import (EXPECTED_COUNTS, community_hin, hold_out_edges,
                      make_graph, schema_for, write_graph)
from test_evaluation import brute_ap, brute_pre, brute_rec, brute_rr
from test_metapaths import unroll_oracle
from test_training import dense_gradients, fd_gradient, sample_setup, GROUPS


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[{status}] criterion {num:>2}: {name}{'  (' + detail + ')' if detail else ''}")
    assert ok, f"criterion {num} failed: {name} {detail}"


# -- shared end-to-end fixture (criteria 8, 9, 11) ----------------------------

@pytest.fixture(scope="module")
def trained_community(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("community")
    nodes, edges, labels = community_hin()
    rng = np.random.default_rng(1042)
    train_edges, held = hold_out_edges(edges, "UM", 0.10, rng)
    nf, ef = write_graph(tmp, nodes, train_edges)
    graph = load_graph(nf, ef)
    paths = select_initial(schema_of(graph))
    index = triple_types_of(paths)
    config = TrainConfig(dim=16, epochs=200, batch_size=10, negative_k=5,
                         learning_rate=0.2, samples_per_type=300, seed=42)
    started = time.perf_counter()
    params, reports = train(graph, index, config)
    elapsed = time.perf_counter() - started
    held_ids = [(graph.label_to_id[u], graph.label_to_id[v], e) for u, v, e in held]
    return dict(tmp=tmp, graph=graph, paths=paths, index=index, params=params,
                reports=reports, held=held_ids, labels=labels, config=config,
                train_seconds=elapsed)


def test_criterion_01_metapath_selection_counts():
    ok = True
    details = []
    for name in sorted(EXPECTED_COUNTS):
        started = time.perf_counter()
        got = len(select_initial(schema_for(name)))
        elapsed = time.perf_counter() - started
        details.append(f"{name}={got}")
        ok = ok and got == EXPECTED_COUNTS[name] and elapsed < 1.0
    _report(1, "meta-path selection counts 15/6/6/10/10", ok, " ".join(details))


def test_criterion_02_decomposition_oracle(rng):
    path = MetaPath(("U", "M", "A", "M", "U"), ("MU", "MA", "MA", "MU"))
    expected = {
        TripleType("U", "MU", "M", "MA", "A"),
        TripleType("M", "MA", "A", "MA", "M"),
        TripleType("A", "MA", "M", "MU", "U"),
        TripleType("M", "MU", "U", "MU", "M"),
    }
    ok = decompose(path) == expected

    checked = 0
    schemas = [schema_for(n) for n in sorted(EXPECTED_COUNTS)]
    for t in range(20):  # random schemas beyond the reference ones
        g_rng = np.random.default_rng(t)
        names = [f"T{i}" for i in range(int(g_rng.integers(2, 5)))]
        edge_types = {}
        for e in range(int(g_rng.integers(1, 5))):
            a, b = g_rng.integers(len(names), size=2)
            edge_types[f"E{e}"] = tuple(sorted((names[int(a)], names[int(b)])))
        schemas.append(Schema(frozenset(names), edge_types))
    candidates = []
    for s in schemas:
        candidates.extend(enumerate_symmetric(s, 3) if s.edge_types else [])
    picks = rng.permutation(len(candidates))[:100]
    assert len(picks) == 100
    for i in picks:
        p = candidates[int(i)]
        if decompose(p) != unroll_oracle(p, 4 * (len(p) - 1) + 1):
            ok = False
            break
        checked += 1
    _report(2, "decomposition matches brute-force unroll", ok,
            f"{checked} random paths")


def test_criterion_03_gradient_correctness(tmp_path):
    rng = np.random.default_rng(31)
    started = time.perf_counter()
    graph, index, params, triples, negs = sample_setup(
        tmp_path, rng, n_triples=20, d=8)
    assert graph.n_nodes == 12
    _, grads, _ = batch_objective(params, triples, negs)
    analytic = dense_gradients(params, grads)
    ok = True
    worst = 0.0
    for group in GROUPS:
        fd = fd_gradient(params, group, triples, negs, h=1e-4)
        num = np.linalg.norm(analytic[group] - fd)
        den = max(np.linalg.norm(analytic[group]), np.linalg.norm(fd), 1e-12)
        worst = max(worst, num / den)
        ok = ok and num / den <= 1e-4
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 30.0
    _report(3, "analytic gradients match finite differences", ok,
            f"worst rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_04_loss_anchors(tmp_path):
    rng = np.random.default_rng(4)
    graph, index, params, triples, negs = sample_setup(tmp_path, rng, n_triples=1)
    trip = triples[0]
    zeroed = params.copy()
    for arr in zeroed.tensors().values():
        arr[:] = 0.0
    anchor = abs(loss_pre(zeroed, trip, negs[0]) - (-2.0 * math.log(0.5)))
    ok = anchor < 1e-9
    # force exact agreement between the stored and the computed state
    state = compute_state(params, trip)
    params.V_h[trip.path_id] = 1.0
    state = compute_state(params, trip)
    params.H[trip.mid] = state
    ok = ok and loss_state(params, trip) < 1e-12
    ok = ok and loss_state(zeroed, trip) < 1e-12
    _report(4, "loss anchors (zero-parameter value, zero state distance)", ok,
            f"|loss_pre - 2ln2| = {anchor:.1e}")


def test_criterion_05_heterogeneous_softmax():
    rng = np.random.default_rng(5)
    ok = True
    for _ in range(1000):
        d = int(rng.integers(2, 9))
        n = int(rng.integers(2, 7))
        params = init_params(n, d, 1, 1, rng)
        params.W_hy = rng.normal(0, 1, size=(n, d))
        params.V_y = rng.normal(1, 0.3, size=(1, d))
        state = rng.normal(size=d)
        cands = list(range(n))
        probs = predict_prob(params, state, cands, 0)
        ok = ok and abs(probs.sum() - 1.0) < 1e-9
        denom = float(state @ state)
        if denom < 1e-9 or np.any(np.abs(params.V_y[0]) < 1e-6):
            continue
        shift = float(rng.normal()) * state / (params.V_y[0] * denom)
        params.W_hy += shift
        ok = ok and np.allclose(predict_prob(params, state, cands, 0), probs,
                                atol=1e-9)
        if not ok:
            break
    _report(5, "softmax normalization and shift invariance (1000 draws)", ok)


def test_criterion_06_walk_step_distribution(tmp_path):
    g = make_graph(tmp_path,
                   [("hub", "H"), ("x0", "X"), ("x1", "X"), ("x2", "X")],
                   [("hub", "x0", "HX"), ("hub", "x1", "HX"), ("hub", "x2", "HX")])
    rng = np.random.default_rng(6)
    counts = np.zeros(3)
    for _ in range(30_000):
        counts[walk_step(g, 0, "X", "HX", rng) - 1] += 1
    _, p = stats.chisquare(counts)
    _report(6, "walk-step uniformity (chi-square, 30000 draws)", p > 0.01,
            f"p = {p:.3f}")


def test_criterion_07_metric_oracles(rng):
    from mshine import RankingResult
    ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        ranked = [int(v) for v in rng.permutation(n)]
        r_count = int(rng.integers(1, n + 1))
        relevant = {int(v) for v in rng.choice(n, size=r_count, replace=False)}
        res = RankingResult(-1, ranked, relevant)
        for k in (1, 2, 3, 5, 10, 20):
            ok = ok and precision_at_k(res, k) == brute_pre(ranked, relevant, k)
            ok = ok and recall_at_k(res, k) == brute_rec(ranked, relevant, k)
            ok = ok and ap_at_k(res, k) == brute_ap(ranked, relevant, k)
        ok = ok and mrr_score([res]) == brute_rr(ranked, relevant)
        if not ok:
            break
    worked = RankingResult(-1, ["b", "a", "c"], {"a"})
    ok = ok and precision_at_k(worked, 3) == 1 / 3
    ok = ok and ap_at_k(RankingResult(-1, ["a", "b"], {"a"}), 2) == 0.5
    _report(7, "ranking metrics match brute force exactly (1000 rankings)", ok)


def test_criterion_08_link_prediction_signal(trained_community):
    env = trained_community
    qt, ct, relevant = link_prediction_queries(env["graph"], env["held"], "UM")
    results = [rank_candidates(env["params"], env["graph"], env["index"], q, ct,
                               "UM", relevant=rel)
               for q, rel in sorted(relevant.items())]
    mrr = mrr_score(results)
    baseline = expected_random_mrr(results)
    ok = mrr >= 5.0 * baseline and env["train_seconds"] < 120.0
    _report(8, "trained link-prediction MRR beats 5x random", ok,
            f"MRR {mrr:.3f} vs random {baseline:.3f}, "
            f"train {env['train_seconds']:.0f}s")


def test_criterion_09_classification_signal(trained_community):
    env = trained_community
    g, params, index = env["graph"], env["params"], env["index"]
    movie_labels = {g.label_to_id[lb]: c for lb, c in env["labels"].items()
                    if g.type_name_of(g.label_to_id[lb]) == "M"}
    trained_emb = {v: (params.X * params.V_x[0])[v] for v in movie_labels}
    _, micro_trained = classify(trained_emb, movie_labels, 0.8, repetitions=10,
                                rng=np.random.default_rng(47))
    fresh = init_params(g.n_nodes, params.dim, index.n_triples, index.n_paths,
                        np.random.default_rng(42))
    fresh_emb = {v: (fresh.X * fresh.V_x[0])[v] for v in movie_labels}
    _, micro_fresh = classify(fresh_emb, movie_labels, 0.8, repetitions=10,
                              rng=np.random.default_rng(47))
    ok = micro_trained >= 0.9 and micro_fresh <= 0.65
    _report(9, "trained embeddings classify communities, fresh ones do not",
            ok, f"f1-micro {micro_trained:.3f} vs {micro_fresh:.3f}")


def test_criterion_10_determinism(tmp_path, capsys):
    nodes, edges, labels = community_hin()
    train_edges, held = hold_out_edges(edges, "UM", 0.10,
                                       np.random.default_rng(99))
    nf, ef = write_graph(tmp_path, nodes, train_edges)
    held_file = tmp_path / "held.tsv"
    held_file.write_text("".join(f"{u}\t{v}\tUM\n" for u, v, _ in held))
    digests, tables = [], []
    for run in range(2):
        out = tmp_path / f"model{run}.mshn"
        code = cli_main(["train", "--nodes", str(nf), "--edges", str(ef),
                         "--dim", "8", "--epochs", "5", "--batch", "10",
                         "--neg", "3", "--seed", "17", "--out", str(out),
                         "--manifest", str(tmp_path / f"m{run}.json"),
                         "--log-file", str(tmp_path / f"train{run}.log")])
        assert code == 0
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        capsys.readouterr()
        code = cli_main(["eval-link", "--nodes", str(nf), "--edges", str(ef),
                         "--model", str(out), "--held-out", str(held_file),
                         "--edge-type", "UM", "--k", "1,3,10",
                         "--manifest", str(tmp_path / f"e{run}.json")])
        assert code == 0
        tables.append(capsys.readouterr().out)
    ok = digests[0] == digests[1] and tables[0] == tables[1]
    _report(10, "identical runs give byte-identical checkpoints and tables",
            ok, digests[0][:12])


def test_criterion_11_export_parity(trained_community):
    env = trained_community
    g, params, index = env["graph"], env["params"], env["index"]
    out_dir = env["tmp"] / "export"
    files = export_embeddings(params, index, g.labels, out_dir)
    ok = len(files) == index.n_paths
    worst = 0.0
    for pid, file in enumerate(files):
        labels, matrix = read_embeddings(file)
        expected = params.X * params.V_x[pid]
        worst = max(worst, float(np.max(np.abs(matrix - expected))))
        ok = ok and labels == g.labels and np.max(np.abs(matrix - expected)) <= 1e-5
    _report(11, "exported rows equal the decoded basic representation", ok,
            f"max abs round-trip error {worst:.1e}")
