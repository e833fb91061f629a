"""Link-prediction ranking, ranking metrics, and node classification.

Link prediction ranks every same-type candidate for a query node by the mean
positive-prediction value log sig(score) over all applicable (meta-path,
triple type) contexts, where a context applies when its middle type is the
query's type, its last edge type is the predicted edge type and its final
type is the candidate type. Within a context, all valid predecessors of the
query are enumerated and averaged; when none exist the query's stored decoded
state is used directly.

Classification trains the built-in one-vs-rest L2 logistic regression on node
embeddings over repeated random splits and reports mean f1-macro / f1-micro.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .hin import TypedGraph
from .metapaths import TripleIndex
from .model import ModelParams
from .training import log_sigmoid

ALLOWED_RATIOS = (0.2, 0.4, 0.6, 0.8)


class EvalError(RuntimeError):
    """Raised when an evaluation request cannot be satisfied."""


@dataclass
class RankingResult:
    """One query's ordered candidates plus its held-out true neighbors."""

    query: int
    ranked: list[int]
    relevant: set[int]

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError("ranked list contains duplicates")
        if self.query in self.ranked:
            raise ValueError("query must not appear in its own ranking")


# -- relevance and ranking ---------------------------------------------------

def link_contexts(index: TripleIndex, query_type: str, candidate_type: str,
                  edge_type: str) -> list[tuple[int, int]]:
    """(path_id, triple_id) pairs usable to score candidate_type nodes for a
    query of query_type over the predicted edge type."""
    out = []
    for pid in range(index.n_paths):
        for tid in index.path_triples[pid]:
            t = index.triples[tid]
            if t.mid == query_type and t.edge_b == edge_type and t.next == candidate_type:
                out.append((pid, tid))
    return out


def _context_states(p: ModelParams, graph: TypedGraph, index: TripleIndex,
                    query: int, pid: int, tid: int) -> np.ndarray:
    """States (one per predecessor) for scoring candidates under a context.

    Falls back to the query's decoded stored state when the query has no
    predecessor of the required type over the required edge type.
    """
    t = index.triples[tid]
    ea = graph.edge_name_to_id[t.edge_a]
    preds = [u for u, et in graph.neighbors_by_type(query, t.prev) if et == ea]
    if not preds:
        return (p.H[query] * p.V_h[pid])[None, :]
    base = p.W_xh @ (p.X[query] * p.V_x[pid]) + p.W_rh @ p.R[tid]
    h_prev = p.H[np.asarray(preds)] * p.V_h[pid]
    return np.tanh(base[None, :] + h_prev @ p.W_hh.T)


def relevance(p: ModelParams, graph: TypedGraph, index: TripleIndex,
              query: int, candidate: int, contexts) -> float:
    """Mean over contexts of the mean per-predecessor log sig(score)."""
    if not contexts:
        raise EvalError(f"no applicable context for query node {query}")
    vals = []
    for pid, tid in contexts:
        states = _context_states(p, graph, index, query, pid, tid)
        scores = states @ (p.W_hy[candidate] * p.V_y[pid])
        vals.append(float(np.mean(log_sigmoid(scores))))
    return float(np.mean(vals))


def order_candidates(candidates: np.ndarray, scores: np.ndarray) -> list[int]:
    """Descending score, ties broken by ascending node id."""
    order = np.lexsort((candidates, -scores))
    return [int(candidates[i]) for i in order]


def rank_candidates(p: ModelParams, graph: TypedGraph, index: TripleIndex,
                    query: int, candidate_type: str, edge_type: str,
                    relevant=None) -> RankingResult:
    """Rank all candidate_type nodes for ``query``, excluding nodes already
    linked to it by ``edge_type`` in the training graph and the query itself."""
    et = graph.edge_name_to_id[edge_type]
    linked = {nbr for nbr, e in graph.neighbors_by_type(query, candidate_type) if e == et}
    ct = graph.type_name_to_id[candidate_type]
    candidates = np.asarray(
        [int(v) for v in graph.nodes_by_type[ct] if int(v) not in linked and int(v) != query],
        dtype=np.int64)
    contexts = link_contexts(index, graph.type_name_of(query), candidate_type, edge_type)
    if not contexts:
        raise EvalError(
            f"no applicable context for query type {graph.type_name_of(query)!r} "
            f"over edge type {edge_type!r}")
    if candidates.size == 0:
        return RankingResult(query, [], set(relevant or ()))
    total = np.zeros(len(candidates))
    for pid, tid in contexts:
        states = _context_states(p, graph, index, query, pid, tid)
        target_rows = p.W_hy[candidates] * p.V_y[pid]
        total += log_sigmoid(states @ target_rows.T).mean(axis=0)
    total /= len(contexts)
    return RankingResult(query, order_candidates(candidates, total),
                         set(relevant or ()))


def link_prediction_queries(graph: TypedGraph, held_out, edge_type: str,
                            query_type: str | None = None):
    """Group held-out edges of ``edge_type`` into per-query relevant sets.

    ``held_out`` is an iterable of (u, v, edge_type_name). For an edge type
    joining two distinct node types the default query side is the
    lexicographically larger type name; self-pair edge types query both
    endpoints. Returns (query_type, candidate_type, {query: relevant set}).
    """
    a, b = (graph.node_type_names[t]
            for t in graph.edge_type_pairs[graph.edge_name_to_id[edge_type]])
    if query_type is None:
        query_type = max(a, b)
    if query_type not in (a, b):
        raise EvalError(f"query type {query_type!r} is not an endpoint of {edge_type!r}")
    candidate_type = a if query_type == b else b
    relevant: dict[int, set[int]] = {}
    for u, v, ename in held_out:
        if ename != edge_type:
            continue
        if graph.type_name_of(u) == query_type and graph.type_name_of(v) == candidate_type:
            relevant.setdefault(u, set()).add(v)
        if graph.type_name_of(v) == query_type and graph.type_name_of(u) == candidate_type:
            relevant.setdefault(v, set()).add(u)
    return query_type, candidate_type, relevant


# -- ranking metrics ---------------------------------------------------------

def _effective_k(r: RankingResult, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return min(k, len(r.ranked))


def hits_at_k(r: RankingResult, k: int) -> int:
    k = _effective_k(r, k)
    return sum(1 for v in r.ranked[:k] if v in r.relevant)


def precision_at_k(r: RankingResult, k: int) -> float:
    k = _effective_k(r, k)
    if k == 0:
        return 0.0
    return hits_at_k(r, k) / k


def recall_at_k(r: RankingResult, k: int) -> float:
    if not r.relevant:
        raise ValueError("recall is undefined for an empty relevant set")
    return hits_at_k(r, k) / len(r.relevant)


def ap_at_k(r: RankingResult, k: int) -> float:
    """(1/k) * sum_{j<=k} Pre@j * relevant@j."""
    k = _effective_k(r, k)
    if k == 0:
        return 0.0
    total = 0.0
    hits = 0
    for j in range(1, k + 1):
        if r.ranked[j - 1] in r.relevant:
            hits += 1
            total += hits / j
    return total / k


def map_score(results, k: int) -> float:
    """Mean AP@k over queries; queries with no relevant nodes are excluded."""
    scored = [ap_at_k(r, k) for r in results if r.relevant]
    if not scored:
        raise ValueError("no queries with relevant nodes")
    return sum(scored) / len(scored)


def mrr_score(results) -> float:
    """Mean reciprocal rank of the first relevant node; 0 when none is ranked.
    Queries with no relevant nodes are excluded."""
    vals = []
    for r in results:
        if not r.relevant:
            continue
        rr = 0.0
        for pos, v in enumerate(r.ranked, start=1):
            if v in r.relevant:
                rr = 1.0 / pos
                break
        vals.append(rr)
    if not vals:
        raise ValueError("no queries with relevant nodes")
    return sum(vals) / len(vals)


def expected_random_mrr(results) -> float:
    """Exact expected MRR of a uniformly random ranking, per query.

    For n candidates with r relevant, P(first hit at position j) follows the
    hypergeometric first-success law. Queries with no relevant nodes are
    excluded, matching mrr_score.
    """
    vals = []
    for res in results:
        n, r = len(res.ranked), len(res.relevant & set(res.ranked))
        if not res.relevant:
            continue
        if n == 0 or r == 0:
            vals.append(0.0)
            continue
        e = 0.0
        p_no_hit_before = 1.0
        for j in range(1, n - r + 2):
            p_here = p_no_hit_before * r / (n - j + 1)
            e += p_here / j
            p_no_hit_before *= (n - r - j + 1) / (n - j + 1)
        vals.append(e)
    if not vals:
        raise ValueError("no queries with relevant nodes")
    return sum(vals) / len(vals)


# -- node classification -----------------------------------------------------

@dataclass
class LabeledSplit:
    train_nodes: list[int]
    test_nodes: list[int]
    ratio: float

    def __post_init__(self):
        if set(self.train_nodes) & set(self.test_nodes):
            raise ValueError("train and test overlap")


def make_split(nodes, ratio: float, rng) -> LabeledSplit:
    nodes = list(nodes)
    perm = rng.permutation(len(nodes))
    n_train = max(1, min(len(nodes) - 1, int(round(ratio * len(nodes)))))
    train = [nodes[i] for i in perm[:n_train]]
    test = [nodes[i] for i in perm[n_train:]]
    return LabeledSplit(train, test, ratio)


class OneVsRestLogistic:
    """L2-regularized logistic regression, one binary problem per class.

    Weights minimize mean log-loss + (l2/2)*||w||^2 (bias unpenalized) via
    L-BFGS with the analytic gradient; deterministic for fixed inputs.
    """

    def __init__(self, l2: float = 1e-3, max_iter: int = 200):
        self.l2 = l2
        self.max_iter = max_iter
        self.coef_ = None
        self.intercept_ = None

    def fit(self, X: np.ndarray, Y: np.ndarray) -> "OneVsRestLogistic":
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        n, d = X.shape
        n_classes = Y.shape[1]
        self.coef_ = np.zeros((n_classes, d))
        self.intercept_ = np.zeros(n_classes)
        for c in range(n_classes):
            y = Y[:, c]

            def objective(wb, y=y):
                w, b = wb[:d], wb[d]
                z = X @ w + b
                loss = float(np.mean(np.logaddexp(0.0, -z) + (1.0 - y) * z))
                loss += 0.5 * self.l2 * float(w @ w)
                p = expit(z)
                gz = (p - y) / n
                gw = X.T @ gz + self.l2 * w
                gb = float(np.sum(gz))
                return loss, np.concatenate([gw, [gb]])

            res = minimize(objective, np.zeros(d + 1), jac=True,
                           method="L-BFGS-B", options={"maxiter": self.max_iter})
            self.coef_[c] = res.x[:d]
            self.intercept_[c] = res.x[d]
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coef_.T + self.intercept_

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(X))


def f1_scores(true_sets, pred_sets, classes) -> tuple[float, float]:
    """(f1_macro, f1_micro) over a fixed class universe.

    Per-class f1 is 0 when the class has no true or predicted members; macro
    is the unweighted mean; micro pools counts over all (item, class) pairs.
    """
    tp = {c: 0 for c in classes}
    fp = {c: 0 for c in classes}
    fn = {c: 0 for c in classes}
    for truth, pred in zip(true_sets, pred_sets):
        for c in classes:
            in_t, in_p = c in truth, c in pred
            if in_t and in_p:
                tp[c] += 1
            elif in_p:
                fp[c] += 1
            elif in_t:
                fn[c] += 1
    per_class = []
    for c in classes:
        denom = 2 * tp[c] + fp[c] + fn[c]
        per_class.append(2 * tp[c] / denom if denom else 0.0)
    macro = sum(per_class) / len(per_class) if per_class else 0.0
    ttp, tfp, tfn = sum(tp.values()), sum(fp.values()), sum(fn.values())
    denom = 2 * ttp + tfp + tfn
    micro = 2 * ttp / denom if denom else 0.0
    return macro, micro


def classify(embeddings, labels, ratio: float, repetitions: int = 10,
             rng=None, l2: float = 1e-3) -> tuple[float, float]:
    """Repeated-split one-vs-rest classification on fixed embeddings.

    ``embeddings`` maps node id to vector and must cover every labeled node;
    ``labels`` maps node id to a class or an iterable of classes. For each
    repetition the labeled nodes are split at ``ratio`` (train fraction), the
    classifier is fit on the train embeddings and scored on the test ones;
    the mean (f1_macro, f1_micro) over repetitions is returned. A split that
    misses a class in its train part is resampled once, then rejected.
    """
    if not any(math.isclose(ratio, r) for r in ALLOWED_RATIOS):
        raise ValueError(f"ratio must be one of {ALLOWED_RATIOS}")
    if rng is None:
        rng = np.random.default_rng(0)
    nodes = sorted(labels)
    missing = [v for v in nodes if v not in embeddings]
    if missing:
        raise ValueError(f"embeddings missing for labeled nodes {missing[:5]} ...")
    label_sets = {v: frozenset([labels[v]]) if isinstance(labels[v], str)
                  else frozenset(labels[v]) for v in nodes}
    classes = sorted(set().union(*label_sets.values()))
    multi_label = any(len(s) > 1 for s in label_sets.values())
    class_pos = {c: i for i, c in enumerate(classes)}

    def matrixize(node_list):
        x = np.stack([np.asarray(embeddings[v], dtype=np.float64) for v in node_list])
        y = np.zeros((len(node_list), len(classes)), dtype=bool)
        for i, v in enumerate(node_list):
            for c in label_sets[v]:
                y[i, class_pos[c]] = True
        return x, y

    macros, micros = [], []
    for _ in range(repetitions):
        split = make_split(nodes, ratio, rng)
        x_tr, y_tr = matrixize(split.train_nodes)
        if not y_tr.any(axis=0).all():
            split = make_split(nodes, ratio, rng)
            x_tr, y_tr = matrixize(split.train_nodes)
            if not y_tr.any(axis=0).all():
                absent = [classes[i] for i in np.flatnonzero(~y_tr.any(axis=0))]
                raise ValueError(f"classes {absent} absent from the training split "
                                 "after one resample")
        x_te, _ = matrixize(split.test_nodes)
        clf = OneVsRestLogistic(l2=l2).fit(x_tr, y_tr)
        if multi_label:
            pred = clf.predict_proba(x_te) >= 0.5
            pred_sets = [frozenset(classes[i] for i in np.flatnonzero(row)) for row in pred]
        else:
            best = clf.decision_function(x_te).argmax(axis=1)
            pred_sets = [frozenset([classes[i]]) for i in best]
        true_sets = [label_sets[v] for v in split.test_nodes]
        macro, micro = f1_scores(true_sets, pred_sets, classes)
        macros.append(macro)
        micros.append(micro)
    return float(np.mean(macros)), float(np.mean(micros))


# -- embedding export --------------------------------------------------------

def _safe_filename(metapath_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_\-]", "_", metapath_id) + ".emb"


def export_embeddings(params: ModelParams, index: TripleIndex, node_labels,
                      out_dir) -> list[str]:
    """One text file per meta-path: header ``N d``, then a row per node of
    ``<label> v1 ... vd`` with 6-significant-digit floats (the decoded basic
    representation X[v] * V_x[m])."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for pid, mp in enumerate(index.paths):
        rows = params.X * params.V_x[pid]
        path = os.path.join(out_dir, _safe_filename(mp.id))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{params.n_nodes} {params.dim}\n")
            for v in range(params.n_nodes):
                vals = " ".join(format(x, ".6g") for x in rows[v])
                fh.write(f"{node_labels[v]} {vals}\n")
        written.append(path)
    return written


def read_embeddings(path) -> tuple[list[str], np.ndarray]:
    """Parse a file produced by export_embeddings."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().split()
        n, d = int(first[0]), int(first[1])
        labels, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").rsplit(None, d)
            labels.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(labels) != n:
        raise ValueError(f"{path}: expected {n} rows, found {len(labels)}")
    return labels, np.asarray(rows)
