"""scikit-learn style estimator facade over the embedding pipeline.

``MShineEmbedding`` composes with the sklearn ecosystem: constructor
parameters are plain attributes, ``get_params``/``set_params``/``clone`` work,
``fit`` takes a loaded TypedGraph (or a (node_file, edge_file) pair) and
``transform`` maps node ids to per-meta-path embedding rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .hin import TypedGraph, load_graph, schema_of
from .metapaths import MetaPath, select_initial, triple_types_of
from .training import TrainConfig, train


def _check_graph(X) -> TypedGraph:
    if isinstance(X, TypedGraph):
        return X
    if isinstance(X, (tuple, list)) and len(X) == 2:
        return load_graph(X[0], X[1])
    raise TypeError("X must be a TypedGraph or a (node_file, edge_file) pair")


def _check_node_ids(ids, n_nodes: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= n_nodes):
        raise ValueError(f"node ids must lie in [0, {n_nodes})")
    return ids


class MShineEmbedding(BaseEstimator):
    """Learns one embedding per node per selected meta-path from a typed graph.

    Parameters mirror the training configuration; ``metapaths`` may list
    meta-path strings to bypass automatic selection (prior knowledge), and
    ``metapath`` picks the default output path for ``transform``.
    """

    def __init__(self, dim=128, negative_k=5, batch_size=30, epochs=1000,
                 learning_rate=0.025, min_learning_rate=0.0001,
                 neg_distribution="uniform", samples_per_type=None,
                 scale_negatives=True, max_half_len=None, metapaths=None,
                 metapath=None, workers=1, seed=0):
        self.dim = dim
        self.negative_k = negative_k
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.neg_distribution = neg_distribution
        self.samples_per_type = samples_per_type
        self.scale_negatives = scale_negatives
        self.max_half_len = max_half_len
        self.metapaths = metapaths
        self.metapath = metapath
        self.workers = workers
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim, negative_k=self.negative_k, batch_size=self.batch_size,
            epochs=self.epochs, learning_rate=self.learning_rate,
            min_learning_rate=self.min_learning_rate, seed=self.seed,
            neg_distribution=self.neg_distribution,
            samples_per_type=self.samples_per_type,
            scale_negatives=self.scale_negatives, workers=self.workers)

    def fit(self, X, y=None):
        graph = _check_graph(X)
        schema = schema_of(graph)
        if self.metapaths is not None:
            paths = [mp if isinstance(mp, MetaPath) else MetaPath.parse(mp, schema)
                     for mp in self.metapaths]
        else:
            paths = select_initial(schema, self.max_half_len)
        if not paths:
            raise ValueError("no meta-paths selected; the schema has no edge types")
        index = triple_types_of(paths)
        params, reports = train(graph, index, self._config())
        self.graph_ = graph
        self.schema_ = schema
        self.paths_ = paths
        self.index_ = index
        self.params_ = params
        self.reports_ = reports
        return self

    def _resolve_path(self, metapath) -> int:
        if metapath is None:
            metapath = self.metapath
        if metapath is None:
            return 0
        return self.index_.path_id(metapath)

    def transform(self, X=None, metapath=None) -> np.ndarray:
        """Decoded basic embeddings for node ids ``X`` (all nodes by default)
        under one meta-path (constructor default or first selected)."""
        check_is_fitted(self, "params_")
        pid = self._resolve_path(metapath)
        if X is None:
            X = np.arange(self.graph_.n_nodes)
        ids = _check_node_ids(X, self.graph_.n_nodes)
        return self.params_.X[ids] * self.params_.V_x[pid]

    def fit_transform(self, X, y=None, **kw):
        return self.fit(X, y).transform(**kw)

    def get_embedding(self, metapath=None) -> np.ndarray:
        """All-node embedding matrix for one meta-path."""
        return self.transform(None, metapath)

    @property
    def metapath_ids_(self) -> list[str]:
        check_is_fitted(self, "paths_")
        return [p.id for p in self.paths_]
