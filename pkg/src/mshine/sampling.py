"""Training-triple sampling: meta-path-constrained walk steps and negatives.

A sampler owns no RNG; every draw takes a ``numpy.random.Generator`` so that
workers can share one sampler (its precomputed tables are read-only) while
holding independent, seed-derived generators. Identical seeds always produce
identical sample streams.
"""

from __future__ import annotations

import logging
import math
from typing import Iterator, NamedTuple

import numpy as np

from .hin import TypedGraph
from .metapaths import TripleIndex

logger = logging.getLogger(__name__)


class NegativeSamplingError(RuntimeError):
    """The positive node's type has a single member; skip this triple."""


class TrainingTriple(NamedTuple):
    prev: int
    mid: int
    nxt: int
    triple_id: int
    path_id: int


def walk_step(g: TypedGraph, v: int, next_type, edge_type, rng) -> int | None:
    """One meta-path-constrained random-walk step from ``v``.

    Draws uniformly among neighbors of ``v`` that have node type
    ``next_type`` and are connected through ``edge_type``; returns None when
    that neighbor set is empty.
    """
    e = edge_type if isinstance(edge_type, int) else g.edge_name_to_id[edge_type]
    options = [nbr for nbr, et in g.neighbors_by_type(v, next_type) if et == e]
    if not options:
        return None
    return options[int(rng.integers(len(options)))]


def negative_sample(g: TypedGraph, positive: int, k: int, rng,
                    distribution: str = "uniform") -> np.ndarray:
    """Draw ``k`` negatives of the same node type as ``positive``, excluding it.

    Draws are independent and may repeat. ``distribution`` is ``uniform`` or
    ``degree75`` (proportional to degree^0.75, the usual unigram smoothing).
    """
    t = g.type_of(positive)
    members = g.nodes_by_type[t]
    if len(members) < 2:
        raise NegativeSamplingError(
            f"node type {g.node_type_names[t]!r} has a single member; skip this triple"
        )
    pos_idx = int(np.searchsorted(members, positive))
    if distribution == "uniform":
        idx = rng.integers(0, len(members) - 1, size=k)
        idx = idx + (idx >= pos_idx)
        return members[idx]
    if distribution == "degree75":
        weights = np.power(g.degrees[members].astype(np.float64), 0.75)
        weights[pos_idx] = 0.0
        total = weights.sum()
        if total <= 0.0:
            idx = rng.integers(0, len(members) - 1, size=k)
            idx = idx + (idx >= pos_idx)
            return members[idx]
        return rng.choice(members, size=k, p=weights / total)
    raise ValueError(f"unknown negative-sampling distribution {distribution!r}")


class TripleSampler:
    """Precomputed eligible-start tables for every triple type of an index.

    A node is an eligible start for a triple type when at least one valid
    two-step continuation exists, so a draw from the start list can always be
    completed into a full triple.
    """

    def __init__(self, graph: TypedGraph, index: TripleIndex):
        self.graph = graph
        self.index = index
        # per triple id: (prev_t, ea, mid_t, eb, next_t) as graph ids, or None
        # when a type name is absent from the graph
        self._resolved: list[tuple[int, int, int, int, int] | None] = []
        self.starts: list[np.ndarray] = []
        self._valid_mids: list[dict[int, list[int]]] = []
        for t in index.triples:
            self._precompute(t)
        self._center_counts = self._default_samples()

    def _precompute(self, t):
        g = self.graph
        try:
            ids = (g.type_name_to_id[t.prev], g.edge_name_to_id[t.edge_a],
                   g.type_name_to_id[t.mid], g.edge_name_to_id[t.edge_b],
                   g.type_name_to_id[t.next])
        except KeyError:
            self._resolved.append(None)
            self.starts.append(np.empty(0, dtype=np.int64))
            self._valid_mids.append({})
            return
        pt, ea, mt, eb, nt = ids
        mids_ok = {
            int(w) for w in g.nodes_by_type[mt]
            if any(et == eb for _, et in g.neighbors_by_type(int(w), nt))
        }
        starts = []
        valid_mids: dict[int, list[int]] = {}
        for u in g.nodes_by_type[pt]:
            u = int(u)
            mids = [w for w, et in g.neighbors_by_type(u, mt) if et == ea and w in mids_ok]
            if mids:
                starts.append(u)
                valid_mids[u] = mids
        self._resolved.append(ids)
        self.starts.append(np.asarray(starts, dtype=np.int64))
        self._valid_mids.append(valid_mids)

    def _default_samples(self) -> list[int]:
        """Per-triple default sample count: center-type size over the number
        of triple types sharing that center type."""
        g, index = self.graph, self.index
        centers = [t.mid for t in index.triples]
        out = []
        for t in index.triples:
            n_center = len(g.nodes_by_type.get(g.type_name_to_id.get(t.mid, -1), ()))
            share = centers.count(t.mid)
            out.append(max(1, math.ceil(n_center / max(share, 1))))
        return out

    def feasible(self, triple_id: int) -> bool:
        return len(self.starts[triple_id]) > 0

    def default_samples_per_type(self, triple_id: int) -> int:
        return self._center_counts[triple_id]

    def sample(self, triple_id: int, rng) -> tuple[int, int, int] | None:
        """Draw (prev, mid, next) for a triple type; None when infeasible."""
        starts = self.starts[triple_id]
        if len(starts) == 0:
            return None
        ids = self._resolved[triple_id]
        _, ea, mt, eb, nt = ids
        g = self.graph
        prev = int(starts[int(rng.integers(len(starts)))])
        for _ in range(8):
            mid = walk_step(g, prev, mt, ea, rng)
            if mid is None:
                break
            nxt = walk_step(g, mid, nt, eb, rng)
            if nxt is not None:
                return prev, mid, nxt
        # The uniform mid draw hit only dead ends; restrict to continuable
        # mids. Conditioned on success the distribution is unchanged, since
        # success given the mid is deterministic.
        mids = self._valid_mids[triple_id][prev]
        mid = mids[int(rng.integers(len(mids)))]
        nxt = walk_step(g, mid, nt, eb, rng)
        assert nxt is not None
        return prev, mid, nxt


def _validate_triple(graph: TypedGraph, index: TripleIndex, trip: TrainingTriple) -> None:
    t = index.triples[trip.triple_id]
    g = graph
    assert g.type_name_of(trip.prev) == t.prev
    assert g.type_name_of(trip.mid) == t.mid
    assert g.type_name_of(trip.nxt) == t.next
    assert g.has_edge(trip.prev, trip.mid, g.edge_name_to_id[t.edge_a])
    assert g.has_edge(trip.mid, trip.nxt, g.edge_name_to_id[t.edge_b])
    assert trip.triple_id in index.path_triples[trip.path_id]


def batch_stream(sampler: TripleSampler, rng, *, batch_size: int = 30,
                 samples_per_type: int | None = None,
                 warned: set | None = None) -> Iterator[list[TrainingTriple]]:
    """One epoch of fixed-size batches.

    Cycles meta-paths in index order and each path's triple set in canonical
    order, emitting ceil(samples_per_type / batch_size) batches of exactly
    ``batch_size`` triples per (path, triple type) pair; the last batch of a
    pair is padded by drawing extra samples. Triple types with no eligible
    start are skipped with a one-time warning (tracked in ``warned``).
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    index = sampler.index
    if warned is None:
        warned = set()
    emitted = 0
    for pid in range(index.n_paths):
        for tid in index.path_triples[pid]:
            if not sampler.feasible(tid):
                if tid not in warned:
                    warned.add(tid)
                    logger.warning("no eligible start nodes for triple type %s; skipping",
                                   index.triples[tid].id)
                continue
            spt = samples_per_type or sampler.default_samples_per_type(tid)
            for _ in range(math.ceil(spt / batch_size)):
                batch = []
                for _ in range(batch_size):
                    prev, mid, nxt = sampler.sample(tid, rng)
                    trip = TrainingTriple(prev, mid, nxt, tid, pid)
                    emitted += 1
                    if __debug__ or emitted % 100 == 0:
                        _validate_triple(sampler.graph, index, trip)
                    batch.append(trip)
                yield batch


def epoch_batch_count(sampler: TripleSampler, batch_size: int,
                      samples_per_type: int | None = None) -> int:
    """Number of batches one epoch will emit (used for the LR schedule)."""
    total = 0
    index = sampler.index
    for pid in range(index.n_paths):
        for tid in index.path_triples[pid]:
            if not sampler.feasible(tid):
                continue
            spt = samples_per_type or sampler.default_samples_per_type(tid)
            total += math.ceil(spt / batch_size)
    return total
